#include "esmhc/cli/dispatch.hpp"

int main(int argc, char** argv) { return esmhc::cli::dispatch(argc, argv); }
