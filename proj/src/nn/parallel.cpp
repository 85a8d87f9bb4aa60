#include "esmhc/nn/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace esmhc::nn {

namespace {

std::size_t g_override = 0;

std::size_t env_threads() {
  static const std::size_t value = [] {
    const char* raw = std::getenv("ESMHC_THREADS");
    if (!raw) return std::size_t{1};
    try {
      long v = std::stol(raw);
      return v > 0 ? static_cast<std::size_t>(v) : std::size_t{1};
    } catch (const std::exception&) {
      return std::size_t{1};
    }
  }();
  return value;
}

// Below this many indices per worker the thread start-up dominates.
constexpr std::size_t kMinChunk = 64;

}  // namespace

std::size_t thread_count() { return g_override ? g_override : env_threads(); }

void set_thread_count(std::size_t count) { g_override = count; }

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  std::size_t workers = std::min(thread_count(), std::max<std::size_t>(1, count / kMinChunk));
  if (workers <= 1) {
    if (count) body(0, count);
    return;
  }
  std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace esmhc::nn
