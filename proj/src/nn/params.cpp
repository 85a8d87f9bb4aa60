#include "esmhc/nn/params.hpp"

#include <algorithm>
#include <unordered_map>

#include "esmhc/errors.hpp"
#include "esmhc/io/binary.hpp"

namespace esmhc::nn {

namespace {
constexpr char kMagic[] = "ESMHC001";
}

Tensor ParameterSet::add(std::string name, Tensor tensor) {
  if (find(name)) throw std::logic_error("duplicate parameter " + name);
  auto values = tensor.values();
  Tensor leaf = Tensor::from_values(tensor.shape(), std::vector<float>(values.begin(), values.end()), true);
  entries_.emplace_back(std::move(name), std::move(leaf));
  return entries_.back().second;
}

const Tensor* ParameterSet::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Entry& e) { return e.first == name; });
  return it == entries_.end() ? nullptr : &it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic(kMagic);
  for (const auto& [name, t] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) w.f32(v);
  }
  w.write_file(path);
}

std::vector<ParameterSet::Entry> read_checkpoint(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  r.expect_magic(kMagic);
  std::vector<ParameterSet::Entry> out;
  while (!r.at_end()) {
    const auto name_len = r.u32();
    if (name_len > r.remaining()) r.fail("parameter name overruns file");
    std::string name = r.raw(name_len);
    const auto rank = r.u32();
    if (rank > 8) r.fail("parameter " + name + " has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d != 0 && count > r.remaining() / d) r.fail("dimension overflow in " + name);
      count *= d;
    }
    if (count > r.remaining() / 4) r.fail("parameter " + name + " overruns file");
    std::vector<float> values(count);
    for (auto& v : values) v = r.f32();
    out.emplace_back(std::move(name), Tensor::from_values(std::move(shape), std::move(values)));
  }
  return out;
}

void load_checkpoint(ParameterSet& params, const std::filesystem::path& path) {
  auto entries = read_checkpoint(path);
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : entries) by_name.emplace(name, &t);
  if (by_name.size() != params.size()) {
    throw DataError(path.string() + ": checkpoint has " + std::to_string(by_name.size()) +
                    " parameters, model expects " + std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError(path.string() + ": missing parameter " + name);
    if (it->second->shape() != t.shape()) {
      throw DataError(path.string() + ": parameter " + name + " has shape " +
                      shape_str(it->second->shape()) + ", model expects " + shape_str(t.shape()));
    }
    auto src = it->second->values();
    std::copy(src.begin(), src.end(), t.mutable_values().begin());
  }
}

}  // namespace esmhc::nn
