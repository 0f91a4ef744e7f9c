#include "docenc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace docenc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

namespace {

constexpr char kMagic[4] = {'D', 'E', 'N', 'C'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

void put_str(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_str(std::istream& is) {
  const auto n = take<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw DataError("checkpoint: truncated string");
  return s;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(kMagic, 4);
  put<uint32_t>(f, kVersion);
  nlohmann::json meta_j(meta);
  put_str(f, config_json);
  put_str(f, meta_j.dump());
  put<uint32_t>(f, static_cast<uint32_t>(tensors.size()));
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    put_str(f, name);
    put<uint32_t>(f, static_cast<uint32_t>(t.rank()));
    for (size_t d : t.shape()) put<uint64_t>(f, d);
    put<uint64_t>(f, offset);
    offset += t.numel() * sizeof(double);
  }
  for (const auto& [name, t] : tensors) {
    for (real v : t.value()) put<double>(f, static_cast<double>(v));
  }
  if (!f) throw DataError("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IncompatError("not a checkpoint file: " + path);
  const auto version = take<uint32_t>(f);
  if (version != kVersion)
    throw IncompatError("checkpoint version " + std::to_string(version) +
                        " not supported (expected " + std::to_string(kVersion) + ")");
  Checkpoint cp;
  cp.config_json = take_str(f);
  const std::string meta_text = take_str(f);
  auto meta_j = nlohmann::json::parse(meta_text, nullptr, false);
  if (meta_j.is_discarded()) throw DataError("checkpoint: bad meta block");
  for (auto it = meta_j.begin(); it != meta_j.end(); ++it)
    cp.meta[it.key()] = it.value().get<std::string>();

  const auto count = take<uint32_t>(f);
  struct Entry {
    std::string name;
    Shape shape;
    uint64_t offset;
  };
  std::vector<Entry> dir;
  dir.reserve(count);
  uint64_t payload = 0;
  for (uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = take_str(f);
    const auto rank = take<uint32_t>(f);
    for (uint32_t d = 0; d < rank; ++d) e.shape.push_back(take<uint64_t>(f));
    e.offset = take<uint64_t>(f);
    if (e.offset != payload)
      throw DataError("checkpoint: inconsistent tensor directory at " + e.name);
    payload += shape_numel(e.shape) * sizeof(double);
    dir.push_back(std::move(e));
  }
  for (const auto& e : dir) {
    const size_t n = shape_numel(e.shape);
    std::vector<real> vals(n);
    for (size_t i = 0; i < n; ++i) vals[i] = static_cast<real>(take<double>(f));
    cp.tensors.emplace_back(e.name, Tensor::from(e.shape, std::move(vals)));
  }
  return cp;
}

Checkpoint Checkpoint::capture(const ParamStore& params, const std::string& config_json,
                               const Adam* opt) {
  Checkpoint cp;
  cp.config_json = config_json;
  for (const auto& [name, t] : params.items()) {
    // Deep copy: the checkpoint must not alias live parameters.
    cp.tensors.emplace_back(name, Tensor::from(t.shape(), t.value()));
  }
  if (opt) {
    for (size_t i = 0; i < opt->params().size(); ++i) {
      const auto& [name, t] = opt->params()[i];
      cp.tensors.emplace_back("opt.m." + name, Tensor::from(t.shape(), opt->moment1(i)));
      cp.tensors.emplace_back("opt.v." + name, Tensor::from(t.shape(), opt->moment2(i)));
    }
    cp.meta["opt_steps"] = std::to_string(opt->steps());
  }
  return cp;
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

Tensor Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw IncompatError("checkpoint has no tensor named " + name);
}

void Checkpoint::restore_into(ParamStore& store, std::span<const std::string> names) const {
  std::vector<std::string> wanted(names.begin(), names.end());
  if (wanted.empty())
    for (const auto& [n, t] : store.items()) wanted.push_back(n);

  std::string missing, mismatched;
  for (const auto& name : wanted) {
    if (!has(name)) {
      missing += (missing.empty() ? "" : ", ") + name;
      continue;
    }
    Tensor src = get(name);
    Tensor dst = store.get(name);
    if (src.shape() != dst.shape())
      mismatched += (mismatched.empty() ? "" : ", ") + name + " (checkpoint " +
                    shape_str(src.shape()) + " vs model " + shape_str(dst.shape()) + ")";
  }
  if (!missing.empty() || !mismatched.empty()) {
    std::string msg = "checkpoint incompatible with model:";
    if (!missing.empty()) msg += " missing tensors: " + missing + ";";
    if (!mismatched.empty()) msg += " shape mismatches: " + mismatched;
    throw IncompatError(msg);
  }
  for (const auto& name : wanted) {
    Tensor src = get(name);
    Tensor dst = store.get(name);
    dst.value() = src.value();
  }
}

void Checkpoint::restore_optimizer(Adam& opt) const {
  for (size_t i = 0; i < opt.params().size(); ++i) {
    const auto& name = opt.params()[i].first;
    Tensor m = get("opt.m." + name);
    Tensor v = get("opt.v." + name);
    if (m.numel() != opt.moment1(i).size() || v.numel() != opt.moment2(i).size())
      throw IncompatError("optimizer state size mismatch for " + name);
    opt.moment1(i) = m.value();
    opt.moment2(i) = v.value();
  }
  opt.set_steps(meta_u64("opt_steps"));
}

uint64_t Checkpoint::meta_u64(const std::string& key, uint64_t fallback) const {
  auto it = meta.find(key);
  if (it == meta.end()) return fallback;
  return std::stoull(it->second);
}

}  // namespace docenc
