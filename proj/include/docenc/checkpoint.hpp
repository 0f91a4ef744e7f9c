#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "docenc/tensor.hpp"

namespace docenc {

// Versioned named-tensor container: header (magic, version, JSON snapshot,
// tensor directory with name/shape/offset) followed by raw little-endian
// 64-bit float payloads. The persistence unit for pretrain -> finetune
// transfer and for exact training resume.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::string config_json;  // config snapshot
  std::map<std::string, std::string> meta;  // step counters, rng state, ...
  std::vector<std::pair<std::string, Tensor>> tensors;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Snapshot all parameters; optimizer moments are added as opt.m.* / opt.v.*
  // entries when an optimizer is given.
  static Checkpoint capture(const ParamStore& params, const std::string& config_json,
                            const Adam* opt = nullptr);

  bool has(const std::string& name) const;
  Tensor get(const std::string& name) const;

  // Copy values into same-named store tensors. With `names` empty, all store
  // parameters must be present in the checkpoint. Shape mismatches and
  // missing tensors raise IncompatError listing the offenders.
  void restore_into(ParamStore& store, std::span<const std::string> names = {}) const;
  void restore_optimizer(Adam& opt) const;

  uint64_t meta_u64(const std::string& key, uint64_t fallback = 0) const;
};

}  // namespace docenc
