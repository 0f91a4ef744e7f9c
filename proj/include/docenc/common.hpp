#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace docenc {

#ifdef DOCENC_REAL32
using real = float;
#else
using real = double;
#endif

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or contract violations inside the tensor/encoder stack.
struct DimError : Error {
  explicit DimError(const std::string& msg) : Error(msg) {}
};

// Bad configuration: unknown keys, invalid ranges, objective/arch pairing.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed input data (corpus records, task files).
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Checkpoint/architecture mismatches.
struct IncompatError : Error {
  explicit IncompatError(const std::string& msg) : Error(msg) {}
};

// Deterministic RNG wrapper. Streams are reproducible across runs and the
// engine state can be captured as a string for checkpoint resume.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  // Uniform in [0, 1).
  real uniform() { return static_cast<real>((eng_() >> 11) * 0x1.0p-53); }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  size_t index(size_t n) { return static_cast<size_t>(uniform() * static_cast<real>(n)) % n; }

  bool bernoulli(real p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  uint64_t raw() { return eng_(); }

  std::string state() const;
  void restore(const std::string& s);

 private:
  std::mt19937_64 eng_;
};

}  // namespace docenc
