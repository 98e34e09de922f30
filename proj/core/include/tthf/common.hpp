#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tthf {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorCategory : int {
  usage = 1,       // bad flags, malformed config
  validation = 2,  // data that violates a documented invariant
  io = 3,          // filesystem / codec failures
  checkpoint = 4,  // incompatible or unreadable checkpoint
  numeric = 5,     // non-finite values, undefined metrics
};

class Error : public std::runtime_error {
public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }
  int exit_code() const { return static_cast<int>(category_); }

private:
  ErrorCategory category_;
};

class UsageError : public Error {
public:
  explicit UsageError(const std::string& m) : Error(ErrorCategory::usage, m) {}
};
class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& m) : Error(ErrorCategory::validation, m) {}
};
class IoError : public Error {
public:
  explicit IoError(const std::string& m) : Error(ErrorCategory::io, m) {}
};
class CheckpointError : public Error {
public:
  explicit CheckpointError(const std::string& m) : Error(ErrorCategory::checkpoint, m) {}
};
class NumericError : public Error {
public:
  explicit NumericError(const std::string& m) : Error(ErrorCategory::numeric, m) {}
};

/// Deterministic RNG used everywhere a seed is involved. mt19937_64 has a
/// standard-mandated bit stream and the gaussian is a hand-rolled Box-Muller,
/// so sequences do not depend on the stdlib's distribution implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Derive an independent stream, e.g. one per video index.
  Rng fork(std::uint64_t salt) const;

private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a, used for stable token hashing and config fingerprints.
std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace tthf
