#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#ifndef RC_REAL
#define RC_REAL double
#endif

namespace rc {

/// Floating point type used for all network computation. Selected per build
/// target (rc_core = double, rc_core_f32 = float).
using real = RC_REAL;

using SampleId = std::int64_t;

/// Short tag for the real type, recorded in logs so that cross-precision
/// comparisons can be recognised.
constexpr std::string_view precision_tag() { return sizeof(real) == 8 ? "f64" : "f32"; }

// Error taxonomy. Every failure mode surfaced by the library maps onto one of
// these so that callers (runner, bindings) can decide whether to abort a run.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller passed data that violates an operation's precondition.
struct InvalidInput : Error {
  using Error::Error;
};

/// Inconsistent or impossible configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed file contents.
struct FormatError : Error {
  using Error::Error;
};

/// Non-finite values during training; the run must be aborted.
struct NumericError : Error {
  using Error::Error;
};

/// Internal data structures disagree with each other.
struct ConsistencyError : Error {
  using Error::Error;
};

/// A metric is undefined for the given inputs.
struct MetricError : Error {
  using Error::Error;
};

/// Runs cannot be aggregated together.
struct AggregationError : Error {
  using Error::Error;
};

/// splitmix64 finaliser; used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive a child seed from a parent seed and a sequence of integer tags.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
  std::uint64_t s = mix_seed(base);
  s = mix_seed(s ^ a);
  s = mix_seed(s ^ (b * 0x2545f4914f6cdd1dULL));
  s = mix_seed(s ^ (c * 0x9e3779b97f4a7c15ULL));
  return s;
}

// Tags for derive_seed, one per consumer of randomness.
namespace seed_tag {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t schedule = 2;
inline constexpr std::uint64_t selection = 3;
inline constexpr std::uint64_t split = 4;
inline constexpr std::uint64_t class_order = 5;
}  // namespace seed_tag

}  // namespace rc
