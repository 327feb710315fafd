#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "rc/dataset.hpp"
#include "rc/synthetic.hpp"

namespace rc::testing {

/// In-memory benchmark of procedural images: `classes` classes, ids assigned
/// train first, then val, then test.
inline Benchmark toy_benchmark(std::size_t classes, std::size_t train_pc, std::size_t test_pc,
                               std::size_t val_pc = 0, std::uint64_t seed = 7) {
  SyntheticSpec spec;
  spec.seed = seed;
  std::vector<Sample> samples;
  SplitIds splits;
  SampleId next = 0;
  auto add = [&](std::size_t count, std::uint64_t stream, std::vector<SampleId>& dst) {
    for (std::size_t c = 0; c < classes; ++c) {
      const auto bytes = render_records(spec, static_cast<int>(c), count, stream * 1000 + c);
      for (auto& s : parse_cifair(bytes, Variant::c10, next)) {
        dst.push_back(s.id);
        samples.push_back(s);
      }
      next += static_cast<SampleId>(count);
    }
  };
  add(train_pc, 1, splits.train);
  add(val_pc, 2, splits.val);
  add(test_pc, 3, splits.test);
  std::sort(splits.train.begin(), splits.train.end());
  std::sort(splits.val.begin(), splits.val.end());
  std::sort(splits.test.begin(), splits.test.end());
  Benchmark b;
  b.preset = Preset::c10;
  b.data = Dataset(std::move(samples), classes);
  b.splits = std::move(splits);
  return b;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rc_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double rel_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-10) return std::abs(a - b) < 1e-10 ? 0.0 : 1.0;
  return std::abs(a - b) / scale;
}

}  // namespace rc::testing
