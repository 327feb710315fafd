#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rc/dataset.hpp"

namespace rc {

/// Procedural stand-in for ciFAIR when the real files are not available.
///
/// Each class is a shape drawn in a class-typical hue over a random gradient
/// background. Every image gets a latent nuisance level u in [0, 1] that
/// scales pose jitter, hue drift, pixel noise and the opacity of a distractor
/// shape from another class, so samples span a range of difficulty. Output
/// files are byte-compatible with the CIFAR binary layout.
struct SyntheticSpec {
  Variant variant = Variant::c10;
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 200;
  std::uint64_t seed = 2024;
};

/// Render `count` records of `label` (CIFAR record layout, label byte(s) first).
std::vector<std::uint8_t> render_records(const SyntheticSpec& spec, int label, std::size_t count,
                                         std::uint64_t stream_seed);

/// Write data_batch_{1..5}.bin + test_batch.bin (c10) or train.bin + test.bin
/// (c100) into `dir`. Classes are interleaved in the files.
void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec);

}  // namespace rc
