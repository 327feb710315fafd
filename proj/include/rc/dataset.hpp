#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rc/tensor.hpp"

namespace rc {

inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kImageBytes = kImageChannels * kImageSide * kImageSide;

enum class Variant { c10, c100 };

std::size_t record_length(Variant v);
std::size_t class_count(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

/// One labelled image. Pixels are channel-major bytes as stored on disk.
struct Sample {
  SampleId id = 0;
  std::array<std::uint8_t, kImageBytes> pixels{};
  int label = 0;
  int task = -1;  // assigned once a task stream exists
};

/// Byte -> [0, 1] real, plain division by 255.
inline real normalize_pixel(std::uint8_t v) { return static_cast<real>(v) / real{255}; }

/// Parse CIFAR / ciFAIR binary records. Ids are first_id, first_id + 1, ...
/// For c100 the coarse label byte is read and discarded.
std::vector<Sample> parse_cifair(std::span<const std::uint8_t> bytes, Variant variant, SampleId first_id = 0);
std::vector<Sample> load_cifair(const std::filesystem::path& path, Variant variant, SampleId first_id = 0);

/// Immutable, indexed sample collection.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Sample> samples, std::size_t num_classes);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return samples_.size(); }
  std::span<const Sample> samples() const { return samples_; }
  const Sample& at(SampleId id) const;
  bool contains(SampleId id) const { return index_.count(id) > 0; }
  int label(SampleId id) const { return at(id).label; }

  /// Stamp task tags from a class -> task map.
  void assign_tasks(std::span<const int> task_of_class);

 private:
  std::vector<Sample> samples_;
  std::size_t num_classes_ = 0;
  std::unordered_map<SampleId, std::size_t> index_;
};

/// Gather samples into a normalised [B, 3, 32, 32] batch.
Tensor make_batch(const Dataset& data, std::span<const SampleId> ids);
std::vector<int> batch_labels(const Dataset& data, std::span<const SampleId> ids);

struct SplitIds {
  std::vector<SampleId> train, val, test;
};

struct SplitRatios {
  double train = 9, val = 1, test = 2;
};

/// Stratified per-class split. Counts per class follow the ratios with
/// largest-remainder rounding (ties go to the earlier part); membership is a
/// seeded shuffle. Output lists are sorted by id.
SplitIds split(std::span<const Sample> samples, SplitRatios ratios, std::uint64_t seed);

/// Keep at most `n_per_class` ids of each class, preserving the input order.
std::vector<SampleId> cap_per_class(const Dataset& data, std::span<const SampleId> ids, std::size_t n_per_class);

struct TaskStream {
  std::vector<int> class_order;            // permutation of all classes
  std::vector<std::vector<int>> tasks;     // disjoint class sets, in presentation order
  std::vector<SplitIds> per_task;          // ids restricted to each task's classes
  std::vector<int> task_of_class;          // class -> task index

  std::size_t num_tasks() const { return tasks.size(); }
  /// Classes of tasks 0..t, in presentation order.
  std::vector<int> seen_classes(std::size_t t) const;
};

/// Seeded class permutation cut into consecutive groups of `classes_per_task`.
TaskStream make_stream(const Dataset& data, const SplitIds& splits, std::size_t classes_per_task,
                       std::uint64_t class_order_seed);

/// Collapse a stream into one task holding every class; used by the joint
/// (offline / teacher) training path.
TaskStream single_task_stream(const TaskStream& stream);

enum class Preset { c10, c100 };

Preset parse_preset(const std::string& s);
std::string to_string(Preset p);

struct PresetInfo {
  Variant variant;
  std::size_t classes_per_task;
  std::size_t default_max_epochs;
  bool uses_validation;
};
PresetInfo preset_info(Preset p);

/// A loaded dataset plus its train/val/test partition.
struct Benchmark {
  Preset preset = Preset::c10;
  Dataset data;
  SplitIds splits;
};

/// c10: data_batch_{1..5}.bin for training and test_batch.bin for testing
/// (native split, empty validation). c100: train.bin and test.bin pooled and
/// re-split 9:1:2 per class. `subset_per_class` caps training samples only.
Benchmark load_benchmark(Preset preset, const std::filesystem::path& dir, std::optional<std::size_t> subset_per_class,
                         std::uint64_t split_seed);

/// One line per sample: "id label split task".
void write_manifest(const Benchmark& bench, const TaskStream& stream, const std::filesystem::path& path);

}  // namespace rc
