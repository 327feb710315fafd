#include "rc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>

namespace rc {

std::size_t record_length(Variant v) { return v == Variant::c10 ? 1 + kImageBytes : 2 + kImageBytes; }

std::size_t class_count(Variant v) { return v == Variant::c10 ? 10 : 100; }

Variant parse_variant(const std::string& s) {
  if (s == "c10") return Variant::c10;
  if (s == "c100") return Variant::c100;
  throw ConfigError("unknown dataset variant '" + s + "' (expected c10 or c100)");
}

std::string to_string(Variant v) { return v == Variant::c10 ? "c10" : "c100"; }

std::vector<Sample> parse_cifair(std::span<const std::uint8_t> bytes, Variant variant, SampleId first_id) {
  const std::size_t rec = record_length(variant);
  const std::size_t label_offset = variant == Variant::c10 ? 0 : 1;
  const std::size_t pixel_offset = label_offset + 1;
  const std::size_t classes = class_count(variant);
  if (bytes.size() % rec != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % rec;
    throw FormatError("truncated " + to_string(variant) + " record at byte offset " + std::to_string(offset) + " (" +
                      std::to_string(bytes.size() % rec) + " of " + std::to_string(rec) + " bytes)");
  }
  std::vector<Sample> out(bytes.size() / rec);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t base = i * rec;
    const std::uint8_t label = bytes[base + label_offset];
    if (label >= classes) {
      throw FormatError("label byte " + std::to_string(label) + " out of range at byte offset " +
                        std::to_string(base + label_offset));
    }
    Sample& s = out[i];
    s.id = first_id + static_cast<SampleId>(i);
    s.label = label;
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(base + pixel_offset), kImageBytes, s.pixels.begin());
  }
  return out;
}

std::vector<Sample> load_cifair(const std::filesystem::path& path, Variant variant, SampleId first_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_cifair(bytes, variant, first_id);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// --------------------------------------------------------------- Dataset

Dataset::Dataset(std::vector<Sample> samples, std::size_t num_classes)
    : samples_(std::move(samples)), num_classes_(num_classes) {
  index_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (samples_[i].label < 0 || static_cast<std::size_t>(samples_[i].label) >= num_classes_) {
      throw InvalidInput("sample " + std::to_string(samples_[i].id) + " has label " +
                         std::to_string(samples_[i].label) + " outside " + std::to_string(num_classes_) + " classes");
    }
    if (!index_.emplace(samples_[i].id, i).second) {
      throw InvalidInput("duplicate sample id " + std::to_string(samples_[i].id));
    }
  }
}

const Sample& Dataset::at(SampleId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InvalidInput("unknown sample id " + std::to_string(id));
  return samples_[it->second];
}

void Dataset::assign_tasks(std::span<const int> task_of_class) {
  if (task_of_class.size() != num_classes_) throw ConsistencyError("task map does not cover every class");
  for (auto& s : samples_) s.task = task_of_class[static_cast<std::size_t>(s.label)];
}

Tensor make_batch(const Dataset& data, std::span<const SampleId> ids) {
  Tensor batch({ids.size(), kImageChannels, kImageSide, kImageSide});
  real* dst = batch.ptr();
  for (SampleId id : ids) {
    for (std::uint8_t v : data.at(id).pixels) *dst++ = normalize_pixel(v);
  }
  return batch;
}

std::vector<int> batch_labels(const Dataset& data, std::span<const SampleId> ids) {
  std::vector<int> labels;
  labels.reserve(ids.size());
  for (SampleId id : ids) labels.push_back(data.at(id).label);
  return labels;
}

// ----------------------------------------------------------------- split

SplitIds split(std::span<const Sample> samples, SplitRatios ratios, std::uint64_t seed) {
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  const double total = r[0] + r[1] + r[2];
  for (double x : r) {
    if (!(x >= 0) || !std::isfinite(x)) throw ConfigError("split ratios must be finite and non-negative");
  }
  if (!(total > 0)) throw ConfigError("split ratios must not all be zero");
  const std::size_t parts = static_cast<std::size_t>(std::count_if(r.begin(), r.end(), [](double x) { return x > 0; }));

  std::map<int, std::vector<SampleId>> by_class;
  for (const auto& s : samples) by_class[s.label].push_back(s.id);

  SplitIds out;
  for (auto& [label, ids] : by_class) {
    const std::size_t n = ids.size();
    if (n < parts) {
      throw ConfigError("class " + std::to_string(label) + " has " + std::to_string(n) + " samples, fewer than the " +
                        std::to_string(parts) + " split parts");
    }
    std::array<std::size_t, 3> count{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double exact = static_cast<double>(n) * r[k] / total;
      count[k] = static_cast<std::size_t>(std::floor(exact));
      frac[k] = exact - std::floor(exact);
      assigned += count[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < n; i = (i + 1) % 3) {
      if (r[order[i]] > 0) {
        ++count[order[i]];
        ++assigned;
      }
    }

    std::sort(ids.begin(), ids.end());
    std::mt19937_64 gen(derive_seed(seed, seed_tag::split, static_cast<std::uint64_t>(label)));
    std::shuffle(ids.begin(), ids.end(), gen);
    auto it = ids.begin();
    std::array<std::vector<SampleId>*, 3> dst{&out.train, &out.val, &out.test};
    for (std::size_t k = 0; k < 3; ++k) {
      dst[k]->insert(dst[k]->end(), it, it + static_cast<std::ptrdiff_t>(count[k]));
      it += static_cast<std::ptrdiff_t>(count[k]);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<SampleId> cap_per_class(const Dataset& data, std::span<const SampleId> ids, std::size_t n_per_class) {
  std::vector<std::size_t> taken(data.num_classes(), 0);
  std::vector<SampleId> out;
  for (SampleId id : ids) {
    auto& t = taken[static_cast<std::size_t>(data.label(id))];
    if (t < n_per_class) {
      ++t;
      out.push_back(id);
    }
  }
  return out;
}

// ---------------------------------------------------------------- stream

std::vector<int> TaskStream::seen_classes(std::size_t t) const {
  std::vector<int> out;
  for (std::size_t i = 0; i <= t && i < tasks.size(); ++i) out.insert(out.end(), tasks[i].begin(), tasks[i].end());
  return out;
}

namespace {

std::vector<SampleId> filter_by_task(const Dataset& data, std::span<const SampleId> ids,
                                     const std::vector<int>& task_of_class, int task) {
  std::vector<SampleId> out;
  for (SampleId id : ids) {
    if (task_of_class[static_cast<std::size_t>(data.label(id))] == task) out.push_back(id);
  }
  return out;
}

}  // namespace

TaskStream make_stream(const Dataset& data, const SplitIds& splits, std::size_t classes_per_task,
                       std::uint64_t class_order_seed) {
  const std::size_t n = data.num_classes();
  if (classes_per_task == 0 || n % classes_per_task != 0) {
    throw ConfigError(std::to_string(n) + " classes cannot be divided into tasks of " +
                      std::to_string(classes_per_task));
  }
  TaskStream s;
  s.class_order.resize(n);
  std::iota(s.class_order.begin(), s.class_order.end(), 0);
  std::mt19937_64 gen(derive_seed(class_order_seed, seed_tag::class_order));
  std::shuffle(s.class_order.begin(), s.class_order.end(), gen);

  s.task_of_class.assign(n, -1);
  for (std::size_t t = 0; t < n / classes_per_task; ++t) {
    std::vector<int> classes(s.class_order.begin() + static_cast<std::ptrdiff_t>(t * classes_per_task),
                             s.class_order.begin() + static_cast<std::ptrdiff_t>((t + 1) * classes_per_task));
    for (int c : classes) s.task_of_class[static_cast<std::size_t>(c)] = static_cast<int>(t);
    s.tasks.push_back(std::move(classes));
  }
  for (std::size_t t = 0; t < s.tasks.size(); ++t) {
    const int ti = static_cast<int>(t);
    s.per_task.push_back({filter_by_task(data, splits.train, s.task_of_class, ti),
                          filter_by_task(data, splits.val, s.task_of_class, ti),
                          filter_by_task(data, splits.test, s.task_of_class, ti)});
  }
  return s;
}

TaskStream single_task_stream(const TaskStream& stream) {
  TaskStream s;
  s.class_order = stream.class_order;
  s.tasks.push_back(stream.class_order);
  s.task_of_class.assign(stream.task_of_class.size(), 0);
  SplitIds all;
  for (const auto& p : stream.per_task) {
    all.train.insert(all.train.end(), p.train.begin(), p.train.end());
    all.val.insert(all.val.end(), p.val.begin(), p.val.end());
    all.test.insert(all.test.end(), p.test.begin(), p.test.end());
  }
  std::sort(all.train.begin(), all.train.end());
  std::sort(all.val.begin(), all.val.end());
  std::sort(all.test.begin(), all.test.end());
  s.per_task.push_back(std::move(all));
  return s;
}

// --------------------------------------------------------------- presets

Preset parse_preset(const std::string& s) {
  if (s == "c10" || s == "cifair10" || s == "ciFAIR-10") return Preset::c10;
  if (s == "c100" || s == "cifair100" || s == "ciFAIR-100") return Preset::c100;
  throw ConfigError("unknown dataset preset '" + s + "' (expected c10 or c100)");
}

std::string to_string(Preset p) { return p == Preset::c10 ? "c10" : "c100"; }

PresetInfo preset_info(Preset p) {
  if (p == Preset::c10) return {Variant::c10, 2, 250, false};
  return {Variant::c100, 5, 250, true};
}

Benchmark load_benchmark(Preset preset, const std::filesystem::path& dir, std::optional<std::size_t> subset_per_class,
                         std::uint64_t split_seed) {
  const PresetInfo info = preset_info(preset);
  Benchmark b;
  b.preset = preset;
  std::vector<Sample> all;
  auto append = [&](const std::filesystem::path& file) {
    auto part = load_cifair(file, info.variant, static_cast<SampleId>(all.size()));
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  };

  if (preset == Preset::c10) {
    for (int i = 1; i <= 5; ++i) append(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    const auto n_train = static_cast<SampleId>(all.size());
    append(dir / "test_batch.bin");
    for (const auto& s : all) (s.id < n_train ? b.splits.train : b.splits.test).push_back(s.id);
    b.data = Dataset(std::move(all), class_count(info.variant));
  } else {
    append(dir / "train.bin");
    append(dir / "test.bin");
    b.splits = split(all, SplitRatios{9, 1, 2}, split_seed);
    b.data = Dataset(std::move(all), class_count(info.variant));
  }
  if (subset_per_class) b.splits.train = cap_per_class(b.data, b.splits.train, *subset_per_class);
  return b;
}

void write_manifest(const Benchmark& bench, const TaskStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest: " + path.string());
  std::unordered_map<SampleId, const char*> split_of;
  for (SampleId id : bench.splits.train) split_of[id] = "train";
  for (SampleId id : bench.splits.val) split_of[id] = "val";
  for (SampleId id : bench.splits.test) split_of[id] = "test";
  for (const auto& s : bench.data.samples()) {
    auto it = split_of.find(s.id);
    out << s.id << ' ' << s.label << ' ' << (it == split_of.end() ? "unused" : it->second) << ' '
        << stream.task_of_class[static_cast<std::size_t>(s.label)] << '\n';
  }
}

}  // namespace rc
