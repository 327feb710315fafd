#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rc/dataset.hpp"
#include "rc/difficulty.hpp"
#include "rc/metrics.hpp"
#include "rc/nn.hpp"
#include "rc/replay.hpp"

namespace rc {

struct EpisodeConfig {
  std::size_t divisions = 1;
  std::optional<RehearsalOrder> order;  // nullopt = unsorted
  Strategy selection = Strategy::random;
  Metric metric = Metric::confidence;  // difficulty metric used for selection
  std::size_t max_epochs = 250;
  std::size_t patience = 5;
  bool early_stopping = true;  // only active when the task has validation samples
  std::uint64_t seed = 0;
  SgdConfig sgd;
  std::size_t buffer_capacity = 1200;

  void validate() const;
  /// True if this configuration consults the teacher / feature extractor.
  bool needs_difficulty() const { return order.has_value() || selection != Strategy::random; }
};

/// Stops once no new best validation loss has been seen for `patience`
/// consecutive epochs.
class SaturationMonitor {
 public:
  explicit SaturationMonitor(std::size_t patience);
  /// Record one epoch's validation loss; returns true if training should stop.
  bool observe(double val_loss);
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based
  std::size_t epochs() const { return epochs_; }

 private:
  std::size_t patience_;
  double best_ = 0;
  std::size_t best_epoch_ = 0, epochs_ = 0;
};

enum class Access { train, validate, evaluate, score };
std::string to_string(Access a);

/// Called with every batch of sample ids the trainer touches.
using AccessObserver = std::function<void(std::size_t task, Access, std::span<const SampleId>)>;

struct EpochEvent {
  std::size_t task = 0;   // 0-based
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  std::optional<double> val_loss;
  std::string stop_reason;  // empty except on a task's last epoch
};

/// Teacher network and feature extractor used to score difficulty. Either
/// may be null when the configuration does not need it.
struct DifficultyContext {
  const SmallCnn* teacher = nullptr;
  const FeatureExtractor* extractor = nullptr;

  std::vector<DifficultyScore> score(const Dataset& data, std::span<const SampleId> ids, Metric metric) const;
};

struct EpisodeHooks {
  AccessObserver on_access;
  std::function<void(const EpochEvent&)> on_epoch;
  std::filesystem::path checkpoint_dir;  // empty = no per-task checkpoints
};

struct EpisodeState {
  SmallCnn model;
  ReplayBuffer buffer;
  AccuracyMatrix accuracy;
  std::vector<std::size_t> epochs_used;
  std::vector<EpochEvent> events;
  std::string buffer_dump;  // accumulated write_buffer_dump text, one block per task
};

EpisodeState start_episode(const Benchmark& bench, const EpisodeConfig& cfg);

/// Train on task t over the interleave schedule, record the accuracy row,
/// then rebuild the replay buffer from the task's training data.
void train_task(EpisodeState& state, const Benchmark& bench, const TaskStream& stream, std::size_t t,
                const EpisodeConfig& cfg, const DifficultyContext& ctx, const EpisodeHooks& hooks = {});

struct EpisodeResult {
  AccuracyMatrix accuracy;
  RunMetrics metrics;
  std::vector<std::size_t> epochs_used;
  std::vector<EpochEvent> events;
  std::string buffer_dump;
  std::uint64_t model_digest = 0;
};

EpisodeResult run_episode(const Benchmark& bench, const TaskStream& stream, const EpisodeConfig& cfg,
                          const DifficultyContext& ctx, const EpisodeHooks& hooks = {});

struct JointResult {
  SmallCnn model;
  double test_accuracy = 0;   // percent, all classes
  double train_accuracy = 0;  // percent, all classes
  std::size_t epochs = 0;
  std::vector<EpochEvent> events;
};

/// Train on every task's data at once (single task, d = 1, no replay) and
/// report accuracy over all classes. Shared by run_offline and pretrain_teacher.
JointResult train_joint(const Benchmark& bench, const TaskStream& stream, const EpisodeConfig& cfg,
                        const EpisodeHooks& hooks = {});

/// Offline upper bound: test accuracy of jointly trained model.
double run_offline(const Benchmark& bench, const TaskStream& stream, const EpisodeConfig& cfg);

struct TeacherOptions {
  double min_train_accuracy = 0;     // below this a warning is emitted
  std::filesystem::path checkpoint;  // empty = do not save
};

/// Teacher trained on the full dataset (outside the continual constraints).
/// Returns the model; warnings (e.g. low train accuracy) go to `warnings`.
SmallCnn pretrain_teacher(const Benchmark& bench, const TaskStream& stream, const EpisodeConfig& cfg,
                          const TeacherOptions& opts, std::vector<std::string>* warnings = nullptr);

/// Percent accuracy of argmax over all logits.
double accuracy_on(const SmallCnn& model, const Dataset& data, std::span<const SampleId> ids);
double mean_loss_on(const SmallCnn& model, const Dataset& data, std::span<const SampleId> ids);

/// Event log: "# key value" header lines, then "task epoch train_loss val_loss stop_reason".
void write_event_log(std::ostream& out, const EpisodeConfig& cfg, std::span<const EpochEvent> events);
/// Accuracy matrix as "t i correct total" lines (exact integers).
void write_accuracy(std::ostream& out, const AccuracyMatrix& a);

}  // namespace rc
