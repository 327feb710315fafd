#include "rc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "rc/checkpoint.hpp"

namespace rc {
namespace {

constexpr std::size_t kEvalChunk = 256;

void notify(const EpisodeHooks& hooks, std::size_t task, Access a, std::span<const SampleId> ids) {
  if (hooks.on_access) hooks.on_access(task, a, ids);
}

struct EpochOutcome {
  double loss = 0;
  std::size_t samples = 0;
};

/// One SGD pass over a schedule, minibatched within each group.
EpochOutcome run_schedule(SmallCnn& model, SgdMomentum& opt, const Dataset& data, const InterleaveSchedule& schedule,
                          std::size_t task, std::size_t epoch, const EpisodeHooks& hooks) {
  EpochOutcome out;
  double total = 0;
  const std::size_t bs = opt.config().batch_size;
  std::size_t batch_index = 0;
  for (const auto& group : schedule.groups) {
    std::span<const SampleId> ids = group.ids;
    for (std::size_t lo = 0; lo < ids.size(); lo += bs, ++batch_index) {
      auto batch_ids = ids.subspan(lo, std::min(bs, ids.size() - lo));
      notify(hooks, task, Access::train, batch_ids);
      const Tensor x = make_batch(data, batch_ids);
      const auto y = batch_labels(data, batch_ids);
      const real loss = model.loss_and_grads(x, y);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at task " + std::to_string(task + 1) + ", epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index) + " (batch size " +
                           std::to_string(batch_ids.size()) + ")");
      }
      sgd_step(model, opt);
      total += static_cast<double>(loss) * static_cast<double>(batch_ids.size());
      out.samples += batch_ids.size();
    }
  }
  out.loss = out.samples ? total / static_cast<double>(out.samples) : 0.0;
  return out;
}

std::vector<int> argmax_predictions(const SmallCnn& model, const Dataset& data, std::span<const SampleId> ids) {
  std::vector<int> pred;
  pred.reserve(ids.size());
  for (std::size_t lo = 0; lo < ids.size(); lo += kEvalChunk) {
    auto chunk = ids.subspan(lo, std::min(kEvalChunk, ids.size() - lo));
    const Tensor logits = model.forward(make_batch(data, chunk));
    const std::size_t K = logits.dim(1);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const real* row = logits.ptr() + b * K;
      pred.push_back(static_cast<int>(std::max_element(row, row + K) - row));
    }
  }
  return pred;
}

std::size_t count_correct(const SmallCnn& model, const Dataset& data, std::span<const SampleId> ids) {
  const auto pred = argmax_predictions(model, data, ids);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) correct += pred[i] == data.label(ids[i]);
  return correct;
}

/// Epoch loop shared by continual tasks and joint training.
void fit(SmallCnn& model, const Dataset& data, std::span<const SampleId> task_ids,
         const std::vector<SampleId>& replay_ids, bool replay_sorted, std::span<const SampleId> val_ids,
         std::size_t task, const EpisodeConfig& cfg, const EpisodeHooks& hooks, std::vector<EpochEvent>& events,
         std::size_t& epochs_used) {
  SgdMomentum opt(cfg.sgd);
  const bool use_val = cfg.early_stopping && !val_ids.empty();
  SaturationMonitor monitor(cfg.patience);
  std::optional<InterleaveSchedule> fixed;
  if (replay_sorted) {
    fixed = build_schedule(task_ids, replay_ids, cfg.divisions, derive_seed(cfg.seed, seed_tag::schedule, task), true);
  }
  epochs_used = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const InterleaveSchedule schedule =
        fixed ? *fixed
              : build_schedule(task_ids, replay_ids, cfg.divisions,
                               derive_seed(cfg.seed, seed_tag::schedule, task, epoch), false);
    const EpochOutcome outcome = run_schedule(model, opt, data, schedule, task, epoch, hooks);
    EpochEvent ev{task, epoch, outcome.loss, std::nullopt, ""};
    bool stop = false;
    if (use_val) {
      notify(hooks, task, Access::validate, val_ids);
      ev.val_loss = mean_loss_on(model, data, val_ids);
      if (!std::isfinite(*ev.val_loss)) {
        throw NumericError("non-finite validation loss at task " + std::to_string(task + 1) + ", epoch " +
                           std::to_string(epoch));
      }
      stop = monitor.observe(*ev.val_loss);
      if (stop) ev.stop_reason = "saturated";
    }
    if (!stop && epoch == cfg.max_epochs) ev.stop_reason = "max_epochs";
    epochs_used = epoch;
    events.push_back(ev);
    if (hooks.on_epoch) hooks.on_epoch(ev);
    if (stop) break;
  }
}

std::vector<BufferEntry> entries_of(const Dataset& data, std::span<const SampleId> ids) {
  std::vector<BufferEntry> out;
  out.reserve(ids.size());
  for (SampleId id : ids) out.push_back({id, data.label(id)});
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void EpisodeConfig::validate() const {
  if (divisions == 0) throw ConfigError("divisions must be at least 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (buffer_capacity == 0) throw ConfigError("buffer capacity must be positive");
  sgd.validate();
}

SaturationMonitor::SaturationMonitor(std::size_t patience) : patience_(patience) {
  if (patience_ == 0) throw ConfigError("patience must be at least 1");
}

bool SaturationMonitor::observe(double val_loss) {
  ++epochs_;
  if (best_epoch_ == 0 || val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epochs_;
  }
  return epochs_ - best_epoch_ >= patience_;
}

std::string to_string(Access a) {
  switch (a) {
    case Access::train: return "train";
    case Access::validate: return "validate";
    case Access::evaluate: return "evaluate";
    case Access::score: return "score";
  }
  return "?";
}

std::vector<DifficultyScore> DifficultyContext::score(const Dataset& data, std::span<const SampleId> ids,
                                                      Metric metric) const {
  if (metric == Metric::confidence) {
    if (!teacher) throw ConfigError("confidence difficulty requested without a teacher network");
    return confidence_scores(*teacher, data, ids);
  }
  if (!extractor) throw ConfigError("distance difficulty requested without a feature extractor");
  if (ids.size() < 2) {
    // A single sample is trivially the easiest of its set.
    std::vector<DifficultyScore> out;
    for (SampleId id : ids) out.push_back({id, Metric::distance, 0.0, 0});
    return out;
  }
  return distance_scores(*extractor, data, ids);
}

double accuracy_on(const SmallCnn& model, const Dataset& data, std::span<const SampleId> ids) {
  if (ids.empty()) return 0.0;
  return 100.0 * static_cast<double>(count_correct(model, data, ids)) / static_cast<double>(ids.size());
}

double mean_loss_on(const SmallCnn& model, const Dataset& data, std::span<const SampleId> ids) {
  double total = 0;
  for (std::size_t lo = 0; lo < ids.size(); lo += kEvalChunk) {
    auto chunk = ids.subspan(lo, std::min(kEvalChunk, ids.size() - lo));
    const auto ce = softmax_cross_entropy(model.forward(make_batch(data, chunk)), batch_labels(data, chunk));
    total += static_cast<double>(ce.loss) * static_cast<double>(chunk.size());
  }
  return ids.empty() ? 0.0 : total / static_cast<double>(ids.size());
}

EpisodeState start_episode(const Benchmark& bench, const EpisodeConfig& cfg) {
  cfg.validate();
  CnnConfig net;
  net.num_classes = bench.data.num_classes();
  return EpisodeState{SmallCnn(net, cfg.seed), ReplayBuffer(cfg.buffer_capacity, cfg.selection), {}, {}, {}, {}};
}

void train_task(EpisodeState& state, const Benchmark& bench, const TaskStream& stream, std::size_t t,
                const EpisodeConfig& cfg, const DifficultyContext& ctx, const EpisodeHooks& hooks) {
  if (t != state.accuracy.tasks()) {
    throw ConsistencyError("task " + std::to_string(t) + " trained out of order (expected " +
                           std::to_string(state.accuracy.tasks()) + ")");
  }
  const Dataset& data = bench.data;
  const SplitIds& split = stream.per_task.at(t);

  // Rehearsal sequence for this task.
  std::vector<SampleId> replay_ids = state.buffer.ids();
  const bool sorted = cfg.order.has_value() && !replay_ids.empty();
  if (sorted) {
    notify(hooks, t, Access::score, replay_ids);
    const auto scores = ctx.score(data, replay_ids, cfg.order->metric);
    replay_ids.clear();
    for (const auto& e : order_rehearsal(state.buffer.entries(), scores, *cfg.order)) replay_ids.push_back(e.id);
  }

  std::size_t epochs = 0;
  fit(state.model, data, split.train, replay_ids, sorted, split.val, t, cfg, hooks, state.events, epochs);
  state.epochs_used.push_back(epochs);

  // Evaluate on the test instances of every task seen so far.
  std::vector<std::size_t> correct, total;
  for (std::size_t i = 0; i <= t; ++i) {
    const auto& test = stream.per_task[i].test;
    notify(hooks, t, Access::evaluate, test);
    correct.push_back(count_correct(state.model, data, test));
    total.push_back(test.size());
  }
  state.accuracy.add_row(correct, total);

  // Rebuild the buffer from the finished task.
  const auto finished = entries_of(data, split.train);
  std::vector<DifficultyScore> scores;
  if (cfg.selection != Strategy::random) {
    std::vector<SampleId> candidates(split.train.begin(), split.train.end());
    notify(hooks, t, Access::score, candidates);
    scores = ctx.score(data, candidates, cfg.metric);
    const auto stored = state.buffer.ids();
    if (!stored.empty()) {
      notify(hooks, t, Access::score, stored);
      const auto stored_scores = ctx.score(data, stored, cfg.metric);
      scores.insert(scores.end(), stored_scores.begin(), stored_scores.end());
    }
  }
  state.buffer = update_buffer(state.buffer, finished, stream.tasks.at(t), scores,
                               derive_seed(cfg.seed, seed_tag::selection, t));
  std::ostringstream dump;
  write_buffer_dump(dump, t + 1, state.buffer);
  state.buffer_dump += dump.str();

  if (!hooks.checkpoint_dir.empty()) {
    std::filesystem::create_directories(hooks.checkpoint_dir);
    save_checkpoint(state.model, hooks.checkpoint_dir / ("task_" + std::to_string(t + 1) + ".rcnn"));
  }
}

EpisodeResult run_episode(const Benchmark& bench, const TaskStream& stream, const EpisodeConfig& cfg,
                          const DifficultyContext& ctx, const EpisodeHooks& hooks) {
  auto uses = [&](Metric m) {
    return (cfg.order && cfg.order->metric == m) || (cfg.selection != Strategy::random && cfg.metric == m);
  };
  if (uses(Metric::confidence) && !ctx.teacher) throw ConfigError("confidence difficulty needs a teacher network");
  if (uses(Metric::distance) && !ctx.extractor) throw ConfigError("distance difficulty needs a feature extractor");
  EpisodeState state = start_episode(bench, cfg);
  for (std::size_t t = 0; t < stream.num_tasks(); ++t) train_task(state, bench, stream, t, cfg, ctx, hooks);
  EpisodeResult r;
  r.metrics = RunMetrics::from(state.accuracy);
  r.accuracy = std::move(state.accuracy);
  r.epochs_used = std::move(state.epochs_used);
  r.events = std::move(state.events);
  r.buffer_dump = std::move(state.buffer_dump);
  r.model_digest = checkpoint_digest(state.model);
  return r;
}

JointResult train_joint(const Benchmark& bench, const TaskStream& stream, const EpisodeConfig& cfg,
                        const EpisodeHooks& hooks) {
  EpisodeConfig joint = cfg;
  joint.divisions = 1;
  joint.order.reset();
  joint.validate();
  const TaskStream single = single_task_stream(stream);
  const SplitIds& split = single.per_task.front();
  CnnConfig net;
  net.num_classes = bench.data.num_classes();
  JointResult r{SmallCnn(net, joint.seed), 0, 0, 0, {}};
  fit(r.model, bench.data, split.train, {}, false, split.val, 0, joint, hooks, r.events, r.epochs);
  notify(hooks, 0, Access::evaluate, split.test);
  r.test_accuracy = accuracy_on(r.model, bench.data, split.test);
  r.train_accuracy = accuracy_on(r.model, bench.data, split.train);
  return r;
}

double run_offline(const Benchmark& bench, const TaskStream& stream, const EpisodeConfig& cfg) {
  return train_joint(bench, stream, cfg).test_accuracy;
}

SmallCnn pretrain_teacher(const Benchmark& bench, const TaskStream& stream, const EpisodeConfig& cfg,
                          const TeacherOptions& opts, std::vector<std::string>* warnings) {
  JointResult r = train_joint(bench, stream, cfg);
  if (r.train_accuracy < opts.min_train_accuracy && warnings) {
    warnings->push_back("teacher train accuracy " + format_double(r.train_accuracy) + "% is below the configured " +
                        format_double(opts.min_train_accuracy) + "%");
  }
  if (!opts.checkpoint.empty()) {
    if (opts.checkpoint.has_parent_path()) std::filesystem::create_directories(opts.checkpoint.parent_path());
    save_checkpoint(r.model, opts.checkpoint);
  }
  return std::move(r.model);
}

void write_event_log(std::ostream& out, const EpisodeConfig& cfg, std::span<const EpochEvent> events) {
  out << "# precision " << precision_tag() << '\n'
      << "# seed " << cfg.seed << '\n'
      << "# divisions " << cfg.divisions << '\n'
      << "# order " << to_string(cfg.order) << '\n'
      << "# selection " << to_string(cfg.selection) << '\n'
      << "# metric " << to_string(cfg.metric) << '\n'
      << "# max_epochs " << cfg.max_epochs << '\n'
      << "# patience " << cfg.patience << '\n'
      << "# buffer_capacity " << cfg.buffer_capacity << '\n';
  for (const auto& e : events) {
    out << e.task + 1 << ' ' << e.epoch << ' ' << format_double(e.train_loss) << ' '
        << (e.val_loss ? format_double(*e.val_loss) : "-") << ' ' << (e.stop_reason.empty() ? "-" : e.stop_reason)
        << '\n';
  }
}

void write_accuracy(std::ostream& out, const AccuracyMatrix& a) {
  for (std::size_t t = 0; t < a.tasks(); ++t) {
    for (std::size_t i = 0; i <= t; ++i) out << t + 1 << ' ' << i + 1 << ' ' << a.correct(t, i) << ' ' << a.total(t, i) << '\n';
  }
}

}  // namespace rc
