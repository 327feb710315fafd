#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rc/difficulty.hpp"

namespace rc {

enum class Strategy { random, easiest, hardest, uniform };
enum class Direction { easy_to_hard, hard_to_easy };
enum class Granularity { instance, klass };

Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);

/// A sorted rehearsal sequence. "Unsorted" is represented by an empty
/// std::optional<RehearsalOrder>.
struct RehearsalOrder {
  Direction direction = Direction::easy_to_hard;
  Granularity granularity = Granularity::instance;
  Metric metric = Metric::confidence;

  bool operator==(const RehearsalOrder&) const = default;
};

/// Accepts "unsorted" or "<direction>:<granularity>:<metric>", e.g.
/// "easy_to_hard:instance:confidence".
std::optional<RehearsalOrder> parse_order(const std::string& s);
std::string to_string(const std::optional<RehearsalOrder>& order);

/// All eight sorted orders, in a fixed presentation order.
std::vector<RehearsalOrder> all_sorted_orders();

struct BufferEntry {
  SampleId id = 0;
  int label = 0;

  bool operator==(const BufferEntry&) const = default;
};

/// Fixed-capacity exemplar store. Entries are grouped by class in the order
/// classes were first seen.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, Strategy strategy);

  std::size_t capacity() const { return capacity_; }
  Strategy strategy() const { return strategy_; }
  std::span<const BufferEntry> entries() const { return entries_; }
  std::span<const int> classes_seen() const { return classes_seen_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::vector<SampleId> ids() const;
  /// Per-class counts in classes_seen order.
  std::vector<std::size_t> class_counts() const;

 private:
  friend ReplayBuffer update_buffer(const ReplayBuffer&, std::span<const BufferEntry>, std::span<const int>,
                                    std::span<const DifficultyScore>, std::uint64_t);
  std::size_t capacity_ = 1200;
  Strategy strategy_ = Strategy::random;
  std::vector<BufferEntry> entries_;
  std::vector<int> classes_seen_;
};

/// Per-class quota: floor(capacity / classes) each, the earliest classes get
/// one extra until the total equals capacity.
std::vector<std::size_t> class_quotas(std::size_t capacity, std::size_t classes);

/// Positions round_half_up(j (n-1) / (k-1)), j = 0..k-1. k == 1 picks the
/// middle element; k >= n returns every index.
std::vector<std::size_t> uniform_pick_indices(std::size_t n, std::size_t k);

/// Choose k of `members` (already sorted easiest first for score-based
/// strategies) according to the strategy.
std::vector<std::size_t> select_positions(Strategy strategy, std::size_t n, std::size_t k, std::uint64_t seed);

/// Rebuild the buffer at the end of a task.
///   finished:    training samples of the task just completed
///   new_classes: that task's classes, in presentation order
///   scores:      difficulty scores covering every candidate that a
///                score-based strategy must rank (ignored for random)
ReplayBuffer update_buffer(const ReplayBuffer& buffer, std::span<const BufferEntry> finished,
                           std::span<const int> new_classes, std::span<const DifficultyScore> scores,
                           std::uint64_t seed);

/// Permutation of buffer entries following a sorted rehearsal order.
std::vector<BufferEntry> order_rehearsal(std::span<const BufferEntry> entries, std::span<const DifficultyScore> scores,
                                         const RehearsalOrder& order);

struct ScheduleGroup {
  enum class Kind { current, replay };
  Kind kind;
  std::vector<SampleId> ids;
};

/// 2d groups alternating current/replay, current first; only the d current
/// groups when there is nothing to replay.
struct InterleaveSchedule {
  std::size_t divisions = 1;
  std::vector<ScheduleGroup> groups;
};

/// Cut `ids` into d contiguous groups; the first (n mod d) groups get one extra.
std::vector<std::vector<SampleId>> split_groups(std::span<const SampleId> ids, std::size_t d);

/// Build one epoch's schedule. The current-task ids are always shuffled with
/// `seed`. Replay ids are shuffled too unless `replay_sorted`, in which case
/// their given order is cut into contiguous groups.
InterleaveSchedule build_schedule(std::span<const SampleId> task_ids, std::span<const SampleId> replay_ids,
                                  std::size_t divisions, std::uint64_t seed, bool replay_sorted);

/// "task sample_id label strategy" per entry, appended to `out`.
void write_buffer_dump(std::ostream& out, std::size_t task, const ReplayBuffer& buffer);

}  // namespace rc
