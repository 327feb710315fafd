#include "rc/replay.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace rc {

Strategy parse_strategy(const std::string& s) {
  if (s == "random") return Strategy::random;
  if (s == "easiest") return Strategy::easiest;
  if (s == "hardest") return Strategy::hardest;
  if (s == "uniform") return Strategy::uniform;
  throw ConfigError("unknown selection strategy '" + s + "' (expected random, easiest, hardest or uniform)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::easiest: return "easiest";
    case Strategy::hardest: return "hardest";
    case Strategy::uniform: return "uniform";
  }
  return "?";
}

std::optional<RehearsalOrder> parse_order(const std::string& s) {
  if (s == "unsorted" || s == "random" || s.empty()) return std::nullopt;
  const auto a = s.find(':');
  const auto b = a == std::string::npos ? std::string::npos : s.find(':', a + 1);
  if (b == std::string::npos) {
    throw ConfigError("rehearsal order '" + s + "' must be 'unsorted' or '<direction>:<granularity>:<metric>'");
  }
  const std::string dir = s.substr(0, a), gran = s.substr(a + 1, b - a - 1), metric = s.substr(b + 1);
  RehearsalOrder o;
  if (dir == "easy_to_hard") o.direction = Direction::easy_to_hard;
  else if (dir == "hard_to_easy") o.direction = Direction::hard_to_easy;
  else throw ConfigError("unknown rehearsal direction '" + dir + "'");
  if (gran == "instance") o.granularity = Granularity::instance;
  else if (gran == "class") o.granularity = Granularity::klass;
  else throw ConfigError("unknown rehearsal granularity '" + gran + "'");
  o.metric = parse_metric(metric);
  return o;
}

std::string to_string(const std::optional<RehearsalOrder>& order) {
  if (!order) return "unsorted";
  return std::string(order->direction == Direction::easy_to_hard ? "easy_to_hard" : "hard_to_easy") + ":" +
         (order->granularity == Granularity::instance ? "instance" : "class") + ":" + to_string(order->metric);
}

std::vector<RehearsalOrder> all_sorted_orders() {
  std::vector<RehearsalOrder> out;
  for (Metric m : {Metric::distance, Metric::confidence}) {
    for (Granularity g : {Granularity::instance, Granularity::klass}) {
      for (Direction d : {Direction::easy_to_hard, Direction::hard_to_easy}) out.push_back({d, g, m});
    }
  }
  return out;
}

// ----------------------------------------------------------------- buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, Strategy strategy) : capacity_(capacity), strategy_(strategy) {}

std::vector<SampleId> ReplayBuffer::ids() const {
  std::vector<SampleId> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.id);
  return out;
}

std::vector<std::size_t> ReplayBuffer::class_counts() const {
  std::unordered_map<int, std::size_t> count;
  for (const auto& e : entries_) ++count[e.label];
  std::vector<std::size_t> out;
  for (int c : classes_seen_) out.push_back(count[c]);
  return out;
}

std::vector<std::size_t> class_quotas(std::size_t capacity, std::size_t classes) {
  if (classes == 0) return {};
  if (capacity < classes) {
    throw ConfigError("buffer capacity " + std::to_string(capacity) + " cannot hold one exemplar for each of " +
                      std::to_string(classes) + " classes");
  }
  std::vector<std::size_t> q(classes, capacity / classes);
  for (std::size_t i = 0; i < capacity % classes; ++i) ++q[i];
  return q;
}

std::vector<std::size_t> uniform_pick_indices(std::size_t n, std::size_t k) {
  std::vector<std::size_t> out;
  if (k == 0 || n == 0) return out;
  if (k >= n) {
    out.resize(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  if (k == 1) return {n / 2};
  // round_half_up(j (n-1) / (k-1)) in exact integer arithmetic.
  const std::size_t den = k - 1;
  for (std::size_t j = 0; j < k; ++j) out.push_back((2 * j * (n - 1) + den) / (2 * den));
  return out;
}

std::vector<std::size_t> select_positions(Strategy strategy, std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> out;
  if (k >= n) {
    out.resize(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  switch (strategy) {
    case Strategy::random: {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), std::size_t{0});
      std::mt19937_64 gen(seed);
      std::shuffle(all.begin(), all.end(), gen);
      out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(out.begin(), out.end());
      return out;
    }
    case Strategy::easiest:
      for (std::size_t i = 0; i < k; ++i) out.push_back(i);
      return out;
    case Strategy::hardest:
      for (std::size_t i = n - k; i < n; ++i) out.push_back(i);
      return out;
    case Strategy::uniform:
      return uniform_pick_indices(n, k);
  }
  return out;
}

namespace {

/// Keep k of `members` using the buffer strategy.
std::vector<BufferEntry> choose(Strategy strategy, std::vector<BufferEntry> members, std::size_t k,
                                const std::unordered_map<SampleId, std::size_t>& rank_of, std::uint64_t seed) {
  if (strategy != Strategy::random) {
    for (const auto& m : members) {
      if (!rank_of.count(m.id)) {
        throw ConsistencyError("no difficulty score for sample " + std::to_string(m.id) + " under " +
                               to_string(strategy) + " selection");
      }
    }
    std::stable_sort(members.begin(), members.end(), [&](const BufferEntry& a, const BufferEntry& b) {
      return rank_of.at(a.id) < rank_of.at(b.id);
    });
  }
  std::vector<BufferEntry> kept;
  for (std::size_t p : select_positions(strategy, members.size(), k, seed)) kept.push_back(members[p]);
  return kept;
}

}  // namespace

ReplayBuffer update_buffer(const ReplayBuffer& buffer, std::span<const BufferEntry> finished,
                           std::span<const int> new_classes, std::span<const DifficultyScore> scores,
                           std::uint64_t seed) {
  ReplayBuffer next(buffer.capacity_, buffer.strategy_);
  next.classes_seen_ = buffer.classes_seen_;
  std::unordered_set<int> seen(buffer.classes_seen_.begin(), buffer.classes_seen_.end());
  for (int c : new_classes) {
    if (!seen.insert(c).second) {
      throw ConsistencyError("class " + std::to_string(c) + " is already stored in the replay buffer");
    }
    next.classes_seen_.push_back(c);
  }
  std::unordered_set<int> fresh(new_classes.begin(), new_classes.end());
  for (const auto& e : finished) {
    if (!fresh.count(e.label)) {
      throw ConsistencyError("finished-task sample " + std::to_string(e.id) + " has label " + std::to_string(e.label) +
                             " outside the task's classes");
    }
  }
  const auto quotas = class_quotas(next.capacity_, next.classes_seen_.size());

  std::unordered_map<SampleId, std::size_t> rank_of;
  for (const auto& s : scores) rank_of[s.sample_id] = s.rank;

  for (std::size_t ci = 0; ci < next.classes_seen_.size(); ++ci) {
    const int c = next.classes_seen_[ci];
    std::vector<BufferEntry> members;
    if (fresh.count(c)) {
      for (const auto& e : finished) {
        if (e.label == c) members.push_back(e);
      }
    } else {
      for (const auto& e : buffer.entries_) {
        if (e.label == c) members.push_back(e);
      }
    }
    const auto class_seed = derive_seed(seed, seed_tag::selection, static_cast<std::uint64_t>(c));
    std::vector<BufferEntry> kept;
    if (members.size() <= quotas[ci] && !fresh.count(c)) {
      kept = std::move(members);
    } else {
      kept = choose(next.strategy_, std::move(members), quotas[ci], rank_of, class_seed);
    }
    next.entries_.insert(next.entries_.end(), kept.begin(), kept.end());
  }
  return next;
}

std::vector<BufferEntry> order_rehearsal(std::span<const BufferEntry> entries, std::span<const DifficultyScore> scores,
                                         const RehearsalOrder& order) {
  std::unordered_map<SampleId, const DifficultyScore*> by_id;
  for (const auto& s : scores) {
    if (s.metric != order.metric) {
      throw InvalidInput("rehearsal order uses " + to_string(order.metric) + " but scores are " + to_string(s.metric));
    }
    by_id[s.sample_id] = &s;
  }
  std::vector<const DifficultyScore*> aligned;
  for (const auto& e : entries) {
    auto it = by_id.find(e.id);
    if (it == by_id.end()) throw ConsistencyError("buffer entry " + std::to_string(e.id) + " has no difficulty score");
    aligned.push_back(it->second);
  }

  std::vector<BufferEntry> out;
  if (order.granularity == Granularity::instance) {
    std::vector<std::size_t> idx(entries.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return aligned[a]->rank < aligned[b]->rank; });
    for (std::size_t i : idx) out.push_back(entries[i]);
  } else {
    std::vector<DifficultyScore> local;
    std::vector<int> labels;
    std::unordered_map<SampleId, std::size_t> pos;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      local.push_back(*aligned[i]);
      labels.push_back(entries[i].label);
      pos[entries[i].id] = i;
    }
    for (const auto& s : class_level(local, labels)) out.push_back(entries[pos.at(s.sample_id)]);
  }
  if (order.direction == Direction::hard_to_easy) std::reverse(out.begin(), out.end());
  return out;
}

// --------------------------------------------------------------- schedule

std::vector<std::vector<SampleId>> split_groups(std::span<const SampleId> ids, std::size_t d) {
  std::vector<std::vector<SampleId>> out(d);
  const std::size_t base = d ? ids.size() / d : 0, extra = d ? ids.size() % d : 0;
  std::size_t pos = 0;
  for (std::size_t g = 0; g < d; ++g) {
    const std::size_t len = base + (g < extra ? 1 : 0);
    out[g].assign(ids.begin() + static_cast<std::ptrdiff_t>(pos), ids.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

InterleaveSchedule build_schedule(std::span<const SampleId> task_ids, std::span<const SampleId> replay_ids,
                                  std::size_t divisions, std::uint64_t seed, bool replay_sorted) {
  if (divisions == 0) throw ConfigError("interleave divisions must be at least 1");
  if (divisions > task_ids.size()) {
    throw ConfigError("interleave divisions " + std::to_string(divisions) + " exceed the " +
                      std::to_string(task_ids.size()) + " current-task samples");
  }
  if (!replay_ids.empty() && divisions > replay_ids.size()) {
    throw ConfigError("interleave divisions " + std::to_string(divisions) + " exceed the " +
                      std::to_string(replay_ids.size()) + " replay samples");
  }
  std::vector<SampleId> current(task_ids.begin(), task_ids.end());
  std::vector<SampleId> replay(replay_ids.begin(), replay_ids.end());
  std::mt19937_64 gen_current(derive_seed(seed, seed_tag::schedule, 0));
  std::shuffle(current.begin(), current.end(), gen_current);
  if (!replay_sorted) {
    std::mt19937_64 gen_replay(derive_seed(seed, seed_tag::schedule, 1));
    std::shuffle(replay.begin(), replay.end(), gen_replay);
  }
  auto cur_groups = split_groups(current, divisions);
  auto rep_groups = split_groups(replay, divisions);

  InterleaveSchedule s;
  s.divisions = divisions;
  s.groups.reserve(replay.empty() ? divisions : 2 * divisions);
  for (std::size_t g = 0; g < divisions; ++g) {
    s.groups.push_back({ScheduleGroup::Kind::current, std::move(cur_groups[g])});
    if (!replay.empty()) s.groups.push_back({ScheduleGroup::Kind::replay, std::move(rep_groups[g])});
  }
  return s;
}

void write_buffer_dump(std::ostream& out, std::size_t task, const ReplayBuffer& buffer) {
  const std::string strategy = to_string(buffer.strategy());
  for (const auto& e : buffer.entries()) out << task << ' ' << e.id << ' ' << e.label << ' ' << strategy << '\n';
}

}  // namespace rc
