#include "rc/difficulty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace rc {
namespace {

constexpr std::size_t kInferenceChunk = 256;

bool easier(Metric m, const DifficultyScore& a, const DifficultyScore& b) {
  if (a.raw != b.raw) return m == Metric::confidence ? a.raw > b.raw : a.raw < b.raw;
  return a.sample_id < b.sample_id;
}

}  // namespace

Metric parse_metric(const std::string& s) {
  if (s == "confidence") return Metric::confidence;
  if (s == "distance") return Metric::distance;
  throw ConfigError("unknown difficulty metric '" + s + "' (expected confidence or distance)");
}

std::string to_string(Metric m) { return m == Metric::confidence ? "confidence" : "distance"; }

void assign_ranks(std::vector<DifficultyScore>& scores) {
  if (scores.empty()) return;
  const Metric m = scores.front().metric;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return easier(m, scores[a], scores[b]); });
  for (std::size_t r = 0; r < order.size(); ++r) scores[order[r]].rank = r;
}

std::vector<DifficultyScore> confidence_from_probabilities(std::span<const SampleId> ids, std::span<const int> labels,
                                                           std::span<const double> probs, std::size_t num_classes) {
  if (labels.size() != ids.size() || probs.size() != ids.size() * num_classes) {
    throw InvalidInput("confidence scores: ids, labels and probability rows disagree in length");
  }
  std::vector<DifficultyScore> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw InvalidInput("confidence scores: label " + std::to_string(labels[i]) + " out of range");
    }
    out[i] = {ids[i], Metric::confidence, probs[i * num_classes + static_cast<std::size_t>(labels[i])], 0};
  }
  assign_ranks(out);
  return out;
}

std::vector<DifficultyScore> confidence_scores(const SmallCnn& teacher, const Dataset& data,
                                               std::span<const SampleId> ids) {
  if (teacher.num_classes() != data.num_classes()) {
    throw ConfigError("teacher predicts " + std::to_string(teacher.num_classes()) + " classes but the dataset has " +
                      std::to_string(data.num_classes()));
  }
  const std::size_t K = data.num_classes();
  std::vector<double> probs;
  probs.reserve(ids.size() * K);
  for (std::size_t lo = 0; lo < ids.size(); lo += kInferenceChunk) {
    auto chunk = ids.subspan(lo, std::min(kInferenceChunk, ids.size() - lo));
    Tensor p = softmax(teacher.forward(make_batch(data, chunk)));
    for (real v : p.data()) probs.push_back(static_cast<double>(v));
  }
  const auto labels = batch_labels(data, ids);
  return confidence_from_probabilities(ids, labels, probs, K);
}

std::vector<double> PenultimateExtractor::extract(const Dataset& data, std::span<const SampleId> ids) const {
  std::vector<double> out;
  out.reserve(ids.size() * dim());
  for (std::size_t lo = 0; lo < ids.size(); lo += kInferenceChunk) {
    auto chunk = ids.subspan(lo, std::min(kInferenceChunk, ids.size() - lo));
    Tensor f = backbone_->features(make_batch(data, chunk));
    for (real v : f.data()) out.push_back(static_cast<double>(v));
  }
  return out;
}

std::vector<DifficultyScore> distance_from_features(std::span<const SampleId> ids, std::span<const double> features,
                                                    std::size_t dim) {
  const std::size_t n = ids.size();
  if (n < 2) throw InvalidInput("distance scores need at least 2 samples, got " + std::to_string(n));
  if (features.size() != n * dim) throw InvalidInput("distance scores: feature matrix is not [n x dim]");
  std::vector<double> raw(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* fi = features.data() + i * dim;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* fj = features.data() + j * dim;
      double ss = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = fi[k] - fj[k];
        ss += d * d;
      }
      const double dist = std::sqrt(ss);
      raw[i] += dist;
      raw[j] += dist;
    }
  }
  std::vector<DifficultyScore> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {ids[i], Metric::distance, raw[i], 0};
  assign_ranks(out);
  return out;
}

std::vector<DifficultyScore> distance_scores(const FeatureExtractor& extractor, const Dataset& data,
                                             std::span<const SampleId> ids) {
  if (ids.size() < 2) throw InvalidInput("distance scores need at least 2 samples, got " + std::to_string(ids.size()));
  return distance_from_features(ids, extractor.extract(data, ids), extractor.dim());
}

std::vector<DifficultyScore> class_level(std::span<const DifficultyScore> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidInput("class_level: every scored sample needs a label");
  if (scores.empty()) return {};
  const Metric m = scores.front().metric;

  struct Group {
    double sum = 0;
    std::size_t count = 0;
    SampleId min_id = 0;
    std::vector<std::size_t> members;
  };
  std::map<int, Group> groups;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].metric != m) throw InvalidInput("class_level: mixed metrics in one score set");
    auto [it, fresh] = groups.try_emplace(labels[i]);
    Group& g = it->second;
    g.sum += scores[i].raw;
    if (fresh || scores[i].sample_id < g.min_id) g.min_id = scores[i].sample_id;
    ++g.count;
    g.members.push_back(i);
  }

  std::vector<const Group*> order;
  for (auto& [label, g] : groups) order.push_back(&g);
  auto mean = [](const Group* g) { return g->sum / static_cast<double>(g->count); };
  std::sort(order.begin(), order.end(), [&](const Group* a, const Group* b) {
    const double ma = mean(a), mb = mean(b);
    if (ma != mb) return m == Metric::confidence ? ma > mb : ma < mb;
    return a->min_id < b->min_id;
  });

  std::vector<DifficultyScore> out;
  out.reserve(scores.size());
  for (const Group* g : order) {
    for (std::size_t i : g->members) out.push_back({scores[i].sample_id, m, mean(g), out.size()});
  }
  return out;
}

void write_scores(std::span<const DifficultyScore> scores, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write scores: " + path.string());
  char buf[64];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%a", s.raw);
    out << s.sample_id << ' ' << to_string(s.metric) << ' ' << buf << ' ' << s.rank << '\n';
  }
}

std::vector<DifficultyScore> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read scores: " + path.string());
  std::vector<DifficultyScore> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    DifficultyScore s;
    std::string metric, raw;
    if (!(ls >> s.sample_id >> metric >> raw >> s.rank)) throw FormatError("bad score line: " + line);
    s.metric = parse_metric(metric);
    s.raw = std::strtod(raw.c_str(), nullptr);
    out.push_back(s);
  }
  return out;
}

}  // namespace rc
