#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rc/dataset.hpp"
#include "rc/nn.hpp"

namespace rc {

enum class Metric { confidence, distance };

Metric parse_metric(const std::string& s);
std::string to_string(Metric m);

/// Rank 0 is the easiest sample of the scored set.
///   confidence: raw in [0, 1], higher raw = easier
///   distance:   raw >= 0,     lower raw  = easier
/// Ties are broken by ascending sample id.
struct DifficultyScore {
  SampleId sample_id = 0;
  Metric metric = Metric::confidence;
  double raw = 0;
  std::size_t rank = 0;
};

/// Assign ranks in place according to the metric's easiness direction.
void assign_ranks(std::vector<DifficultyScore>& scores);

/// Confidence scores from precomputed softmax rows ([n, K], row-major).
std::vector<DifficultyScore> confidence_from_probabilities(std::span<const SampleId> ids, std::span<const int> labels,
                                                           std::span<const double> probs, std::size_t num_classes);

/// Softmax probability of each sample's ground-truth class under the teacher.
std::vector<DifficultyScore> confidence_scores(const SmallCnn& teacher, const Dataset& data,
                                               std::span<const SampleId> ids);

/// Feature source for the distance metric.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t dim() const = 0;
  /// Row-major [ids.size(), dim()] feature matrix.
  virtual std::vector<double> extract(const Dataset& data, std::span<const SampleId> ids) const = 0;
};

/// Penultimate (post-ReLU fc3) activations of a SmallCnn.
class PenultimateExtractor final : public FeatureExtractor {
 public:
  explicit PenultimateExtractor(const SmallCnn& backbone) : backbone_(&backbone) {}
  std::size_t dim() const override { return SmallCnn::kFeatureDim; }
  std::vector<double> extract(const Dataset& data, std::span<const SampleId> ids) const override;

 private:
  const SmallCnn* backbone_;
};

/// raw_i = sum_j ||f_i - f_j||_2 over the given set; features row-major [n, dim].
std::vector<DifficultyScore> distance_from_features(std::span<const SampleId> ids, std::span<const double> features,
                                                    std::size_t dim);

std::vector<DifficultyScore> distance_scores(const FeatureExtractor& extractor, const Dataset& data,
                                             std::span<const SampleId> ids);

/// Class-level difficulty: each class scored by the mean raw of its samples.
/// Output is in rank order (easiest class first); samples keep their incoming
/// relative order within a class and their raw becomes the class mean. Equal
/// class means are broken by the smaller minimum sample id.
std::vector<DifficultyScore> class_level(std::span<const DifficultyScore> scores, std::span<const int> labels);

/// Audit dump: one "sample_id metric raw rank" line per score, raw as hex float.
void write_scores(std::span<const DifficultyScore> scores, const std::filesystem::path& path);
std::vector<DifficultyScore> read_scores(const std::filesystem::path& path);

}  // namespace rc
