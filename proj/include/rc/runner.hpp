#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rc/dataset.hpp"
#include "rc/metrics.hpp"
#include "rc/trainer.hpp"

namespace rc {

enum class SweepAxis { divisions, order, selection };

SweepAxis parse_axis(const std::string& s);
std::string to_string(SweepAxis a);

struct DatasetSpec {
  Preset preset = Preset::c10;
  std::filesystem::path dir;
  std::optional<std::size_t> subset;  // training samples per class
  std::uint64_t split_seed = 0;
};

struct TeacherSpec {
  std::uint64_t seed = 1000;
  std::optional<std::size_t> max_epochs;  // defaults to the episode max_epochs
  std::filesystem::path checkpoint;       // reused if it exists, otherwise written
  double min_train_accuracy = 0;
};

/// One sweep: a single axis varies, everything else is a fixed control.
struct ExperimentSpec {
  DatasetSpec dataset;
  SweepAxis axis = SweepAxis::divisions;
  std::vector<std::string> values;  // empty = preset defaults for the axis
  EpisodeConfig controls;           // seed is replaced per run
  std::uint64_t class_order_seed = 0;
  TeacherSpec teacher;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  bool offline = true;
  ForgettingMode forgetting = ForgettingMode::relative;
  std::filesystem::path out = "results";
  std::size_t jobs = 1;
  bool checkpoints = false;

  /// Throws ConfigError on an unusable spec. Fills default axis values.
  void validate();
  static ExperimentSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Default axis values for a preset.
std::vector<std::string> default_axis_values(SweepAxis axis, Preset preset);

/// Episode configuration for one (axis value, seed) cell.
EpisodeConfig config_for(const ExperimentSpec& spec, const std::string& axis_value, std::uint64_t seed);

struct ResultRow {
  std::string axis_value;
  std::uint64_t seed = 0;
  std::size_t task = 0;  // 1-based
  std::optional<double> forget_rel, forget_abs, avg_accu;
  std::optional<std::size_t> epochs;
  std::int64_t wall_ms = 0;
  std::string status = "ok";
};

struct SummaryRow {
  std::string axis_value;
  double mean_forget_rel = 0;
  double mean_forget_abs = 0;
  double mean_avg_accu = 0;
  std::size_t n_seeds = 0;
};

struct OfflineRow {
  std::uint64_t seed = 0;
  std::optional<double> test_accuracy;
  std::string status = "ok";
};

struct SweepReport {
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
  std::vector<OfflineRow> offline;
  std::vector<std::string> warnings;
  int exit_code = 0;  // 0 = all episodes succeeded, 2 = partial failure
};

inline constexpr char kResultsHeader[] = "axis_value,seed,task,forget_rel,forget_abs,avg_accu,epochs,wall_ms,status";
inline constexpr char kSummaryHeader[] = "axis_value,mean_forget_rel,mean_avg_accu,n_seeds";

/// Execute |values| x |seeds| episodes (plus offline baselines) and write
/// results.csv, summary.csv, offline.csv, one SVG per metric and per-episode
/// artefacts under out/episodes/.
SweepReport run_sweep(ExperimentSpec spec, std::ostream* progress = nullptr);

/// Summary rows recomputed from result rows (failed runs excluded).
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows, const std::vector<std::string>& axis_order);

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

/// Everything needed to re-execute one episode bit-for-bit.
struct EpisodeRecord {
  DatasetSpec dataset;
  std::uint64_t class_order_seed = 0;
  EpisodeConfig config;
  std::string precision;
  std::filesystem::path teacher_checkpoint;  // empty when unused
  std::string teacher_digest;

  nlohmann::json to_json() const;
  static EpisodeRecord from_json(const nlohmann::json& j);
};

/// Run one episode and write events.log, buffer.txt, accuracy.txt,
/// metrics.txt and episode.json into `dir`.
EpisodeResult run_recorded_episode(const EpisodeRecord& record, const Benchmark& bench, const TaskStream& stream,
                                   const DifficultyContext& ctx, const std::filesystem::path& dir,
                                   bool checkpoints = false);

enum class Verdict { identical, divergent, expected_divergence };
std::string to_string(Verdict v);

struct VerifyReport {
  Verdict verdict = Verdict::identical;
  std::string artifact;        // first mismatching file, empty if identical
  std::size_t line = 0;        // 1-based line of first mismatch
  std::optional<std::size_t> task;
  std::string detail;
};

/// Re-execute the episode recorded in `episode_dir` and compare its dumps.
VerifyReport replay_run(const std::filesystem::path& episode_dir);

/// Compare two artefact texts line by line; the leading integer of the first
/// differing line is reported as the task index.
std::optional<VerifyReport> compare_artifact(const std::string& name, const std::string& expected,
                                             const std::string& actual);

}  // namespace rc
