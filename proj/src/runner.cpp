#include "rc/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "rc/checkpoint.hpp"
#include "rc/svg.hpp"

namespace rc {
namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------ enums/spec

SweepAxis parse_axis(const std::string& s) {
  if (s == "divisions") return SweepAxis::divisions;
  if (s == "order") return SweepAxis::order;
  if (s == "selection") return SweepAxis::selection;
  throw ConfigError("unknown sweep axis '" + s + "' (expected divisions, order or selection)");
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::divisions: return "divisions";
    case SweepAxis::order: return "order";
    case SweepAxis::selection: return "selection";
  }
  return "?";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::identical: return "identical";
    case Verdict::divergent: return "divergent";
    case Verdict::expected_divergence: return "expected-divergence";
  }
  return "?";
}

std::vector<std::string> default_axis_values(SweepAxis axis, Preset preset) {
  switch (axis) {
    case SweepAxis::divisions:
      if (preset == Preset::c10) return {"1", "8", "50", "200", "400"};
      return {"1", "8", "60", "120", "300"};
    case SweepAxis::order: {
      std::vector<std::string> out;
      for (const auto& o : all_sorted_orders()) out.push_back(to_string(std::optional<RehearsalOrder>(o)));
      return out;
    }
    case SweepAxis::selection:
      return {"random", "easiest", "hardest", "uniform"};
  }
  return {};
}

namespace {

std::size_t parse_count(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(std::string("invalid ") + what + " '" + s + "'");
  }
}

}  // namespace

EpisodeConfig config_for(const ExperimentSpec& spec, const std::string& value, std::uint64_t seed) {
  EpisodeConfig cfg = spec.controls;
  cfg.seed = seed;
  switch (spec.axis) {
    case SweepAxis::divisions:
      cfg.divisions = parse_count(value, "divisions value");
      break;
    case SweepAxis::order:
      cfg.order = parse_order(value);
      break;
    case SweepAxis::selection: {
      const auto colon = value.find(':');
      cfg.selection = parse_strategy(value.substr(0, colon));
      if (colon != std::string::npos) cfg.metric = parse_metric(value.substr(colon + 1));
      break;
    }
  }
  cfg.validate();
  return cfg;
}

void ExperimentSpec::validate() {
  if (seeds.empty()) throw ConfigError("experiment has an empty seeds list");
  if (jobs == 0) throw ConfigError("jobs must be at least 1");
  if (values.empty()) values = default_axis_values(axis, dataset.preset);
  std::vector<std::string> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("duplicate sweep values for axis " + to_string(axis));
  }
  controls.validate();
  for (const auto& v : values) config_for(*this, v, 0);
  if (dataset.dir.empty()) throw ConfigError("dataset directory is not set");
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& dst) {
  if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

std::string value_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw ConfigError("sweep values must be strings or integers");
}

}  // namespace

ExperimentSpec ExperimentSpec::from_json(const json& j) {
  ExperimentSpec s;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("preset")) s.dataset.preset = parse_preset(d.at("preset").get<std::string>());
      if (d.contains("path")) s.dataset.dir = d.at("path").get<std::string>();
      if (d.contains("subset") && !d.at("subset").is_null()) s.dataset.subset = d.at("subset").get<std::size_t>();
      maybe(d, "split_seed", s.dataset.split_seed);
    }
    const PresetInfo info = preset_info(s.dataset.preset);
    s.controls.max_epochs = info.default_max_epochs;
    s.controls.early_stopping = info.uses_validation;
    if (j.contains("sweep")) {
      const auto& w = j.at("sweep");
      if (w.contains("axis")) s.axis = parse_axis(w.at("axis").get<std::string>());
      if (w.contains("values")) {
        for (const auto& v : w.at("values")) s.values.push_back(value_string(v));
      }
    }
    if (j.contains("controls")) {
      const auto& c = j.at("controls");
      maybe(c, "divisions", s.controls.divisions);
      if (c.contains("order")) s.controls.order = parse_order(c.at("order").get<std::string>());
      if (c.contains("metric")) s.controls.metric = parse_metric(c.at("metric").get<std::string>());
      if (c.contains("selection")) s.controls.selection = parse_strategy(c.at("selection").get<std::string>());
      maybe(c, "buffer_capacity", s.controls.buffer_capacity);
      maybe(c, "max_epochs", s.controls.max_epochs);
      maybe(c, "patience", s.controls.patience);
      maybe(c, "early_stopping", s.controls.early_stopping);
      maybe(c, "class_order_seed", s.class_order_seed);
      double lr = s.controls.sgd.learning_rate, mom = s.controls.sgd.momentum;
      maybe(c, "learning_rate", lr);
      maybe(c, "momentum", mom);
      s.controls.sgd.learning_rate = static_cast<real>(lr);
      s.controls.sgd.momentum = static_cast<real>(mom);
      maybe(c, "batch_size", s.controls.sgd.batch_size);
      if (c.contains("forgetting")) s.forgetting = parse_forgetting(c.at("forgetting").get<std::string>());
    }
    if (j.contains("teacher")) {
      const auto& t = j.at("teacher");
      maybe(t, "seed", s.teacher.seed);
      if (t.contains("max_epochs") && !t.at("max_epochs").is_null()) s.teacher.max_epochs = t.at("max_epochs").get<std::size_t>();
      if (t.contains("checkpoint")) s.teacher.checkpoint = t.at("checkpoint").get<std::string>();
      maybe(t, "min_train_accuracy", s.teacher.min_train_accuracy);
    }
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    maybe(j, "offline", s.offline);
    if (j.contains("out")) s.out = j.at("out").get<std::string>();
    maybe(j, "jobs", s.jobs);
    maybe(j, "checkpoints", s.checkpoints);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  return s;
}

json ExperimentSpec::to_json() const {
  json j;
  j["dataset"] = {{"preset", to_string(dataset.preset)}, {"path", dataset.dir.string()}, {"split_seed", dataset.split_seed}};
  j["dataset"]["subset"] = dataset.subset ? json(*dataset.subset) : json(nullptr);
  j["sweep"] = {{"axis", to_string(axis)}, {"values", values}};
  j["controls"] = {{"divisions", controls.divisions},
                   {"order", to_string(controls.order)},
                   {"metric", to_string(controls.metric)},
                   {"selection", to_string(controls.selection)},
                   {"buffer_capacity", controls.buffer_capacity},
                   {"max_epochs", controls.max_epochs},
                   {"patience", controls.patience},
                   {"early_stopping", controls.early_stopping},
                   {"class_order_seed", class_order_seed},
                   {"learning_rate", static_cast<double>(controls.sgd.learning_rate)},
                   {"momentum", static_cast<double>(controls.sgd.momentum)},
                   {"batch_size", controls.sgd.batch_size},
                   {"forgetting", to_string(forgetting)}};
  j["teacher"] = {{"seed", teacher.seed},
                  {"checkpoint", teacher.checkpoint.string()},
                  {"min_train_accuracy", teacher.min_train_accuracy}};
  j["teacher"]["max_epochs"] = teacher.max_epochs ? json(*teacher.max_epochs) : json(nullptr);
  j["seeds"] = seeds;
  j["offline"] = offline;
  j["out"] = out.string();
  j["jobs"] = jobs;
  j["checkpoints"] = checkpoints;
  return j;
}

// --------------------------------------------------------- episode record

namespace {

json config_json(const EpisodeConfig& c) {
  return {{"divisions", c.divisions},
          {"order", to_string(c.order)},
          {"selection", to_string(c.selection)},
          {"metric", to_string(c.metric)},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"early_stopping", c.early_stopping},
          {"seed", c.seed},
          {"learning_rate", static_cast<double>(c.sgd.learning_rate)},
          {"momentum", static_cast<double>(c.sgd.momentum)},
          {"batch_size", c.sgd.batch_size},
          {"buffer_capacity", c.buffer_capacity}};
}

EpisodeConfig config_from_json(const json& j) {
  EpisodeConfig c;
  c.divisions = j.at("divisions").get<std::size_t>();
  c.order = parse_order(j.at("order").get<std::string>());
  c.selection = parse_strategy(j.at("selection").get<std::string>());
  c.metric = parse_metric(j.at("metric").get<std::string>());
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.early_stopping = j.at("early_stopping").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.sgd.learning_rate = static_cast<real>(j.at("learning_rate").get<double>());
  c.sgd.momentum = static_cast<real>(j.at("momentum").get<double>());
  c.sgd.batch_size = j.at("batch_size").get<std::size_t>();
  c.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
  return c;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string hexfloat(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

std::string metrics_text(const RunMetrics& m) {
  std::ostringstream s;
  for (std::size_t t = 0; t < m.avg_accu.size(); ++t) {
    s << t + 1 << ' ' << hexfloat(m.forget_rel[t]) << ' ' << hexfloat(m.forget_abs[t]) << ' ' << hexfloat(m.avg_accu[t])
      << '\n';
  }
  return s.str();
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::string dir_name(const std::string& value, std::uint64_t seed) {
  std::string v = value;
  for (char& c : v) {
    if (c == ':' || c == '/' || c == ' ') c = '-';
  }
  return v + "__seed" + std::to_string(seed);
}

}  // namespace

json EpisodeRecord::to_json() const {
  json j;
  j["precision"] = precision;
  j["dataset"] = {{"preset", to_string(dataset.preset)},
                  {"path", fs::absolute(dataset.dir).string()},
                  {"split_seed", dataset.split_seed}};
  j["dataset"]["subset"] = dataset.subset ? json(*dataset.subset) : json(nullptr);
  j["class_order_seed"] = class_order_seed;
  j["config"] = config_json(config);
  j["teacher_checkpoint"] = teacher_checkpoint.empty() ? "" : fs::absolute(teacher_checkpoint).string();
  j["teacher_digest"] = teacher_digest;
  return j;
}

EpisodeRecord EpisodeRecord::from_json(const json& j) {
  try {
    EpisodeRecord r;
    r.precision = j.at("precision").get<std::string>();
    const auto& d = j.at("dataset");
    r.dataset.preset = parse_preset(d.at("preset").get<std::string>());
    r.dataset.dir = d.at("path").get<std::string>();
    r.dataset.split_seed = d.at("split_seed").get<std::uint64_t>();
    if (!d.at("subset").is_null()) r.dataset.subset = d.at("subset").get<std::size_t>();
    r.class_order_seed = j.at("class_order_seed").get<std::uint64_t>();
    r.config = config_from_json(j.at("config"));
    r.teacher_checkpoint = j.at("teacher_checkpoint").get<std::string>();
    r.teacher_digest = j.at("teacher_digest").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed episode record: ") + e.what());
  }
}

EpisodeResult run_recorded_episode(const EpisodeRecord& record, const Benchmark& bench, const TaskStream& stream,
                                   const DifficultyContext& ctx, const fs::path& dir, bool checkpoints) {
  fs::create_directories(dir);
  write_text(dir / "episode.json", record.to_json().dump(2) + "\n");
  EpisodeHooks hooks;
  if (checkpoints) hooks.checkpoint_dir = dir / "checkpoints";
  EpisodeResult r = run_episode(bench, stream, record.config, ctx, hooks);

  std::ostringstream events, acc;
  write_event_log(events, record.config, r.events);
  write_accuracy(acc, r.accuracy);
  write_text(dir / "events.log", events.str());
  write_text(dir / "buffer.txt", r.buffer_dump);
  write_text(dir / "accuracy.txt", acc.str());
  write_text(dir / "metrics.txt", metrics_text(r.metrics));
  return r;
}

// ------------------------------------------------------------------ CSV

void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows) {
  std::ostringstream s;
  s << kResultsHeader << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  for (const auto& r : rows) {
    s << r.axis_value << ',' << r.seed << ',' << r.task << ',' << opt(r.forget_rel) << ',' << opt(r.forget_abs) << ','
      << opt(r.avg_accu) << ',' << (r.epochs ? std::to_string(*r.epochs) : "") << ',' << r.wall_ms << ','
      << sanitize(r.status) << '\n';
  }
  write_text(path, s.str());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::optional<double> opt_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

std::vector<ResultRow> read_results_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) throw FormatError(path.string() + ": unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw FormatError(path.string() + ": malformed row: " + line);
    ResultRow r;
    r.axis_value = f[0];
    r.seed = std::stoull(f[1]);
    r.task = std::stoul(f[2]);
    r.forget_rel = opt_double(f[3]);
    r.forget_abs = opt_double(f[4]);
    r.avg_accu = opt_double(f[5]);
    if (!f[6].empty()) r.epochs = std::stoul(f[6]);
    r.wall_ms = std::stoll(f[7]);
    r.status = f[8];
    rows.push_back(r);
  }
  return rows;
}

std::vector<SummaryRow> read_summary_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<SummaryRow> rows;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kSummaryHeader) throw FormatError(path.string() + ": unexpected header");
      header = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 4) throw FormatError(path.string() + ": malformed row: " + line);
    SummaryRow r;
    r.axis_value = f[0];
    r.mean_forget_rel = std::stod(f[1]);
    r.mean_avg_accu = std::stod(f[2]);
    r.n_seeds = std::stoul(f[3]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows, const std::vector<std::string>& axis_order) {
  // value -> seed -> per-task metrics (in task order)
  std::map<std::string, std::map<std::uint64_t, RunMetrics>> runs;
  std::map<std::string, std::map<std::uint64_t, bool>> failed;
  for (const auto& r : rows) {
    if (r.status != "ok" || !r.avg_accu || !r.forget_rel || !r.forget_abs) {
      failed[r.axis_value][r.seed] = true;
      continue;
    }
    auto& m = runs[r.axis_value][r.seed];
    m.forget_rel.push_back(*r.forget_rel);
    m.forget_abs.push_back(*r.forget_abs);
    m.avg_accu.push_back(*r.avg_accu);
  }
  std::vector<SummaryRow> out;
  for (const auto& value : axis_order) {
    SummaryRow s;
    s.axis_value = value;
    std::vector<RunMetrics> ok;
    for (const auto& [seed, m] : runs[value]) {
      if (!failed[value][seed]) ok.push_back(m);
    }
    if (!ok.empty()) {
      const Aggregate a = aggregate(ok);
      s.mean_forget_rel = a.mean_forget_rel;
      s.mean_forget_abs = a.mean_forget_abs;
      s.mean_avg_accu = a.mean_avg_accu;
      s.n_seeds = a.n_runs;
    }
    out.push_back(s);
  }
  return out;
}

// ----------------------------------------------------------------- sweep

namespace {

struct Job {
  enum class Kind { episode, offline } kind;
  std::string value;
  std::uint64_t seed;
};

struct JobOutcome {
  std::vector<ResultRow> rows;
  OfflineRow offline;
};

svg::Chart make_chart(const ExperimentSpec& spec, const std::vector<ResultRow>& rows, bool accuracy,
                      std::optional<double> offline_mean) {
  svg::Chart chart;
  const std::string metric_name =
      accuracy ? "Avg. Accu. (%)" : (spec.forgetting == ForgettingMode::relative ? "F (%)" : "F (points)");
  chart.title = metric_name + " by " + to_string(spec.axis);
  chart.y_label = metric_name;
  if (accuracy && offline_mean) {
    chart.reference = offline_mean;
    chart.reference_label = "offline";
  }
  // Per value: mean and spread over seeds of the task-averaged metric.
  std::map<std::string, std::map<std::uint64_t, std::vector<double>>> per;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    const auto v = accuracy ? r.avg_accu
                            : (spec.forgetting == ForgettingMode::relative ? r.forget_rel : r.forget_abs);
    if (v) per[r.axis_value][r.seed].push_back(*v);
  }
  const bool composite = std::any_of(spec.values.begin(), spec.values.end(),
                                     [](const std::string& v) { return v.find(':') != std::string::npos; });
  std::vector<svg::Group> groups;
  auto group_for = [&](const std::string& key) -> svg::Group& {
    for (auto& g : groups) {
      if (g.label == key) return g;
    }
    groups.push_back({key, {}});
    return groups.back();
  };
  for (const auto& value : spec.values) {
    std::vector<double> seed_means;
    for (const auto& [seed, vals] : per[value]) {
      double s = 0;
      for (double x : vals) s += x;
      seed_means.push_back(vals.empty() ? 0 : s / static_cast<double>(vals.size()));
    }
    double mean = 0, sd = 0;
    for (double x : seed_means) mean += x;
    if (!seed_means.empty()) mean /= static_cast<double>(seed_means.size());
    for (double x : seed_means) sd += (x - mean) * (x - mean);
    if (seed_means.size() > 1) sd = std::sqrt(sd / static_cast<double>(seed_means.size() - 1));
    svg::Bar bar{value, mean, sd};
    if (composite) {
      const auto colon = value.find(':');
      bar.label = value.substr(0, colon);
      group_for(colon == std::string::npos ? "" : value.substr(colon + 1)).bars.push_back(bar);
    } else {
      group_for(to_string(spec.axis)).bars.push_back(bar);
    }
  }
  chart.groups = std::move(groups);
  return chart;
}

}  // namespace

SweepReport run_sweep(ExperimentSpec spec, std::ostream* progress) {
  spec.validate();
  fs::create_directories(spec.out);
  write_text(spec.out / "spec.json", spec.to_json().dump(2) + "\n");
  std::mutex log_mutex;
  auto log = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    *progress << msg << std::endl;
  };

  const Benchmark bench = load_benchmark(spec.dataset.preset, spec.dataset.dir, spec.dataset.subset,
                                         spec.dataset.split_seed);
  const TaskStream stream = make_stream(bench.data, bench.splits, preset_info(spec.dataset.preset).classes_per_task,
                                        spec.class_order_seed);
  write_manifest(bench, stream, spec.out / "manifest.txt");
  log("loaded " + std::to_string(bench.data.size()) + " samples, " + std::to_string(stream.num_tasks()) + " tasks");

  SweepReport report;

  // Teacher: shared by every episode that needs difficulty scores.
  bool need_teacher = false;
  for (const auto& v : spec.values) need_teacher = need_teacher || config_for(spec, v, 0).needs_difficulty();
  std::optional<SmallCnn> teacher;
  std::unique_ptr<PenultimateExtractor> extractor;
  fs::path teacher_path;
  std::string teacher_digest;
  if (need_teacher) {
    teacher_path = spec.teacher.checkpoint.empty() ? spec.out / "teacher.rcnn" : spec.teacher.checkpoint;
    CnnConfig net;
    net.num_classes = bench.data.num_classes();
    if (!spec.teacher.checkpoint.empty() && fs::exists(teacher_path)) {
      teacher.emplace(net, 0);
      load_checkpoint(*teacher, teacher_path);
      log("loaded teacher " + teacher_path.string());
    } else {
      EpisodeConfig tcfg = spec.controls;
      tcfg.seed = spec.teacher.seed;
      if (spec.teacher.max_epochs) tcfg.max_epochs = *spec.teacher.max_epochs;
      log("training teacher for up to " + std::to_string(tcfg.max_epochs) + " epochs");
      TeacherOptions opts{spec.teacher.min_train_accuracy, teacher_path};
      teacher.emplace(pretrain_teacher(bench, stream, tcfg, opts, &report.warnings));
      for (const auto& w : report.warnings) log("warning: " + w);
    }
    teacher_digest = hex64(checkpoint_digest(*teacher));
    extractor = std::make_unique<PenultimateExtractor>(*teacher);
  }
  const DifficultyContext ctx{teacher ? &*teacher : nullptr, extractor.get()};

  std::vector<Job> jobs;
  for (const auto& v : spec.values) {
    for (auto seed : spec.seeds) jobs.push_back({Job::Kind::episode, v, seed});
  }
  if (spec.offline) {
    for (auto seed : spec.seeds) jobs.push_back({Job::Kind::offline, "", seed});
  }

  std::vector<JobOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      JobOutcome& out = outcomes[i];
      const auto t0 = std::chrono::steady_clock::now();
      if (job.kind == Job::Kind::offline) {
        out.offline.seed = job.seed;
        try {
          EpisodeConfig cfg = spec.controls;
          cfg.seed = job.seed;
          out.offline.test_accuracy = run_offline(bench, stream, cfg);
          log("offline seed " + std::to_string(job.seed) + ": " + num(*out.offline.test_accuracy));
        } catch (const std::exception& e) {
          out.offline.status = std::string("failed: ") + e.what();
          log("offline seed " + std::to_string(job.seed) + " " + out.offline.status);
        }
        continue;
      }

      EpisodeRecord rec;
      rec.dataset = spec.dataset;
      rec.class_order_seed = spec.class_order_seed;
      rec.precision = std::string(precision_tag());
      const fs::path dir = spec.out / "episodes" / dir_name(job.value, job.seed);
      try {
        rec.config = config_for(spec, job.value, job.seed);
        if (rec.config.needs_difficulty()) {
          rec.teacher_checkpoint = teacher_path;
          rec.teacher_digest = teacher_digest;
        }
        fs::create_directories(dir);
        write_text(dir / "episode.json", rec.to_json().dump(2) + "\n");
        // Run task by task so that wall time is attributable per task.
        EpisodeHooks hooks;
        if (spec.checkpoints) hooks.checkpoint_dir = dir / "checkpoints";
        EpisodeState state = start_episode(bench, rec.config);
        std::vector<std::int64_t> wall;
        for (std::size_t t = 0; t < stream.num_tasks(); ++t) {
          const auto ts = std::chrono::steady_clock::now();
          try {
            train_task(state, bench, stream, t, rec.config, ctx, hooks);
          } catch (...) {
            wall.push_back(std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - ts).count());
            // Emit rows for what was completed, then propagate.
            const RunMetrics partial = RunMetrics::from(state.accuracy);
            for (std::size_t k = 0; k < stream.num_tasks(); ++k) {
              ResultRow row{job.value, job.seed, k + 1, {}, {}, {}, {}, k < wall.size() ? wall[k] : 0, ""};
              if (k < partial.avg_accu.size()) {
                row.forget_rel = partial.forget_rel[k];
                row.forget_abs = partial.forget_abs[k];
                row.avg_accu = partial.avg_accu[k];
                row.epochs = state.epochs_used[k];
              }
              out.rows.push_back(row);
            }
            throw;
          }
          wall.push_back(std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - ts).count());
        }
        const RunMetrics m = RunMetrics::from(state.accuracy);
        std::ostringstream events, acc;
        write_event_log(events, rec.config, state.events);
        write_accuracy(acc, state.accuracy);
        write_text(dir / "events.log", events.str());
        write_text(dir / "buffer.txt", state.buffer_dump);
        write_text(dir / "accuracy.txt", acc.str());
        write_text(dir / "metrics.txt", metrics_text(m));
        for (std::size_t k = 0; k < stream.num_tasks(); ++k) {
          out.rows.push_back({job.value, job.seed, k + 1, m.forget_rel[k], m.forget_abs[k], m.avg_accu[k],
                              state.epochs_used[k], wall[k], "ok"});
        }
        const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log(to_string(spec.axis) + "=" + job.value + " seed " + std::to_string(job.seed) + ": avg_accu " +
            num(m.mean_avg_accu()) + ", F " + num(m.mean_forget()) + " (" + std::to_string(static_cast<int>(secs)) + " s)");
      } catch (const std::exception& e) {
        const std::string status = std::string("failed: ") + e.what();
        if (out.rows.empty()) {
          for (std::size_t k = 0; k < stream.num_tasks(); ++k) {
            out.rows.push_back({job.value, job.seed, k + 1, {}, {}, {}, {}, 0, status});
          }
        }
        for (auto& r : out.rows) r.status = status;
        log(to_string(spec.axis) + "=" + job.value + " seed " + std::to_string(job.seed) + " " + status);
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n_threads = std::min(spec.jobs, jobs.size());
  for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Single collector: outputs are written in job order.
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (jobs[i].kind == Job::Kind::episode) {
      report.rows.insert(report.rows.end(), outcomes[i].rows.begin(), outcomes[i].rows.end());
    } else {
      report.offline.push_back(outcomes[i].offline);
    }
  }
  for (const auto& r : report.rows) {
    if (r.status != "ok") report.exit_code = 2;
  }
  for (const auto& o : report.offline) {
    if (o.status != "ok") report.exit_code = 2;
  }
  report.summary = summarize(report.rows, spec.values);

  write_results_csv(spec.out / "results.csv", report.rows);

  std::optional<double> offline_mean;
  {
    double s = 0;
    std::size_t n = 0;
    std::ostringstream off;
    off << "seed,test_accuracy,status\n";
    for (const auto& o : report.offline) {
      off << o.seed << ',' << (o.test_accuracy ? num(*o.test_accuracy) : "") << ',' << sanitize(o.status) << '\n';
      if (o.test_accuracy) {
        s += *o.test_accuracy;
        ++n;
      }
    }
    if (n) offline_mean = s / static_cast<double>(n);
    if (spec.offline) write_text(spec.out / "offline.csv", off.str());
  }

  std::ostringstream sum;
  sum << "# dataset " << to_string(spec.dataset.preset)
      << (spec.dataset.subset ? " subset " + std::to_string(*spec.dataset.subset) + "/class" : std::string(" full"))
      << '\n'
      << "# axis " << to_string(spec.axis) << '\n'
      << "# seeds " << spec.seeds.size()
      << (spec.dataset.preset == Preset::c10 ? " (reference protocol uses 20 seeds)" : " (reference protocol uses 4 seeds)")
      << '\n'
      << "# precision " << precision_tag() << '\n'
      << "# forgetting_chart " << to_string(spec.forgetting) << '\n';
  if (offline_mean) sum << "# offline_mean_accu " << num(*offline_mean) << '\n';
  sum << kSummaryHeader << '\n';
  for (const auto& s : report.summary) {
    sum << s.axis_value << ',' << num(s.mean_forget_rel) << ',' << num(s.mean_avg_accu) << ',' << s.n_seeds << '\n';
  }
  write_text(spec.out / "summary.csv", sum.str());

  write_text(spec.out / "avg_accu.svg", svg::render(make_chart(spec, report.rows, true, offline_mean)));
  write_text(spec.out / "forgetting.svg", svg::render(make_chart(spec, report.rows, false, std::nullopt)));
  return report;
}

// ---------------------------------------------------------------- replay

std::optional<VerifyReport> compare_artifact(const std::string& name, const std::string& expected,
                                             const std::string& actual) {
  if (expected == actual) return std::nullopt;
  std::istringstream a(expected), b(actual);
  std::string la, lb;
  std::size_t line = 0;
  while (true) {
    ++line;
    const bool ha = static_cast<bool>(std::getline(a, la));
    const bool hb = static_cast<bool>(std::getline(b, lb));
    if (!ha && !hb) break;
    if (ha && hb && la == lb) continue;
    VerifyReport r;
    r.verdict = Verdict::divergent;
    r.artifact = name;
    r.line = line;
    const std::string& probe = ha ? la : lb;
    if (!probe.empty() && probe[0] != '#') {
      try {
        r.task = std::stoul(probe);
      } catch (const std::exception&) {
      }
    }
    r.detail = "expected '" + (ha ? la : std::string("<eof>")) + "', got '" + (hb ? lb : std::string("<eof>")) + "'";
    return r;
  }
  VerifyReport r;
  r.verdict = Verdict::divergent;
  r.artifact = name;
  r.detail = "byte-level difference (line endings)";
  return r;
}

VerifyReport replay_run(const fs::path& episode_dir) {
  const EpisodeRecord rec = EpisodeRecord::from_json(json::parse(read_text(episode_dir / "episode.json")));
  const bool same_precision = rec.precision == precision_tag();

  const Benchmark bench = load_benchmark(rec.dataset.preset, rec.dataset.dir, rec.dataset.subset, rec.dataset.split_seed);
  const TaskStream stream =
      make_stream(bench.data, bench.splits, preset_info(rec.dataset.preset).classes_per_task, rec.class_order_seed);

  std::optional<SmallCnn> teacher;
  std::unique_ptr<PenultimateExtractor> extractor;
  if (!rec.teacher_checkpoint.empty()) {
    CnnConfig net;
    net.num_classes = bench.data.num_classes();
    teacher.emplace(net, 0);
    load_checkpoint(*teacher, rec.teacher_checkpoint);
    if (same_precision && hex64(checkpoint_digest(*teacher)) != rec.teacher_digest) {
      return {Verdict::divergent, "teacher", 0, std::nullopt, "teacher checkpoint digest changed"};
    }
    extractor = std::make_unique<PenultimateExtractor>(*teacher);
  }
  const DifficultyContext ctx{teacher ? &*teacher : nullptr, extractor.get()};
  const EpisodeResult r = run_episode(bench, stream, rec.config, ctx);

  std::ostringstream events, acc;
  write_event_log(events, rec.config, r.events);
  write_accuracy(acc, r.accuracy);
  const std::vector<std::pair<std::string, std::string>> artifacts{
      {"buffer.txt", r.buffer_dump}, {"accuracy.txt", acc.str()}, {"metrics.txt", metrics_text(r.metrics)},
      {"events.log", events.str()}};
  for (const auto& [name, fresh] : artifacts) {
    if (auto diff = compare_artifact(name, read_text(episode_dir / name), fresh)) {
      if (!same_precision) {
        diff->verdict = Verdict::expected_divergence;
        diff->detail = "recorded with " + rec.precision + ", replayed with " + std::string(precision_tag()) + ": " +
                       diff->detail;
      }
      return *diff;
    }
  }
  return {};
}

}  // namespace rc
