// rcl: run replay-curriculum sweeps, verify recorded episodes, generate data.
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rc/runner.hpp"
#include "rc/synthetic.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct SweepFlags {
  std::string config;
  std::optional<std::string> dataset, data_dir, axis, values, seeds, order, metric, selection, forgetting, out;
  std::optional<std::string> teacher_checkpoint;
  std::optional<std::size_t> subset, divisions, buffer_capacity, max_epochs, patience, jobs, teacher_epochs;
  std::optional<std::uint64_t> class_order_seed, teacher_seed;
  bool no_offline = false, checkpoints = false, quiet = false;
};

rc::ExperimentSpec build_spec(const SweepFlags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw rc::ConfigError("cannot read config " + f.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw rc::ConfigError(f.config + ": " + e.what());
    }
  }
  // Preset must be known before defaults are applied, so it goes through JSON.
  if (f.dataset) j["dataset"]["preset"] = *f.dataset;
  rc::ExperimentSpec s = rc::ExperimentSpec::from_json(j);

  if (f.data_dir) s.dataset.dir = *f.data_dir;
  if (f.subset) s.dataset.subset = *f.subset;
  if (f.axis) {
    const auto axis = rc::parse_axis(*f.axis);
    if (axis != s.axis) s.values.clear();
    s.axis = axis;
  }
  if (f.values) s.values = split_list(*f.values);
  if (f.seeds) {
    s.seeds.clear();
    for (const auto& v : split_list(*f.seeds)) s.seeds.push_back(std::stoull(v));
  }
  if (f.divisions) s.controls.divisions = *f.divisions;
  if (f.order) s.controls.order = rc::parse_order(*f.order);
  if (f.metric) s.controls.metric = rc::parse_metric(*f.metric);
  if (f.selection) s.controls.selection = rc::parse_strategy(*f.selection);
  if (f.buffer_capacity) s.controls.buffer_capacity = *f.buffer_capacity;
  if (f.max_epochs) s.controls.max_epochs = *f.max_epochs;
  if (f.patience) s.controls.patience = *f.patience;
  if (f.forgetting) s.forgetting = rc::parse_forgetting(*f.forgetting);
  if (f.out) s.out = *f.out;
  if (f.jobs) s.jobs = *f.jobs;
  if (f.class_order_seed) s.class_order_seed = *f.class_order_seed;
  if (f.teacher_checkpoint) s.teacher.checkpoint = *f.teacher_checkpoint;
  if (f.teacher_epochs) s.teacher.max_epochs = *f.teacher_epochs;
  if (f.teacher_seed) s.teacher.seed = *f.teacher_seed;
  if (f.no_offline) s.offline = false;
  if (f.checkpoints) s.checkpoints = true;
  if (s.dataset.dir.empty()) {
    if (const char* env = std::getenv("RC_DATA_DIR")) s.dataset.dir = env;
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replay curriculum experiments for class-incremental learning"};
  app.require_subcommand(1);

  SweepFlags f;
  auto* sweep = app.add_subcommand("sweep", "run one sweep over a single axis");
  sweep->add_option("--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
  sweep->add_option("--dataset", f.dataset, "preset: c10 or c100");
  sweep->add_option("--data-dir", f.data_dir, "directory with the binary dataset files (or $RC_DATA_DIR)");
  sweep->add_option("--subset", f.subset, "training images per class");
  sweep->add_option("--axis", f.axis, "divisions, order or selection");
  sweep->add_option("--values", f.values, "comma separated axis values");
  sweep->add_option("--seeds", f.seeds, "comma separated run seeds");
  sweep->add_option("--divisions", f.divisions, "interleave divisions d");
  sweep->add_option("--order", f.order, "rehearsal order, e.g. easy_to_hard:instance:confidence or unsorted");
  sweep->add_option("--metric", f.metric, "difficulty metric for selection: confidence or distance");
  sweep->add_option("--selection", f.selection, "random, easiest, hardest or uniform");
  sweep->add_option("--buffer-capacity", f.buffer_capacity, "replay buffer capacity (default 1200)");
  sweep->add_option("--max-epochs", f.max_epochs, "epoch cap per task");
  sweep->add_option("--patience", f.patience, "saturation patience (default 5)");
  sweep->add_option("--forgetting", f.forgetting, "relative or absolute (charts)");
  sweep->add_option("--out", f.out, "output directory");
  sweep->add_option("--jobs", f.jobs, "episodes run in parallel");
  sweep->add_option("--class-order-seed", f.class_order_seed, "seed of the class-to-task permutation");
  sweep->add_option("--teacher-checkpoint", f.teacher_checkpoint, "teacher weights, reused if the file exists");
  sweep->add_option("--teacher-epochs", f.teacher_epochs, "epoch cap for teacher training");
  sweep->add_option("--teacher-seed", f.teacher_seed, "teacher initialisation seed");
  sweep->add_flag("--no-offline", f.no_offline, "skip the offline upper bound");
  sweep->add_flag("--checkpoints", f.checkpoints, "save model weights after each task");
  sweep->add_flag("-q,--quiet", f.quiet, "no progress output");

  std::string episode_dir;
  auto* replay = app.add_subcommand("replay", "re-execute a recorded episode and compare its dumps");
  replay->add_option("episode_dir", episode_dir, "directory containing episode.json")->required()->check(CLI::ExistingDirectory);

  std::string synth_out, synth_variant = "c10";
  rc::SyntheticSpec synth_spec;
  auto* synth = app.add_subcommand("synth", "write a procedural dataset in the CIFAR binary layout");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--variant", synth_variant, "c10 or c100");
  synth->add_option("--train-per-class", synth_spec.train_per_class, "training images per class");
  synth->add_option("--test-per-class", synth_spec.test_per_class, "test images per class");
  synth->add_option("--seed", synth_spec.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep) {
      rc::ExperimentSpec spec = build_spec(f);
      const rc::SweepReport report = rc::run_sweep(spec, f.quiet ? nullptr : &std::cerr);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
      if (report.exit_code != 0) std::cerr << "some episodes failed; see results.csv\n";
      return report.exit_code;
    }
    if (*replay) {
      const rc::VerifyReport r = rc::replay_run(episode_dir);
      std::cout << rc::to_string(r.verdict);
      if (r.verdict != rc::Verdict::identical) {
        std::cout << ": " << r.artifact << " line " << r.line;
        if (r.task) std::cout << " (task " << *r.task << ")";
        std::cout << ": " << r.detail;
      }
      std::cout << '\n';
      return r.verdict == rc::Verdict::divergent ? 1 : 0;
    }
    if (*synth) {
      synth_spec.variant = rc::parse_variant(synth_variant);
      rc::write_synthetic_dataset(synth_out, synth_spec);
      std::cout << "wrote " << synth_out << '\n';
      return 0;
    }
  } catch (const rc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
