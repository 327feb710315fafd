// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.
//
// Criteria 1-5 and 10 run in-process on the 64-bit core. Criteria 6-9 drive
// the 32-bit CLI (rcl32) as a subprocess on a desk-scale ciFAIR-10 subset:
// RC_CIFAR10_DIR if set, otherwise a synthetic stand-in generated in the work dir.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "rc/difficulty.hpp"
#include "rc/metrics.hpp"
#include "rc/replay.hpp"
#include "rc/runner.hpp"
#include "rc/synthetic.hpp"

namespace fs = std::filesystem;
using namespace rc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::vector<SampleId> ids_from(SampleId first, std::size_t n) {
  std::vector<SampleId> v(n);
  std::iota(v.begin(), v.end(), first);
  return v;
}

// 1 -------------------------------------------------------------------------

Outcome numerical_core() {
  static_assert(sizeof(real) == 8, "criterion 1 runs on the 64-bit core");
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  const double conv = oracle::fd_conv(rng, 20);
  const double fc = oracle::fd_linear(rng, 20);
  const double relu = oracle::fd_relu(rng, 20);
  const double ce = oracle::fd_cross_entropy(rng, 20);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double worst = std::max({conv, fc, relu, ce});
  return {worst < 1e-4 && secs < 60,
          "max rel err conv " + sci(conv) + " fc " + sci(fc) + " relu " + sci(relu) + " ce " + sci(ce) +
              " (< 1e-4), " + fmt(secs, 1) + " s (< 60 s)"};
}

// 2 -------------------------------------------------------------------------

Outcome oracle_equivalence() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> g(0, 3);
  double worst = 0;
  bool ranks_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 63, dim = 1 + rng() % 84;
    std::vector<double> f(n * dim);
    for (auto& v : f) v = g(rng);
    const auto ids = ids_from(500, n);
    const auto s = distance_from_features(ids, f, dim);
    const auto raw = oracle::brute_force_raws(f, n, dim);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(s[i].raw - raw[i]));
    std::set<std::size_t> ranks;
    for (const auto& x : s) ranks.insert(x.rank);
    ranks_ok = ranks_ok && ranks.size() == n && *ranks.rbegin() == n - 1;
  }
  const SampleId hand_ids[] = {1, 2, 3};
  const double hand[] = {0, 0, 3, 4, 0, 8};
  const auto h = distance_from_features(hand_ids, hand, 2);
  const bool hand_ok = h[0].raw == 13 && h[1].raw == 10 && h[2].raw == 13;
  return {worst <= 1e-9 && ranks_ok && hand_ok,
          "max |raw - oracle| " + sci(worst) + " over 100 sets (<= 1e-9), hand case (" + fmt(h[0].raw, 0) + "," +
              fmt(h[1].raw, 0) + "," + fmt(h[2].raw, 0) + ")"};
}

// 3 -------------------------------------------------------------------------

Outcome scheduler_properties() {
  std::mt19937_64 rng(303);
  std::size_t bad = 0;
  std::string first;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t nd = 1 + rng() % 400;
    const std::size_t nr = rng() % 5 == 0 ? 0 : 1 + rng() % 250;
    const std::size_t d = 1 + rng() % (nr ? std::min(nd, nr) : nd);
    const auto D = ids_from(0, nd), R = ids_from(100'000, nr);
    const auto s = build_schedule(D, R, d, rng(), rng() % 2);
    const std::string v = oracle::schedule_violation(s, D, R, d);
    if (!v.empty()) {
      if (first.empty()) first = v + " at |D|=" + std::to_string(nd) + " |R|=" + std::to_string(nr) +
                                 " d=" + std::to_string(d);
      ++bad;
    }
  }
  const auto one = build_schedule(ids_from(0, 30), ids_from(100, 9), 1, 5, false);
  const bool d1 = one.groups.size() == 2 && one.groups[0].ids.size() == 30 && one.groups[1].ids.size() == 9;
  return {bad == 0 && d1, std::to_string(500 - bad) + "/500 triples exhaustive, alternating and balanced" +
                              (first.empty() ? "" : " (first failure: " + first + ")") + ", d=1 gives " +
                              std::to_string(one.groups.size()) + " blocks"};
}

// 4 -------------------------------------------------------------------------

Outcome buffer_properties() {
  std::mt19937_64 rng(404);
  const Strategy strategies[] = {Strategy::random, Strategy::easiest, Strategy::hardest, Strategy::uniform};
  std::size_t over_capacity = 0, unbalanced = 0, updates = 0;
  for (int episode = 0; episode < 200; ++episode) {
    const Strategy st = strategies[episode % 4];
    const std::size_t tasks = 1 + rng() % 10, per_task = 1 + rng() % 5;
    const std::size_t capacity = tasks * per_task + rng() % 300;
    ReplayBuffer buf(capacity, st);
    SampleId next = 0;
    int next_class = 0;
    for (std::size_t t = 0; t < tasks; ++t) {
      std::vector<int> classes;
      std::vector<BufferEntry> finished;
      for (std::size_t c = 0; c < per_task; ++c) {
        classes.push_back(next_class);
        // Every class holds at least `capacity` samples so any quota can be met.
        const std::size_t n = capacity + rng() % 20;
        for (std::size_t i = 0; i < n; ++i) finished.push_back({next++, next_class});
        ++next_class;
      }
      std::vector<SampleId> scored;
      for (const auto& e : finished) scored.push_back(e.id);
      for (SampleId id : buf.ids()) scored.push_back(id);
      std::uniform_real_distribution<double> u(0, 1);
      std::vector<DifficultyScore> scores;
      for (SampleId id : scored) scores.push_back({id, Metric::confidence, u(rng), 0});
      assign_ranks(scores);
      buf = update_buffer(buf, finished, classes, scores, rng());
      ++updates;
      over_capacity += buf.size() > capacity;
      const auto counts = buf.class_counts();
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      unbalanced += *hi - *lo > 1;
    }
  }
  const auto picks = uniform_pick_indices(10, 5);
  const bool pick_ok = picks == std::vector<std::size_t>{0, 2, 5, 7, 9};
  std::string shown;
  for (std::size_t p : picks) shown += (shown.empty() ? "" : ",") + std::to_string(p);
  return {over_capacity == 0 && unbalanced == 0 && pick_ok,
          std::to_string(updates) + " updates over 200 episodes: " + std::to_string(over_capacity) +
              " over capacity, " + std::to_string(unbalanced) + " with class spread > 1; uniform(n=10,k=5) = {" +
              shown + "}"};
}

// 5 -------------------------------------------------------------------------

Outcome metric_identities() {
  std::mt19937_64 rng(505);
  std::size_t f1_bad = 0, const_bad = 0;
  for (int run = 0; run < 200; ++run) {
    const std::size_t T = 1 + rng() % 20;
    const std::size_t n0 = 10 + rng() % 200, c0 = 1 + rng() % n0;
    AccuracyMatrix random, constant;
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<std::size_t> c{t == 0 ? c0 : rng() % (n0 + 1)}, n{n0};
      std::vector<std::size_t> kc{c0}, kn{n0};
      for (std::size_t i = 1; i <= t; ++i) {
        const std::size_t m = 10 + rng() % 200;
        n.push_back(m);
        c.push_back(rng() % (m + 1));
        kn.push_back(m);
        kc.push_back(rng() % (m + 1));
      }
      random.add_row(c, n);
      constant.add_row(kc, kn);
    }
    const auto m = RunMetrics::from(random);
    f1_bad += m.forget_rel.front() != 0.0 || m.forget_abs.front() != 0.0;
    const auto k = RunMetrics::from(constant);
    for (std::size_t t = 0; t < T; ++t) const_bad += k.forget_rel[t] != 0.0 || k.forget_abs[t] != 0.0;
  }
  const auto worked = AccuracyMatrix::from_percent({{80}, {40, 90}});
  const double f = forgetfulness(worked, 1);
  AccuracyMatrix pooled;
  pooled.add_row({90}, {100});
  pooled.add_row({60, 80}, {100, 100});
  const double acc = avg_accuracy(pooled, 1);
  return {f1_bad == 0 && const_bad == 0 && f == 50.0 && acc == 70.0,
          "F_1 != 0 in " + std::to_string(f1_bad) + "/200 runs, constant-accuracy F != 0 in " +
              std::to_string(const_bad) + " entries, 80->40 gives " + fmt(f, 1) +
              ", pooled 60/80 gives " + fmt(acc, 1)};
}

// 10 ------------------------------------------------------------------------

Outcome reproducibility(const fs::path& work) {
  static_assert(sizeof(real) == 8, "criterion 10 runs on the 64-bit core");
  const fs::path root = work / "replay";
  fs::remove_all(root);
  SyntheticSpec data;
  data.train_per_class = 12;
  data.test_per_class = 4;
  write_synthetic_dataset(root / "data", data);

  ExperimentSpec spec;
  spec.dataset.dir = root / "data";
  spec.dataset.subset = 8;
  spec.axis = SweepAxis::order;
  spec.values = {"easy_to_hard:instance:confidence"};
  spec.controls.selection = Strategy::uniform;
  spec.controls.max_epochs = 2;
  spec.controls.buffer_capacity = 20;
  spec.controls.sgd.batch_size = 8;
  spec.teacher.max_epochs = 1;
  spec.seeds = {4};
  spec.offline = false;
  spec.out = root / "sweep";
  const SweepReport report = run_sweep(spec);
  if (report.exit_code != 0) return {false, "toy sweep failed"};

  fs::path episode;
  for (const auto& e : fs::directory_iterator(spec.out / "episodes")) episode = e.path();
  const VerifyReport same = replay_run(episode);

  // Negative control: a single changed buffer entry must be caught.
  const fs::path tampered = root / "tampered";
  fs::copy(episode, tampered, fs::copy_options::recursive);
  std::string text;
  {
    std::ifstream in(tampered / "buffer.txt");
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto line = text.find("\n2 ");
  const auto id_end = text.find(' ', line + 3);
  text.replace(line + 3, id_end - line - 3, "999999");
  std::ofstream(tampered / "buffer.txt") << text;
  const VerifyReport caught = replay_run(tampered);

  return {same.verdict == Verdict::identical && caught.verdict == Verdict::divergent,
          "replay of seed-4 toy episode: " + to_string(same.verdict) + "; tampered buffer: " +
              to_string(caught.verdict) + (caught.task ? " at task " + std::to_string(*caught.task) : "")};
}

// 6-9 -----------------------------------------------------------------------

struct DeskSweep {
  bool ok = false;
  std::string error;
  std::map<std::string, SummaryRow> summary;
  std::vector<double> offline;

  double offline_mean() const {
    return offline.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : std::accumulate(offline.begin(), offline.end(), 0.0) / static_cast<double>(offline.size());
  }
};

struct Desk {
  fs::path rcl32;
  fs::path work;
  fs::path data;
  std::size_t jobs = 1;

  std::string quote(const fs::path& p) const { return "'" + p.string() + "'"; }

  DeskSweep sweep(const std::string& name, const std::string& axis, const std::string& values,
                  const std::string& extra) const {
    DeskSweep r;
    const fs::path out = work / name;
    fs::remove_all(out);
    const std::string cmd = quote(rcl32) + " sweep --dataset c10 --data-dir " + quote(data) +
                            " --subset 500 --buffer-capacity 200 --max-epochs 30 --seeds 0,1,2 --axis " + axis +
                            " --values " + values + " --teacher-checkpoint " + quote(work / "teacher.rcnn") +
                            " --jobs " + std::to_string(jobs) + " --out " + quote(out) + " " + extra + " > " +
                            quote(work / (name + ".log")) + " 2>&1";
    std::cout << "  running " << name << " sweep (log: " << (work / (name + ".log")).string() << ")" << std::endl;
    const int status = std::system(cmd.c_str());
    if (status != 0) {
      r.error = name + " sweep exited with status " + std::to_string(status);
      return r;
    }
    try {
      for (const auto& row : read_summary_csv(out / "summary.csv")) r.summary[row.axis_value] = row;
      std::ifstream in(out / "offline.csv");
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string seed, acc, status_field;
        std::getline(ss, seed, ',');
        std::getline(ss, acc, ',');
        std::getline(ss, status_field);
        if (status_field == "ok") r.offline.push_back(std::stod(acc));
      }
    } catch (const std::exception& e) {
      r.error = name + ": " + e.what();
      return r;
    }
    r.ok = true;
    return r;
  }
};

std::string mean_of(const DeskSweep& s, const std::string& key, double& v) {
  const auto it = s.summary.find(key);
  if (it == s.summary.end() || it->second.n_seeds != 3) return "missing summary for " + key;
  v = it->second.mean_avg_accu;
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  fs::path work = fs::temp_directory_path() / "rc_acceptance";
  std::string only;
  fs::path rcl32 = RC_RCL32;
  app.add_option("--work-dir", work, "scratch directory for desk-scale runs");
  app.add_option("--only", only, "comma-separated criterion numbers to run");
  app.add_option("--rcl32", rcl32, "path to the 32-bit CLI");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  {
    std::stringstream ss(only);
    std::string tok;
    while (std::getline(ss, tok, ',')) selected.insert(std::stoi(tok));
  }
  auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int n, const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << name << ": " << o.detail << std::endl;
    failures += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("error: ") + e.what()};
    }
  };

  if (wanted(1)) report(1, "numerical core", guarded(numerical_core));
  if (wanted(2)) report(2, "distance oracle equivalence", guarded(oracle_equivalence));
  if (wanted(3)) report(3, "scheduler properties", guarded(scheduler_properties));
  if (wanted(4)) report(4, "buffer properties", guarded(buffer_properties));
  if (wanted(5)) report(5, "metric identities", guarded(metric_identities));

  if (wanted(6) || wanted(7) || wanted(8) || wanted(9)) {
    Desk desk;
    desk.rcl32 = rcl32;
    desk.work = work / "desk";
    desk.jobs = std::max(1u, std::thread::hardware_concurrency());
    fs::create_directories(desk.work);
    if (const char* real_data = std::getenv("RC_CIFAR10_DIR")) {
      desk.data = real_data;
      std::cout << "  desk data: " << desk.data.string() << std::endl;
    } else {
      desk.data = desk.work / "data";
      fs::remove_all(desk.data);
      const std::string cmd = desk.quote(rcl32) + " synth --out " + desk.quote(desk.data) + " > " +
                              desk.quote(desk.work / "synth.log") + " 2>&1";
      std::cout << "  desk data: synthetic stand-in (RC_CIFAR10_DIR unset)" << std::endl;
      if (std::system(cmd.c_str()) != 0) std::cout << "  synthetic data generation failed" << std::endl;
    }
    fs::remove(desk.work / "teacher.rcnn");

    const std::string e2h = "easy_to_hard:instance:confidence", h2e = "hard_to_easy:instance:confidence";
    const DeskSweep div = desk.sweep("divisions", "divisions", "1,50", "");
    const DeskSweep ord = desk.sweep("order", "order", e2h + "," + h2e, "--divisions 50");
    const DeskSweep sel = desk.sweep("selection", "selection", "hardest,uniform,easiest", "--divisions 50");

    if (wanted(6)) {
      Outcome o;
      double a1 = 0, a50 = 0;
      std::string err = div.ok ? mean_of(div, "1", a1) : div.error;
      if (err.empty()) err = mean_of(div, "50", a50);
      if (!err.empty()) {
        o.detail = err;
      } else {
        const double f1 = div.summary.at("1").mean_forget_rel, f50 = div.summary.at("50").mean_forget_rel;
        o.pass = a50 - a1 >= 2.0 && f50 < f1;
        o.detail = "Avg. Accu. d=50 " + fmt(a50) + " vs d=1 " + fmt(a1) + " (margin " + fmt(a50 - a1) +
                   " pp, need >= 2); F d=50 " + fmt(f50) + " vs d=1 " + fmt(f1) + " (need lower)";
      }
      report(6, "interleaving trend", o);
    }
    if (wanted(7)) {
      Outcome o;
      double a = 0, b = 0;
      std::string err = ord.ok ? mean_of(ord, e2h, a) : ord.error;
      if (err.empty()) err = mean_of(ord, h2e, b);
      if (!err.empty()) {
        o.detail = err;
      } else {
        o.pass = a - b >= 1.0;
        o.detail = "Avg. Accu. easy-to-hard " + fmt(a) + " vs hard-to-easy " + fmt(b) + " at d=50 (margin " +
                   fmt(a - b) + " pp, need >= 1)";
      }
      report(7, "ordering trend", o);
    }
    if (wanted(8)) {
      Outcome o;
      double hard = 0, uni = 0, easy = 0;
      std::string err = sel.ok ? mean_of(sel, "hardest", hard) : sel.error;
      if (err.empty()) err = mean_of(sel, "uniform", uni);
      if (err.empty()) err = mean_of(sel, "easiest", easy);
      if (!err.empty()) {
        o.detail = err;
      } else {
        o.pass = hard < uni;
        o.detail = "Avg. Accu. hardest " + fmt(hard) + " vs uniform " + fmt(uni) + " (need strictly lower); easiest " +
                   fmt(easy) + ", uniform " + (uni >= std::max(easy, hard) ? ">=" : "<") +
                   " max(easiest, hardest) (reported only)";
      }
      report(8, "selection trend", o);
    }
    if (wanted(9)) {
      Outcome o;
      if (!div.ok || !ord.ok || !sel.ok) {
        o.detail = !div.ok ? div.error : !ord.ok ? ord.error : sel.error;
      } else {
        bool all = true;
        std::string worst;
        double margin = std::numeric_limits<double>::infinity();
        for (const DeskSweep* s : {&div, &ord, &sel}) {
          if (s->offline.size() != 3) {
            all = false;
            worst = "offline baseline incomplete";
            continue;
          }
          for (const auto& [key, row] : s->summary) {
            const double m = s->offline_mean() - row.mean_avg_accu;
            all = all && m > 0;
            if (m < margin) {
              margin = m;
              worst = key + " " + fmt(row.mean_avg_accu) + " vs offline " + fmt(s->offline_mean());
            }
          }
        }
        o.pass = all;
        o.detail = "offline means " + fmt(div.offline_mean()) + "/" + fmt(ord.offline_mean()) + "/" +
                   fmt(sel.offline_mean()) + " (divisions/order/selection sweeps); closest config " + worst +
                   " (margin " + fmt(margin) + " pp, need > 0)";
      }
      report(9, "offline upper bound", o);
    }
  }

  if (wanted(10)) report(10, "reproducibility", guarded([&] { return reproducibility(work); }));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
