#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>


#include "rc/difficulty.hpp"
#include "rc/metrics.hpp"
#include "rc/nn.hpp"
#include "rc/replay.hpp"
#include "rc/runner.hpp"
#include "rc/synthetic.hpp"

namespace py = pybind11;
using namespace rc;

namespace {

using ArrayF64 = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::list scores_to_list(const std::vector<DifficultyScore>& scores) {
  py::list out;
  for (const auto& s : scores) {
    py::dict d;
    d["sample_id"] = s.sample_id;
    d["metric"] = to_string(s.metric);
    d["raw"] = s.raw;
    d["rank"] = s.rank;
    out.append(d);
  }
  return out;
}

Tensor to_tensor(const ArrayF64& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<real>(a.data(), a.data() + a.size()));
}

py::array_t<double> from_tensor(const Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

AccuracyMatrix matrix_from_counts(const std::vector<std::vector<std::size_t>>& correct,
                                  const std::vector<std::vector<std::size_t>>& total) {
  if (correct.size() != total.size()) throw InvalidInput("correct and total must have the same number of rows");
  AccuracyMatrix a;
  for (std::size_t t = 0; t < correct.size(); ++t) a.add_row(correct[t], total[t]);
  return a;
}

py::dict summary_row(const SummaryRow& r) {
  py::dict d;
  d["axis_value"] = r.axis_value;
  d["mean_forget_rel"] = r.mean_forget_rel;
  d["mean_forget_abs"] = r.mean_forget_abs;
  d["mean_avg_accu"] = r.mean_avg_accu;
  d["n_seeds"] = r.n_seeds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Replay curricula for class-incremental learning";
  m.attr("precision") = sizeof(real) == 8 ? "f64" : "f32";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  static py::exception<MetricError> metric(m, "MetricError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(config.ptr(), e.what());
    } catch (const MetricError& e) {
      PyErr_SetString(metric.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(base.ptr(), e.what());
    }
  });

  m.def(
      "build_schedule",
      [](const std::vector<SampleId>& task_ids, const std::vector<SampleId>& replay_ids, std::size_t divisions,
         std::uint64_t seed, bool replay_sorted) {
        const auto s = build_schedule(task_ids, replay_ids, divisions, seed, replay_sorted);
        py::list out;
        for (const auto& g : s.groups)
          out.append(py::make_tuple(g.kind == ScheduleGroup::Kind::current ? "current" : "replay", g.ids));
        return out;
      },
      py::arg("task_ids"), py::arg("replay_ids"), py::arg("divisions"), py::arg("seed") = 0,
      py::arg("replay_sorted") = false, "One epoch's interleave schedule as a list of (kind, ids) groups.");

  m.def(
      "distance_scores",
      [](const std::vector<SampleId>& ids, const ArrayF64& features) {
        if (features.ndim() != 2 || static_cast<std::size_t>(features.shape(0)) != ids.size())
          throw InvalidInput("features must be a 2-D array with one row per id");
        return scores_to_list(distance_from_features(
            ids, std::span<const double>(features.data(), static_cast<std::size_t>(features.size())),
            static_cast<std::size_t>(features.shape(1))));
      },
      py::arg("ids"), py::arg("features"), "Summed Euclidean distance to every other sample; rank 0 is easiest.");

  m.def(
      "confidence_scores",
      [](const std::vector<SampleId>& ids, const std::vector<int>& labels, const ArrayF64& probs) {
        if (probs.ndim() != 2 || static_cast<std::size_t>(probs.shape(0)) != ids.size())
          throw InvalidInput("probs must be a 2-D array with one row per id");
        return scores_to_list(confidence_from_probabilities(
            ids, labels, std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())),
            static_cast<std::size_t>(probs.shape(1))));
      },
      py::arg("ids"), py::arg("labels"), py::arg("probs"), "Softmax probability of the true class; rank 0 is easiest.");

  m.def("uniform_pick_indices", &uniform_pick_indices, py::arg("n"), py::arg("k"));
  m.def("class_quotas", &class_quotas, py::arg("capacity"), py::arg("classes"));

  m.def(
      "forgetfulness",
      [](const std::vector<std::vector<double>>& percent, std::size_t t, const std::string& mode) {
        return forgetfulness(AccuracyMatrix::from_percent(percent), t, parse_forgetting(mode));
      },
      py::arg("percent"), py::arg("t"), py::arg("mode") = "relative",
      "F_t from a lower-triangular table of percentages.");

  m.def(
      "avg_accuracy",
      [](const std::vector<std::vector<std::size_t>>& correct, const std::vector<std::vector<std::size_t>>& total,
         std::size_t t) { return avg_accuracy(matrix_from_counts(correct, total), t); },
      py::arg("correct"), py::arg("total"), py::arg("t"), "Pooled accuracy over tasks 0..t from per-task counts.");

  m.def(
      "run_metrics",
      [](const std::vector<std::vector<std::size_t>>& correct, const std::vector<std::vector<std::size_t>>& total) {
        const auto r = RunMetrics::from(matrix_from_counts(correct, total));
        py::dict d;
        d["forget_rel"] = r.forget_rel;
        d["forget_abs"] = r.forget_abs;
        d["avg_accu"] = r.avg_accu;
        return d;
      },
      py::arg("correct"), py::arg("total"));

  py::class_<SmallCnn>(m, "SmallCnn")
      .def(py::init([](std::size_t num_classes, std::uint64_t seed) {
             CnnConfig c;
             c.num_classes = num_classes;
             return SmallCnn(c, seed);
           }),
           py::arg("num_classes") = 10, py::arg("seed") = 0)
      .def("forward", [](const SmallCnn& m, const ArrayF64& x) { return from_tensor(m.forward(to_tensor(x))); })
      .def("features", [](const SmallCnn& m, const ArrayF64& x) { return from_tensor(m.features(to_tensor(x))); })
      .def_property_readonly("parameter_count", &SmallCnn::parameter_count)
      .def_property_readonly("num_classes", &SmallCnn::num_classes);

  m.def(
      "write_synthetic_dataset",
      [](const std::filesystem::path& dir, const std::string& variant, std::size_t train_per_class,
         std::size_t test_per_class, std::uint64_t seed) {
        SyntheticSpec s;
        s.variant = variant == "c100" ? Variant::c100 : Variant::c10;
        if (variant != "c10" && variant != "c100") throw ConfigError("unknown variant '" + variant + "'");
        s.train_per_class = train_per_class;
        s.test_per_class = test_per_class;
        s.seed = seed;
        write_synthetic_dataset(dir, s);
      },
      py::arg("dir"), py::arg("variant") = "c10", py::arg("train_per_class") = 500, py::arg("test_per_class") = 200,
      py::arg("seed") = 2024);

  m.def(
      "run_sweep_json",
      [](const std::string& config) {
        ExperimentSpec spec;
        try {
          spec = ExperimentSpec::from_json(nlohmann::json::parse(config));
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(e.what());
        }
        SweepReport r;
        {
          py::gil_scoped_release release;
          r = run_sweep(std::move(spec));
        }
        py::dict d;
        d["exit_code"] = r.exit_code;
        py::list summary;
        for (const auto& row : r.summary) summary.append(summary_row(row));
        d["summary"] = summary;
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("config"), "Run a sweep described by a JSON config string.");

  m.def(
      "replay_run",
      [](const std::filesystem::path& episode_dir) {
        VerifyReport r;
        {
          py::gil_scoped_release release;
          r = replay_run(episode_dir);
        }
        py::dict d;
        d["verdict"] = to_string(r.verdict);
        d["artifact"] = r.artifact;
        d["line"] = r.line;
        d["task"] = r.task ? py::cast(*r.task) : py::none();
        d["detail"] = r.detail;
        return d;
      },
      py::arg("episode_dir"), "Re-execute a recorded episode and compare its dumps.");
}
