// Python bindings for the estimator stack. The surface mirrors the CLI's
// vocabulary: build a model, generate or load data, run the classical or the
// learned estimator over a measurement sequence, train the gate banks, and
// evaluate estimators over datasets. Matrices cross the boundary as numpy
// arrays (copies, row-major); reports cross as JSON strings so their field
// order stays bit-stable with the files the CLI writes.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebrns/checkpoint.hpp"
#include "ebrns/classic.hpp"
#include "ebrns/dataset.hpp"
#include "ebrns/ebrns.hpp"
#include "ebrns/errors.hpp"
#include "ebrns/eval.hpp"
#include "ebrns/gates.hpp"
#include "ebrns/model.hpp"
#include "ebrns/rng.hpp"
#include "ebrns/train.hpp"

namespace py = pybind11;
using namespace ebrns;

namespace {

// ---- numpy <-> Mat -------------------------------------------------------

Mat to_mat(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() == 1) {
    Mat m(static_cast<int>(a.shape(0)), 1);
    for (int i = 0; i < m.rows(); ++i) m(i, 0) = a.at(i);
    return m;
  }
  if (a.ndim() == 2) {
    Mat m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) m(i, j) = a.at(i, j);
    return m;
  }
  throw std::invalid_argument("expected a 1-D or 2-D array");
}

py::array_t<double> from_mat(const Mat& m) {
  py::array_t<double> a({m.rows(), m.cols()});
  auto r = a.mutable_unchecked<2>();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) r(i, j) = m(i, j);
  return a;
}

// Stack K column vectors into a (K, n) array.
py::array_t<double> stack_cols(const std::vector<Mat>& cols) {
  const int k = static_cast<int>(cols.size());
  const int n = k > 0 ? cols[0].rows() : 0;
  py::array_t<double> a({k, n});
  auto r = a.mutable_unchecked<2>();
  for (int s = 0; s < k; ++s)
    for (int i = 0; i < n; ++i) r(s, i) = cols[s](i, 0);
  return a;
}

// Stack K n x n matrices into a (K, n, n) array.
py::array_t<double> stack_mats(const std::vector<Mat>& mats) {
  const int k = static_cast<int>(mats.size());
  const int n = k > 0 ? mats[0].rows() : 0;
  py::array_t<double> a({k, n, n});
  auto r = a.mutable_unchecked<3>();
  for (int s = 0; s < k; ++s)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r(s, i, j) = mats[s](i, j);
  return a;
}

std::vector<Mat> rows_to_cols(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a (K, n) array");
  std::vector<Mat> out;
  for (int s = 0; s < a.shape(0); ++s) {
    Mat m(static_cast<int>(a.shape(1)), 1);
    for (int i = 0; i < m.rows(); ++i) m(i, 0) = a.at(s, i);
    out.push_back(m);
  }
  return out;
}

// ---- wrappers ------------------------------------------------------------

struct PyModel {
  std::unique_ptr<StateSpaceModel> m;
};

PyModel make_model(const std::string& id, double dt, double q2, std::vector<double> r_diag) {
  ModelParams p;
  p.dt = dt;
  p.q2 = q2;
  p.r_diag = std::move(r_diag);
  return PyModel{make_builtin(parse_model_id(id), p)};
}

std::vector<Mat> beliefs_mean(const std::vector<GaussianBelief>& b) {
  std::vector<Mat> v;
  for (const auto& e : b) v.push_back(e.mean);
  return v;
}

std::vector<Mat> beliefs_cov(const std::vector<GaussianBelief>& b) {
  std::vector<Mat> v;
  for (const auto& e : b) v.push_back(e.cov);
  return v;
}

py::dict classic_run_py(const PyModel& model, const py::array_t<double>& z, const std::string& mode) {
  std::vector<Mat> zc = rows_to_cols(z);
  GaussianBelief init = default_init(*model.m, zc.empty() ? Mat() : zc[0]);
  const RunMode rm = mode == "filter" ? RunMode::Filter : RunMode::Smooth;
  SequenceCache c = run_classic(*model.m, zc, init, rm);
  std::vector<Mat> fm, fc;
  for (const auto& s : c.steps) {
    fm.push_back(s.filtered.mean);
    fc.push_back(s.filtered.cov);
  }
  py::dict out;
  out["filtered_mean"] = stack_cols(fm);
  out["filtered_cov"] = stack_mats(fc);
  if (rm == RunMode::Smooth) {
    out["smoothed_mean"] = stack_cols(beliefs_mean(c.smoothed));
    out["smoothed_cov"] = stack_mats(beliefs_cov(c.smoothed));
  }
  return out;
}

py::dict learned_run_py(const PyModel& model, const GateBank& bank, const py::array_t<double>& z,
                        const std::string& mode, bool nominal) {
  std::vector<Mat> zc = rows_to_cols(z);
  GaussianBelief init = default_init(*model.m, zc.empty() ? Mat() : zc[0]);
  const EbrnsMode em = mode == "filter" ? EbrnsMode::Filter : EbrnsMode::Smooth;
  EbrnsSequence seq = run_ebrns(bank, *model.m, zc, init, em, nominal);
  py::dict out;
  out["filtered_mean"] = stack_cols(beliefs_mean(seq.filtered));
  out["filtered_cov"] = stack_mats(beliefs_cov(seq.filtered));
  std::vector<Mat> fd, fs;
  for (const auto& t : seq.forward_trend) {
    fd.push_back(t.delta);
    fs.push_back(t.sigma_diag);
  }
  out["forward_trend_delta"] = stack_cols(fd);
  out["forward_trend_sigma"] = stack_cols(fs);
  if (em == EbrnsMode::Smooth) {
    out["smoothed_mean"] = stack_cols(beliefs_mean(seq.smoothed));
    out["smoothed_cov"] = stack_mats(beliefs_cov(seq.smoothed));
    std::vector<Mat> bd, bs;
    for (const auto& t : seq.backward_trend) {
      bd.push_back(t.delta);
      bs.push_back(t.sigma_diag);
    }
    out["backward_trend_delta"] = stack_cols(bd);
    out["backward_trend_sigma"] = stack_cols(bs);
  }
  return out;
}

GateBank train_bank(const GateBank& start, const SplitDataset& split, const PyModel& model,
                    int stage, double lr, int batch, int epochs, double tau_a, double tau_b,
                    double clip, std::uint64_t seed, int patience, std::string* report_out) {
  TrainConfig tc;
  tc.stage = stage == 2 ? TrainStage::Smooth : TrainStage::Filter;
  tc.lr = lr;
  tc.batch = batch;
  tc.epochs = epochs;
  tc.tau_a = tau_a;
  tc.tau_b = tau_b;
  tc.clip = clip;
  tc.seed = seed;
  tc.patience = patience;
  TrainResult r = train_stage(start, split, *model.m, tc);
  *report_out = train_report_to_json(r.report);
  return r.bank;
}

py::dict mcresult_to_dict(const McResult& r) {
  py::dict d;
  d["estimator"] = r.estimator;
  d["m_runs"] = r.m_runs;
  d["mean_rmse"] = r.mean_rmse;
  d["per_step"] = r.per_step;
  py::dict g;
  for (std::size_t i = 0; i < r.group_names.size(); ++i)
    g[py::str(r.group_names[i])] = r.group_mean[i];
  d["groups"] = g;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ebrns, m) {
  m.doc() =
      "Gaussian fixed-interval smoothing with learned trend compensation: "
      "classical filter/smoother oracles, the gated recurrent estimator, "
      "two-stage training, and Monte Carlo evaluation.";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<ContractError>(m, "ContractError");
  py::register_exception<NumericError>(m, "NumericError");

  py::class_<PyModel>(m, "Model")
      .def_property_readonly("state_dim", [](const PyModel& p) { return p.m->state_dim(); })
      .def_property_readonly("meas_dim", [](const PyModel& p) { return p.m->meas_dim(); })
      .def_property_readonly("dt", [](const PyModel& p) { return p.m->dt(); })
      .def_property_readonly("name", [](const PyModel& p) { return p.m->name(); })
      .def("__repr__", [](const PyModel& p) {
        return "<Model " + p.m->name() + " state_dim=" + std::to_string(p.m->state_dim()) +
               " meas_dim=" + std::to_string(p.m->meas_dim()) + ">";
      });

  m.def("make_model", &make_model, py::arg("id"), py::arg("dt") = 1.0, py::arg("q2") = 1.0,
        py::arg("r_diag"),
        "Build a built-in state-space model: 'rw1d', 'cv2d-linear' or 'cv2d-radar'.");

  py::class_<GateBank>(m, "Bank")
      .def_property_readonly("param_count", &GateBank::param_count)
      .def("__repr__", [](const GateBank& b) {
        return "<Bank params=" + std::to_string(b.param_count()) + ">";
      });

  m.def(
      "make_bank",
      [](int state_dim, int d_c, int hidden, std::uint64_t seed) {
        Rng rng(seed);
        return make_gate_bank(state_dim, d_c, hidden, rng);
      },
      py::arg("state_dim"), py::arg("d_c"), py::arg("hidden"), py::arg("seed"),
      "Freshly initialized gate bank (uniform fan-in init; normalization unit).");

  py::class_<TrajectorySample>(m, "Sample")
      .def_readonly("id", &TrajectorySample::id)
      .def_property_readonly("x", [](const TrajectorySample& s) { return stack_cols(s.x); })
      .def_property_readonly("z", [](const TrajectorySample& s) { return stack_cols(s.z); });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("n_x", &Dataset::n_x)
      .def_readonly("n_z", &Dataset::n_z)
      .def_readonly("k_len", &Dataset::k_len)
      .def("__len__", [](const Dataset& d) { return d.samples.size(); })
      .def(
          "__getitem__",
          [](const Dataset& d, std::size_t i) {
            if (i >= d.samples.size()) throw py::index_error();
            return d.samples[i];
          },
          py::return_value_policy::copy);

  py::class_<SplitDataset>(m, "Split")
      .def_readonly("train", &SplitDataset::train)
      .def_readonly("validation", &SplitDataset::validation)
      .def_readonly("test", &SplitDataset::test);

  m.def("gen_temperature", &gen_temperature, py::arg("count"), py::arg("k_len"),
        py::arg("sigma_v"), py::arg("seed"),
        "Synthetic hourly temperature-like series: daily cycle + trend + AR(1), "
        "noisy scalar measurements.");
  m.def("gen_landing", &gen_landing, py::arg("count"), py::arg("k_len"), py::arg("dt"),
        py::arg("sigma_range"), py::arg("sigma_azimuth"), py::arg("seed"),
        "Synthetic approach trajectories observed by a range/azimuth sensor.");
  m.def("split_dataset", &split_dataset, py::arg("data"), py::arg("train_frac") = 0.7,
        py::arg("val_frac") = 0.2, py::arg("test_frac") = 0.1, py::arg("seed") = 1,
        "Deterministic shuffled split; also fits the per-dimension normalization scale.");
  m.def(
      "fit_normalization",
      [](const GateBank& bank, const SplitDataset& split) {
        GateBank out = bank;
        out.norm_scale = split.norm_scale;
        return out;
      },
      py::arg("bank"), py::arg("split"),
      "Copy of the bank carrying the split's per-dimension normalization scale. "
      "Training does this implicitly; use it to run an untrained bank outside "
      "nominal mode.");

  m.def("load_dataset_csv", &read_csv, py::arg("path"), "Read a dataset CSV.");
  m.def(
      "save_dataset_csv", [](const std::string& path, const Dataset& d) { write_csv(path, d); },
      py::arg("path"), py::arg("data"), "Write a dataset CSV.");

  m.def("classic_run", &classic_run_py, py::arg("model"), py::arg("z"), py::arg("mode") = "smooth",
        "Classical Gaussian filter/smoother over one measurement sequence (rows of z). "
        "Returns filtered and (in smooth mode) smoothed means/covariances.");
  m.def("learned_run", &learned_run_py, py::arg("model"), py::arg("bank"), py::arg("z"),
        py::arg("mode") = "smooth", py::arg("nominal") = false,
        "Learned estimator over one measurement sequence; nominal=True bypasses the "
        "gates and reproduces the classical recursions exactly. Also returns the "
        "per-step trend corrections (the estimator's explanation of what it added).");

  m.def(
      "train_stage",
      [](const GateBank& start, const SplitDataset& split, const PyModel& model, int stage,
         double lr, int batch, int epochs, double tau_a, double tau_b, double clip,
         std::uint64_t seed, int patience) {
        std::string report;
        GateBank b = train_bank(start, split, model, stage, lr, batch, epochs, tau_a, tau_b, clip,
                                seed, patience, &report);
        return py::make_tuple(b, report);
      },
      py::arg("start"), py::arg("split"), py::arg("model"), py::arg("stage") = 1,
      py::arg("lr") = 1e-3, py::arg("batch") = 32, py::arg("epochs") = 200,
      py::arg("tau_a") = 1e-5, py::arg("tau_b") = 1e-5, py::arg("clip") = 5.0,
      py::arg("seed") = 1, py::arg("patience") = 20,
      "One training stage (1: forward nets on filtered error, 2: backward nets on "
      "smoothed error). Returns (best bank, report JSON string).");

  m.def(
      "evaluate",
      [](const std::string& estimator, const PyModel& model, const Dataset& data,
         const GateBank* bank, bool nominal) {
        return mcresult_to_dict(
            evaluate_dataset(parse_estimator(estimator), bank, data, *model.m, nominal));
      },
      py::arg("estimator"), py::arg("model"), py::arg("data"), py::arg("bank") = nullptr,
      py::arg("nominal") = false,
      "Pooled RMSE of one estimator over a dataset: 'classic_filter', 'classic_smoother', "
      "'ebrns_filter' or 'ebrns_smoother'.");

  m.def(
      "monte_carlo",
      [](const std::string& estimator, const PyModel& model, const TrajectorySample& truth,
         int m_runs, std::uint64_t seed, const GateBank* bank, bool nominal) {
        return mcresult_to_dict(
            mc_run(parse_estimator(estimator), bank, truth, *model.m, m_runs, seed, nominal));
      },
      py::arg("estimator"), py::arg("model"), py::arg("truth"), py::arg("m_runs"),
      py::arg("seed"), py::arg("bank") = nullptr, py::arg("nominal") = false,
      "Fixed-truth, resampled-noise Monte Carlo RMSE for one trajectory.");

  m.def(
      "save_checkpoint",
      [](const std::string& path, const GateBank& bank, const std::string& model_id, int n_z) {
        save_checkpoint(path, Checkpoint{bank, model_id, n_z});
      },
      py::arg("path"), py::arg("bank"), py::arg("model_id"), py::arg("n_z"),
      "Persist a bank with its model identity (bit-exact JSON round trip).");
  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        Checkpoint cp = load_checkpoint(path);
        return py::make_tuple(cp.bank, cp.model_id, cp.n_z);
      },
      py::arg("path"), "Load a checkpoint; returns (bank, model_id, n_z).");
}
