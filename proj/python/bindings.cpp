#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <optional>

#include "rsbm/checkpoint.hpp"
#include "rsbm/errors.hpp"
#include "rsbm/pipeline.hpp"
#include "rsbm/theory_oracle.hpp"

namespace py = pybind11;
using namespace rsbm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, 2) waypoint array or a flat (2H,) vector
Trajectory to_traj(const Array& a) {
  const bool waypoints = a.ndim() == 2 && a.shape(1) == 2;
  if (!waypoints && a.ndim() != 1) throw ShapeError("expected an (H, 2) or (2H,) array");
  if (a.size() == 0 || a.size() % 2 != 0) throw ShapeError("trajectory needs an even, nonzero length");
  return Trajectory::from_flat(std::span<const double>(a.data(), static_cast<size_t>(a.size())));
}

Array to_array(const Trajectory& t) {
  Array out({t.horizon(), 2});
  std::copy(t.flat().begin(), t.flat().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vec(const Array& a) { return {a.data(), a.data() + a.size()}; }

struct PyDataset {
  Dataset data;
};

struct PyPipeline {
  TrainedPipeline p;
};

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["mse"] = r.mse;
  d["cos_sim"] = r.cos_sim;
  d["fde"] = r.fde;
  d["nfe"] = r.nfe;
  return d;
}

}  // namespace

PYBIND11_MODULE(_rsbm, m) {
  m.doc() = "Rectified Schrodinger bridge trajectory generation";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<BridgeConfig>(m, "BridgeConfig")
      .def(py::init([](double sigma_max, double sigma_min, double epsilon) {
             BridgeConfig c{sigma_max, sigma_min, epsilon};
             c.validate();
             return c;
           }),
           py::arg("sigma_max") = 10.0, py::arg("sigma_min") = 0.002, py::arg("epsilon") = 0.5)
      .def_readwrite("sigma_max", &BridgeConfig::sigma_max)
      .def_readwrite("sigma_min", &BridgeConfig::sigma_min)
      .def_readwrite("epsilon", &BridgeConfig::epsilon)
      .def_property_readonly("t_max", &BridgeConfig::t_max)
      .def("validate", &BridgeConfig::validate)
      .def("__repr__", [](const BridgeConfig& c) {
        return "BridgeConfig(sigma_max=" + std::to_string(c.sigma_max) +
               ", sigma_min=" + std::to_string(c.sigma_min) + ", epsilon=" + std::to_string(c.epsilon) + ")";
      });

  py::enum_<TargetKind>(m, "TargetKind").value("v", TargetKind::v).value("x0", TargetKind::x0).value("eps", TargetKind::eps);
  py::enum_<Solver>(m, "Solver").value("heun", Solver::heun).value("euler", Solver::euler);

  // bridge math
  m.def("interp_coeff", &interp_coeff, py::arg("t"), py::arg("cfg") = BridgeConfig{});
  m.def("bridge_std", &bridge_std, py::arg("t"), py::arg("cfg") = BridgeConfig{});
  m.def("dlog_sigma_dt", &dlog_sigma_dt, py::arg("t"), py::arg("cfg") = BridgeConfig{});
  m.def("velocity_variance", &velocity_variance, py::arg("t"), py::arg("cfg") = BridgeConfig{});
  m.def("kl_rectified", &kl_rectified, py::arg("epsilon"), py::arg("dim"));
  m.def(
      "bridge_mean",
      [](const Array& a0, const Array& aT, double t, const BridgeConfig& cfg) {
        return to_array(bridge_mean(to_traj(a0), to_traj(aT), t, cfg));
      },
      py::arg("a0"), py::arg("aT"), py::arg("t"), py::arg("cfg") = BridgeConfig{});
  m.def(
      "sample_bridge",
      [](const Array& a0, const Array& aT, double t, const BridgeConfig& cfg, std::optional<Array> noise,
         std::uint64_t seed) {
        const Trajectory x0 = to_traj(a0), xT = to_traj(aT);
        Rng rng = make_rng(seed, 0);
        const BridgeSample s = noise ? sample_bridge_with_noise(x0, xT, t, cfg, to_vec(*noise))
                                     : sample_bridge(x0, xT, t, cfg, rng);
        py::dict d;
        d["a_t"] = to_array(s.a_t);
        d["mu_t"] = to_array(s.mu_t);
        d["sigma_t"] = s.sigma_t;
        d["noise"] = to_array(Trajectory::from_flat(s.noise));
        d["velocity"] = to_array(target_velocity(s, x0, xT, cfg));
        return d;
      },
      py::arg("a0"), py::arg("aT"), py::arg("t"), py::arg("cfg") = BridgeConfig{}, py::arg("noise") = py::none(),
      py::arg("seed") = 0, "Draw a_t from the bridge kernel; also returns the target velocity.");
  m.def(
      "to_velocity",
      [](const Array& head, const Array& a_t, const Array& aT, double t, const BridgeConfig& cfg, TargetKind kind) {
        return to_array(to_velocity(to_vec(head), to_traj(a_t), to_traj(aT), t, cfg, kind));
      },
      py::arg("head"), py::arg("a_t"), py::arg("aT"), py::arg("t"), py::arg("cfg"), py::arg("kind"));

  // schedules and sampling
  m.def(
      "karras_schedule", [](int k, const BridgeConfig& cfg, double rho) { return karras_schedule(k, cfg, rho).steps; },
      py::arg("k"), py::arg("cfg") = BridgeConfig{}, py::arg("rho") = 7.0);
  m.def(
      "uniform_schedule", [](int k, double hi, double lo) { return uniform_schedule(k, hi, lo).steps; },
      py::arg("k"), py::arg("hi"), py::arg("lo"));
  m.def("nfe_of", &nfe_of, py::arg("solver"), py::arg("k"));
  m.def(
      "oracle_sample",
      [](const Array& a0, const Array& aT, const BridgeConfig& cfg, int k, Solver solver, double rho) {
        const Trajectory x0 = to_traj(a0), xT = to_traj(aT);
        const SampleResult r = integrate(oracle_field(x0, xT, cfg), xT, {solver, karras_schedule(k, cfg, rho)});
        return py::make_tuple(to_array(r.a0_hat), r.nfe);
      },
      py::arg("a0"), py::arg("aT"), py::arg("cfg") = BridgeConfig{}, py::arg("k") = 3, py::arg("solver") = Solver::heun,
      py::arg("rho") = 7.0, "Integrate the analytic bridge field from aT; returns (endpoint, nfe).");

  // metrics
  m.def("mse", [](const Array& p, const Array& g) { return mse(to_traj(p), to_traj(g)); });
  m.def("cos_sim", [](const Array& p, const Array& g) { return cos_sim(to_traj(p), to_traj(g)); });
  m.def("fde", [](const Array& p, const Array& g) { return fde(to_traj(p), to_traj(g)); });

  // data
  py::class_<PyDataset>(m, "Dataset")
      .def("__len__", [](const PyDataset& d) { return d.data.size(); })
      .def_property_readonly("trajectories",
                             [](const PyDataset& d) {
                               const py::ssize_t n = static_cast<py::ssize_t>(d.data.size());
                               const int h = n ? d.data.front().a0.horizon() : 0;
                               Array out({n, static_cast<py::ssize_t>(h), py::ssize_t{2}});
                               double* dst = out.mutable_data();
                               for (const auto& s : d.data) dst = std::copy(s.a0.flat().begin(), s.a0.flat().end(), dst);
                               return out;
                             })
      .def_property_readonly("shapes",
                             [](const PyDataset& d) {
                               std::vector<std::string> out;
                               for (const auto& s : d.data) out.push_back(to_string(s.task.shape));
                               return out;
                             })
      .def("split",
           [](const PyDataset& d, size_t n_first) {
             if (n_first > d.data.size()) throw ShapeError("split point beyond the dataset");
             PyDataset a{Dataset(d.data.begin(), d.data.begin() + static_cast<long>(n_first))};
             PyDataset b{Dataset(d.data.begin() + static_cast<long>(n_first), d.data.end())};
             return py::make_tuple(a, b);
           })
      .def("save_csv",
           [](const PyDataset& d, const std::string& path) {
             std::ofstream out(path, std::ios::binary);
             if (!out) throw FormatError("cannot write " + path);
             write_dataset_csv(out, d.data);
           })
      .def_static("load_csv", [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot read " + path);
        return PyDataset{read_dataset_csv(in)};
      });

  m.def(
      "generate_dataset",
      [](int n, const std::vector<std::string>& shapes, int tasks, double noise, std::uint64_t seed) {
        std::vector<ToyShape> s;
        for (const auto& name : shapes) s.push_back(parse_shape(name));
        Rng rng = make_rng(seed, 0);
        const auto family = make_task_family(s, tasks, noise, rng);
        return PyDataset{generate_dataset(n, family, rng)};
      },
      py::arg("n"), py::arg("shapes") = std::vector<std::string>{"star", "figure8"}, py::arg("tasks") = 16,
      py::arg("noise") = 0.05, py::arg("seed") = 0);

  // training and inference
  py::class_<PyPipeline>(m, "Pipeline")
      .def_property_readonly("loss_trace", [](const PyPipeline& p) { return p.p.loss_trace; })
      .def_property_readonly("bridge", [](const PyPipeline& p) { return p.p.model.bridge(); })
      .def_property_readonly("target", [](const PyPipeline& p) { return p.p.model.target(); })
      .def(
          "evaluate",
          [](const PyPipeline& p, const PyDataset& test, int k, Solver solver, std::uint64_t seed, bool use_bridge) {
            EvalOptions eo;
            eo.k = k;
            eo.solver = solver;
            eo.seed = seed;
            eo.use_bridge = use_bridge;
            Evaluation ev;
            {
              py::gil_scoped_release release;
              ev = evaluate(p.p, test.data, eo);
            }
            py::dict d = report_dict(ev.report);
            const py::ssize_t n = static_cast<py::ssize_t>(ev.predictions.size());
            const int h = n ? ev.predictions.front().horizon() : 0;
            Array preds({n, static_cast<py::ssize_t>(h), py::ssize_t{2}});
            double* dst = preds.mutable_data();
            for (const auto& t : ev.predictions) dst = std::copy(t.flat().begin(), t.flat().end(), dst);
            d["predictions"] = preds;
            return d;
          },
          py::arg("test"), py::arg("k") = 3, py::arg("solver") = Solver::heun, py::arg("seed") = 0,
          py::arg("use_bridge") = true)
      .def("save",
           [](const PyPipeline& p, const std::string& dir) {
             std::filesystem::create_directories(dir);
             save_velocity_model(dir + "/velocity.ckpt", p.p.model);
             save_prior(dir + "/prior.ckpt", p.p.prior);
           })
      .def_static(
          "load",
          [](const std::string& dir, bool hide_phase) {
            return PyPipeline{TrainedPipeline{load_velocity_model(dir + "/velocity.ckpt"),
                                              load_prior(dir + "/prior.ckpt"), {}, hide_phase}};
          },
          py::arg("dir"), py::arg("hide_phase") = false);

  m.def(
      "train",
      [](const PyDataset& data, double epsilon, const std::string& target, const std::string& prior, int epochs,
         double lr, int batch, int prior_epochs, std::vector<int> hidden, bool hide_phase, std::uint64_t seed) {
        if (data.data.empty()) throw ShapeError("empty dataset");
        ExperimentConfig cfg;
        cfg.bridge.epsilon = epsilon;
        cfg.bridge.validate();
        cfg.target = parse_target_kind(target);
        cfg.prior.variant = parse_prior_variant(prior);
        cfg.arch.horizon = data.data.front().a0.horizon();
        cfg.arch.hidden = std::move(hidden);
        cfg.epochs = epochs;
        cfg.lr = lr;
        cfg.batch = batch;
        cfg.prior_training.epochs = prior_epochs;
        cfg.prior_training.batch_size = batch;
        cfg.hide_phase = hide_phase;
        cfg.seed = seed;
        py::gil_scoped_release release;
        return PyPipeline{train_pipeline(data.data, cfg)};
      },
      py::arg("data"), py::arg("epsilon") = 0.5, py::arg("target") = "v", py::arg("prior") = "learned",
      py::arg("epochs") = 30, py::arg("lr") = 1e-4, py::arg("batch") = 256, py::arg("prior_epochs") = 30,
      py::arg("hidden") = std::vector<int>{128, 128}, py::arg("hide_phase") = false, py::arg("seed") = 0);

  m.def(
      "verify",
      [](double perturb_kernel, std::uint64_t seed) {
        oracle::VerifyOptions opts;
        opts.kernel_perturbation = perturb_kernel;
        opts.seed = seed;
        oracle::OracleReport report;
        {
          py::gil_scoped_release release;
          report = oracle::run_all(opts);
        }
        py::list out;
        for (const auto& c : report.checks) {
          py::dict d;
          d["check"] = c.name;
          d["measured"] = c.measured;
          d["expected"] = c.expected;
          d["tolerance"] = c.tolerance;
          d["pass"] = c.pass;
          d["detail"] = c.detail;
          out.append(d);
        }
        return out;
      },
      py::arg("perturb_kernel") = 0.0, py::arg("seed") = 0, "Run the consistency checks; one dict per check.");
}
