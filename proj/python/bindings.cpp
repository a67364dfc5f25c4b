#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "safenav/config.hpp"
#include "safenav/conformal.hpp"
#include "safenav/controller.hpp"
#include "safenav/errors.hpp"
#include "safenav/gridmap.hpp"
#include "safenav/io.hpp"
#include "safenav/mppi.hpp"
#include "safenav/simulator.hpp"

namespace py = pybind11;
using namespace safenav;

namespace {

// Grids cross the boundary as (height, width) arrays, row iy = 0 first.
OccupancyGrid grid_from_array(py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> cells,
                              double resolution, std::pair<double, double> origin) {
  if (cells.ndim() != 2) throw py::value_error("occupancy must be a 2-D array");
  GridGeometry g{static_cast<int>(cells.shape(1)), static_cast<int>(cells.shape(0)), resolution,
                 {origin.first, origin.second}};
  g.validate();
  OccupancyGrid grid(g, kFree);
  std::memcpy(grid.cells.data(), cells.data(), grid.cells.size());
  return grid;
}

template <class T>
py::array_t<T> to_array(const std::vector<T>& v, int height, int width) {
  py::array_t<T> out({height, width});
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(T));
  return out;
}

py::dict metrics_dict(const RunMetrics& m) {
  py::dict d;
  d["steps"] = m.steps;
  d["rms_error"] = m.rms_error;
  d["max_error"] = m.max_error;
  d["min_clearance"] = m.min_clearance;
  d["contacts"] = m.contacts;
  d["lethal_entries"] = m.lethal_entries;
  d["retries"] = m.retries;
  d["mean_plan_cost"] = m.mean_plan_cost;
  return d;
}

}  // namespace

PYBIND11_MODULE(_safenav, m) {
  m.doc() = "Conformal discrepancy bounds, tube radii, discrepancy-aware cost maps and MPPI tracking";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InsufficientData>(m, "InsufficientData", PyExc_ValueError);
  py::register_exception<TubeBlowUp>(m, "TubeBlowUp", PyExc_ArithmeticError);

  py::class_<Pose>(m, "Pose")
      .def(py::init<double, double, double>(), py::arg("x") = 0.0, py::arg("y") = 0.0, py::arg("theta") = 0.0)
      .def_readwrite("x", &Pose::x)
      .def_readwrite("y", &Pose::y)
      .def_readwrite("theta", &Pose::theta)
      .def(py::self == py::self)
      .def("__repr__", [](const Pose& p) {
        return "Pose(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " + std::to_string(p.theta) + ")";
      });

  py::class_<VelocityCmd>(m, "VelocityCmd")
      .def(py::init<double, double>(), py::arg("v") = 0.0, py::arg("omega") = 0.0)
      .def_readwrite("v", &VelocityCmd::v)
      .def_readwrite("omega", &VelocityCmd::omega)
      .def(py::self == py::self);

  py::class_<PolarError>(m, "PolarError")
      .def(py::init<double, double, double>(), py::arg("rho") = 0.0, py::arg("gamma") = 0.0,
           py::arg("delta") = 0.0)
      .def_readwrite("rho", &PolarError::rho)
      .def_readwrite("gamma", &PolarError::gamma)
      .def_readwrite("delta", &PolarError::delta);

  py::class_<Gains>(m, "Gains")
      .def(py::init<>())
      .def_readwrite("k1", &Gains::k1)
      .def_readwrite("k2", &Gains::k2)
      .def_readwrite("k3", &Gains::k3)
      .def_readwrite("lambda1", &Gains::lambda1);

  py::class_<TubeParams>(m, "TubeParams")
      .def(py::init<>())
      .def_readwrite("alpha1", &TubeParams::alpha1)
      .def_readwrite("alpha2", &TubeParams::alpha2)
      .def_readwrite("alpha3_slope", &TubeParams::alpha3_slope)
      .def_readwrite("lipschitz_V", &TubeParams::lipschitz_V)
      .def_readwrite("dt", &TubeParams::dt);

  py::class_<DiscrepancyBounds>(m, "DiscrepancyBounds")
      .def(py::init([](double z, double z_perp, double eps, std::size_t n) {
             DiscrepancyBounds b{z, z_perp, eps, n};
             b.validate();
             return b;
           }),
           py::arg("z_matched"), py::arg("z_unmatched"), py::arg("epsilon") = 0.01, py::arg("sample_count") = 1)
      .def_readonly("z_matched", &DiscrepancyBounds::z_matched)
      .def_readonly("z_unmatched", &DiscrepancyBounds::z_unmatched)
      .def_readonly("epsilon", &DiscrepancyBounds::epsilon)
      .def_readonly("sample_count", &DiscrepancyBounds::sample_count);

  py::class_<TubeRadii>(m, "TubeRadii").def_readonly("r0", &TubeRadii::r0).def_readonly("r_dt", &TubeRadii::r_dt);

  m.def("step_nominal", [](const Pose& p, const VelocityCmd& u, double dt) { return step_nominal(p, u, dt); },
        py::arg("pose"), py::arg("cmd"), py::arg("dt"));
  m.def("polar_error", &polar_error, py::arg("current"), py::arg("target"));
  m.def("kappa", [](const PolarError& e, const Gains& g) { return kappa(e, g); }, py::arg("e"),
        py::arg("gains") = Gains{});
  m.def("kappa_iss", [](const PolarError& e, const Gains& g) { return kappa_iss(e, g); }, py::arg("e"),
        py::arg("gains") = Gains{});
  m.def("tube_radius", &tube_radius, py::arg("tau"), py::arg("bounds"), py::arg("tube") = TubeParams{});
  m.def("tube_radii", &tube_radii, py::arg("bounds"), py::arg("tube") = TubeParams{});

  m.def("quantile_index", &quantile_index, py::arg("n"), py::arg("epsilon"));
  m.def(
      "conformal_quantile",
      [](std::vector<double> scores, double eps) {
        const QuantileResult q = conformal_quantile(std::move(scores), eps);
        return py::make_tuple(q.value, q.index);
      },
      py::arg("scores"), py::arg("epsilon"),
      "Returns (value, 1-based index); value is inf when the scores cannot support the risk.");

  m.def(
      "train_and_calibrate",
      [](const std::string& preset, double epsilon, double duration, std::size_t subsample, std::uint64_t seed) {
        TrainingConfig tc;
        tc.duration = duration;
        CalibrationConfig cc;
        cc.epsilon = epsilon;
        cc.subsample = subsample;
        cc.seed = seed;
        const CalibrationReport r = calibrate(generate_training(disturbance_preset(preset), tc).tuples, cc);
        return py::make_tuple(r.bounds, r.quantile_index);
      },
      py::arg("preset") = "experiment", py::arg("epsilon") = 0.01, py::arg("duration") = 300.0,
      py::arg("subsample") = 3000, py::arg("seed") = 0,
      "Simulates the training laps under a disturbance preset and calibrates. Returns (bounds, q_index).");

  m.def("buffer_cells", &buffer_cells, py::arg("r_tube"), py::arg("r_ego"), py::arg("r_map"));
  m.def("experiment_buffer_cells", &experiment_buffer_cells, py::arg("r_dt"), py::arg("r_ego"), py::arg("r_map"));
  m.def(
      "inflate",
      [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> occupancy, int n_eps, double alpha,
         double lethal, double resolution) {
        const OccupancyGrid g = grid_from_array(std::move(occupancy), resolution, {0.0, 0.0});
        const DiscrepancyCostMap c = inflate(g, n_eps, alpha, lethal);
        return to_array(c.cells, g.geometry.height, g.geometry.width);
      },
      py::arg("occupancy"), py::arg("n_eps"), py::arg("alpha_shift") = 0.1, py::arg("lethal") = 13500.0,
      py::arg("resolution") = 0.05, "Occupancy in [0, 100], shape (height, width). Returns the cost grid.");

  m.def(
      "importance_weights",
      [](const std::vector<double>& costs, const std::vector<double>& coupling, double lambda) {
        return importance_weights(costs, coupling, lambda);
      },
      py::arg("costs"), py::arg("coupling"), py::arg("lambda_"));

  m.def(
      "run_config",
      [](const std::string& path, std::optional<std::uint64_t> seed, std::optional<double> laps, bool baseline) {
        RunConfig c = load_config(path);
        if (seed) {
          c.seeds = {*seed, *seed, *seed};
          propagate_shared(c);
        }
        const auto training = generate_training(make_disturbance(c), c.training);
        const DiscrepancyBounds b = calibrate(training.tuples, c.calibration).bounds;
        Scenario sc = make_scenario(c, b);
        if (laps) sc.laps = *laps;
        if (baseline) sc.discrepancy_aware = false;
        const RunLog log = [&] {
          py::gil_scoped_release release;
          return run_tracking_experiment(sc);
        }();
        py::dict d = metrics_dict(metrics(log));
        d["n_eps"] = log.n_eps;
        d["r0"] = log.r0;
        d["r_dt"] = log.r_dt;
        return d;
      },
      py::arg("path"), py::arg("seed") = py::none(), py::arg("laps") = py::none(), py::arg("baseline") = false,
      "Trains, calibrates and runs the tracking experiment described by a config file. Returns the metrics.");

  m.def("serialize_config", [](const std::string& path) { return serialize_config(load_config(path)); },
        py::arg("path"));
}
