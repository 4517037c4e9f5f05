#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mctangent/analysis.hpp"
#include "mctangent/cli.hpp"
#include "mctangent/errors.hpp"
#include "mctangent/experiment.hpp"
#include "mctangent/integrators.hpp"
#include "mctangent/io.hpp"
#include "mctangent/network.hpp"
#include "mctangent/pde.hpp"
#include "mctangent/training.hpp"

namespace py = pybind11;
using namespace mct;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Field to_field(const Array& a) { return Field(a.data(), a.data() + a.size()); }

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Array to_array(const Field& f) {
  return Array(static_cast<py::ssize_t>(f.size()), f.data());
}

Array states_array(const Trajectory& t) { return to_array(trajectory_to_tensor(t)); }

Config dict_config(const py::dict& d) {
  Config c;
  for (const auto& [k, v] : d) c.set(py::str(k), py::str(v));
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mcTangent core bindings";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<StabilityError>(m, "StabilityError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("advection_tangent", [](const Array& u, double c, double h) { return to_array(advection_tangent(to_field(u), c, h)); },
        py::arg("u"), py::arg("c"), py::arg("h"));
  m.def("advection_matrix", [](std::size_t n, double c, double h) { return to_array(advection_matrix(n, c, h)); });

  py::class_<TruthTangent>(m, "TruthTangent")
      .def_static("advection", [](std::size_t n, double c) { return TruthTangent::advection(Grid{1, n}, c); },
                  py::arg("n"), py::arg("speed") = 1.0)
      .def_static("burgers", [](std::size_t n, double nu) { return TruthTangent::burgers(Grid{2, n}, nu); },
                  py::arg("n"), py::arg("nu"))
      .def_static("navier_stokes",
                  [](std::size_t n, double nu) {
                    const Grid g{2, n};
                    return TruthTangent::navier_stokes(g, nu, ns_forcing(g));
                  },
                  py::arg("n"), py::arg("nu"))
      .def_property_readonly("state_size", &TruthTangent::state_size)
      .def("eval", [](const TruthTangent& t, const Array& u) { return to_array(t.eval(to_field(u))); })
      .def("jacobian", [](const TruthTangent& t, const Array& u) { return to_array(t.jacobian(to_field(u))); })
      .def("solve_reference",
           [](const TruthTangent& t, const Array& u0, std::size_t steps, double T) {
             return states_array(solve_reference(t, to_field(u0), steps, T));
           },
           py::arg("u0"), py::arg("steps"), py::arg("T"));

  py::class_<TangentNetwork>(m, "TangentNetwork")
      .def(py::init([](const std::string& arch, const std::string& mode, std::size_t n, std::size_t hidden,
                       double init_std, std::uint64_t seed, bool bias) {
             return TangentNetwork::init({init_std, 0.0, seed}, parse_architecture(arch), parse_mode(mode), n, hidden,
                                         bias);
           }),
           py::arg("arch") = "linear", py::arg("mode") = "tangent", py::arg("n") = 8, py::arg("hidden") = 0,
           py::arg("init_std") = 0.1, py::arg("seed") = 0, py::arg("bias") = true)
      .def_property_readonly("param_names", &TangentNetwork::param_names)
      .def_property_readonly("input_size", &TangentNetwork::input_size)
      .def("get_params",
           [](const TangentNetwork& n) {
             py::list out;
             for (const auto& p : n.params()) out.append(to_array(p));
             return out;
           })
      .def("set_params",
           [](TangentNetwork& n, const py::list& params) {
             if (params.size() != n.params().size()) throw DimensionError("wrong number of parameter arrays");
             for (std::size_t i = 0; i < params.size(); ++i) {
               Tensor t = to_tensor(params[i].cast<Array>());
               if (t.shape() != n.params()[i].shape()) throw DimensionError("parameter shape mismatch");
               n.params()[i] = std::move(t);
             }
           })
      .def("forward", [](const TangentNetwork& n, const Array& u) { return to_array(n.forward(to_field(u))); })
      .def("jacobian", [](const TangentNetwork& n, const Array& u) { return to_array(n.jacobian(to_field(u))); });

  m.def(
      "predict",
      [](const TangentNetwork& net, const Array& u0, const std::string& scheme, double dt, std::size_t steps) {
        const auto res = predict(net, to_field(u0), SchemeSpec{parse_scheme(scheme), {}}, dt, steps);
        py::dict out;
        out["states"] = states_array(res.trajectory);
        out["diverged_at"] = res.diverged_at ? py::cast(*res.diverged_at) : py::none();
        return out;
      },
      py::arg("net"), py::arg("u0"), py::arg("scheme") = "fe", py::arg("dt"), py::arg("steps"));

  m.def("linear_optimum", [](const Array& g, const Array& u0) {
    const auto opt = linear_optimum(to_tensor(g), to_tensor(u0));
    return py::make_tuple(to_array(opt.W), to_array(opt.b));
  });

  m.def(
      "randomization_check",
      [](const TangentNetwork& net, const TruthTangent& truth, const Array& u, double noise_std, std::size_t samples,
         double dt, std::uint64_t seed) {
        const auto d = randomization_check(net, truth, to_field(u), noise_std, samples, dt, seed, 1);
        py::dict out;
        out["p1"] = d.p1;
        out["q1"] = d.q1;
        out["ml_residual"] = d.ml_residual;
        out["ml_stderr"] = d.ml_stderr;
        out["mc_residual"] = d.mc_residual;
        out["mc_stderr"] = d.mc_stderr;
        return out;
      },
      py::arg("net"), py::arg("truth"), py::arg("u"), py::arg("noise_std"), py::arg("samples"), py::arg("dt"),
      py::arg("seed") = 0);

  m.def("config_keys", &config_keys);
  m.def(
      "generate_data",
      [](const py::dict& cfg) {
        const auto e = ExperimentConfig::from_config(dict_config(cfg));
        const auto d = generate_data(e);
        py::list train, test;
        for (const auto& t : d.train) train.append(states_array(t));
        for (const auto& t : d.test) test.append(states_array(t));
        return py::make_tuple(train, test);
      },
      py::arg("config"));

  m.def("read_array", [](const std::string& path) { return to_array(read_array(path)); });
  m.def("write_array", [](const std::string& path, const Array& a) { write_array(path, to_tensor(a)); });

  m.def("run_cli", [](const std::vector<std::string>& args) { return run_cli(args); }, py::arg("args"));
}
