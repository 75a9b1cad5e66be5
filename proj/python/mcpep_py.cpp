#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mcpep/chain_io.hpp"
#include "mcpep/harness.hpp"

namespace py = pybind11;
using namespace mcpep;

namespace {

py::dict estimate_to_dict(const ContactEstimate& e) {
  py::list contacts;
  for (const auto& c : e.contacts) {
    py::dict d;
    d["link"] = c.particle.link;
    d["face"] = c.particle.face;
    d["point"] = Vec3(c.point);
    d["normal"] = Vec3(c.normal);
    d["force"] = Vec3(c.force);
    d["max_weight"] = c.max_weight;
    contacts.append(d);
  }
  py::dict out;
  out["contacts"] = contacts;
  out["residual_sq"] = e.residual_sq;
  return out;
}

}  // namespace

PYBIND11_MODULE(_mcpep, m) {
  m.doc() = "Multi-contact particle filter with exploration particles.";

  auto error = py::register_exception<Error>(m, "Error");
  auto input = py::register_exception<InputError>(m, "InputError", error.ptr());
  py::register_exception<FormatError>(m, "FormatError", input.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<SolverError>(m, "SolverError", error.ptr());

  py::class_<ChainModel>(m, "Chain")
      .def_property_readonly("dof", &ChainModel::dof)
      .def("to_json", [](const ChainModel& c) { return chain_to_json(c); });
  m.def("seven_dof_arm", &seven_dof_arm);
  m.def("coaxial_arm", &coaxial_arm);
  m.def("parse_chain", [](const std::string& text) { return parse_chain(text); });
  m.def("load_chain", &load_chain, py::arg("path"));

  m.def("forward_kinematics", [](const ChainModel& chain, const VecX& q) {
    std::vector<Eigen::Matrix4d> out;
    for (const Pose& p : forward_kinematics(chain, q)) {
      Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
      t.topLeftCorner<3, 3>() = p.rotation;
      t.topRightCorner<3, 1>() = p.origin;
      out.push_back(t);
    }
    return out;
  });
  m.def("mass_matrix", &mass_matrix, py::arg("chain"), py::arg("q"));
  m.def("gravity_torques", &gravity_torques, py::arg("chain"), py::arg("q"));
  m.def("inverse_dynamics", [](const ChainModel& chain, const VecX& q, const VecX& dq, const VecX& ddq) {
    return rnea(chain, {q, dq, ddq}).torques;
  });

  py::class_<FilterConfig>(m, "FilterConfig")
      .def(py::init<>())
      .def_readwrite("particles_per_set", &FilterConfig::particles_per_set)
      .def_readwrite("alpha", &FilterConfig::alpha)
      .def_readwrite("epsilon_bar", &FilterConfig::epsilon_bar)
      .def_readwrite("step_p", &FilterConfig::step_p)
      .def_readwrite("explore_cap", &FilterConfig::explore_cap)
      .def_readwrite("mu", &FilterConfig::mu)
      .def_readwrite("min_set_age", &FilterConfig::min_set_age)
      .def_readwrite("search_timeout", &FilterConfig::search_timeout)
      .def_readwrite("max_sets", &FilterConfig::max_sets)
      .def_readwrite("observer_gain", &FilterConfig::observer_gain)
      .def_readwrite("seed", &FilterConfig::seed)
      .def("validate", &FilterConfig::validate)
      .def("to_json", [](const FilterConfig& c) { return filter_config_to_json(c); })
      .def_static("from_json", [](const std::string& text) { return parse_filter_config(text); });

  py::class_<FilterModel>(m, "Model")
      .def_property_readonly("chain", &FilterModel::chain)
      .def("face_count", [](const FilterModel& fm, int link) {
        check_particle(fm.surfaces(), {link, 0});
        return fm.surfaces()[static_cast<std::size_t>(link)].face_count();
      })
      .def("point", [](const FilterModel& fm, const VecX& q, int link, int face) {
        const SurfacePoint sp = particle_to_world(fm.chain(), q, fm.surfaces(), {link, face});
        return py::make_tuple(sp.point, sp.normal);
      })
      .def("save", [](const FilterModel& fm, const std::filesystem::path& dir) { save_model(fm, dir); });
  m.def("synthetic_model", &make_synthetic_model, py::arg("chain"), py::arg("k") = 64,
        py::arg("edge") = kDefaultMeshEdge);
  m.def("load_model", &load_model, py::arg("chain"), py::arg("dir"));

  m.def(
      "contact_residual",
      [](const FilterModel& fm, const VecX& q, const VecX& w_hat, const std::vector<std::pair<int, int>>& contacts,
         double mu) {
        std::vector<Particle> ps;
        for (const auto& [l, f] : contacts) ps.push_back({l, f});
        const ForceSolution sol = solve_force_qp(assemble_contact_system(fm.chain(), q, fm.surfaces(), ps, mu), w_hat);
        return py::make_tuple(sol.residual_sq, sol.forces);
      },
      py::arg("model"), py::arg("q"), py::arg("w_hat"), py::arg("contacts"), py::arg("mu") = 0.5);

  m.def(
      "random_scenario_json",
      [](const FilterModel& fm, int contacts, std::uint64_t seed, double settle) {
        ScenarioOptions o;
        o.contacts = contacts;
        o.settle = settle;
        Rng rng(seed);
        return scenario_to_json(random_scenario(fm, o, rng));
      },
      py::arg("model"), py::arg("contacts") = 1, py::arg("seed") = 1, py::arg("settle") = 0.3);

  m.def(
      "simulate",
      [](const FilterModel& fm, const std::string& scenario_json) {
        const Scenario s = parse_scenario(scenario_json);
        s.validate(fm.chain(), fm.surfaces(), 0.5);
        return frames_to_csv(synthesize_frames(fm.chain(), fm.surfaces(), s));
      },
      py::arg("model"), py::arg("scenario_json"), "Sensor frames as CSV text.");

  m.def(
      "estimate",
      [](const FilterModel& fm, const std::string& frames_csv, const FilterConfig& config) {
        py::list out;
        for (const auto& row : estimate_frames(fm, parse_frames_csv(frames_csv, fm.chain().dof()), config)) {
          py::dict d = estimate_to_dict(row.estimate);
          d["iteration"] = row.iteration;
          out.append(d);
        }
        return out;
      },
      py::arg("model"), py::arg("frames_csv"), py::arg("config") = FilterConfig{});

  m.def(
      "benchmark",
      [](const FilterModel& fm, int contacts, int trials, std::uint64_t seed, const FilterConfig& config) {
        BenchmarkOptions o;
        o.contacts = contacts;
        o.trials = trials;
        o.seed = seed;
        o.filter = config;
        BenchmarkResult r;
        {
          py::gil_scoped_release release;
          r = run_benchmark(fm, o);
        }
        const auto& s = r.summary;
        py::dict d;
        d["trials"] = s.trials;
        d["successes"] = s.successes;
        d["success_rate"] = s.success_rate;
        d["mean_convergence_steps"] = s.mean_convergence_steps;
        d["position_rmse_cm"] = s.position_rmse_cm;
        d["force_rmse_n"] = s.force_rmse_n;
        d["mean_step_ms"] = s.mean_step_ms;
        d["csv"] = benchmark_csv(r);
        return d;
      },
      py::arg("model"), py::arg("contacts") = 1, py::arg("trials") = 10, py::arg("seed") = 1,
      py::arg("config") = FilterConfig{});
}
