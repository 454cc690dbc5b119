#include <pybind11/eigen.h>
#include <pybind11/iostream.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "grip/classical.hpp"
#include "grip/config.hpp"
#include "grip/error.hpp"
#include "grip/experiment.hpp"
#include "grip/forward.hpp"
#include "grip/synth.hpp"

namespace py = pybind11;
using namespace py::literals;
using namespace grip;

namespace {

// Columns as float64 arrays; a 1-D input becomes a single column.
Mat as_mat(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() == 1) return Eigen::Map<const Mat>(a.data(), a.shape(0), 1);
  if (a.ndim() != 2) throw ShapeError("expected a 1-D or 2-D array");
  return Eigen::Map<const Mat>(a.data(), a.shape(0), a.shape(1));
}

Graph graph_from_edges(Index n, const std::vector<std::tuple<Index, Index, double>>& edges) {
  std::vector<Edge> list;
  list.reserve(edges.size());
  for (const auto& [i, j, w] : edges) list.push_back({i, j, w});
  return build_graph(n, list);
}

Problem problem_from_overrides(const std::map<std::string, std::string>& dataset, std::uint64_t seed) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : dataset) apply_override(cfg, "dataset." + k + "=" + v);
  validate(cfg.dataset);
  Rng rng(seed);
  return make_problem(cfg.dataset, rng);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  // Translators run newest first, so the base class goes in first.
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());

  py::class_<Graph, std::shared_ptr<Graph>>(m, "Graph")
      .def(py::init(&graph_from_edges), "n"_a, "edges"_a)
      .def_property_readonly("num_nodes", &Graph::num_nodes)
      .def_property_readonly("num_edges", &Graph::num_edges)
      .def_property_readonly("num_components", &Graph::num_components)
      .def("edges",
           [](const Graph& g) {
             std::vector<std::tuple<Index, Index, double>> out;
             for (Index e = 0; e < g.num_edges(); ++e) out.emplace_back(g.edge_u()[e], g.edge_v()[e], g.edge_weight()[e]);
             return out;
           })
      .def("laplacian", [](const Graph& g, py::array_t<double> x) { return apply_laplacian(g, as_mat(x)); }, "x"_a)
      .def("adjacency", [](const Graph& g, py::array_t<double> x) { return apply_adjacency(g, as_mat(x)); }, "x"_a)
      .def("transition", [](const Graph& g, py::array_t<double> x) { return apply_transition(g, as_mat(x)); }, "x"_a);

  m.def(
      "diffusion_forward", [](const Graph& g, py::array_t<double> x, Index k) { return diffusion_forward(g, as_mat(x), k); },
      "graph"_a, "x"_a, "k"_a);
  m.def(
      "diffusion_adjoint", [](const Graph& g, py::array_t<double> d, Index k) { return diffusion_adjoint(g, as_mat(d), k); },
      "graph"_a, "d"_a, "k"_a);
  m.def(
      "mask_forward", [](py::array_t<double> x, const IndexList& idx) { return mask_forward(as_mat(x), idx); }, "x"_a,
      "indices"_a);
  m.def(
      "mask_adjoint", [](py::array_t<double> d, const IndexList& idx, Index n) { return mask_adjoint(as_mat(d), idx, n); },
      "d"_a, "indices"_a, "n"_a);

  m.def(
      "gen_sbm",
      [](Index n, Index classes, double p_in, double p_out, std::uint64_t seed) {
        Rng rng(seed);
        LabeledGraph lg = gen_sbm(n, classes, p_in, p_out, rng);
        return py::make_tuple(std::make_shared<Graph>(std::move(lg.graph)), lg.labels);
      },
      "n"_a, "classes"_a, "p_in"_a, "p_out"_a, "seed"_a = 0);

  py::class_<Problem>(m, "Problem")
      .def_property_readonly("graph", [](const Problem& p) { return std::make_shared<Graph>(p.g()); })
      .def_property_readonly("operator", [](const Problem& p) { return p.spec.name(); })
      .def_property_readonly("d_obs", [](const Problem& p) { return p.d_obs; })
      .def_property_readonly("x_true", [](const Problem& p) { return p.x_true; })
      .def_readonly("sigma", &Problem::sigma)
      .def("forward", [](const Problem& p, py::array_t<double> x) { return apply_forward(p.g(), p.spec, as_mat(x)); },
           "x"_a);

  m.def("make_problem", &problem_from_overrides, "dataset"_a = std::map<std::string, std::string>{}, "seed"_a = 0,
        "One synthetic problem; keys are [dataset] config keys, values as in the INI file.");

  m.def(
      "solve_classical",
      [](const Problem& p, const std::string& regularizer, double alpha, double mu, Index max_iter, double stop_nmse) {
        ClassicalConfig cfg;
        cfg.regularizer = regularizer_from_string(regularizer);
        cfg.alpha = alpha;
        cfg.mu = mu;
        cfg.max_iter = max_iter;
        cfg.stop_nmse = stop_nmse;
        validate(cfg);
        ClassicalResult r = solve_variational_classical(p, cfg);
        return py::dict("x"_a = r.x, "data_fit"_a = r.data_fit, "recovery"_a = r.recovery,
                        "iterations"_a = r.iterations, "converged"_a = r.converged);
      },
      "problem"_a, "regularizer"_a = "laplacian", "alpha"_a = 0.1, "mu"_a = 0.1, "max_iter"_a = 3000,
      "stop_nmse"_a = 0.0025);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "grip");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        py::scoped_ostream_redirect out;
        py::scoped_estream_redirect err;
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      "args"_a, "Run the grip command line with the given arguments; returns the exit code.");
}
