#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "protosphere/assignment.hpp"
#include "protosphere/bench.hpp"
#include "protosphere/data.hpp"
#include "protosphere/error.hpp"
#include "protosphere/hypersphere.hpp"
#include "protosphere/model.hpp"
#include "protosphere/trainer.hpp"

namespace py = pybind11;
using namespace protosphere;

namespace {

std::vector<std::size_t> mapping_of(const AssignmentMapping& a) { return {a.values().begin(), a.values().end()}; }

}  // namespace

PYBIND11_MODULE(_protosphere, m) {
  m.doc() = "Fixed hyperspherical prototypes with dynamic label-to-prototype assignment";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<DegenerateError>(m, "DegenerateError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  // hypersphere
  py::class_<UniformityConfig>(m, "UniformityConfig")
      .def(py::init<>())
      .def_readwrite("temperature", &UniformityConfig::temperature)
      .def_readwrite("learning_rate", &UniformityConfig::learning_rate)
      .def_readwrite("iterations", &UniformityConfig::iterations)
      .def_readwrite("subset_size", &UniformityConfig::subset_size)
      .def_readwrite("seed", &UniformityConfig::seed);

  py::class_<GeometryReport>(m, "GeometryReport")
      .def_readonly("apad", &GeometryReport::apad)
      .def_readonly("min_cos", &GeometryReport::min_cos)
      .def_readonly("max_cos", &GeometryReport::max_cos)
      .def_readonly("min_pairwise_distance", &GeometryReport::min_pairwise_distance)
      .def_readonly("etf_gap", &GeometryReport::etf_gap);

  m.def("gaussian_potential",
        [](const Eigen::VectorXd& u, const Eigen::VectorXd& v, double t) { return gaussian_potential(u, v, t); },
        py::arg("u"), py::arg("v"), py::arg("t") = 2.0);
  m.def("uniformity_loss",
        [](const Eigen::MatrixXd& w, std::vector<std::size_t> subset, double t) { return uniformity_loss(w, subset, t); },
        py::arg("w"), py::arg("subset"), py::arg("t") = 2.0);
  m.def("uniformity_gradient",
        [](const Eigen::MatrixXd& w, std::vector<std::size_t> subset, double t) {
          return uniformity_gradient(w, subset, t);
        },
        py::arg("w"), py::arg("subset"), py::arg("t") = 2.0);
  m.def("estimate_prototypes",
        [](std::size_t d, std::size_t c, const UniformityConfig& cfg) { return estimate_prototypes(d, c, cfg).matrix(); },
        py::arg("d"), py::arg("c"), py::arg("config") = UniformityConfig{},
        "Returns the d x c prototype matrix.");
  m.def("circle_prototypes", [](std::size_t c) { return circle_prototypes(c).matrix(); }, py::arg("c"));
  m.def("geometry_report", [](const Eigen::MatrixXd& w) { return geometry_report(PrototypeMatrix(w, 1e-6)); },
        py::arg("w"));

  // assignment
  m.def("hungarian_solve", [](const Eigen::MatrixXd& cost) { return mapping_of(hungarian_solve(CostMatrix(cost))); },
        py::arg("cost"), "Optimal label -> prototype mapping for a square cost matrix.");
  m.def("reassign",
        [](const Eigen::MatrixXd& representatives, const Eigen::MatrixXd& w) {
          return mapping_of(reassign(ClassRepresentatives::from_columns(representatives), PrototypeMatrix(w, 1e-6)));
        },
        py::arg("representatives"), py::arg("w"));
  m.def("assignment_churn",
        [](std::vector<std::size_t> prev, std::vector<std::size_t> next) {
          return assignment_churn(AssignmentMapping(std::move(prev)), AssignmentMapping(std::move(next)));
        },
        py::arg("prev"), py::arg("next"));

  // model
  m.def("lipm_loss", [](const Eigen::VectorXd& z, const Eigen::VectorXd& w) { return lipm_loss(z, w); });
  m.def("lipm_grad", [](const Eigen::VectorXd& z, const Eigen::VectorXd& w) { return lipm_grad(z, w); });

  // data
  py::class_<VectorDataset>(m, "VectorDataset")
      .def(py::init([](std::size_t c, const Eigen::MatrixXd& inputs, std::vector<std::size_t> labels) {
             return VectorDataset(c, inputs, std::move(labels));
           }),
           py::arg("class_count"), py::arg("inputs"), py::arg("labels"))
      .def_property_readonly("size", &VectorDataset::size)
      .def_property_readonly("input_dim", &VectorDataset::input_dim)
      .def_property_readonly("class_count", &VectorDataset::class_count)
      .def_property_readonly("inputs", &VectorDataset::inputs)
      .def_property_readonly("labels", &VectorDataset::labels)
      .def_property_readonly("per_class_counts", &VectorDataset::per_class_counts);
  m.def("generate_gaussian_mixture",
        [](std::size_t c, std::size_t p, std::size_t per_class, double spread, std::uint64_t seed, double min_angle) {
          return generate_gaussian_mixture({c, p, per_class, spread, min_angle, seed});
        },
        py::arg("c"), py::arg("p"), py::arg("per_class"), py::arg("spread"), py::arg("seed") = 0,
        py::arg("min_angle") = 0.3);
  m.def("long_tail_counts",
        [](std::size_t c, double mu, std::size_t max_per_class) { return long_tail_counts(c, {mu, max_per_class}); },
        py::arg("c"), py::arg("imbalance_factor"), py::arg("max_per_class"));
  m.def("apply_long_tail",
        [](const VectorDataset& ds, double mu, std::size_t max_per_class, std::uint64_t seed) {
          return apply_long_tail(ds, {mu, max_per_class}, seed);
        },
        py::arg("dataset"), py::arg("imbalance_factor"), py::arg("max_per_class"), py::arg("seed") = 0);

  // trainer
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("sgd_momentum", &TrainConfig::sgd_momentum)
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("tau_prime", &TrainConfig::tau_prime)
      .def_readwrite("hidden_dims", &TrainConfig::hidden_dims)
      .def_readwrite("freeze_assignment", &TrainConfig::freeze_assignment)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_property(
          "loss_mode", [](const TrainConfig& c) { return to_string(c.loss_mode); },
          [](TrainConfig& c, const std::string& s) { c.loss_mode = parse_loss_mode(s); })
      .def_property(
          "class_weighting", [](const TrainConfig& c) { return to_string(c.class_weighting); },
          [](TrainConfig& c, const std::string& s) { c.class_weighting = parse_class_weighting(s); })
      .def_property(
          "random_initial_assignment",
          [](const TrainConfig& c) { return c.initial_assignment == InitialAssignment::random; },
          [](TrainConfig& c, bool r) { c.initial_assignment = r ? InitialAssignment::random : InitialAssignment::identity; });

  py::class_<MetricsRecord>(m, "MetricsRecord")
      .def_readonly("epoch", &MetricsRecord::epoch)
      .def_readonly("train_loss", &MetricsRecord::train_loss)
      .def_readonly("eval_accuracy", &MetricsRecord::eval_accuracy)
      .def_readonly("assignment_churn", &MetricsRecord::assignment_churn)
      .def_readonly("wall_time_ms", &MetricsRecord::wall_time_ms);

  py::class_<TrainState>(m, "TrainState")
      .def_property_readonly("assignment", [](const TrainState& s) { return mapping_of(s.assignment); })
      .def_property_readonly("representatives", [](const TrainState& s) { return s.representatives.matrix(); })
      .def_readonly("epoch", &TrainState::epoch)
      .def_readonly("history", &TrainState::history)
      .def("features",
           [](const TrainState& s, const Eigen::MatrixXd& inputs) {
             Eigen::MatrixXd z(static_cast<Eigen::Index>(s.params.output_dim()), inputs.cols());
             for (Eigen::Index i = 0; i < inputs.cols(); ++i) z.col(i) = forward(s.params, inputs.col(i));
             return z;
           },
           py::arg("inputs"), "Unit features for each input column.");

  m.def("train",
        [](const VectorDataset& ds, const Eigen::MatrixXd& w, const TrainConfig& cfg) {
          py::gil_scoped_release release;
          return train(ds, PrototypeMatrix(w, 1e-6), cfg);
        },
        py::arg("dataset"), py::arg("w"), py::arg("config"));
  m.def("evaluate",
        [](const TrainState& s, const Eigen::MatrixXd& w, const VectorDataset& ds) {
          if (s.classifier) return evaluate_classifier(s.params, *s.classifier, s.assignment, ds);
          return evaluate(s.params, PrototypeMatrix(w, 1e-6), s.assignment, ds);
        },
        py::arg("state"), py::arg("w"), py::arg("dataset"));
  m.def("class_weights", &class_weights, py::arg("counts"));

  m.def("benchmark_assignment",
        [](std::vector<std::size_t> cs, std::size_t repeats, std::uint64_t seed) {
          std::vector<std::pair<std::size_t, double>> out;
          for (const auto& t : benchmark_assignment(cs, repeats, seed)) out.emplace_back(t.classes, t.mean_ms);
          return out;
        },
        py::arg("classes"), py::arg("repeats") = 4, py::arg("seed") = 0);
}
