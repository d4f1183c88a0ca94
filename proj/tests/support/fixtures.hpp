// Training fixtures shared by the trainer unit tests and the acceptance run.
#pragma once

#include <vector>

#include "protosphere/data.hpp"
#include "protosphere/hypersphere.hpp"
#include "protosphere/model.hpp"
#include "protosphere/trainer.hpp"

namespace fixture {

// Inputs are exactly the prototypes of a hidden permutation, so a backbone
// that starts at the identity already separates the classes; only the
// label-to-prototype mapping has to be discovered.
struct Separable {
  protosphere::PrototypeMatrix w;
  protosphere::AssignmentMapping hidden;
  protosphere::VectorDataset data;
  protosphere::BackboneParams identity;
};

inline Separable separable(std::size_t dim = 4, std::size_t classes = 6, std::size_t per_class = 5) {
  protosphere::UniformityConfig ucfg;
  ucfg.iterations = 300;
  ucfg.seed = 1;
  auto w = protosphere::estimate_prototypes(dim, classes, ucfg);
  // Seed 5 yields a permutation without fixed points at the default size.
  auto hidden = protosphere::AssignmentMapping::random(classes, 5);

  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(classes * per_class));
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t s = 0; s < per_class; ++s) {
      inputs.col(static_cast<Eigen::Index>(labels.size())) = w.column(hidden[k]);
      labels.push_back(k);
    }
  }
  protosphere::BackboneParams identity({protosphere::AffineLayer{
      Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)),
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim))}});
  return {std::move(w), std::move(hidden), protosphere::VectorDataset(classes, std::move(inputs), std::move(labels)),
          std::move(identity)};
}

inline protosphere::TrainConfig separable_config(std::size_t epochs) {
  protosphere::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 10;
  cfg.learning_rate = 0.01;
  cfg.hidden_dims = {};
  cfg.seed = 3;
  return cfg;
}

// Sixteen spherical clusters in R^3 mapped to sixteen prototypes on S^2.
// Accuracy is measured on the training set, as in the paired ablation runs.
struct Clusters {
  protosphere::PrototypeMatrix w;
  protosphere::VectorDataset data;
};

inline constexpr std::size_t kClusterClasses = 16;

inline Clusters clusters(std::uint64_t seed) {
  auto w = protosphere::estimate_prototypes(3, kClusterClasses, protosphere::UniformityConfig{});
  protosphere::MixtureSpec spec;
  spec.classes = kClusterClasses;
  spec.input_dim = 3;
  spec.per_class = 50;
  spec.spread = 0.1;
  spec.seed = 100 + seed;
  return {std::move(w), protosphere::generate_gaussian_mixture(spec)};
}

inline protosphere::TrainConfig clusters_config(std::uint64_t seed) {
  protosphere::TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.2;
  cfg.hidden_dims = {8};
  cfg.seed = seed;
  return cfg;
}

}  // namespace fixture
