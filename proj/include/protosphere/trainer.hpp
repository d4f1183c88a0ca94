#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "protosphere/assignment.hpp"
#include "protosphere/data.hpp"
#include "protosphere/hypersphere.hpp"
#include "protosphere/model.hpp"

namespace protosphere {

enum class LossMode {
  lipm,      // regression toward the assigned fixed prototype
  psc_ce,    // learnable linear classifier initialized from W, identity assignment
  fixed_ce,  // cross-entropy against the fixed prototypes under the current assignment
};

enum class ClassWeighting { none, inverse_frequency };

enum class InitialAssignment { identity, random };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& s);
std::string to_string(ClassWeighting w);
ClassWeighting parse_class_weighting(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double sgd_momentum = 0.9;
  double alpha = 0.9;       // representative momentum
  double tau_prime = 1.0;   // reassignments per epoch
  ClassWeighting class_weighting = ClassWeighting::none;
  LossMode loss_mode = LossMode::lipm;
  std::vector<std::size_t> hidden_dims = {32};
  bool freeze_assignment = false;
  InitialAssignment initial_assignment = InitialAssignment::identity;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
  double assignment_churn = 0.0;
  std::uint64_t wall_time_ms = 0;
};

struct TrainState {
  BackboneParams params;
  AssignmentMapping assignment;
  ClassRepresentatives representatives;
  std::size_t epoch = 0;
  std::vector<MetricsRecord> history;
  // Learned classifier columns, only for LossMode::psc_ce.
  std::optional<Eigen::MatrixXd> classifier;
};

/// floor(steps_per_epoch / tau_prime), at least 1.
std::size_t reassignment_interval(std::size_t steps_per_epoch, double tau_prime);

/// (sum(counts) / c) / counts[k].
std::vector<double> class_weights(const std::vector<std::size_t>& counts);

/// Alternates SGD on the backbone with Hungarian reassignment of labels to
/// the fixed prototypes. W is never modified. Accuracy in the history is
/// measured on `eval` when given, else on the training set. The backbone
/// starts from `initial_params` when given, else from a seeded init.
TrainState train(const VectorDataset& dataset, const PrototypeMatrix& w, const TrainConfig& config,
                 const VectorDataset* eval = nullptr, const BackboneParams* initial_params = nullptr);

/// Accuracy of argmax_k z . w_{A(k)}; ties go to the lowest label.
double evaluate(const BackboneParams& params, const PrototypeMatrix& w, const AssignmentMapping& a,
                const VectorDataset& dataset);

/// Same rule against an arbitrary (possibly learned, non-unit) classifier.
double evaluate_classifier(const BackboneParams& params, const Eigen::MatrixXd& classifier,
                           const AssignmentMapping& a, const VectorDataset& dataset);

/// One JSON object per line with keys epoch, train_loss, eval_accuracy,
/// assignment_churn, wall_time_ms.
std::string metrics_line(const MetricsRecord& record);
void write_metrics_log(const std::filesystem::path& path, const std::vector<MetricsRecord>& history);
std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path);

}  // namespace protosphere
