#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "protosphere/assignment.hpp"
#include "protosphere/hypersphere.hpp"

namespace protosphere {

struct AffineLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Parameters of the feature extractor: affine layers with tanh between
/// them, followed by division of the final output by its Euclidean norm.
class BackboneParams {
 public:
  BackboneParams() = default;
  explicit BackboneParams(std::vector<AffineLayer> layers);

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases.
  static BackboneParams initialize(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);

  std::vector<std::size_t> layer_dims() const;
  std::size_t input_dim() const { return static_cast<std::size_t>(layers_.front().weight.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers_.back().weight.rows()); }

  std::vector<AffineLayer>& layers() { return layers_; }
  const std::vector<AffineLayer>& layers() const { return layers_; }

  friend bool operator==(const BackboneParams& a, const BackboneParams& b);

 private:
  std::vector<AffineLayer> layers_;
};

/// Intermediate values of one forward pass, kept for backward().
struct ForwardTrace {
  std::vector<Eigen::VectorXd> inputs;  // input to each affine layer
  Eigen::VectorXd raw_output;           // final affine output before normalization
  Eigen::VectorXd feature;              // unit-norm output
};

ForwardTrace trace_forward(const BackboneParams& params, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Unit-norm feature for input `x`. Throws DegenerateError if the final affine
/// output is the zero vector.
Eigen::VectorXd forward(const BackboneParams& params, const Eigen::Ref<const Eigen::VectorXd>& x);

struct BackboneGradients {
  std::vector<AffineLayer> layers;
  Eigen::VectorXd input;
};

/// Reverse-mode gradients of upstream . forward(x), including the
/// normalization Jacobian (I - z z^T) / ||v||.
BackboneGradients backward(const BackboneParams& params, const ForwardTrace& trace,
                           const Eigen::Ref<const Eigen::VectorXd>& upstream);
BackboneGradients backward(const BackboneParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& upstream);

/// 0.5 * (z . w - 1)^2
double lipm_loss(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::VectorXd>& w);

/// Gradient of lipm_loss in z: (z . w - 1) * w.
///
/// The printed derivative reads "-(1 - z^T w) z^T w", which is a scalar; the
/// vector form here is the actual derivative of the loss.
Eigen::VectorXd lipm_grad(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::VectorXd>& w);

/// Per-sample L_IPM through any prototype source exposing column(k). Reads
/// exactly one column: the one assigned to `label`.
template <typename Prototypes>
double lipm_sample_loss(const Eigen::Ref<const Eigen::VectorXd>& z, std::size_t label,
                        const Prototypes& prototypes, const AssignmentMapping& a) {
  return lipm_loss(z, prototypes.column(a[label]));
}

/// Features (d x B, unit columns) with their labels.
struct FeatureBatch {
  Eigen::MatrixXd features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  void validate(std::size_t dim, std::size_t classes) const;
};

/// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Logits z . w_{A(k)} for k = 0..c-1, read through any prototype source.
template <typename Prototypes>
Eigen::VectorXd class_logits(const Eigen::Ref<const Eigen::VectorXd>& z, const Prototypes& prototypes,
                             const AssignmentMapping& a) {
  Eigen::VectorXd logits(static_cast<Eigen::Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k) logits(static_cast<Eigen::Index>(k)) = z.dot(prototypes.column(a[k]));
  return logits;
}

/// Mean softmax cross-entropy over the batch, logits z_i . w_{A(k)}.
double psc_ce_loss(const FeatureBatch& batch, const Eigen::MatrixXd& prototypes, const AssignmentMapping& a);

struct PullPush {
  Eigen::VectorXd pull;  // -(1 - p_y) w_{A(y)}
  Eigen::VectorXd push;  // sum_{j != y} p_j w_{A(j)}
};

/// Split of the single-sample CE gradient in z; pull + push is the full gradient.
PullPush psc_ce_feature_grad(const Eigen::Ref<const Eigen::VectorXd>& z, std::size_t label,
                             const Eigen::MatrixXd& prototypes, const AssignmentMapping& a);

/// Row i holds the class softmax of sample i.
Eigen::MatrixXd batch_probabilities(const FeatureBatch& batch, const Eigen::MatrixXd& prototypes,
                                    const AssignmentMapping& a);

struct AttractRepel {
  Eigen::VectorXd attract;  // -sum_{y_i = j} (1 - p_ij) z_i
  Eigen::VectorXd repel;    // sum_{y_i != j} p_ij z_i
};

/// Per-class prototype gradient of the summed (not averaged) batch CE.
/// `repel` is nonzero even when the batch has no sample of class j.
AttractRepel psc_prototype_grad(const FeatureBatch& batch, const Eigen::MatrixXd& probs, std::size_t j);

/// Optional learned classifier travels with the checkpoint for the CE baseline.
void save_checkpoint(const std::filesystem::path& path, const BackboneParams& params,
                     const std::optional<Eigen::MatrixXd>& classifier = std::nullopt);
BackboneParams load_checkpoint(const std::filesystem::path& path,
                               std::optional<Eigen::MatrixXd>* classifier = nullptr);

}  // namespace protosphere
