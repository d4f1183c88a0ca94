#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace protosphere {

/// A fixed set of unit-norm prototypes stored column-wise (d x c).
///
/// Construction validates the shape (d >= 2, c >= 2) and that every column
/// has unit norm within `kUnitTolerance`. Once built the matrix is immutable.
class PrototypeMatrix {
 public:
  static constexpr double kUnitTolerance = 1e-9;

  explicit PrototypeMatrix(Eigen::MatrixXd columns, double unit_tolerance = kUnitTolerance);

  std::size_t dim() const { return static_cast<std::size_t>(columns_.rows()); }
  std::size_t count() const { return static_cast<std::size_t>(columns_.cols()); }

  auto column(std::size_t k) const { return columns_.col(static_cast<Eigen::Index>(k)); }
  const Eigen::MatrixXd& matrix() const { return columns_; }

  // FNV-1a over the raw bytes of every entry.
  std::uint64_t checksum() const;

  friend bool operator==(const PrototypeMatrix& a, const PrototypeMatrix& b) {
    return a.columns_ == b.columns_;
  }

 private:
  Eigen::MatrixXd columns_;
};

struct UniformityConfig {
  double temperature = 2.0;
  double learning_rate = 0.1;
  std::size_t iterations = 1000;
  // 0 means "all prototypes".
  std::size_t subset_size = 0;
  std::uint64_t seed = 0;

  // Throws InvalidArgument when a field is out of range for `count` prototypes.
  void validate(std::size_t count) const;
};

/// exp(-t * ||u - v||^2).
double gaussian_potential(const Eigen::Ref<const Eigen::VectorXd>& u,
                          const Eigen::Ref<const Eigen::VectorXd>& v, double t);

/// log( (1/|subset|) * sum_{i in subset} sum_{j} exp(-t ||w_i - w_j||^2) ).
///
/// Self-pairs (i == j) are part of the sum. Operates on a raw matrix so that
/// finite-difference checks can perturb columns off the sphere.
double uniformity_loss(const Eigen::MatrixXd& w, std::span<const std::size_t> subset, double t);

/// Euclidean gradient of `uniformity_loss` with respect to every entry of `w`.
Eigen::MatrixXd uniformity_gradient(const Eigen::MatrixXd& w, std::span<const std::size_t> subset,
                                    double t);

// Called after each projected step with the 1-based iteration number.
using EstimationObserver = std::function<void(std::size_t, const Eigen::MatrixXd&)>;

/// Projected gradient descent on the uniformity loss, starting from a seeded
/// standard-normal draw. Every column is renormalized after each step.
PrototypeMatrix estimate_prototypes(std::size_t dim, std::size_t count,
                                    const UniformityConfig& config,
                                    const EstimationObserver& observer = {});

/// Regular c-gon on the unit circle, first vertex at angle 0.
PrototypeMatrix circle_prototypes(std::size_t count);

/// Seeded standard-normal columns, normalized. Used as the degenerate
/// baseline in geometry comparisons.
PrototypeMatrix random_prototypes(std::size_t dim, std::size_t count, std::uint64_t seed);

struct GeometryReport {
  double apad = 0.0;  // mean pairwise angle, radians
  double min_cos = 0.0;
  double max_cos = 0.0;
  double min_pairwise_distance = 0.0;  // min of 1 - cos
  double etf_gap = 0.0;                // max |cos + 1/(c-1)|
};

GeometryReport geometry_report(const PrototypeMatrix& w);

struct PrototypeFileInfo {
  double temperature = 2.0;
  std::uint64_t seed = 0;
};

void save_prototypes(const std::filesystem::path& path, const PrototypeMatrix& w,
                     const PrototypeFileInfo& info);
PrototypeMatrix load_prototypes(const std::filesystem::path& path,
                                PrototypeFileInfo* info = nullptr);

}  // namespace protosphere
