#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace protosphere {

/// Labeled vectors, one sample per column of `inputs` (p x n).
class VectorDataset {
 public:
  VectorDataset(std::size_t class_count, Eigen::MatrixXd inputs, std::vector<std::size_t> labels);

  std::size_t size() const { return labels_.size(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(inputs_.rows()); }
  std::size_t class_count() const { return class_count_; }

  auto input(std::size_t i) const { return inputs_.col(static_cast<Eigen::Index>(i)); }
  std::size_t label(std::size_t i) const { return labels_[i]; }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const std::vector<std::size_t>& labels() const { return labels_; }
  const std::vector<std::size_t>& per_class_counts() const { return counts_; }

  friend bool operator==(const VectorDataset& a, const VectorDataset& b);

 private:
  std::size_t class_count_;
  Eigen::MatrixXd inputs_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> counts_;
};

struct MixtureSpec {
  std::size_t classes = 10;
  std::size_t input_dim = 3;
  std::size_t per_class = 100;
  double spread = 0.1;
  double min_angle = 0.3;  // radians between class means
  std::uint64_t seed = 0;
};

/// Seeded random unit means in R^p (pairwise angle >= min_angle, by
/// rejection), plus isotropic normal noise of standard deviation `spread`.
/// Samples are grouped by class.
VectorDataset generate_gaussian_mixture(const MixtureSpec& spec);

/// Class means drawn by generate_gaussian_mixture for the same spec.
Eigen::MatrixXd mixture_means(const MixtureSpec& spec);

struct LongTailSpec {
  double imbalance_factor = 0.01;  // n_min / n_max, in (0, 1]
  std::size_t max_per_class = 100;
};

/// n_k = round(max_per_class * mu^(k / (c - 1))).
std::vector<std::size_t> long_tail_counts(std::size_t classes, const LongTailSpec& spec);

/// Keeps n_k seeded-randomly chosen samples of class k (original order kept).
VectorDataset apply_long_tail(const VectorDataset& dataset, const LongTailSpec& spec, std::uint64_t seed);

void save_dataset(const std::filesystem::path& path, const VectorDataset& dataset);
VectorDataset load_dataset(const std::filesystem::path& path);

}  // namespace protosphere
