#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "protosphere/hypersphere.hpp"

namespace protosphere {

/// Bijection from class labels to prototype indices: `at(j)` is the
/// prototype assigned to label j. Always a permutation of 0..c-1.
class AssignmentMapping {
 public:
  explicit AssignmentMapping(std::vector<std::size_t> mapping);

  static AssignmentMapping identity(std::size_t count);
  static AssignmentMapping random(std::size_t count, std::uint64_t seed);

  std::size_t size() const { return mapping_.size(); }
  std::size_t operator[](std::size_t label) const { return mapping_[label]; }
  std::span<const std::size_t> values() const { return mapping_; }

  // Label currently mapped to `prototype`.
  std::size_t label_of(std::size_t prototype) const;

  friend bool operator==(const AssignmentMapping&, const AssignmentMapping&) = default;

 private:
  std::vector<std::size_t> mapping_;
};

/// Momentum-averaged, unit-normalized class representatives (d x c).
class ClassRepresentatives {
 public:
  ClassRepresentatives(std::size_t dim, std::size_t count);

  std::size_t dim() const { return static_cast<std::size_t>(columns_.rows()); }
  std::size_t count() const { return static_cast<std::size_t>(columns_.cols()); }
  bool seen(std::size_t label) const { return seen_[label]; }
  bool all_seen() const;
  auto column(std::size_t label) const { return columns_.col(static_cast<Eigen::Index>(label)); }
  const Eigen::MatrixXd& matrix() const { return columns_; }

  /// First observation sets the column; later ones blend
  /// alpha * old + (1 - alpha) * z and renormalize. Throws DegenerateError if
  /// the blend cancels to zero.
  void update(std::size_t label, const Eigen::Ref<const Eigen::VectorXd>& z, double alpha);

  /// Builds a fully-seen set from explicit unit columns.
  static ClassRepresentatives from_columns(const Eigen::MatrixXd& columns);

 private:
  Eigen::MatrixXd columns_;
  std::vector<bool> seen_;
};

/// Value-returning form of ClassRepresentatives::update.
ClassRepresentatives update_representative(ClassRepresentatives q, std::size_t label,
                                           const Eigen::Ref<const Eigen::VectorXd>& z,
                                           double alpha);

/// Square cost matrix, entry (j, k) = cost of sending label j to prototype k.
class CostMatrix {
 public:
  explicit CostMatrix(Eigen::MatrixXd entries);

  std::size_t size() const { return static_cast<std::size_t>(entries_.rows()); }
  double operator()(std::size_t j, std::size_t k) const {
    return entries_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  }
  const Eigen::MatrixXd& entries() const { return entries_; }

  double total(const AssignmentMapping& a) const;

 private:
  Eigen::MatrixXd entries_;
};

/// entries(j, k) = -(zbar_j . w_k). Requires every class to be seen.
CostMatrix build_cost_matrix(const ClassRepresentatives& q, const PrototypeMatrix& w);

/// Minimum-cost perfect matching in O(c^3) via shortest augmenting paths.
///
/// Among all optimal assignments the lexicographically smallest mapping is
/// returned, so the result is a pure function of the cost values.
AssignmentMapping hungarian_solve(const CostMatrix& cost);

/// hungarian_solve(build_cost_matrix(q, w)).
AssignmentMapping reassign(const ClassRepresentatives& q, const PrototypeMatrix& w);

/// Fraction of labels whose prototype differs between the two mappings.
double assignment_churn(const AssignmentMapping& prev, const AssignmentMapping& next);

struct PermutationSummary {
  std::size_t fixed_points = 0;
  // Cycle lengths in descending order, fixed points excluded.
  std::vector<std::size_t> cycle_lengths;
};

PermutationSummary summarize_permutation(const AssignmentMapping& a);

void save_assignment(const std::filesystem::path& path, const AssignmentMapping& a);
AssignmentMapping load_assignment(const std::filesystem::path& path);

}  // namespace protosphere
