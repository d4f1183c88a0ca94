#include "protosphere/bench.hpp"

#include <chrono>
#include <random>

#include "protosphere/error.hpp"
#include "text_io.hpp"

namespace protosphere {

CostMatrix random_cost_matrix(std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(j, k) = dist(rng);
  }
  return CostMatrix(std::move(m));
}

std::vector<AssignmentTiming> benchmark_assignment(const std::vector<std::size_t>& class_counts,
                                                   std::size_t repeats, std::uint64_t seed) {
  if (repeats == 0) throw InvalidArgument("repeats must be positive");
  std::vector<AssignmentTiming> out;
  for (const auto c : class_counts) {
    if (c < 2) throw InvalidArgument("class counts must be at least 2");
    const CostMatrix cost = random_cost_matrix(c, seed + c);
    double total_ms = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto a = hungarian_solve(cost);
      const auto t1 = std::chrono::steady_clock::now();
      if (a.size() != c) throw std::logic_error("solver returned wrong size");
      total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    out.push_back({c, total_ms / static_cast<double>(repeats)});
  }
  return out;
}

std::string timings_csv(const std::vector<AssignmentTiming>& timings) {
  std::string out = "c,mean_ms\n";
  for (const auto& t : timings) out += std::to_string(t.classes) + "," + text::format_double(t.mean_ms) + "\n";
  return out;
}

}  // namespace protosphere
