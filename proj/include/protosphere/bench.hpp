#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protosphere/assignment.hpp"

namespace protosphere {

struct AssignmentTiming {
  std::size_t classes = 0;
  double mean_ms = 0.0;
};

/// Uniform [0, 1) entries, seeded.
CostMatrix random_cost_matrix(std::size_t c, std::uint64_t seed);

/// Mean wall time of hungarian_solve over `repeats` runs for each c, on a
/// seeded random cost matrix per c. Uses a monotonic clock.
std::vector<AssignmentTiming> benchmark_assignment(const std::vector<std::size_t>& class_counts,
                                                   std::size_t repeats, std::uint64_t seed);

std::string timings_csv(const std::vector<AssignmentTiming>& timings);

}  // namespace protosphere
