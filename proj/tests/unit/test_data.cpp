#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "protosphere/data.hpp"
#include "protosphere/error.hpp"
#include "scratch_dir.hpp"

using namespace protosphere;

namespace {

double nearest_mean_accuracy(const VectorDataset& ds, const Eigen::MatrixXd& means) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Eigen::Index best = 0;
    (means.colwise() - ds.input(i)).colwise().squaredNorm().minCoeff(&best);
    correct += static_cast<std::size_t>(best) == ds.label(i);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace

TEST(Mixture, Bookkeeping) {
  const auto ds = generate_gaussian_mixture({5, 3, 10, 0.1, 0.3, 1});
  EXPECT_EQ(ds.size(), 50u);
  EXPECT_EQ(ds.input_dim(), 3u);
  EXPECT_EQ(ds.class_count(), 5u);
  EXPECT_EQ(ds.per_class_counts(), (std::vector<std::size_t>(5, 10)));
}

TEST(Mixture, NoiselessSamplesSitOnTheirMean) {
  const MixtureSpec spec{6, 4, 7, 0.0, 0.3, 2};
  const auto ds = generate_gaussian_mixture(spec);
  const auto means = mixture_means(spec);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.input(i), means.col(static_cast<Eigen::Index>(ds.label(i))));
  }
  EXPECT_EQ(nearest_mean_accuracy(ds, means), 1.0);
}

TEST(Mixture, MeansRespectMinimumAngle) {
  const MixtureSpec spec{12, 3, 1, 0.1, 0.5, 3};
  const auto means = mixture_means(spec);
  for (Eigen::Index i = 0; i < means.cols(); ++i) {
    EXPECT_NEAR(means.col(i).norm(), 1.0, 1e-12);
    for (Eigen::Index j = i + 1; j < means.cols(); ++j) {
      EXPECT_GE(std::acos(std::clamp(means.col(i).dot(means.col(j)), -1.0, 1.0)), 0.5 - 1e-12);
    }
  }
}

TEST(Mixture, WellSeparatedPairIsNearlyPerfect) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MixtureSpec spec{2, 3, 500, 0.05, std::numbers::pi / 2, seed};
    const auto ds = generate_gaussian_mixture(spec);
    EXPECT_GT(nearest_mean_accuracy(ds, mixture_means(spec)), 0.999);
  }
}

TEST(Mixture, SpreadMatchesNoiseLevel) {
  const MixtureSpec spec{3, 5, 2000, 0.2, 0.3, 9};
  const auto ds = generate_gaussian_mixture(spec);
  const auto means = mixture_means(spec);
  double sq = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) sq += (ds.input(i) - means.col(static_cast<Eigen::Index>(ds.label(i)))).squaredNorm();
  const double sd = std::sqrt(sq / static_cast<double>(ds.size() * 5));
  EXPECT_NEAR(sd, 0.2, 0.005);
}

TEST(Mixture, DeterministicPerSeed) {
  const MixtureSpec spec{4, 3, 20, 0.1, 0.3, 7};
  EXPECT_EQ(generate_gaussian_mixture(spec), generate_gaussian_mixture(spec));
  MixtureSpec other = spec;
  other.seed = 8;
  EXPECT_FALSE(generate_gaussian_mixture(spec) == generate_gaussian_mixture(other));
}

TEST(Mixture, CrowdedMeansFail) {
  EXPECT_THROW(generate_gaussian_mixture({20, 2, 1, 0.1, 1.0, 0}), InvalidArgument);
  EXPECT_THROW(generate_gaussian_mixture({1, 2, 1, 0.1, 0.3, 0}), InvalidArgument);
  EXPECT_THROW(generate_gaussian_mixture({2, 2, 0, 0.1, 0.3, 0}), InvalidArgument);
  EXPECT_THROW(generate_gaussian_mixture({2, 2, 1, -0.1, 0.3, 0}), InvalidArgument);
}

TEST(LongTail, CountsMatchFormula) {
  const auto counts = long_tail_counts(10, {0.01, 100});
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_EQ(counts[k], static_cast<std::size_t>(std::llround(100.0 * std::pow(0.01, static_cast<double>(k) / 9.0))));
  }
  EXPECT_EQ(counts.front(), 100u);
  EXPECT_EQ(counts.back(), 1u);
}

TEST(LongTail, EndpointsForReportedFactors) {
  const auto ds = generate_gaussian_mixture({10, 3, 100, 0.1, 0.3, 4});
  for (const double mu : {0.005, 0.01, 0.02}) {
    const auto lt = apply_long_tail(ds, {mu, 100}, 1);
    const auto& counts = lt.per_class_counts();
    EXPECT_EQ(counts.front(), 100u);
    EXPECT_EQ(counts.back(), static_cast<std::size_t>(std::llround(100.0 * mu)));
    for (std::size_t k = 1; k < counts.size(); ++k) EXPECT_LE(counts[k], counts[k - 1]);
    for (const auto n : counts) EXPECT_GE(n, 1u);
  }
}

TEST(LongTail, BalancedEndpointKeepsCounts) {
  const auto ds = generate_gaussian_mixture({4, 3, 30, 0.1, 0.3, 4});
  const auto lt = apply_long_tail(ds, {1.0, 30}, 2);
  EXPECT_EQ(lt.per_class_counts(), ds.per_class_counts());
  EXPECT_EQ(lt, ds);
}

TEST(LongTail, KeepsOriginalSamplesInOrder) {
  const auto ds = generate_gaussian_mixture({5, 2, 40, 0.1, 0.3, 5});
  const auto lt = apply_long_tail(ds, {0.1, 40}, 3);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < lt.size(); ++i) {
    while (cursor < ds.size() && ds.input(cursor) != lt.input(i)) ++cursor;
    ASSERT_LT(cursor, ds.size()) << "sample " << i << " not found in order";
    EXPECT_EQ(ds.label(cursor), lt.label(i));
  }
  EXPECT_EQ(apply_long_tail(ds, {0.1, 40}, 3), lt);
}

TEST(LongTail, RejectsInvalidSpecs) {
  const auto ds = generate_gaussian_mixture({3, 2, 10, 0.1, 0.3, 0});
  EXPECT_THROW(apply_long_tail(ds, {0.5, 11}, 0), InvalidArgument);
  EXPECT_THROW(apply_long_tail(ds, {0.0, 10}, 0), InvalidArgument);
  EXPECT_THROW(apply_long_tail(ds, {1.5, 10}, 0), InvalidArgument);
}

TEST(DatasetFile, RoundTripIsBitwise) {
  ScratchDir dir("data");
  const auto ds = apply_long_tail(generate_gaussian_mixture({6, 4, 25, 0.3, 0.3, 11}), {0.1, 25}, 1);
  save_dataset(dir / "d.txt", ds);
  EXPECT_EQ(load_dataset(dir / "d.txt"), ds);
  std::ifstream in(dir / "d.txt");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "# protosphere-dataset v1 n=" + std::to_string(ds.size()) + " p=4 c=6");
}

TEST(DatasetFile, LoaderDiagnostics) {
  ScratchDir dir("data-bad");
  auto message = [&](const std::string& body) {
    std::ofstream(dir / "x.txt") << body;
    try {
      load_dataset(dir / "x.txt");
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string("<no error>");
  };
  const std::string truncated = message("# protosphere-dataset v1 n=2 p=2 c=2\n0.5,0.5,1\n0.5,0\n");
  EXPECT_NE(truncated.find("width mismatch"), std::string::npos);
  EXPECT_NE(truncated.find(":3"), std::string::npos) << truncated;

  const std::string label = message("# protosphere-dataset v1 n=1 p=2 c=2\n0.5,0.5,2\n");
  EXPECT_NE(label.find("out of range"), std::string::npos);

  const std::string header = message("# protosphere-dataset v1 n=1 p=2\n0.5,0.5,1\n");
  EXPECT_NE(header.find("malformed header"), std::string::npos);

  EXPECT_NE(message("# protosphere-dataset v1 n=3 p=2 c=2\n0.5,0.5,1\n"), "<no error>");
  EXPECT_NE(message("# protosphere-dataset v1 n=1 p=2 c=2\n0.5,abc,1\n"), "<no error>");
}

TEST(VectorDataset, ValidatesLabels) {
  EXPECT_THROW(VectorDataset(2, Eigen::MatrixXd::Zero(2, 2), {0, 2}), InvalidArgument);
  EXPECT_THROW(VectorDataset(2, Eigen::MatrixXd::Zero(2, 2), {0}), InvalidArgument);
  const VectorDataset ok(3, Eigen::MatrixXd::Zero(2, 4), {0, 2, 2, 0});
  EXPECT_EQ(ok.per_class_counts(), (std::vector<std::size_t>{2, 0, 2}));
}
