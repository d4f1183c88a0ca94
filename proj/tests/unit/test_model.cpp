#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "protosphere/error.hpp"
#include "protosphere/model.hpp"
#include "scratch_dir.hpp"

using namespace protosphere;

namespace {

BackboneParams random_params(const std::vector<std::size_t>& dims, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.7);
  std::vector<AffineLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    AffineLayer layer{Eigen::MatrixXd(dims[l + 1], dims[l]), Eigen::VectorXd(dims[l + 1])};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = normal(rng);
    layers.push_back(std::move(layer));
  }
  return BackboneParams(std::move(layers));
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

std::vector<std::size_t> random_dims(std::mt19937_64& rng) {
  std::vector<std::size_t> dims{2 + rng() % 4};
  const std::size_t hidden = rng() % 3;
  for (std::size_t h = 0; h < hidden; ++h) dims.push_back(2 + rng() % 5);
  dims.push_back(2 + rng() % 4);
  return dims;
}

// Counts column reads so tests can observe which prototypes a loss touches.
struct CountingPrototypes {
  const Eigen::MatrixXd& m;
  mutable std::vector<int> reads;
  explicit CountingPrototypes(const Eigen::MatrixXd& w) : m(w), reads(static_cast<std::size_t>(w.cols()), 0) {}
  auto column(std::size_t k) const {
    ++reads[k];
    return m.col(static_cast<Eigen::Index>(k));
  }
};

}  // namespace

TEST(Forward, IdentityLayerNormalizes) {
  const BackboneParams p({AffineLayer{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)}});
  const Eigen::VectorXd z = forward(p, Eigen::Vector2d(3.0, 4.0));
  EXPECT_NEAR(z(0), 0.6, 1e-15);
  EXPECT_NEAR(z(1), 0.8, 1e-15);
}

TEST(Forward, OutputIsUnitAndMatchesStraightLineOracle) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    auto dims = random_dims(rng);
    dims.back() = 4;
    const auto p = random_params(dims, rng);
    const Eigen::VectorXd x = random_vector(static_cast<Eigen::Index>(dims.front()), rng);
    const Eigen::VectorXd z = forward(p, x);
    EXPECT_NEAR(z.norm(), 1.0, 1e-9);
    std::vector<Eigen::MatrixXd> ws;
    std::vector<Eigen::VectorXd> bs;
    for (const auto& l : p.layers()) {
      ws.push_back(l.weight);
      bs.push_back(l.bias);
    }
    EXPECT_LT((z - oracle::mlp_forward(ws, bs, x)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, ZeroPreNormalizationIsDegenerate) {
  const BackboneParams p({AffineLayer{Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3)}});
  EXPECT_THROW(forward(p, Eigen::Vector2d(1.0, 2.0)), DegenerateError);
  EXPECT_THROW(forward(p, Eigen::Vector3d(1.0, 2.0, 3.0)), InvalidArgument);
}

TEST(Forward, ScalingFinalLayerLeavesOutputUnchanged) {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    const auto dims = random_dims(rng);
    auto p = random_params(dims, rng);
    const Eigen::VectorXd x = random_vector(static_cast<Eigen::Index>(dims.front()), rng);
    const Eigen::VectorXd before = forward(p, x);
    const double s = 0.01 + static_cast<double>(rng() % 1000) / 10.0;
    p.layers().back().weight *= s;
    p.layers().back().bias *= s;
    EXPECT_LT((forward(p, x) - before).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(BackboneParams, InitializeIsSeededUniformWithZeroBias) {
  const auto p = BackboneParams::initialize({5, 8, 3}, 4);
  EXPECT_EQ(p.layer_dims(), (std::vector<std::size_t>{5, 8, 3}));
  EXPECT_LE(p.layers()[0].weight.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(5.0));
  EXPECT_LE(p.layers()[1].weight.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(8.0));
  EXPECT_EQ(p.layers()[0].bias.norm(), 0.0);
  EXPECT_EQ(p, BackboneParams::initialize({5, 8, 3}, 4));
  EXPECT_FALSE(p == BackboneParams::initialize({5, 8, 3}, 5));
  EXPECT_THROW(BackboneParams::initialize({5}, 0), InvalidArgument);
}

TEST(BackboneParams, RejectsMismatchedLayers) {
  std::vector<AffineLayer> layers{{Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3)},
                                  {Eigen::MatrixXd::Zero(2, 4), Eigen::VectorXd::Zero(2)}};
  EXPECT_THROW(BackboneParams{layers}, InvalidArgument);
  EXPECT_THROW(BackboneParams({AffineLayer{Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(2)}}), InvalidArgument);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(30);
  const auto p = random_params({3, 5, 4}, rng);
  const auto g = backward(p, random_vector(3, rng), Eigen::VectorXd::Zero(4));
  for (const auto& l : g.layers) {
    EXPECT_EQ(l.weight.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(g.input.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, UpstreamAlongFeatureIsAbsorbedByNormalization) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_params({3, 6, 4}, rng);
    const Eigen::VectorXd x = random_vector(3, rng);
    const Eigen::VectorXd z = forward(p, x);
    const auto g = backward(p, x, 2.5 * z);
    EXPECT_LT(g.input.cwiseAbs().maxCoeff(), 1e-12);
    for (const auto& l : g.layers) EXPECT_LT(l.weight.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 25; ++trial) {
    const auto dims = random_dims(rng);
    const auto p = random_params(dims, rng);
    const Eigen::VectorXd x = random_vector(static_cast<Eigen::Index>(dims.front()), rng);
    const Eigen::VectorXd up = random_vector(static_cast<Eigen::Index>(dims.back()), rng);
    const auto g = backward(p, x, up);

    for (std::size_t l = 0; l < p.layers().size(); ++l) {
      const auto fw = oracle::central_difference(
          [&](const Eigen::MatrixXd& m) {
            auto q = p;
            q.layers()[l].weight = m;
            return up.dot(forward(q, x));
          },
          p.layers()[l].weight);
      EXPECT_LT(oracle::max_relative_error(g.layers[l].weight, fw), 1e-6) << "trial " << trial << " layer " << l;
      const auto fb = oracle::central_difference_vec(
          [&](const Eigen::VectorXd& b) {
            auto q = p;
            q.layers()[l].bias = b;
            return up.dot(forward(q, x));
          },
          p.layers()[l].bias);
      EXPECT_LT(oracle::max_relative_error(g.layers[l].bias, fb), 1e-6) << "trial " << trial << " layer " << l;
    }
    const auto fx = oracle::central_difference_vec([&](const Eigen::VectorXd& v) { return up.dot(forward(p, v)); }, x);
    EXPECT_LT(oracle::max_relative_error(g.input, fx), 1e-6);
  }
}

TEST(Lipm, LossExamples) {
  const Eigen::Vector3d w = Eigen::Vector3d::UnitX();
  EXPECT_EQ(lipm_loss(w, w), 0.0);
  EXPECT_DOUBLE_EQ(lipm_loss(Eigen::Vector3d::UnitY(), w), 0.5);
  EXPECT_DOUBLE_EQ(lipm_loss(-w, w), 2.0);
  EXPECT_THROW(lipm_loss(Eigen::Vector2d::UnitX(), w), InvalidArgument);
}

TEST(Lipm, GradientExamples) {
  const Eigen::Vector3d w = Eigen::Vector3d::UnitX();
  EXPECT_EQ(lipm_grad(w, w).norm(), 0.0);
  EXPECT_EQ(lipm_grad(Eigen::Vector3d::UnitY(), w), Eigen::Vector3d(-w));
}

TEST(Lipm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::MatrixXd zw = oracle::random_unit_columns(5, 2, rng);
    const Eigen::VectorXd z = zw.col(0), w = zw.col(1);
    const auto fd = oracle::central_difference_vec([&](const Eigen::VectorXd& v) { return lipm_loss(v, w); }, z);
    EXPECT_LT(oracle::max_relative_error(lipm_grad(z, w), fd), 1e-8);
  }
}

TEST(Lipm, TouchesExactlyOnePrototype) {
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd w = oracle::random_unit_columns(4, 9, rng);
  const auto a = AssignmentMapping::random(9, 3);
  const Eigen::VectorXd z = oracle::random_unit_columns(4, 1, rng).col(0);

  CountingPrototypes lipm_src(w);
  const double loss = lipm_sample_loss(z, 5, lipm_src, a);
  EXPECT_DOUBLE_EQ(loss, lipm_loss(z, w.col(static_cast<Eigen::Index>(a[5]))));
  int total = 0;
  for (std::size_t k = 0; k < 9; ++k) total += lipm_src.reads[k];
  EXPECT_EQ(total, 1);
  EXPECT_EQ(lipm_src.reads[a[5]], 1);

  CountingPrototypes ce_src(w);
  class_logits(z, ce_src, a);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(ce_src.reads[k], 1);
}

TEST(CrossEntropy, SymmetricPairIsLn2) {
  Eigen::MatrixXd w(2, 2);
  w << 1, -1, 0, 0;
  FeatureBatch b{Eigen::Vector2d::UnitY(), {0}};
  EXPECT_NEAR(psc_ce_loss(b, w, AssignmentMapping::identity(2)), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, AlignedWithOrthogonalRivals) {
  const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(3, 3);
  const AssignmentMapping a({2, 0, 1});
  FeatureBatch b{w.col(static_cast<Eigen::Index>(a[1])), {1}};
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  EXPECT_NEAR(psc_ce_loss(b, w, a), expected, 1e-15);
  EXPECT_NEAR(psc_ce_loss(b, w, a), 0.5514, 1e-4);
}

TEST(CrossEntropy, MatchesDirectLogSumExp) {
  std::mt19937_64 rng(50);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 2 + rng() % 8;
    const Eigen::MatrixXd w = oracle::random_unit_columns(5, static_cast<Eigen::Index>(c), rng);
    FeatureBatch b{oracle::random_unit_columns(5, 12, rng), {}};
    for (int i = 0; i < 12; ++i) b.labels.push_back(rng() % c);
    const auto a = AssignmentMapping::random(c, rng());
    EXPECT_NEAR(psc_ce_loss(b, w, a), oracle::ce_direct(b.features, b.labels, w, {a.values().begin(), a.values().end()}),
                1e-12);
  }
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd logits = 30.0 * random_vector(7, rng);
    const Eigen::VectorXd p = softmax(logits);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    const double shift = 1000.0 * random_vector(1, rng)(0);
    const Eigen::VectorXd q = softmax(logits.array() + shift);
    EXPECT_LT((p - q).cwiseAbs().maxCoeff(), 1e-12);
    // Per-sample CE is -log p_y, so it inherits the invariance.
    EXPECT_NEAR(-std::log(p(3)), -std::log(q(3)), 1e-12 * std::max(1.0, -std::log(p(3))));
  }
}

TEST(CrossEntropy, ShiftingEveryLogitLeavesLossUnchanged) {
  // Prototypes sharing a component along e_0 shift every logit by the same
  // amount when the feature moves along e_0.
  std::mt19937_64 rng(52);
  Eigen::MatrixXd w = oracle::random_unit_columns(4, 5, rng);
  w.row(0).setConstant(0.5);
  for (Eigen::Index k = 0; k < 5; ++k) w.block(1, k, 3, 1) *= std::sqrt(0.75) / w.block(1, k, 3, 1).norm();
  FeatureBatch b{oracle::random_unit_columns(4, 6, rng), {0, 1, 2, 3, 4, 0}};
  const auto a = AssignmentMapping::random(5, 1);
  const double base = psc_ce_loss(b, w, a);
  FeatureBatch shifted = b;
  shifted.features.row(0).array() += 3.0;
  EXPECT_NEAR(psc_ce_loss(shifted, w, a), base, 1e-12);
}

TEST(CeFeatureGrad, SymmetricPair) {
  Eigen::MatrixXd w(2, 2);
  w << 1, -1, 0, 0;
  const AssignmentMapping a({1, 0});
  const auto g = psc_ce_feature_grad(Eigen::Vector2d::UnitY(), 0, w, a);
  EXPECT_LT((g.pull - (-0.5 * w.col(1))).norm(), 1e-15);
  EXPECT_LT((g.push - 0.5 * w.col(0)).norm(), 1e-15);
}

TEST(CeFeatureGrad, SaturatedSoftmaxVanishes) {
  const Eigen::MatrixXd w = 50.0 * Eigen::MatrixXd::Identity(3, 3);
  const auto g = psc_ce_feature_grad(Eigen::Vector3d::UnitZ(), 2, w, AssignmentMapping::identity(3));
  EXPECT_LT(g.pull.norm(), 1e-15);
  EXPECT_LT(g.push.norm(), 1e-15);
}

TEST(CeFeatureGrad, PullPlusPushMatchesFiniteDifferences) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t c = 2 + rng() % 8;
    const Eigen::MatrixXd w = oracle::random_unit_columns(6, static_cast<Eigen::Index>(c), rng);
    const Eigen::VectorXd z = oracle::random_unit_columns(6, 1, rng).col(0);
    const std::size_t y = rng() % c;
    const auto a = AssignmentMapping::random(c, rng());
    const auto g = psc_ce_feature_grad(z, y, w, a);
    const auto fd = oracle::central_difference_vec(
        [&](const Eigen::VectorXd& v) { return psc_ce_loss(FeatureBatch{v, {y}}, w, a); }, z);
    EXPECT_LT(oracle::max_relative_error(g.pull + g.push, fd), 1e-6);

    // Monolithic gradient sum_k p_k w_{A(k)} - w_{A(y)}.
    Eigen::VectorXd logits(static_cast<Eigen::Index>(c));
    for (std::size_t k = 0; k < c; ++k) logits(static_cast<Eigen::Index>(k)) = oracle::dot(z, w.col(static_cast<Eigen::Index>(a[k])));
    const Eigen::VectorXd p = logits.array().exp() / logits.array().exp().sum();
    Eigen::VectorXd full = -w.col(static_cast<Eigen::Index>(a[y]));
    for (std::size_t k = 0; k < c; ++k) full += p(static_cast<Eigen::Index>(k)) * w.col(static_cast<Eigen::Index>(a[k]));
    EXPECT_LT((g.pull + g.push - full).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CePrototypeGrad, PassiveUpdateWithoutPositives) {
  std::mt19937_64 rng(60);
  const Eigen::MatrixXd w = oracle::random_unit_columns(4, 5, rng);
  FeatureBatch b{oracle::random_unit_columns(4, 6, rng), {0, 1, 1, 2, 3, 0}};
  const auto probs = batch_probabilities(b, w, AssignmentMapping::identity(5));
  const auto g = psc_prototype_grad(b, probs, 4);
  EXPECT_EQ(g.attract.norm(), 0.0);
  EXPECT_GT(g.repel.norm(), 0.0);
}

TEST(CePrototypeGrad, SaturatedSingleSample) {
  FeatureBatch b{Eigen::Vector3d::UnitX(), {1}};
  Eigen::MatrixXd probs(1, 3);
  probs << 0, 1, 0;
  const auto g = psc_prototype_grad(b, probs, 1);
  EXPECT_EQ(g.attract.norm(), 0.0);
  EXPECT_EQ(g.repel.norm(), 0.0);
}

TEST(CePrototypeGrad, RejectsMalformedRows) {
  FeatureBatch b{Eigen::Vector3d::UnitX(), {1}};
  Eigen::MatrixXd probs(1, 3);
  probs << 0.2, 0.2, 0.2;
  EXPECT_THROW(psc_prototype_grad(b, probs, 1), InvalidArgument);
  probs << -0.5, 1.0, 0.5;
  EXPECT_THROW(psc_prototype_grad(b, probs, 1), InvalidArgument);
  probs << 0.2, 0.3, 0.5;
  EXPECT_THROW(psc_prototype_grad(b, probs, 3), InvalidArgument);
}

TEST(CePrototypeGrad, MatchesFiniteDifferencesOfSummedLoss) {
  // attract + repel is the gradient of the summed batch CE, i.e. B times the
  // gradient of the mean CE that psc_ce_loss reports.
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t c = 2 + rng() % 7;
    const std::size_t batch = 1 + rng() % 10;
    const Eigen::MatrixXd w = oracle::random_unit_columns(5, static_cast<Eigen::Index>(c), rng);
    FeatureBatch b{oracle::random_unit_columns(5, static_cast<Eigen::Index>(batch), rng), {}};
    for (std::size_t i = 0; i < batch; ++i) b.labels.push_back(rng() % c);
    const auto id = AssignmentMapping::identity(c);
    const auto probs = batch_probabilities(b, w, id);
    for (std::size_t j = 0; j < c; ++j) {
      const auto g = psc_prototype_grad(b, probs, j);
      const auto fd = oracle::central_difference_vec(
          [&](const Eigen::VectorXd& wj) {
            Eigen::MatrixXd m = w;
            m.col(static_cast<Eigen::Index>(j)) = wj;
            return static_cast<double>(batch) * psc_ce_loss(b, m, id);
          },
          w.col(static_cast<Eigen::Index>(j)));
      EXPECT_LT(oracle::max_relative_error(g.attract + g.repel, fd), 1e-6) << "trial " << trial << " j " << j;
    }
  }
}

TEST(Checkpoint, RoundTripIsBitwise) {
  ScratchDir dir("ckpt");
  std::mt19937_64 rng(70);
  const auto p = random_params({4, 7, 5, 3}, rng);
  save_checkpoint(dir / "a.txt", p);
  std::optional<Eigen::MatrixXd> classifier;
  EXPECT_EQ(load_checkpoint(dir / "a.txt", &classifier), p);
  EXPECT_FALSE(classifier.has_value());

  const Eigen::MatrixXd cls = 3.0 * oracle::random_unit_columns(3, 6, rng);
  save_checkpoint(dir / "b.txt", p, cls);
  EXPECT_EQ(load_checkpoint(dir / "b.txt", &classifier), p);
  ASSERT_TRUE(classifier.has_value());
  EXPECT_EQ(*classifier, cls);
}

TEST(Checkpoint, LoaderDiagnostics) {
  ScratchDir dir("ckpt-bad");
  auto write = [&](const std::string& body) {
    std::ofstream(dir / "x.txt") << body;
    return dir / "x.txt";
  };
  EXPECT_THROW(load_checkpoint(write("# protosphere-checkpoint v1 dims=2,2\nlayer0.weight 2x2 1,0,0,1\n")), FormatError);
  EXPECT_THROW(load_checkpoint(write("# protosphere-checkpoint v1 dims=2,2\nlayer0.weight 2x2 1,0,0\nlayer0.bias 2 0,0\n")),
               FormatError);
  EXPECT_THROW(load_checkpoint(write("# protosphere-checkpoint v1 dims=2,3\nlayer0.weight 2x2 1,0,0,1\nlayer0.bias 2 0,0\n")),
               FormatError);
  EXPECT_NO_THROW(load_checkpoint(write("# protosphere-checkpoint v1 dims=2,2\nlayer0.weight 2x2 1,0,0,1\nlayer0.bias 2 0,0\n")));
}
