#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "suntrack/neural.hpp"

using namespace suntrack;

namespace {

// Independent forward pass written with explicit loops.
std::vector<double> loop_forward(const Mlp& m, const std::vector<double>& x) {
  std::vector<double> h = x;
  const auto& p = m.params();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    std::vector<double> z(static_cast<std::size_t>(p.weights[l].rows()));
    for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r) {
      double acc = p.biases[l][r];
      for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c) acc += p.weights[l](r, c) * h[c];
      z[r] = (l + 1 < p.weights.size() && acc < 0.0) ? 0.0 : acc;
    }
    h = z;
  }
  return h;
}

Vector random_vector(int n, Rng& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// Output loss 0.5 * |out - target|^2.
OutputLoss squared_error(Vector target) {
  return [target](const Vector& out) {
    const Vector r = out - target;
    return LossAndGrad{0.5 * r.squaredNorm(), r};
  };
}

// Smallest |pre-activation| over hidden units; tiny values sit near a ReLU kink.
double kink_margin(const Mlp& m, const Vector& x) {
  const auto& p = m.params();
  Vector h = x;
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < p.weights.size(); ++l) {
    const Vector z = p.weights[l] * h + p.biases[l];
    margin = std::min(margin, z.cwiseAbs().minCoeff());
    h = z.cwiseMax(0.0);
  }
  return margin;
}

}  // namespace

TEST(MlpNew, RejectsBadSizes) {
  EXPECT_THROW(mlp_new({}, 1), std::invalid_argument);
  EXPECT_THROW(mlp_new({3}, 1), std::invalid_argument);
  EXPECT_THROW(mlp_new({3, 0, 1}, 1), std::invalid_argument);
}

TEST(MlpNew, ZeroBiasesAndDeterminism) {
  const Mlp a = mlp_new({3, 1}, 77);
  for (const auto& b : a.params().biases) EXPECT_TRUE(b.isZero(0.0));
  EXPECT_TRUE(a == mlp_new({3, 1}, 77));
  EXPECT_FALSE(a == mlp_new({3, 1}, 78));
}

TEST(MlpNew, WeightsWithinGlorotBound) {
  const Mlp m = mlp_new({4, 8, 2}, 5);
  const double bounds[] = {std::sqrt(6.0 / 12.0), std::sqrt(6.0 / 10.0)};
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_LE(m.params().weights[l].cwiseAbs().maxCoeff(), bounds[l]);
    EXPECT_GT(m.params().weights[l].cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(m.params().weights[0].rows(), 8);
  EXPECT_EQ(m.params().weights[0].cols(), 4);
}

TEST(Forward, ZeroNetworkGivesZero) {
  const Mlp m({5, 7, 3});
  EXPECT_TRUE(forward(m, Vector::Ones(5)).isZero(0.0));
}

TEST(Forward, IdentityLayerAddsBias) {
  Mlp m({2, 2});
  m.params().weights[0] = Matrix::Identity(2, 2);
  m.params().biases[0] = Vector::Constant(2, 0.5);
  const Vector x = (Vector(2) << 1.0, -3.0).finished();
  EXPECT_EQ(forward(m, x), (Vector(2) << 1.5, -2.5).finished());
}

TEST(Forward, DimensionMismatchThrows) {
  const Mlp m = mlp_new({3, 2}, 1);
  EXPECT_THROW(forward(m, Vector::Zero(4)), std::invalid_argument);
}

TEST(Forward, MatchesLoopImplementation) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Mlp m = mlp_new({6, 9, 5, 3}, 100 + trial);
    const Vector x = random_vector(6, rng);
    const Vector y = forward(m, x);
    const auto ref = loop_forward(m, std::vector<double>(x.data(), x.data() + x.size()));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Forward, BitwiseDeterministic) {
  Rng rng(4);
  const Mlp m = mlp_new({10, 32, 32, 4}, 9);
  const Vector x = random_vector(10, rng);
  const Vector a = forward(m, x);
  const Vector b = forward(m, x);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * 4), 0);
}

TEST(Backward, ZeroCotangentGivesZeroGradients) {
  Rng rng(1);
  const Mlp m = mlp_new({4, 6, 2}, 2);
  const Gradients g = backward(m, random_vector(4, rng), Vector::Zero(2));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.at(i), 0.0);
}

TEST(Backward, LinearLayerIsOuterProduct) {
  Rng rng(2);
  const Mlp m = mlp_new({3, 2}, 3);
  const Vector x = random_vector(3, rng);
  const Vector target = random_vector(2, rng);
  const Vector residual = forward(m, x) - target;
  const Gradients g = backward(m, x, residual);
  EXPECT_TRUE(g.weights[0].isApprox(residual * x.transpose(), 1e-14));
  EXPECT_TRUE(g.biases[0].isApprox(residual, 1e-14));
}

TEST(Backward, ShapeMismatchThrows) {
  const Mlp m = mlp_new({3, 2}, 3);
  EXPECT_THROW(backward(m, Vector::Zero(3), Vector::Zero(3)), std::invalid_argument);
  EXPECT_THROW(backward(m, Vector::Zero(2), Vector::Zero(2)), std::invalid_argument);
}

TEST(Step, ZeroGradientAndZeroLearningRateAreIdentity) {
  Mlp m = mlp_new({3, 4, 2}, 8);
  const Mlp before = m;
  OptimState sgd = OptimState::sgd(0.1);
  step(m, m.zero_gradients(), sgd);
  EXPECT_TRUE(m == before);

  Gradients g = m.zero_gradients();
  for (std::size_t i = 0; i < g.size(); ++i) g.at(i) = 0.3;
  OptimState frozen = OptimState::sgd(0.0);
  step(m, g, frozen);
  EXPECT_TRUE(m == before);
  OptimState adam = OptimState::adam_for(m, 0.0);
  step(m, g, adam);
  EXPECT_TRUE(m == before);
}

TEST(Step, SgdUnitStep) {
  Mlp m = mlp_new({2, 3, 1}, 4);
  const Mlp before = m;
  Gradients ones = m.zero_gradients();
  for (std::size_t i = 0; i < ones.size(); ++i) ones.at(i) = 1.0;
  OptimState o = OptimState::sgd(1.0);
  step(m, ones, o);
  for (std::size_t i = 0; i < ones.size(); ++i) EXPECT_EQ(m.params().at(i), before.params().at(i) - 1.0);
}

TEST(Step, AdamFirstStepIsLearningRateSized) {
  Mlp m = mlp_new({2, 2}, 6);
  const Mlp before = m;
  Gradients g = m.zero_gradients();
  const double values[] = {0.5, -2.0, 1e-3, 7.0, -0.25, 3.0};
  for (std::size_t i = 0; i < g.size(); ++i) g.at(i) = values[i];
  OptimState o = OptimState::adam_for(m, 0.01);
  step(m, g, o);
  for (std::size_t i = 0; i < g.size(); ++i) {
    // Bias-corrected moments equal g and g^2 after one step.
    const double expected = 0.01 * values[i] / (std::abs(values[i]) + 1e-8);
    EXPECT_NEAR(before.params().at(i) - m.params().at(i), expected, 1e-15);
  }
}

TEST(GradientCheck, LinearQuadraticIsExact) {
  Rng rng(10);
  const Mlp m = mlp_new({5, 3}, 11);
  EXPECT_LT(gradient_check(m, random_vector(5, rng), squared_error(random_vector(3, rng))), 1e-7);
}

TEST(GradientCheck, RandomReluNetworks) {
  Rng rng(12);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 20; ++seed) {
    const Mlp m = mlp_new({6, 12, 8, 3}, 1000 + seed);
    const Vector x = random_vector(6, rng);
    if (kink_margin(m, x) < 1e-3) continue;
    const auto loss = squared_error(random_vector(3, rng));
    EXPECT_LT(gradient_check(m, x, loss), 1e-4);
    GradientCheckOptions fine;
    fine.step = 1e-6;
    EXPECT_LT(gradient_check(m, x, loss, fine), 1e-4);
    ++checked;
  }
}

TEST(GradientCheck, SubsetModeForLargeNetworks) {
  Rng rng(14);
  const Mlp m = mlp_new({40, 64, 2}, 15);
  Vector x = random_vector(40, rng);
  GradientCheckOptions opt;
  opt.max_params = 200;
  opt.subset_seed = 3;
  EXPECT_LT(gradient_check(m, x, squared_error(random_vector(2, rng)), opt), 1e-4);
}

TEST(GradientCheck, DetectsCorruptedBackward) {
  Rng rng(16);
  const Mlp m = mlp_new({4, 6, 2}, 17);
  const Vector x = random_vector(4, rng);
  const auto loss = squared_error(random_vector(2, rng));
  Gradients wrong = backward(m, x, loss(forward(m, x)).d_out);
  wrong.weights[0] *= 1.5;
  const double err = gradient_check(m, [&](const Mlp& p) { return loss(forward(p, x)).value; }, wrong);
  EXPECT_GT(err, 1e-2);
}
