#include <gtest/gtest.h>

#include <cmath>

#include "pcbdet/errors.hpp"
#include "pcbdet/optim.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet {
namespace {

// Independent scalar Nadam (bias-corrected form), written from the
// recurrence rather than shared with the library.
struct ScalarNadam {
  double m = 0, v = 0;
  int t = 0;
  double step(double theta, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double c1 = 1 - std::pow(b1, t);
    const double mh = m / c1;
    const double vh = v / (1 - std::pow(b2, t));
    return theta - lr * (b1 * mh + (1 - b1) * g / c1) / (std::sqrt(vh) + eps);
  }
};

TEST(Nadam, ZeroGradientLeavesParamsUnchanged) {
  std::vector<Tensor> p = {Tensor({3}, {1, -2, 3})};
  const std::vector<Tensor> g = {Tensor({3}, 0.0)};
  OptState st = OptState::for_params(p);
  nadam_step(p, g, st, {}, 1e-3);
  EXPECT_EQ(p[0].storage(), (std::vector<double>{1, -2, 3}));
  EXPECT_EQ(st.t, 1);
}

TEST(Nadam, FirstStepValue) {
  std::vector<Tensor> p = {Tensor({1}, 0.0)};
  OptState st = OptState::for_params(p);
  nadam_step(p, std::vector<Tensor>{Tensor({1}, 1.0)}, st, {}, 1e-3);
  EXPECT_NEAR(p[0][0], -0.001 * 1.9 / (1 + 1e-8), 1e-15);
  EXPECT_NEAR(p[0][0], ScalarNadam{}.step(0.0, 1.0, 1e-3), 1e-18);
}

TEST(Nadam, QuadraticTrajectoryMatchesScalarReference) {
  std::vector<Tensor> p = {Tensor({1}, 1.0)};
  OptState st = OptState::for_params(p);
  ScalarNadam ref;
  double theta = 1.0;
  for (int i = 0; i < 100; ++i) {
    nadam_step(p, std::vector<Tensor>{Tensor({1}, 2.0 * p[0][0])}, st, {}, 1e-3);
    theta = ref.step(theta, 2.0 * theta, 1e-3);
    ASSERT_NEAR(p[0][0], theta, 1e-12) << "step " << i;
  }
}

TEST(Nadam, ConvergesOnQuadraticBowl) {
  // From theta0 = 1 at constant lr 1e-3 the second-moment memory keeps
  // steps short near the minimum; the first step with |theta| < 1e-3 is
  // 2720 (same count from an independent float64 simulation).
  std::vector<Tensor> p = {Tensor({1}, 1.0)};
  OptState st = OptState::for_params(p);
  int steps = 0;
  while (std::abs(p[0][0]) >= 1e-3 && steps < 5000) {
    nadam_step(p, std::vector<Tensor>{Tensor({1}, 2.0 * p[0][0])}, st, {}, 1e-3);
    ++steps;
  }
  EXPECT_EQ(steps, 2720);
  for (int i = 0; i < 2000; ++i) nadam_step(p, std::vector<Tensor>{Tensor({1}, 2.0 * p[0][0])}, st, {}, 1e-3);
  EXPECT_LT(std::abs(p[0][0]), 1e-6);
}

TEST(Nadam, ElementwiseIndependence) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n1 = rng.uniform_int(1, 5), n2 = rng.uniform_int(1, 5);
    Tensor a = Tensor::filled({n1}, UniformFill{-2, 2, rng.next_u64()});
    Tensor b = Tensor::filled({n2}, UniformFill{-2, 2, rng.next_u64()});
    std::vector<double> cat = a.storage();
    cat.insert(cat.end(), b.storage().begin(), b.storage().end());
    std::vector<Tensor> joint = {Tensor({n1 + n2}, cat)};
    std::vector<Tensor> split = {a, b};
    OptState sj = OptState::for_params(joint), ss = OptState::for_params(split);
    for (int step = 0; step < 5; ++step) {
      const Tensor ga = Tensor::filled({n1}, NormalFill{0, 1, rng.next_u64()});
      const Tensor gb = Tensor::filled({n2}, NormalFill{0, 1, rng.next_u64()});
      std::vector<double> gcat = ga.storage();
      gcat.insert(gcat.end(), gb.storage().begin(), gb.storage().end());
      nadam_step(joint, std::vector<Tensor>{Tensor({n1 + n2}, gcat)}, sj, {}, 1e-3);
      nadam_step(split, std::vector<Tensor>{ga, gb}, ss, {}, 1e-3);
    }
    std::vector<double> expect = split[0].storage();
    expect.insert(expect.end(), split[1].storage().begin(), split[1].storage().end());
    EXPECT_EQ(joint[0].storage(), expect);
  }
}

TEST(Nadam, NonFiniteGradientRejectedWithoutSideEffects) {
  std::vector<Tensor> p = {Tensor({2}, 1.0)};
  OptState st = OptState::for_params(p);
  EXPECT_THROW(nadam_step(p, std::vector<Tensor>{Tensor({2}, {1.0, NAN})}, st, {}, 1e-3), NumericError);
  EXPECT_EQ(p[0], Tensor({2}, 1.0));
  EXPECT_EQ(st.t, 0);
}

TEST(Nadam, ShapeMismatch) {
  std::vector<Tensor> p = {Tensor({2}, 1.0)};
  OptState st = OptState::for_params(p);
  EXPECT_THROW(nadam_step(p, std::vector<Tensor>{Tensor({3}, 1.0)}, st, {}, 1e-3), ShapeError);
}

TEST(Nadam, HyperValidation) {
  EXPECT_THROW((NadamHyper{1e-3, 1.0, 0.999, 1e-8}.validate()), ParameterError);
  EXPECT_THROW((NadamHyper{1e-3, 0.9, 0.999, 0.0}.validate()), ParameterError);
  EXPECT_NO_THROW(NadamHyper{}.validate());
}

TEST(CosineLr, Endpoints) {
  const CosineSchedule s{1e-3, 1e-5, 100};
  EXPECT_EQ(cosine_lr(0, s), 0.001);
  EXPECT_EQ(cosine_lr(100, s), 1e-5);
  EXPECT_NEAR(cosine_lr(50, s), (1e-3 + 1e-5) / 2, 1e-18);
  EXPECT_EQ(cosine_lr(500, s), 1e-5);
}

TEST(CosineLr, MonotoneNonincreasing) {
  const CosineSchedule s{1e-3, 1e-5, 997};
  double prev = cosine_lr(0, s);
  for (int t = 1; t <= 997; ++t) {
    const double cur = cosine_lr(t, s);
    ASSERT_LE(cur, prev);
    prev = cur;
  }
}

TEST(CosineLr, Validation) {
  EXPECT_THROW(cosine_lr(0, CosineSchedule{1e-5, 1e-3, 10}), ParameterError);
  EXPECT_THROW(cosine_lr(0, CosineSchedule{1e-3, 1e-5, 0}), ParameterError);
  EXPECT_THROW(cosine_lr(-1, CosineSchedule{}), ParameterError);
}

}  // namespace
}  // namespace pcbdet
