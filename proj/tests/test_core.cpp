#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "streampoison/learner.hpp"
#include "streampoison/tasks.hpp"

using namespace streampoison;
using streampoison::testing::Gen;

namespace {

Vector v1(double a) {
  Vector v(1);
  v[0] = a;
  return v;
}

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST(LogisticLoss, ZeroModelGivesLogTwo) {
  EXPECT_DOUBLE_EQ(logistic_loss(Model::Zero(3), {Vector::Ones(3), Label::Positive}), std::log(2.0));
}

TEST(LogisticLoss, LargeMarginsStayFinite) {
  const Model theta = v1(1.0);
  EXPECT_NEAR(logistic_loss(theta, {v1(1000.0), Label::Negative}), 1000.0, 1e-9);
  EXPECT_GE(logistic_loss(theta, {v1(1000.0), Label::Positive}), 0.0);
  EXPECT_LT(logistic_loss(theta, {v1(1000.0), Label::Positive}), 1e-300);
}

TEST(LogisticLoss, DimensionMismatchThrows) {
  EXPECT_THROW(logistic_loss(Model::Zero(2), {Vector::Zero(3), Label::Positive}), ArgumentError);
  EXPECT_THROW(logistic_grad(Model::Zero(2), {Vector::Zero(3), Label::Positive}), ArgumentError);
}

TEST(LogisticGrad, MatchesCentralDifferences) {
  Gen g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = g.integer(1, 8);
    const Model theta = g.vec(d, 2.0);
    const LabeledExample ex = g.example(d, 2.0);
    const Vector grad = logistic_grad(theta, ex);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double h = 1e-6;
      Model tp = theta;
      Model tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (logistic_loss(tp, ex) - logistic_loss(tm, ex)) / (2 * h);
      EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(LogisticGrad, ZeroModelValue) {
  const Vector x = v2(1.0, -2.0);
  const Vector g = logistic_grad(Model::Zero(2), {x, Label::Positive});
  EXPECT_DOUBLE_EQ(g[0], -0.5);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
}

TEST(OgdStep, ScalarHandTrace) {
  // theta = 0, x = 1, y = +1, eta = 1: theta' = sigma(0) = 0.5.
  const Model t1 = ogd_step(v1(0.0), {v1(1.0), Label::Positive}, 1.0);
  EXPECT_DOUBLE_EQ(t1[0], 0.5);
  // Second step with x = 0.5: 0.5 + 0.5 / (1 + e^{0.25}).
  const Model t2 = ogd_step(t1, {v1(0.5), Label::Positive}, 1.0);
  EXPECT_NEAR(t2[0], 0.5 + 0.5 / (1.0 + std::exp(0.25)), 1e-15);
  EXPECT_NEAR(t2[0], 0.7189, 1e-4);
}

TEST(OgdStep, RejectsNonPositiveEta) {
  EXPECT_THROW(ogd_step(v1(0.0), {v1(1.0), Label::Positive}, 0.0), ArgumentError);
  EXPECT_THROW(ogd_step(v1(0.0), {v1(1.0), Label::Positive}, -1.0), ArgumentError);
}

TEST(OgdStep, FlippedExampleIsBitIdentical) {
  Gen g(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index d = g.integer(1, 10);
    const Model theta = g.vec(d, 3.0);
    const LabeledExample ex = g.example(d, 3.0);
    const double eta = g.uniform(0.001, 2.0);
    const Model a = ogd_step(theta, ex, eta);
    const Model b = ogd_step(theta, flipped(ex), eta);
    ASSERT_EQ(a.size(), b.size());
    for (Eigen::Index i = 0; i < d; ++i) ASSERT_EQ(a[i], b[i]);
  }
}

TEST(OgdRun, OneSidedStreamGivesBitIdenticalTrajectory) {
  Gen g(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = g.integer(1, 6);
    const Stream s = g.stream(d, 40, 2.0);
    Stream one_sided;
    for (const auto& ex : s) one_sided.append(ex.y == Label::Positive ? ex : flipped(ex));
    const LearnerConfig cfg{g.uniform(0.01, 1.0), g.vec(d)};
    const auto a = ogd_run(cfg, s);
    const auto b = ogd_run(cfg, one_sided);
    ASSERT_EQ(a.models.size(), b.models.size());
    for (std::size_t k = 0; k < a.models.size(); ++k) {
      for (Eigen::Index i = 0; i < d; ++i) ASSERT_EQ(a.models[k][i], b.models[k][i]);
    }
  }
}

TEST(OgdRun, TrajectoryLengthAndFinalModel) {
  Gen g(8);
  const Stream s = g.stream(3, 25);
  const auto traj = ogd_run({0.1, Model::Zero(3)}, s);
  EXPECT_EQ(traj.models.size(), 26u);
  EXPECT_EQ(traj.accepted_flags.size(), 25u);
  EXPECT_EQ(traj.models.back(), traj.final_model);
  const auto fin = ogd_run({0.1, Model::Zero(3)}, s, std::nullopt, TrajectoryStorage::FinalOnly);
  EXPECT_EQ(fin.models.size(), 2u);
  EXPECT_EQ(fin.final_model, traj.final_model);
}

TEST(OgdRun, EmptyStreamReturnsInitialModel) {
  const Model t0 = v2(0.3, -0.2);
  const auto traj = ogd_run({1.0, t0}, Stream{});
  ASSERT_EQ(traj.models.size(), 1u);
  EXPECT_EQ(traj.final_model, t0);
}

TEST(OgdRun, InvalidConfigThrows) {
  EXPECT_THROW(ogd_run({0.0, Model::Zero(1)}, Stream{}), ArgumentError);
  EXPECT_THROW(ogd_run({1.0, Model()}, Stream{}), ArgumentError);
  Stream bad;
  bad.append({Vector::Zero(2), Label::Positive});
  EXPECT_THROW(ogd_run({1.0, Model::Zero(3)}, bad), ArgumentError);
}

TEST(OgdRun, RejectedExamplesLeaveModelUnchanged) {
  Stream s;
  s.append({v1(5.0), Label::Positive});
  s.append({v1(0.5), Label::Positive});
  const DefenseSpec d = L2BallDefense{1.0};
  const auto traj = ogd_run({1.0, v1(0.0)}, s, d);
  EXPECT_FALSE(traj.accepted_flags[0]);
  EXPECT_TRUE(traj.accepted_flags[1]);
  EXPECT_EQ(traj.models[1][0], 0.0);
  EXPECT_DOUBLE_EQ(traj.models[2][0], 0.25);
}

TEST(OgdRun, FilterAdmittingEverythingIsInert) {
  Gen g(21);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index d = g.integer(1, 5);
    const Stream s = g.stream(d, 30);
    double rmax = 0.0;
    for (const auto& ex : s) rmax = std::max(rmax, ex.x.norm());
    const DefenseSpec d_ball = L2BallDefense{rmax};
    const LearnerConfig cfg{0.3, Model::Zero(d)};
    const auto a = ogd_run(cfg, s);
    const auto b = ogd_run(cfg, s, d_ball);
    for (std::size_t k = 0; k < a.models.size(); ++k) ASSERT_EQ(a.models[k], b.models[k]);
  }
}

TEST(Predict, SignAndAbstain) {
  const Model theta = v2(1.0, -1.0);
  EXPECT_EQ(predict(theta, v2(2.0, 1.0)), Prediction::Positive);
  EXPECT_EQ(predict(theta, v2(1.0, 2.0)), Prediction::Negative);
  EXPECT_EQ(predict(theta, v2(1.0, 1.0)), Prediction::Abstain);
  EXPECT_FALSE(predicts_correctly(theta, {v2(1.0, 1.0), Label::Positive}));
  EXPECT_FALSE(predicts_correctly(theta, {v2(1.0, 1.0), Label::Negative}));
}

TEST(Cosine, KnownValuesAndRange) {
  EXPECT_DOUBLE_EQ(cosine_similarity(v2(1, 0), v2(-3, 0)), -1.0);
  EXPECT_NEAR(cosine_similarity(v2(1, 0), v2(1, 1)), std::sqrt(0.5), 1e-15);
  EXPECT_THROW(cosine_similarity(v2(0, 0), v2(1, 0)), UndefinedMetricError);
  Gen g(4);
  for (int i = 0; i < 500; ++i) {
    const Vector a = g.vec(4);
    const double c = cosine_similarity(a, a * g.uniform(0.1, 100.0));
    EXPECT_LE(c, 1.0);
    EXPECT_NEAR(c, 1.0, 1e-12);
  }
}

TEST(ErrorRate, CountsAbstainAsWrong) {
  Stream s;
  s.append({v1(1.0), Label::Positive});
  s.append({v1(-1.0), Label::Positive});
  EXPECT_DOUBLE_EQ(error_rate(v1(1.0), s), 0.5);
  EXPECT_DOUBLE_EQ(error_rate(v1(0.0), s), 1.0);
}

TEST(SparsePath, AgreesWithDenseOnBasisTask) {
  BasisTaskSpec spec;
  spec.d = 100;
  spec.m = 10;
  const auto xs = gen_basis_task(spec, 5000, 17);
  Model dense = Model::Zero(spec.d);
  Model sparse = Model::Zero(spec.d);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const SparseExample& sx = (t % 11 == 10) ? basis_attacker_point(sparse, spec.m) : xs[t];
    ASSERT_EQ(predicts_correctly_sparse(sparse, sx), predicts_correctly(dense, {sx.to_dense(spec.d), sx.y}));
    ogd_update(dense, {sx.to_dense(spec.d), sx.y}, 1.0);
    ogd_update_sparse(sparse, sx, 1.0);
    ASSERT_LE((dense - sparse).cwiseAbs().maxCoeff(), 1e-12) << "step " << t;
  }
}

TEST(Labels, IntConversion) {
  EXPECT_EQ(label_from_int(1), Label::Positive);
  EXPECT_EQ(label_from_int(-1), Label::Negative);
  EXPECT_THROW(label_from_int(0), ArgumentError);
}
