#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "streampoison/attacks.hpp"

using namespace streampoison;
using streampoison::testing::Gen;

namespace {

Vector v1(double a) {
  Vector v(1);
  v[0] = a;
  return v;
}

double step_ratio(double a, double g) { return g / (1.0 + std::exp(a * g)); }

// First crossing of g(gamma) = target on a fine grid, refined by plain bisection.
std::optional<double> gamma_oracle(double a, double eta, double gmax) {
  const double target = 1.0 / eta;
  constexpr int kGrid = 200000;
  double prev = 0.0;
  for (int i = 1; i <= kGrid; ++i) {
    const double g = gmax * i / kGrid;
    if (step_ratio(a, g) >= target) {
      double lo = prev;
      double hi = g;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (step_ratio(a, mid) >= target ? hi : lo) = mid;
      }
      return hi;
    }
    prev = g;
  }
  return std::nullopt;
}

SemiOnlineAttackConfig scalar_target(double target, double R, std::size_t K) {
  SemiOnlineAttackConfig atk;
  atk.theta_star = v1(target);
  atk.K = K;
  atk.R = R;
  atk.eta = 1.0;
  atk.epsilon = 1e-3;
  return atk;
}

DefenseSpec random_defense(Gen& g, Eigen::Index d) {
  const double R = g.uniform(1.0, 5.0);
  const auto stats = CentroidStats::from_centroids(g.vec(d), g.vec(d));
  switch (g.integer(0, 2)) {
    case 0: return L2BallDefense{R};
    case 1: return CentroidDefense{R, g.uniform(0.5, 3.0), stats};
    default: return SlabDefense{R, g.uniform(0.5, 3.0), stats};
  }
}

std::size_t poison_flags(const Stream& s) { return s.poison_count(); }

}  // namespace

TEST(GammaStar, ClosedFormAtZero) { EXPECT_NEAR(*solve_gamma_star(0.0, 1.0, 10.0), 2.0, 1e-10); }

TEST(GammaStar, MatchesGridBisectionOracle) {
  const auto g = solve_gamma_star(0.25, 1.0, 10.0);
  ASSERT_TRUE(g);
  EXPECT_NEAR(*g, *gamma_oracle(0.25, 1.0, 10.0), 1e-8);
  EXPECT_NEAR(*g, 3.26, 0.005);
}

TEST(GammaStar, NoneWhenRatioNeverReachesTarget) {
  EXPECT_FALSE(solve_gamma_star(5.0, 1.0, 1.0));
  for (int i = 1; i <= 10000; ++i) ASSERT_LT(step_ratio(5.0, i / 10000.0), 1.0);
  EXPECT_THROW(solve_gamma_star(0.0, 0.0, 1.0), ArgumentError);
}

TEST(GammaStar, RandomInstancesAgreeWithOracle) {
  Gen g(19);
  for (int i = 0; i < 300; ++i) {
    const double a = g.uniform(-2.0, 2.0);
    const double eta = g.uniform(0.1, 5.0);
    const double gmax = g.uniform(0.1, 20.0);
    const auto got = solve_gamma_star(a, eta, gmax);
    const auto want = gamma_oracle(a, eta, gmax);
    ASSERT_EQ(got.has_value(), want.has_value()) << a << " " << eta << " " << gmax;
    if (got) {
      ASSERT_NEAR(*got, *want, 1e-6 * std::max(1.0, *want));
    }
  }
}

TEST(Simplistic, ScalarHandTrace) {
  const LearnerConfig cfg{1.0, v1(0.0)};
  const auto out = simplistic_attack(cfg, Stream{}, scalar_target(1.0, 10.0, 100), L2BallDefense{10.0});
  ASSERT_GE(out.trace.size(), 2u);
  EXPECT_DOUBLE_EQ(out.gamma0, 1.0);
  EXPECT_DOUBLE_EQ(out.trace[0].point.x[0], 1.0);
  EXPECT_EQ(out.trace[0].point.y, Label::Positive);
  EXPECT_DOUBLE_EQ(out.trace[0].dist_to_target, 0.5);
  EXPECT_DOUBLE_EQ(out.trace[1].point.x[0], 0.5);
  EXPECT_NEAR(1.0 - out.trace[1].dist_to_target, 0.7189, 1e-4);
  EXPECT_TRUE(out.succeeded);
  EXPECT_LE(out.inserted_count, 23u);
  for (std::size_t t = 1; t < out.trace.size(); ++t) {
    EXPECT_LT(out.trace[t].dist_to_target, out.trace[t - 1].dist_to_target);
  }
}

TEST(Simplistic, AlreadyAtTargetInsertsNothing) {
  const LearnerConfig cfg{1.0, v1(1.0)};
  const auto out = simplistic_attack(cfg, Stream{}, scalar_target(1.0, 10.0, 100), L2BallDefense{10.0});
  EXPECT_EQ(out.inserted_count, 0u);
  EXPECT_TRUE(out.succeeded);
}

TEST(Simplistic, InfeasibleDirectionStopsWithDiagnostic) {
  Vector mp(2), mm(2);
  mp << 0, 5;
  mm << 0, -5;
  const DefenseSpec d = CentroidDefense{10.0, 1.0, CentroidStats::from_centroids(mp, mm)};
  SemiOnlineAttackConfig atk;
  atk.theta_star = Vector::Unit(2, 0);
  atk.K = 10;
  atk.R = 10.0;
  const auto out = simplistic_attack({1.0, Model::Zero(2)}, Stream{}, atk, d);
  EXPECT_EQ(out.inserted_count, 0u);
  EXPECT_FALSE(out.succeeded);
  EXPECT_FALSE(out.diagnostic.empty());
}

TEST(Simplistic, CollinearAndContractingWithoutProjection) {
  Gen g(41);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = g.integer(1, 6);
    const LearnerConfig cfg{g.uniform(0.1, 1.0), g.vec(d, 0.5)};
    SemiOnlineAttackConfig atk;
    atk.theta_star = g.vec(d);
    atk.K = 200;
    atk.R = 1e3;
    atk.eta = cfg.eta;
    const Stream S = g.stream(d, 10);
    const auto out = simplistic_attack(cfg, S, atk, L2BallDefense{1e3});
    const Vector u0 = out.clean_model - atk.theta_star;
    const double lambda = atk.theta_star.norm();
    Model theta = out.clean_model;
    double prev = u0.norm();
    for (const auto& step : out.trace) {
      ASSERT_EQ(step.c, 1.0);
      ASSERT_FALSE(step.flipped);
      ogd_update(theta, step.point, atk.eta);
      const Vector u = theta - atk.theta_star;
      if (u.norm() > 1e-9) {
        const double cosang = std::abs(u.dot(u0)) / (u.norm() * u0.norm());
        ASSERT_LE(std::acos(std::min(1.0, cosang)), 1e-6) << "trial " << trial;
      }
      if (step.gamma == out.gamma0) {
        const double rate = 1.0 - atk.eta * out.gamma0 / (1.0 + std::exp(lambda * lambda * out.gamma0));
        ASSERT_LE(u.norm(), rate * prev + 1e-12) << "trial " << trial;
        ++checked;
      }
      prev = u.norm();
    }
    ASSERT_LT(prev, u0.norm()) << "trial " << trial;
  }
  EXPECT_GT(checked, 0);
}

TEST(Greedy, FirstStepMatchesGridOracle) {
  const LearnerConfig cfg{1.0, v1(0.0)};
  const auto out = greedy_attack(cfg, Stream{}, scalar_target(1.0, 1.0, 1), L2BallDefense{1.0});
  ASSERT_EQ(out.trace.size(), 1u);
  double best = std::numeric_limits<double>::infinity();
  for (int i = -10000; i <= 10000; ++i) {
    for (Label y : {Label::Positive, Label::Negative}) {
      const Model t = ogd_step(v1(0.0), {v1(i / 10000.0), y}, 1.0);
      best = std::min(best, std::abs(t[0] - 1.0));
    }
  }
  EXPECT_NEAR(out.trace[0].dist_to_target, best, 1e-3);
  EXPECT_NEAR(out.trace[0].dist_to_target, 0.5, 1e-3);
}

TEST(Greedy, NeverWorseThanSimplisticPerStep) {
  Gen g(55);
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index d = g.integer(1, 4);
    const DefenseSpec def = random_defense(g, d);
    const LearnerConfig cfg{g.uniform(0.1, 1.0), g.vec(d, 0.5)};
    SemiOnlineAttackConfig atk;
    atk.theta_star = g.vec(d, 2.0);
    atk.K = 1;
    atk.R = norm_cap(def);
    atk.eta = cfg.eta;
    const auto simp = simplistic_attack(cfg, Stream{}, atk, def);
    const auto greedy = greedy_attack(cfg, Stream{}, atk, def, {2, 40});
    if (simp.trace.empty()) continue;
    const double simp_dist = simp.trace[0].dist_to_target;
    const double greedy_dist = greedy.trace.empty() ? (greedy.clean_model - atk.theta_star).norm()
                                                    : greedy.trace[0].dist_to_target;
    ASSERT_LE(greedy_dist, simp_dist + 1e-12) << "trial " << trial;
  }
}

TEST(Greedy, ZeroBudgetLeavesStream) {
  Gen g(2);
  const Stream S = g.stream(2, 5);
  SemiOnlineAttackConfig atk;
  atk.theta_star = g.vec(2);
  const auto out = greedy_attack({0.5, Model::Zero(2)}, S, atk, L2BallDefense{1.0});
  EXPECT_EQ(out.inserted_count, 0u);
  EXPECT_EQ(out.poisoned_stream.size(), S.size());
}

TEST(Wk, GradientMatchesFiniteDifferences) {
  Gen g(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Model theta = g.vec(3);
    const std::vector<Vector> Z{g.vec(3), g.vec(3)};
    const Stream val = g.stream(3, 7);
    const double eta = g.uniform(0.2, 1.5);
    const auto grads = wk_gradient(theta, Z, eta, val);
    for (std::size_t k = 0; k < Z.size(); ++k) {
      for (Eigen::Index i = 0; i < 3; ++i) {
        const double h = 1e-6;
        auto zp = Z;
        auto zm = Z;
        zp[k][i] += h;
        zm[k][i] -= h;
        const double fd = (wk_objective(theta, zp, eta, val) - wk_objective(theta, zm, eta, val)) / (2 * h);
        ASSERT_NEAR(grads[k][i], fd, 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(Wk, ZeroBudgetKeepsCleanLoss) {
  Gen g(3);
  const Stream S = g.stream(2, 8);
  const Stream val = g.stream(2, 5);
  SemiOnlineAttackConfig atk;
  atk.theta_star = g.vec(2);
  const LearnerConfig cfg{0.5, Model::Zero(2)};
  const auto out = semi_online_wk_attack(cfg, S, atk, L2BallDefense{2.0}, val);
  EXPECT_EQ(out.inserted_count, 0u);
  EXPECT_EQ(out.poisoned_stream.size(), S.size());
  const Model clean = ogd_final(cfg, S, L2BallDefense{2.0});
  EXPECT_DOUBLE_EQ(wk_objective(out.final_model, {}, 0.5, val), wk_objective(clean, {}, 0.5, val));
  EXPECT_THROW(semi_online_wk_attack(cfg, S, atk, L2BallDefense{2.0}, Stream{}), ArgumentError);
}

TEST(Wk, SinglePointMatchesGridOracle) {
  Stream val;
  val.append({v1(1.0), Label::Positive});
  const LearnerConfig cfg{1.0, v1(0.5)};
  const auto out = semi_online_wk_attack(cfg, Stream{}, scalar_target(-0.5, 1.0, 1), L2BallDefense{1.0}, val);
  ASSERT_EQ(out.inserted_count, 1u);
  double best = -1.0;
  for (int i = -10000; i <= 10000; ++i) {
    for (Label y : {Label::Positive, Label::Negative}) {
      const Model t = ogd_step(v1(0.5), {v1(i / 10000.0), y}, 1.0);
      best = std::max(best, logistic_loss(t, val[0]));
    }
  }
  EXPECT_NEAR(logistic_loss(out.final_model, val[0]), best, 1e-3);
}

TEST(Wk, NeverBelowSimplisticInitialization) {
  Gen g(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = g.integer(1, 4);
    const LearnerConfig cfg{0.5, Model::Zero(d)};
    const Stream S = g.stream(d, 10);
    const Stream val = g.stream(d, 10);
    SemiOnlineAttackConfig atk;
    atk.theta_star = g.vec(d, 5.0);
    atk.K = 5;
    atk.R = 1.0;
    atk.eta = cfg.eta;
    atk.epsilon = std::numeric_limits<double>::min();
    const DefenseSpec def = L2BallDefense{1.0};
    const auto simp = simplistic_attack(cfg, S, atk, def);
    ASSERT_EQ(simp.inserted_count, atk.K);
    const auto wk = semi_online_wk_attack(cfg, S, atk, def, val, {30});
    double v_simp = 0.0;
    double v_wk = 0.0;
    for (const auto& ex : val) {
      v_simp += logistic_loss(simp.final_model, ex);
      v_wk += logistic_loss(wk.final_model, ex);
    }
    ASSERT_GE(v_wk, v_simp - 1e-9) << "trial " << trial;
  }
}

TEST(Concentrated, L2BallPointsSitOnTheCap) {
  Gen g(23);
  const Stream S = g.stream(3, 10);
  const LearnerConfig cfg{0.5, Model::Zero(3)};
  SemiOnlineAttackConfig atk;
  atk.theta_star = g.vec(3, 4.0);
  atk.K = 12;
  atk.R = 2.0;
  atk.eta = 0.5;
  const auto out = concentrated_attack(cfg, S, atk, L2BallDefense{2.0}, 5);
  ASSERT_EQ(out.inserted_count, 12u);
  const Vector u = atk.theta_star - out.clean_model;
  const Vector expect = 2.0 * u / u.norm();
  for (const auto& step : out.trace) {
    EXPECT_EQ(step.point.y, Label::Positive);
    EXPECT_LE((step.point.x - expect).norm(), 1e-9);
  }
}

TEST(Concentrated, ReturnsBestEvaluatedVariant) {
  Gen g(29);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = g.integer(2, 4);
    const DefenseSpec def = random_defense(g, d);
    const Stream S = g.stream(d, 10);
    const LearnerConfig cfg{0.5, Model::Zero(d)};
    SemiOnlineAttackConfig atk;
    atk.theta_star = g.vec(d, 3.0);
    atk.K = 6;
    atk.R = norm_cap(def);
    atk.eta = 0.5;
    const auto out = concentrated_attack(cfg, S, atk, def, 3);
    if (out.inserted_count == 0) continue;
    const double got = cosine_or(out.final_model, atk.theta_star, 0.0);
    // Independent check against the all-positive and all-negative variants.
    const Vector u = atk.theta_star - out.clean_model;
    for (Label y : {Label::Positive, Label::Negative}) {
      const Vector dir = sign_of(y) * u;
      const auto iv = ray_interval(def, dir.normalized(), y, atk.R);
      if (!iv || !(iv->hi > 1e-6)) continue;
      Stream tail;
      for (std::size_t k = 0; k < atk.K; ++k) tail.append({Vector(iv->hi * (1 - 1e-9) * dir.normalized()), y}, true);
      Model theta = out.clean_model;
      ogd_continue(theta, cfg.eta, tail, def);
      ASSERT_GE(got, cosine_or(theta, atk.theta_star, 0.0) - 1e-6) << "trial " << trial;
    }
  }
}

TEST(AllAttacks, PointsFeasibleAndWithinBudget) {
  Gen g(101);
  for (int trial = 0; trial < 24; ++trial) {
    const Eigen::Index d = g.integer(1, 4);
    const DefenseSpec def = random_defense(g, d);
    const Stream S = g.stream(d, 15);
    const Stream val = g.stream(d, 10);
    const LearnerConfig cfg{g.uniform(0.1, 1.0), Model::Zero(d)};
    SemiOnlineAttackConfig atk;
    atk.theta_star = g.vec(d, 2.0);
    atk.K = static_cast<std::size_t>(g.integer(0, 8));
    atk.R = norm_cap(def);
    atk.eta = cfg.eta;
    atk.seed = static_cast<std::uint64_t>(trial);
    for (AttackKind kind : {AttackKind::Simplistic, AttackKind::Greedy, AttackKind::SemiOnlineWK,
                            AttackKind::Concentrated}) {
      AttackOutcome out;
      try {
        out = run_attack(kind, cfg, S, atk, def, val, {{1, 20}, {10}, 3});
      } catch (const AttackError&) {
        continue;
      }
      ASSERT_LE(out.inserted_count, atk.K);
      ASSERT_EQ(poison_flags(out.poisoned_stream), out.inserted_count);
      ASSERT_EQ(out.poisoned_stream.size(), S.size() + out.inserted_count);
      for (std::size_t i = 0; i < out.poisoned_stream.size(); ++i) {
        if (out.poisoned_stream.is_poison(i)) {
          ASSERT_TRUE(contains(def, out.poisoned_stream[i])) << to_string(kind) << " trial " << trial;
          ASSERT_LE(out.poisoned_stream[i].x.norm(), atk.R * (1 + 1e-12));
        }
      }
      ASSERT_EQ(out.succeeded, (out.final_model - atk.theta_star).norm() <= atk.epsilon);
      ASSERT_EQ(out.final_model, ogd_final(cfg, out.poisoned_stream, def));
    }
  }
}

TEST(AllAttacks, FrontInsertionPutsPoisonFirst) {
  Gen g(6);
  const Stream S = g.stream(2, 4);
  SemiOnlineAttackConfig atk;
  atk.theta_star = g.vec(2, 3.0);
  atk.K = 3;
  atk.R = 1.0;
  atk.epsilon = 1e-9;
  atk.position = InsertionPosition::Front;
  const auto out = simplistic_attack({1.0, Model::Zero(2)}, S, atk, L2BallDefense{1.0});
  ASSERT_EQ(out.inserted_count, 3u);
  for (std::size_t i = 0; i < out.poisoned_stream.size(); ++i) EXPECT_EQ(out.poisoned_stream.is_poison(i), i < 3);
}

TEST(AttackKinds, ParseNames) {
  EXPECT_EQ(attack_kind_from_string("simplistic"), AttackKind::Simplistic);
  EXPECT_EQ(attack_kind_from_string("wk"), AttackKind::SemiOnlineWK);
  EXPECT_EQ(to_string(AttackKind::Concentrated), "concentrated");
  EXPECT_THROW(attack_kind_from_string("nope"), ArgumentError);
}
