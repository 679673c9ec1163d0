// Experiment sweeps: semi-online cosine-vs-tau and fully-online
// error-vs-retention, plus the offline-optimal baseline.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "streampoison/attacks.hpp"
#include "streampoison/defense.hpp"
#include "streampoison/fully_online.hpp"
#include "streampoison/learner.hpp"
#include "streampoison/regime.hpp"
#include "streampoison/tasks.hpp"

namespace streampoison {

struct SemiOnlineRunRecord {
  std::string dataset;
  std::string defense;
  double percentile = 0.0;
  double tau = 0.0;
  std::string attack;
  std::size_t K = 0;
  double eta = 0.0;
  double cos_to_target = 0.0;
  double test_error = 0.0;
  std::string regime;
  std::optional<double> tau_easy;
  std::optional<double> tau_hard;
  std::size_t inserted = 0;
  std::uint64_t seed = 0;
  std::string error;  // nonempty when the attack failed for this cell

  bool operator==(const SemiOnlineRunRecord&) const = default;
};

struct FullyOnlineRunRecord {
  std::string dataset;
  std::string defense;
  double retention = 0.0;
  double tau = 0.0;
  std::string attack;
  double budget_fraction = 0.0;
  std::size_t T = 0;
  double online_error = 0.0;
  double offline_optimal_error = 0.0;
  std::size_t skipped = 0;
  std::uint64_t seed = 0;
  std::string error;

  bool operator==(const FullyOnlineRunRecord&) const = default;
};

/// Builds a defense of the given kind. For the L2 ball tau is the radius.
inline DefenseSpec make_defense(DefenseKind kind, double tau, double R, const CentroidStats* stats) {
  switch (kind) {
    case DefenseKind::L2Ball: return L2BallDefense{tau};
    case DefenseKind::Centroid:
      if (!stats) throw ArgumentError("centroid defense needs centroid stats");
      return CentroidDefense{R, tau, *stats};
    case DefenseKind::Slab:
      if (!stats) throw ArgumentError("slab defense needs centroid stats");
      return SlabDefense{R, tau, *stats};
    case DefenseKind::LabelingOracle: break;
  }
  throw UnsupportedVariantError("sweeps support score-based defenses only");
}

inline double max_norm(const Stream& s) {
  double r = 0.0;
  for (const auto& ex : s) r = std::max(r, ex.x.norm());
  return r;
}

// ---------------------------------------------------------------------------

/// Full-batch gradient descent on the mean logistic loss with step 1/L, where
/// L = max ||x||^2 / 4 bounds the gradient's Lipschitz constant.
inline Model fit_offline_logistic(const Stream& s, double grad_tol = 1e-6, int max_epochs = 10000,
                                  double norm_cap = 1e6) {
  if (s.empty()) throw ArgumentError("offline fit: empty stream");
  const Eigen::Index d = s[0].x.size();
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd Z(n, d);  // rows y_i x_i
  for (Eigen::Index i = 0; i < n; ++i) Z.row(i) = sign_of(s[static_cast<std::size_t>(i)].y) * s[static_cast<std::size_t>(i)].x.transpose();
  const double L = 0.25 * Z.rowwise().squaredNorm().maxCoeff();
  Model theta = Model::Zero(d);
  if (L == 0.0) return theta;
  const double step = 1.0 / L;
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    const Vector margins = Z * theta;
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = sigmoid(-margins[i]);
    const Vector grad = -(Z.transpose() * w) / static_cast<double>(n);
    if (grad.norm() < grad_tol) break;
    theta -= step * grad;
    const double nt = theta.norm();
    if (nt > norm_cap) {
      theta *= norm_cap / nt;
      break;
    }
  }
  return theta;
}

inline double offline_optimal_error(const Stream& clean) {
  return error_rate(fit_offline_logistic(clean), clean);
}

// ---------------------------------------------------------------------------
// Semi-online sweep.

struct SemiOnlineSweep {
  DefenseKind defense = DefenseKind::Slab;
  std::vector<AttackKind> attacks{AttackKind::Simplistic};
  std::vector<double> percentiles{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::size_t K = 100;
  double eta = 0.01;
  std::vector<std::uint64_t> seeds{0};
  std::optional<double> norm_cap;  // defaults to the largest clean norm
  double epsilon = 1e-3;
  AttackSuiteOptions attack_options{};
  bool filter_clean = false;  // also pass the clean train split through the defense
};

/// Per (tau, attack, seed) cell: the target is minus the model plain OGD
/// reaches on the clean train split, the attack inserts points from the
/// calibrated defense's feasible set, and the final model is scored. By default
/// only inserted points are constrained; with `filter_clean` the defense also
/// filters the clean split.
inline std::vector<SemiOnlineRunRecord> run_semi_online(const DatasetBundle& bundle, const SemiOnlineSweep& sweep) {
  if (sweep.attacks.empty()) throw ArgumentError("run_semi_online: no attacks");
  if (bundle.train.empty() || bundle.init.empty()) throw ArgumentError("run_semi_online: bundle needs init and train splits");
  const Eigen::Index d = bundle.dimension();
  const LearnerConfig config{sweep.eta, Model::Zero(d)};
  std::optional<CentroidStats> stats;
  if (sweep.defense != DefenseKind::L2Ball) stats = fit_centroids(bundle.init);
  const CentroidStats* sp = stats ? &*stats : nullptr;
  const double R = sweep.norm_cap.value_or(std::max(max_norm(bundle.train), max_norm(bundle.init)));
  const Model clean_model = ogd_final(config, bundle.train);
  const Model theta_star = -clean_model;
  const Stream empty;

  std::vector<SemiOnlineRunRecord> out;
  for (double p : sweep.percentiles) {
    const double tau = calibrate_tau(bundle.train, sweep.defense, sp, CalibrationMode::percentile(p));
    const DefenseSpec defense = make_defense(sweep.defense, tau, R, sp);
    const Model theta_tilde = sweep.filter_clean ? ogd_final(config, bundle.train, defense) : clean_model;
    // Attacks append at the end, so starting from the clean model with an
    // empty prefix gives the same final model as replaying the split.
    const LearnerConfig attack_config = sweep.filter_clean ? config : LearnerConfig{sweep.eta, clean_model};
    const Stream& attack_prefix = sweep.filter_clean ? bundle.train : empty;
    const RegimeQuery q{config.theta0, theta_star, theta_tilde, sweep.eta};
    std::string regime = "undefined";
    RegimeBoundaries bounds;
    if ((q.attack_direction()).norm() > 0.0) {
      regime = to_string(classify(defense, q).kind);
      bounds = regime_boundaries(sweep.defense, sp, q);
    }
    for (AttackKind kind : sweep.attacks) {
      for (std::uint64_t seed : sweep.seeds) {
        SemiOnlineRunRecord rec;
        rec.dataset = bundle.id;
        rec.defense = to_string(sweep.defense);
        rec.percentile = p;
        rec.tau = tau;
        rec.attack = to_string(kind);
        rec.K = sweep.K;
        rec.eta = sweep.eta;
        rec.regime = regime;
        rec.tau_easy = bounds.tau_easy;
        rec.tau_hard = bounds.tau_hard;
        rec.seed = seed;
        SemiOnlineAttackConfig atk;
        atk.theta_star = theta_star;
        atk.K = sweep.K;
        atk.epsilon = sweep.epsilon;
        atk.R = R;
        atk.eta = sweep.eta;
        atk.seed = seed;
        try {
          const AttackOutcome o = run_attack(kind, attack_config, attack_prefix, atk, defense, bundle.init, sweep.attack_options);
          rec.cos_to_target = cosine_or(o.final_model, theta_star, 0.0);
          rec.test_error = bundle.test.empty() ? 0.0 : error_rate(o.final_model, bundle.test);
          rec.inserted = o.inserted_count;
        } catch (const std::exception& e) {
          rec.error = e.what();
        }
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fully-online sweep.

struct FullyOnlineSweep {
  DefenseKind defense = DefenseKind::Slab;
  std::vector<AttackKind> attacks{AttackKind::Simplistic};
  std::vector<double> retentions{0.3, 0.5, 0.7, 0.9, 1.0};
  double budget_fraction = 0.1;
  std::size_t T = 1000;
  double eta = 0.01;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::optional<double> norm_cap;
  std::optional<Model> target;  // defaults to minus one OGD pass over the init split
  double epsilon = 1e-3;
  AttackSuiteOptions attack_options{};
};

/// Clean points are drawn uniformly with replacement from the train split.
inline std::vector<FullyOnlineRunRecord> run_fully_online(const DatasetBundle& bundle, const FullyOnlineSweep& sweep) {
  if (sweep.attacks.empty()) throw ArgumentError("run_fully_online: no attacks");
  if (!(sweep.budget_fraction >= 0.0 && sweep.budget_fraction < 1.0)) {
    throw ArgumentError("run_fully_online: budget fraction must be in [0, 1)");
  }
  if (sweep.T < 1) throw ArgumentError("run_fully_online: T must be >= 1");
  if (bundle.train.empty() || bundle.init.empty()) throw ArgumentError("run_fully_online: bundle needs init and train splits");
  for (AttackKind k : sweep.attacks) {
    if (k == AttackKind::Concentrated) throw ArgumentError("the concentrated attack is semi-online only");
  }
  const Eigen::Index d = bundle.dimension();
  const LearnerConfig config{sweep.eta, Model::Zero(d)};
  std::optional<CentroidStats> stats;
  if (sweep.defense != DefenseKind::L2Ball) stats = fit_centroids(bundle.init);
  const CentroidStats* sp = stats ? &*stats : nullptr;
  const double R = sweep.norm_cap.value_or(std::max(max_norm(bundle.train), max_norm(bundle.init)));
  const Model theta_star = sweep.target.value_or(Model(-ogd_final(config, bundle.init)));

  std::vector<FullyOnlineRunRecord> out;
  for (double q : sweep.retentions) {
    const double tau = calibrate_tau(bundle.train, sweep.defense, sp, CalibrationMode::retention(q));
    const DefenseSpec defense = make_defense(sweep.defense, tau, R, sp);
    for (AttackKind kind : sweep.attacks) {
      for (std::uint64_t seed : sweep.seeds) {
        FullyOnlineRunRecord rec;
        rec.dataset = bundle.id;
        rec.defense = to_string(sweep.defense);
        rec.retention = q;
        rec.tau = tau;
        rec.attack = to_string(kind);
        rec.budget_fraction = sweep.budget_fraction;
        rec.T = sweep.T;
        rec.seed = seed;
        try {
          std::mt19937_64 rng(seed);
          const auto positions = draw_positions(sweep.T, sweep.budget_fraction, rng);
          std::uniform_int_distribution<std::size_t> pick(0, bundle.train.size() - 1);
          const CleanSource clean = [&](std::size_t) { return bundle.train[pick(rng)]; };
          SemiOnlineAttackConfig atk;
          atk.theta_star = theta_star;
          atk.epsilon = sweep.epsilon;
          atk.R = R;
          atk.eta = sweep.eta;
          atk.seed = seed;
          const PoisonSource poison =
              make_subroutine_poison(kind, sweep.eta, atk, defense, bundle.init, sweep.attack_options);
          const auto res = fully_online_drive(config, clean, positions, poison, defense, sweep.T,
                                              TrajectoryStorage::FinalOnly);
          rec.online_error = res.online_error;
          rec.skipped = res.skipped_slots.size();
          Stream clean_part;
          for (std::size_t k = 0; k < res.stream.size(); ++k) {
            if (!res.stream.is_poison(k)) clean_part.append(res.stream[k]);
          }
          rec.offline_optimal_error = offline_optimal_error(clean_part);
        } catch (const std::exception& e) {
          rec.error = e.what();
        }
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

}  // namespace streampoison
