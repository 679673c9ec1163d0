// Fully-online driver: the attacker sees only the past and inserts at fixed
// positions; the metric is the progressive error on clean positions.
#pragma once

#include <functional>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "streampoison/attacks.hpp"
#include "streampoison/core.hpp"
#include "streampoison/defense.hpp"
#include "streampoison/learner.hpp"

namespace streampoison {

using CleanSource = std::function<LabeledExample(std::size_t t)>;
/// Returns the poison example for slot t given the current model, or nothing
/// when the attacker has no feasible point.
using PoisonSource = std::function<std::optional<LabeledExample>(const Model& theta, std::size_t t)>;

struct FullyOnlineResult {
  Stream stream;
  Trajectory trajectory;  // aligned with `stream`: models[k] is the model that saw stream[k]
  double online_error = 0.0;
  std::size_t clean_count = 0;
  std::size_t clean_mistakes = 0;
  std::vector<std::size_t> skipped_slots;
};

/// Draws |I| = round(fraction * T) positions uniformly without replacement.
inline std::set<std::size_t> draw_positions(std::size_t T, double fraction, std::mt19937_64& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ArgumentError("budget fraction must be in [0, 1)");
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(T)));
  std::vector<std::size_t> all(T);
  for (std::size_t i = 0; i < T; ++i) all[i] = i;
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, T - 1);
    std::swap(all[i], all[pick(rng)]);
    out.insert(all[i]);
  }
  return out;
}

/// Builds the stream slot by slot. Clean slots draw from `clean`; slots in
/// `positions` ask `poison` for one point given theta_t. Models stored follow
/// `storage`.
inline FullyOnlineResult fully_online_drive(const LearnerConfig& config, const CleanSource& clean,
                                            const std::set<std::size_t>& positions, const PoisonSource& poison,
                                            const std::optional<DefenseSpec>& defense, std::size_t T,
                                            TrajectoryStorage storage = TrajectoryStorage::Full) {
  config.validate();
  if (!positions.empty() && *positions.rbegin() >= T) throw ArgumentError("fully_online_drive: position outside [0, T)");
  FullyOnlineResult res;
  Model theta = config.theta0;
  if (storage == TrajectoryStorage::Full) res.trajectory.models.reserve(T + 1);
  res.trajectory.models.push_back(theta);
  for (std::size_t t = 0; t < T; ++t) {
    const bool poison_slot = positions.count(t) > 0;
    std::optional<LabeledExample> ex;
    if (poison_slot) {
      ex = poison(theta, t);
      if (!ex) {
        res.skipped_slots.push_back(t);
        continue;
      }
    } else {
      ex = clean(t);
      ++res.clean_count;
      if (!predicts_correctly(theta, *ex)) ++res.clean_mistakes;
    }
    detail::check_dims(ex->x.size(), theta.size(), "fully_online_drive");
    const bool accepted = !defense || contains(*defense, *ex);
    if (accepted) ogd_update(theta, *ex, config.eta);
    res.trajectory.accepted_flags.push_back(accepted);
    if (storage == TrajectoryStorage::Full) res.trajectory.models.push_back(theta);
    res.stream.append(std::move(*ex), poison_slot);
  }
  if (storage == TrajectoryStorage::FinalOnly && T > 0) res.trajectory.models.push_back(theta);
  res.trajectory.final_model = std::move(theta);
  if (res.clean_count == 0) throw UndefinedMetricError("fully_online_drive: no clean positions");
  res.online_error = static_cast<double>(res.clean_mistakes) / static_cast<double>(res.clean_count);
  return res;
}

/// Recomputes the online error from a full trajectory and the poison flags.
inline double online_error_from_trajectory(const Stream& stream, const Trajectory& traj) {
  if (traj.models.size() != stream.size() + 1) throw ArgumentError("online_error_from_trajectory: needs a full trajectory");
  std::size_t n = 0;
  std::size_t wrong = 0;
  for (std::size_t k = 0; k < stream.size(); ++k) {
    if (stream.is_poison(k)) continue;
    ++n;
    if (!predicts_correctly(traj.models[k], stream[k])) ++wrong;
  }
  if (n == 0) throw UndefinedMetricError("online_error_from_trajectory: no clean positions");
  return static_cast<double>(wrong) / static_cast<double>(n);
}

/// Wraps a semi-online attack as a one-point-per-slot poison source: the
/// attack starts from theta_t with an empty clean suffix and budget 1.
inline PoisonSource make_subroutine_poison(AttackKind kind, double eta, SemiOnlineAttackConfig atk,
                                           DefenseSpec defense, Stream validation, AttackSuiteOptions opts = {}) {
  atk.K = 1;
  atk.eta = eta;
  return [=](const Model& theta, std::size_t t) -> std::optional<LabeledExample> {
    SemiOnlineAttackConfig cfg = atk;
    cfg.seed = atk.seed + t;
    if ((theta - cfg.theta_star).norm() <= cfg.epsilon) return std::nullopt;
    const LearnerConfig lc{eta, theta};
    try {
      const AttackOutcome out = run_attack(kind, lc, Stream{}, cfg, defense, validation, opts);
      for (std::size_t k = 0; k < out.poisoned_stream.size(); ++k) {
        if (out.poisoned_stream.is_poison(k)) return out.poisoned_stream[k];
      }
    } catch (const AttackError&) {
    }
    return std::nullopt;
  };
}

inline PoisonSource constant_poison(LabeledExample ex) {
  return [ex = std::move(ex)](const Model&, std::size_t) -> std::optional<LabeledExample> { return ex; };
}

}  // namespace streampoison
