// Filtered online gradient descent over a stream.
#pragma once

#include <optional>

#include "streampoison/core.hpp"
#include "streampoison/defense.hpp"

namespace streampoison {

enum class TrajectoryStorage { Full, FinalOnly };

/// Runs OGD over the stream. An example the defense rejects leaves theta
/// untouched. In FinalOnly mode `models` holds just theta_0 and theta_T.
inline Trajectory ogd_run(const LearnerConfig& config, const Stream& stream,
                          const std::optional<DefenseSpec>& defense = std::nullopt,
                          TrajectoryStorage storage = TrajectoryStorage::Full) {
  config.validate();
  Trajectory traj;
  Model theta = config.theta0;
  traj.accepted_flags.reserve(stream.size());
  if (storage == TrajectoryStorage::Full) traj.models.reserve(stream.size() + 1);
  traj.models.push_back(theta);
  for (const auto& ex : stream) {
    detail::check_dims(ex.x.size(), theta.size(), "ogd_run");
    const bool accepted = !defense || contains(*defense, ex);
    if (accepted) ogd_update(theta, ex, config.eta);
    traj.accepted_flags.push_back(accepted);
    if (storage == TrajectoryStorage::Full) traj.models.push_back(theta);
  }
  if (storage == TrajectoryStorage::FinalOnly && !stream.empty()) traj.models.push_back(theta);
  traj.final_model = std::move(theta);
  return traj;
}

inline Model ogd_final(const LearnerConfig& config, const Stream& stream,
                       const std::optional<DefenseSpec>& defense = std::nullopt) {
  return ogd_run(config, stream, defense, TrajectoryStorage::FinalOnly).final_model;
}

/// Continues OGD from an arbitrary model over a stream, in place.
inline void ogd_continue(Model& theta, double eta, const Stream& stream,
                         const std::optional<DefenseSpec>& defense = std::nullopt) {
  for (const auto& ex : stream) {
    if (!defense || contains(*defense, ex)) ogd_update(theta, ex, eta);
  }
}

}  // namespace streampoison
