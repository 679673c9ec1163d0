// Easy / hard / intermediate regime classification with executable
// certificates: a feasible segment from the origin along theta* - theta~_0
// (easy) or a halfspace through the origin that holds the whole one-sided
// feasible set while excluding the ray along theta* - theta_0 (hard).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "streampoison/core.hpp"
#include "streampoison/defense.hpp"
#include "streampoison/numeric.hpp"

namespace streampoison {

class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct FeasibleSegment {
  double r = 0.0;
  Vector u;

  [[nodiscard]] Vector point(double c) const { return u * (c / u.norm()); }
};

struct HalfspaceWitness {
  Vector normal;              // F' is contained in {z : normal^T z <= 0}
  Vector excluded_direction;  // theta* - theta_0

  [[nodiscard]] bool strict() const { return normal.dot(excluded_direction) > 0.0; }
};

enum class RegimeKind { Easy, Hard, Intermediate };

inline std::string to_string(RegimeKind k) {
  switch (k) {
    case RegimeKind::Easy: return "easy";
    case RegimeKind::Hard: return "hard";
    case RegimeKind::Intermediate: return "intermediate";
  }
  return "unknown";
}

struct RegimeVerdict {
  RegimeKind kind = RegimeKind::Intermediate;
  std::optional<double> C;
  std::optional<double> gamma0;
  std::optional<FeasibleSegment> segment;
  std::optional<HalfspaceWitness> witness;
  std::string note;
};

/// Models that fix the geometry of a poisoning instance.
struct RegimeQuery {
  Model theta0;        // learner's initial model
  Model theta_star;    // attack target
  Model theta_tilde0;  // model after the clean stream
  double eta = 1.0;

  [[nodiscard]] double lambda() const { return theta_star.norm(); }
  [[nodiscard]] Vector attack_direction() const { return theta_star - theta_tilde0; }
  [[nodiscard]] Vector target_direction() const { return theta_star - theta0; }
};

struct RateConstant {
  double gamma0 = 0.0;
  double C = 0.0;
};

/// gamma0 = min(R / dist0, 1/eta) and C = 1 / -log(1 - eta gamma0 / (1 + exp(lambda^2 gamma0))).
inline RateConstant rate_constant(double eta, double R, double lambda, double dist0) {
  if (!(eta > 0.0) || !(R > 0.0) || !(dist0 > 0.0) || !(lambda >= 0.0)) {
    throw ArgumentError("rate_constant: eta, R, dist0 must be positive and lambda nonnegative");
  }
  const double gamma0 = std::min(R / dist0, 1.0 / eta);
  const double f = eta * gamma0 * sigmoid(-lambda * lambda * gamma0);
  if (!(f > 0.0 && f < 1.0)) throw InternalError("rate_constant: contraction factor outside (0, 1)");
  return {gamma0, -1.0 / std::log1p(-f)};
}

/// Insertions the rate bound allows: ceil(C log(lambda / epsilon)).
inline std::size_t rate_budget(double C, double lambda, double epsilon) {
  const double v = C * std::log(lambda / epsilon);
  return v <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(v));
}

struct CentroidGeometry {
  Vector u_plus;   // projection of mu_plus on theta* - theta_0
  Vector u_minus;  // projection of mu_minus on theta_0 - theta*
};

inline CentroidGeometry centroid_geometry(const CentroidStats& stats, const RegimeQuery& q) {
  const Vector w = q.target_direction();
  const double wn2 = w.squaredNorm();
  if (wn2 == 0.0) throw ArgumentError("centroid_geometry: theta* equals theta_0");
  // The projection onto -w is the same vector as the projection onto w.
  return {w * (stats.mu_plus.dot(w) / wn2), w * (stats.mu_minus.dot(w) / wn2)};
}

struct SlabGeometry {
  Vector beta;  // oriented so that beta^T (theta* - theta~_0) >= 0
  double b_plus = 0.0;
  double b_minus = 0.0;
};

inline SlabGeometry slab_geometry(const CentroidStats& stats, const RegimeQuery& q) {
  Vector beta = stats.beta;
  if (beta.dot(q.attack_direction()) < 0.0) beta = -beta;
  return {beta, -beta.dot(stats.mu_plus), beta.dot(stats.mu_minus)};
}

namespace detail {

/// Segment certificates are shrunk by a relative 1e-12 so that the closed-form
/// endpoint also passes the exact membership test.
constexpr double kCertificateShrink = 1.0 - 1e-12;

inline RegimeVerdict easy_verdict(double r, const RegimeQuery& q) {
  RegimeVerdict v;
  v.kind = RegimeKind::Easy;
  const Vector u = q.attack_direction();
  v.segment = FeasibleSegment{r * kCertificateShrink, u};
  const auto c = rate_constant(q.eta, v.segment->r, q.lambda(), u.norm());
  v.C = c.C;
  v.gamma0 = c.gamma0;
  return v;
}

inline void check_query(const RegimeQuery& q) {
  detail::check_dims(q.theta0.size(), q.theta_star.size(), "regime query");
  detail::check_dims(q.theta_tilde0.size(), q.theta_star.size(), "regime query");
  if (q.attack_direction().norm() == 0.0) throw ArgumentError("regime query: theta* equals theta~_0");
  if (!(q.eta > 0.0)) throw ArgumentError("regime query: eta must be positive");
}

}  // namespace detail

inline RegimeVerdict classify_l2(const L2BallDefense& d, const RegimeQuery& q) {
  detail::check_query(q);
  if (!(d.R > 0.0)) throw ArgumentError("classify_l2: R must be positive");
  return detail::easy_verdict(d.R, q);
}

inline RegimeVerdict classify_centroid(const CentroidDefense& d, const RegimeQuery& q) {
  detail::check_query(q);
  const auto& s = d.stats;
  const double np = s.mu_plus.norm();
  const double nm = s.mu_minus.norm();
  if (d.tau > std::min(np, nm)) {
    const Vector u = q.attack_direction();
    std::optional<double> r;
    if (np < d.tau) r = centroid_segment_radius(s.mu_plus, d.tau, u);
    if (nm < d.tau) {
      if (auto rm = centroid_segment_radius(Vector(-s.mu_minus), d.tau, u)) r = std::max(r.value_or(0.0), *rm);
    }
    if (!r) throw InternalError("classify_centroid: ball contains the origin but has no segment");
    return detail::easy_verdict(std::min(*r, d.R), q);
  }
  if (q.target_direction().norm() > 0.0) {
    const Vector w = q.target_direction();
    const CentroidGeometry g = centroid_geometry(s, q);
    if (s.mu_plus.dot(w) < 0.0 && s.mu_minus.dot(Vector(-w)) < 0.0 &&
        d.tau <= std::min(g.u_plus.norm(), g.u_minus.norm())) {
      RegimeVerdict v;
      v.kind = RegimeKind::Hard;
      v.witness = HalfspaceWitness{w, w};
      return v;
    }
  }
  return {};
}

inline RegimeVerdict classify_slab(const SlabDefense& d, const RegimeQuery& q) {
  detail::check_query(q);
  const SlabGeometry g = slab_geometry(d.stats, q);
  const double bn = g.beta.norm();
  if (bn == 0.0) {
    // Identical centroids: every score is zero and only the norm cap binds.
    return detail::easy_verdict(d.R, q);
  }
  const double tau = d.tau;
  auto easy_side = [&](double b) { return tau - b > 0.0 && 0.0 > -tau - b; };
  auto blocked_side = [&](double b) { return 0.0 >= tau - b && tau - b > -tau - b; };
  if (easy_side(g.b_plus) || easy_side(g.b_minus)) {
    double r = std::numeric_limits<double>::infinity();
    if (easy_side(g.b_plus)) r = std::min(r, (tau - g.b_plus) / bn);
    if (easy_side(g.b_minus)) r = std::min(r, (tau - g.b_minus) / bn);
    return detail::easy_verdict(std::min(r, d.R), q);
  }
  if (blocked_side(g.b_plus) && blocked_side(g.b_minus)) {
    RegimeVerdict v;
    const Vector w = q.target_direction();
    if (g.beta.dot(w) > 0.0) {
      v.kind = RegimeKind::Hard;
      v.witness = HalfspaceWitness{g.beta, w};
    } else {
      v.note = "simplistic-blocked: the simplistic attack cannot reach the target, but beta^T (theta* - theta_0) "
               "is not positive so general impossibility is not certified";
    }
    return v;
  }
  return {};
}

inline RegimeVerdict classify(const DefenseSpec& defense, const RegimeQuery& q) {
  return std::visit(
      [&](const auto& d) -> RegimeVerdict {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, L2BallDefense>) {
          return classify_l2(d, q);
        } else if constexpr (std::is_same_v<T, CentroidDefense>) {
          return classify_centroid(d, q);
        } else if constexpr (std::is_same_v<T, SlabDefense>) {
          return classify_slab(d, q);
        } else {
          detail::check_query(q);
          RegimeVerdict v;
          v.note = "no closed-form classifier for a labeling oracle; use segment_feasible / halfspace_separates";
          return v;
        }
      },
      defense);
}

// ---------------------------------------------------------------------------
// Numerical certificate checks.

inline bool segment_feasible(const DefenseSpec& defense, const FeasibleSegment& seg, int samples) {
  if (samples < 2) throw ArgumentError("segment_feasible: need at least 2 samples");
  if (!(seg.r > 0.0) || seg.u.norm() == 0.0) return false;
  for (int k = 1; k <= samples; ++k) {
    const double c = seg.r * static_cast<double>(k) / samples;
    if (!one_sided_contains(defense, seg.point(c))) return false;
  }
  return true;
}

enum class SeparationResult { Separates, Violated, InvalidWitness, Inconclusive };

inline std::string to_string(SeparationResult r) {
  switch (r) {
    case SeparationResult::Separates: return "separates";
    case SeparationResult::Violated: return "violated";
    case SeparationResult::InvalidWitness: return "invalid-witness";
    case SeparationResult::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

/// Falsification test for a hard certificate: random feasible one-sided
/// points must all satisfy normal^T z <= 1e-9.
inline SeparationResult halfspace_check(const DefenseSpec& defense, const HalfspaceWitness& w, int samples,
                                        std::uint64_t seed) {
  if (samples < 1) throw ArgumentError("halfspace_separates: need at least 1 sample");
  if (!w.strict()) return SeparationResult::InvalidWitness;
  const Eigen::Index d = w.normal.size();
  const double R = norm_cap(defense);
  // Proposals: the norm ball, plus balls around the one-sided class centroids.
  std::vector<std::pair<Vector, double>> proposals{{Vector::Zero(d), R}};
  std::visit(
      [&](const auto& def) {
        using T = std::decay_t<decltype(def)>;
        if constexpr (std::is_same_v<T, CentroidDefense>) {
          proposals.emplace_back(def.stats.mu_plus, def.tau);
          proposals.emplace_back(-def.stats.mu_minus, def.tau);
        } else if constexpr (std::is_same_v<T, SlabDefense>) {
          proposals.emplace_back(def.stats.mu_plus, R);
          proposals.emplace_back(-def.stats.mu_minus, R);
        }
      },
      defense);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, proposals.size() - 1);
  const long long max_draws = 1'000'000LL + 20LL * samples;
  int accepted = 0;
  for (long long draw = 0; draw < max_draws && accepted < samples; ++draw) {
    const auto& [center, radius] = proposals[pick(rng)];
    const Vector z = numeric::uniform_in_ball(center, radius, rng);
    if (!one_sided_contains(defense, z)) continue;
    ++accepted;
    if (w.normal.dot(z) > 1e-9) return SeparationResult::Violated;
  }
  if (accepted == 0) return SeparationResult::Inconclusive;
  return SeparationResult::Separates;
}

inline bool halfspace_separates(const DefenseSpec& defense, const HalfspaceWitness& w, int samples,
                                std::uint64_t seed) {
  return halfspace_check(defense, w, samples, seed) == SeparationResult::Separates;
}

struct RegimeBoundaries {
  std::optional<double> tau_easy;  // easy for tau strictly above
  std::optional<double> tau_hard;  // hard for tau at or below
};

inline RegimeBoundaries regime_boundaries(DefenseKind kind, const CentroidStats* stats, const RegimeQuery& q) {
  switch (kind) {
    case DefenseKind::L2Ball: return {0.0, std::nullopt};
    case DefenseKind::Centroid: {
      if (stats == nullptr) throw ArgumentError("regime_boundaries: centroid stats required");
      RegimeBoundaries b;
      b.tau_easy = std::min(stats->mu_plus.norm(), stats->mu_minus.norm());
      const Vector w = q.target_direction();
      if (w.norm() > 0.0 && stats->mu_plus.dot(w) < 0.0 && stats->mu_minus.dot(Vector(-w)) < 0.0) {
        const auto g = centroid_geometry(*stats, q);
        b.tau_hard = std::min(g.u_plus.norm(), g.u_minus.norm());
      }
      return b;
    }
    case DefenseKind::Slab: {
      if (stats == nullptr) throw ArgumentError("regime_boundaries: slab stats required");
      const SlabGeometry g = slab_geometry(*stats, q);
      RegimeBoundaries b;
      if (g.beta.norm() == 0.0) return {0.0, std::nullopt};
      b.tau_easy = std::min(std::abs(g.b_plus), std::abs(g.b_minus));
      if (g.b_plus > 0.0 && g.b_minus > 0.0 && g.beta.dot(q.target_direction()) > 0.0) {
        b.tau_hard = std::min(g.b_plus, g.b_minus);
      }
      return b;
    }
    case DefenseKind::LabelingOracle: break;
  }
  throw UnsupportedVariantError("regime_boundaries: labeling oracle has no scalar threshold");
}

// ---------------------------------------------------------------------------
// One-dimensional intermediate-regime cases with theta~_0 = 0.5, theta* = 1,
// eta = 1.

struct SlowCase {
  double r = 0.0;
  std::size_t closed_form_bound = 0;   // ceil(0.5 (1 + e^{r/2}) / r)
  std::size_t accumulated_bound = 0;   // steps of the per-step maximum increment to cover 0.5
  std::size_t simulated_count = 0;     // actual OGD updates with (r, +1) until theta >= 1
};

struct IntermediateReport {
  double rapid_x = 0.0;             // single point reaching theta* exactly
  double rapid_theta_after = 0.0;   // OGD check of the rapid point
  std::vector<SlowCase> slow;
  double impossible_theta_one_step = 0.0;
  bool impossible_monotone = false;  // strictly increasing over the further steps
  double impossible_min_gap = 0.0;   // min |theta - 1| over all steps
  std::size_t impossible_steps = 0;
};

inline IntermediateReport intermediate_case_suite(const std::vector<double>& slow_radii = {5.0, 10.0, 15.0, 20.0},
                                                  std::size_t impossible_steps = 1000) {
  constexpr double kStart = 0.5;
  constexpr double kTarget = 1.0;
  constexpr double kEta = 1.0;
  auto step = [&](double theta, double x) {
    Model t(1);
    t[0] = theta;
    Vector xv(1);
    xv[0] = x;
    ogd_update(t, {xv, Label::Positive}, kEta);
    return t[0];
  };

  IntermediateReport rep;
  // Rapid: smallest x with 0.5 + x / (1 + exp(0.5 x)) = 1.
  const auto h = [&](double x) { return kStart + x * sigmoid(-kStart * x) - kTarget; };
  const double peak = numeric::logistic_ratio_peak() / kStart;
  rep.rapid_x = numeric::bisect(h, 0.0, peak, 1e-13);
  rep.rapid_theta_after = step(kStart, rep.rapid_x);

  for (double r : slow_radii) {
    SlowCase sc;
    sc.r = r;
    const double max_increment = r * sigmoid(-r * kStart);
    sc.closed_form_bound = static_cast<std::size_t>(std::ceil((kTarget - kStart) * (1.0 + std::exp(r * kStart)) / r));
    double covered = 0.0;
    while (covered < kTarget - kStart) {
      covered += max_increment;
      ++sc.accumulated_bound;
    }
    double theta = kStart;
    while (theta < kTarget) {
      theta = step(theta, r);
      ++sc.simulated_count;
    }
    rep.slow.push_back(sc);
  }

  double theta = step(kStart, 2.5);
  rep.impossible_theta_one_step = theta;
  rep.impossible_monotone = true;
  rep.impossible_min_gap = std::abs(theta - kTarget);
  for (std::size_t i = 0; i < impossible_steps; ++i) {
    const double next = step(theta, 2.5);
    if (!(next > theta)) rep.impossible_monotone = false;
    theta = next;
    rep.impossible_min_gap = std::min(rep.impossible_min_gap, std::abs(theta - kTarget));
  }
  rep.impossible_steps = impossible_steps;
  return rep;
}

}  // namespace streampoison
