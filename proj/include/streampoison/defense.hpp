// Feasible-set defenses: membership, scores, calibration and projections.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "streampoison/core.hpp"

namespace streampoison {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Class centroids computed on a clean initialization set.
struct CentroidStats {
  Vector mu_plus;
  Vector mu_minus;
  Vector beta;  // mu_plus - mu_minus

  static CentroidStats from_centroids(Vector plus, Vector minus) {
    detail::check_dims(plus.size(), minus.size(), "CentroidStats");
    CentroidStats s{std::move(plus), std::move(minus), {}};
    s.beta = s.mu_plus - s.mu_minus;
    return s;
  }

  [[nodiscard]] const Vector& centroid(Label y) const {
    return y == Label::Positive ? mu_plus : mu_minus;
  }
};

struct L2BallDefense {
  double R = 1.0;
};

/// Norm cap plus an externally supplied labeling function g: the label of an
/// accepted example must equal g(x).
struct LabelingOracleDefense {
  double R = 1.0;
  std::function<Label(const Vector&)> g;
};

struct CentroidDefense {
  double R = 1.0;
  double tau = 0.0;
  CentroidStats stats;
};

struct SlabDefense {
  double R = 1.0;
  double tau = 0.0;
  CentroidStats stats;
};

using DefenseSpec = std::variant<L2BallDefense, LabelingOracleDefense, CentroidDefense, SlabDefense>;

enum class DefenseKind { L2Ball, LabelingOracle, Centroid, Slab };

inline DefenseKind kind_of(const DefenseSpec& d) {
  return static_cast<DefenseKind>(d.index());
}

inline std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::L2Ball: return "l2";
    case DefenseKind::LabelingOracle: return "oracle";
    case DefenseKind::Centroid: return "centroid";
    case DefenseKind::Slab: return "slab";
  }
  return "unknown";
}

inline DefenseKind defense_kind_from_string(const std::string& s) {
  if (s == "l2" || s == "l2ball" || s == "l2-norm") return DefenseKind::L2Ball;
  if (s == "oracle" || s == "labeling-oracle") return DefenseKind::LabelingOracle;
  if (s == "centroid") return DefenseKind::Centroid;
  if (s == "slab") return DefenseKind::Slab;
  throw ArgumentError("unknown defense kind '" + s + "'");
}

inline double norm_cap(const DefenseSpec& d) {
  return std::visit([](const auto& v) { return v.R; }, d);
}

inline void validate(const DefenseSpec& d) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if (!(v.R > 0.0)) throw ArgumentError("defense norm cap R must be positive");
        if constexpr (std::is_same_v<T, CentroidDefense> || std::is_same_v<T, SlabDefense>) {
          if (!(v.tau >= 0.0)) throw ArgumentError("defense tau must be nonnegative");
        }
        if constexpr (std::is_same_v<T, LabelingOracleDefense>) {
          if (!v.g) throw ArgumentError("labeling oracle requires a labeling function");
        }
      },
      d);
}

/// g(x) = +1 when w^T x + b >= 0, else -1.
inline std::function<Label(const Vector&)> linear_threshold_oracle(Vector w, double b = 0.0) {
  return [w = std::move(w), b](const Vector& x) {
    return w.dot(x) + b >= 0.0 ? Label::Positive : Label::Negative;
  };
}

// ---------------------------------------------------------------------------
// Membership and scores. All inequalities are non-strict.

namespace detail {

inline double centroid_score(const CentroidStats& s, const Vector& x, Label y) {
  return (x - s.centroid(y)).norm();
}

inline double slab_score(const CentroidStats& s, const Vector& x, Label y) {
  return std::abs(s.beta.dot(x - s.centroid(y)));
}

}  // namespace detail

inline bool contains(const DefenseSpec& defense, const Vector& x, Label y) {
  return std::visit(
      [&](const auto& d) -> bool {
        using T = std::decay_t<decltype(d)>;
        if (x.norm() > d.R) return false;
        if constexpr (std::is_same_v<T, L2BallDefense>) {
          return true;
        } else if constexpr (std::is_same_v<T, LabelingOracleDefense>) {
          return d.g(x) == y;
        } else if constexpr (std::is_same_v<T, CentroidDefense>) {
          detail::check_dims(x.size(), d.stats.mu_plus.size(), "contains");
          return detail::centroid_score(d.stats, x, y) <= d.tau;
        } else {
          detail::check_dims(x.size(), d.stats.mu_plus.size(), "contains");
          return detail::slab_score(d.stats, x, y) <= d.tau;
        }
      },
      defense);
}

inline bool contains(const DefenseSpec& defense, const LabeledExample& ex) {
  return contains(defense, ex.x, ex.y);
}

/// Membership in the one-sided set {(y x, +1) : (x, y) in F}.
inline bool one_sided_contains(const DefenseSpec& defense, const Vector& z) {
  return contains(defense, z, Label::Positive) || contains(defense, Vector(-z), Label::Negative);
}

inline CentroidStats fit_centroids(const Stream& init_set) {
  if (init_set.empty()) throw CalibrationError("fit_centroids: empty initialization set");
  const Eigen::Index d = init_set[0].x.size();
  Vector sum_plus = Vector::Zero(d);
  Vector sum_minus = Vector::Zero(d);
  std::size_t n_plus = 0;
  std::size_t n_minus = 0;
  for (const auto& ex : init_set) {
    detail::check_dims(ex.x.size(), d, "fit_centroids");
    if (ex.y == Label::Positive) {
      sum_plus += ex.x;
      ++n_plus;
    } else {
      sum_minus += ex.x;
      ++n_minus;
    }
  }
  if (n_plus == 0 || n_minus == 0) {
    throw CalibrationError("fit_centroids: initialization set lacks one of the classes");
  }
  return CentroidStats::from_centroids(sum_plus / static_cast<double>(n_plus),
                                       sum_minus / static_cast<double>(n_minus));
}

/// Scalar score of a score-based defense kind. For the L2 ball the score is ||x||.
inline double score_for_kind(DefenseKind kind, const CentroidStats* stats, const LabeledExample& ex) {
  switch (kind) {
    case DefenseKind::L2Ball: return ex.x.norm();
    case DefenseKind::Centroid:
      if (stats == nullptr) throw ArgumentError("centroid score needs centroid stats");
      return detail::centroid_score(*stats, ex.x, ex.y);
    case DefenseKind::Slab:
      if (stats == nullptr) throw ArgumentError("slab score needs centroid stats");
      return detail::slab_score(*stats, ex.x, ex.y);
    case DefenseKind::LabelingOracle: break;
  }
  throw UnsupportedVariantError("labeling oracle defense has no scalar score");
}

inline double defense_score(const DefenseSpec& defense, const LabeledExample& ex) {
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, L2BallDefense>) {
          return ex.x.norm();
        } else if constexpr (std::is_same_v<T, LabelingOracleDefense>) {
          throw UnsupportedVariantError("labeling oracle defense has no scalar score");
        } else if constexpr (std::is_same_v<T, CentroidDefense>) {
          return detail::centroid_score(d.stats, ex.x, ex.y);
        } else {
          return detail::slab_score(d.stats, ex.x, ex.y);
        }
      },
      defense);
}

struct CalibrationMode {
  enum class Kind { Percentile, Retention };
  Kind kind = Kind::Percentile;
  double value = 100.0;  // p in (0, 100] or q in (0, 1]

  static CalibrationMode percentile(double p) { return {Kind::Percentile, p}; }
  static CalibrationMode retention(double q) { return {Kind::Retention, q}; }
};

/// Nearest-rank threshold: the smallest score s such that at least the
/// requested fraction of scores are <= s.
inline double calibrate_tau(std::vector<double> scores, CalibrationMode mode) {
  if (scores.empty()) throw CalibrationError("calibrate_tau: no scores to calibrate from");
  double fraction = 0.0;
  if (mode.kind == CalibrationMode::Kind::Percentile) {
    if (!(mode.value > 0.0 && mode.value <= 100.0)) throw ArgumentError("percentile must be in (0, 100]");
    fraction = mode.value / 100.0;
  } else {
    if (!(mode.value > 0.0 && mode.value <= 1.0)) throw ArgumentError("retention must be in (0, 1]");
    fraction = mode.value;
  }
  std::sort(scores.begin(), scores.end());
  const double n = static_cast<double>(scores.size());
  // The tolerance keeps q*n from rounding up past an exact integer (0.7*10 = 7.000000000000001).
  const double rank = std::ceil(fraction * n - 1e-9 * std::max(1.0, fraction * n));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, n)) - 1;
  return scores[idx];
}

inline double calibrate_tau(const Stream& source, DefenseKind kind, const CentroidStats* stats,
                            CalibrationMode mode) {
  if (source.empty()) throw CalibrationError("calibrate_tau: empty stream");
  std::vector<double> scores;
  scores.reserve(source.size());
  for (const auto& ex : source) scores.push_back(score_for_kind(kind, stats, ex));
  return calibrate_tau(std::move(scores), mode);
}

/// Fraction of a stream admitted by a defense.
inline double retention_fraction(const DefenseSpec& defense, const Stream& s) {
  if (s.empty()) return 0.0;
  std::size_t kept = 0;
  for (const auto& ex : s) kept += contains(defense, ex) ? 1 : 0;
  return static_cast<double>(kept) / static_cast<double>(s.size());
}

// ---------------------------------------------------------------------------
// Rays and segments.

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] double clamp(double v) const { return std::clamp(v, lo, hi); }
};

namespace detail {

inline std::optional<Interval> intersect(std::optional<Interval> a, Interval b) {
  if (!a) return std::nullopt;
  Interval r{std::max(a->lo, b.lo), std::min(a->hi, b.hi)};
  if (r.lo > r.hi) return std::nullopt;
  return r;
}

/// {c in R : a c^2 + b c + k <= 0} for a > 0.
inline std::optional<Interval> quadratic_sublevel(double a, double b, double k) {
  const double disc = b * b - 4.0 * a * k;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // Numerically stable root pair.
  const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
  double r1 = q / a;
  double r2 = q != 0.0 ? k / q : r1;
  if (r1 > r2) std::swap(r1, r2);
  return Interval{r1, r2};
}

}  // namespace detail

/// The set of c in [0, c_max] with (c v, label) in the defense, as a closed
/// interval. Not defined for the labeling oracle, whose set along a ray need
/// not be convex.
inline std::optional<Interval> ray_interval(const DefenseSpec& defense, const Vector& v, Label label,
                                            double c_max) {
  const double vn = v.norm();
  if (vn == 0.0 || !(c_max > 0.0)) return std::nullopt;
  return std::visit(
      [&](const auto& d) -> std::optional<Interval> {
        using T = std::decay_t<decltype(d)>;
        const Interval base{0.0, std::min(c_max, d.R / vn)};
        if constexpr (std::is_same_v<T, L2BallDefense>) {
          return base;
        } else if constexpr (std::is_same_v<T, LabelingOracleDefense>) {
          throw UnsupportedVariantError("ray_interval: labeling oracle has no closed form");
        } else if constexpr (std::is_same_v<T, CentroidDefense>) {
          const Vector& mu = d.stats.centroid(label);
          auto q = detail::quadratic_sublevel(vn * vn, -2.0 * v.dot(mu), mu.squaredNorm() - d.tau * d.tau);
          return detail::intersect(q, base);
        } else {
          const Vector& mu = d.stats.centroid(label);
          const double p = d.stats.beta.dot(v);
          const double m = d.stats.beta.dot(mu);
          if (p == 0.0) {
            if (std::abs(m) <= d.tau) return base;
            return std::nullopt;
          }
          double a = (m - d.tau) / p;
          double b = (m + d.tau) / p;
          if (a > b) std::swap(a, b);
          return detail::intersect(Interval{a, b}, base);
        }
      },
      defense);
}

struct DirectionProjection {
  double c = 0.0;
  bool flipped = false;

  [[nodiscard]] LabeledExample apply(const Vector& x, Label y) const {
    if (flipped) return {Vector(-c * x), flip(y)};
    return {Vector(c * x), y};
  }
};

namespace detail {

/// Nudges c toward the interior of [iv.lo, iv.hi] until the closed-form
/// answer also passes the exact membership test.
inline std::optional<double> verified_scale(const DefenseSpec& defense, const Vector& v, Label label,
                                            const Interval& iv, double c) {
  const double mid = 0.5 * (iv.lo + iv.hi);
  for (double step : {0.0, 1e-12, 1e-9, 1e-6}) {
    const double cc = c + (mid - c) * step;
    if (cc > 0.0 && contains(defense, Vector(cc * v), label)) return cc;
  }
  return std::nullopt;
}

inline std::optional<DirectionProjection> project_by_grid(const DefenseSpec& defense, const Vector& x, Label y,
                                                          double c_max) {
  auto feasible = [&](double c, bool& flip_out) {
    if (contains(defense, Vector(c * x), y)) {
      flip_out = false;
      return true;
    }
    if (contains(defense, Vector(-c * x), flip(y))) {
      flip_out = true;
      return true;
    }
    return false;
  };
  bool fl = false;
  const double first = std::min(1.0, c_max);
  if (first > 0.0 && feasible(first, fl)) return DirectionProjection{first, fl};
  constexpr int kGrid = 10000;
  std::optional<DirectionProjection> best;
  for (int i = 1; i <= kGrid; ++i) {
    const double c = c_max * static_cast<double>(i) / kGrid;
    if (feasible(c, fl) && (!best || std::abs(c - 1.0) < std::abs(best->c - 1.0))) best = DirectionProjection{c, fl};
  }
  return best;
}

}  // namespace detail

/// Finds the c in [0, R_cap/||x||] closest to 1 such that (c x, y) or
/// (-c x, -y) is feasible. Returns nullopt when only c = 0 qualifies.
inline std::optional<DirectionProjection> project_direction(const DefenseSpec& defense, const Vector& x, Label y,
                                                            double R_cap) {
  const double xn = x.norm();
  if (xn == 0.0) throw ArgumentError("project_direction: x must be nonzero");
  const double c_max = R_cap / xn;
  if (std::holds_alternative<LabelingOracleDefense>(defense)) return detail::project_by_grid(defense, x, y, c_max);

  struct Candidate {
    double c;
    bool flipped;
    Interval iv;
  };
  std::vector<Candidate> cands;
  if (auto iv = ray_interval(defense, x, y, c_max)) cands.push_back({iv->clamp(1.0), false, *iv});
  if (auto iv = ray_interval(defense, Vector(-x), flip(y), c_max)) cands.push_back({iv->clamp(1.0), true, *iv});
  // Closest to 1 first; the unflipped form wins ties.
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::abs(a.c - 1.0) < std::abs(b.c - 1.0);
  });
  for (const auto& cand : cands) {
    if (!(cand.c > 0.0)) continue;
    const Vector v = cand.flipped ? Vector(-x) : x;
    const Label l = cand.flipped ? flip(y) : y;
    if (auto c = detail::verified_scale(defense, v, l, cand.iv, cand.c)) return DirectionProjection{*c, cand.flipped};
  }
  return std::nullopt;
}

/// Largest r such that the segment {c u/||u|| : 0 < c <= r} lies in the ball
/// of radius tau around mu; nullopt when no positive r exists.
inline std::optional<double> centroid_segment_radius(const Vector& mu, double tau, const Vector& u) {
  const double un = u.norm();
  if (un == 0.0) throw ArgumentError("centroid_segment_radius: u must be nonzero");
  detail::check_dims(mu.size(), u.size(), "centroid_segment_radius");
  const double mn = mu.norm();
  const double proj = mn == 0.0 ? 0.0 : mu.dot(u) / un;  // ||mu|| cos(alpha)
  const double disc = proj * proj - mn * mn + tau * tau;
  if (disc < 0.0) return std::nullopt;
  const double r = proj + std::sqrt(disc);
  if (!(r > 0.0)) return std::nullopt;
  return r;
}

// ---------------------------------------------------------------------------
// Euclidean projection onto a labelled feasible set (used by the optimizing
// attacks). When neither single-constraint projection is feasible the answer
// lies on both boundaries, which intersect in a sphere of dimension d - 2.

namespace detail {

inline Vector project_ball(const Vector& x, const Vector& center, double radius) {
  const Vector diff = x - center;
  const double n = diff.norm();
  if (n <= radius) return x;
  return center + diff * (radius / n);
}

/// Unit vector orthogonal to unit e, aligned with x where possible.
inline std::optional<Vector> orthogonal_direction(const Vector& x, const Vector& e) {
  Vector perp = x - x.dot(e) * e;
  if (perp.norm() > 1e-300) return Vector(perp.normalized());
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    Vector basis = Vector::Zero(e.size());
    basis[i] = 1.0;
    perp = basis - basis.dot(e) * e;
    if (perp.norm() > 1e-8) return Vector(perp.normalized());
  }
  return std::nullopt;
}

/// Point nearest x on {v : e^T v = s, ||v|| = R}, with e a unit vector.
inline std::optional<Vector> nearest_on_circle(const Vector& x, const Vector& e, double s, double R) {
  const double rho2 = R * R - s * s;
  if (rho2 < 0.0) return std::nullopt;
  const Vector base = s * e;
  if (rho2 == 0.0) return base;
  const auto dir = orthogonal_direction(x, e);
  if (!dir) return std::nullopt;
  return Vector(base + std::sqrt(rho2) * *dir);
}

}  // namespace detail

inline std::optional<Vector> nearest_feasible(const DefenseSpec& defense, const Vector& x, Label y) {
  constexpr double kShrink = 1.0 - 1e-10;
  return std::visit(
      [&](const auto& d) -> std::optional<Vector> {
        using T = std::decay_t<decltype(d)>;
        const Vector origin = Vector::Zero(x.size());
        const double R = d.R * kShrink;
        const Vector in_ball = detail::project_ball(x, origin, R);
        if constexpr (std::is_same_v<T, L2BallDefense> || std::is_same_v<T, LabelingOracleDefense>) {
          if (contains(defense, in_ball, y)) return in_ball;
          return std::nullopt;
        } else {
          detail::check_dims(x.size(), d.stats.mu_plus.size(), "nearest_feasible");
          const Vector& mu = d.stats.centroid(y);
          const double tau = d.tau * kShrink;
          std::vector<Vector> cands;
          if constexpr (std::is_same_v<T, CentroidDefense>) {
            cands.push_back(detail::project_ball(x, mu, tau));
            cands.push_back(in_ball);
            const double D = mu.norm();
            if (D > 0.0) {
              const Vector e = mu / D;
              const double a = (R * R - tau * tau + D * D) / (2.0 * D);
              if (auto p = detail::nearest_on_circle(x, e, a, R)) cands.push_back(*p);
            }
          } else {
            const double bn = d.stats.beta.norm();
            if (bn == 0.0) {
              cands.push_back(in_ball);
            } else {
              const Vector e = d.stats.beta / bn;
              const double m = e.dot(mu);
              const double w = tau / bn;
              const double s = e.dot(x);
              cands.push_back(Vector(x + (std::clamp(s, m - w, m + w) - s) * e));
              cands.push_back(in_ball);
              for (double t : {m - w, m + w}) {
                if (auto p = detail::nearest_on_circle(x, e, t, R)) cands.push_back(*p);
              }
            }
          }
          std::optional<Vector> best;
          double best_dist = std::numeric_limits<double>::infinity();
          for (const auto& c : cands) {
            const double dist = (c - x).norm();
            if (dist < best_dist && contains(defense, c, y)) {
              best = c;
              best_dist = dist;
            }
          }
          return best;
        }
      },
      defense);
}

/// Nearest point of the one-sided set F' to z, returned together with the
/// concrete feasible example it stands for.
struct OneSidedPoint {
  Vector z;
  LabeledExample example;
};

inline std::optional<OneSidedPoint> nearest_one_sided(const DefenseSpec& defense, const Vector& z) {
  std::optional<OneSidedPoint> best;
  double best_dist = std::numeric_limits<double>::infinity();
  if (auto p = nearest_feasible(defense, z, Label::Positive)) {
    best_dist = (*p - z).norm();
    best = OneSidedPoint{*p, {*p, Label::Positive}};
  }
  if (auto p = nearest_feasible(defense, Vector(-z), Label::Negative)) {
    const Vector zz = -*p;
    if ((zz - z).norm() < best_dist) best = OneSidedPoint{zz, {*p, Label::Negative}};
  }
  return best;
}

}  // namespace streampoison
