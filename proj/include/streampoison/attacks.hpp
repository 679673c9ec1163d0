// Semi-online poisoning attacks against a filtered OGD learner.
//
// Every attack computes the clean model theta~_0 by running the learner over
// the clean stream, generates poison examples that the defense accepts, and
// places them at the end of the stream (or the front, for ablations). The
// reported final model is always recomputed by running the real learner over
// the poisoned stream.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "streampoison/core.hpp"
#include "streampoison/defense.hpp"
#include "streampoison/learner.hpp"
#include "streampoison/numeric.hpp"

namespace streampoison {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class InsertionPosition { End, Front };

struct SemiOnlineAttackConfig {
  Model theta_star;
  std::size_t K = 0;
  double epsilon = 1e-3;
  double R = 1.0;    // norm cap of attack points
  double eta = 1.0;  // attacker's copy of the learning rate
  std::uint64_t seed = 0;
  InsertionPosition position = InsertionPosition::End;

  [[nodiscard]] double lambda() const { return theta_star.norm(); }

  void validate() const {
    if (theta_star.size() == 0) throw ArgumentError("attack target must have positive dimension");
    if (!(epsilon > 0.0)) throw ArgumentError("attack tolerance must be positive");
    if (!(R > 0.0)) throw ArgumentError("attack norm cap must be positive");
    if (!(eta > 0.0)) throw ArgumentError("attack learning rate must be positive");
  }
};

struct AttackTraceStep {
  std::size_t t = 0;
  std::optional<double> gamma_star;
  double gamma = 0.0;
  double c = 1.0;
  bool flipped = false;
  LabeledExample point;
  double dist_to_target = 0.0;  // ||theta~_{t+1} - theta*|| after this point
};

struct AttackOutcome {
  std::string attack;
  Stream poisoned_stream;
  std::size_t inserted_count = 0;
  Model clean_model;  // theta~_0
  Model final_model;
  bool succeeded = false;
  std::vector<AttackTraceStep> trace;
  double gamma0 = 0.0;
  std::string diagnostic;
};

// ---------------------------------------------------------------------------

/// Smallest gamma in (0, gamma_max] solving gamma / (1 + exp(a gamma)) = 1/eta.
inline std::optional<double> solve_gamma_star(double a, double eta, double gamma_max) {
  if (!(eta > 0.0) || !(gamma_max > 0.0)) throw ArgumentError("solve_gamma_star: eta and gamma_max must be positive");
  const double target = 1.0 / eta;
  auto h = [&](double g) { return g * sigmoid(-a * g) - target; };
  // g(gamma) increases up to its peak (at w/a for a > 0) and decreases after,
  // so the first crossing is bracketed by [0, min(gamma_max, peak)].
  double upper = gamma_max;
  if (a > 0.0) upper = std::min(upper, numeric::logistic_ratio_peak() / a);
  if (h(upper) < 0.0) return std::nullopt;
  return numeric::bisect(h, 0.0, upper, 1e-12);
}

namespace detail {

inline Stream place_poison(const Stream& clean, const std::vector<LabeledExample>& poison, InsertionPosition pos) {
  Stream out;
  if (pos == InsertionPosition::Front) {
    for (const auto& p : poison) out.append(p, true);
    for (std::size_t i = 0; i < clean.size(); ++i) out.append(clean[i], clean.is_poison(i));
  } else {
    out = clean;
    for (const auto& p : poison) out.append(p, true);
  }
  return out;
}

inline void finish(AttackOutcome& out, const LearnerConfig& config, const Stream& clean,
                   const std::vector<LabeledExample>& poison, const SemiOnlineAttackConfig& atk,
                   const DefenseSpec& defense) {
  out.poisoned_stream = place_poison(clean, poison, atk.position);
  out.inserted_count = poison.size();
  out.final_model = ogd_final(config, out.poisoned_stream, defense);
  out.succeeded = (out.final_model - atk.theta_star).norm() <= atk.epsilon;
}

inline double gamma0_for(const SemiOnlineAttackConfig& atk, double dist0) {
  return std::min(atk.R / dist0, 1.0 / atk.eta);
}

}  // namespace detail

/// One step of the simplistic attack from theta: the candidate
/// gamma_t (theta* - theta) with label +1, projected into the defense.
struct SimplisticStep {
  std::optional<double> gamma_star;
  double gamma = 0.0;
  std::optional<DirectionProjection> projection;
  LabeledExample point;
};

inline SimplisticStep simplistic_step(const Model& theta, const SemiOnlineAttackConfig& atk,
                                      const DefenseSpec& defense, double gamma0) {
  SimplisticStep step;
  const Vector diff = atk.theta_star - theta;
  step.gamma_star = solve_gamma_star(theta.dot(diff), atk.eta, gamma0);
  step.gamma = step.gamma_star ? std::min(*step.gamma_star, gamma0) : gamma0;
  const Vector x = step.gamma * diff;
  if (x.norm() == 0.0) return step;
  step.projection = project_direction(defense, x, Label::Positive, atk.R);
  if (step.projection) step.point = step.projection->apply(x, Label::Positive);
  return step;
}

inline AttackOutcome simplistic_attack(const LearnerConfig& config, const Stream& S, const SemiOnlineAttackConfig& atk,
                                       const DefenseSpec& defense) {
  config.validate();
  atk.validate();
  AttackOutcome out;
  out.attack = "simplistic";
  out.clean_model = ogd_final(config, S, defense);
  Model theta = out.clean_model;
  std::vector<LabeledExample> poison;
  const double dist0 = (theta - atk.theta_star).norm();
  out.gamma0 = dist0 > 0.0 ? detail::gamma0_for(atk, dist0) : 1.0 / atk.eta;
  double dist = dist0;
  for (std::size_t t = 0; t < atk.K && dist >= atk.epsilon; ++t) {
    SimplisticStep step = simplistic_step(theta, atk, defense, out.gamma0);
    if (!step.projection) {
      out.diagnostic = "no feasible scale for the attack direction at step " + std::to_string(t);
      break;
    }
    ogd_update(theta, step.point, atk.eta);
    dist = (theta - atk.theta_star).norm();
    out.trace.push_back({t, step.gamma_star, step.gamma, step.projection->c, step.projection->flipped, step.point, dist});
    poison.push_back(std::move(step.point));
  }
  detail::finish(out, config, S, poison, atk, defense);
  return out;
}

// ---------------------------------------------------------------------------
// Greedy: per step, approximately minimize ||theta_{t+1} - theta*|| over the
// feasible set by multi-start projected gradient descent for each label.

struct GreedyOptions {
  int random_starts = 3;
  int pgd_iters = 60;
};

namespace detail {

struct StepObjective {
  const Model& theta;
  const Model& target;
  double eta;
  Label y;

  [[nodiscard]] Model next(const Vector& x) const {
    Model t = theta;
    ogd_update(t, {x, y}, eta);
    return t;
  }

  [[nodiscard]] double value(const Vector& x) const { return (next(x) - target).squaredNorm(); }

  /// d/dx ||theta'(x) - theta*||^2 with theta' = theta + eta y s x,
  /// s = sigmoid(-y theta^T x).
  [[nodiscard]] Vector gradient(const Vector& x) const {
    const double yy = sign_of(y);
    const double s = sigmoid(-yy * theta.dot(x));
    const Vector r = next(x) - target;
    // (d theta'/dx)^T r = eta y (s r - y s (1 - s) theta (x^T r))
    return 2.0 * eta * yy * (s * r - yy * s * (1.0 - s) * x.dot(r) * theta);
  }
};

}  // namespace detail

inline AttackOutcome greedy_attack(const LearnerConfig& config, const Stream& S, const SemiOnlineAttackConfig& atk,
                                   const DefenseSpec& defense, GreedyOptions opts = {}) {
  config.validate();
  atk.validate();
  AttackOutcome out;
  out.attack = "greedy";
  out.clean_model = ogd_final(config, S, defense);
  Model theta = out.clean_model;
  std::mt19937_64 rng(atk.seed);
  std::vector<LabeledExample> poison;
  const double dist0 = (theta - atk.theta_star).norm();
  out.gamma0 = dist0 > 0.0 ? detail::gamma0_for(atk, dist0) : 1.0 / atk.eta;
  const Eigen::Index d = theta.size();
  const double radius = std::min(atk.R, norm_cap(defense));

  double dist = dist0;
  for (std::size_t t = 0; t < atk.K && dist >= atk.epsilon; ++t) {
    std::optional<LabeledExample> best;
    double best_val = std::numeric_limits<double>::infinity();
    auto consider = [&](const LabeledExample& ex, const detail::StepObjective& obj) {
      const double v = obj.value(ex.x);
      if (v < best_val) {
        best_val = v;
        best = ex;
      }
    };

    SimplisticStep simp = simplistic_step(theta, atk, defense, out.gamma0);
    for (Label y : {Label::Positive, Label::Negative}) {
      const detail::StepObjective obj{theta, atk.theta_star, atk.eta, y};
      std::vector<Vector> starts;
      if (simp.projection && simp.point.y == y) starts.push_back(simp.point.x);
      auto add_projected = [&](const Vector& v) {
        if (auto p = nearest_feasible(defense, v, y)) {
          if (p->norm() <= atk.R) starts.push_back(*p);
        }
      };
      const Vector dir = sign_of(y) * (atk.theta_star - theta);
      if (dir.norm() > 0.0) add_projected(dir * (radius / dir.norm()));
      if (const auto* c = std::get_if<CentroidDefense>(&defense)) add_projected(c->stats.centroid(y));
      if (const auto* c = std::get_if<SlabDefense>(&defense)) add_projected(c->stats.centroid(y));
      for (int i = 0; i < opts.random_starts; ++i) add_projected(numeric::uniform_in_ball(Vector::Zero(d), radius, rng));

      for (Vector x : starts) {
        double fx = obj.value(x);
        double step = radius;
        for (int it = 0; it < opts.pgd_iters && step > 1e-9 * radius; ++it) {
          const Vector g = obj.gradient(x);
          const double gn = g.norm();
          if (gn == 0.0) break;
          bool improved = false;
          while (step > 1e-9 * radius) {
            auto cand = nearest_feasible(defense, Vector(x - (step / gn) * g), y);
            if (cand && cand->norm() <= atk.R) {
              const double fc = obj.value(*cand);
              if (fc < fx) {
                x = *cand;
                fx = fc;
                improved = true;
                step *= 1.5;
                break;
              }
            }
            step *= 0.5;
          }
          if (!improved) break;
        }
        consider({x, y}, obj);
      }
    }
    if (!best || best_val >= dist * dist) {
      out.diagnostic = "no feasible example moves the model closer to the target at step " + std::to_string(t);
      break;
    }
    ogd_update(theta, *best, atk.eta);
    dist = (theta - atk.theta_star).norm();
    out.trace.push_back({t, std::nullopt, 0.0, 1.0, false, *best, dist});
    poison.push_back(*best);
  }
  detail::finish(out, config, S, poison, atk, defense);
  return out;
}

// ---------------------------------------------------------------------------
// Semi-Online-WK: jointly choose K one-sided points to maximize the clean
// validation loss of the model obtained after appending them.

/// Total logistic loss of the model reached from theta_start after OGD steps
/// on the one-sided points (z_i, +1), evaluated on a validation stream.
inline double wk_objective(const Model& theta_start, const std::vector<Vector>& Z, double eta, const Stream& validation) {
  Model theta = theta_start;
  for (const auto& z : Z) ogd_update(theta, {z, Label::Positive}, eta);
  double v = 0.0;
  for (const auto& ex : validation) v += logistic_loss(theta, ex);
  return v;
}

/// Gradient of wk_objective with respect to every z_i, by reverse
/// accumulation through the unrolled updates.
inline std::vector<Vector> wk_gradient(const Model& theta_start, const std::vector<Vector>& Z, double eta,
                                       const Stream& validation) {
  const std::size_t K = Z.size();
  std::vector<Model> thetas;
  thetas.reserve(K + 1);
  thetas.push_back(theta_start);
  for (const auto& z : Z) {
    Model next = thetas.back();
    ogd_update(next, {z, Label::Positive}, eta);
    thetas.push_back(std::move(next));
  }
  Vector adj = Vector::Zero(theta_start.size());
  for (const auto& ex : validation) adj += logistic_grad(thetas.back(), ex);

  std::vector<Vector> grads(K);
  for (std::size_t k = K; k-- > 0;) {
    const Model& th = thetas[k];
    const Vector& z = Z[k];
    const double s = sigmoid(-th.dot(z));
    const double w = s * (1.0 - s);
    const double z_adj = z.dot(adj);
    // theta' = theta + eta s z:
    //   d theta'/d z     = eta (s I - s(1-s) z theta^T)
    //   d theta'/d theta = I - eta s(1-s) z z^T
    grads[k] = eta * (s * adj - w * z_adj * th);
    adj -= (eta * w * z_adj) * z;
  }
  return grads;
}

struct WkOptions {
  int iters = 50;
};

inline AttackOutcome semi_online_wk_attack(const LearnerConfig& config, const Stream& S,
                                           const SemiOnlineAttackConfig& atk, const DefenseSpec& defense,
                                           const Stream& validation, WkOptions opts = {}) {
  config.validate();
  atk.validate();
  if (validation.empty()) throw ArgumentError("semi_online_wk_attack: validation set is empty");
  AttackOutcome out;
  out.attack = "semi-online-wk";
  out.clean_model = ogd_final(config, S, defense);
  const Model& theta0 = out.clean_model;
  const double dist0 = (theta0 - atk.theta_star).norm();
  out.gamma0 = dist0 > 0.0 ? detail::gamma0_for(atk, dist0) : 1.0 / atk.eta;
  if (atk.K == 0) {
    detail::finish(out, config, S, {}, atk, defense);
    return out;
  }

  auto project = [&](const Vector& z) -> std::optional<OneSidedPoint> {
    auto p = nearest_one_sided(defense, z);
    if (p && p->z.norm() > atk.R) {
      p = nearest_one_sided(defense, Vector(z * (atk.R / z.norm())));
      if (p && p->z.norm() > atk.R * (1.0 + 1e-12)) p.reset();
    }
    return p;
  };

  // Initialize from the simplistic attack's sequence, padded with its first
  // direction when it stops early.
  SemiOnlineAttackConfig init_cfg = atk;
  init_cfg.epsilon = std::numeric_limits<double>::min();
  std::vector<OneSidedPoint> pts;
  const AttackOutcome simp = simplistic_attack(config, S, init_cfg, defense);
  for (const auto& step : simp.trace) {
    pts.push_back({step.point.y == Label::Positive ? step.point.x : Vector(-step.point.x), step.point});
  }
  if (pts.size() < atk.K) {
    const Vector u = atk.theta_star - theta0;
    std::optional<OneSidedPoint> fill;
    if (u.norm() > 0.0) fill = project(Vector(u * (out.gamma0)));
    if (!fill && !pts.empty()) fill = pts.back();
    if (!fill) throw AttackError("semi_online_wk_attack: no feasible initialization");
    while (pts.size() < atk.K) pts.push_back(*fill);
  }

  auto zs = [](const std::vector<OneSidedPoint>& p) {
    std::vector<Vector> z;
    z.reserve(p.size());
    for (const auto& q : p) z.push_back(q.z);
    return z;
  };

  double value = wk_objective(theta0, zs(pts), atk.eta, validation);
  double step = atk.R;
  for (int it = 0; it < opts.iters; ++it) {
    const auto grads = wk_gradient(theta0, zs(pts), atk.eta, validation);
    double gn2 = 0.0;
    for (const auto& g : grads) gn2 += g.squaredNorm();
    const double gn = std::sqrt(gn2);
    if (gn == 0.0) break;
    bool improved = false;
    while (step > 1e-8 * atk.R) {
      std::vector<OneSidedPoint> cand;
      cand.reserve(pts.size());
      bool ok = true;
      for (std::size_t k = 0; k < pts.size() && ok; ++k) {
        auto p = project(Vector(pts[k].z + (step / gn) * grads[k]));
        if (!p) {
          ok = false;
          break;
        }
        cand.push_back(std::move(*p));
      }
      if (ok) {
        const double v = wk_objective(theta0, zs(cand), atk.eta, validation);
        if (v > value) {
          pts = std::move(cand);
          value = v;
          improved = true;
          step *= 1.5;
          break;
        }
      }
      step *= 0.5;
    }
    if (!improved) break;
  }

  std::vector<LabeledExample> poison;
  poison.reserve(pts.size());
  Model theta = theta0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    poison.push_back(pts[k].example);
    ogd_update(theta, pts[k].example, atk.eta);
    out.trace.push_back({k, std::nullopt, 0.0, 1.0, pts[k].example.y == Label::Negative, pts[k].example,
                         (theta - atk.theta_star).norm()});
  }
  detail::finish(out, config, S, poison, atk, defense);
  return out;
}

// ---------------------------------------------------------------------------
// Concentrated: all points of a label sit at one location, the feasible point
// of largest norm along y (theta* - theta~_0).

inline double cosine_or(const Vector& a, const Vector& b, double fallback) {
  if (a.norm() == 0.0 || b.norm() == 0.0) return fallback;
  return cosine_similarity(a, b);
}

namespace detail {

inline std::optional<Vector> farthest_on_ray(const DefenseSpec& defense, const Vector& dir, Label y, double R) {
  const Vector v = dir / dir.norm();
  if (std::holds_alternative<LabelingOracleDefense>(defense)) {
    constexpr int kGrid = 10000;
    for (int i = kGrid; i >= 1; --i) {
      const double c = R * static_cast<double>(i) / kGrid;
      if (contains(defense, Vector(c * v), y)) return Vector(c * v);
    }
    return std::nullopt;
  }
  auto iv = ray_interval(defense, v, y, R);
  if (!iv || !(iv->hi > 0.0)) return std::nullopt;
  if (auto c = verified_scale(defense, v, y, *iv, iv->hi)) return Vector(*c * v);
  return std::nullopt;
}

}  // namespace detail

inline AttackOutcome concentrated_attack(const LearnerConfig& config, const Stream& S,
                                         const SemiOnlineAttackConfig& atk, const DefenseSpec& defense,
                                         int random_orders = 100) {
  config.validate();
  atk.validate();
  if (random_orders < 1) throw ArgumentError("concentrated_attack: random_orders must be >= 1");
  AttackOutcome out;
  out.attack = "concentrated";
  out.clean_model = ogd_final(config, S, defense);
  const Model& theta0 = out.clean_model;
  const Vector u = atk.theta_star - theta0;
  const double dist0 = u.norm();
  out.gamma0 = dist0 > 0.0 ? detail::gamma0_for(atk, dist0) : 1.0 / atk.eta;
  if (atk.K == 0 || dist0 == 0.0) {
    detail::finish(out, config, S, {}, atk, defense);
    return out;
  }

  const auto loc_plus = detail::farthest_on_ray(defense, u, Label::Positive, atk.R);
  const auto loc_minus = detail::farthest_on_ray(defense, Vector(-u), Label::Negative, atk.R);

  std::mt19937_64 rng(atk.seed);
  std::vector<LabeledExample> best_poison;
  double best_cos = -std::numeric_limits<double>::infinity();
  std::string best_desc;

  const std::size_t K = atk.K;
  const std::pair<std::size_t, std::size_t> splits[] = {{K, 0}, {K / 2, K - K / 2}, {0, K}};
  const char* split_names[] = {"all+1", "half-half", "all-1"};
  for (int si = 0; si < 3; ++si) {
    std::size_t n_plus = loc_plus ? splits[si].first : 0;
    std::size_t n_minus = loc_minus ? splits[si].second : 0;
    if (n_plus + n_minus == 0) continue;
    std::vector<LabeledExample> pos(n_plus, LabeledExample{loc_plus.value_or(Vector()), Label::Positive});
    std::vector<LabeledExample> neg(n_minus, LabeledExample{loc_minus.value_or(Vector()), Label::Negative});

    auto evaluate = [&](std::vector<LabeledExample> order, const std::string& desc) {
      Model theta = theta0;
      Stream tail;
      for (const auto& p : order) tail.append(p, true);
      ogd_continue(theta, config.eta, tail, defense);
      const double c = cosine_or(theta, atk.theta_star, 0.0);
      if (c > best_cos) {
        best_cos = c;
        best_poison = std::move(order);
        best_desc = desc;
      }
    };

    std::vector<LabeledExample> pf = pos;
    pf.insert(pf.end(), neg.begin(), neg.end());
    evaluate(pf, std::string(split_names[si]) + "/positive-first");
    if (n_plus == 0 || n_minus == 0) continue;
    std::vector<LabeledExample> nf = neg;
    nf.insert(nf.end(), pos.begin(), pos.end());
    evaluate(nf, std::string(split_names[si]) + "/negative-first");
    for (int r = 0; r < random_orders; ++r) {
      std::vector<LabeledExample> shuffled = pf;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      evaluate(std::move(shuffled), std::string(split_names[si]) + "/random-" + std::to_string(r));
    }
  }
  if (best_poison.empty()) out.diagnostic = "no feasible concentrated location";
  else out.diagnostic = "best variant " + best_desc;

  Model theta = theta0;
  for (std::size_t k = 0; k < best_poison.size(); ++k) {
    ogd_update(theta, best_poison[k], atk.eta);
    out.trace.push_back({k, std::nullopt, 0.0, 1.0, false, best_poison[k], (theta - atk.theta_star).norm()});
  }
  detail::finish(out, config, S, best_poison, atk, defense);
  return out;
}

// ---------------------------------------------------------------------------

enum class AttackKind { Simplistic, Greedy, SemiOnlineWK, Concentrated };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::Simplistic: return "simplistic";
    case AttackKind::Greedy: return "greedy";
    case AttackKind::SemiOnlineWK: return "semi-online-wk";
    case AttackKind::Concentrated: return "concentrated";
  }
  return "unknown";
}

inline AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "simplistic") return AttackKind::Simplistic;
  if (s == "greedy") return AttackKind::Greedy;
  if (s == "semi-online-wk" || s == "wk") return AttackKind::SemiOnlineWK;
  if (s == "concentrated") return AttackKind::Concentrated;
  throw ArgumentError("unknown attack '" + s + "'");
}

struct AttackSuiteOptions {
  GreedyOptions greedy;
  WkOptions wk;
  int concentrated_orders = 100;
};

inline AttackOutcome run_attack(AttackKind kind, const LearnerConfig& config, const Stream& S,
                                const SemiOnlineAttackConfig& atk, const DefenseSpec& defense,
                                const Stream& validation, const AttackSuiteOptions& opts = {}) {
  switch (kind) {
    case AttackKind::Simplistic: return simplistic_attack(config, S, atk, defense);
    case AttackKind::Greedy: return greedy_attack(config, S, atk, defense, opts.greedy);
    case AttackKind::SemiOnlineWK: return semi_online_wk_attack(config, S, atk, defense, validation, opts.wk);
    case AttackKind::Concentrated: return concentrated_attack(config, S, atk, defense, opts.concentrated_orders);
  }
  throw ArgumentError("unknown attack kind");
}

}  // namespace streampoison
