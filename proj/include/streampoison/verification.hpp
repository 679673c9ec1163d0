// Executable checks of the sign-task and signed-basis fully-online bounds and the
// simplistic-attack rate bound.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "streampoison/attacks.hpp"
#include "streampoison/fully_online.hpp"
#include "streampoison/regime.hpp"
#include "streampoison/tasks.hpp"

namespace streampoison {

// ---------------------------------------------------------------------------
// One-dimensional sign task: clean mistakes never exceed |I| + 1.

struct SignTaskTrial {
  std::string adversary;
  std::size_t poison_count = 0;
  std::size_t clean_mistakes = 0;
  bool passed = false;
};

struct SignTaskReport {
  std::size_t T = 0;
  std::vector<SignTaskTrial> trials;
  std::size_t max_mistakes = 0;

  [[nodiscard]] bool all_passed() const {
    for (const auto& t : trials) {
      if (!t.passed) return false;
    }
    return !trials.empty();
  }
};

struct SignTaskOptions {
  std::size_t T = 10000;  // total slots, clean plus poison
  double budget_fraction = 0.1;
  std::size_t random_trials = 1000;
  std::uint64_t seed = 0;
};

inline SignTaskTrial sign_task_trial(const std::string& name, const std::set<std::size_t>& positions, std::size_t T,
                                std::uint64_t seed) {
  const LearnerConfig config{1.0, Model::Zero(1)};
  const DefenseSpec defense = L2BallDefense{1.0};
  std::mt19937_64 rng(seed);
  const CleanSource clean = [&rng](std::size_t) { return draw_sign_example(rng); };
  Vector px(1);
  px[0] = -1.0;
  const auto res = fully_online_drive(config, clean, positions, constant_poison({px, Label::Positive}), defense, T,
                                      TrajectoryStorage::FinalOnly);
  SignTaskTrial trial;
  trial.adversary = name;
  trial.poison_count = res.stream.poison_count();
  trial.clean_mistakes = res.clean_mistakes;
  trial.passed = res.clean_mistakes <= positions.size() + 1;
  return trial;
}

/// The tight adversary puts one poison right after each clean point from the
/// start; the others draw I uniformly.
inline SignTaskReport sign_task_suite(const SignTaskOptions& opts = {}) {
  SignTaskReport rep;
  rep.T = opts.T;
  const auto n = static_cast<std::size_t>(std::llround(opts.budget_fraction * static_cast<double>(opts.T)));
  std::set<std::size_t> tight;
  for (std::size_t i = 0; i < n; ++i) tight.insert(2 * i + 1);
  rep.trials.push_back(sign_task_trial("tight", tight, opts.T, opts.seed));

  std::mt19937_64 rng(opts.seed ^ 0x5eedULL);
  for (std::size_t k = 0; k < opts.random_trials; ++k) {
    const auto positions = draw_positions(opts.T, opts.budget_fraction, rng);
    rep.trials.push_back(sign_task_trial("random-" + std::to_string(k), positions, opts.T, opts.seed + 1 + k));
  }
  for (const auto& t : rep.trials) rep.max_mistakes = std::max(rep.max_mistakes, t.clean_mistakes);
  return rep;
}

// ---------------------------------------------------------------------------
// Signed-basis task: the explicit attacker drives clean error to 50% or more.

/// Bitset of coordinates with theta_j >= 0, maintained under sparse updates so
/// the attacker never scans theta.
class NonnegativeIndex {
 public:
  explicit NonnegativeIndex(const Model& theta) : words_((theta.size() + 63) / 64, 0) {
    for (Eigen::Index j = 0; j < theta.size(); ++j) set(j, theta[j] >= 0.0);
  }

  void set(Eigen::Index j, bool nonneg) {
    const auto w = static_cast<std::size_t>(j / 64);
    const std::uint64_t bit = std::uint64_t{1} << (j % 64);
    const bool was = (words_[w] & bit) != 0;
    if (was == nonneg) return;
    words_[w] ^= bit;
    count_ += nonneg ? 1 : -1;
  }

  [[nodiscard]] Eigen::Index count() const { return count_; }

  /// First m set coordinates in ascending order, or none when fewer exist.
  [[nodiscard]] std::vector<Eigen::Index> first(Eigen::Index m) const {
    std::vector<Eigen::Index> out;
    if (count_ < m) return out;
    out.reserve(static_cast<std::size_t>(m));
    for (std::size_t w = 0; w < words_.size() && static_cast<Eigen::Index>(out.size()) < m; ++w) {
      std::uint64_t bits = words_[w];
      while (bits != 0 && static_cast<Eigen::Index>(out.size()) < m) {
        out.push_back(static_cast<Eigen::Index>(w * 64 + static_cast<std::size_t>(std::countr_zero(bits))));
        bits &= bits - 1;
      }
    }
    return out;
  }

 private:
  std::vector<std::uint64_t> words_;
  Eigen::Index count_ = 0;
};

/// Same point as basis_attacker_point, read from the index.
inline SparseExample basis_attacker_point(const NonnegativeIndex& idx, Eigen::Index m) {
  SparseExample ex;
  ex.y = Label::Positive;
  const double v = -1.0 / std::sqrt(static_cast<double>(m));
  for (Eigen::Index j : idx.first(m)) ex.entries.emplace_back(j, v);
  return ex;
}

struct BasisTaskRun {
  std::uint64_t seed = 0;
  std::size_t clean_examples = 0;
  std::size_t clean_mistakes = 0;
  std::size_t poison_count = 0;
  std::size_t zero_poisons = 0;  // slots where fewer than m coordinates were nonnegative
  double clean_error = 0.0;
};

struct BasisTaskOptions {
  BasisTaskSpec task{};
  std::size_t clean_examples = 1000000;
  double eta = 1.0;
  double R = 1.0;  // L2 ball radius
};

/// Streams `clean_examples` signed-basis points with one attacker point after
/// every `cycle` clean ones, predicting each clean point before its update.
inline BasisTaskRun basis_task_run(const BasisTaskOptions& opts, std::uint64_t seed) {
  opts.task.validate();
  const Eigen::Index d = opts.task.d;
  Model theta = Model::Zero(d);
  NonnegativeIndex idx(theta);
  std::mt19937_64 rng(seed);
  BasisTaskRun run;
  run.seed = seed;
  const double r2 = opts.R * opts.R * (1.0 + 1e-12);
  auto apply = [&](const SparseExample& ex) {
    double n2 = 0.0;
    for (const auto& [j, v] : ex.entries) n2 += v * v;
    if (n2 > r2) return;
    ogd_update_sparse(theta, ex, opts.eta);
    for (const auto& [j, v] : ex.entries) idx.set(j, theta[j] >= 0.0);
  };
  std::size_t since_poison = 0;
  while (run.clean_examples < opts.clean_examples) {
    const SparseExample ex = draw_basis_example(d, rng);
    ++run.clean_examples;
    if (!predicts_correctly_sparse(theta, ex)) ++run.clean_mistakes;
    apply(ex);
    if (++since_poison == opts.task.cycle) {
      since_poison = 0;
      const SparseExample p = basis_attacker_point(idx, opts.task.m);
      if (p.entries.empty()) ++run.zero_poisons;
      apply(p);
      ++run.poison_count;
    }
  }
  run.clean_error = static_cast<double>(run.clean_mistakes) / static_cast<double>(run.clean_examples);
  return run;
}

struct BasisTaskReport {
  std::vector<BasisTaskRun> runs;
  double threshold = 0.5;

  [[nodiscard]] std::size_t passes() const {
    std::size_t n = 0;
    for (const auto& r : runs) n += r.clean_error >= threshold ? 1 : 0;
    return n;
  }
};

inline BasisTaskReport basis_task_suite(const BasisTaskOptions& opts = {}, std::size_t seeds = 20, std::uint64_t base_seed = 0) {
  BasisTaskReport rep;
  for (std::size_t s = 0; s < seeds; ++s) rep.runs.push_back(basis_task_run(opts, base_seed + s));
  return rep;
}

// ---------------------------------------------------------------------------
// Simplistic-attack rate bound on random L2-ball instances.

struct RateBoundInstance {
  std::uint64_t seed = 0;
  Eigen::Index d = 0;
  double eta = 0.0;
  double R = 0.0;
  double lambda = 0.0;
  double dist0 = 0.0;  // ||theta~_0 - theta*||, where the contraction starts
  double C = 0.0;
  std::size_t budget = 0;
  std::size_t used = 0;
  double final_distance = 0.0;
  bool succeeded = false;
};

struct RateBoundOptions {
  std::size_t instances = 100;
  double epsilon = 1e-3;
  Eigen::Index max_d = 20;
  std::uint64_t seed = 0;
};

struct RateBoundReport {
  std::vector<RateBoundInstance> instances;

  [[nodiscard]] std::size_t successes() const {
    std::size_t n = 0;
    for (const auto& i : instances) n += i.succeeded ? 1 : 0;
    return n;
  }
};

/// Random instance: Gaussian clean stream, random target, random eta and R.
/// Runs the attack with K equal to the bound and checks success.
inline RateBoundInstance rate_bound_instance(std::uint64_t seed, const RateBoundOptions& opts) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> dim(1, opts.max_d);
  std::uniform_real_distribution<double> eta_dist(0.1, 1.0);
  std::uniform_real_distribution<double> r_dist(0.5, 5.0);
  std::uniform_int_distribution<int> n_dist(0, 50);
  RateBoundInstance inst;
  inst.seed = seed;
  inst.d = dim(rng);
  inst.eta = eta_dist(rng);
  inst.R = r_dist(rng);

  Stream clean;
  const Vector w = numeric::gaussian_vector(inst.d, rng);
  const int n = n_dist(rng);
  for (int i = 0; i < n; ++i) {
    const Vector x = numeric::gaussian_vector(inst.d, rng);
    clean.append({x, x.dot(w) >= 0.0 ? Label::Positive : Label::Negative});
  }
  const LearnerConfig config{inst.eta, Model::Zero(inst.d)};
  const DefenseSpec defense = L2BallDefense{inst.R};
  SemiOnlineAttackConfig atk;
  atk.theta_star = numeric::gaussian_vector(inst.d, rng);
  atk.epsilon = opts.epsilon;
  atk.R = inst.R;
  atk.eta = inst.eta;
  atk.seed = seed;
  inst.lambda = atk.theta_star.norm();

  const Model clean_model = ogd_final(config, clean, defense);
  inst.dist0 = (clean_model - atk.theta_star).norm();
  const RegimeQuery q{config.theta0, atk.theta_star, clean_model, inst.eta};
  const RegimeVerdict v = classify(defense, q);
  inst.C = v.C.value_or(0.0);
  inst.budget = rate_budget(inst.C, inst.lambda, opts.epsilon);
  atk.K = inst.budget;
  const AttackOutcome out = simplistic_attack(config, clean, atk, defense);
  inst.used = out.inserted_count;
  inst.final_distance = (out.final_model - atk.theta_star).norm();
  inst.succeeded = out.succeeded && v.kind == RegimeKind::Easy && out.inserted_count <= inst.budget;
  return inst;
}

inline RateBoundReport rate_bound_suite(const RateBoundOptions& opts = {}) {
  RateBoundReport rep;
  for (std::size_t i = 0; i < opts.instances; ++i) rep.instances.push_back(rate_bound_instance(opts.seed + i, opts));
  return rep;
}

}  // namespace streampoison
