// Logistic-loss online gradient descent primitives.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace streampoison {

using Vector = Eigen::VectorXd;

/// Model parameters theta. Kept as a plain dense vector so Eigen expressions
/// compose without wrappers.
using Model = Vector;

/// Raised when an operation receives vectors of incompatible dimension or an
/// otherwise malformed argument.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a metric is undefined for its inputs (e.g. cosine of a zero vector).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Label : int { Negative = -1, Positive = 1 };

inline double sign_of(Label y) { return static_cast<double>(static_cast<int>(y)); }
inline Label flip(Label y) { return y == Label::Positive ? Label::Negative : Label::Positive; }

inline Label label_from_int(int v) {
  if (v == 1) return Label::Positive;
  if (v == -1) return Label::Negative;
  throw ArgumentError("label must be +1 or -1, got " + std::to_string(v));
}

struct LabeledExample {
  Vector x;
  Label y = Label::Positive;
};

inline LabeledExample flipped(const LabeledExample& ex) { return {-ex.x, flip(ex.y)}; }

/// An ordered sequence of examples with a parallel poison flag per item.
class Stream {
 public:
  Stream() = default;
  explicit Stream(std::vector<LabeledExample> clean)
      : items_(std::move(clean)), poison_flags_(items_.size(), false) {}

  void append(LabeledExample ex, bool poisoned = false) {
    items_.push_back(std::move(ex));
    poison_flags_.push_back(poisoned);
  }

  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] bool empty() const { return items_.empty(); }
  [[nodiscard]] const LabeledExample& operator[](std::size_t i) const { return items_[i]; }
  [[nodiscard]] LabeledExample& operator[](std::size_t i) { return items_[i]; }
  [[nodiscard]] bool is_poison(std::size_t i) const { return poison_flags_[i]; }
  [[nodiscard]] const std::vector<LabeledExample>& items() const { return items_; }
  [[nodiscard]] const std::vector<bool>& poison_flags() const { return poison_flags_; }

  [[nodiscard]] std::size_t poison_count() const {
    std::size_t n = 0;
    for (bool f : poison_flags_) n += f ? 1 : 0;
    return n;
  }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<LabeledExample> items_;
  std::vector<bool> poison_flags_;
};

struct LearnerConfig {
  double eta = 1.0;
  Model theta0;

  [[nodiscard]] Eigen::Index dimension() const { return theta0.size(); }

  void validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ArgumentError("learning rate must be positive");
    if (theta0.size() == 0) throw ArgumentError("initial model must have positive dimension");
  }
};

struct Trajectory {
  std::vector<Model> models;        // theta_0 .. theta_T (only theta_0 and theta_T in final-only mode)
  std::vector<bool> accepted_flags;  // one per stream item
  Model final_model;
};

namespace detail {

inline void check_dims(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw ArgumentError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                        std::to_string(b) + ")");
  }
}

}  // namespace detail

/// log(1 + exp(z)) without overflow.
inline double log1p_exp(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

/// Logistic sigmoid 1 / (1 + exp(-z)), stable for large |z|.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logistic_loss(const Model& theta, const LabeledExample& ex) {
  detail::check_dims(theta.size(), ex.x.size(), "logistic_loss");
  return log1p_exp(-sign_of(ex.y) * theta.dot(ex.x));
}

inline Vector logistic_grad(const Model& theta, const LabeledExample& ex) {
  detail::check_dims(theta.size(), ex.x.size(), "logistic_grad");
  const double y = sign_of(ex.y);
  const double s = sigmoid(-y * theta.dot(ex.x));
  return (-y * s) * ex.x;
}

/// In-place form of ogd_step; the learner loops use this to avoid reallocating theta.
inline void ogd_update(Model& theta, const LabeledExample& ex, double eta) {
  detail::check_dims(theta.size(), ex.x.size(), "ogd_step");
  const double y = sign_of(ex.y);
  const double s = sigmoid(-y * theta.dot(ex.x));
  theta.noalias() += (eta * y * s) * ex.x;
}

inline Model ogd_step(const Model& theta, const LabeledExample& ex, double eta) {
  if (!(eta > 0.0)) throw ArgumentError("ogd_step: eta must be positive");
  Model next = theta;
  ogd_update(next, ex, eta);
  return next;
}

enum class Prediction { Negative = -1, Abstain = 0, Positive = 1 };

inline Prediction predict(const Model& theta, const Vector& x) {
  detail::check_dims(theta.size(), x.size(), "predict");
  const double m = theta.dot(x);
  if (m > 0.0) return Prediction::Positive;
  if (m < 0.0) return Prediction::Negative;
  return Prediction::Abstain;
}

/// Correct only when y * theta^T x > 0; abstaining is an error.
inline bool predicts_correctly(const Model& theta, const LabeledExample& ex) {
  return sign_of(ex.y) * theta.dot(ex.x) > 0.0;
}

inline double cosine_similarity(const Vector& a, const Vector& b) {
  detail::check_dims(a.size(), b.size(), "cosine_similarity");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw UndefinedMetricError("cosine similarity of a zero vector");
  const double c = a.dot(b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

/// 0/1 error of theta over a set of examples (abstain counts as an error).
inline double error_rate(const Model& theta, const Stream& s) {
  if (s.empty()) return 0.0;
  std::size_t wrong = 0;
  for (const auto& ex : s) wrong += predicts_correctly(theta, ex) ? 0 : 1;
  return static_cast<double>(wrong) / static_cast<double>(s.size());
}

// ---------------------------------------------------------------------------
// Sparse fast path. Updates touch only the nonzero coordinates of x.

struct SparseExample {
  std::vector<std::pair<Eigen::Index, double>> entries;  // (coordinate, value), unique coordinates
  Label y = Label::Positive;

  [[nodiscard]] Vector to_dense(Eigen::Index d) const {
    Vector x = Vector::Zero(d);
    for (const auto& [i, v] : entries) x[i] = v;
    return x;
  }
};

inline double sparse_dot(const Model& theta, const SparseExample& ex) {
  double m = 0.0;
  for (const auto& [i, v] : ex.entries) m += theta[i] * v;
  return m;
}

inline void ogd_update_sparse(Model& theta, const SparseExample& ex, double eta) {
  const double y = sign_of(ex.y);
  const double s = sigmoid(-y * sparse_dot(theta, ex));
  const double scale = eta * y * s;
  for (const auto& [i, v] : ex.entries) theta[i] += scale * v;
}

inline bool predicts_correctly_sparse(const Model& theta, const SparseExample& ex) {
  return sign_of(ex.y) * sparse_dot(theta, ex) > 0.0;
}

}  // namespace streampoison
