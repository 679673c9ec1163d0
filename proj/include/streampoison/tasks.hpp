// Synthetic tasks and CSV dataset ingestion.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "streampoison/core.hpp"
#include "streampoison/numeric.hpp"

namespace streampoison {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// One-dimensional sign task: x uniform on {1, -1}, y = sign(x).

inline Stream gen_sign_task(std::size_t T, std::uint64_t seed) {
  if (T < 1) throw ArgumentError("gen_sign_task: T must be >= 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  Stream s;
  for (std::size_t t = 0; t < T; ++t) {
    const bool pos = coin(rng);
    Vector x(1);
    x[0] = pos ? 1.0 : -1.0;
    s.append({std::move(x), pos ? Label::Positive : Label::Negative});
  }
  return s;
}

/// Draws a single sign-task example; used by streaming drivers.
inline LabeledExample draw_sign_example(std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  const bool pos = coin(rng);
  Vector x(1);
  x[0] = pos ? 1.0 : -1.0;
  return {std::move(x), pos ? Label::Positive : Label::Negative};
}

// ---------------------------------------------------------------------------
// Signed-basis task in R^d: x uniform over {+-e_i}, y = sign of the nonzero entry.

struct BasisTaskSpec {
  Eigen::Index d = 10000;
  Eigen::Index m = 1000;   // poison support size
  std::size_t cycle = 10;  // clean examples per poison example

  void validate() const {
    if (d < 1) throw ArgumentError("basis task: d must be >= 1");
    if (m < 1 || m > d) throw ArgumentError("basis task: need 1 <= m <= d");
    if (cycle < 1) throw ArgumentError("basis task: cycle must be >= 1");
  }
};

inline SparseExample draw_basis_example(Eigen::Index d, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> coord(0, d - 1);
  std::bernoulli_distribution coin(0.5);
  const Eigen::Index i = coord(rng);
  const bool pos = coin(rng);
  SparseExample ex;
  ex.entries.emplace_back(i, pos ? 1.0 : -1.0);
  ex.y = pos ? Label::Positive : Label::Negative;
  return ex;
}

inline std::vector<SparseExample> gen_basis_task(const BasisTaskSpec& spec, std::size_t T, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::vector<SparseExample> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) out.push_back(draw_basis_example(spec.d, rng));
  return out;
}

/// The explicit attacker for the basis task: -1/sqrt(m) on the first m
/// coordinates with theta_j >= 0 (ascending index), label +1; the zero vector
/// when fewer than m coordinates are nonnegative.
inline SparseExample basis_attacker_point(const Model& theta, Eigen::Index m) {
  if (m < 1) throw ArgumentError("basis_attacker_point: m must be >= 1");
  SparseExample ex;
  ex.y = Label::Positive;
  const double v = -1.0 / std::sqrt(static_cast<double>(m));
  ex.entries.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < theta.size() && static_cast<Eigen::Index>(ex.entries.size()) < m; ++j) {
    if (theta[j] >= 0.0) ex.entries.emplace_back(j, v);
  }
  if (static_cast<Eigen::Index>(ex.entries.size()) < m) ex.entries.clear();
  return ex;
}

// ---------------------------------------------------------------------------
// Datasets.

struct Normalization {
  Vector mean;
  Vector scale;  // per-coordinate divisor; 0 marks a constant coordinate
  bool mean_over_all_points = true;

  [[nodiscard]] Vector apply(const Vector& x) const {
    Vector out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      out[i] = scale[i] > 0.0 ? std::clamp((x[i] - mean[i]) / scale[i], -1.0, 1.0) : 0.0;
    }
    return out;
  }
};

struct DatasetBundle {
  std::string id;
  std::uint64_t seed = 0;
  Stream init;
  Stream train;
  Stream test;
  Normalization normalization;

  [[nodiscard]] Eigen::Index dimension() const {
    if (!train.empty()) return train[0].x.size();
    if (!init.empty()) return init[0].x.size();
    return 0;
  }
};

struct SplitSizes {
  std::size_t init = 0;
  std::size_t train = 0;
  std::size_t test = 0;

  [[nodiscard]] std::size_t total() const { return init + train + test; }
};

namespace detail {

/// Mean subtraction followed by division by the per-coordinate maximum
/// absolute deviation, fitted on `fit_rows`.
inline Normalization fit_normalization(const std::vector<Vector>& rows, const std::vector<std::size_t>& fit_rows,
                                       bool over_all) {
  const Eigen::Index d = rows.front().size();
  Normalization n;
  n.mean_over_all_points = over_all;
  n.mean = Vector::Zero(d);
  for (std::size_t i : fit_rows) n.mean += rows[i];
  n.mean /= static_cast<double>(fit_rows.size());
  n.scale = Vector::Zero(d);
  for (std::size_t i : fit_rows) n.scale = n.scale.cwiseMax((rows[i] - n.mean).cwiseAbs());
  return n;
}

inline DatasetBundle build_bundle(std::vector<Vector> rows, std::vector<Label> labels, SplitSizes sizes,
                                  std::uint64_t seed, bool mean_over_all, std::string id) {
  if (rows.empty()) throw DatasetError("dataset has no rows");
  if (sizes.total() > rows.size()) {
    throw DatasetError("split sizes (" + std::to_string(sizes.total()) + ") exceed row count (" +
                       std::to_string(rows.size()) + ")");
  }
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> fit_rows;
  if (mean_over_all) {
    fit_rows.resize(rows.size());
    std::iota(fit_rows.begin(), fit_rows.end(), 0);
  } else {
    fit_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.init),
                    order.begin() + static_cast<std::ptrdiff_t>(sizes.init + sizes.train));
    if (fit_rows.empty()) throw DatasetError("normalization over the training split needs a nonempty split");
  }
  DatasetBundle b;
  b.id = std::move(id);
  b.seed = seed;
  b.normalization = fit_normalization(rows, fit_rows, mean_over_all);
  std::size_t k = 0;
  auto take = [&](Stream& dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i, ++k) dst.append({b.normalization.apply(rows[order[k]]), labels[order[k]]});
  };
  take(b.init, sizes.init);
  take(b.train, sizes.train);
  take(b.test, sizes.test);
  return b;
}

}  // namespace detail

struct GaussianTaskSpec {
  Eigen::Index d = 2;
  double mean_sep = 4.0;
  double noise = 1.0;
  SplitSizes sizes{200, 1000, 200};

  void validate() const {
    if (d < 1) throw ArgumentError("gaussian task: d must be >= 1");
    if (!(mean_sep >= 0.0)) throw ArgumentError("gaussian task: mean_sep must be >= 0");
    if (!(noise > 0.0)) throw ArgumentError("gaussian task: noise must be > 0");
  }
};

/// Two isotropic Gaussians at +-(mean_sep/2) v for a random unit v; the label
/// is the component.
inline DatasetBundle gen_gaussian_task(const GaussianTaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Vector v = numeric::gaussian_vector(spec.d, rng);
  v /= v.norm();
  std::bernoulli_distribution coin(0.5);
  const std::size_t n = spec.sizes.total();
  std::vector<Vector> rows;
  std::vector<Label> labels;
  rows.reserve(n);
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Label y = coin(rng) ? Label::Positive : Label::Negative;
    rows.push_back(sign_of(y) * (spec.mean_sep / 2.0) * v + spec.noise * numeric::gaussian_vector(spec.d, rng));
    labels.push_back(y);
  }
  return detail::build_bundle(std::move(rows), std::move(labels), spec.sizes, seed + 1, true,
                              "gaussian-d" + std::to_string(spec.d));
}

struct CsvOptions {
  std::string label_column = "label";  // column name, or a 0-based index when has_header is false / name not found
  bool has_header = true;
  bool mean_over_all_points = true;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  if (cell.empty()) {
    throw DatasetError("row " + std::to_string(row) + ", column " + std::to_string(col) + ": empty cell");
  }
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != cell.size() || !std::isfinite(v)) {
    throw DatasetError("row " + std::to_string(row) + ", column " + std::to_string(col) + ": non-numeric cell '" +
                       cell + "'");
  }
  return v;
}

}  // namespace detail

/// Loads numeric features and a +-1 (or 0/1, remapped) label column, shuffles
/// with the seed and splits into init / train / test.
inline DatasetBundle load_csv_dataset(const std::string& path, const CsvOptions& opts, SplitSizes sizes,
                                      std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset '" + path + "'");
  std::string line;
  std::size_t row = 0;
  std::optional<std::size_t> label_col;
  std::size_t ncols = 0;

  auto index_from_option = [&]() -> std::size_t {
    try {
      std::size_t pos = 0;
      const long v = std::stol(opts.label_column, &pos);
      if (pos == opts.label_column.size() && v >= 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw DatasetError(path + ": label column '" + opts.label_column + "' not found");
  };

  if (opts.has_header) {
    if (!std::getline(in, line)) throw DatasetError(path + ": missing header row");
    ++row;
    const auto header = detail::split_csv_line(line);
    ncols = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == opts.label_column) label_col = c;
    }
    if (!label_col) label_col = index_from_option();
  } else {
    label_col = index_from_option();
  }

  std::vector<Vector> rows;
  std::vector<double> raw_labels;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    const auto cells = detail::split_csv_line(line);
    if (ncols == 0) ncols = cells.size();
    if (cells.size() != ncols) {
      throw DatasetError(path + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                         " columns, expected " + std::to_string(ncols));
    }
    if (*label_col >= ncols) throw DatasetError(path + ": label column index out of range");
    Vector x(static_cast<Eigen::Index>(ncols - 1));
    Eigen::Index k = 0;
    for (std::size_t c = 0; c < ncols; ++c) {
      if (c == *label_col) {
        if (cells[c].empty()) throw DatasetError(path + ": row " + std::to_string(row) + ": missing label");
        raw_labels.push_back(detail::parse_cell(cells[c], row, c));
      } else {
        x[k++] = detail::parse_cell(cells[c], row, c);
      }
    }
    rows.push_back(std::move(x));
  }
  if (rows.empty()) throw DatasetError(path + ": no data rows");

  const bool pm = std::all_of(raw_labels.begin(), raw_labels.end(), [](double v) { return v == 1.0 || v == -1.0; });
  const bool zo = std::all_of(raw_labels.begin(), raw_labels.end(), [](double v) { return v == 1.0 || v == 0.0; });
  if (!pm && !zo) throw DatasetError(path + ": labels must be +-1 or 0/1");
  std::vector<Label> labels;
  labels.reserve(raw_labels.size());
  for (double v : raw_labels) labels.push_back(v == 1.0 ? Label::Positive : Label::Negative);

  if (sizes.total() > rows.size()) {
    throw DatasetError(path + ": split sizes (" + std::to_string(sizes.total()) + ") exceed row count (" +
                       std::to_string(rows.size()) + ")");
  }
  std::string id = path;
  if (const auto slash = id.find_last_of('/'); slash != std::string::npos) id = id.substr(slash + 1);
  return detail::build_bundle(std::move(rows), std::move(labels), sizes, seed, opts.mean_over_all_points, id);
}

/// Writes examples as CSV with columns x0..x{d-1},label.
inline void write_examples_csv(const std::string& path, const std::vector<const Stream*>& parts) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write '" + path + "'");
  Eigen::Index d = 0;
  for (const auto* p : parts) {
    if (p && !p->empty()) {
      d = (*p)[0].x.size();
      break;
    }
  }
  for (Eigen::Index i = 0; i < d; ++i) out << 'x' << i << ',';
  out << "label\n";
  out.precision(17);
  for (const auto* p : parts) {
    if (!p) continue;
    for (const auto& ex : *p) {
      for (Eigen::Index i = 0; i < ex.x.size(); ++i) out << ex.x[i] << ',';
      out << static_cast<int>(ex.y) << '\n';
    }
  }
  if (!out) throw DatasetError("write failed for '" + path + "'");
}

}  // namespace streampoison
