// JSON serialization, result tables (CSV / JSON) and SVG plots.
#pragma once

#include "json.hpp"

#include <charconv>
#include <limits>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "streampoison/attacks.hpp"
#include "streampoison/defense.hpp"
#include "streampoison/harness.hpp"
#include "streampoison/regime.hpp"
#include "streampoison/tasks.hpp"

namespace streampoison {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON.

inline Json vector_to_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vector vector_from_json(const Json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline Json example_to_json(const LabeledExample& ex) {
  return {{"x", vector_to_json(ex.x)}, {"y", static_cast<int>(ex.y)}};
}

inline Json defense_to_json(const DefenseSpec& d) {
  Json j{{"kind", to_string(kind_of(d))}, {"R", norm_cap(d)}};
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, CentroidDefense> || std::is_same_v<T, SlabDefense>) {
          j["tau"] = v.tau;
          j["mu_plus"] = vector_to_json(v.stats.mu_plus);
          j["mu_minus"] = vector_to_json(v.stats.mu_minus);
        }
      },
      d);
  return j;
}

/// The labeling oracle cannot be restored from JSON; it is rejected.
inline DefenseSpec defense_from_json(const Json& j) {
  const DefenseKind kind = defense_kind_from_string(j.at("kind").get<std::string>());
  const double R = j.at("R").get<double>();
  DefenseSpec d = L2BallDefense{R};
  switch (kind) {
    case DefenseKind::L2Ball: break;
    case DefenseKind::Centroid:
    case DefenseKind::Slab: {
      const auto stats = CentroidStats::from_centroids(vector_from_json(j.at("mu_plus")), vector_from_json(j.at("mu_minus")));
      const double tau = j.at("tau").get<double>();
      if (kind == DefenseKind::Centroid) d = CentroidDefense{R, tau, stats};
      else d = SlabDefense{R, tau, stats};
      break;
    }
    case DefenseKind::LabelingOracle: throw UnsupportedVariantError("labeling oracle defenses are not serializable");
  }
  validate(d);
  return d;
}

inline Json outcome_to_json(const AttackOutcome& o, bool with_trace = false) {
  Json j{{"attack", o.attack},
         {"inserted_count", o.inserted_count},
         {"succeeded", o.succeeded},
         {"gamma0", o.gamma0},
         {"clean_model", vector_to_json(o.clean_model)},
         {"final_model", vector_to_json(o.final_model)},
         {"diagnostic", o.diagnostic}};
  if (with_trace) {
    Json trace = Json::array();
    for (const auto& s : o.trace) {
      Json step{{"t", s.t},
                {"gamma", s.gamma},
                {"c", s.c},
                {"flipped", s.flipped},
                {"point", example_to_json(s.point)},
                {"dist_to_target", s.dist_to_target}};
      step["gamma_star"] = s.gamma_star ? Json(*s.gamma_star) : Json(nullptr);
      trace.push_back(std::move(step));
    }
    j["trace"] = std::move(trace);
  }
  return j;
}

inline Json verdict_to_json(const RegimeVerdict& v) {
  Json j{{"kind", to_string(v.kind)}, {"note", v.note}};
  j["C"] = v.C ? Json(*v.C) : Json(nullptr);
  j["gamma0"] = v.gamma0 ? Json(*v.gamma0) : Json(nullptr);
  if (v.segment) j["segment"] = {{"r", v.segment->r}, {"u", vector_to_json(v.segment->u)}};
  else j["segment"] = nullptr;
  if (v.witness) {
    j["witness"] = {{"normal", vector_to_json(v.witness->normal)},
                    {"excluded_direction", vector_to_json(v.witness->excluded_direction)}};
  } else {
    j["witness"] = nullptr;
  }
  return j;
}

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json boundaries_to_json(const RegimeBoundaries& b) {
  return {{"tau_easy", optional_json(b.tau_easy)}, {"tau_hard", optional_json(b.tau_hard)}};
}

inline Json bundle_manifest(const DatasetBundle& b) {
  return {{"id", b.id},
          {"seed", b.seed},
          {"dimension", b.dimension()},
          {"sizes", {{"init", b.init.size()}, {"train", b.train.size()}, {"test", b.test.size()}}},
          {"normalization",
           {{"mean", vector_to_json(b.normalization.mean)},
            {"scale", vector_to_json(b.normalization.scale)},
            {"mean_over_all_points", b.normalization.mean_over_all_points}}}};
}

// ---------------------------------------------------------------------------
// Result tables. Doubles are written in shortest round-trip form.

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError("bad number '" + s + "' in " + what);
  return v;
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError("bad integer '" + s + "' in " + what);
  return v;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

inline std::optional<double> parse_opt(const std::string& s, const std::string& what) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, what);
}

/// Quotes a cell when it holds a comma, quote or newline.
inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::vector<std::string> parse_csv_record(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else if (c != '\r') {
      cells.back() += c;
    }
  }
  return cells;
}

}  // namespace detail

template <typename Record>
struct RecordSchema;

template <>
struct RecordSchema<SemiOnlineRunRecord> {
  static std::vector<std::string> columns() {
    return {"dataset", "defense", "percentile", "tau",      "attack",   "K",    "eta",  "cos_to_target",
            "test_error", "regime", "tau_easy", "tau_hard", "inserted", "seed", "error"};
  }
  static std::vector<std::string> row(const SemiOnlineRunRecord& r) {
    using detail::fmt_double;
    return {r.dataset,       r.defense,
            fmt_double(r.percentile), fmt_double(r.tau),
            r.attack,        std::to_string(r.K),
            fmt_double(r.eta), fmt_double(r.cos_to_target),
            fmt_double(r.test_error), r.regime,
            detail::fmt_opt(r.tau_easy), detail::fmt_opt(r.tau_hard),
            std::to_string(r.inserted), std::to_string(r.seed),
            r.error};
  }
  static SemiOnlineRunRecord parse(const std::vector<std::string>& c, const std::string& where) {
    SemiOnlineRunRecord r;
    r.dataset = c[0];
    r.defense = c[1];
    r.percentile = detail::parse_double(c[2], where);
    r.tau = detail::parse_double(c[3], where);
    r.attack = c[4];
    r.K = detail::parse_uint(c[5], where);
    r.eta = detail::parse_double(c[6], where);
    r.cos_to_target = detail::parse_double(c[7], where);
    r.test_error = detail::parse_double(c[8], where);
    r.regime = c[9];
    r.tau_easy = detail::parse_opt(c[10], where);
    r.tau_hard = detail::parse_opt(c[11], where);
    r.inserted = detail::parse_uint(c[12], where);
    r.seed = detail::parse_uint(c[13], where);
    r.error = c[14];
    return r;
  }
};

template <>
struct RecordSchema<FullyOnlineRunRecord> {
  static std::vector<std::string> columns() {
    return {"dataset", "defense", "retention",     "tau",                   "attack",  "budget_fraction",
            "T",       "online_error", "offline_optimal_error", "skipped", "seed",    "error"};
  }
  static std::vector<std::string> row(const FullyOnlineRunRecord& r) {
    using detail::fmt_double;
    return {r.dataset,
            r.defense,
            fmt_double(r.retention),
            fmt_double(r.tau),
            r.attack,
            fmt_double(r.budget_fraction),
            std::to_string(r.T),
            fmt_double(r.online_error),
            fmt_double(r.offline_optimal_error),
            std::to_string(r.skipped),
            std::to_string(r.seed),
            r.error};
  }
  static FullyOnlineRunRecord parse(const std::vector<std::string>& c, const std::string& where) {
    FullyOnlineRunRecord r;
    r.dataset = c[0];
    r.defense = c[1];
    r.retention = detail::parse_double(c[2], where);
    r.tau = detail::parse_double(c[3], where);
    r.attack = c[4];
    r.budget_fraction = detail::parse_double(c[5], where);
    r.T = detail::parse_uint(c[6], where);
    r.online_error = detail::parse_double(c[7], where);
    r.offline_optimal_error = detail::parse_double(c[8], where);
    r.skipped = detail::parse_uint(c[9], where);
    r.seed = detail::parse_uint(c[10], where);
    r.error = c[11];
    return r;
  }
};

enum class ResultFormat { Csv, Json };

inline ResultFormat result_format_from_string(const std::string& s) {
  if (s == "csv") return ResultFormat::Csv;
  if (s == "json") return ResultFormat::Json;
  throw ArgumentError("unknown result format '" + s + "'");
}

/// Reproducibility metadata written as leading `# key=value` lines in CSV and
/// as a "config" object in JSON.
using ResultHeader = std::vector<std::pair<std::string, std::string>>;

template <typename Record>
void emit_results(const std::vector<Record>& records, ResultFormat format, const std::string& path,
                  const ResultHeader& header = {}) {
  using Schema = RecordSchema<Record>;
  if (records.empty()) throw ArgumentError("emit_results: no records to write to '" + path + "'");
  std::ostringstream body;
  const auto cols = Schema::columns();
  if (format == ResultFormat::Csv) {
    for (const auto& [k, v] : header) body << "# " << k << '=' << v << '\n';
    for (std::size_t i = 0; i < cols.size(); ++i) body << (i ? "," : "") << cols[i];
    body << '\n';
    for (const auto& r : records) {
      const auto cells = Schema::row(r);
      for (std::size_t i = 0; i < cells.size(); ++i) body << (i ? "," : "") << detail::csv_cell(cells[i]);
      body << '\n';
    }
  } else {
    Json cfg = Json::object();
    for (const auto& [k, v] : header) cfg[k] = v;
    Json rows = Json::array();
    for (const auto& r : records) {
      const auto cells = Schema::row(r);
      Json obj = Json::object();
      for (std::size_t i = 0; i < cols.size(); ++i) obj[cols[i]] = cells[i];
      rows.push_back(std::move(obj));
    }
    body << Json{{"config", cfg}, {"columns", cols}, {"records", rows}}.dump(2) << '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << body.str();
  if (!out) throw IoError("write failed for '" + path + "'");
}

template <typename Record>
std::vector<Record> read_results(const std::string& path, ResultFormat format) {
  using Schema = RecordSchema<Record>;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  const auto cols = Schema::columns();
  std::vector<Record> out;
  if (format == ResultFormat::Csv) {
    std::string line;
    bool header_seen = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line.front() == '#') continue;
      const auto cells = detail::parse_csv_record(line);
      const std::string where = path + ":" + std::to_string(lineno);
      if (!header_seen) {
        if (cells != cols) throw IoError(where + ": unexpected column header");
        header_seen = true;
        continue;
      }
      if (cells.size() != cols.size()) throw IoError(where + ": wrong column count");
      out.push_back(Schema::parse(cells, where));
    }
  } else {
    Json j;
    try {
      in >> j;
    } catch (const Json::exception& e) {
      throw IoError(path + ": " + e.what());
    }
    std::size_t k = 0;
    for (const auto& obj : j.at("records")) {
      std::vector<std::string> cells;
      for (const auto& c : cols) cells.push_back(obj.at(c).template get<std::string>());
      out.push_back(Schema::parse(cells, path + " record " + std::to_string(k++)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG plots.

struct RegimeBand {
  double lo = 0.0;
  double hi = 0.0;
  RegimeKind kind = RegimeKind::Easy;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::map<std::string, std::vector<std::pair<double, double>>> series;  // sorted by x
  std::vector<RegimeBand> bands;
  std::optional<double> baseline;
};

namespace detail {

template <typename Record, typename Key>
void check_single_group(const std::vector<Record>& records, Key key, const char* what) {
  if (records.empty()) throw ArgumentError("emit_plot: no records");
  for (const auto& r : records) {
    if (key(r) != key(records.front())) throw ArgumentError(std::string("emit_plot: records mix ") + what);
  }
}

/// Mean of y per (series, x).
inline std::map<std::string, std::vector<std::pair<double, double>>> average_series(
    const std::vector<std::tuple<std::string, double, double>>& pts) {
  std::map<std::string, std::map<double, std::pair<double, int>>> acc;
  for (const auto& [name, x, y] : pts) {
    auto& a = acc[name][x];
    a.first += y;
    a.second += 1;
  }
  std::map<std::string, std::vector<std::pair<double, double>>> out;
  for (const auto& [name, xs] : acc) {
    for (const auto& [x, a] : xs) out[name].emplace_back(x, a.first / a.second);
  }
  return out;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

}  // namespace detail

/// Cosine (or test error) against tau, one line per attack; easy and hard
/// tau ranges from the regime boundaries are shaded.
inline PlotSpec semi_online_plot(const std::vector<SemiOnlineRunRecord>& records, const std::string& metric = "cos") {
  detail::check_single_group(records, [](const auto& r) { return r.defense; }, "defense kinds");
  detail::check_single_group(records, [](const auto& r) { return r.dataset; }, "datasets");
  if (metric != "cos" && metric != "test_error") throw ArgumentError("semi-online metric must be cos or test_error");
  std::vector<std::tuple<std::string, double, double>> pts;
  double lo = records.front().tau;
  double hi = lo;
  std::optional<double> tau_easy;
  std::optional<double> tau_hard;
  for (const auto& r : records) {
    if (!r.error.empty()) continue;
    pts.emplace_back(r.attack, r.tau, metric == "cos" ? r.cos_to_target : r.test_error);
    lo = std::min(lo, r.tau);
    hi = std::max(hi, r.tau);
    if (r.tau_easy) tau_easy = r.tau_easy;
    if (r.tau_hard) tau_hard = r.tau_hard;
  }
  PlotSpec p;
  p.title = records.front().dataset + " / " + records.front().defense;
  p.x_label = "tau";
  p.y_label = metric == "cos" ? "cos(theta, theta*)" : "test error";
  p.series = detail::average_series(pts);
  if (tau_hard && *tau_hard >= lo) p.bands.push_back({lo, *tau_hard, RegimeKind::Hard});
  if (tau_easy && *tau_easy < hi) p.bands.push_back({std::max(*tau_easy, lo), hi, RegimeKind::Easy});
  return p;
}

/// Online error against retention fraction, with the mean offline-optimal
/// error as a dashed baseline.
inline PlotSpec fully_online_plot(const std::vector<FullyOnlineRunRecord>& records) {
  detail::check_single_group(records, [](const auto& r) { return r.defense; }, "defense kinds");
  detail::check_single_group(records, [](const auto& r) { return r.dataset; }, "datasets");
  std::vector<std::tuple<std::string, double, double>> pts;
  double base = 0.0;
  int nb = 0;
  for (const auto& r : records) {
    if (!r.error.empty()) continue;
    pts.emplace_back(r.attack, r.retention, r.online_error);
    base += r.offline_optimal_error;
    ++nb;
  }
  PlotSpec p;
  p.title = records.front().dataset + " / " + records.front().defense;
  p.x_label = "retention";
  p.y_label = "online error";
  p.series = detail::average_series(pts);
  p.baseline = nb > 0 ? base / nb : 0.0;
  return p;
}

inline std::string render_svg(const PlotSpec& p) {
  constexpr double W = 640, H = 420, L = 70, Rm = 150, T = 40, B = 60;
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& [name, pts] : p.series) {
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  for (const auto& b : p.bands) {
    x0 = std::min(x0, b.lo);
    x1 = std::max(x1, b.hi);
  }
  if (p.baseline) {
    y0 = std::min(y0, *p.baseline);
    y1 = std::max(y1, *p.baseline);
  }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0;
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pw = W - L - Rm;
  const double ph = H - T - B;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return T + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  auto f = [](double v) { return detail::fmt_double(std::round(v * 100.0) / 100.0); };

  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  for (const auto& b : p.bands) {
    const char* fill = b.kind == RegimeKind::Hard ? "#f4c7c3" : "#c6dbef";
    s << "<rect class=\"band-" << (b.kind == RegimeKind::Hard ? "hard" : "easy") << "\" x=\"" << f(sx(b.lo))
      << "\" y=\"" << T << "\" width=\"" << f(sx(b.hi) - sx(b.lo)) << "\" height=\"" << ph << "\" fill=\"" << fill
      << "\" data-lo=\"" << detail::fmt_double(b.lo) << "\" data-hi=\"" << detail::fmt_double(b.hi) << "\"/>\n";
  }
  s << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    s << "<text x=\"" << f(sx(xv)) << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
      << f(xv) << "</text>\n";
    s << "<text x=\"" << L - 6 << "\" y=\"" << f(sy(yv) + 4) << "\" font-size=\"11\" text-anchor=\"end\">" << f(yv)
      << "</text>\n";
  }
  s << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 15 << "\" font-size=\"13\" text-anchor=\"middle\">"
    << detail::xml_escape(p.x_label) << "</text>\n";
  s << "<text x=\"18\" y=\"" << T + ph / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << T + ph / 2 << ")\">" << detail::xml_escape(p.y_label) << "</text>\n";
  s << "<text x=\"" << L + pw / 2 << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">"
    << detail::xml_escape(p.title) << "</text>\n";
  if (p.baseline) {
    s << "<line class=\"baseline\" x1=\"" << L << "\" y1=\"" << f(sy(*p.baseline)) << "\" x2=\"" << L + pw
      << "\" y2=\"" << f(sy(*p.baseline)) << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
  }
  int ci = 0;
  for (const auto& [name, pts] : p.series) {
    const char* c = colors[ci % 6];
    s << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) s << (i ? " " : "") << f(sx(pts[i].first)) << ',' << f(sy(pts[i].second));
    s << "\"/>\n";
    for (const auto& [x, y] : pts) {
      s << "<circle cx=\"" << f(sx(x)) << "\" cy=\"" << f(sy(y)) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    }
    const double ly = T + 14 + 18 * ci;
    s << "<line x1=\"" << L + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << L + pw + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << detail::xml_escape(name)
      << "</text>\n";
    ++ci;
  }
  s << "</svg>\n";
  return s.str();
}

inline void write_svg(const PlotSpec& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << render_svg(p);
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void emit_plot(const std::vector<SemiOnlineRunRecord>& records, const std::string& path,
                      const std::string& metric = "cos") {
  write_svg(semi_online_plot(records, metric), path);
}

inline void emit_plot(const std::vector<FullyOnlineRunRecord>& records, const std::string& path) {
  write_svg(fully_online_plot(records), path);
}

}  // namespace streampoison
