// Command-line front end: sweeps, regime queries, verification and data generation.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "streampoison/streampoison.hpp"

namespace sp = streampoison;
namespace fs = std::filesystem;

namespace {

/// Reads `--config` files written as JSON objects; nested objects address
/// subcommands, e.g. {"semi": {"K": 50}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    sp::Json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_single_name().empty() || !opt->get_configurable()) continue;
      if (opt->count() > 0) {
        j[opt->get_single_name()] = opt->as<std::vector<std::string>>();
      } else if (default_also && !opt->get_default_str().empty()) {
        j[opt->get_single_name()] = opt->get_default_str();
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    sp::Json j;
    try {
      input >> j;
    } catch (const sp::Json::exception& e) {
      throw CLI::ConfigError(std::string("invalid JSON config: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    collect(j, "", {}, items);
    return items;
  }

 private:
  static std::string scalar(const sp::Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const sp::Json& j, const std::string& name, std::vector<std::string> prefix,
                      std::vector<CLI::ConfigItem>& out) {
    if (j.is_object()) {
      if (!name.empty()) prefix.push_back(name);
      for (const auto& [k, v] : j.items()) collect(v, k, prefix, out);
      return;
    }
    CLI::ConfigItem item;
    item.parents = std::move(prefix);
    item.name = name;
    if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(scalar(v));
    } else {
      item.inputs.push_back(scalar(j));
    }
    out.push_back(std::move(item));
  }
};

struct Common {
  std::uint64_t seed = 0;
  std::string out_dir;
};

std::string out_path(const Common& c, const std::string& name) {
  if (fs::path(name).is_absolute()) return name;
  return (fs::path(c.out_dir) / name).string();
}

sp::SplitSizes parse_split(const std::vector<std::size_t>& v) {
  if (v.size() != 3) throw sp::ArgumentError("--split needs three sizes: init,train,test");
  return {v[0], v[1], v[2]};
}

struct DataOptions {
  std::string dataset;
  std::string label_column = "label";
  bool no_header = false;
  bool mean_over_train = false;
  std::vector<std::size_t> split{200, 1000, 200};
  std::size_t d = 2;
  double mean_sep = 4.0;
  double noise = 1.0;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "CSV file with numeric features and a label column");
    app->add_option("--label-column", label_column, "label column name, or 0-based index")->capture_default_str();
    app->add_flag("--no-header", no_header, "CSV has no header row");
    app->add_flag("--normalize-over-train", mean_over_train, "fit normalization on the train split only");
    app->add_option("--split", split, "init,train,test sizes")->delimiter(',')->capture_default_str();
    app->add_option("--d", d, "Gaussian task dimension")->capture_default_str();
    app->add_option("--mean-sep", mean_sep, "Gaussian task mean separation")->capture_default_str();
    app->add_option("--noise", noise, "Gaussian task noise scale")->capture_default_str();
  }

  [[nodiscard]] sp::DatasetBundle load(std::uint64_t seed) const {
    if (!dataset.empty()) {
      sp::CsvOptions o;
      o.label_column = label_column;
      o.has_header = !no_header;
      o.mean_over_all_points = !mean_over_train;
      return sp::load_csv_dataset(dataset, o, parse_split(split), seed);
    }
    sp::GaussianTaskSpec g;
    g.d = static_cast<Eigen::Index>(d);
    g.mean_sep = mean_sep;
    g.noise = noise;
    g.sizes = parse_split(split);
    return sp::gen_gaussian_task(g, seed);
  }
};

std::vector<sp::AttackKind> parse_attacks(const std::vector<std::string>& names) {
  std::vector<sp::AttackKind> out;
  for (const auto& n : names) out.push_back(sp::attack_kind_from_string(n));
  return out;
}

sp::ResultHeader header_for(const std::string& command, const Common& c, const std::vector<std::uint64_t>& seeds,
                            const std::vector<double>& grid) {
  auto join = [](const auto& xs) {
    std::ostringstream s;
    for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? ";" : "") << xs[i];
    return s.str();
  };
  return {{"command", command}, {"seed", std::to_string(c.seed)}, {"seeds", join(seeds)}, {"grid", join(grid)}};
}

std::vector<std::uint64_t> seeds_or_default(const std::vector<std::uint64_t>& seeds, std::size_t count,
                                            std::uint64_t base) {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(base + i);
  return out;
}

// ---------------------------------------------------------------------------

struct SemiCommand {
  DataOptions data;
  std::string defense = "slab";
  std::vector<std::string> attacks{"simplistic"};
  std::vector<double> percentiles{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::size_t K = 100;
  double eta = 0.01;
  std::vector<std::uint64_t> seeds;
  double norm_cap = 0.0;
  std::string format = "csv";
  std::string out = "semi_results.csv";
  std::string plot = "semi_plot.svg";
  std::string metric = "cos";
  int wk_iters = 50;
  bool filter_clean = false;

  void add(CLI::App& app) {
    CLI::App* c = app.add_subcommand("semi", "semi-online sweep: cos(theta, theta*) against tau");
    data.add(c);
    c->add_option("--defense", defense, "l2, centroid or slab")->capture_default_str();
    c->add_option("--attack", attacks, "simplistic, greedy, semi-online-wk, concentrated")->delimiter(',');
    c->add_option("--percentiles", percentiles, "tau grid as percentiles of clean scores")->delimiter(',');
    c->add_option("--K", K, "poison budget")->capture_default_str();
    c->add_option("--eta", eta, "learning rate")->capture_default_str();
    c->add_option("--seeds", seeds, "attack seeds (default: --seed)")->delimiter(',');
    c->add_option("--norm-cap", norm_cap, "norm cap R for centroid/slab (default: largest clean norm)");
    c->add_option("--wk-iters", wk_iters, "Semi-Online-WK ascent iterations")->capture_default_str();
    c->add_flag("--filter-clean", filter_clean, "also pass the clean train split through the defense");
    c->add_option("--format", format, "csv or json")->capture_default_str();
    c->add_option("--out", out, "results file")->capture_default_str();
    c->add_option("--plot", plot, "SVG plot file (empty to skip)")->capture_default_str();
    c->add_option("--metric", metric, "plot metric: cos or test_error")->capture_default_str();
    cmd = c;
  }

  int run(const Common& common) const {
    const auto bundle = data.load(common.seed);
    sp::SemiOnlineSweep sw;
    sw.defense = sp::defense_kind_from_string(defense);
    sw.attacks = parse_attacks(attacks);
    sw.percentiles = percentiles;
    sw.K = K;
    sw.eta = eta;
    sw.seeds = seeds_or_default(seeds, 1, common.seed);
    if (norm_cap > 0.0) sw.norm_cap = norm_cap;
    sw.attack_options.wk.iters = wk_iters;
    sw.filter_clean = filter_clean;
    const auto records = sp::run_semi_online(bundle, sw);
    const std::string path = out_path(common, out);
    sp::emit_results(records, sp::result_format_from_string(format), path,
                     header_for("semi", common, sw.seeds, percentiles));
    std::cout << "wrote " << records.size() << " records to " << path << '\n';
    if (!plot.empty()) {
      const std::string pp = out_path(common, plot);
      sp::emit_plot(records, pp, metric);
      std::cout << "wrote plot " << pp << '\n';
    }
    for (const auto& r : records) {
      if (!r.error.empty()) std::cerr << "cell tau=" << r.tau << " attack=" << r.attack << ": " << r.error << '\n';
    }
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct FullyCommand {
  DataOptions data;
  std::string task = "gaussian";
  std::string defense = "slab";
  std::vector<std::string> attacks{"simplistic"};
  std::vector<double> retentions{0.3, 0.5, 0.7, 0.9, 1.0};
  double budget = 0.1;
  std::size_t T = 1000;
  double eta = 0.01;
  std::vector<std::uint64_t> seeds;
  std::size_t n_seeds = 10;
  double norm_cap = 0.0;
  std::string format = "csv";
  std::string out = "fully_results.csv";
  std::string plot = "fully_plot.svg";
  int wk_iters = 20;

  void add(CLI::App& app) {
    CLI::App* c = app.add_subcommand("fully", "fully-online sweep: online error against retention");
    data.add(c);
    c->add_option("--task", task, "gaussian (or --dataset) or sign")->capture_default_str();
    c->add_option("--defense", defense, "l2, centroid or slab")->capture_default_str();
    c->add_option("--attack", attacks, "simplistic, greedy, semi-online-wk")->delimiter(',');
    c->add_option("--retention", retentions, "retention fractions")->delimiter(',');
    c->add_option("--budget", budget, "fraction of slots given to the attacker")->capture_default_str();
    c->add_option("--T", T, "stream length")->capture_default_str();
    c->add_option("--eta", eta, "learning rate")->capture_default_str();
    c->add_option("--seeds", seeds, "explicit seeds")->delimiter(',');
    c->add_option("--num-seeds", n_seeds, "seed count when --seeds is absent")->capture_default_str();
    c->add_option("--norm-cap", norm_cap, "norm cap R for centroid/slab");
    c->add_option("--wk-iters", wk_iters, "Semi-Online-WK ascent iterations")->capture_default_str();
    c->add_option("--format", format, "csv or json")->capture_default_str();
    c->add_option("--out", out, "results file")->capture_default_str();
    c->add_option("--plot", plot, "SVG plot file (empty to skip)")->capture_default_str();
    cmd = c;
  }

  int run(const Common& common) const {
    sp::DatasetBundle bundle;
    if (task == "sign" && data.dataset.empty()) {
      bundle.id = "sign";
      bundle.seed = common.seed;
      bundle.init = sp::gen_sign_task(parse_split(data.split).init, common.seed);
      bundle.train = sp::gen_sign_task(parse_split(data.split).train, common.seed + 1);
    } else if (task == "gaussian" || !data.dataset.empty()) {
      bundle = data.load(common.seed);
    } else {
      throw sp::ArgumentError("unknown task '" + task + "'");
    }
    sp::FullyOnlineSweep sw;
    sw.defense = sp::defense_kind_from_string(defense);
    sw.attacks = parse_attacks(attacks);
    sw.retentions = retentions;
    sw.budget_fraction = budget;
    sw.T = T;
    sw.eta = eta;
    sw.seeds = seeds_or_default(seeds, n_seeds, common.seed);
    if (norm_cap > 0.0) sw.norm_cap = norm_cap;
    sw.attack_options.wk.iters = wk_iters;
    const auto records = sp::run_fully_online(bundle, sw);
    const std::string path = out_path(common, out);
    sp::emit_results(records, sp::result_format_from_string(format), path,
                     header_for("fully", common, sw.seeds, retentions));
    std::cout << "wrote " << records.size() << " records to " << path << '\n';
    if (!plot.empty()) {
      const std::string pp = out_path(common, plot);
      sp::emit_plot(records, pp);
      std::cout << "wrote plot " << pp << '\n';
    }
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct RegimeCommand {
  std::string defense = "centroid";
  double tau = 1.0;
  double R = 1e6;
  std::vector<double> mu_plus;
  std::vector<double> mu_minus;
  std::vector<double> theta0;
  std::vector<double> theta_star;
  std::vector<double> theta_tilde0;
  double eta = 1.0;
  int samples = 100000;

  void add(CLI::App& app) {
    CLI::App* c = app.add_subcommand("regime", "classify a defense geometry as easy, hard or intermediate");
    c->add_option("--defense", defense, "l2, centroid or slab")->capture_default_str();
    c->add_option("--tau", tau, "defense threshold (radius for l2)")->capture_default_str();
    c->add_option("--R", R, "norm cap for centroid/slab")->capture_default_str();
    c->add_option("--mu-plus", mu_plus, "positive centroid")->delimiter(',');
    c->add_option("--mu-minus", mu_minus, "negative centroid")->delimiter(',');
    c->add_option("--theta0", theta0, "learner initial model (default 0)")->delimiter(',');
    c->add_option("--theta-star", theta_star, "target model")->delimiter(',')->required();
    c->add_option("--theta-tilde0", theta_tilde0, "clean final model (default theta0)")->delimiter(',');
    c->add_option("--eta", eta, "learning rate")->capture_default_str();
    c->add_option("--samples", samples, "certificate check samples")->capture_default_str();
    cmd = c;
  }

  static sp::Vector vec(const std::vector<double>& v) {
    return Eigen::Map<const sp::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  int run(const Common& common) const {
    const auto kind = sp::defense_kind_from_string(defense);
    const sp::Vector ts = vec(theta_star);
    const sp::Vector t0 = theta0.empty() ? sp::Vector(sp::Vector::Zero(ts.size())) : vec(theta0);
    const sp::Vector tt = theta_tilde0.empty() ? t0 : vec(theta_tilde0);
    const sp::RegimeQuery q{t0, ts, tt, eta};
    std::optional<sp::CentroidStats> stats;
    if (kind != sp::DefenseKind::L2Ball) {
      if (mu_plus.empty() || mu_minus.empty()) throw sp::ArgumentError("--mu-plus and --mu-minus are required");
      stats = sp::CentroidStats::from_centroids(vec(mu_plus), vec(mu_minus));
    }
    const sp::DefenseSpec d = sp::make_defense(kind, tau, R, stats ? &*stats : nullptr);
    const auto verdict = sp::classify(d, q);
    sp::Json j{{"defense", sp::defense_to_json(d)},
               {"verdict", sp::verdict_to_json(verdict)},
               {"boundaries", sp::boundaries_to_json(sp::regime_boundaries(kind, stats ? &*stats : nullptr, q))}};
    if (verdict.segment) j["segment_feasible"] = sp::segment_feasible(d, *verdict.segment, 1000);
    if (verdict.witness) {
      j["halfspace_check"] = sp::to_string(sp::halfspace_check(d, *verdict.witness, samples, common.seed));
    }
    std::cout << j.dump(2) << '\n';
    return 0;
  }

  CLI::App* cmd = nullptr;
};

struct VerifyCommand {
  std::size_t sign_trials = 1000;
  std::size_t basis_seeds = 20;
  std::size_t basis_clean = 1000000;
  std::size_t rate_instances = 100;

  void add(CLI::App& app) {
    CLI::App* c = app.add_subcommand("verify", "run the built-in verification suites");
    c->add_option("--sign-trials", sign_trials, "random-position adversaries for the sign task")
        ->capture_default_str();
    c->add_option("--basis-seeds", basis_seeds, "seeds for the signed-basis task (0 to skip)")
        ->capture_default_str();
    c->add_option("--basis-clean", basis_clean, "clean examples per signed-basis run")->capture_default_str();
    c->add_option("--rate-instances", rate_instances, "random instances for the rate bound")->capture_default_str();
    cmd = c;
  }

  int run(const Common& common) const {
    bool ok = true;
    auto line = [&](bool pass, const std::string& what) {
      ok = ok && pass;
      std::cout << (pass ? "[PASS] " : "[FAIL] ") << what << '\n';
    };
    auto num = [](double v, int prec = 4) {
      std::ostringstream s;
      s.setf(std::ios::fixed);
      s.precision(prec);
      s << v;
      return s.str();
    };

    const auto rep = sp::intermediate_case_suite();
    line(std::abs(rep.rapid_x - 1.629) <= 1e-3, "rapid case: x = " + num(rep.rapid_x) + " (expect 1.629)");
    const std::pair<double, std::size_t> expected[] = {{10.0, 8}, {20.0, 551}};
    for (const auto& sc : rep.slow) {
      std::string what = "slow case r=" + num(sc.r, 0) + ": closed form " + std::to_string(sc.closed_form_bound) +
                         ", accumulated " + std::to_string(sc.accumulated_bound) + ", simulated " +
                         std::to_string(sc.simulated_count);
      bool pass = sc.simulated_count >= sc.closed_form_bound && sc.accumulated_bound == sc.closed_form_bound;
      for (const auto& [r, n] : expected) {
        if (sc.r == r) {
          pass = pass && sc.closed_form_bound == n;
          what += " (expect " + std::to_string(n) + ")";
        }
      }
      line(pass, what);
    }
    line(std::abs(rep.impossible_theta_one_step - 1.0568) <= 1e-3 && rep.impossible_monotone,
         "impossible case: theta after one step = " + num(rep.impossible_theta_one_step) +
             " (expect 1.0568), increasing over " + std::to_string(rep.impossible_steps) + " steps");

    if (rate_instances > 0) {
      sp::RateBoundOptions ro;
      ro.instances = rate_instances;
      ro.seed = common.seed;
      const auto rr = sp::rate_bound_suite(ro);
      line(rr.successes() == rr.instances.size(), "rate bound: " + std::to_string(rr.successes()) + "/" +
                                                       std::to_string(rr.instances.size()) +
                                                       " instances within ceil(C log(lambda/eps)) insertions");
    }

    sp::SignTaskOptions sign_opts;
    sign_opts.random_trials = sign_trials;
    sign_opts.seed = common.seed;
    const auto sign_rep = sp::sign_task_suite(sign_opts);
    line(sign_rep.all_passed(), "sign task: " + std::to_string(sign_rep.trials.size()) +
                              " adversaries, max clean mistakes " + std::to_string(sign_rep.max_mistakes) +
                              " <= |I|+1 = " + std::to_string(sign_rep.trials.front().poison_count + 1));

    if (basis_seeds > 0) {
      sp::BasisTaskOptions basis_opts;
      basis_opts.clean_examples = basis_clean;
      const auto basis_rep = sp::basis_task_suite(basis_opts, basis_seeds, common.seed);
      double lo = 1.0;
      for (const auto& r : basis_rep.runs) lo = std::min(lo, r.clean_error);
      const std::size_t need = basis_seeds - basis_seeds / 20;
      line(basis_rep.passes() >= need, "signed-basis task: " + std::to_string(basis_rep.passes()) + "/" +
                                    std::to_string(basis_rep.runs.size()) + " seeds with clean error >= 0.5 (min " +
                                    num(lo) + ")");
    }
    return ok ? 0 : 1;
  }

  CLI::App* cmd = nullptr;
};

struct GenCommand {
  std::string task = "gaussian";
  DataOptions data;
  std::size_t T = 1000;
  std::size_t m = 1000;
  std::string out = "dataset.csv";
  std::string manifest;

  void add(CLI::App& app) {
    CLI::App* c = app.add_subcommand("gen", "write a synthetic dataset as CSV");
    c->add_option("--task", task, "gaussian, sign or basis")->capture_default_str();
    data.add(c);
    c->add_option("--T", T, "examples for sign/basis tasks")->capture_default_str();
    c->add_option("--m", m, "poison support size for the basis task")->capture_default_str();
    c->add_option("--out", out, "CSV output")->capture_default_str();
    c->add_option("--manifest", manifest, "JSON manifest output (gaussian only)");
    cmd = c;
  }

  int run(const Common& common) const {
    const std::string path = out_path(common, out);
    if (task == "gaussian") {
      DataOptions d = data;
      d.dataset.clear();
      const auto b = d.load(common.seed);
      sp::write_examples_csv(path, {&b.init, &b.train, &b.test});
      if (!manifest.empty()) {
        std::ofstream mf(out_path(common, manifest));
        if (!mf) throw sp::IoError("cannot write manifest");
        mf << sp::bundle_manifest(b).dump(2) << '\n';
      }
    } else if (task == "sign") {
      const auto s = sp::gen_sign_task(T, common.seed);
      sp::write_examples_csv(path, {&s});
    } else if (task == "basis") {
      sp::BasisTaskSpec spec;
      spec.d = static_cast<Eigen::Index>(data.d);
      spec.m = static_cast<Eigen::Index>(std::min(m, data.d));
      sp::Stream s;
      for (const auto& ex : sp::gen_basis_task(spec, T, common.seed)) s.append({ex.to_dense(spec.d), ex.y});
      sp::write_examples_csv(path, {&s});
    } else {
      throw sp::ArgumentError("unknown task '" + task + "'");
    }
    std::cout << "wrote " << path << '\n';
    return 0;
  }

  CLI::App* cmd = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streampoison: online data-poisoning attacks and defenses for OGD logistic regression"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values");
  Common common;
  const char* env_out = std::getenv("STREAMPOISON_OUT");
  common.out_dir = env_out && *env_out ? env_out : ".";
  app.add_option("--seed", common.seed, "base random seed")->capture_default_str();
  app.add_option("--out-dir", common.out_dir, "output directory (default $STREAMPOISON_OUT or .)");

  SemiCommand semi;
  FullyCommand fully;
  RegimeCommand regime;
  VerifyCommand verify;
  GenCommand gen;
  semi.add(app);
  fully.add(app);
  regime.add(app);
  verify.add(app);
  gen.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    fs::create_directories(common.out_dir);
    if (semi.cmd->parsed()) return semi.run(common);
    if (fully.cmd->parsed()) return fully.run(common);
    if (regime.cmd->parsed()) return regime.run(common);
    if (verify.cmd->parsed()) return verify.run(common);
    if (gen.cmd->parsed()) return gen.run(common);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
