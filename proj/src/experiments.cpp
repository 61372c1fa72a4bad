#include "misspec/experiments.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "misspec/bounds.hpp"
#include "misspec/doa.hpp"
#include "misspec/equivalent.hpp"
#include "misspec/estimators.hpp"
#include "misspec/information.hpp"
#include "misspec/pseudo_true.hpp"

namespace misspec::experiments {

// ---------------------------------------------------------------- config

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto t = trim(v);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(out)) {
    throw UsageError("invalid number for '" + key + "': '" + v + "'");
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto t = trim(v);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw UsageError("invalid integer for '" + key + "': '" + v + "'");
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw UsageError("invalid boolean for '" + key + "': '" + v + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(const std::string& scenario) {
  ExperimentConfig c;
  c.scenario = scenario;
  if (scenario == "box1" || scenario == "box2") {
    c.n_trials = 20000;
  } else if (scenario == "box3") {
    c.N = 5;
    c.n_trials = 100000;
  } else if (scenario == "box4") {
    c.n_trials = 1000;
  } else if (scenario == "doa_sweep") {
    c.n_trials = 10000;
  } else if (scenario == "random_order_check") {
    c.n_trials = 1000;
  } else {
    throw UsageError("unknown scenario '" + scenario + "'");
  }
  return c;
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& value) {
  const std::string key = trim(raw_key);
  auto positive_int = [&](long long lo) {
    const long long v = parse_int(key, value);
    if (v < lo) throw UsageError("'" + key + "' must be >= " + std::to_string(lo));
    return v;
  };
  if (key == "N") N = static_cast<int>(positive_int(1));
  else if (key == "N_min" || key == "n_min") n_min = static_cast<int>(positive_int(1));
  else if (key == "N_max" || key == "n_max") n_max = static_cast<int>(positive_int(1));
  else if (key == "sigma2") sigma2 = parse_double(key, value);
  else if (key == "epsilon") epsilon = parse_double(key, value);
  else if (key == "sigma1_sq") sigma1_sq = parse_double(key, value);
  else if (key == "sigma2_sq") sigma2_sq = parse_double(key, value);
  else if (key == "M") M = static_cast<int>(positive_int(1));
  else if (key == "rho") {
    rho.clear();
    for (const auto& item : split_list(value)) rho.push_back(parse_double(key, item));
  } else if (key == "s") {
    const auto parts = split_list(value);
    if (parts.size() != 2) throw UsageError("'s' expects 're,im'");
    s_re = parse_double(key, parts[0]);
    s_im = parse_double(key, parts[1]);
  } else if (key == "s_re") s_re = parse_double(key, value);
  else if (key == "s_im") s_im = parse_double(key, value);
  else if (key == "phi") phi = parse_double(key, value);
  else if (key == "noise_var") noise_var = parse_double(key, value);
  else if (key == "g") g_functions = split_list(value);
  else if (key == "n_probe") n_probe = static_cast<int>(positive_int(1));
  else if (key == "n_points") n_points = static_cast<int>(positive_int(1));
  else if (key == "n_problems") n_problems = static_cast<int>(positive_int(1));
  else if (key == "random_n_min") random_n_min = static_cast<int>(positive_int(1));
  else if (key == "random_n_max") random_n_max = static_cast<int>(positive_int(1));
  else if (key == "n_trials") n_trials = static_cast<std::size_t>(positive_int(1));
  else if (key == "mc_samples") mc_samples = static_cast<std::size_t>(positive_int(1));
  else if (key == "z") z = parse_double(key, value);
  else if (key == "seed") {
    const long long v = parse_int(key, value);
    if (v < 0) throw UsageError("'seed' must be non-negative");
    seed = static_cast<std::uint64_t>(v);
  } else if (key == "workers") workers = static_cast<unsigned>(positive_int(0));
  else if (key == "gnuplot") gnuplot = parse_bool(key, value);
  else if (key == "output_dir" || key == "out") output_dir = trim(value);
  else if (key == "scenario") {
    if (trim(value) != scenario) {
      throw UsageError("config scenario '" + trim(value) + "' does not match '" + scenario + "'");
    }
  } else {
    throw UsageError("unknown configuration key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0)) throw UsageError(std::string(what) + " must be positive");
  };
  positive(sigma2, "sigma2");
  positive(epsilon, "epsilon");
  positive(sigma1_sq, "sigma1_sq");
  positive(sigma2_sq, "sigma2_sq");
  positive(noise_var, "noise_var");
  positive(z, "z");
  for (double r : rho) {
    if (!(r >= 0.0 && r < 1.0)) throw UsageError("rho values must lie in [0, 1)");
  }
  if (rho.empty()) throw UsageError("rho list is empty");
  if (n_trials < 100) throw UsageError("n_trials must be >= 100");
  if (mc_samples < 2) throw UsageError("mc_samples must be >= 2");
  if (n_min > n_max) throw UsageError("N_min must not exceed N_max");
  if (random_n_min < 2 || random_n_min > random_n_max) {
    throw UsageError("random_n_min must be >= 2 and <= random_n_max");
  }
  if (std::abs(phi) >= 1.5707963267948966) throw UsageError("phi must lie in (-pi/2, pi/2)");
  if (s_re == 0.0 && s_im == 0.0) throw UsageError("s must be nonzero");
  if (g_functions.empty()) throw UsageError("g list is empty");
  for (const auto& g : g_functions) {
    try {
      (void)g_function_by_name(g);
    } catch (const InvalidInput& e) {
      throw UsageError(e.what());
    }
  }
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (in.bad()) throw IoError("error while reading " + path.string());
  return out;
}

// ---------------------------------------------------------------- tables

void ResultTable::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw InvalidInput("ResultTable " + name + ": row has " + std::to_string(row.size()) +
                       " cells, expected " + std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

namespace {

std::string format_cell(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *d);
    return buf;
  }
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  const std::string& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

}  // namespace

std::string to_csv(const ResultTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out += ',';
    out += format_cell(table.columns[i]);
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_cell(row[i]);
    }
    out += '\n';
  }
  return out;
}

void emit_csv(const ResultTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_csv(table);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

bool ScenarioResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::vector<std::filesystem::path> write_outputs(const ScenarioResult& result,
                                                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (const auto& t : result.tables) {
    const auto path = dir / (t.name + ".csv");
    emit_csv(t, path);
    written.push_back(path);
  }
  for (const auto& [name, text] : result.scripts) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
    written.push_back(path);
  }
  return written;
}

// ---------------------------------------------------------------- scenarios

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

class Checks {
 public:
  explicit Checks(std::vector<CheckResult>& out) : out_(out) {}
  void add(std::string name, bool ok, std::string detail = {}) {
    out_.push_back({std::move(name), ok, std::move(detail)});
  }

 private:
  std::vector<CheckResult>& out_;
};

ParameterVector scalar(double v) { return ParameterVector::Constant(1, v); }

/// Streams: one per (scenario tag, sweep index, role).
RngStream stream_for(const ExperimentConfig& c, std::uint64_t tag, std::uint64_t index,
                     std::uint64_t role) {
  return RngStream(c.seed, tag).substream(index).substream(role);
}

PseudoTrueSolution pseudo_true(const MisspecifiedProblem& problem, const ExperimentConfig& c,
                               RngStream rng) {
  PseudoTrueSolution sol = solve_pseudo_true(problem, problem.theta0, c.mc_samples, rng);
  return sol;
}

double rmse_se(double mse, double mse_se) { return mse > 0 ? mse_se / (2.0 * std::sqrt(mse)) : 0; }

// MSE of a scalar ensemble compared with a reference at z standard errors.
bool mse_matches(const TrialEnsemble& e, double ref, double z) {
  return std::abs(e.empirical_mse(0, 0) - ref) <= z * e.mse_se(0, 0);
}

void scenario_box1(const ExperimentConfig& c, ScenarioResult& r, bool with_naive) {
  Checks checks(r.checks);
  const std::string tag = with_naive ? "box2" : "box1";
  ResultTable main{tag, {}, {}};
  if (with_naive) {
    main.columns = {"N",    "mse_x1", "mse_mml", "mse_oracle", "mcrb",
                    "nmcrb", "crb",   "se_x1",   "se_mml",     "se_oracle"};
  } else {
    main.columns = {"N", "mse_x1", "mse_mml", "mcrb", "crb", "se_x1", "se_mml"};
  }
  ResultTable bias{tag + "_bias",
                   {"N", "bias_x1", "bias_x1_se", "score_bias_x1", "score_bias_x1_se", "bias_mml",
                    "bias_mml_se", "score_bias_mml", "score_bias_mml_se"},
                   {}};
  const double s2 = c.sigma2, eps = c.epsilon;
  const ParameterVector theta0 = scalar(0.0);
  const std::uint64_t stream_tag = with_naive ? 2 : 1;
  bool closed_ok = true, order_ok = true, pseudo_ok = true;
  bool x1_mse_ok = true, mml_mse_ok = true, mml_unbiased = true, x1_pointwise = true,
       x1_score_fails = true, oracle_mse_ok = true, oracle_naive = true, x1_above_naive = true,
       crb_naive_ok = true;
  std::string first_failure;
  auto note = [&](bool& flag, bool ok, int n) {
    if (!ok && flag && first_failure.empty()) first_failure = "N=" + std::to_string(n);
    flag = flag && ok;
  };
  for (int n = c.n_min; n <= c.n_max; ++n) {
    const MisspecifiedProblem problem{box1_true(n, s2, eps), box1_assumed(n, s2), theta0};
    const double nn = static_cast<double>(n);
    const PseudoTrueSolution pt = pseudo_true(problem, c, stream_for(c, stream_tag, n, 0));
    note(pseudo_ok, pt.converged && std::abs(pt.theta_star(0) - theta0(0)) <= 1e-10, n);
    const InformationSet info = info_analytic(problem, pt.theta_star);
    const BoundReport rep = make_bound_report(info);
    note(order_ok, rep.order_ok, n);
    const double mcrb_cf = (eps + (nn - 1) * s2) / (nn * nn);
    const double nmcrb_cf = eps / ((nn - 1) * eps / s2 + 1);
    note(closed_ok, std::abs(rep.mcrb(0, 0) - mcrb_cf) <= 1e-12, n);

    const TrialEnsemble ex1 = run_trials(problem, first_sample_estimator(), pt.theta_star, info,
                                         c.n_trials, stream_for(c, stream_tag, n, 1));
    const TrialEnsemble emml = run_trials(problem, mml_estimator(problem), pt.theta_star, info,
                                          c.n_trials, stream_for(c, stream_tag, n, 2));
    note(x1_mse_ok, mse_matches(ex1, eps, c.z), n);
    note(mml_mse_ok, mse_matches(emml, rep.mcrb(0, 0), c.z), n);
    note(mml_unbiased, check_unbiasedness(emml, UnbiasednessKind::revised_local, c.z).passed, n);
    note(x1_pointwise, check_unbiasedness(ex1, UnbiasednessKind::pointwise, c.z).passed, n);
    note(x1_score_fails, !check_unbiasedness(ex1, UnbiasednessKind::revised_local, c.z).score_ok, n);

    if (with_naive) {
      note(crb_naive_ok, std::abs(rep.nmcrb(0, 0) - rep.crb(0, 0)) <= 1e-12 &&
                             std::abs(rep.nmcrb(0, 0) - nmcrb_cf) <= 1e-12, n);
      const TrialEnsemble eo = run_trials(problem, oracle_ml_estimator(problem), pt.theta_star,
                                          info, c.n_trials, stream_for(c, stream_tag, n, 3));
      note(oracle_mse_ok, mse_matches(eo, rep.nmcrb(0, 0), c.z), n);
      note(oracle_naive, check_unbiasedness(eo, UnbiasednessKind::naive_local, c.z).passed, n);
      note(x1_above_naive, ex1.empirical_mse(0, 0) >= rep.nmcrb(0, 0) - c.z * ex1.mse_se(0, 0), n);
      main.add_row({static_cast<long long>(n), ex1.empirical_mse(0, 0), emml.empirical_mse(0, 0),
                    eo.empirical_mse(0, 0), rep.mcrb(0, 0), rep.nmcrb(0, 0), rep.crb(0, 0),
                    ex1.mse_se(0, 0), emml.mse_se(0, 0), eo.mse_se(0, 0)});
    } else {
      main.add_row({static_cast<long long>(n), ex1.empirical_mse(0, 0), emml.empirical_mse(0, 0),
                    rep.mcrb(0, 0), rep.crb(0, 0), ex1.mse_se(0, 0), emml.mse_se(0, 0)});
    }
    bias.add_row({static_cast<long long>(n), ex1.regular_bias(0), ex1.regular_bias_se(0),
                  ex1.score_bias(0, 0), ex1.score_bias_se(0, 0), emml.regular_bias(0),
                  emml.regular_bias_se(0), emml.score_bias(0, 0), emml.score_bias_se(0, 0)});
  }
  const std::string where = first_failure.empty() ? "" : " (first failure at " + first_failure + ")";
  checks.add("pseudo-true equals theta0", pseudo_ok, where);
  checks.add("MCRB matches (eps + (N-1) sigma2) / N^2 to 1e-12", closed_ok, where);
  checks.add("MCRB >= naive MCRB", order_ok, where);
  checks.add("MSE(x1) matches eps", x1_mse_ok, where);
  checks.add("MSE(MML) matches MCRB", mml_mse_ok, where);
  checks.add("MML revised local unbiasedness", mml_unbiased, where);
  checks.add("x1 pointwise unbiased", x1_pointwise, where);
  checks.add("x1 fails the score-bias condition", x1_score_fails, where);
  if (with_naive) {
    checks.add("naive MCRB equals oracle CRB and closed form to 1e-12", crb_naive_ok, where);
    checks.add("MSE(oracle ML) matches naive MCRB", oracle_mse_ok, where);
    checks.add("oracle ML naive local unbiasedness", oracle_naive, where);
    checks.add("MSE(x1) >= naive MCRB", x1_above_naive, where);
  }
  r.tables.push_back(std::move(main));
  r.tables.push_back(std::move(bias));
  if (c.gnuplot) {
    std::string gp = "set datafile separator ','\nset key autotitle columnhead\n"
                     "set logscale y\nset xlabel 'N'\nset ylabel 'MSE'\n";
    gp += "plot '" + tag + ".csv' using 1:2 with linespoints title 'MSE x1', \\\n"
          "     '' using 1:3 with linespoints title 'MSE MML', \\\n"
          "     '' using 1:" + std::string(with_naive ? "5" : "4") +
          " with lines title 'MCRB', \\\n"
          "     '' using 1:" + std::string(with_naive ? "7" : "5") + " with lines title 'CRB'\n";
    r.scripts[tag + ".gp"] = gp;
  }
}

void scenario_box3(const ExperimentConfig& c, ScenarioResult& r) {
  Checks checks(r.checks);
  const auto n = static_cast<Index>(c.N);
  const ParameterVector theta0 = scalar(0.0);
  const auto p = white_mean_model(n, c.sigma1_sq);
  const auto f = white_mean_model(n, c.sigma2_sq);
  const MisspecifiedProblem problem{p, f, theta0};
  const PseudoTrueSolution pt = pseudo_true(problem, c, stream_for(c, 3, 0, 0));
  const InformationSet info = info_analytic(problem, pt.theta_star);
  const BoundReport rep = make_bound_report(info);
  const double expected = c.sigma1_sq / static_cast<double>(n);
  const ProportionalScoreFit fit = fit_score_map(
      [&](RngStream& rng) { return p->sample(theta0, rng); },
      [&](const Observation& x) { return p->score(x, theta0); },
      [&](const Observation& x) { return f->score(x, pt.theta_star); },
      static_cast<std::size_t>(c.n_probe), stream_for(c, 3, 0, 1));
  const double w_expected = c.sigma1_sq / c.sigma2_sq;
  const TrialEnsemble emml = run_trials(problem, mml_estimator(problem), pt.theta_star, info,
                                        c.n_trials, stream_for(c, 3, 0, 2));

  checks.add("pseudo-true equals theta0", pt.converged && std::abs(pt.theta_star(0)) <= 1e-10);
  checks.add("MCRB = sigma1_sq / N to 1e-12", std::abs(rep.mcrb(0, 0) - expected) <= 1e-12,
             "mcrb=" + fmt(rep.mcrb(0, 0)));
  checks.add("naive MCRB = MCRB to 1e-12", std::abs(rep.nmcrb(0, 0) - rep.mcrb(0, 0)) <= 1e-12,
             "nmcrb=" + fmt(rep.nmcrb(0, 0)));
  checks.add("assumed score = (sigma1_sq / sigma2_sq) true score",
             std::abs(fit.w_matrix(0, 0) - w_expected) <= 1e-12 && fit.max_residual < 1e-12,
             "w=" + fmt(fit.w_matrix(0, 0)) + " residual=" + fmt(fit.max_residual));
  checks.add("MSE(MML) matches MCRB", mse_matches(emml, rep.mcrb(0, 0), c.z));

  ResultTable t{"box3",
                {"N", "sigma1_sq", "sigma2_sq", "mcrb", "nmcrb", "crb", "w_fit", "w_expected",
                 "max_residual", "mse_mml", "se_mml"},
                {}};
  t.add_row({static_cast<long long>(n), c.sigma1_sq, c.sigma2_sq, rep.mcrb(0, 0), rep.nmcrb(0, 0),
             rep.crb(0, 0), fit.w_matrix(0, 0), w_expected, fit.max_residual,
             emml.empirical_mse(0, 0), emml.mse_se(0, 0)});
  r.tables.push_back(std::move(t));
}

void scenario_box4(const ExperimentConfig& c, ScenarioResult& r) {
  Checks checks(r.checks);
  const auto n = static_cast<Index>(c.N);
  const ParameterVector theta0 = scalar(0.0);
  const MisspecifiedProblem problem{box1_true(n, c.sigma2, c.epsilon), box1_assumed(n, c.sigma2),
                                    theta0};
  const PseudoTrueSolution pt = pseudo_true(problem, c, stream_for(c, 4, 0, 0));
  const InformationSet info = info_analytic(problem, pt.theta_star);
  const double mcrb = compute_mcrb(info)(0, 0);
  ResultTable t{"box4",
                {"g", "g_prime_at_one", "c_gamma0", "c_gamma0_se", "pointwise_max_residual",
                 "w_fit", "w_expected", "fit_residual", "nmcrb_equivalent", "nmcrb_equivalent_se",
                 "mcrb", "normalization_mean", "normalization_se", "pseudo_true_equivalent"},
                {}};
  std::uint64_t gi = 0;
  for (const auto& gname : c.g_functions) {
    ++gi;
    const EquivalentModel model(problem, g_function_by_name(gname), pt.theta_star);
    const double gp = model.g().g_prime_at_one();
    const auto c0 = model.normalizer(pt.theta_star, c.mc_samples, stream_for(c, 4, gi, 1));
    checks.add(gname + ": c(gamma0) = 1 exactly", c0.value == 1.0 && c0.std_error == 0.0);

    RngStream xs = stream_for(c, 4, gi, 2);
    double pw = 0.0;
    for (int i = 0; i < c.n_points; ++i) {
      // Points spread beyond the typical set of p.
      const Observation x = 3.0 * xs.normal_vector(n);
      const double diff =
          model.log_pdf_equivalent(x, pt.theta_star, 1.0) - problem.true_model->log_pdf(x, theta0);
      pw = std::max(pw, std::abs(diff));
    }
    checks.add(gname + ": pointwise equivalence residual is 0", pw == 0.0, "max=" + fmt(pw));

    const ProportionalScoreFit fit = verify_proportional_score(
        model, static_cast<std::size_t>(c.n_probe), stream_for(c, 4, gi, 3));
    const double w_expected = 1.0 / gp;
    checks.add(gname + ": W = (1/g'(1)) I", std::abs(fit.w_matrix(0, 0) - w_expected) <= 1e-12 &&
                                                fit.max_residual < 1e-12,
               "w=" + fmt(fit.w_matrix(0, 0)) + " residual=" + fmt(fit.max_residual));

    const auto nm = naive_mcrb_via_equivalent(model, c.mc_samples, 20, stream_for(c, 4, gi, 4));
    const double nm_se = nm.std_error(0, 0);
    checks.add(gname + ": naive MCRB through the equivalent model matches MCRB",
               std::abs(nm.value(0, 0) - mcrb) <= c.z * nm_se + 1e-12,
               "nmcrb=" + fmt(nm.value(0, 0)) + " mcrb=" + fmt(mcrb) + " se=" + fmt(nm_se));

    // Normalization at a perturbed gamma, with c(gamma) from an independent stream.
    const ParameterVector gamma = pt.theta_star + scalar(0.3);
    const auto cg = model.normalizer(gamma, c.mc_samples, stream_for(c, 4, gi, 5));
    const auto cg2 = model.normalizer(gamma, c.mc_samples, stream_for(c, 4, gi, 6));
    const double norm_mean = cg2.value / cg.value;
    const double norm_se = std::hypot(cg2.std_error, cg.std_error) / cg.value;
    checks.add(gname + ": equivalent density integrates to 1",
               std::abs(norm_mean - 1.0) <= c.z * norm_se,
               "mean=" + fmt(norm_mean) + " se=" + fmt(norm_se));

    const PseudoTrueSolution ept = equivalent_pseudo_true(
        model, pt.theta_star, theta0, c.mc_samples, stream_for(c, 4, gi, 7));
    const double pt_se = std::sqrt(mcrb / static_cast<double>(c.mc_samples));
    checks.add(gname + ": pseudo-true under the equivalent model equals theta*",
               ept.converged && std::abs(ept.theta_star(0) - pt.theta_star(0)) <= c.z * pt_se,
               "theta=" + fmt(ept.theta_star(0)));

    t.add_row({gname, gp, c0.value, c0.std_error, pw, fit.w_matrix(0, 0), w_expected,
               fit.max_residual, nm.value(0, 0), nm_se, mcrb, norm_mean, norm_se,
               ept.theta_star(0)});
  }
  r.tables.push_back(std::move(t));
}

void scenario_doa(const ExperimentConfig& c, ScenarioResult& r) {
  Checks checks(r.checks);
  const Index m = c.M;
  const doa::Complex s(c.s_re, c.s_im);
  const ParameterVector theta0 = doa::doa_parameters(c.phi, s);
  const char* pn[3] = {"phi", "sr", "si"};
  ResultTable t{"doa_sweep", {"rho"}, {}};
  for (const char* p : pn) {
    for (const char* col : {"rmse_mml_", "rmse_oml_", "sqrt_mcrb_", "sqrt_crb_", "rmse_se_mml_",
                            "rmse_se_oml_"}) {
      t.columns.push_back(std::string(col) + p);
    }
  }
  for (const char* col : {"score_bias_mml_phi", "score_bias_mml_phi_se", "score_bias_oml_phi",
                          "score_bias_oml_phi_se", "mml_revised_max_z", "oml_revised_max_z",
                          "excluded_mml", "excluded_oml"}) {
    t.columns.push_back(col);
  }
  bool crossing = false;
  std::uint64_t idx = 0;
  for (double rho : c.rho) {
    ++idx;
    const std::string at = "rho=" + fmt(rho);
    const MisspecifiedProblem problem{doa::doa_true(m, c.noise_var, rho),
                                      doa::doa_assumed(m, c.noise_var), theta0};
    const PseudoTrueSolution pt = pseudo_true(problem, c, stream_for(c, 5, idx, 0));
    if (!pt.converged || (pt.theta_star - theta0).norm() > 1e-8) {
      checks.add(at + ": pseudo-true equals theta0", false);
    }
    const InformationSet info = info_analytic(problem, pt.theta_star);
    const BoundReport rep = make_bound_report(info);
    if (rho == 0.0) {
      const double scale = std::max(1.0, info.A.cwiseAbs().maxCoeff());
      checks.add(at + ": MCRB = CRB", (rep.mcrb - rep.crb).cwiseAbs().maxCoeff() < 1e-10,
                 "max diff=" + fmt((rep.mcrb - rep.crb).cwiseAbs().maxCoeff()));
      checks.add(at + ": A = B", (info.A - info.B).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    }
    const TrialEnsemble em = run_trials(problem, mml_estimator(problem), pt.theta_star, info,
                                        c.n_trials, stream_for(c, 5, idx, 1));
    const TrialEnsemble eo = run_trials(problem, oracle_ml_estimator(problem), pt.theta_star,
                                        info, c.n_trials, stream_for(c, 5, idx, 2));
    const auto um = check_unbiasedness(em, UnbiasednessKind::revised_local, c.z);
    const auto uo = check_unbiasedness(eo, UnbiasednessKind::revised_local, c.z);
    checks.add(at + ": MML revised local unbiasedness", um.passed, "max z=" + fmt(um.max_z));
    const double rm = std::sqrt(em.empirical_mse(0, 0));
    const double rm_se = rmse_se(em.empirical_mse(0, 0), em.mse_se(0, 0));
    checks.add(at + ": RMSE(MML, phi) >= sqrt(MCRB) - 3 se",
               rm >= std::sqrt(rep.mcrb(0, 0)) - 3.0 * rm_se,
               "rmse=" + fmt(rm) + " bound=" + fmt(std::sqrt(rep.mcrb(0, 0))));
    if (rho >= 0.3 - 1e-12) {
      checks.add(at + ": oracle ML violates the score-bias condition", !uo.score_ok,
                 "max z=" + fmt(uo.max_z));
    }
    if (eo.empirical_mse(0, 0) < rep.mcrb(0, 0)) crossing = true;

    std::vector<Cell> row{rho};
    for (Index k = 0; k < 3; ++k) {
      row.push_back(std::sqrt(em.empirical_mse(k, k)));
      row.push_back(std::sqrt(eo.empirical_mse(k, k)));
      row.push_back(std::sqrt(rep.mcrb(k, k)));
      row.push_back(std::sqrt(rep.crb(k, k)));
      row.push_back(rmse_se(em.empirical_mse(k, k), em.mse_se(k, k)));
      row.push_back(rmse_se(eo.empirical_mse(k, k), eo.mse_se(k, k)));
    }
    row.push_back(em.score_bias(0, 0));
    row.push_back(em.score_bias_se(0, 0));
    row.push_back(eo.score_bias(0, 0));
    row.push_back(eo.score_bias_se(0, 0));
    row.push_back(um.max_z);
    row.push_back(uo.max_z);
    row.push_back(static_cast<long long>(em.n_excluded));
    row.push_back(static_cast<long long>(eo.n_excluded));
    t.add_row(std::move(row));
    checks.add(at + ": trial ensembles valid", em.valid && eo.valid);
  }
  checks.add("oracle ML phi-MSE falls below MCRB for some rho", crossing);
  r.tables.push_back(std::move(t));
  if (c.gnuplot) {
    r.scripts["doa_sweep.gp"] =
        "set datafile separator ','\nset key autotitle columnhead\nset logscale y\n"
        "set xlabel 'rho'\nset ylabel 'RMSE phi'\n"
        "plot 'doa_sweep.csv' using 1:2 with linespoints title 'MML', \\\n"
        "     '' using 1:3 with linespoints title 'oracle ML', \\\n"
        "     '' using 1:4 with lines title 'sqrt MCRB', \\\n"
        "     '' using 1:5 with lines title 'sqrt CRB'\n";
  }
}

void scenario_random_order(const ExperimentConfig& c, ScenarioResult& r) {
  Checks checks(r.checks);
  ResultTable t{"random_order_check", {"index", "N", "mcrb", "nmcrb", "min_gap_eig", "order_ok"}, {}};
  int failures = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < c.n_problems; ++k) {
    RngStream rng = stream_for(c, 6, static_cast<std::uint64_t>(k), 0);
    const int span = c.random_n_max - c.random_n_min + 1;
    const auto n = static_cast<Index>(c.random_n_min +
                                      std::min(span - 1, static_cast<int>(rng.uniform() * span)));
    const MatrixXd l = rng.normal_vector(n * n).reshaped(n, n);
    const SymMatrix sigma = symmetrize((l * l.transpose() + 0.1 * MatrixXd::Identity(n, n)).eval());
    const double var = sigma.trace() / static_cast<double>(n);
    const MisspecifiedProblem problem{scalar_mean_model(sigma), white_mean_model(n, var),
                                      scalar(rng.normal())};
    const PseudoTrueSolution pt = solve_pseudo_true(problem, problem.theta0, c.mc_samples, rng);
    const BoundReport rep = make_bound_report(info_analytic(problem, pt.theta_star), 1e-8);
    if (!rep.order_ok) ++failures;
    worst = std::min(worst, rep.min_gap_eig);
    t.add_row({static_cast<long long>(k), static_cast<long long>(n), rep.mcrb(0, 0),
               rep.nmcrb(0, 0), rep.min_gap_eig, static_cast<long long>(rep.order_ok)});
  }
  checks.add("MCRB >= naive MCRB on every random problem", failures == 0,
             std::to_string(failures) + " failures, min gap " + fmt(worst));
  r.tables.push_back(std::move(t));
}

}  // namespace

ScenarioResult run_scenario(const ExperimentConfig& config) {
  config.validate();
  const unsigned saved = worker_count();
  if (config.workers > 0) set_worker_count(config.workers);
  ScenarioResult r;
  try {
    if (config.scenario == "box1") scenario_box1(config, r, false);
    else if (config.scenario == "box2") scenario_box1(config, r, true);
    else if (config.scenario == "box3") scenario_box3(config, r);
    else if (config.scenario == "box4") scenario_box4(config, r);
    else if (config.scenario == "doa_sweep") scenario_doa(config, r);
    else if (config.scenario == "random_order_check") scenario_random_order(config, r);
    else throw UsageError("unknown scenario '" + config.scenario + "'");
  } catch (...) {
    set_worker_count(saved);
    throw;
  }
  set_worker_count(saved);
  return r;
}

}  // namespace misspec::experiments
