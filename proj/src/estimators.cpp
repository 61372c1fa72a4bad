#include "misspec/estimators.hpp"

#include <numbers>

#include "misspec/doa.hpp"

namespace misspec {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kGridPoints = 512;
constexpr int kNewtonSteps = 20;
constexpr double kDerivTol = 1e-10;
constexpr std::size_t kTrialBatch = 1024;

Estimator linear_gls(const std::string& name, const LinearGaussianModel& model,
                     EstimatorTarget target) {
  const MatrixXd& h = model.design();
  const MatrixXd ht_p = h.transpose() * model.precision();
  const MatrixXd gain = spd_solve((ht_p * h).eval(), ht_p);
  return {name, target, h.cols(), [gain](const Observation& x) { return Estimate{gain * x, true}; }};
}

using doa::Complex;
using Eigen::VectorXcd;

/// F(phi) = |u|^2 / v with u = a^H W x, v = a^H W a, and its first two derivatives.
struct Concentrated {
  double f, df, d2f;
  Complex u;
  double v;
};

Concentrated concentrated(const Eigen::MatrixXcd& w, const VectorXcd& x, Index m, double phi,
                          bool derivatives) {
  const VectorXcd a = doa::steering(m, phi);
  const VectorXcd wa = w * a;
  Concentrated c{};
  c.u = wa.dot(x);  // a^H W x since W is Hermitian
  c.v = a.dot(wa).real();
  const double n = std::norm(c.u);
  c.f = n / c.v;
  if (!derivatives) return c;
  const VectorXcd da = doa::steering_derivative(m, phi);
  const VectorXcd dda = doa::steering_second_derivative(m, phi);
  const VectorXcd wx = w * x;
  const Complex du = da.dot(wx);
  const Complex ddu = dda.dot(wx);
  const double dv = 2.0 * da.dot(wa).real();
  const double ddv = 2.0 * dda.dot(wa).real() + 2.0 * da.dot(w * da).real();
  const double dn = 2.0 * (std::conj(c.u) * du).real();
  const double ddn = 2.0 * (std::conj(c.u) * ddu).real() + 2.0 * std::norm(du);
  const double num = dn * c.v - n * dv;
  c.df = num / (c.v * c.v);
  c.d2f = (ddn * c.v - n * ddv) / (c.v * c.v) - 2.0 * dv * num / (c.v * c.v * c.v);
  return c;
}

/// Grid rows (W a_k)^H and normalizers a_k^H W a_k, fixed per noise model.
struct ConcentratedGrid {
  Eigen::MatrixXcd w;
  Index m = 0;
  Eigen::MatrixXcd rows;
  VectorXd v;

  ConcentratedGrid(Eigen::MatrixXcd weight, Index sensors)
      : w(std::move(weight)), m(sensors), rows(kGridPoints, sensors), v(kGridPoints) {
    for (int k = 0; k < kGridPoints; ++k) {
      const VectorXcd a = doa::steering(m, grid_phi(k));
      const VectorXcd wa = w * a;
      rows.row(k) = wa.adjoint();
      v(k) = a.dot(wa).real();
    }
  }

  static double grid_phi(int k) { return -kPi / 2 + (k + 0.5) * kPi / kGridPoints; }
};

Estimate concentrated_ml(const ConcentratedGrid& grid, const Observation& x_real) {
  const VectorXcd x = doa::unstack(x_real);
  const Eigen::MatrixXcd& w = grid.w;
  const Index m = grid.m;
  const double delta = kPi / kGridPoints;
  const VectorXd f = (grid.rows * x).cwiseAbs2().cwiseQuotient(grid.v);
  Index best = 0;
  f.maxCoeff(&best);
  const double limit = kPi / 2 - 1e-9;
  double lo = std::max(-limit, -kPi / 2 + (best - 0.5) * delta);
  double hi = std::min(limit, -kPi / 2 + (best + 1.5) * delta);
  double phi = ConcentratedGrid::grid_phi(static_cast<int>(best));
  bool ok = false;
  Concentrated c = concentrated(w, x, m, phi, true);
  for (int it = 0; it < kNewtonSteps; ++it) {
    if (std::abs(c.df) <= kDerivTol * std::max(1.0, c.f)) {
      ok = true;
      break;
    }
    // Keep the maximizer bracketed: F' > 0 to the left of it, < 0 to the right.
    if (c.df > 0) lo = phi; else hi = phi;
    double next = (c.d2f < 0) ? phi - c.df / c.d2f : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == phi) {
      ok = std::abs(c.df) <= 1e3 * kDerivTol * std::max(1.0, c.f);
      break;
    }
    phi = next;
    c = concentrated(w, x, m, phi, true);
  }
  if (!ok) ok = std::abs(c.df) <= kDerivTol * std::max(1.0, c.f);
  const Complex s = c.u / c.v;
  return {doa::doa_parameters(phi, s), ok};
}

}  // namespace

Estimate doa_concentrated_ml(const doa::DoaModel& model, const Observation& x) {
  if (x.size() != model.obs_dim()) throw InvalidInput("doa_concentrated_ml: wrong observation size");
  return concentrated_ml(ConcentratedGrid(model.noise_precision(), model.sensors()), x);
}

Estimator mml_estimator(const MisspecifiedProblem& problem) {
  problem.validate();
  const ModelPtr f = problem.assumed_model;
  if (const auto* lin = dynamic_cast<const LinearGaussianModel*>(f.get())) {
    return linear_gls("mml", *lin, EstimatorTarget::pseudo_true);
  }
  if (const auto* d = dynamic_cast<const doa::DoaModel*>(f.get())) {
    auto grid = std::make_shared<const ConcentratedGrid>(d->noise_precision(), d->sensors());
    return {"mml", EstimatorTarget::pseudo_true, 3, [f, d, grid](const Observation& x) {
              if (x.size() != d->obs_dim()) throw InvalidInput("mml_estimator: wrong observation size");
              return concentrated_ml(*grid, x);
            }};
  }
  throw CapabilityError("mml_estimator: no maximizer for model " + f->name());
}

Estimator oracle_ml_estimator(const MisspecifiedProblem& problem) {
  problem.validate();
  const ModelPtr p = problem.true_model;
  if (const auto* lin = dynamic_cast<const LinearGaussianModel*>(p.get())) {
    return linear_gls("oracle_ml", *lin, EstimatorTarget::true_param);
  }
  if (const auto* d = dynamic_cast<const doa::DoaModel*>(p.get())) {
    auto grid = std::make_shared<const ConcentratedGrid>(d->noise_precision(), d->sensors());
    return {"oracle_ml", EstimatorTarget::true_param, 3, [p, d, grid](const Observation& x) {
              if (x.size() != d->obs_dim()) throw InvalidInput("oracle_ml_estimator: wrong observation size");
              return concentrated_ml(*grid, x);
            }};
  }
  throw CapabilityError("oracle_ml_estimator: no maximizer for model " + p->name());
}

Estimator first_sample_estimator() {
  return {"x1", EstimatorTarget::pseudo_true, 1, [](const Observation& x) {
            if (x.size() < 1) throw InvalidInput("first_sample_estimator: empty observation");
            return Estimate{x.head(1), true};
          }};
}

Estimator map_estimator(std::string name, EstimatorMap map, Index output_dim,
                        EstimatorTarget target) {
  if (!map) throw InvalidInput("map_estimator: empty map");
  return {std::move(name), target, output_dim,
          [map = std::move(map)](const Observation& x) { return Estimate{map(x), true}; }};
}

namespace {

struct TrialBatch {
  MomentAccumulator acc;
  std::vector<ParameterVector> estimates;
  std::size_t excluded = 0;
  double max_score = 0.0;
};

MatrixXd block(const VectorXd& v, Index offset, Index rows, Index cols) {
  return Eigen::Map<const MatrixXd>(v.data() + offset, rows, cols);
}

}  // namespace

TrialEnsemble run_trials(const MisspecifiedProblem& problem, const Estimator& estimator,
                         const ParameterVector& theta_star, const InformationSet& info,
                         std::size_t n_trials, const RngStream& rng) {
  problem.validate();
  if (n_trials < 2) throw InvalidInput("run_trials: need at least two trials");
  const DensityModel& f = *problem.assumed_model;
  const DensityModel& p = *problem.true_model;
  const Index n2 = f.param_dim();
  const Index n1 = p.param_dim();
  if (estimator.output_dim != n2 || theta_star.size() != n2) {
    throw InvalidInput("run_trials: estimator output does not match the assumed parameter");
  }
  if (info.A.rows() != n2 || info.B_pf.cols() != n1) {
    throw InvalidInput("run_trials: information set does not match the problem");
  }
  if (estimator.target == EstimatorTarget::true_param) {
    if (n1 != n2 || (theta_star - problem.theta0).norm() > 1e-8 * std::max(1.0, problem.theta0.norm())) {
      throw InvalidInput("run_trials: estimator " + estimator.name +
                         " targets the true parameter, but theta* differs from theta0");
    }
  }
  const MatrixXd ref_b = spd_solve(info.A, info.B);
  const MatrixXd ref_pf = spd_solve(info.A, info.B_pf);

  const Index o_mse = n2, o_sb = n2 + n2 * n2, o_tb = n2 + 2 * n2 * n2;
  const Index total = o_tb + n2 * n1;

  auto parts = run_batched<TrialBatch>(
      n_trials, kTrialBatch, [&](std::size_t b, std::size_t begin, std::size_t end) {
        RngStream local = rng.substream(b);
        TrialBatch out{MomentAccumulator(total), {}, 0, 0.0};
        out.estimates.reserve(end - begin);
        VectorXd row(total);
        for (std::size_t i = begin; i < end; ++i) {
          const Observation x = p.sample(problem.theta0, local);
          const Estimate est = estimator(x);
          if (!est.ok || est.value.size() != n2 || !est.value.allFinite()) {
            ++out.excluded;
            continue;
          }
          const VectorXd e = est.value - theta_star;
          const VectorXd sf = f.score(x, theta_star);
          const VectorXd sp = p.score(x, problem.theta0);
          row.head(n2) = e;
          Eigen::Map<MatrixXd>(row.data() + o_mse, n2, n2) = e * e.transpose();
          Eigen::Map<MatrixXd>(row.data() + o_sb, n2, n2) = e * sf.transpose();
          Eigen::Map<MatrixXd>(row.data() + o_tb, n2, n1) = e * sp.transpose();
          out.acc.add(row);
          if (f.in_domain(est.value)) {
            out.max_score = std::max(out.max_score, f.score(x, est.value).norm());
          } else {
            out.max_score = std::numeric_limits<double>::infinity();
          }
          out.estimates.push_back(est.value);
        }
        return out;
      });

  TrialEnsemble ens;
  ens.estimator = estimator.name;
  ens.n_trials = n_trials;
  ens.seed = rng.seed();
  MomentAccumulator acc(total);
  for (auto& part : parts) {
    acc.merge(part.acc);
    ens.n_excluded += part.excluded;
    ens.max_score_norm = std::max(ens.max_score_norm, part.max_score);
    for (auto& e : part.estimates) ens.estimates.push_back(std::move(e));
  }
  ens.valid = ens.n_excluded * 100 <= n_trials && acc.count() >= 2;
  const VectorXd mean = acc.mean();
  const VectorXd se = acc.std_error();
  ens.regular_bias = mean.head(n2);
  ens.regular_bias_se = se.head(n2);
  ens.empirical_mse = symmetrize(block(mean, o_mse, n2, n2));
  ens.mse_se = block(se, o_mse, n2, n2);
  ens.score_bias = block(mean, o_sb, n2, n2) - ref_b;
  ens.score_bias_se = block(se, o_sb, n2, n2);
  ens.true_score_bias = block(mean, o_tb, n2, n1) - ref_pf;
  ens.true_score_bias_se = block(se, o_tb, n2, n1);
  return ens;
}

bool within_z(const MatrixXd& residual, const MatrixXd& se, double z, double* max_z) {
  if (residual.rows() != se.rows() || residual.cols() != se.cols()) {
    throw InvalidInput("within_z: shape mismatch");
  }
  bool ok = true;
  double worst = 0.0;
  for (Index j = 0; j < residual.cols(); ++j) {
    for (Index i = 0; i < residual.rows(); ++i) {
      const double r = std::abs(residual(i, j));
      const double floor = 1e-12 * std::max(1.0, r);
      if (!(r <= z * se(i, j) + floor)) ok = false;
      if (se(i, j) > 0) worst = std::max(worst, r / se(i, j));
      else if (r > floor) worst = std::numeric_limits<double>::infinity();
    }
  }
  if (max_z) *max_z = worst;
  return ok;
}

UnbiasednessResult check_unbiasedness(const TrialEnsemble& ensemble, UnbiasednessKind which,
                                      double z_threshold) {
  UnbiasednessResult r;
  double zb = 0, zs = 0;
  r.bias_ok = within_z(ensemble.regular_bias, ensemble.regular_bias_se, z_threshold, &zb);
  switch (which) {
    case UnbiasednessKind::pointwise:
      r.score_ok = true;
      break;
    case UnbiasednessKind::naive_local:
      r.score_ok = within_z(ensemble.true_score_bias, ensemble.true_score_bias_se, z_threshold, &zs);
      break;
    case UnbiasednessKind::revised_local:
      r.score_ok = within_z(ensemble.score_bias, ensemble.score_bias_se, z_threshold, &zs);
      break;
  }
  r.max_z = std::max(zb, zs);
  r.passed = ensemble.valid && r.bias_ok && r.score_ok;
  return r;
}

EfficiencyResult check_efficiency(const TrialEnsemble& ensemble, const BoundReport& report,
                                  double z_threshold, double score_tol) {
  EfficiencyResult r;
  if (report.mcrb.rows() != ensemble.empirical_mse.rows()) {
    throw InvalidInput("check_efficiency: bound and ensemble dimensions differ");
  }
  const VectorXd gap = ensemble.empirical_mse.diagonal() - report.mcrb.diagonal();
  const bool mse_ok = within_z(gap, ensemble.mse_se.diagonal(), z_threshold);
  const bool unbiased =
      check_unbiasedness(ensemble, UnbiasednessKind::revised_local, z_threshold).passed;
  r.attains_mcrb = mse_ok && unbiased;
  r.is_mml_consistent = ensemble.valid && ensemble.max_score_norm <= score_tol;
  return r;
}

}  // namespace misspec
