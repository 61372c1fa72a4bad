#include "misspec/pseudo_true.hpp"

#include "misspec/information.hpp"

namespace misspec {

namespace {

const GaussianFamily* as_gaussian(const ModelPtr& m) {
  return dynamic_cast<const GaussianFamily*>(m.get());
}

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;
constexpr double kSingularRatio = 1e-12;

struct Direction {
  VectorXd step;
  bool newton = false;
};

Direction ascent_direction(const ObjectiveValue& ev) {
  const auto eig = symmetric_eigenvalues(ev.hessian);
  const double largest = eig.cwiseAbs().maxCoeff();
  if (eig.maxCoeff() <= 0) {
    if (largest == 0 || eig.cwiseAbs().minCoeff() < kSingularRatio * largest) {
      throw ConditioningError("pseudo-true solver: Hessian is numerically singular");
    }
    if (eig.maxCoeff() < 0) {
      const MatrixXd neg = -ev.hessian;
      Eigen::LLT<MatrixXd> llt(symmetrize(neg));
      if (llt.info() == Eigen::Success) return {llt.solve(ev.gradient), true};
    }
  }
  // Indefinite curvature: gradient step scaled by the curvature magnitude.
  return {ev.gradient / std::max(largest, 1e-300), false};
}

}  // namespace

bool has_analytic_expectation(const MisspecifiedProblem& problem) {
  return as_gaussian(problem.true_model) != nullptr && as_gaussian(problem.assumed_model) != nullptr;
}

ExpectedLogLikelihood analytic_objective(const MisspecifiedProblem& problem) {
  problem.validate();
  const GaussianFamily* p = as_gaussian(problem.true_model);
  const GaussianFamily* f = as_gaussian(problem.assumed_model);
  if (p == nullptr || f == nullptr) {
    throw CapabilityError("analytic_objective: both models must be Gaussian families");
  }
  const VectorXd mu_p = p->mean(problem.theta0);
  // E_p[(x - mu)^T P (x - mu)] = (mu_p - mu)^T P (mu_p - mu) + tr(P C_p)
  const double trace_term = 0.5 * (f->precision() * p->covariance()).trace();
  ModelPtr keep = problem.assumed_model;
  return [keep, f, mu_p, trace_term](const ParameterVector& theta) {
    ObjectiveValue out;
    out.value = f->log_pdf(mu_p, theta) - trace_term;
    out.gradient = f->score(mu_p, theta);
    out.hessian = f->hessian(mu_p, theta);
    return out;
  };
}

ExpectedLogLikelihood sample_average_objective(ModelPtr assumed, std::vector<Observation> samples,
                                               std::vector<double> weights) {
  if (!assumed) throw InvalidInput("sample_average_objective: missing model");
  if (samples.empty()) throw InvalidInput("sample_average_objective: no samples");
  if (!weights.empty() && weights.size() != samples.size()) {
    throw InvalidInput("sample_average_objective: weight count does not match sample count");
  }
  auto data = std::make_shared<const std::vector<Observation>>(std::move(samples));
  auto w = std::make_shared<const std::vector<double>>(std::move(weights));
  return [assumed, data, w](const ParameterVector& theta) {
    struct Partial {
      long double value = 0, weight = 0;
      VectorXd grad;
      MatrixXd hess;
    };
    const Index k = theta.size();
    auto parts = run_batched<Partial>(data->size(), kMonteCarloBatch,
                                      [&](std::size_t, std::size_t begin, std::size_t end) {
      Partial part;
      part.grad = VectorXd::Zero(k);
      part.hess = MatrixXd::Zero(k, k);
      for (std::size_t i = begin; i < end; ++i) {
        const double wi = w->empty() ? 1.0 : (*w)[i];
        const Observation& x = (*data)[i];
        part.value += wi * assumed->log_pdf(x, theta);
        part.weight += wi;
        part.grad += wi * assumed->score(x, theta);
        part.hess += wi * assumed->hessian(x, theta);
      }
      return part;
    });
    long double value = 0, weight = 0;
    VectorXd grad = VectorXd::Zero(k);
    MatrixXd hess = MatrixXd::Zero(k, k);
    for (const auto& part : parts) {
      value += part.value;
      weight += part.weight;
      grad += part.grad;
      hess += part.hess;
    }
    if (!(weight > 0)) throw InvalidInput("sample_average_objective: weights must sum to > 0");
    const double wsum = static_cast<double>(weight);
    return ObjectiveValue{static_cast<double>(value / weight), grad / wsum,
                          symmetrize((hess / wsum).eval())};
  };
}

PseudoTrueSolution maximize_objective(const ExpectedLogLikelihood& obj, const DensityModel& assumed,
                                      const ParameterVector& theta_init, double gradient_tol,
                                      int max_iterations) {
  if (theta_init.size() != assumed.param_dim() || !assumed.in_domain(theta_init)) {
    throw InvalidInput("pseudo-true solver: invalid initial point");
  }
  if (!(gradient_tol > 0) || max_iterations < 1) {
    throw InvalidInput("pseudo-true solver: invalid tolerance or iteration cap");
  }
  PseudoTrueSolution sol;
  sol.theta_star = theta_init;
  ObjectiveValue ev = obj(sol.theta_star);
  for (int it = 0;; ++it) {
    sol.iterations = it;
    sol.gradient_norm = ev.gradient.norm();
    sol.objective_value = ev.value;
    if (sol.gradient_norm <= gradient_tol) {
      sol.converged = true;
      break;
    }
    if (it == max_iterations) break;

    const Direction dir = ascent_direction(ev);
    const double slope = ev.gradient.dot(dir.step);
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < kMaxBacktracks; ++k, t *= 0.5) {
      const ParameterVector cand = sol.theta_star + t * dir.step;
      if (!assumed.in_domain(cand)) continue;
      ObjectiveValue trial = obj(cand);
      if (std::isfinite(trial.value) && trial.value >= ev.value + kArmijo * t * slope) {
        sol.theta_star = cand;
        ev = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent possible at working precision.
      break;
    }
  }
  return sol;
}

namespace {

std::vector<ParameterVector> scan_grid(const ScanBox& box, int points) {
  const Index k = box.lower.size();
  if (box.upper.size() != k || points < 2) throw InvalidInput("pseudo-true scan: invalid box");
  std::size_t total = 1;
  for (Index i = 0; i < k; ++i) total *= static_cast<std::size_t>(points);
  std::vector<ParameterVector> grid;
  grid.reserve(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    ParameterVector p(k);
    std::size_t rem = flat;
    for (Index i = 0; i < k; ++i) {
      const double frac = static_cast<double>(rem % points) / (points - 1);
      rem /= points;
      p(i) = box.lower(i) + frac * (box.upper(i) - box.lower(i));
    }
    grid.push_back(std::move(p));
  }
  return grid;
}

PseudoTrueSolution solve_with(const ExpectedLogLikelihood& obj, const MisspecifiedProblem& problem,
                              const ParameterVector& theta_init, double tol,
                              const PseudoTrueOptions& options) {
  const DensityModel& f = *problem.assumed_model;
  PseudoTrueSolution sol = maximize_objective(obj, f, theta_init, tol, options.max_iterations);
  if (!options.scan) return sol;

  const auto grid = scan_grid(*options.scan, options.scan_points);
  auto best = run_batched<std::pair<double, std::size_t>>(
      grid.size(), 256, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::pair<double, std::size_t> local{-std::numeric_limits<double>::infinity(), begin};
        for (std::size_t i = begin; i < end; ++i) {
          if (!f.in_domain(grid[i])) continue;
          const double v = obj(grid[i]).value;
          if (v > local.first) local = {v, i};
        }
        return local;
      });
  std::pair<double, std::size_t> top{-std::numeric_limits<double>::infinity(), 0};
  for (const auto& b : best) {
    if (b.first > top.first) top = b;
  }
  if (!std::isfinite(top.first)) return sol;
  PseudoTrueSolution alt;
  try {
    alt = maximize_objective(obj, f, grid[top.second], tol, options.max_iterations);
  } catch (const ConditioningError&) {
    return sol;
  }
  const double scale = std::max(1.0, sol.theta_star.norm());
  if ((alt.theta_star - sol.theta_star).norm() > 1e-6 * scale) {
    const bool alt_better = alt.objective_value > sol.objective_value;
    PseudoTrueSolution chosen = alt_better ? alt : sol;
    chosen.scan_disagreement = true;
    return chosen;
  }
  return sol;
}

}  // namespace

PseudoTrueSolution solve_pseudo_true(const MisspecifiedProblem& problem,
                                     const ParameterVector& theta_init, std::size_t mc_samples,
                                     RngStream rng, const PseudoTrueOptions& options) {
  problem.validate();
  if (has_analytic_expectation(problem)) {
    PseudoTrueSolution sol = solve_with(analytic_objective(problem), problem, theta_init,
                                        options.gradient_tol_analytic, options);
    sol.analytic = true;
    return sol;
  }
  return solve_pseudo_true_sampled(problem, theta_init, mc_samples, std::move(rng), options);
}

PseudoTrueSolution solve_pseudo_true_sampled(const MisspecifiedProblem& problem,
                                             const ParameterVector& theta_init,
                                             std::size_t mc_samples, RngStream rng,
                                             const PseudoTrueOptions& options) {
  problem.validate();
  if (mc_samples < 1) throw InvalidInput("solve_pseudo_true: mc_samples must be >= 1");
  ExpectedLogLikelihood obj;
  if (const auto* gf = dynamic_cast<const GaussianFamily*>(problem.assumed_model.get())) {
    // Gaussian assumed family: the sample average depends on theta only
    // through the sample mean, so stream the draws instead of storing them.
    const Index n = gf->obs_dim();
    Eigen::Matrix<long double, Eigen::Dynamic, 1> sum = Eigen::Matrix<long double, Eigen::Dynamic, 1>::Zero(n);
    long double quad = 0;
    const auto* gp = dynamic_cast<const GaussianFamily*>(problem.true_model.get());
    const VectorXd mu_p = gp ? gp->mean(problem.theta0) : VectorXd();
    for (std::size_t i = 0; i < mc_samples; ++i) {
      // Same draws as true_model->sample, without recomputing the mean.
      const Observation x = gp ? gp->sampler().draw(mu_p, rng) : problem.true_model->sample(problem.theta0, rng);
      sum += x.cast<long double>();
      quad += x.dot(gf->precision() * x);
    }
    const double count = static_cast<double>(mc_samples);
    const VectorXd mean = (sum / static_cast<long double>(count)).cast<double>();
    const double trace_term = 0.5 * (static_cast<double>(quad) / count - mean.dot(gf->precision() * mean));
    ModelPtr keep = problem.assumed_model;
    obj = [keep, gf, mean, trace_term](const ParameterVector& theta) {
      return ObjectiveValue{gf->log_pdf(mean, theta) - trace_term, gf->score(mean, theta),
                            gf->hessian(mean, theta)};
    };
  } else {
    obj = sample_average_objective(problem.assumed_model,
                                   draw_samples(*problem.true_model, problem.theta0, mc_samples, rng));
  }
  PseudoTrueSolution sol = solve_with(obj, problem, theta_init, options.gradient_tol_sample, options);
  sol.analytic = false;
  return sol;
}

MatrixXd pseudo_true_jacobian(const MisspecifiedProblem& problem, const ParameterVector& theta_star,
                              const InformationSet& info) {
  if (info.A.rows() != problem.assumed_model->param_dim() ||
      info.B_pf.cols() != problem.true_model->param_dim() || theta_star.size() != info.A.rows()) {
    throw InvalidInput("pseudo_true_jacobian: information set does not match the problem");
  }
  return spd_solve(info.A, info.B_pf);
}

MatrixXd pseudo_true_jacobian_fd(const MisspecifiedProblem& problem,
                                 const ParameterVector& theta_init, std::size_t mc_samples,
                                 const RngStream& rng, double step, bool force_sampled,
                                 const PseudoTrueOptions& options) {
  problem.validate();
  if (!(step > 0)) throw InvalidInput("pseudo_true_jacobian_fd: step must be positive");
  auto solve = [&](const ParameterVector& vartheta) {
    const MisspecifiedProblem q = problem.at(vartheta);
    const PseudoTrueSolution s = force_sampled
                                     ? solve_pseudo_true_sampled(q, theta_init, mc_samples, rng, options)
                                     : solve_pseudo_true(q, theta_init, mc_samples, rng, options);
    if (!s.converged) throw EvaluationError("pseudo_true_jacobian_fd: solver did not converge");
    return s.theta_star;
  };
  return fd_jacobian<double>(solve, problem.theta0, step);
}

}  // namespace misspec
