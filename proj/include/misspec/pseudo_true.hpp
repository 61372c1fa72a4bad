#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "misspec/models.hpp"

namespace misspec {

struct InformationSet;

/// Value, gradient and Hessian of theta -> E_p[log f(x; theta)].
struct ObjectiveValue {
  double value = 0.0;
  VectorXd gradient;
  SymMatrix hessian;
};

using ExpectedLogLikelihood = std::function<ObjectiveValue(const ParameterVector&)>;

struct ScanBox {
  ParameterVector lower;
  ParameterVector upper;
};

struct PseudoTrueOptions {
  int max_iterations = 200;
  double gradient_tol_analytic = 1e-10;
  double gradient_tol_sample = 1e-6;
  /// Optional coarse grid pre-scan over a box.
  std::optional<ScanBox> scan;
  int scan_points = 32;
};

struct PseudoTrueSolution {
  ParameterVector theta_star;
  double objective_value = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool analytic = false;
  /// The grid pre-scan led to a different local maximizer than theta_init.
  bool scan_disagreement = false;
};

/// True when both models are Gaussian families with fixed covariance, in
/// which case E_p[log f] and its derivatives are evaluated exactly.
bool has_analytic_expectation(const MisspecifiedProblem& problem);

/// Exact objective at the problem's theta0. Throws CapabilityError for
/// unsupported pairs.
ExpectedLogLikelihood analytic_objective(const MisspecifiedProblem& problem);

/// Weighted sample average (1 / sum w) sum_s w_s log f(x_s; theta).
/// Empty weights mean uniform weights.
ExpectedLogLikelihood sample_average_objective(ModelPtr assumed, std::vector<Observation> samples,
                                               std::vector<double> weights = {});

/// Damped Newton ascent on obj, falling back to backtracked gradient ascent
/// where the Hessian is not negative definite. Throws ConditioningError if the
/// Hessian is numerically singular at an iterate.
PseudoTrueSolution maximize_objective(const ExpectedLogLikelihood& obj, const DensityModel& assumed,
                                      const ParameterVector& theta_init, double gradient_tol,
                                      int max_iterations);

/// Pseudo-true parameter argmax_theta E_p[log f(x; theta)] at problem.theta0.
/// Uses the exact expectation when available, otherwise the average over
/// mc_samples draws from p(.; theta0) taken from rng.
PseudoTrueSolution solve_pseudo_true(const MisspecifiedProblem& problem,
                                     const ParameterVector& theta_init, std::size_t mc_samples,
                                     RngStream rng, const PseudoTrueOptions& options = {});

/// Sample-average path regardless of analytic availability.
PseudoTrueSolution solve_pseudo_true_sampled(const MisspecifiedProblem& problem,
                                             const ParameterVector& theta_init,
                                             std::size_t mc_samples, RngStream rng,
                                             const PseudoTrueOptions& options = {});

/// d theta* / d theta = A^{-1} B_pf.
MatrixXd pseudo_true_jacobian(const MisspecifiedProblem& problem, const ParameterVector& theta_star,
                              const InformationSet& info);

/// Central finite difference of the pseudo-true map in theta0. Every
/// perturbed solve reuses the same random stream (common random numbers).
MatrixXd pseudo_true_jacobian_fd(const MisspecifiedProblem& problem,
                                 const ParameterVector& theta_init, std::size_t mc_samples,
                                 const RngStream& rng, double step, bool force_sampled = false,
                                 const PseudoTrueOptions& options = {});

}  // namespace misspec
