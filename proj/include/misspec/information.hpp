#pragma once

#include <functional>
#include <optional>

#include "misspec/models.hpp"

namespace misspec {

enum class InformationMethod { analytic, monte_carlo };

/// Standard errors of the Monte Carlo entries, same shapes as the estimates.
struct InformationErrors {
  MatrixXd A;
  MatrixXd B;
  MatrixXd B_pf;
  MatrixXd J_p;
};

/// Information matrices at an operating point (theta*, theta0), all
/// expectations taken under the true density p(.; theta0):
///   A    = -E[d^2 log f / d theta^2]          (N2 x N2)
///   B    =  E[s_f s_f^T]                       (N2 x N2)
///   B_pf =  E[s_f s_p^T]                       (N2 x N1)
///   J_p  =  E[s_p s_p^T]                       (N1 x N1)
struct InformationSet {
  SymMatrix A;
  SymMatrix B;
  MatrixXd B_pf;
  SymMatrix J_p;
  InformationMethod method = InformationMethod::analytic;
  std::optional<InformationErrors> std_errors;
  std::size_t n_samples = 0;
};

/// Score of the true-side density, x -> grad_theta0 log p(x; theta0).
using ScoreFunction = std::function<VectorXd(const Observation&)>;

/// Exact matrices for Gaussian-family pairs with fixed covariances.
/// Throws CapabilityError for any other pair.
InformationSet info_analytic(const MisspecifiedProblem& problem, const ParameterVector& theta_star);

/// Sample averages over n draws from p(.; theta0), with per-entry standard
/// errors. The draws are split into fixed batches with one substream per
/// batch, so the result does not depend on the worker count.
InformationSet info_monte_carlo(const MisspecifiedProblem& problem,
                                const ParameterVector& theta_star, std::size_t n,
                                const RngStream& rng);

/// As info_monte_carlo, with the true-side score replaced by true_score
/// (used when the "true" role is played by an auxiliary density that can be
/// evaluated but not sampled). Data are still drawn from problem.true_model.
InformationSet info_monte_carlo(const MisspecifiedProblem& problem,
                                const ParameterVector& theta_star, std::size_t n,
                                const RngStream& rng, const ScoreFunction& true_score);

/// Batch size used by the Monte Carlo loops.
inline constexpr std::size_t kMonteCarloBatch = 4096;

}  // namespace misspec
