#pragma once

#include <functional>
#include <string>
#include <vector>

#include "misspec/bounds.hpp"

namespace misspec {

enum class EstimatorTarget { pseudo_true, true_param };

struct Estimate {
  ParameterVector value;
  bool ok = true;  ///< false when the inner optimizer did not converge
};

struct Estimator {
  std::string name;
  EstimatorTarget target = EstimatorTarget::pseudo_true;
  Index output_dim = 0;
  std::function<Estimate(const Observation&)> map;

  Estimate operator()(const Observation& x) const { return map(x); }
};

/// Maximizer of the assumed likelihood. Closed form for linear Gaussian
/// models; grid search plus safeguarded Newton in phi for the DOA model.
Estimator mml_estimator(const MisspecifiedProblem& problem);
/// Maximizer of the true likelihood (needs the true covariance).
Estimator oracle_ml_estimator(const MisspecifiedProblem& problem);
/// x -> x_1.
Estimator first_sample_estimator();
/// Wraps a deterministic map such as efficient_estimator_map.
Estimator map_estimator(std::string name, EstimatorMap map, Index output_dim,
                        EstimatorTarget target = EstimatorTarget::pseudo_true);

namespace doa {
class DoaModel;
}

/// Concentrated single-source ML for x ~ CN(a(phi) s, W^{-1}):
/// phi maximizes |a^H W x|^2 / (a^H W a), s = a^H W x / (a^H W a).
/// 512-point grid over (-pi/2, pi/2), then up to 20 safeguarded Newton steps.
Estimate doa_concentrated_ml(const doa::DoaModel& model, const Observation& x);

/// Monte Carlo summary of an estimator about theta*. The three residuals
/// correspond to the unbiasedness conditions:
///   regular_bias    = E[e]
///   score_bias      = E[e s_f(x; theta*)^T] - A^{-1} B
///   true_score_bias = E[e s_p(x; theta0)^T] - A^{-1} B_pf
/// with e = theta_hat(x) - theta*.
struct TrialEnsemble {
  std::string estimator;
  std::vector<ParameterVector> estimates;
  std::size_t n_trials = 0;
  std::size_t n_excluded = 0;
  bool valid = true;  ///< at most 1% of trials excluded
  std::uint64_t seed = 0;

  SymMatrix empirical_mse;
  MatrixXd mse_se;
  VectorXd regular_bias;
  VectorXd regular_bias_se;
  MatrixXd score_bias;
  MatrixXd score_bias_se;
  MatrixXd true_score_bias;
  MatrixXd true_score_bias_se;
  /// Largest |s_f(x; theta_hat(x))| over the included trials.
  double max_score_norm = 0.0;
};

/// Draws n_trials observations from p(.; theta0) and summarizes the
/// estimator. Trials run in fixed batches with one substream per batch.
TrialEnsemble run_trials(const MisspecifiedProblem& problem, const Estimator& estimator,
                         const ParameterVector& theta_star, const InformationSet& info,
                         std::size_t n_trials, const RngStream& rng);

enum class UnbiasednessKind { pointwise, naive_local, revised_local };

struct UnbiasednessResult {
  bool bias_ok = false;
  bool score_ok = true;  ///< trivially true for the pointwise check
  bool passed = false;
  /// Largest |residual| / se over the checked entries.
  double max_z = 0.0;
};

UnbiasednessResult check_unbiasedness(const TrialEnsemble& ensemble, UnbiasednessKind which,
                                      double z_threshold = 5.0);

struct EfficiencyResult {
  bool attains_mcrb = false;
  bool is_mml_consistent = false;
};

EfficiencyResult check_efficiency(const TrialEnsemble& ensemble, const BoundReport& report,
                                  double z_threshold = 5.0, double score_tol = 1e-6);

/// Entries of residual within z se (plus a roundoff floor).
bool within_z(const MatrixXd& residual, const MatrixXd& se, double z, double* max_z = nullptr);

}  // namespace misspec
