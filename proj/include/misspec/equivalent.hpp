#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "misspec/information.hpp"
#include "misspec/pseudo_true.hpp"

namespace misspec {

/// Auxiliary function g for the pointwise-equivalent construction.
/// Construction checks g(1) = 1, g'(1) != 0 and that g_prime agrees with a
/// central difference of g at 1.
class GFunction {
 public:
  using Fn = std::function<double(double)>;

  GFunction(std::string name, Fn g, Fn g_prime);

  const std::string& name() const { return name_; }
  double operator()(double z) const { return g_(z); }
  double derivative(double z) const { return g_prime_(z); }
  double g_at_one() const { return g1_; }
  double g_prime_at_one() const { return gp1_; }

 private:
  std::string name_;
  Fn g_;
  Fn g_prime_;
  double g1_ = 1.0;
  double gp1_ = 1.0;
};

/// g(z) = z.
GFunction identity_g();
/// g(z) = (1 + exp(1 - z)) / 2, normalized so that g(1) = 1; g'(1) = -1/2.
GFunction vuong_g();
/// Lookup by name ("identity", "vuong"). Throws InvalidInput otherwise.
GFunction g_function_by_name(const std::string& name);

/// p~(x; gamma) = g(r(x; gamma)) p(x; theta0) / c(gamma),
/// r(x; gamma) = f(x; gamma) / f(x; gamma0), c(gamma) = E_p[g(r(x; gamma))],
/// with gamma0 the pseudo-true parameter. The family coincides with p at
/// gamma0 and its score there is g'(1) times the assumed score.
class EquivalentModel {
 public:
  EquivalentModel(MisspecifiedProblem base, GFunction g, ParameterVector theta_star0);

  const MisspecifiedProblem& base() const { return base_; }
  const GFunction& g() const { return g_; }
  const ParameterVector& gamma0() const { return gamma0_; }

  double log_likelihood_ratio(const Observation& x, const ParameterVector& gamma) const;
  /// exp(log f(x; gamma) - log f(x; gamma0)); exactly 1 at gamma0.
  double likelihood_ratio(const Observation& x, const ParameterVector& gamma) const;

  /// Monte Carlo estimate of c(gamma) over n draws from p(.; theta0).
  /// Exactly 1 with zero standard error at gamma0. Results are cached per
  /// (gamma, n, seed, stream).
  MonteCarloEstimate<double> normalizer(const ParameterVector& gamma, std::size_t n,
                                        const RngStream& rng) const;

  /// log g(r) + log p(x; theta0) - log c_value.
  double log_pdf_equivalent(const Observation& x, const ParameterVector& gamma,
                            double c_value) const;

  /// g'(1) s_f(x; gamma0).
  VectorXd equivalent_score_at_base(const Observation& x) const;

 private:
  using CacheKey = std::tuple<std::vector<double>, std::size_t, std::uint64_t, std::uint64_t>;

  MisspecifiedProblem base_;
  GFunction g_;
  ParameterVector gamma0_;
  mutable std::mutex cache_mutex_;
  mutable std::map<CacheKey, MonteCarloEstimate<double>> cache_;
};

struct ProportionalScoreFit {
  MatrixXd w_matrix;
  /// max over probes of |s_target - W s_source|_inf / max(1, |s_target|_inf)
  double max_residual = 0.0;
  std::size_t n_probe = 0;
};

/// Least-squares W with target(x) ~ W source(x) over n_probe draws from
/// sampler. Doubles the probe count once if the source scores are rank
/// deficient, then throws ConditioningError.
ProportionalScoreFit fit_score_map(const std::function<Observation(RngStream&)>& sampler,
                                   const ScoreFunction& source, const ScoreFunction& target,
                                   std::size_t n_probe, RngStream rng);

/// Fit of the assumed score against the equivalent score at gamma0; the
/// exact answer is (1 / g'(1)) I.
ProportionalScoreFit verify_proportional_score(const EquivalentModel& model, std::size_t n_probe,
                                               RngStream rng);

/// Naive MCRB with the equivalent density in the true-model role, from n
/// Monte Carlo draws split into n_batches batches; the standard error is the
/// batch-means estimate.
MonteCarloEstimate<MatrixXd> naive_mcrb_via_equivalent(const EquivalentModel& model,
                                                       std::size_t n, std::size_t n_batches,
                                                       const RngStream& rng);

/// Pseudo-true parameter with p~(.; gamma) as the data density, computed by
/// self-normalized importance weighting of draws from p(.; theta0).
PseudoTrueSolution equivalent_pseudo_true(const EquivalentModel& model,
                                          const ParameterVector& gamma,
                                          const ParameterVector& theta_init, std::size_t n,
                                          const RngStream& rng,
                                          const PseudoTrueOptions& options = {});

}  // namespace misspec
