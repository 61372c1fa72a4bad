#include "misspec/equivalent.hpp"

#include "misspec/bounds.hpp"

namespace misspec {

GFunction::GFunction(std::string name, Fn g, Fn g_prime)
    : name_(std::move(name)), g_(std::move(g)), g_prime_(std::move(g_prime)) {
  if (!g_ || !g_prime_) throw InvalidInput("GFunction " + name_ + ": missing function");
  g1_ = g_(1.0);
  gp1_ = g_prime_(1.0);
  if (!(std::abs(g1_ - 1.0) <= 1e-14)) {
    throw InvalidInput("GFunction " + name_ + ": g(1) must equal 1");
  }
  if (!std::isfinite(gp1_) || gp1_ == 0.0) {
    throw InvalidInput("GFunction " + name_ + ": g'(1) must be finite and nonzero");
  }
  const double h = fd_step(1.0);
  const double fd = (g_(1.0 + h) - g_(1.0 - h)) / (2 * h);
  if (!(std::abs(fd - gp1_) <= 1e-8 * std::max(1.0, std::abs(gp1_)))) {
    throw InvalidInput("GFunction " + name_ + ": g' disagrees with finite difference of g at 1");
  }
}

GFunction identity_g() {
  return GFunction("identity", [](double z) { return z; }, [](double) { return 1.0; });
}

GFunction vuong_g() {
  return GFunction(
      "vuong", [](double z) { return 0.5 * (1.0 + std::exp(1.0 - z)); },
      [](double z) { return -0.5 * std::exp(1.0 - z); });
}

GFunction g_function_by_name(const std::string& name) {
  if (name == "identity") return identity_g();
  if (name == "vuong") return vuong_g();
  throw InvalidInput("unknown g-function '" + name + "' (expected identity or vuong)");
}

EquivalentModel::EquivalentModel(MisspecifiedProblem base, GFunction g, ParameterVector theta_star0)
    : base_(std::move(base)), g_(std::move(g)), gamma0_(std::move(theta_star0)) {
  base_.validate();
  if (gamma0_.size() != base_.assumed_model->param_dim() ||
      !base_.assumed_model->in_domain(gamma0_)) {
    throw InvalidInput("EquivalentModel: invalid base point gamma0");
  }
}

double EquivalentModel::log_likelihood_ratio(const Observation& x,
                                             const ParameterVector& gamma) const {
  if (gamma == gamma0_) return 0.0;
  return base_.assumed_model->log_pdf(x, gamma) - base_.assumed_model->log_pdf(x, gamma0_);
}

double EquivalentModel::likelihood_ratio(const Observation& x, const ParameterVector& gamma) const {
  if (gamma == gamma0_) return 1.0;
  return std::exp(log_likelihood_ratio(x, gamma));
}

MonteCarloEstimate<double> EquivalentModel::normalizer(const ParameterVector& gamma,
                                                       std::size_t n,
                                                       const RngStream& rng) const {
  if (gamma.size() != gamma0_.size()) throw InvalidInput("normalizer: gamma has wrong size");
  if (gamma == gamma0_) return {1.0, 0.0, n};
  if (n < 2) throw InvalidInput("normalizer: need at least two samples");
  if (!base_.true_model->capabilities().can_sample) {
    throw CapabilityError("normalizer: true model cannot be sampled");
  }
  CacheKey key{std::vector<double>(gamma.data(), gamma.data() + gamma.size()), n, rng.seed(),
               rng.stream_id()};
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto parts = run_batched<MomentAccumulator>(
      n, kMonteCarloBatch, [&](std::size_t b, std::size_t begin, std::size_t end) {
        RngStream local = rng.substream(b);
        MomentAccumulator acc(1);
        VectorXd v(1);
        for (std::size_t i = begin; i < end; ++i) {
          const Observation x = base_.true_model->sample(base_.theta0, local);
          v(0) = g_(likelihood_ratio(x, gamma));
          acc.add(v);
        }
        return acc;
      });
  MomentAccumulator acc(1);
  for (const auto& part : parts) acc.merge(part);
  MonteCarloEstimate<double> est{acc.mean()(0), acc.std_error()(0), n};
  std::lock_guard<std::mutex> lock(cache_mutex_);
  cache_.emplace(std::move(key), est);
  return est;
}

double EquivalentModel::log_pdf_equivalent(const Observation& x, const ParameterVector& gamma,
                                           double c_value) const {
  if (!(c_value > 0)) throw InvalidInput("log_pdf_equivalent: normalizer must be positive");
  const double gv = g_(likelihood_ratio(x, gamma));
  if (!(gv > 0)) throw EvaluationError("log_pdf_equivalent: g(r) is not positive");
  return std::log(gv) + base_.true_model->log_pdf(x, base_.theta0) - std::log(c_value);
}

VectorXd EquivalentModel::equivalent_score_at_base(const Observation& x) const {
  return g_.g_prime_at_one() * base_.assumed_model->score(x, gamma0_);
}

ProportionalScoreFit fit_score_map(const std::function<Observation(RngStream&)>& sampler,
                                   const ScoreFunction& source, const ScoreFunction& target,
                                   std::size_t n_probe, RngStream rng) {
  if (n_probe < 1) throw InvalidInput("fit_score_map: need at least one probe");
  for (int attempt = 0; attempt < 2; ++attempt, n_probe *= 2) {
    std::vector<VectorXd> src, dst;
    for (std::size_t i = 0; i < n_probe; ++i) {
      const Observation x = sampler(rng);
      src.push_back(source(x));
      dst.push_back(target(x));
    }
    const Index k_src = src.front().size();
    const Index k_dst = dst.front().size();
    if (n_probe < static_cast<std::size_t>(k_src)) continue;
    MatrixXd s(n_probe, k_src), t(n_probe, k_dst);
    for (std::size_t i = 0; i < n_probe; ++i) {
      s.row(i) = src[i].transpose();
      t.row(i) = dst[i].transpose();
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(s);
    if (qr.rank() < k_src) continue;
    ProportionalScoreFit fit;
    fit.w_matrix = qr.solve(t).transpose();
    fit.n_probe = n_probe;
    for (std::size_t i = 0; i < n_probe; ++i) {
      const double scale = std::max(1.0, dst[i].cwiseAbs().maxCoeff());
      const double r = (dst[i] - fit.w_matrix * src[i]).cwiseAbs().maxCoeff() / scale;
      fit.max_residual = std::max(fit.max_residual, r);
    }
    return fit;
  }
  throw ConditioningError("fit_score_map: probe scores are rank deficient");
}

ProportionalScoreFit verify_proportional_score(const EquivalentModel& model, std::size_t n_probe,
                                               RngStream rng) {
  const MisspecifiedProblem& base = model.base();
  if (n_probe < static_cast<std::size_t>(base.assumed_model->param_dim())) {
    throw InvalidInput("verify_proportional_score: n_probe must be >= parameter dimension");
  }
  const ParameterVector gamma0 = model.gamma0();
  return fit_score_map(
      [&](RngStream& r) { return base.true_model->sample(base.theta0, r); },
      [&](const Observation& x) { return model.equivalent_score_at_base(x); },
      [&](const Observation& x) { return base.assumed_model->score(x, gamma0); }, n_probe,
      std::move(rng));
}

MonteCarloEstimate<MatrixXd> naive_mcrb_via_equivalent(const EquivalentModel& model,
                                                       std::size_t n, std::size_t n_batches,
                                                       const RngStream& rng) {
  if (n_batches < 2 || n < 2 * n_batches) {
    throw InvalidInput("naive_mcrb_via_equivalent: need >= 2 batches of >= 2 samples");
  }
  const auto score = [&model](const Observation& x) { return model.equivalent_score_at_base(x); };
  const std::size_t per = n / n_batches;
  const InformationSet full = info_monte_carlo(model.base(), model.gamma0(), per * n_batches,
                                               rng, score);
  const MatrixXd value = compute_naive_mcrb(full);
  const Index k = value.size();
  MomentAccumulator batches(k);
  for (std::size_t b = 0; b < n_batches; ++b) {
    const InformationSet part =
        info_monte_carlo(model.base(), model.gamma0(), per, rng.substream(1000003 + b), score);
    const MatrixXd v = compute_naive_mcrb(part);
    batches.add(Eigen::Map<const VectorXd>(v.data(), k));
  }
  // Each batch is n_batches times smaller than the full run.
  const VectorXd se = batches.std_error();
  return {value, Eigen::Map<const MatrixXd>(se.data(), value.rows(), value.cols()), n};
}

PseudoTrueSolution equivalent_pseudo_true(const EquivalentModel& model,
                                          const ParameterVector& gamma,
                                          const ParameterVector& theta_init, std::size_t n,
                                          const RngStream& rng, const PseudoTrueOptions& options) {
  const MisspecifiedProblem& base = model.base();
  RngStream local = rng;
  auto samples = draw_samples(*base.true_model, base.theta0, n, local);
  std::vector<double> weights;
  weights.reserve(samples.size());
  for (const auto& x : samples) weights.push_back(model.g()(model.likelihood_ratio(x, gamma)));
  const ExpectedLogLikelihood obj =
      sample_average_objective(base.assumed_model, std::move(samples), std::move(weights));
  PseudoTrueSolution sol = maximize_objective(obj, *base.assumed_model, theta_init,
                                              options.gradient_tol_sample, options.max_iterations);
  sol.analytic = false;
  return sol;
}

}  // namespace misspec
