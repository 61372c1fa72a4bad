#include "misspec/information.hpp"

namespace misspec {

InformationSet info_analytic(const MisspecifiedProblem& problem, const ParameterVector& theta_star) {
  problem.validate();
  const auto* p = dynamic_cast<const GaussianFamily*>(problem.true_model.get());
  const auto* f = dynamic_cast<const GaussianFamily*>(problem.assumed_model.get());
  if (p == nullptr || f == nullptr) {
    throw CapabilityError("info_analytic: no closed form for the pair (" +
                          problem.true_model->name() + ", " + problem.assumed_model->name() + ")");
  }
  if (theta_star.size() != f->param_dim() || !f->in_domain(theta_star)) {
    throw InvalidInput("info_analytic: invalid pseudo-true parameter");
  }
  const MatrixXd& pf = f->precision();
  const MatrixXd jf = f->mean_jacobian(theta_star);
  const MatrixXd jp = p->mean_jacobian(problem.theta0);
  const VectorXd d = p->mean(problem.theta0) - f->mean(theta_star);
  const VectorXd wd = pf * d;
  const VectorXd bias_score = jf.transpose() * wd;
  const MatrixXd pf_jf = pf * jf;

  InformationSet info;
  info.method = InformationMethod::analytic;
  info.A = symmetrize((jf.transpose() * pf_jf - f->mean_curvature(theta_star, wd)).eval());
  info.B = symmetrize(
      (pf_jf.transpose() * p->covariance() * pf_jf + bias_score * bias_score.transpose()).eval());
  info.B_pf = pf_jf.transpose() * jp;
  info.J_p = symmetrize((jp.transpose() * p->precision() * jp).eval());
  return info;
}

namespace {

MatrixXd unpack(const VectorXd& v, Index offset, Index rows, Index cols) {
  return Eigen::Map<const MatrixXd>(v.data() + offset, rows, cols);
}

}  // namespace

InformationSet info_monte_carlo(const MisspecifiedProblem& problem,
                                const ParameterVector& theta_star, std::size_t n,
                                const RngStream& rng, const ScoreFunction& true_score) {
  problem.validate();
  if (n < 2) throw InvalidInput("info_monte_carlo: need at least two samples");
  if (!problem.true_model->capabilities().can_sample) {
    throw CapabilityError("info_monte_carlo: true model " + problem.true_model->name() +
                          " cannot be sampled");
  }
  const DensityModel& f = *problem.assumed_model;
  const Index n2 = f.param_dim();
  const Index n1 = problem.true_model->param_dim();
  const Index oa = 0, ob = n2 * n2, opf = 2 * n2 * n2, oj = 2 * n2 * n2 + n2 * n1;
  const Index total = oj + n1 * n1;

  auto parts = run_batched<MomentAccumulator>(
      n, kMonteCarloBatch, [&](std::size_t b, std::size_t begin, std::size_t end) {
        RngStream local = rng.substream(b);
        MomentAccumulator acc(total);
        VectorXd row(total);
        for (std::size_t i = begin; i < end; ++i) {
          const Observation x = problem.true_model->sample(problem.theta0, local);
          const VectorXd sf = f.score(x, theta_star);
          const VectorXd sp = true_score(x);
          if (sp.size() != n1) throw InvalidInput("info_monte_carlo: true score has wrong size");
          Eigen::Map<MatrixXd>(row.data() + oa, n2, n2) = -f.hessian(x, theta_star);
          Eigen::Map<MatrixXd>(row.data() + ob, n2, n2) = sf * sf.transpose();
          Eigen::Map<MatrixXd>(row.data() + opf, n2, n1) = sf * sp.transpose();
          Eigen::Map<MatrixXd>(row.data() + oj, n1, n1) = sp * sp.transpose();
          acc.add(row);
        }
        return acc;
      });
  MomentAccumulator acc(total);
  for (const auto& part : parts) acc.merge(part);
  const VectorXd mean = acc.mean();
  const VectorXd se = acc.std_error();

  InformationSet info;
  info.method = InformationMethod::monte_carlo;
  info.n_samples = n;
  info.A = symmetrize(unpack(mean, oa, n2, n2));
  info.B = symmetrize(unpack(mean, ob, n2, n2));
  info.B_pf = unpack(mean, opf, n2, n1);
  info.J_p = symmetrize(unpack(mean, oj, n1, n1));
  info.std_errors = InformationErrors{unpack(se, oa, n2, n2), unpack(se, ob, n2, n2),
                                      unpack(se, opf, n2, n1), unpack(se, oj, n1, n1)};
  return info;
}

InformationSet info_monte_carlo(const MisspecifiedProblem& problem,
                                const ParameterVector& theta_star, std::size_t n,
                                const RngStream& rng) {
  const ModelPtr p = problem.true_model;
  const ParameterVector theta0 = problem.theta0;
  return info_monte_carlo(problem, theta_star, n, rng,
                          [p, theta0](const Observation& x) { return p->score(x, theta0); });
}

}  // namespace misspec
