#include "misspec/bounds.hpp"

namespace misspec {

namespace {

void check_shapes(const InformationSet& info) {
  const Index n2 = info.A.rows();
  const Index n1 = info.J_p.rows();
  if (info.A.cols() != n2 || info.B.rows() != n2 || info.B.cols() != n2 ||
      info.B_pf.rows() != n2 || info.B_pf.cols() != n1 || info.J_p.cols() != n1) {
    throw InvalidInput("bounds: inconsistent information matrix shapes");
  }
}

}  // namespace

SymMatrix compute_mcrb(const InformationSet& info) {
  check_shapes(info);
  const MatrixXd ainv_b = spd_solve(info.A, info.B);
  // A^{-1} (A^{-1} B)^T = A^{-1} B A^{-1}
  return symmetrize(spd_solve(info.A, ainv_b.transpose()));
}

SymMatrix compute_naive_mcrb(const InformationSet& info) {
  check_shapes(info);
  const MatrixXd g = spd_solve(info.A, info.B_pf);          // A^{-1} B_pf
  const MatrixXd jinv_gt = spd_solve(info.J_p, g.transpose());  // J^{-1} B_pf^T A^{-1}
  return symmetrize((g * jinv_gt).eval());
}

SymMatrix compute_crb(const InformationSet& info) {
  check_shapes(info);
  const Index n1 = info.J_p.rows();
  return symmetrize(spd_solve(info.J_p, MatrixXd::Identity(n1, n1)));
}

BoundReport make_bound_report(const InformationSet& info, double tol) {
  BoundReport r;
  r.crb = compute_crb(info);
  r.mcrb = compute_mcrb(info);
  r.nmcrb = compute_naive_mcrb(info);
  r.min_gap_eig = min_eigenvalue((r.mcrb - r.nmcrb).eval());
  r.order_ok = r.min_gap_eig >= -tol;
  return r;
}

bool check_order_relation(const BoundReport& report, double tol) {
  return loewner_geq(report.mcrb, report.nmcrb, tol);
}

EstimatorMap efficient_estimator_map(const InformationSet& info, const ParameterVector& theta_star,
                                     ModelPtr assumed) {
  check_shapes(info);
  if (!assumed || assumed->param_dim() != info.A.rows() || theta_star.size() != info.A.rows()) {
    throw InvalidInput("efficient_estimator_map: model does not match the information set");
  }
  const MatrixXd a_inv = spd_solve(info.A, MatrixXd::Identity(info.A.rows(), info.A.rows()));
  return [a_inv, theta_star, assumed](const Observation& x) -> ParameterVector {
    return theta_star + a_inv * assumed->score(x, theta_star);
  };
}

EstimatorMap naive_efficient_estimator_map(const InformationSet& info,
                                           const ParameterVector& theta_star, ModelPtr true_model,
                                           const ParameterVector& theta0) {
  check_shapes(info);
  if (!true_model || true_model->param_dim() != info.J_p.rows() ||
      theta0.size() != info.J_p.rows() || theta_star.size() != info.A.rows()) {
    throw InvalidInput("naive_efficient_estimator_map: model does not match the information set");
  }
  const MatrixXd g = spd_solve(info.A, info.B_pf);
  const MatrixXd gain = g * spd_solve(info.J_p, MatrixXd::Identity(info.J_p.rows(), info.J_p.rows()));
  return [gain, theta_star, true_model, theta0](const Observation& x) -> ParameterVector {
    return theta_star + gain * true_model->score(x, theta0);
  };
}

}  // namespace misspec
