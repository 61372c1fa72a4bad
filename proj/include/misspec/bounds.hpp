#pragma once

#include <functional>

#include "misspec/information.hpp"

namespace misspec {

/// CRB, MCRB and naive MCRB at one operating point.
struct BoundReport {
  SymMatrix crb;    ///< J_p^{-1}
  SymMatrix mcrb;   ///< A^{-1} B A^{-1}
  SymMatrix nmcrb;  ///< A^{-1} B_pf J_p^{-1} B_pf^T A^{-1}
  bool order_ok = false;
  double min_gap_eig = 0.0;  ///< min eig(mcrb - nmcrb)
};

SymMatrix compute_mcrb(const InformationSet& info);
SymMatrix compute_naive_mcrb(const InformationSet& info);
SymMatrix compute_crb(const InformationSet& info);

BoundReport make_bound_report(const InformationSet& info, double tol = kLoewnerTol);

/// mcrb >= nmcrb in the Loewner order, up to tol.
bool check_order_relation(const BoundReport& report, double tol = kLoewnerTol);

using EstimatorMap = std::function<ParameterVector(const Observation&)>;

/// x -> theta* + A^{-1} s_f(x; theta*).
EstimatorMap efficient_estimator_map(const InformationSet& info, const ParameterVector& theta_star,
                                     ModelPtr assumed);

/// x -> theta* + A^{-1} B_pf J_p^{-1} s_p(x; theta0). Needs the true density,
/// so it is an analysis device rather than a usable estimator.
EstimatorMap naive_efficient_estimator_map(const InformationSet& info,
                                           const ParameterVector& theta_star, ModelPtr true_model,
                                           const ParameterVector& theta0);

}  // namespace misspec
