#pragma once

#include <memory>
#include <string>
#include <vector>

#include "misspec/numerics.hpp"

namespace misspec {

/// Parameter vector of a model (true-side or assumed-side).
using ParameterVector = Eigen::VectorXd;

/// Observation vector. Complex observations are stored as [Re x; Im x].
using Observation = Eigen::VectorXd;

struct Capabilities {
  bool can_sample = false;
  bool has_analytic_score = false;
  bool has_analytic_hessian = false;
};

/// Parametric density x -> p(x; params).
///
/// The public entry points validate dimensions and domain, then dispatch to
/// the *_impl hooks. Models without an analytic score or Hessian inherit
/// central-difference fallbacks. Instances are immutable after construction
/// and may be shared across threads.
class DensityModel {
 public:
  virtual ~DensityModel() = default;

  virtual std::string name() const = 0;
  virtual Index param_dim() const = 0;
  virtual Index obs_dim() const = 0;
  virtual Capabilities capabilities() const = 0;
  /// Interior of the parameter domain.
  virtual bool in_domain(const ParameterVector& params) const { return params.allFinite(); }

  double log_pdf(const Observation& x, const ParameterVector& params) const;
  VectorXd score(const Observation& x, const ParameterVector& params) const;
  SymMatrix hessian(const Observation& x, const ParameterVector& params) const;
  Observation sample(const ParameterVector& params, RngStream& rng) const;

 protected:
  virtual double log_pdf_impl(const Observation& x, const ParameterVector& params) const = 0;
  virtual VectorXd score_impl(const Observation& x, const ParameterVector& params) const;
  virtual SymMatrix hessian_impl(const Observation& x, const ParameterVector& params) const;
  virtual Observation sample_impl(const ParameterVector& params, RngStream& rng) const;

  void check_arguments(const Observation& x, const ParameterVector& params) const;
};

using ModelPtr = std::shared_ptr<const DensityModel>;

/// Real Gaussian x ~ N(mean(params), C) with a parameter-independent
/// covariance C. The log-density is quadratic in x, so expectations of the
/// log-density, score and Hessian under any Gaussian are available in closed
/// form, which the analytic pseudo-true and information routines rely on.
class GaussianFamily : public DensityModel {
 public:
  explicit GaussianFamily(const SymMatrix& covariance);

  Index obs_dim() const override { return covariance_.rows(); }
  Capabilities capabilities() const override { return {true, true, true}; }

  virtual VectorXd mean(const ParameterVector& params) const = 0;
  /// d mean / d params, obs_dim x param_dim.
  virtual MatrixXd mean_jacobian(const ParameterVector& params) const = 0;
  /// sum_i weights_i * (d^2 mean_i / d params^2), param_dim x param_dim.
  virtual SymMatrix mean_curvature(const ParameterVector& params, const VectorXd& weights) const = 0;

  const SymMatrix& covariance() const { return covariance_; }
  const SymMatrix& precision() const { return precision_; }
  double log_det_covariance() const { return log_det_; }
  const GaussianSampler& sampler() const { return sampler_; }

 protected:
  double log_pdf_impl(const Observation& x, const ParameterVector& params) const override;
  VectorXd score_impl(const Observation& x, const ParameterVector& params) const override;
  SymMatrix hessian_impl(const Observation& x, const ParameterVector& params) const override;
  Observation sample_impl(const ParameterVector& params, RngStream& rng) const override;

 private:
  SymMatrix covariance_;
  SymMatrix precision_;
  double log_det_ = 0.0;
  GaussianSampler sampler_;
};

/// x ~ N(design * params, covariance).
class LinearGaussianModel final : public GaussianFamily {
 public:
  LinearGaussianModel(std::string name, MatrixXd design, const SymMatrix& covariance);

  std::string name() const override { return name_; }
  Index param_dim() const override { return design_.cols(); }

  VectorXd mean(const ParameterVector& params) const override { return design_ * params; }
  MatrixXd mean_jacobian(const ParameterVector&) const override { return design_; }
  SymMatrix mean_curvature(const ParameterVector&, const VectorXd&) const override {
    return SymMatrix::Zero(param_dim(), param_dim());
  }

  const MatrixXd& design() const { return design_; }

 private:
  std::string name_;
  MatrixXd design_;
};

/// x ~ N(theta * 1, diag(epsilon, sigma2, ..., sigma2)).
std::shared_ptr<const LinearGaussianModel> box1_true(Index n, double sigma2, double epsilon);
/// x ~ N(theta * 1, sigma2 * I).
std::shared_ptr<const LinearGaussianModel> box1_assumed(Index n, double sigma2);
/// x ~ N(theta * 1, sigma_sq * I).
std::shared_ptr<const LinearGaussianModel> white_mean_model(Index n, double sigma_sq);
/// x ~ N(theta * 1, covariance).
std::shared_ptr<const LinearGaussianModel> scalar_mean_model(const SymMatrix& covariance);

/// n independent draws from model at params.
std::vector<Observation> draw_samples(const DensityModel& model, const ParameterVector& params,
                                      std::size_t n, RngStream& rng);

/// One estimation scenario: data from true_model at theta0, estimation
/// carried out under assumed_model.
struct MisspecifiedProblem {
  ModelPtr true_model;
  ModelPtr assumed_model;
  ParameterVector theta0;

  /// Throws InvalidInput when the pair or the operating point is inconsistent.
  void validate() const;
  /// Same models at a different true parameter.
  MisspecifiedProblem at(const ParameterVector& vartheta) const;
};

}  // namespace misspec
