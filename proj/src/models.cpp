#include "misspec/models.hpp"

#include <numbers>

namespace misspec {

void DensityModel::check_arguments(const Observation& x, const ParameterVector& params) const {
  if (x.size() != obs_dim()) {
    throw InvalidInput(name() + ": observation has dimension " + std::to_string(x.size()) +
                       ", expected " + std::to_string(obs_dim()));
  }
  if (params.size() != param_dim()) {
    throw InvalidInput(name() + ": parameter has dimension " + std::to_string(params.size()) +
                       ", expected " + std::to_string(param_dim()));
  }
  if (!x.allFinite()) throw InvalidInput(name() + ": non-finite observation");
  if (!in_domain(params)) throw InvalidInput(name() + ": parameter outside the model domain");
}

double DensityModel::log_pdf(const Observation& x, const ParameterVector& params) const {
  check_arguments(x, params);
  return log_pdf_impl(x, params);
}

VectorXd DensityModel::score(const Observation& x, const ParameterVector& params) const {
  check_arguments(x, params);
  return score_impl(x, params);
}

SymMatrix DensityModel::hessian(const Observation& x, const ParameterVector& params) const {
  check_arguments(x, params);
  return hessian_impl(x, params);
}

Observation DensityModel::sample(const ParameterVector& params, RngStream& rng) const {
  if (!capabilities().can_sample) throw CapabilityError(name() + ": sampling is not supported");
  if (params.size() != param_dim() || !in_domain(params)) {
    throw InvalidInput(name() + ": invalid parameter for sampling");
  }
  return sample_impl(params, rng);
}

VectorXd DensityModel::score_impl(const Observation& x, const ParameterVector& params) const {
  return fd_gradient<double>([&](const VectorXd& p) { return log_pdf_impl(x, p); }, params);
}

SymMatrix DensityModel::hessian_impl(const Observation& x, const ParameterVector& params) const {
  MatrixXd jac(params.size(), params.size());
  VectorXd p = params;
  for (Index i = 0; i < params.size(); ++i) {
    const double h = fd_step(params(i));
    p(i) = params(i) + h;
    const VectorXd up = score_impl(x, p);
    p(i) = params(i) - h;
    const VectorXd down = score_impl(x, p);
    p(i) = params(i);
    jac.col(i) = (up - down) / (2 * h);
  }
  return symmetrize(jac);
}

Observation DensityModel::sample_impl(const ParameterVector&, RngStream&) const {
  throw CapabilityError(name() + ": sampling is not supported");
}

namespace {

SymMatrix checked_covariance(const SymMatrix& c) {
  if (c.rows() == 0 || c.rows() != c.cols()) {
    throw InvalidInput("GaussianFamily: covariance must be square and non-empty");
  }
  if (!c.allFinite()) throw InvalidInput("GaussianFamily: non-finite covariance");
  if (!is_symmetric(c)) throw InvalidInput("GaussianFamily: covariance is not symmetric");
  if (Eigen::LLT<MatrixXd>(c).info() != Eigen::Success) {
    throw InvalidInput("GaussianFamily: singular or indefinite covariance");
  }
  return symmetrize(c);
}

}  // namespace

GaussianFamily::GaussianFamily(const SymMatrix& covariance)
    : covariance_(checked_covariance(covariance)), sampler_(covariance_) {
  Eigen::LLT<MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw InvalidInput("GaussianFamily: singular or indefinite covariance");
  }
  precision_ = symmetrize(llt.solve(MatrixXd::Identity(obs_dim(), obs_dim())));
  log_det_ = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double GaussianFamily::log_pdf_impl(const Observation& x, const ParameterVector& params) const {
  const VectorXd r = x - mean(params);
  const double n = static_cast<double>(obs_dim());
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_ -
         0.5 * r.dot(precision_ * r);
}

VectorXd GaussianFamily::score_impl(const Observation& x, const ParameterVector& params) const {
  return mean_jacobian(params).transpose() * (precision_ * (x - mean(params)));
}

SymMatrix GaussianFamily::hessian_impl(const Observation& x, const ParameterVector& params) const {
  const MatrixXd jac = mean_jacobian(params);
  const VectorXd w = precision_ * (x - mean(params));
  return symmetrize((-jac.transpose() * precision_ * jac + mean_curvature(params, w)).eval());
}

Observation GaussianFamily::sample_impl(const ParameterVector& params, RngStream& rng) const {
  return sampler_.draw(mean(params), rng);
}

LinearGaussianModel::LinearGaussianModel(std::string name, MatrixXd design,
                                         const SymMatrix& covariance)
    : GaussianFamily(covariance), name_(std::move(name)), design_(std::move(design)) {
  if (design_.rows() != obs_dim() || design_.cols() == 0) {
    throw InvalidInput("LinearGaussianModel: design must be obs_dim x param_dim");
  }
  if (!design_.allFinite()) throw InvalidInput("LinearGaussianModel: non-finite design");
}

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0) || !std::isfinite(v)) {
    throw InvalidInput(std::string(what) + " must be positive and finite");
  }
}

}  // namespace

std::shared_ptr<const LinearGaussianModel> box1_true(Index n, double sigma2, double epsilon) {
  if (n < 1) throw InvalidInput("box1_true: N must be >= 1");
  require_positive(sigma2, "sigma2");
  require_positive(epsilon, "epsilon");
  VectorXd diag = VectorXd::Constant(n, sigma2);
  diag(0) = epsilon;
  return std::make_shared<LinearGaussianModel>("box1_true", MatrixXd::Ones(n, 1),
                                               diag.asDiagonal().toDenseMatrix());
}

std::shared_ptr<const LinearGaussianModel> box1_assumed(Index n, double sigma2) {
  if (n < 1) throw InvalidInput("box1_assumed: N must be >= 1");
  require_positive(sigma2, "sigma2");
  return std::make_shared<LinearGaussianModel>("box1_assumed", MatrixXd::Ones(n, 1),
                                               sigma2 * MatrixXd::Identity(n, n));
}

std::shared_ptr<const LinearGaussianModel> white_mean_model(Index n, double sigma_sq) {
  if (n < 1) throw InvalidInput("white_mean_model: N must be >= 1");
  require_positive(sigma_sq, "variance");
  return std::make_shared<LinearGaussianModel>("white_mean", MatrixXd::Ones(n, 1),
                                               sigma_sq * MatrixXd::Identity(n, n));
}

std::shared_ptr<const LinearGaussianModel> scalar_mean_model(const SymMatrix& covariance) {
  return std::make_shared<LinearGaussianModel>("scalar_mean", MatrixXd::Ones(covariance.rows(), 1),
                                               covariance);
}

std::vector<Observation> draw_samples(const DensityModel& model, const ParameterVector& params,
                                      std::size_t n, RngStream& rng) {
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(model.sample(params, rng));
  return out;
}

void MisspecifiedProblem::validate() const {
  if (!true_model || !assumed_model) throw InvalidInput("MisspecifiedProblem: missing model");
  if (true_model->obs_dim() != assumed_model->obs_dim()) {
    throw InvalidInput("MisspecifiedProblem: observation dimensions differ");
  }
  if (theta0.size() != true_model->param_dim()) {
    throw InvalidInput("MisspecifiedProblem: theta0 dimension does not match the true model");
  }
  if (!true_model->in_domain(theta0)) {
    throw InvalidInput("MisspecifiedProblem: theta0 outside the true-model domain");
  }
}

MisspecifiedProblem MisspecifiedProblem::at(const ParameterVector& vartheta) const {
  MisspecifiedProblem p = *this;
  p.theta0 = vartheta;
  return p;
}

}  // namespace misspec
