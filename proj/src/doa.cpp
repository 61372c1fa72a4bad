#include "misspec/doa.hpp"

#include <numbers>

namespace misspec::doa {

namespace {

constexpr Complex kJ{0.0, 1.0};
constexpr double kPi = std::numbers::pi;

MatrixXcd checked_noise(const MatrixXcd& sigma) {
  if (sigma.rows() == 0 || sigma.rows() != sigma.cols()) {
    throw InvalidInput("DoaModel: noise covariance must be square and non-empty");
  }
  if (!sigma.allFinite()) throw InvalidInput("DoaModel: non-finite noise covariance");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidInput("DoaModel: noise covariance is not Hermitian");
  }
  return (sigma + sigma.adjoint()) / 2.0;
}

}  // namespace

VectorXd sensor_positions(Index m) {
  if (m < 1) throw InvalidInput("sensor_positions: need at least one sensor");
  VectorXd d(m);
  for (Index i = 0; i < m; ++i) d(i) = static_cast<double>(i + 1) - (static_cast<double>(m) + 1.0) / 2.0;
  return d;
}

VectorXcd steering(Index m, double phi) {
  const VectorXd d = sensor_positions(m);
  VectorXcd a(m);
  for (Index i = 0; i < m; ++i) a(i) = std::exp(kJ * (kPi * d(i) * std::sin(phi)));
  return a;
}

VectorXcd steering_derivative(Index m, double phi) {
  const VectorXd d = sensor_positions(m);
  const VectorXcd a = steering(m, phi);
  VectorXcd da(m);
  for (Index i = 0; i < m; ++i) da(i) = kJ * kPi * d(i) * std::cos(phi) * a(i);
  return da;
}

VectorXcd steering_second_derivative(Index m, double phi) {
  const VectorXd d = sensor_positions(m);
  const VectorXcd a = steering(m, phi);
  VectorXcd dda(m);
  for (Index i = 0; i < m; ++i) {
    const Complex k = kJ * kPi * d(i);
    dda(i) = (-k * std::sin(phi) + k * k * std::cos(phi) * std::cos(phi)) * a(i);
  }
  return dda;
}

MatrixXcd toeplitz_covariance(Index m, double sigma2, double rho) {
  if (m < 1) throw InvalidInput("toeplitz_covariance: need at least one sensor");
  if (!(sigma2 > 0)) throw InvalidInput("toeplitz_covariance: sigma2 must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw InvalidInput("toeplitz_covariance: rho must lie in [0, 1)");
  MatrixXcd s(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index k = 0; k < m; ++k) {
      s(i, k) = sigma2 * std::pow(rho, static_cast<double>(std::abs(i - k)));
    }
  }
  return s;
}

VectorXd stack(const VectorXcd& v) {
  VectorXd out(2 * v.size());
  out.head(v.size()) = v.real();
  out.tail(v.size()) = v.imag();
  return out;
}

VectorXcd unstack(const VectorXd& v) {
  if (v.size() % 2 != 0) throw InvalidInput("unstack: odd length");
  const Index m = v.size() / 2;
  VectorXcd out(m);
  out.real() = v.head(m);
  out.imag() = v.tail(m);
  return out;
}

SymMatrix real_covariance(const MatrixXcd& sigma) {
  const Index m = sigma.rows();
  SymMatrix c(2 * m, 2 * m);
  c.topLeftCorner(m, m) = sigma.real();
  c.topRightCorner(m, m) = -sigma.imag();
  c.bottomLeftCorner(m, m) = sigma.imag();
  c.bottomRightCorner(m, m) = sigma.real();
  return 0.5 * c;
}

DoaModel::DoaModel(std::string name, const MatrixXcd& sigma)
    : GaussianFamily(real_covariance(checked_noise(sigma))),
      name_(std::move(name)),
      sensors_(sigma.rows()),
      sigma_(checked_noise(sigma)) {
  Eigen::LLT<MatrixXcd> llt(sigma_);
  if (llt.info() != Eigen::Success) throw InvalidInput("DoaModel: noise covariance is not PD");
  sigma_inv_ = llt.solve(MatrixXcd::Identity(sensors_, sensors_));
  sigma_inv_ = (sigma_inv_ + sigma_inv_.adjoint()) / 2.0;
  complex_log_det_ = 2.0 * llt.matrixL().toDenseMatrix().diagonal().real().array().log().sum();
}

bool DoaModel::in_domain(const ParameterVector& params) const {
  return params.size() == 3 && params.allFinite() && std::abs(params(0)) < kPi / 2;
}

VectorXcd DoaModel::complex_mean(const ParameterVector& params) const {
  return steering(sensors_, params(0)) * Complex(params(1), params(2));
}

VectorXd DoaModel::mean(const ParameterVector& params) const { return stack(complex_mean(params)); }

MatrixXd DoaModel::mean_jacobian(const ParameterVector& params) const {
  const Complex s(params(1), params(2));
  MatrixXd jac(2 * sensors_, 3);
  jac.col(0) = stack(steering_derivative(sensors_, params(0)) * s);
  const VectorXcd a = steering(sensors_, params(0));
  jac.col(1) = stack(a);
  jac.col(2) = stack(kJ * a);
  return jac;
}

SymMatrix DoaModel::mean_curvature(const ParameterVector& params, const VectorXd& weights) const {
  const VectorXcd w = unstack(weights);
  const Complex s(params(1), params(2));
  const VectorXcd da = steering_derivative(sensors_, params(0));
  const VectorXcd dda = steering_second_derivative(sensors_, params(0));
  // sum_i w_i stack(v)_i = Re{w^H v}
  SymMatrix c = SymMatrix::Zero(3, 3);
  c(0, 0) = w.dot(dda * s).real();
  c(0, 1) = c(1, 0) = w.dot(da).real();
  c(0, 2) = c(2, 0) = w.dot(kJ * da).real();
  return c;
}

double DoaModel::log_pdf_impl(const Observation& x, const ParameterVector& params) const {
  const VectorXcd e = unstack(x) - complex_mean(params);
  const double quad = e.dot(sigma_inv_ * e).real();
  return -static_cast<double>(sensors_) * std::log(kPi) - complex_log_det_ - quad;
}

VectorXd DoaModel::score_impl(const Observation& x, const ParameterVector& params) const {
  const VectorXcd e = unstack(x) - complex_mean(params);
  const VectorXcd we = sigma_inv_ * e;
  const Complex s(params(1), params(2));
  const VectorXcd a = steering(sensors_, params(0));
  const VectorXcd da = steering_derivative(sensors_, params(0));
  VectorXd g(3);
  g(0) = 2.0 * (da * s).dot(we).real();
  g(1) = 2.0 * a.dot(we).real();
  g(2) = 2.0 * (kJ * a).dot(we).real();
  return g;
}

std::shared_ptr<const DoaModel> doa_true(Index m, double sigma2, double rho) {
  return std::make_shared<DoaModel>("doa_true", toeplitz_covariance(m, sigma2, rho));
}

std::shared_ptr<const DoaModel> doa_assumed(Index m, double sigma2) {
  if (!(sigma2 > 0)) throw InvalidInput("doa_assumed: sigma2 must be positive");
  return std::make_shared<DoaModel>("doa_assumed",
                                    (sigma2 * MatrixXcd::Identity(m, m)).eval());
}

ParameterVector doa_parameters(double phi, Complex s) {
  ParameterVector p(3);
  p << phi, s.real(), s.imag();
  return p;
}

ClosedFormInformation closed_form_information(const MatrixXcd& sigma, double sigma2_assumed,
                                              double phi, Complex s) {
  const Index m = sigma.rows();
  const VectorXcd a = steering(m, phi);
  const VectorXcd da = steering_derivative(m, phi);
  ClosedFormInformation out;
  out.f11 = da.dot(sigma * da);
  out.f12 = a.dot(sigma * da);
  out.f22 = a.dot(sigma * a);
  const double md = static_cast<double>(m);
  const double s2 = std::norm(s);
  out.A = SymMatrix::Zero(3, 3);
  out.A.diagonal() << da.squaredNorm() * s2, md, md;
  out.A *= 2.0 / sigma2_assumed;
  const Complex f12s = out.f12 * s;
  out.B.resize(3, 3);
  out.B << out.f11.real() * s2, f12s.real(), f12s.imag(),
           f12s.real(), out.f22.real(), 0.0,
           f12s.imag(), 0.0, out.f22.real();
  out.B *= 2.0 / (sigma2_assumed * sigma2_assumed);
  return out;
}

}  // namespace misspec::doa
