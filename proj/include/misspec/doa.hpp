#pragma once

#include <complex>
#include <memory>

#include "misspec/models.hpp"

namespace misspec::doa {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

/// Sensor positions in half-wavelengths, d_m = m - (M + 1) / 2, m = 1..M.
VectorXd sensor_positions(Index m);

/// a_m(phi) = exp(j pi d_m sin phi) for the centered half-wavelength ULA.
VectorXcd steering(Index m, double phi);
/// d a / d phi.
VectorXcd steering_derivative(Index m, double phi);
/// d^2 a / d phi^2.
VectorXcd steering_second_derivative(Index m, double phi);

/// Sigma_ij = sigma2 * rho^|i - j|.
MatrixXcd toeplitz_covariance(Index m, double sigma2, double rho);

/// [Re v; Im v].
VectorXd stack(const VectorXcd& v);
VectorXcd unstack(const VectorXd& v);

/// Real covariance of [Re v; Im v] for v ~ CN(0, sigma).
SymMatrix real_covariance(const MatrixXcd& sigma);

/// Single narrowband far-field source observed in circular complex Gaussian
/// noise: x ~ CN(a(phi) s, Sigma), real parameters [phi, s_R, s_I] with
/// phi in (-pi/2, pi/2). Observations are stacked [Re x; Im x].
class DoaModel final : public GaussianFamily {
 public:
  DoaModel(std::string name, const MatrixXcd& sigma);

  std::string name() const override { return name_; }
  Index param_dim() const override { return 3; }
  bool in_domain(const ParameterVector& params) const override;

  Index sensors() const { return sensors_; }
  const MatrixXcd& noise_covariance() const { return sigma_; }
  const MatrixXcd& noise_precision() const { return sigma_inv_; }

  VectorXcd complex_mean(const ParameterVector& params) const;
  VectorXd mean(const ParameterVector& params) const override;
  MatrixXd mean_jacobian(const ParameterVector& params) const override;
  SymMatrix mean_curvature(const ParameterVector& params, const VectorXd& weights) const override;

 protected:
  /// -M log pi - log det Sigma - (x - mu)^H Sigma^-1 (x - mu).
  double log_pdf_impl(const Observation& x, const ParameterVector& params) const override;
  /// 2 Re{(d mu / d theta_k)^H Sigma^-1 (x - mu)}.
  VectorXd score_impl(const Observation& x, const ParameterVector& params) const override;

 private:
  std::string name_;
  Index sensors_;
  MatrixXcd sigma_;
  MatrixXcd sigma_inv_;
  double complex_log_det_;
};

/// True model: CN(a(phi) s, Toeplitz(sigma2, rho)).
std::shared_ptr<const DoaModel> doa_true(Index m, double sigma2, double rho);
/// Assumed model: CN(a(phi) s, sigma2 I).
std::shared_ptr<const DoaModel> doa_assumed(Index m, double sigma2);

/// [phi, Re s, Im s].
ParameterVector doa_parameters(double phi, Complex s);

/// Closed-form assumed-model information terms for the white-noise
/// assumption with variance sigma2_assumed and true noise covariance sigma:
///   A = (2 / sigma2_assumed) diag(|a'|^2 |s|^2, M, M)
///   B = (2 / sigma2_assumed^2) [[F11 |s|^2, Re{F12 s}, Im{F12 s}],
///                               [Re{F12 s}, F22, 0], [Im{F12 s}, 0, F22]]
/// with F11 = a'^H Sigma a', F12 = a^H Sigma a', F22 = a^H Sigma a.
struct ClosedFormInformation {
  SymMatrix A;
  SymMatrix B;
  Complex f11;
  Complex f12;
  Complex f22;
};
ClosedFormInformation closed_form_information(const MatrixXcd& sigma, double sigma2_assumed,
                                              double phi, Complex s);

}  // namespace misspec::doa
