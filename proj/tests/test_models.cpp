#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>

#include "misspec/doa.hpp"
#include "misspec/models.hpp"

using namespace misspec;

namespace {

/// Scalar Laplace-like density with no analytic derivatives: exercises the
/// finite-difference fallbacks and the missing sampler.
class SoftLaplace final : public DensityModel {
 public:
  std::string name() const override { return "soft_laplace"; }
  Index param_dim() const override { return 1; }
  Index obs_dim() const override { return 1; }
  Capabilities capabilities() const override { return {false, false, false}; }

 protected:
  double log_pdf_impl(const Observation& x, const ParameterVector& p) const override {
    const double r = x(0) - p(0);
    return -std::sqrt(1.0 + r * r);
  }
};

std::vector<std::pair<std::string, ModelPtr>> gaussian_models() {
  std::vector<std::pair<std::string, ModelPtr>> out;
  out.emplace_back("box1_true", box1_true(6, 1.5, 0.2));
  out.emplace_back("box1_assumed", box1_assumed(6, 1.5));
  out.emplace_back("white", white_mean_model(4, 0.7));
  MatrixXd design(5, 2);
  design << 1, 0.5, -1, 2, 0.3, 0.3, 2, -1, 0, 1;
  MatrixXd l(5, 5);
  RngStream rng(3, 3);
  l = rng.normal_vector(25).reshaped(5, 5);
  const MatrixXd cov = l * l.transpose() + 0.5 * MatrixXd::Identity(5, 5);
  out.emplace_back("linear", std::make_shared<LinearGaussianModel>("linear", design, cov));
  out.emplace_back("doa_true", doa::doa_true(8, 0.1, 0.5));
  out.emplace_back("doa_assumed", doa::doa_assumed(8, 0.1));
  return out;
}

ParameterVector random_params(const DensityModel& m, RngStream& rng) {
  ParameterVector p = rng.normal_vector(m.param_dim());
  if (m.param_dim() == 3) p(0) = (rng.uniform() - 0.5) * 2.4;  // |phi| < 1.2
  return p;
}

}  // namespace

TEST_CASE("Gaussian log-density matches the textbook formula") {
  const auto m = white_mean_model(1, 2.0);
  Observation x(1);
  x << 1.5;
  const double expected = -0.5 * std::log(2 * std::numbers::pi * 2.0) - (1.5 - 0.5) * (1.5 - 0.5) / 4.0;
  CHECK(m->log_pdf(x, ParameterVector::Constant(1, 0.5)) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("analytic scores and Hessians agree with finite differences") {
  for (const auto& [name, model] : gaussian_models()) {
    CAPTURE(name);
    RngStream rng(17, std::hash<std::string>{}(name));
    double worst_score = 0, worst_hess = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const ParameterVector p = random_params(*model, rng);
      const Observation x = model->sample(p, rng) + 0.3 * rng.normal_vector(model->obs_dim());
      const VectorXd s = model->score(x, p);
      const VectorXd s_fd =
          fd_gradient<double>([&](const VectorXd& q) { return model->log_pdf(x, q); }, p);
      worst_score = std::max(worst_score, (s - s_fd).cwiseAbs().maxCoeff() /
                                              std::max(1.0, s.cwiseAbs().maxCoeff()));
      const MatrixXd h = model->hessian(x, p);
      const MatrixXd h_fd =
          fd_jacobian<double>([&](const VectorXd& q) { return model->score(x, q); }, p, 1e-6);
      worst_hess = std::max(worst_hess, (h - h_fd).cwiseAbs().maxCoeff() /
                                            std::max(1.0, h.cwiseAbs().maxCoeff()));
      CHECK(is_symmetric(h));
    }
    CHECK(worst_score < 1e-6);
    CHECK(worst_hess < 1e-5);
  }
}

TEST_CASE("finite-difference fallbacks and missing capabilities") {
  const SoftLaplace m;
  Observation x(1);
  x << 0.4;
  const ParameterVector p = ParameterVector::Constant(1, -0.1);
  const double r = 0.5;
  CHECK(m.score(x, p)(0) == doctest::Approx(r / std::sqrt(1 + r * r)).epsilon(1e-8));
  CHECK(m.hessian(x, p)(0, 0) == doctest::Approx(-1.0 / std::pow(1 + r * r, 1.5)).epsilon(1e-5));
  RngStream rng(1, 1);
  CHECK_THROWS_AS(m.sample(p, rng), CapabilityError);
}

TEST_CASE("argument validation") {
  const auto m = box1_assumed(3, 1.0);
  CHECK_THROWS_AS(m->log_pdf(Observation::Zero(2), ParameterVector::Zero(1)), InvalidInput);
  CHECK_THROWS_AS(m->score(Observation::Zero(3), ParameterVector::Zero(2)), InvalidInput);
  Observation bad = Observation::Zero(3);
  bad(1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(m->log_pdf(bad, ParameterVector::Zero(1)), InvalidInput);
  CHECK_THROWS_AS(box1_true(0, 1.0, 0.1), InvalidInput);
  CHECK_THROWS_AS(box1_true(3, 1.0, -0.1), InvalidInput);
  CHECK_THROWS_AS(white_mean_model(3, 0.0), InvalidInput);
  MatrixXd asym = MatrixXd::Identity(2, 2);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(scalar_mean_model(asym), InvalidInput);
  CHECK_THROWS_AS(scalar_mean_model(-MatrixXd::Identity(2, 2)), InvalidInput);

  const MisspecifiedProblem bad_pair{box1_true(3, 1, 0.1), box1_assumed(4, 1),
                                     ParameterVector::Zero(1)};
  CHECK_THROWS_AS(bad_pair.validate(), InvalidInput);
  const MisspecifiedProblem bad_theta{box1_true(3, 1, 0.1), box1_assumed(3, 1),
                                      ParameterVector::Zero(2)};
  CHECK_THROWS_AS(bad_theta.validate(), InvalidInput);
  const MisspecifiedProblem ok{box1_true(3, 1, 0.1), box1_assumed(3, 1), ParameterVector::Zero(1)};
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.at(ParameterVector::Ones(1)).theta0(0) == 1.0);
}

TEST_CASE("sample moments of the box1 true model") {
  const auto p = box1_true(3, 1.0, 0.05);
  RngStream rng(4, 0);
  const auto xs = draw_samples(*p, ParameterVector::Constant(1, 2.0), 100000, rng);
  REQUIRE(xs.size() == 100000);
  MomentAccumulator acc(3);
  for (const auto& x : xs) acc.add(x);
  const VectorXd var = acc.variance();
  CHECK(var(0) == doctest::Approx(0.05).epsilon(0.03));
  CHECK(var(1) == doctest::Approx(1.0).epsilon(0.03));
  CHECK(std::abs(acc.mean()(0) - 2.0) < 5 * acc.std_error()(0));
}

TEST_CASE("centered ULA steering vectors") {
  const Index m = 8;
  const double phi = std::numbers::pi / 8;
  const auto d = doa::sensor_positions(m);
  CHECK(d(0) == doctest::Approx(-3.5));
  CHECK(d.sum() == doctest::Approx(0.0));
  const auto a = doa::steering(m, phi);
  const auto da = doa::steering_derivative(m, phi);
  const auto dda = doa::steering_second_derivative(m, phi);
  CHECK(std::abs(a.dot(da)) < 1e-12);
  const double h = 1e-6;
  const Eigen::VectorXcd fd1 = (doa::steering(m, phi + h) - doa::steering(m, phi - h)) / (2 * h);
  const Eigen::VectorXcd fd2 =
      (doa::steering_derivative(m, phi + h) - doa::steering_derivative(m, phi - h)) / (2 * h);
  CHECK((fd1 - da).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((fd2 - dda).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS_AS(doa::toeplitz_covariance(4, 1.0, 1.0), InvalidInput);
  CHECK_THROWS_AS(doa::toeplitz_covariance(4, 1.0, -0.1), InvalidInput);
}

TEST_CASE("complex and stacked real forms of the DOA density agree") {
  const auto model = doa::doa_true(6, 0.3, 0.6);
  RngStream rng(8, 2);
  const SymMatrix c = doa::real_covariance(model->noise_covariance());
  const MatrixXd ci = c.inverse();
  const double logdet = std::log(c.determinant());
  for (int t = 0; t < 20; ++t) {
    const ParameterVector p = doa::doa_parameters(0.4 * rng.normal(), {rng.normal(), rng.normal()});
    const Observation x = model->sample(p, rng);
    const VectorXd r = x - model->mean(p);
    const double real_form = -0.5 * static_cast<double>(x.size()) * std::log(2 * std::numbers::pi) -
                             0.5 * logdet - 0.5 * r.dot(ci * r);
    CHECK(model->log_pdf(x, p) == doctest::Approx(real_form).epsilon(1e-12));
    const VectorXd generic = model->mean_jacobian(p).transpose() * (ci * r);
    CHECK((model->score(x, p) - generic).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK_THROWS_AS(model->log_pdf(Observation::Zero(12), doa::doa_parameters(1.6, {1, 0})),
                  InvalidInput);
}

TEST_CASE("true score has zero mean under its own model") {
  for (const auto& [name, model] : gaussian_models()) {
    CAPTURE(name);
    RngStream rng(21, std::hash<std::string>{}(name));
    const ParameterVector p = random_params(*model, rng);
    MomentAccumulator acc(model->param_dim());
    for (int i = 0; i < 20000; ++i) acc.add(model->score(model->sample(p, rng), p));
    const VectorXd m = acc.mean(), se = acc.std_error();
    for (Index k = 0; k < m.size(); ++k) CHECK(std::abs(m(k)) < 5 * se(k));
  }
}
