#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "misspec/bounds.hpp"
#include "misspec/equivalent.hpp"

using namespace misspec;

namespace {

ParameterVector scalar(double v) { return ParameterVector::Constant(1, v); }

MisspecifiedProblem box1(Index n) {
  return {box1_true(n, 1.0, 0.1), box1_assumed(n, 1.0), scalar(0.0)};
}

// c(gamma) for identity g, N = 1, sigma2 = 1, eps = 0.1, from
// tests/oracles/oracles.py (adaptive quadrature).
const double kOracleC05 = 0.8935973471085159;
const double kOracleC10 = 0.6376281516217733;
// log p~(x; 0.5) at x = -2, -0.5, 0, 0.7, 3 from the same oracle.
const double kTiltX[5] = {-2.0, -0.5, 0.0, 0.7, 3.0};
const double kTiltLog[5] = {-20.780145986707648, -1.2801459867076501, 0.21985401329234985,
                            -1.8801459867076495, -43.28014598670765};

}  // namespace

TEST_CASE("g-function validation") {
  CHECK(identity_g().g_prime_at_one() == 1.0);
  CHECK(vuong_g().g_at_one() == 1.0);
  CHECK(vuong_g().g_prime_at_one() == doctest::Approx(-0.5));
  CHECK(g_function_by_name("vuong").name() == "vuong");
  CHECK_THROWS_AS(g_function_by_name("cubic"), InvalidInput);
  CHECK_THROWS_AS(GFunction("two", [](double z) { return 1 + z; }, [](double) { return 1.0; }),
                  InvalidInput);
  CHECK_THROWS_AS(GFunction("flat", [](double) { return 1.0; }, [](double) { return 0.0; }),
                  InvalidInput);
  CHECK_THROWS_AS(GFunction("wrong", [](double z) { return z * z; }, [](double) { return 1.0; }),
                  InvalidInput);
}

TEST_CASE("likelihood ratio") {
  const MisspecifiedProblem p{box1_true(1, 1.0, 0.1), box1_assumed(1, 1.0), scalar(0.0)};
  const EquivalentModel m(p, identity_g(), scalar(0.0));
  const Observation x0 = Observation::Zero(1);
  CHECK(m.likelihood_ratio(x0, scalar(0.0)) == 1.0);
  CHECK(m.likelihood_ratio(x0, scalar(1.0)) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  RngStream rng(1, 0);
  for (int i = 0; i < 20; ++i) {
    const Observation x = rng.normal_vector(1) * 4.0;
    const double lr = m.log_likelihood_ratio(x, scalar(0.7));
    const double direct = p.assumed_model->log_pdf(x, scalar(0.7)) - p.assumed_model->log_pdf(x, scalar(0.0));
    CHECK(std::abs(lr - direct) <= 1e-14 * std::max(1.0, std::abs(direct)));
  }
  // Far tails stay finite in log space.
  CHECK(std::isfinite(m.log_likelihood_ratio(Observation::Constant(1, 1e3), scalar(2.0))));
}

TEST_CASE("normalizer") {
  const MisspecifiedProblem p{box1_true(1, 1.0, 0.1), box1_assumed(1, 1.0), scalar(0.0)};
  for (const auto& g : {identity_g(), vuong_g()}) {
    const EquivalentModel m(p, g, scalar(0.0));
    const auto at0 = m.normalizer(scalar(0.0), 10, RngStream(1, 0));
    CHECK(at0.value == 1.0);
    CHECK(at0.std_error == 0.0);
  }
  const EquivalentModel m(p, identity_g(), scalar(0.0));
  const auto c05 = m.normalizer(scalar(0.5), 100000, RngStream(2, 0));
  const auto c10 = m.normalizer(scalar(1.0), 100000, RngStream(2, 1));
  CHECK(std::abs(c05.value - kOracleC05) < 5 * c05.std_error);
  CHECK(std::abs(c10.value - kOracleC10) < 5 * c10.std_error);
  // Cached result is returned unchanged.
  const auto again = m.normalizer(scalar(0.5), 100000, RngStream(2, 0));
  CHECK(again.value == c05.value);
  // Error scaling with n.
  const auto small = m.normalizer(scalar(0.5), 20000, RngStream(3, 0));
  const auto large = m.normalizer(scalar(0.5), 80000, RngStream(3, 1));
  CHECK(small.std_error / large.std_error == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("tilted density matches the quadrature oracle") {
  const MisspecifiedProblem p{box1_true(1, 1.0, 0.1), box1_assumed(1, 1.0), scalar(0.0)};
  const EquivalentModel m(p, identity_g(), scalar(0.0));
  for (int i = 0; i < 5; ++i) {
    const Observation x = Observation::Constant(1, kTiltX[i]);
    CHECK(m.log_pdf_equivalent(x, scalar(0.5), kOracleC05) ==
          doctest::Approx(kTiltLog[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(m.log_pdf_equivalent(Observation::Zero(1), scalar(0.5), 0.0), InvalidInput);
}

TEST_CASE("pointwise equivalence at gamma0 is exact") {
  const auto prob = box1(5);
  for (const auto& g : {identity_g(), vuong_g()}) {
    const EquivalentModel m(prob, g, scalar(0.0));
    RngStream rng(4, 0);
    for (int i = 0; i < 1000; ++i) {
      const Observation x = 3.0 * rng.normal_vector(5);
      CHECK(m.log_pdf_equivalent(x, scalar(0.0), 1.0) == prob.true_model->log_pdf(x, prob.theta0));
    }
  }
}

TEST_CASE("equivalent score at the base point") {
  const auto prob = box1(4);
  RngStream rng(5, 0);
  for (const auto& g : {identity_g(), vuong_g()}) {
    CAPTURE(g.name());
    const EquivalentModel m(prob, g, scalar(0.0));
    for (int i = 0; i < 200; ++i) {
      const Observation x = prob.true_model->sample(prob.theta0, rng);
      const VectorXd sf = prob.assumed_model->score(x, scalar(0.0));
      CHECK((m.equivalent_score_at_base(x) - g.g_prime_at_one() * sf).cwiseAbs().maxCoeff() < 1e-12);
    }
    const auto fit = verify_proportional_score(m, 32, RngStream(6, 0));
    CHECK(std::abs(fit.w_matrix(0, 0) - 1.0 / g.g_prime_at_one()) < 1e-12);
    CHECK(fit.max_residual < 1e-12);
  }
}

TEST_CASE("equivalent score matches a finite difference of log p~ in gamma") {
  // d/dgamma [log g(r(x; gamma)) - log c(gamma)] at gamma0, with c from
  // paired Monte Carlo draws (common random numbers on both sides).
  const auto prob = box1(3);
  const double h = 1e-3;
  const std::size_t n = 200000;
  for (const auto& g : {identity_g(), vuong_g()}) {
    CAPTURE(g.name());
    const EquivalentModel m(prob, g, scalar(0.0));
    RngStream draws(7, 0);
    MomentAccumulator diff(1);
    const auto xs = draw_samples(*prob.true_model, prob.theta0, n, draws);
    for (const auto& x : xs) {
      VectorXd d(1);
      d(0) = (g(m.likelihood_ratio(x, scalar(h))) - g(m.likelihood_ratio(x, scalar(-h)))) / (2 * h);
      diff.add(d);
    }
    // d log c / d gamma ~ (c+ - c-) / (2h), with c(gamma0) = 1.
    const double dlogc = diff.mean()(0);
    const double dlogc_se = diff.std_error()(0);
    RngStream probe(8, 0);
    for (int i = 0; i < 5; ++i) {
      const Observation x = prob.true_model->sample(prob.theta0, probe);
      const double up = std::log(g(m.likelihood_ratio(x, scalar(h))));
      const double down = std::log(g(m.likelihood_ratio(x, scalar(-h))));
      const double fd = (up - down) / (2 * h) - dlogc;
      const double analytic = m.equivalent_score_at_base(x)(0);
      CHECK(std::abs(fd - analytic) <= 5 * dlogc_se + 1e-5 * std::max(1.0, std::abs(analytic)));
    }
  }
}

TEST_CASE("box3: the true density itself has a proportional score") {
  const auto p = white_mean_model(5, 2.0);
  const auto f = white_mean_model(5, 1.0);
  const auto fit = fit_score_map([&](RngStream& r) { return p->sample(scalar(0.0), r); },
                                 [&](const Observation& x) { return p->score(x, scalar(0.0)); },
                                 [&](const Observation& x) { return f->score(x, scalar(0.0)); }, 16,
                                 RngStream(9, 0));
  CHECK(std::abs(fit.w_matrix(0, 0) - 2.0) < 1e-12);
  CHECK(fit.max_residual < 1e-12);

  CHECK_THROWS_AS(fit_score_map([&](RngStream&) { return Observation::Zero(5); },
                                [&](const Observation& x) { return p->score(x, scalar(0.0)); },
                                [&](const Observation& x) { return f->score(x, scalar(0.0)); }, 4,
                                RngStream(9, 1)),
                  ConditioningError);
}

TEST_CASE("naive MCRB through the equivalent model equals the MCRB") {
  const MisspecifiedProblem prob{box1_true(10, 1.0, 0.05), box1_assumed(10, 1.0), scalar(0.0)};
  const double mcrb = compute_mcrb(info_analytic(prob, scalar(0.0)))(0, 0);
  for (const auto& g : {identity_g(), vuong_g()}) {
    const EquivalentModel m(prob, g, scalar(0.0));
    const auto est = naive_mcrb_via_equivalent(m, 100000, 20, RngStream(10, 0));
    CHECK(est.std_error(0, 0) > 0);
    CHECK(std::abs(est.value(0, 0) - mcrb) < 5 * est.std_error(0, 0));
  }
  // The true model gives the looser oracle value instead.
  const auto naive = compute_naive_mcrb(info_analytic(prob, scalar(0.0)))(0, 0);
  CHECK(naive < mcrb);
}

TEST_CASE("pseudo-true parameter under the equivalent model") {
  const auto prob = box1(4);
  const double mcrb = compute_mcrb(info_analytic(prob, scalar(0.0)))(0, 0);
  for (const auto& g : {identity_g(), vuong_g()}) {
    const EquivalentModel m(prob, g, scalar(0.0));
    const auto sol = equivalent_pseudo_true(m, scalar(0.0), scalar(1.0), 50000, RngStream(11, 0));
    CHECK(sol.converged);
    CHECK(std::abs(sol.theta_star(0)) < 5 * std::sqrt(mcrb / 50000));
  }
}

TEST_CASE("equivalent model construction errors") {
  CHECK_THROWS_AS(EquivalentModel(box1(3), identity_g(), ParameterVector::Zero(2)), InvalidInput);
}
