#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <doctest.h>

#include "blockjm/cohort.hpp"
#include "blockjm/error.hpp"
#include "blockjm/posterior.hpp"
#include "blockjm/submodels.hpp"
#include "support.hpp"

using namespace blockjm;
using testsupport::gradient_error;
using testsupport::random_point;
using testsupport::uniform;

namespace {

struct TargetCase {
  Approach approach;
  std::size_t block;
  Linkage linkage;
};

std::vector<TargetCase> every_target(const TransitionDiagram& d) {
  std::vector<TargetCase> out{{Approach::MSM, 0, Linkage::Historical}};
  for (Linkage l : {Linkage::Concurrent, Linkage::Historical}) {
    for (std::size_t b = 0; b < decompose_cr(d).size(); ++b) out.push_back({Approach::CR, b, l});
    for (std::size_t b = 0; b < decompose_st(d).size(); ++b) out.push_back({Approach::ST, b, l});
  }
  return out;
}

Target make(const Cohort& c, const TransitionDiagram& d, const TargetCase& tc, const ModelSpec& m = {}) {
  return Target::build(c, d, tc.approach, tc.block, tc.linkage, m, {});
}

std::string describe(const Target& t) { return t.name() + " " + to_string(t.linkage()); }

ModelSpec mixed_forms(RandomEffectsScale re) {
  ModelSpec m;
  m.random_effects = re;
  m.forms[{0, 1}] = AssocForm::M2;
  m.forms[{0, 2}] = AssocForm::M3;
  m.forms[{1, 3}] = AssocForm::M3;
  m.forms[{2, 6}] = AssocForm::M2;
  return m;
}

double bivariate_normal_logpdf(double x1, double x2, double s1, double s2, double rho) {
  double z1 = x1 / s1, z2 = x2 / s2;
  double q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / (1.0 - rho * rho);
  return -std::log(2.0 * M_PI * s1 * s2 * std::sqrt(1.0 - rho * rho)) - 0.5 * q;
}

}  // namespace

TEST_CASE("gradients match central differences for every target and linkage") {
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 12, 101);
  Rng rng = make_rng(7);
  for (const auto& tc : every_target(d)) {
    Target t = make(c, d, tc);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) worst = std::max(worst, gradient_error(t, random_point(t, rng)));
    INFO(describe(t) << " worst " << worst);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("gradients for M2/M3 association and both random-effect scales") {
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 10, 202, 2);
  Rng rng = make_rng(8);
  for (auto re : {RandomEffectsScale::Centered, RandomEffectsScale::NonCentered}) {
    ModelSpec m = mixed_forms(re);
    m.age_covariate = 1;
    for (const auto& tc : every_target(d)) {
      Target t = make(c, d, tc, m);
      double worst = 0.0;
      for (int k = 0; k < 10; ++k) worst = std::max(worst, gradient_error(t, random_point(t, rng)));
      INFO(describe(t) << " " << to_string(re) << " worst " << worst);
      CHECK(worst < 1e-5);
    }
  }
}

TEST_CASE("components agree with the submodel likelihoods") {
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 15, 303);
  Rng rng = make_rng(9);
  for (auto re : {RandomEffectsScale::Centered, RandomEffectsScale::NonCentered}) {
    ModelSpec m = mixed_forms(re);
    for (const auto& tc : every_target(d)) {
      Target t = make(c, d, tc, m);
      auto u = random_point(t, rng);
      auto parts = t.components(u);
      ParameterVector p = t.to_constrained(u);
      const auto& lp = p.longitudinal;

      double event = 0.0, lon = 0.0, ref = 0.0;
      for (std::size_t i = 0; i < t.subjects().size(); ++i) {
        const Subject& s = c.subjects[t.subjects()[i]];
        const RandomEffects& b = p.random_effects[i];
        if (tc.approach == Approach::MSM) {
          std::vector<TransitionParams> all;
          for (const auto& tr : d.transitions()) all.push_back(p.of(tr));
          event += event_loglik_msm(s, d, all, lp, b);
          lon += longitudinal_loglik(lp, b, s.longitudinal);
        } else {
          const auto crs = decompose_cr(d);
          const CrBlock& cr = tc.approach == Approach::CR ? crs[tc.block] : crs[decompose_st(d)[tc.block].parent_cr_block];
          const Clock clock = tc.linkage == Linkage::Concurrent ? Clock::Local : Clock::Global;
          BlockEvent ev = block_event_data(s, cr);
          if (tc.approach == Approach::CR) {
            std::vector<TransitionParams> ps;
            for (const auto& tr : cr.transitions()) ps.push_back(p.of(tr));
            event += event_loglik_cr(ps, cr.absorbing_states, lp, b, s.covariates, ev, clock);
          } else {
            Transition tr = decompose_st(d)[tc.block].transition();
            event += event_loglik_st(p.of(tr), lp, b, s.covariates, ev, tr.to, clock);
          }
          lon += longitudinal_loglik(lp, b, link_longitudinal(s, t.subjects()[i], cr, tc.linkage).measurements);
        }
        ref += bivariate_normal_logpdf(b.b1, b.b2, lp.sigma1, lp.sigma2, lp.rho);
      }
      INFO(describe(t) << " " << to_string(re));
      CHECK(parts.event == doctest::Approx(event).epsilon(1e-11));
      CHECK(parts.longitudinal == doctest::Approx(lon).epsilon(1e-11));
      if (re == RandomEffectsScale::Centered) {
        CHECK(parts.random_effects == doctest::Approx(ref).epsilon(1e-11));
      } else {
        double zz = 0.0;
        for (std::size_t i = 0; i < t.subjects().size(); ++i) {
          double z1 = u[t.random_effects_offset() + 2 * i], z2 = u[t.random_effects_offset() + 2 * i + 1];
          zz += -std::log(2.0 * M_PI) - 0.5 * (z1 * z1 + z2 * z2);
        }
        CHECK(parts.random_effects == doctest::Approx(zz).epsilon(1e-12));
      }
      CHECK(parts.total() == doctest::Approx(t.log_density(u)).epsilon(1e-12));
    }
  }
}

TEST_CASE("priors and Jacobian at constrained values") {
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 4, 404);
  Target t = Target::build(c, d, Approach::CR, 1, Linkage::Historical, mixed_forms(RandomEffectsScale::Centered), {});
  Rng rng = make_rng(10);
  auto u = random_point(t, rng);
  ParameterVector p = t.to_constrained(u);
  const auto& lp = p.longitudinal;

  boost::math::normal_distribution<double> n100(0.0, 100.0);
  boost::math::beta_distribution<double> b55(0.5, 0.5);
  auto inv_gamma = [](double x) { return 0.01 * std::log(0.01) - std::lgamma(0.01) - 1.01 * std::log(x) - 0.01 / x; };
  auto half_cauchy = [](double x) { return std::log(2.0 / (M_PI * (1.0 + x * x))); };
  double prior = std::log(boost::math::pdf(n100, lp.beta1)) + std::log(boost::math::pdf(n100, lp.beta2)) +
                 inv_gamma(lp.sigma_e2) + inv_gamma(lp.sigma1 * lp.sigma1) + inv_gamma(lp.sigma2 * lp.sigma2) +
                 std::log(boost::math::pdf(b55, 0.5 * (lp.rho + 1.0)));
  double jac = std::log(lp.sigma_e2) + std::log(lp.sigma1 * lp.sigma1) + std::log(lp.sigma2 * lp.sigma2) +
               std::log(0.5 * (1.0 - lp.rho * lp.rho));
  for (const auto& tp : p.transition_params) {
    prior += half_cauchy(tp.shape) + half_cauchy(tp.scale);
    jac += std::log(tp.shape) + std::log(tp.scale);
    for (double g : tp.gamma) prior += std::log(boost::math::pdf(n100, g));
    for (std::size_t a = 0; a < num_assoc(tp.form); ++a) prior += std::log(boost::math::pdf(n100, tp.alpha[a]));
  }
  auto parts = t.components(u);
  CHECK(parts.prior == doctest::Approx(prior).epsilon(1e-12));
  CHECK(parts.log_jacobian == doctest::Approx(jac).epsilon(1e-12));

  double lj0 = 0.0, lj1 = 0.0;
  auto v = u;
  v[2] = 0.0;
  t.to_constrained(v, &lj0);
  v[2] = std::log(4.0);
  t.to_constrained(v, &lj1);
  CHECK(lj1 - lj0 == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("all-zero unconstrained point") {
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 3, 505);
  ModelSpec m;
  m.random_effects = RandomEffectsScale::NonCentered;
  Target t = Target::build(c, d, Approach::MSM, 0, Linkage::Historical, m, {});
  std::vector<double> u(t.dim(), 0.0);
  ParameterVector p = t.to_constrained(u);
  CHECK(p.longitudinal.sigma_e2 == 1.0);
  CHECK(p.longitudinal.sigma1 == 1.0);
  CHECK(p.longitudinal.sigma2 == 1.0);
  CHECK(p.longitudinal.rho == 0.0);
  for (const auto& tp : p.transition_params) {
    CHECK(tp.shape == 1.0);
    CHECK(tp.scale == 1.0);
  }
  for (const auto& b : p.random_effects) {
    CHECK(b.b1 == 0.0);
    CHECK(b.b2 == 0.0);
  }
  // With L = I, b equals z.
  u[t.random_effects_offset()] = 0.7;
  u[t.random_effects_offset() + 1] = -0.4;
  p = t.to_constrained(u);
  CHECK(p.random_effects[0].b1 == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(p.random_effects[0].b2 == doctest::Approx(-0.4).epsilon(1e-15));
}

TEST_CASE("constrained round trip") {
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 8, 606);
  Rng rng = make_rng(11);
  for (auto re : {RandomEffectsScale::Centered, RandomEffectsScale::NonCentered}) {
    for (const auto& tc : every_target(d)) {
      Target t = make(c, d, tc, mixed_forms(re));
      for (int k = 0; k < 5; ++k) {
        auto u = random_point(t, rng);
        auto back = t.from_constrained(t.to_constrained(u));
        REQUIRE(back.size() == u.size());
        double worst = 0.0;
        for (std::size_t j = 0; j < u.size(); ++j) worst = std::max(worst, std::abs(back[j] - u[j]) / std::max(1.0, std::abs(u[j])));
        CHECK(worst < 1e-12);
      }
      CHECK(t.constrained_row(random_point(t, rng)).size() == t.constrained_names().size());
    }
  }
}

TEST_CASE("zero-subject target is prior plus Jacobian") {
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 5, 707);
  Target t = Target::build_with_subjects(c, d, Approach::CR, 0, Linkage::Historical, {}, {}, {});
  CHECK(t.dim() == t.random_effects_offset());
  Rng rng = make_rng(12);
  for (int k = 0; k < 5; ++k) {
    auto u = random_point(t, rng);
    u[0] = uniform(rng, -50.0, 50.0);
    u[1] = uniform(rng, -50.0, 50.0);
    auto parts = t.components(u);
    CHECK(parts.event == 0.0);
    CHECK(parts.longitudinal == 0.0);
    CHECK(parts.random_effects == 0.0);
    CHECK(t.log_density(u) == doctest::Approx(parts.prior + parts.log_jacobian).epsilon(1e-14));
    std::vector<double> g(t.dim());
    t.log_density_gradient(u, g);
    CHECK(g[0] == doctest::Approx(-u[0] / 1e4).epsilon(1e-13));
    CHECK(g[1] == doctest::Approx(-u[1] / 1e4).epsilon(1e-13));
  }
}

TEST_CASE("log density is invariant under subject order") {
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 40, 808);
  Cohort r = c;
  std::reverse(r.subjects.begin(), r.subjects.end());
  std::swap(r.subjects[3], r.subjects[17]);
  Rng rng = make_rng(13);
  for (const auto& tc : every_target(d)) {
    Target a = make(c, d, tc), b = make(r, d, tc);
    REQUIRE(a.dim() == b.dim());
    auto ua = random_point(a, rng);
    // Same values, keyed by subject id.
    std::vector<double> ub(ua.begin(), ua.begin() + a.random_effects_offset());
    ub.resize(b.dim());
    for (std::size_t i = 0; i < b.subject_ids().size(); ++i) {
      auto it = std::find(a.subject_ids().begin(), a.subject_ids().end(), b.subject_ids()[i]);
      std::size_t ia = static_cast<std::size_t>(it - a.subject_ids().begin());
      ub[b.random_effects_offset() + 2 * i] = ua[a.random_effects_offset() + 2 * ia];
      ub[b.random_effects_offset() + 2 * i + 1] = ua[a.random_effects_offset() + 2 * ia + 1];
    }
    double la = a.log_density(ua), lb = b.log_density(ub);
    INFO(describe(a));
    CHECK(std::abs(la - lb) <= 1e-12 * std::abs(la));
  }
}

TEST_CASE("gradient vanishes at a mode found without it") {
  // Newton iterations on finite-difference derivatives of the log density
  // alone locate the mode; the exact gradient must vanish there.
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 6, 909);
  for (auto& s : c.subjects) {
    for (auto& m : s.longitudinal) m.value = 2.0 + 0.1 * m.time + 0.3 * std::sin(3.0 * m.time);
  }
  Target t = Target::build(c, d, Approach::ST, 0, Linkage::Historical, {}, {});
  const std::size_t n = t.dim();
  std::vector<double> u(n, 0.0);
  u[0] = 2.0;
  u[1] = 0.1;
  for (std::size_t i = 0; i < t.subjects().size(); ++i) {
    u[t.random_effects_offset() + 2 * i] = 2.0;
    u[t.random_effects_offset() + 2 * i + 1] = 0.1;
  }
  const double h = 1e-4;
  auto f = [&](const std::vector<double>& x) { return t.log_density(x); };
  auto fd_grad = [&](std::vector<double> x) {
    std::vector<double> g(n);
    for (std::size_t j = 0; j < n; ++j) {
      // Fourth-order stencil.
      double x0 = x[j];
      double v[4];
      const double off[4] = {-2.0, -1.0, 1.0, 2.0};
      for (int k = 0; k < 4; ++k) {
        x[j] = x0 + off[k] * h;
        v[k] = f(x);
      }
      x[j] = x0;
      g[j] = (v[0] - 8.0 * v[1] + 8.0 * v[2] - v[3]) / (12.0 * h);
    }
    return g;
  };
  for (int it = 0; it < 200; ++it) {
    auto g = fd_grad(u);
    // Hessian by differences of the difference gradient.
    std::vector<double> H(n * n);
    for (std::size_t j = 0; j < n; ++j) {
      auto x = u;
      x[j] += h;
      auto gp = fd_grad(x);
      x[j] -= 2.0 * h;
      auto gm = fd_grad(x);
      for (std::size_t k = 0; k < n; ++k) H[j * n + k] = (gp[k] - gm[k]) / (2.0 * h);
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < j; ++k) H[j * n + k] = H[k * n + j] = 0.5 * (H[j * n + k] + H[k * n + j]);
    }
    // Levenberg-damped Newton step on -f: solve (-H + lambda I) s = g.
    double lambda = 1e-8;
    std::vector<double> step;
    const double f0 = f(u);
    for (;; lambda *= 10.0) {
      std::vector<double> A(n * n), rhs = g;
      for (std::size_t j = 0; j < n * n; ++j) A[j] = -H[j];
      for (std::size_t j = 0; j < n; ++j) A[j * n + j] += lambda;
      // Gaussian elimination with partial pivoting.
      bool ok = true;
      for (std::size_t col = 0; col < n && ok; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
          if (std::abs(A[r * n + col]) > std::abs(A[piv * n + col])) piv = r;
        }
        if (A[piv * n + col] == 0.0) ok = false;
        for (std::size_t k = 0; k < n; ++k) std::swap(A[col * n + k], A[piv * n + k]);
        std::swap(rhs[col], rhs[piv]);
        for (std::size_t r = col + 1; r < n && ok; ++r) {
          double m = A[r * n + col] / A[col * n + col];
          for (std::size_t k = col; k < n; ++k) A[r * n + k] -= m * A[col * n + k];
          rhs[r] -= m * rhs[col];
        }
      }
      step.assign(n, 0.0);
      for (std::size_t r = n; r-- > 0 && ok;) {
        double s = rhs[r];
        for (std::size_t k = r + 1; k < n; ++k) s -= A[r * n + k] * step[k];
        step[r] = s / A[r * n + r];
      }
      auto x = u;
      for (std::size_t j = 0; j < n; ++j) x[j] += step[j];
      if (ok && f(x) >= f0 - 1e-12) {
        u = x;
        break;
      }
      if (lambda > 1e12) break;
    }
    double mx = 0.0;
    for (double s : step) mx = std::max(mx, std::abs(s));
    if (mx < 1e-10) break;
  }
  std::vector<double> g(n);
  t.log_density_gradient(u, g);
  double gmax = 0.0;
  for (double v : g) gmax = std::max(gmax, std::abs(v));
  INFO("sup norm " << gmax);
  CHECK(gmax < 1e-6);
}

TEST_CASE("target construction") {
  auto d = testsupport::model1_diagram();
  Cohort c = testsupport::random_cohort(d, 30, 111);
  Target cr = Target::build(c, d, Approach::CR, 1, Linkage::Concurrent, {}, {});
  CHECK(cr.name() == "cr_1");
  CHECK(cr.clock() == Clock::Local);
  CHECK(cr.transitions() == std::vector<Transition>{{1, 3}, {1, 4}});
  CHECK(cr.subjects() == block_risk_set(c, decompose_cr(d)[1]));
  Target st = Target::build(c, d, Approach::ST, 5, Linkage::Historical, {}, {});
  CHECK(st.name() == "st_2_6");
  CHECK(st.clock() == Clock::Global);
  Target msm = Target::build(c, d, Approach::MSM, 0, Linkage::Concurrent, {}, {});
  CHECK(msm.subjects().size() == c.subjects.size());
  CHECK(msm.clock() == Clock::Global);
  CHECK(msm.transitions().size() == 6);
  CHECK(msm.parameter_names()[msm.transition_offset(0)] == "log_shape[0->1]");
  CHECK(msm.parameter_names()[msm.random_effects_offset()] == "icpt[" + c.subjects[0].id + "]");
  CHECK(msm.dim() == 6 + 6 * 4 + 2 * c.subjects.size());
  CHECK(to_string(RandomEffectsScale::NonCentered) == "non-centered");
  CHECK(random_effects_scale_from_string("centered") == RandomEffectsScale::Centered);
  CHECK_THROWS_AS(random_effects_scale_from_string("sideways"), Error);
}
