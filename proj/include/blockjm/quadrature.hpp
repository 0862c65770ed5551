#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace blockjm::quadrature {

inline constexpr std::size_t kPoints = 15;

// 15-point Gauss-Legendre rule on [-1, 1], ascending nodes.
inline constexpr std::array<double, kPoints> kNodes = {
    -0.987992518020485428489565718586612581L, -0.937273392400705904307758947710209471L,
    -0.848206583410427216200648320774216851L, -0.724417731360170047416186054613938010L,
    -0.570972172608538847537226737253910641L, -0.394151347077563369897207370981045468L,
    -0.201194093997434522300628303394596208L, 0.0L,
    0.201194093997434522300628303394596208L,  0.394151347077563369897207370981045468L,
    0.570972172608538847537226737253910641L,  0.724417731360170047416186054613938010L,
    0.848206583410427216200648320774216851L,  0.937273392400705904307758947710209471L,
    0.987992518020485428489565718586612581L,
};

inline constexpr std::array<double, kPoints> kWeights = {
    0.0307532419961172683546283935772044177L, 0.0703660474881081247092674164506673385L,
    0.107159220467171935011869546685869303L,  0.139570677926154314447804794511028323L,
    0.166269205816993933553200860481208811L,  0.186161000015562211026800561866422825L,
    0.198431485327111576456118326443839325L,  0.202578241925561272880620199967519315L,
    0.198431485327111576456118326443839325L,  0.186161000015562211026800561866422825L,
    0.166269205816993933553200860481208811L,  0.139570677926154314447804794511028323L,
    0.107159220467171935011869546685869303L,  0.0703660474881081247092674164506673385L,
    0.0307532419961172683546283935772044177L,
};

/// Nodes mapped to [0, T] with their scaled weights.
struct Rule {
  std::array<double, kPoints> nodes{};
  std::array<double, kPoints> weights{};
};

inline Rule on_interval(double T) {
  Rule r;
  double half = 0.5 * T;
  for (std::size_t q = 0; q < kPoints; ++q) {
    r.nodes[q] = half * (kNodes[q] + 1.0);
    r.weights[q] = half * kWeights[q];
  }
  return r;
}

/// Product-integration weights for integrals of shape * x^(shape - 1) * g(x)
/// over [0, 1] at the Gauss-Legendre nodes (kNodes + 1) / 2. g is replaced
/// by its degree-14 interpolant in shifted Legendre polynomials, whose
/// moments against x^(shape - 1) are exact, so a constant g integrates
/// exactly for every shape and the u^(shape - 1) singularity costs nothing.
/// d holds the derivatives of w in shape.
struct WeibullWeights {
  std::array<double, kPoints> w{};
  std::array<double, kPoints> d{};
};

namespace detail {
// (2j + 1) P_j(2 x_q - 1) * w_q / 2: maps Legendre moments to node weights.
inline const std::array<std::array<double, kPoints>, kPoints>& moment_map() {
  static const auto table = [] {
    std::array<std::array<double, kPoints>, kPoints> m{};
    for (std::size_t q = 0; q < kPoints; ++q) {
      const double y = kNodes[q];
      double p0 = 1.0, p1 = y;
      for (std::size_t j = 0; j < kPoints; ++j) {
        double pj = j == 0 ? p0 : p1;
        if (j >= 2) {
          double pn = ((2.0 * j - 1.0) * y * p1 - (j - 1.0) * p0) / j;
          p0 = p1;
          p1 = pn;
          pj = pn;
        }
        m[q][j] = (2.0 * j + 1.0) * pj * 0.5 * kWeights[q];
      }
    }
    return m;
  }();
  return table;
}
}  // namespace detail

inline WeibullWeights weibull_weights(double shape) {
  // Moments shape * int_0^1 x^(shape - 1) P_j(2x - 1) dx
  //   = shape * prod_{i=1..j} (shape - i) / prod_{i=0..j} (shape + i),
  // built as N_j / D_j with N_0 = shape, D_0 = shape.
  std::array<double, kPoints> mom{}, dmom{};
  double N = shape, dN = 1.0, Dn = shape, dD = 1.0;
  for (std::size_t j = 0; j < kPoints; ++j) {
    if (j > 0) {
      dN = dN * (shape - j) + N;
      N *= shape - j;
      dD = dD * (shape + j) + Dn;
      Dn *= shape + j;
    }
    mom[j] = N / Dn;
    dmom[j] = (dN * Dn - N * dD) / (Dn * Dn);
  }
  const auto& m = detail::moment_map();
  WeibullWeights out;
  for (std::size_t q = 0; q < kPoints; ++q) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < kPoints; ++j) {
      a += m[q][j] * mom[j];
      b += m[q][j] * dmom[j];
    }
    out.w[q] = a;
    out.d[q] = b;
  }
  return out;
}

/// Nodes and weights for integrals of shape * u^(shape - 1) * g(u) over
/// [0, T]: the Gauss-Legendre nodes on [0, T] with weibull_weights scaled
/// by T^shape.
inline Rule weibull_rule(double T, double shape) {
  Rule r;
  const double scale = std::pow(T, shape);
  const auto ww = weibull_weights(shape);
  for (std::size_t q = 0; q < kPoints; ++q) {
    r.nodes[q] = 0.5 * T * (kNodes[q] + 1.0);
    r.weights[q] = ww.w[q] * scale;
  }
  return r;
}

/// Integral of f over [a, b]. Returns exactly 0 when a == b.
template <class F>
double integrate(F&& f, double a, double b) {
  if (a == b) return 0.0;
  double half = 0.5 * (b - a);
  double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (std::size_t q = 0; q < kPoints; ++q) sum += kWeights[q] * f(mid + half * kNodes[q]);
  return half * sum;
}

}  // namespace blockjm::quadrature
