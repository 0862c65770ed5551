#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace blockjm {

/// What counts as one left-out data point.
enum class LooDefinition { LongitudinalOnly, EventOnly, Joint };

std::string to_string(LooDefinition d);
LooDefinition loo_definition_from_string(const std::string& s);

/// draws x subjects matrix of log f(D_i | theta^(s)), row-major.
struct PointwiseLogLik {
  std::size_t draws = 0;
  std::size_t subjects = 0;
  std::vector<double> values;
  std::vector<std::string> subject_ids;
  LooDefinition definition = LooDefinition::Joint;

  double at(std::size_t s, std::size_t i) const { return values[s * subjects + i]; }
  std::vector<double> column(std::size_t i) const;
};

struct GpdFit {
  double k = 0.0;
  double sigma = 0.0;
};

/// Generalized Pareto fit to exceedances by the Zhang-Stephens profile
/// posterior mean, with the weakly informative shrinkage of k toward 0.5.
/// Throws DegenerateTail when all values are equal.
GpdFit gpd_fit_tail(std::span<const double> exceedances);

/// Quantile function of GPD(k, sigma) at p.
double gpd_quantile(double p, double k, double sigma);

struct PsisWeights {
  std::vector<double> log_weights;  // normalized
  double pareto_k = 0.0;            // 0 when the tail is degenerate
  bool degenerate = false;          // tail left unsmoothed
};

/// Pareto-smoothed importance weights from raw log ratios.
PsisWeights psis_smooth(std::span<const double> log_ratios);

struct LooResult {
  double elpd_loo = 0.0;
  double se = 0.0;
  double lpd = 0.0;  // in-sample log pointwise predictive density
  std::vector<double> pointwise;
  std::vector<double> pareto_k;
  std::vector<bool> degenerate;
  std::vector<std::string> subject_ids;
  LooDefinition definition = LooDefinition::Joint;

  static constexpr double kWarnThreshold = 0.7;
  std::size_t num_high_k() const;
};

/// Requires at least 100 draws.
LooResult psis_loo(const PointwiseLogLik& pointwise);

struct LooComparison {
  double delta = 0.0;  // elpd_a - elpd_b
  double se = 0.0;
};

/// Throws SubjectMismatch when the two results cover different subjects or
/// definitions.
LooComparison compare_loo(const LooResult& a, const LooResult& b);

}  // namespace blockjm
