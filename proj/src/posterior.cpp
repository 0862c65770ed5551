#include "blockjm/posterior.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "blockjm/error.hpp"

namespace blockjm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kLogPi = 1.1447298858494001741434273513531;
constexpr double kLog2 = std::numbers::ln2;

// Neumaier-compensated sum; makes totals insensitive to subject order.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct PriorTerm {
  double prior = 0.0;
  double jacobian = 0.0;
  double grad = 0.0;
};

PriorTerm normal_prior(double x, double sd) {
  return {-0.5 * kLog2Pi - std::log(sd) - 0.5 * x * x / (sd * sd), 0.0, -x / (sd * sd)};
}

// x = exp(u) ~ half-Cauchy(0, s).
PriorTerm half_cauchy_log(double u, double s) {
  double r = std::exp(u) / s;
  double r2 = r * r;
  double log1p_r2 = std::isfinite(r2) ? std::log1p(r2) : 2.0 * (u - std::log(s));
  double g = std::isfinite(r2) ? -2.0 * r2 / (1.0 + r2) : -2.0;
  return {kLog2 - kLogPi - std::log(s) - log1p_r2, u, g + 1.0};
}

// v = exp(u) ~ inverse-Gamma(a, b).
PriorTerm inv_gamma_log(double u, double a, double b) {
  double b_over_v = b * std::exp(-u);
  return {a * std::log(b) - std::lgamma(a) - (a + 1.0) * u - b_over_v, u, -(a + 1.0) + b_over_v + 1.0};
}

// rho = tanh(v), (rho + 1) / 2 ~ Beta(A, B).
PriorTerm beta_atanh(double v, double A, double B) {
  double log_x = -softplus(-2.0 * v);
  double log_1mx = -softplus(2.0 * v);
  double x = std::exp(log_x);
  double lbeta = std::lgamma(A) + std::lgamma(B) - std::lgamma(A + B);
  return {(A - 1.0) * log_x + (B - 1.0) * log_1mx - lbeta, kLog2 + log_x + log_1mx,
          2.0 * A * (1.0 - x) - 2.0 * B * x};
}

}  // namespace

std::string to_string(Approach a) {
  switch (a) {
    case Approach::MSM: return "MSM";
    case Approach::CR: return "CR";
    case Approach::ST: return "ST";
  }
  return "MSM";
}

std::string to_string(RandomEffectsScale r) {
  return r == RandomEffectsScale::Centered ? "centered" : "non-centered";
}

RandomEffectsScale random_effects_scale_from_string(const std::string& s) {
  if (s == "centered") return RandomEffectsScale::Centered;
  if (s == "non-centered" || s == "noncentered") return RandomEffectsScale::NonCentered;
  throw Error(ErrorCode::ConfigInvalid, "unknown random-effects scale '" + s + "'");
}

AssocForm ModelSpec::form_for(const Transition& t) const {
  auto it = forms.find(t);
  return it == forms.end() ? default_form : it->second;
}

const TransitionParams& ParameterVector::of(const Transition& t) const {
  for (std::size_t k = 0; k < transitions.size(); ++k) {
    if (transitions[k] == t) return transition_params[k];
  }
  throw Error(ErrorCode::UnknownParameter, "transition " + to_string(t) + " not in target");
}

TransitionParams& ParameterVector::of(const Transition& t) {
  return const_cast<TransitionParams&>(static_cast<const ParameterVector&>(*this).of(t));
}

Target Target::build(const Cohort& cohort, const TransitionDiagram& diagram, Approach approach,
                     std::size_t block_index, Linkage linkage, const ModelSpec& model, const PriorSpec& priors) {
  std::vector<std::size_t> subjects;
  if (approach == Approach::MSM) {
    subjects.resize(cohort.subjects.size());
    for (std::size_t i = 0; i < subjects.size(); ++i) subjects[i] = i;
  } else {
    auto cr = decompose_cr(diagram);
    std::size_t cr_index = block_index;
    if (approach == Approach::ST) cr_index = decompose_st(diagram).at(block_index).parent_cr_block;
    subjects = block_risk_set(cohort, cr.at(cr_index));
  }
  return build_with_subjects(cohort, diagram, approach, block_index, linkage, model, priors, std::move(subjects));
}

Target Target::build_with_subjects(const Cohort& cohort, const TransitionDiagram& diagram, Approach approach,
                                   std::size_t block_index, Linkage linkage, const ModelSpec& model,
                                   const PriorSpec& priors, std::vector<std::size_t> subjects) {
  Target tg;
  tg.approach_ = approach;
  tg.linkage_ = approach == Approach::MSM ? Linkage::Historical : linkage;
  tg.clock_ = tg.linkage_ == Linkage::Concurrent ? Clock::Local : Clock::Global;
  tg.priors_ = priors;
  tg.re_scale_ = model.random_effects;
  tg.num_covariates_ = cohort.covariate_names.size();
  if (model.age_covariate >= std::max<std::size_t>(tg.num_covariates_, 1) && tg.num_covariates_ > 0) {
    throw Error(ErrorCode::ConfigInvalid, "age covariate index out of range");
  }

  std::optional<CrBlock> block;
  if (approach == Approach::MSM) {
    tg.name_ = "msm";
    tg.transitions_ = diagram.transitions();
  } else {
    auto cr = decompose_cr(diagram);
    if (approach == Approach::CR) {
      block = cr.at(block_index);
      tg.name_ = block->name();
      tg.transitions_ = block->transitions();
    } else {
      auto st = decompose_st(diagram).at(block_index);
      block = cr.at(st.parent_cr_block);
      tg.name_ = st.name();
      tg.transitions_ = {st.transition()};
    }
  }
  if (tg.transitions_.empty()) throw Error(ErrorCode::ConfigInvalid, "target has no transitions");

  // Parameter layout.
  const auto& cov_names = cohort.covariate_names;
  tg.names_ = {"beta1", "beta2", "log_sigma_e2", "log_sigma1_sq", "log_sigma2_sq", "atanh_rho"};
  tg.constrained_names_ = {"beta1", "beta2", "sigma_e", "sigma1", "sigma2", "rho"};
  std::size_t off = kLongitudinalDim;
  for (const auto& t : tg.transitions_) {
    Slot s{t, model.form_for(t), model.age_covariate, off};
    std::string tn = "[" + to_string(t) + "]";
    tg.names_.push_back("log_shape" + tn);
    tg.names_.push_back("log_scale" + tn);
    tg.constrained_names_.push_back("shape" + tn);
    tg.constrained_names_.push_back("scale" + tn);
    for (const auto& c : cov_names) {
      tg.names_.push_back("gamma" + tn + "[" + c + "]");
      tg.constrained_names_.push_back("gamma" + tn + "[" + c + "]");
    }
    if (s.form == AssocForm::M1) {
      tg.names_.push_back("alpha" + tn);
      tg.constrained_names_.push_back("alpha" + tn);
    } else {
      for (const char* a : {"alpha1", "alpha2"}) {
        tg.names_.push_back(a + tn);
        tg.constrained_names_.push_back(a + tn);
      }
    }
    off += 2 + cov_names.size() + num_assoc(s.form);
    tg.slots_.push_back(s);
  }
  tg.re_offset_ = off;

  auto slot_of = [&](int from, int to) -> int {
    for (std::size_t k = 0; k < tg.transitions_.size(); ++k) {
      if (tg.transitions_[k] == Transition{from, to}) return static_cast<int>(k);
    }
    return -1;
  };

  auto add_group = [&](std::size_t local, double t0, double D, int observed, const std::vector<int>& slots) {
    Group g;
    g.subject = local;
    g.D = D;
    g.logD = std::log(D);
    g.tD = t0 + D;
    g.observed = observed;
    g.t0 = t0;
    g.slot_begin = tg.group_slots_.size();
    for (int s : slots) tg.group_slots_.push_back(static_cast<std::size_t>(s));
    g.slot_end = tg.group_slots_.size();
    tg.groups_.push_back(g);
  };

  tg.subjects_ = std::move(subjects);
  tg.meas_begin_.push_back(0);
  tg.loo_begin_.push_back(0);
  tg.group_begin_.push_back(0);
  for (std::size_t local = 0; local < tg.subjects_.size(); ++local) {
    const Subject& s = cohort.subjects.at(tg.subjects_[local]);
    tg.subject_ids_.push_back(s.id);
    if (s.covariates.size() != tg.num_covariates_) {
      throw Error(ErrorCode::InvalidHistory, "subject " + s.id + " has wrong number of covariates");
    }
    tg.covariates_.insert(tg.covariates_.end(), s.covariates.begin(), s.covariates.end());

    if (approach == Approach::MSM) {
      tg.measurements_.insert(tg.measurements_.end(), s.longitudinal.begin(), s.longitudinal.end());
      tg.loo_measurements_.insert(tg.loo_measurements_.end(), s.longitudinal.begin(), s.longitudinal.end());
      const auto& ev = s.events;
      for (std::size_t l = 0; l < ev.visited_states.size(); ++l) {
        int state = ev.visited_states[l];
        std::vector<int> out;
        for (std::size_t k = 0; k < tg.transitions_.size(); ++k) {
          if (tg.transitions_[k].from == state) out.push_back(static_cast<int>(k));
        }
        if (out.empty()) continue;
        double start = l == 0 ? 0.0 : ev.transition_times[l - 1];
        bool exited = l < ev.transition_times.size();
        double stop = exited ? ev.transition_times[l] : ev.censoring_time;
        int observed = exited ? slot_of(state, ev.visited_states[l + 1]) : -1;
        add_group(local, start, stop - start, observed, out);
      }
    } else {
      if (!path_position(s, block->initial_state)) {
        // Mis-routed subject (negative controls): contributes longitudinal data only.
        tg.measurements_.insert(tg.measurements_.end(), s.longitudinal.begin(), s.longitudinal.end());
      } else {
        BlockData bd = link_longitudinal(s, tg.subjects_[local], *block, tg.linkage_);
        BlockEvent ev = block_event_data(s, *block);
        tg.measurements_.insert(tg.measurements_.end(), bd.measurements.begin(), bd.measurements.end());
        for (const auto& m : block_window_measurements(s, ev)) {
          double t = tg.clock_ == Clock::Local ? m.time - ev.entry_time : m.time;
          tg.loo_measurements_.push_back({t, m.value});
        }
        double t0 = tg.clock_ == Clock::Local ? 0.0 : ev.entry_time;
        std::vector<int> slots(tg.transitions_.size());
        for (std::size_t k = 0; k < slots.size(); ++k) slots[k] = static_cast<int>(k);
        int observed = ev.outcome ? slot_of(block->initial_state, *ev.outcome) : -1;
        add_group(local, t0, ev.sojourn, observed, slots);
      }
    }
    tg.meas_begin_.push_back(tg.measurements_.size());
    tg.loo_begin_.push_back(tg.loo_measurements_.size());
    tg.group_begin_.push_back(tg.groups_.size());
    {
      LongSummary ls;
      const std::size_t m0 = tg.meas_begin_[local], m1 = tg.measurements_.size();
      ls.n = static_cast<double>(m1 - m0);
      if (m1 > m0) {
        for (std::size_t j = m0; j < m1; ++j) {
          ls.tbar += tg.measurements_[j].time;
          ls.ybar += tg.measurements_[j].value;
        }
        ls.tbar /= ls.n;
        ls.ybar /= ls.n;
        double scty = 0.0;
        for (std::size_t j = m0; j < m1; ++j) {
          double tc = tg.measurements_[j].time - ls.tbar;
          ls.sctt += tc * tc;
          scty += tc * (tg.measurements_[j].value - ls.ybar);
        }
        ls.bhat = ls.sctt > 0.0 ? scty / ls.sctt : 0.0;
        for (std::size_t j = m0; j < m1; ++j) {
          double r = tg.measurements_[j].value - ls.ybar - ls.bhat * (tg.measurements_[j].time - ls.tbar);
          ls.rss += r * r;
        }
      }
      tg.long_summary_.push_back(ls);
    }
    const bool centered = tg.re_scale_ == RandomEffectsScale::Centered;
    tg.names_.push_back((centered ? "icpt[" : "z1[") + s.id + "]");
    tg.names_.push_back((centered ? "slope[" : "z2[") + s.id + "]");
    tg.constrained_names_.push_back("b1[" + s.id + "]");
    tg.constrained_names_.push_back("b2[" + s.id + "]");
  }
  tg.dim_ = tg.re_offset_ + 2 * tg.subjects_.size();
  return tg;
}

double Target::log_density(std::span<const double> u) const {
  return evaluate(u, {}, false, nullptr, nullptr);
}

double Target::log_density_gradient(std::span<const double> u, std::span<double> grad) const {
  return evaluate(u, grad, true, nullptr, nullptr);
}

Target::Components Target::components(std::span<const double> u) const {
  Components c;
  evaluate(u, {}, false, &c, nullptr);
  return c;
}

Target::Pointwise Target::pointwise_loglik(std::span<const double> u) const {
  Pointwise p;
  p.longitudinal.assign(subjects_.size(), 0.0);
  p.event.assign(subjects_.size(), 0.0);
  evaluate(u, {}, false, nullptr, &p);
  return p;
}

double Target::evaluate(std::span<const double> u, std::span<double> grad, bool want_grad, Components* parts,
                        Pointwise* pointwise) const {
  if (u.size() != dim_) throw Error(ErrorCode::ConfigInvalid, "parameter vector has wrong length");
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t nq = num_covariates_;

  const double beta1 = u[0], beta2 = u[1], log_se2 = u[2];
  const double inv_se2 = std::exp(-log_se2);
  const double s1 = std::exp(0.5 * u[3]);
  const double s2 = std::exp(0.5 * u[4]);
  const double v = u[5];
  const double rho = std::tanh(v);
  const double c = 1.0 / std::cosh(v);  // sqrt(1 - rho^2)

  CompensatedSum ll_event, ll_long, ll_re;
  double g_lse2 = 0.0, g_beta1 = 0.0, g_beta2 = 0.0, g_s1 = 0.0, g_s2 = 0.0, g_v = 0.0;

  // Per-slot scalars that do not depend on the subject. Sojourn integrals use
  // quadrature::weibull_rule: nodes t0 + D x_q, weights D^shape w_q(shape).
  using Lanes = Eigen::Array<double, kLanes, 1>;
  struct SlotValues {
    double log_shape, shape, log_scale;
    const double* gamma;
    double alpha0, alpha1;
    Lanes w, dw;  // weibull_weights and their shape derivatives; padding is 0
  };
  static const Lanes unit_nodes = [] {
    Lanes x;
    for (std::size_t q = 0; q < kLanes; ++q) {
      x[q] = 0.5 * (quadrature::kNodes[q < quadrature::kPoints ? q : 0] + 1.0);
    }
    return x;
  }();
  std::vector<SlotValues> sv(slots_.size());
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    std::size_t off = slots_[k].offset;
    SlotValues& p = sv[k];
    p.log_shape = u[off];
    p.shape = std::exp(u[off]);
    p.log_scale = u[off + 1];
    p.gamma = u.data() + off + 2;
    p.alpha0 = u[off + 2 + nq];
    p.alpha1 = slots_[k].form == AssocForm::M1 ? 0.0 : u[off + 3 + nq];
    const auto ww = quadrature::weibull_weights(p.shape);
    p.w.setZero();
    p.dw.setZero();
    for (std::size_t q = 0; q < quadrature::kPoints; ++q) {
      p.w[q] = ww.w[q];
      p.dw[q] = ww.d[q];
    }
  }

  const double long_norm = -0.5 * kLog2Pi - 0.5 * log_se2;
  const bool centered = re_scale_ == RandomEffectsScale::Centered;
  const double re_norm = -kLog2Pi - 0.5 * (u[3] + u[4]) - std::log(c);

  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    double z1, z2, b1, b2;
    if (centered) {
      b1 = u[re_offset_ + 2 * i] - beta1;
      b2 = u[re_offset_ + 2 * i + 1] - beta2;
      z1 = b1 / s1;
      z2 = (b2 / s2 - rho * z1) / c;
      ll_re.add(re_norm - 0.5 * (z1 * z1 + z2 * z2));
    } else {
      z1 = u[re_offset_ + 2 * i];
      z2 = u[re_offset_ + 2 * i + 1];
      b1 = s1 * z1;
      b2 = s2 * (rho * z1 + c * z2);
      ll_re.add(-kLog2Pi - 0.5 * (z1 * z1 + z2 * z2));
    }
    const double icpt = beta1 + b1;
    const double slope = beta2 + b2;
    const double* w = covariates_.data() + i * nq;

    // Longitudinal, through the per-subject least-squares summary.
    double g_icpt = 0.0, g_slope = 0.0;
    double li = 0.0;
    const LongSummary& ls = long_summary_[i];
    if (ls.n > 0.0) {
      const double dm = ls.ybar - (icpt + slope * ls.tbar);
      const double db = ls.bhat - slope;
      const double ss = ls.rss + ls.n * dm * dm + ls.sctt * db * db;
      li = ls.n * long_norm - 0.5 * ss * inv_se2;
      if (want_grad) {
        g_icpt = ls.n * dm * inv_se2;
        g_slope = (ls.n * dm * ls.tbar + ls.sctt * db) * inv_se2;
        g_lse2 += -0.5 * ls.n + 0.5 * ss * inv_se2;
      }
    }
    ll_long.add(li);
    if (pointwise) {
      double lp = 0.0;
      for (std::size_t j = loo_begin_[i]; j < loo_begin_[i + 1]; ++j) {
        const auto& m = loo_measurements_[j];
        double r = m.value - (icpt + slope * m.time);
        lp += long_norm - 0.5 * r * r * inv_se2;
      }
      pointwise->longitudinal[i] = lp;
    }

    // Events.
    double ei = 0.0;
    for (std::size_t gi = group_begin_[i]; gi < group_begin_[i + 1]; ++gi) {
      const Group& g = groups_[gi];
      for (std::size_t si = g.slot_begin; si < g.slot_end; ++si) {
        const std::size_t k = group_slots_[si];
        const Slot& slot = slots_[k];
        const SlotValues& p = sv[k];
        double eta = 0.0;
        for (std::size_t cc = 0; cc < nq; ++cc) eta += w[cc] * p.gamma[cc];
        const double age = slot.form == AssocForm::M2 ? w[slot.age] : 0.0;

        // Hazard moments over the nodes: with r_q the rate at t_q, e_q = w_q r_q
        // and dA_q the derivative of the association in mu, S0 = sum e,
        // Sd = sum dw r, SA = sum e dA, SAt = sum e dA t.
        const double a0 = p.alpha0;
        const double a1 = p.alpha1;
        double lin = a0, quad = 0.0;  // association = lin * mu + quad * mu^2
        if (slot.form == AssocForm::M2) lin = a0 + a1 * age;
        if (slot.form == AssocForm::M3) quad = a1;
        const double base = p.log_scale + eta + p.shape * g.logD;
        const Lanes t = g.t0 + g.D * unit_nodes;
        const Lanes mu = icpt + slope * t;
        Lanes r;
        if (slot.form != AssocForm::M3) {
          r = (base + lin * mu).exp();
        } else {
          r = (base + (lin + quad * mu) * mu).exp();
        }
        const Lanes e = p.w * r;
        const double S0 = e.sum();
        double contrib = -S0;
        double g_lshape = 0.0, g_eta = 0.0, g_a0 = 0.0, g_a1 = 0.0;
        if (want_grad) {
          const Lanes emu = e * mu;
          const double Smu = emu.sum();
          double SA, SAt;
          if (slot.form != AssocForm::M3) {
            SA = lin * S0;
            SAt = lin * (e * t).sum();
          } else {
            const Lanes edA = e * (lin + 2.0 * quad * mu);
            SA = edA.sum();
            SAt = (edA * t).sum();
          }
          g_lshape = -p.shape * (g.logD * S0 + (p.dw * r).sum());
          g_eta = -S0;
          g_a0 = -Smu;
          switch (slot.form) {
            case AssocForm::M1:
              break;
            case AssocForm::M2:
              g_a1 = -age * Smu;
              break;
            case AssocForm::M3:
              g_a1 = -(emu * mu).sum();
              break;
          }
          g_icpt -= SA;
          g_slope -= SAt;
        }
        if (g.observed == static_cast<int>(k)) {
          const double mu_end = icpt + slope * g.tD;
          contrib += p.log_shape + p.log_scale + eta + (p.shape - 1.0) * g.logD + (lin + quad * mu_end) * mu_end;
          if (want_grad) {
            const double dmu = lin + 2.0 * quad * mu_end;
            g_lshape += 1.0 + p.shape * g.logD;
            g_eta += 1.0;
            g_a0 += mu_end;
            g_a1 += slot.form == AssocForm::M2 ? age * mu_end : slot.form == AssocForm::M3 ? mu_end * mu_end : 0.0;
            g_icpt += dmu;
            g_slope += dmu * g.tD;
          }
        }
        ei += contrib;
        if (want_grad) {
          const std::size_t off = slot.offset;
          grad[off] += g_lshape;
          grad[off + 1] += g_eta;
          for (std::size_t cc = 0; cc < nq; ++cc) grad[off + 2 + cc] += g_eta * w[cc];
          grad[off + 2 + nq] += g_a0;
          if (slot.form != AssocForm::M1) grad[off + 3 + nq] += g_a1;
        }
      }
    }
    ll_event.add(ei);
    if (pointwise) pointwise->event[i] = ei;

    if (want_grad) {
      const std::size_t zo = re_offset_ + 2 * i;
      if (centered) {
        const double re_b1 = -z1 / s1 + z2 * rho / (s1 * c);
        const double re_b2 = -z2 / (s2 * c);
        grad[zo] += g_icpt + re_b1;
        grad[zo + 1] += g_slope + re_b2;
        g_beta1 -= re_b1;
        g_beta2 -= re_b2;
        g_s1 += -0.5 + 0.5 * z1 * z1 - 0.5 * rho * z1 * z2 / c;
        g_s2 += -0.5 + 0.5 * z2 * (b2 / s2) / c;
        g_v += rho + c * z1 * z2 - rho * z2 * z2;
      } else {
        g_beta1 += g_icpt;
        g_beta2 += g_slope;
        grad[zo] += g_icpt * s1 + g_slope * s2 * rho - z1;
        grad[zo + 1] += g_slope * s2 * c - z2;
        g_s1 += g_icpt * 0.5 * b1;
        g_s2 += g_slope * 0.5 * b2;
        g_v += g_slope * s2 * (c * c * z1 - rho * c * z2);
      }
    }
  }

  // Priors and change-of-variable terms.
  CompensatedSum prior, jac;
  auto take = [&](const PriorTerm& t, std::size_t idx) {
    prior.add(t.prior);
    jac.add(t.jacobian);
    if (want_grad) grad[idx] += t.grad;
  };
  const PriorSpec& pr = priors_;
  take(normal_prior(beta1, pr.normal_sd), 0);
  take(normal_prior(beta2, pr.normal_sd), 1);
  take(inv_gamma_log(u[2], pr.inv_gamma_shape, pr.inv_gamma_scale), 2);
  take(inv_gamma_log(u[3], pr.inv_gamma_shape, pr.inv_gamma_scale), 3);
  take(inv_gamma_log(u[4], pr.inv_gamma_shape, pr.inv_gamma_scale), 4);
  take(beta_atanh(v, pr.beta_a, pr.beta_b), 5);
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    std::size_t off = slots_[k].offset;
    take(half_cauchy_log(u[off], pr.half_cauchy_scale), off);
    take(half_cauchy_log(u[off + 1], pr.half_cauchy_scale), off + 1);
    std::size_t n_rest = nq + num_assoc(slots_[k].form);
    for (std::size_t r = 0; r < n_rest; ++r) take(normal_prior(u[off + 2 + r], pr.normal_sd), off + 2 + r);
  }

  if (want_grad) {
    grad[0] += g_beta1;
    grad[1] += g_beta2;
    grad[2] += g_lse2;
    grad[3] += g_s1;
    grad[4] += g_s2;
    grad[5] += g_v;
  }

  if (parts) {
    parts->event = ll_event.value();
    parts->longitudinal = ll_long.value();
    parts->random_effects = ll_re.value();
    parts->prior = prior.value();
    parts->log_jacobian = jac.value();
  }

  CompensatedSum total;
  total.add(ll_event.value());
  total.add(ll_long.value());
  total.add(ll_re.value());
  total.add(prior.value());
  total.add(jac.value());
  double out = total.value();
  if (!std::isfinite(out)) return -std::numeric_limits<double>::infinity();
  return out;
}

ParameterVector Target::to_constrained(std::span<const double> u, double* log_jacobian) const {
  if (u.size() != dim_) throw Error(ErrorCode::ConfigInvalid, "parameter vector has wrong length");
  for (double x : u) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "unconstrained vector has non-finite entries");
  }
  const std::size_t nq = num_covariates_;
  ParameterVector p;
  auto& lp = p.longitudinal;
  lp.beta1 = u[0];
  lp.beta2 = u[1];
  lp.sigma_e2 = std::exp(u[2]);
  lp.sigma1 = std::exp(0.5 * u[3]);
  lp.sigma2 = std::exp(0.5 * u[4]);
  lp.rho = std::tanh(u[5]);
  double c = 1.0 / std::cosh(u[5]);
  double lj = u[2] + u[3] + u[4] + beta_atanh(u[5], priors_.beta_a, priors_.beta_b).jacobian;
  p.transitions = transitions_;
  for (const auto& s : slots_) {
    TransitionParams tp;
    tp.shape = std::exp(u[s.offset]);
    tp.scale = std::exp(u[s.offset + 1]);
    lj += u[s.offset] + u[s.offset + 1];
    tp.gamma.assign(u.begin() + static_cast<long>(s.offset + 2), u.begin() + static_cast<long>(s.offset + 2 + nq));
    tp.form = s.form;
    tp.age_covariate = s.age;
    tp.alpha[0] = u[s.offset + 2 + nq];
    if (s.form != AssocForm::M1) tp.alpha[1] = u[s.offset + 3 + nq];
    p.transition_params.push_back(std::move(tp));
  }
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    double x1 = u[re_offset_ + 2 * i], x2 = u[re_offset_ + 2 * i + 1];
    if (re_scale_ == RandomEffectsScale::Centered) {
      p.random_effects.push_back({x1 - lp.beta1, x2 - lp.beta2});
    } else {
      p.random_effects.push_back({lp.sigma1 * x1, lp.sigma2 * (lp.rho * x1 + c * x2)});
    }
  }
  if (log_jacobian) *log_jacobian = lj;
  return p;
}

std::vector<double> Target::from_constrained(const ParameterVector& p) const {
  const auto& lp = p.longitudinal;
  if (!(lp.sigma_e2 > 0 && lp.sigma1 > 0 && lp.sigma2 > 0 && std::abs(lp.rho) < 1.0)) {
    throw Error(ErrorCode::NonFinite, "longitudinal parameters outside their support");
  }
  if (p.random_effects.size() != subjects_.size()) {
    throw Error(ErrorCode::SubjectMismatch, "random effects do not match the target's subjects");
  }
  const std::size_t nq = num_covariates_;
  std::vector<double> u(dim_, 0.0);
  u[0] = lp.beta1;
  u[1] = lp.beta2;
  u[2] = std::log(lp.sigma_e2);
  u[3] = 2.0 * std::log(lp.sigma1);
  u[4] = 2.0 * std::log(lp.sigma2);
  u[5] = std::atanh(lp.rho);
  for (const auto& s : slots_) {
    const TransitionParams& tp = p.of(s.transition);
    if (!(tp.shape > 0 && tp.scale > 0)) throw Error(ErrorCode::NonFinite, "Weibull parameters must be positive");
    u[s.offset] = std::log(tp.shape);
    u[s.offset + 1] = std::log(tp.scale);
    for (std::size_t cc = 0; cc < nq; ++cc) u[s.offset + 2 + cc] = cc < tp.gamma.size() ? tp.gamma[cc] : 0.0;
    u[s.offset + 2 + nq] = tp.alpha[0];
    if (s.form != AssocForm::M1) u[s.offset + 3 + nq] = tp.alpha[1];
  }
  double c = std::sqrt(1.0 - lp.rho * lp.rho);
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    if (re_scale_ == RandomEffectsScale::Centered) {
      u[re_offset_ + 2 * i] = lp.beta1 + p.random_effects[i].b1;
      u[re_offset_ + 2 * i + 1] = lp.beta2 + p.random_effects[i].b2;
      continue;
    }
    double z1 = p.random_effects[i].b1 / lp.sigma1;
    double z2 = (p.random_effects[i].b2 / lp.sigma2 - lp.rho * z1) / c;
    u[re_offset_ + 2 * i] = z1;
    u[re_offset_ + 2 * i + 1] = z2;
  }
  return u;
}

std::vector<double> Target::constrained_row(std::span<const double> u) const {
  ParameterVector p = to_constrained(u);
  std::vector<double> row;
  row.reserve(constrained_names_.size());
  const auto& lp = p.longitudinal;
  row.insert(row.end(), {lp.beta1, lp.beta2, std::sqrt(lp.sigma_e2), lp.sigma1, lp.sigma2, lp.rho});
  for (const auto& tp : p.transition_params) {
    row.push_back(tp.shape);
    row.push_back(tp.scale);
    row.insert(row.end(), tp.gamma.begin(), tp.gamma.end());
    row.push_back(tp.alpha[0]);
    if (tp.form != AssocForm::M1) row.push_back(tp.alpha[1]);
  }
  for (const auto& re : p.random_effects) {
    row.push_back(re.b1);
    row.push_back(re.b2);
  }
  return row;
}

}  // namespace blockjm
