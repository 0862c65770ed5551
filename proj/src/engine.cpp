#include "blockjm/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <tbb/parallel_for.h>

#include "blockjm/error.hpp"
#include "blockjm/rng.hpp"

namespace blockjm {

std::string FitSpec::label() const {
  if (approach == Approach::MSM) return "JM-MSM";
  return "JM-" + to_string(approach) + (linkage == Linkage::Concurrent ? "-C" : "-H");
}

FitSpec fit_spec_from_label(const std::string& label) {
  std::string s = label;
  if (s.rfind("JM-", 0) == 0) s = s.substr(3);
  FitSpec spec;
  if (s == "MSM") {
    spec.approach = Approach::MSM;
    spec.linkage = Linkage::Historical;
    return spec;
  }
  if (s.size() == 4 && s[2] == '-') {
    std::string a = s.substr(0, 2);
    char l = s[3];
    if ((a == "CR" || a == "ST") && (l == 'C' || l == 'H')) {
      spec.approach = a == "CR" ? Approach::CR : Approach::ST;
      spec.linkage = l == 'C' ? Linkage::Concurrent : Linkage::Historical;
      return spec;
    }
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown approach '" + label + "'");
}

double quantile_type7(std::vector<double> x, double p) {
  if (x.empty()) return std::nan("");
  std::sort(x.begin(), x.end());
  double h = (static_cast<double>(x.size()) - 1.0) * p;
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

std::size_t BlockResult::parameter_index(const std::string& name) const {
  auto it = std::find(parameter_names.begin(), parameter_names.end(), name);
  if (it == parameter_names.end()) {
    throw Error(ErrorCode::UnknownParameter, "'" + name + "' is not a parameter of block " + this->name);
  }
  return static_cast<std::size_t>(it - parameter_names.begin());
}

std::vector<double> BlockResult::parameter_draws(const std::string& pname) const {
  std::size_t j = parameter_index(pname);
  std::size_t P = num_parameters();
  std::size_t S = P == 0 ? 0 : draws.size() / P;
  std::vector<double> out(S);
  for (std::size_t s = 0; s < S; ++s) out[s] = draws[s * P + j];
  return out;
}

const PointwiseLogLik& BlockResult::loglik(LooDefinition d) const {
  switch (d) {
    case LooDefinition::LongitudinalOnly: return loglik_longitudinal;
    case LooDefinition::EventOnly: return loglik_event;
    case LooDefinition::Joint: return loglik_joint;
  }
  return loglik_joint;
}

bool BlockResult::converged(double threshold) const {
  return ok && std::all_of(summary.begin(), summary.end(), [&](const SummaryRow& r) { return r.rhat <= threshold; });
}

bool FitResult::all_ok() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const BlockResult& b) { return b.ok; });
}

const BlockResult& FitResult::block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw Error(ErrorCode::UnknownParameter, "no block named " + name);
}

const BlockResult& FitResult::block_for(const Transition& t) const {
  for (const auto& b : blocks) {
    if (std::find(b.transitions.begin(), b.transitions.end(), t) != b.transitions.end()) return b;
  }
  throw Error(ErrorCode::UnknownParameter, "no fitted block contains transition " + to_string(t));
}

std::vector<std::string> block_names(const TransitionDiagram& diagram, Approach approach) {
  std::vector<std::string> out;
  if (approach == Approach::MSM) {
    out.push_back("msm");
  } else if (approach == Approach::CR) {
    for (const auto& b : decompose_cr(diagram)) out.push_back(b.name());
  } else {
    for (const auto& b : decompose_st(diagram)) out.push_back(b.name());
  }
  return out;
}

namespace {

std::vector<SummaryRow> summarize_draws(const std::vector<std::string>& names, const std::vector<double>& draws,
                                        std::size_t chains, std::size_t per_chain,
                                        const std::vector<std::size_t>& columns) {
  const std::size_t P = names.size();
  std::vector<SummaryRow> rows;
  rows.reserve(columns.size());
  for (std::size_t j : columns) {
    ChainDraws cd(chains, std::vector<double>(per_chain));
    std::vector<double> all;
    all.reserve(chains * per_chain);
    for (std::size_t c = 0; c < chains; ++c) {
      for (std::size_t s = 0; s < per_chain; ++s) {
        double v = draws[(c * per_chain + s) * P + j];
        cd[c][s] = v;
        all.push_back(v);
      }
    }
    SummaryRow r;
    r.parameter = names[j];
    r.mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
    double ss = 0.0;
    for (double v : all) ss += (v - r.mean) * (v - r.mean);
    r.sd = all.size() > 1 ? std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
    r.q025 = quantile_type7(all, 0.025);
    r.q975 = quantile_type7(all, 0.975);
    if (r.sd > 0.0 && per_chain >= 4) {
      r.rhat = split_rhat(cd);
      r.ess = ess_bulk(cd);
    } else {
      r.rhat = 1.0;
      r.ess = static_cast<double>(all.size());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

BlockResult fit_block(const Cohort& cohort, const TransitionDiagram& diagram, const FitSpec& spec,
                      std::size_t index) {
  auto start = std::chrono::steady_clock::now();
  BlockResult res;
  res.name = block_names(diagram, spec.approach).at(index);
  try {
    Target tg = Target::build(cohort, diagram, spec.approach, index, spec.linkage, spec.model, spec.priors);
    res.transitions = tg.transitions();
    res.subject_ids = tg.subject_ids();
    res.parameter_names = tg.constrained_names();

    NutsConfig cfg = spec.nuts;
    cfg.seed = derive_seed(spec.nuts.seed, hash_name(res.name));
    res.seed = cfg.seed;
    LogDensityFn f = [&tg](std::span<const double> q, std::span<double> g) { return tg.log_density_gradient(q, g); };
    std::vector<ChainOutput> chains = sample(f, tg.dim(), cfg);

    res.chains = chains.size();
    res.draws_per_chain = chains.empty() ? 0 : chains.front().num_draws();
    const std::size_t S = res.chains * res.draws_per_chain;
    const std::size_t n = res.subject_ids.size();
    res.draws.reserve(S * res.parameter_names.size());
    for (auto* pw : {&res.loglik_longitudinal, &res.loglik_event, &res.loglik_joint}) {
      pw->draws = S;
      pw->subjects = n;
      pw->subject_ids = res.subject_ids;
      pw->values.assign(S * n, 0.0);
    }
    res.loglik_longitudinal.definition = LooDefinition::LongitudinalOnly;
    res.loglik_event.definition = LooDefinition::EventOnly;
    res.loglik_joint.definition = LooDefinition::Joint;

    std::size_t row = 0;
    for (const auto& c : chains) {
      res.divergences += c.divergences;
      res.step_sizes.push_back(c.step_size);
      for (std::size_t s = 0; s < c.num_draws(); ++s, ++row) {
        auto u = c.draw(s);
        auto cons = tg.constrained_row(u);
        res.draws.insert(res.draws.end(), cons.begin(), cons.end());
        if (spec.keep_unconstrained) res.unconstrained.insert(res.unconstrained.end(), u.begin(), u.end());
        Target::Pointwise pw = tg.pointwise_loglik(u);
        for (std::size_t i = 0; i < n; ++i) {
          res.loglik_longitudinal.values[row * n + i] = pw.longitudinal[i];
          res.loglik_event.values[row * n + i] = pw.event[i];
          res.loglik_joint.values[row * n + i] = pw.longitudinal[i] + pw.event[i];
        }
      }
    }
    std::vector<std::size_t> all(res.parameter_names.size());
    std::iota(all.begin(), all.end(), 0);
    res.summary = summarize_draws(res.parameter_names, res.draws, res.chains, res.draws_per_chain, all);
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
  }
  res.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace

FitResult fit(const Cohort& cohort, const TransitionDiagram& diagram, const FitSpec& spec) {
  validate_cohort(cohort, diagram);
  if (diagram.transitions().empty()) throw Error(ErrorCode::ConfigInvalid, "diagram has no transitions");
  FitResult out;
  out.spec = spec;
  std::vector<std::string> names = block_names(diagram, spec.approach);
  std::vector<std::size_t> selected;
  for (std::size_t b = 0; b < names.size(); ++b) {
    if (spec.blocks.empty() || std::find(spec.blocks.begin(), spec.blocks.end(), names[b]) != spec.blocks.end()) {
      selected.push_back(b);
    }
  }
  for (const auto& name : spec.blocks) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw Error(ErrorCode::ConfigInvalid, "no block named " + name + " under " + spec.label());
    }
  }
  out.blocks.resize(selected.size());
  auto run = [&](std::size_t j) { out.blocks[j] = fit_block(cohort, diagram, spec, selected[j]); };
  if (spec.parallel_blocks && selected.size() > 1) {
    tbb::parallel_for(std::size_t{0}, selected.size(), run);
  } else {
    for (std::size_t j = 0; j < selected.size(); ++j) run(j);
  }
  for (const auto& b : out.blocks) out.wall_time_seconds = std::max(out.wall_time_seconds, b.wall_time_seconds);
  return out;
}

std::vector<SummaryRow> summarize(const FitResult& fit, const std::string& block,
                                  const std::vector<std::string>& parameters) {
  const BlockResult& b = fit.block(block);
  if (!b.ok) throw Error(ErrorCode::UnknownParameter, "block " + block + " failed: " + b.error);
  std::vector<SummaryRow> out;
  for (const auto& p : parameters) out.push_back(b.summary.at(b.parameter_index(p)));
  return out;
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

TransitionParams random_transition(Rng& rng, std::size_t num_covariates, AssocForm form, std::size_t age) {
  TransitionParams tp;
  tp.shape = uniform(rng, 0.7, 1.6);
  tp.scale = std::exp(uniform(rng, -5.0, -2.0));
  for (std::size_t c = 0; c < num_covariates; ++c) tp.gamma.push_back(uniform(rng, -1.0, 1.0));
  tp.form = form;
  tp.age_covariate = age;
  tp.alpha[0] = uniform(rng, -1.0, 1.0);
  if (form != AssocForm::M1) tp.alpha[1] = uniform(rng, -0.2, 0.2);
  return tp;
}

ParameterVector restrict_to(const ParameterVector& full, const Target& tg) {
  ParameterVector p;
  p.longitudinal = full.longitudinal;
  for (const auto& t : tg.transitions()) {
    p.transitions.push_back(t);
    p.transition_params.push_back(full.of(t));
  }
  for (std::size_t s : tg.subjects()) p.random_effects.push_back(full.random_effects[s]);
  return p;
}

}  // namespace

FullConditionalCheck full_conditional_check(const Cohort& cohort, const TransitionDiagram& diagram,
                                            const Transition& transition, std::size_t probes, std::uint64_t seed,
                                            const ModelSpec& model, const PriorSpec& priors,
                                            const std::optional<std::vector<std::size_t>>& block_subjects) {
  auto st_blocks = decompose_st(diagram);
  auto st_it = std::find_if(st_blocks.begin(), st_blocks.end(),
                            [&](const StBlock& b) { return b.transition() == transition; });
  if (st_it == st_blocks.end()) throw Error(ErrorCode::UnknownParameter, "transition not in diagram");
  const std::size_t st_index = static_cast<std::size_t>(st_it - st_blocks.begin());
  const std::size_t cr_index = st_it->parent_cr_block;

  Target msm = Target::build(cohort, diagram, Approach::MSM, 0, Linkage::Historical, model, priors);
  Target cr = block_subjects ? Target::build_with_subjects(cohort, diagram, Approach::CR, cr_index,
                                                           Linkage::Historical, model, priors, *block_subjects)
                             : Target::build(cohort, diagram, Approach::CR, cr_index, Linkage::Historical, model,
                                             priors);
  Target st = block_subjects ? Target::build_with_subjects(cohort, diagram, Approach::ST, st_index,
                                                           Linkage::Historical, model, priors, *block_subjects)
                             : Target::build(cohort, diagram, Approach::ST, st_index, Linkage::Historical, model,
                                             priors);

  Rng rng = make_rng(seed);
  const std::size_t nq = cohort.covariate_names.size();
  FullConditionalCheck out;
  for (std::size_t probe = 0; probe < probes; ++probe) {
    ParameterVector base;
    base.longitudinal = {uniform(rng, -1.0, 1.0), uniform(rng, -0.3, 0.3), uniform(rng, 0.05, 1.0),
                         uniform(rng, 0.2, 1.0),  uniform(rng, 0.05, 0.5), uniform(rng, -0.8, 0.8)};
    for (const auto& t : diagram.transitions()) {
      base.transitions.push_back(t);
      base.transition_params.push_back(random_transition(rng, nq, model.form_for(t), model.age_covariate));
    }
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
      base.random_effects.push_back({0.3 * standard_normal(rng), 0.1 * standard_normal(rng)});
    }
    ParameterVector moved = base;
    moved.of(transition) = random_transition(rng, nq, model.form_for(transition), model.age_covariate);

    auto delta = [&](const Target& tg) {
      auto a = tg.from_constrained(restrict_to(base, tg));
      auto b = tg.from_constrained(restrict_to(moved, tg));
      return tg.log_density(b) - tg.log_density(a);
    };
    double d_msm = delta(msm), d_cr = delta(cr), d_st = delta(st);
    out.max_deviation = std::max({out.max_deviation, std::abs(d_msm - d_cr), std::abs(d_msm - d_st),
                                  std::abs(d_cr - d_st)});
    ++out.probes;
  }
  return out;
}

}  // namespace blockjm
