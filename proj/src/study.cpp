#include "blockjm/study.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "blockjm/cohort_io.hpp"
#include "blockjm/error.hpp"
#include "blockjm/rng.hpp"

namespace blockjm {

std::string LinkageComparison::preferred() const {
  if (delta > 0.0) return "concurrent";
  if (delta < 0.0) return "historical";
  return "tie";
}

std::uint64_t replicate_sim_seed(std::uint64_t seed, std::size_t replicate) {
  return derive_seed(seed, hash_name("simulate"), replicate);
}

std::uint64_t replicate_fit_seed(std::uint64_t seed, std::size_t replicate, const std::string& label) {
  return derive_seed(seed, hash_name(label), replicate);
}

namespace {

std::string base_name(const std::string& parameter) { return parameter.substr(0, parameter.find('[')); }

double median(std::vector<double> x) {
  if (x.empty()) return 0.0;
  std::sort(x.begin(), x.end());
  std::size_t m = x.size() / 2;
  return x.size() % 2 ? x[m] : 0.5 * (x[m - 1] + x[m]);
}

}  // namespace

std::vector<EstimateRow> estimate_rows(std::size_t replicate, const std::string& name, const FitResult& fit,
                                       const SimSpec& sim,
                                       const std::vector<std::string>& covariate_names,
                                       const std::vector<std::string>& parameters) {
  std::vector<EstimateRow> rows;
  for (const auto& b : fit.blocks) {
    if (!b.ok) continue;
    for (const auto& s : b.summary) {
      if (std::find(parameters.begin(), parameters.end(), base_name(s.parameter)) == parameters.end()) continue;
      auto truth = true_value(sim, covariate_names, s.parameter);
      if (!truth) continue;
      EstimateRow r;
      r.replicate = replicate;
      r.approach = name;
      r.block = b.name;
      r.parameter = s.parameter;
      r.truth = *truth;
      r.mean = s.mean;
      r.sd = s.sd;
      r.q025 = s.q025;
      r.q975 = s.q975;
      r.rhat = s.rhat;
      r.ess = s.ess;
      r.covered = s.q025 <= *truth && *truth <= s.q975;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

std::vector<CoverageRow> coverage_table(const std::vector<EstimateRow>& estimates) {
  std::map<std::pair<std::string, std::string>, std::vector<const EstimateRow*>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& e : estimates) {
    auto key = std::make_pair(e.parameter, e.approach);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&e);
  }
  std::sort(order.begin(), order.end());
  std::vector<CoverageRow> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    CoverageRow r;
    r.parameter = key.first;
    r.approach = key.second;
    r.replicates = g.size();
    std::vector<double> means;
    for (const auto* e : g) {
      r.covered += e->covered ? 1 : 0;
      means.push_back(e->mean);
    }
    r.coverage = static_cast<double>(r.covered) / static_cast<double>(r.replicates);
    r.median_estimate = median(means);
    r.median_bias = r.median_estimate - g.front()->truth;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LinkageComparison> linkage_comparisons(std::size_t replicate, const std::vector<FitResult>& fits,
                                                   const std::vector<LooDefinition>& definitions) {
  std::vector<LinkageComparison> out;
  for (const auto& c : fits) {
    if (c.spec.approach == Approach::MSM || c.spec.linkage != Linkage::Concurrent) continue;
    for (const auto& h : fits) {
      if (h.spec.approach != c.spec.approach || h.spec.linkage != Linkage::Historical) continue;
      for (const auto& bc : c.blocks) {
        auto it = std::find_if(h.blocks.begin(), h.blocks.end(), [&](const BlockResult& b) { return b.name == bc.name; });
        if (it == h.blocks.end() || !bc.ok || !it->ok) continue;
        for (LooDefinition d : definitions) {
          LooResult lc = psis_loo(bc.loglik(d));
          LooResult lh = psis_loo(it->loglik(d));
          LooComparison cmp = compare_loo(lc, lh);
          LinkageComparison row;
          row.replicate = replicate;
          row.approach = to_string(c.spec.approach);
          row.block = bc.name;
          row.definition = d;
          row.elpd_concurrent = lc.elpd_loo;
          row.elpd_historical = lh.elpd_loo;
          row.delta = cmp.delta;
          row.se = cmp.se;
          row.high_k_concurrent = lc.num_high_k();
          row.high_k_historical = lh.num_high_k();
          out.push_back(row);
        }
      }
    }
  }
  return out;
}

StudyResult run_study(const StudySpec& spec, const ReplicateHook& hook) {
  StudyResult result;
  for (std::size_t r = 0; r < spec.replicates; ++r) {
    SimSpec sim = spec.sim;
    sim.seed = replicate_sim_seed(spec.seed, r);
    Cohort cohort = simulate_cohort(sim);
    std::vector<FitResult> fits;
    for (std::size_t k = 0; k < spec.fits.size(); ++k) {
      FitSpec fs = spec.fits[k];
      const std::string name = k < spec.names.size() ? spec.names[k] : fs.label();
      fs.nuts.seed = replicate_fit_seed(spec.seed, r, name);
      FitResult res = fit(cohort, spec.sim.diagram, fs);
      for (const auto& b : res.blocks) {
        if (!b.ok) result.failures.push_back(std::to_string(r) + "/" + name + "/" + b.name + ": " + b.error);
        result.timing.push_back({r, name, b.name, b.wall_time_seconds});
      }
      result.timing.push_back({r, name, "max", res.wall_time_seconds});
      auto rows = estimate_rows(r, name, res, spec.sim, cohort.covariate_names, spec.parameters);
      result.estimates.insert(result.estimates.end(), rows.begin(), rows.end());
      fits.push_back(std::move(res));
    }
    auto cmp = linkage_comparisons(r, fits, spec.loo);
    result.loo.insert(result.loo.end(), cmp.begin(), cmp.end());
    if (hook) hook(r, cohort, fits);
  }
  result.coverage = coverage_table(result.estimates);
  return result;
}

StudySpec study_spec_from_config(const RunConfig& config) {
  if (!config.simulation) throw Error(ErrorCode::ConfigInvalid, "study needs a 'simulate' section");
  if (config.fits.empty()) throw Error(ErrorCode::ConfigInvalid, "study needs at least one fit");
  RunConfig bound = config;
  Cohort shape;
  shape.covariate_names = {"age"};
  resolve_covariates(bound, shape);
  StudySpec s;
  s.sim = *config.simulation;
  s.fits = bound.fits;
  s.names = config.fit_names;
  s.replicates = config.study.replicates;
  s.seed = config.seed;
  s.parameters = config.study.parameters;
  s.loo = config.loo;
  return s;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

}  // namespace

void write_study(const StudyResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_csv(dir / "estimates.csv");
    out << "replicate,approach,block,parameter,truth,mean,sd,q2.5,q97.5,covered,rhat,ess_bulk\n";
    for (const auto& e : result.estimates) {
      out << e.replicate << ',' << e.approach << ',' << e.block << ',' << e.parameter << ',' << format_real(e.truth)
          << ',' << format_real(e.mean) << ',' << format_real(e.sd) << ',' << format_real(e.q025) << ','
          << format_real(e.q975) << ',' << (e.covered ? 1 : 0) << ',' << format_real(e.rhat) << ','
          << format_real(e.ess) << '\n';
    }
  }
  {
    auto out = open_csv(dir / "coverage.csv");
    out << "parameter,approach,replicates,covered,coverage,median_estimate,median_bias\n";
    for (const auto& c : result.coverage) {
      out << c.parameter << ',' << c.approach << ',' << c.replicates << ',' << c.covered << ','
          << format_real(c.coverage) << ',' << format_real(c.median_estimate) << ',' << format_real(c.median_bias)
          << '\n';
    }
  }
  {
    auto out = open_csv(dir / "timing.csv");
    out << "replicate,approach,block,wall_time_seconds\n";
    for (const auto& t : result.timing) {
      out << t.replicate << ',' << t.approach << ',' << t.block << ',' << format_real(t.seconds) << '\n';
    }
  }
  {
    auto out = open_csv(dir / "loo.csv");
    out << "replicate,approach,block,definition,elpd_concurrent,elpd_historical,delta,se,preferred,"
           "high_k_concurrent,high_k_historical\n";
    for (const auto& l : result.loo) {
      out << l.replicate << ',' << l.approach << ',' << l.block << ',' << to_string(l.definition) << ','
          << format_real(l.elpd_concurrent) << ',' << format_real(l.elpd_historical) << ',' << format_real(l.delta)
          << ',' << format_real(l.se) << ',' << l.preferred() << ',' << l.high_k_concurrent << ','
          << l.high_k_historical << '\n';
    }
  }
}

}  // namespace blockjm
