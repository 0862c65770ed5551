#include "blockjm/run.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>

#include "blockjm/cohort_io.hpp"
#include "blockjm/error.hpp"
#include "blockjm/rng.hpp"
#include "blockjm/study.hpp"

namespace blockjm {

using nlohmann::json;

Command command_from_string(const std::string& s) {
  if (s == "simulate") return Command::Simulate;
  if (s == "fit") return Command::Fit;
  if (s == "compare") return Command::Compare;
  if (s == "study") return Command::Study;
  throw Error(ErrorCode::ConfigInvalid, "unknown command '" + s + "'");
}

std::string to_string(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Fit: return "fit";
    case Command::Compare: return "compare";
    case Command::Study: return "study";
  }
  return "?";
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

void write_json(const json& j, const std::filesystem::path& p) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + p.string());
}

json transitions_json(const std::vector<Transition>& ts) {
  json a = json::array();
  for (const auto& t : ts) a.push_back({t.from, t.to});
  return a;
}

json block_manifest(const BlockResult& b) {
  return {{"name", b.name},
          {"transitions", transitions_json(b.transitions)},
          {"subjects", b.subject_ids.size()},
          {"parameters", b.parameter_names.size()},
          {"seed", b.seed},
          {"chains", b.chains},
          {"draws_per_chain", b.draws_per_chain},
          {"divergences", b.divergences},
          {"step_sizes", b.step_sizes},
          {"ok", b.ok},
          {"error", b.error},
          {"wall_time_seconds", b.wall_time_seconds}};
}

json fits_manifest(const std::vector<NamedFit>& fits) {
  json a = json::array();
  for (const auto& f : fits) {
    json blocks = json::array();
    for (const auto& b : f.result.blocks) blocks.push_back(block_manifest(b));
    a.push_back({{"name", f.name},
                 {"approach", f.result.spec.label()},
                 {"blocks", blocks},
                 {"wall_time_seconds", f.result.wall_time_seconds}});
  }
  return a;
}

bool any_failed(const std::vector<NamedFit>& fits) {
  return std::any_of(fits.begin(), fits.end(), [](const NamedFit& f) { return !f.result.all_ok(); });
}

void report_failures(const std::vector<NamedFit>& fits, std::ostream& log) {
  for (const auto& f : fits) {
    for (const auto& b : f.result.blocks) {
      if (!b.ok) log << "block " << f.name << "/" << b.name << " failed: " << b.error << '\n';
    }
  }
}

json loo_json(const LooResult& r) {
  double k_max = r.pareto_k.empty() ? 0.0 : *std::max_element(r.pareto_k.begin(), r.pareto_k.end());
  std::size_t degenerate = static_cast<std::size_t>(std::count(r.degenerate.begin(), r.degenerate.end(), true));
  return {{"definition", to_string(r.definition)},
          {"elpd_loo", r.elpd_loo},
          {"se", r.se},
          {"lpd", r.lpd},
          {"p_loo", r.lpd - r.elpd_loo},
          {"pareto_k_max", k_max},
          {"high_k", r.num_high_k()},
          {"degenerate", degenerate},
          {"subject_ids", r.subject_ids},
          {"elpd_pointwise", r.pointwise},
          {"pareto_k", r.pareto_k}};
}

}  // namespace

std::vector<NamedFit> fit_all(const RunConfig& config, const Cohort& cohort) {
  RunConfig bound = config;
  resolve_covariates(bound, cohort);
  std::vector<NamedFit> out;
  for (std::size_t k = 0; k < bound.fits.size(); ++k) {
    FitSpec spec = bound.fits[k];
    const std::string name = k < bound.fit_names.size() ? bound.fit_names[k] : spec.label();
    spec.nuts.seed = derive_seed(bound.seed, hash_name(name));
    out.push_back({name, fit(cohort, bound.diagram, spec)});
  }
  return out;
}

void write_fit_tables(const std::vector<NamedFit>& fits, const std::filesystem::path& dir) {
  auto summaries = open_out(dir / "summaries.csv");
  summaries << "fit,approach,block,parameter,mean,sd,q2.5,q97.5,rhat,ess_bulk\n";
  for (const auto& f : fits) {
    for (const auto& b : f.result.blocks) {
      if (!b.ok) continue;
      for (const auto& s : b.summary) {
        summaries << f.name << ',' << f.result.spec.label() << ',' << b.name << ',' << s.parameter << ','
                  << format_real(s.mean) << ',' << format_real(s.sd) << ',' << format_real(s.q025) << ','
                  << format_real(s.q975) << ',' << format_real(s.rhat) << ',' << format_real(s.ess) << '\n';
      }
      auto path = fits.size() == 1 ? dir / "draws" / (b.name + ".csv") : dir / "draws" / f.name / (b.name + ".csv");
      auto draws = open_out(path);
      draws << "chain,draw";
      for (const auto& p : b.parameter_names) draws << ',' << p;
      draws << '\n';
      const std::size_t P = b.num_parameters();
      for (std::size_t c = 0; c < b.chains; ++c) {
        for (std::size_t s = 0; s < b.draws_per_chain; ++s) {
          const double* row = b.draws.data() + (c * b.draws_per_chain + s) * P;
          draws << c << ',' << s;
          for (std::size_t p = 0; p < P; ++p) draws << ',' << format_real(row[p]);
          draws << '\n';
        }
      }
      if (!draws) throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
  }
  if (!summaries) throw Error(ErrorCode::IoError, "write failed for summaries.csv");
}

json loo_report(const std::vector<NamedFit>& fits, const std::vector<LooDefinition>& definitions) {
  // results[f][b][d]
  std::vector<std::vector<std::vector<std::optional<LooResult>>>> results(fits.size());
  json fits_json = json::array();
  for (std::size_t f = 0; f < fits.size(); ++f) {
    json blocks = json::array();
    for (const auto& b : fits[f].result.blocks) {
      auto& per_def = results[f].emplace_back(definitions.size());
      if (!b.ok) continue;
      json defs = json::array();
      for (std::size_t d = 0; d < definitions.size(); ++d) {
        try {
          per_def[d] = psis_loo(b.loglik(definitions[d]));
          defs.push_back(loo_json(*per_def[d]));
        } catch (const Error& e) {
          defs.push_back({{"definition", to_string(definitions[d])}, {"error", e.what()}});
        }
      }
      blocks.push_back({{"block", b.name}, {"loo", defs}});
    }
    fits_json.push_back({{"name", fits[f].name}, {"approach", fits[f].result.spec.label()}, {"blocks", blocks}});
  }

  json comparisons = json::array();
  for (std::size_t a = 0; a < fits.size(); ++a) {
    for (std::size_t c = a + 1; c < fits.size(); ++c) {
      const auto& ba = fits[a].result.blocks;
      const auto& bc = fits[c].result.blocks;
      for (std::size_t i = 0; i < ba.size(); ++i) {
        for (std::size_t j = 0; j < bc.size(); ++j) {
          if (ba[i].name != bc[j].name || ba[i].subject_ids != bc[j].subject_ids) continue;
          for (std::size_t d = 0; d < definitions.size(); ++d) {
            const auto& ra = results[a][i][d];
            const auto& rc = results[c][j][d];
            if (!ra || !rc) continue;
            LooComparison cmp = compare_loo(*ra, *rc);
            std::string preferred = cmp.delta > 0 ? fits[a].name : cmp.delta < 0 ? fits[c].name : "tie";
            comparisons.push_back({{"block", ba[i].name},
                                   {"definition", to_string(definitions[d])},
                                   {"a", fits[a].name},
                                   {"b", fits[c].name},
                                   {"delta_elpd", cmp.delta},
                                   {"se", cmp.se},
                                   {"preferred", preferred}});
          }
        }
      }
    }
  }
  return {{"fits", fits_json}, {"comparisons", comparisons}};
}

int run(Command command, const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
  std::filesystem::create_directories(out);
  json manifest = {{"command", to_string(command)}, {"seed", config.seed}, {"config", config.source}};
  int status = kExitOk;
  auto start = std::chrono::steady_clock::now();

  if (command == Command::Study) {
    StudySpec spec = study_spec_from_config(config);
    log << "study: " << spec.replicates << " replicates x " << spec.fits.size() << " fits\n";
    StudyResult res = run_study(spec, [&](std::size_t r, const Cohort&, const std::vector<FitResult>&) {
      log << "replicate " << r + 1 << "/" << spec.replicates << " done\n";
    });
    write_study(res, out / "study");
    manifest["failures"] = res.failures;
    for (const auto& f : res.failures) log << "block " << f << '\n';
    if (!res.failures.empty()) status = kExitBlockFailure;
  } else {
    Cohort cohort = load_or_simulate(config);
    manifest["subjects"] = cohort.subjects.size();
    if (command == Command::Simulate) {
      write_cohort_csv(cohort, out);
      write_cohort_json(cohort, out / "cohort.json");
      log << "simulated " << cohort.subjects.size() << " subjects\n";
    } else {
      if (config.fits.empty()) throw Error(ErrorCode::ConfigInvalid, "'fits' is empty");
      auto fits = fit_all(config, cohort);
      write_fit_tables(fits, out);
      json report = loo_report(fits, config.loo);
      write_json(report, out / "loo.json");
      manifest["fits"] = fits_manifest(fits);
      report_failures(fits, log);
      if (any_failed(fits)) status = kExitBlockFailure;
      if (command == Command::Compare) {
        for (const auto& c : report.at("comparisons")) {
          log << c.at("block").get<std::string>() << " [" << c.at("definition").get<std::string>()
              << "] " << c.at("a").get<std::string>() << " - " << c.at("b").get<std::string>() << ": "
              << format_real(c.at("delta_elpd").get<double>()) << " (se " << format_real(c.at("se").get<double>())
              << ")\n";
        }
      }
    }
  }
  manifest["exit_status"] = status;
  manifest["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(manifest, out / "manifest.json");
  return status;
}

}  // namespace blockjm
