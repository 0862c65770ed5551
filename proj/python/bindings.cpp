#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "blockjm/cohort_io.hpp"
#include "blockjm/config.hpp"
#include "blockjm/diagnostics.hpp"
#include "blockjm/engine.hpp"
#include "blockjm/error.hpp"
#include "blockjm/loo.hpp"
#include "blockjm/run.hpp"
#include "blockjm/simulator.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// Python objects cross the boundary as JSON text.
json to_json(const py::object& obj) {
  if (py::isinstance<py::str>(obj)) return json::parse(obj.cast<std::string>());
  auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(obj).cast<std::string>());
}

py::object from_json(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::array_t<double> matrix(const std::vector<double>& values, std::size_t rows, std::size_t cols) {
  py::array_t<double> a({rows, cols});
  std::copy(values.begin(), values.end(), a.mutable_data());
  return a;
}

blockjm::ChainDraws chains_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
  if (x.ndim() == 1) return {std::vector<double>(x.data(), x.data() + x.shape(0))};
  if (x.ndim() != 2) throw py::value_error("expected a (chains, draws) array");
  blockjm::ChainDraws out(static_cast<std::size_t>(x.shape(0)));
  for (py::ssize_t c = 0; c < x.shape(0); ++c) {
    out[c].assign(x.data(c, 0), x.data(c, 0) + x.shape(1));
  }
  return out;
}

py::dict loo_dict(const blockjm::LooResult& r) {
  py::dict d;
  d["definition"] = blockjm::to_string(r.definition);
  d["elpd_loo"] = r.elpd_loo;
  d["se"] = r.se;
  d["lpd"] = r.lpd;
  d["p_loo"] = r.lpd - r.elpd_loo;
  d["pointwise"] = r.pointwise;
  d["pareto_k"] = r.pareto_k;
  d["subject_ids"] = r.subject_ids;
  return d;
}

py::dict block_dict(const blockjm::BlockResult& b) {
  py::dict d;
  d["name"] = b.name;
  std::vector<std::string> transitions;
  for (const auto& t : b.transitions) transitions.push_back(blockjm::to_string(t));
  d["transitions"] = transitions;
  d["ok"] = b.ok;
  d["error"] = b.error;
  d["subject_ids"] = b.subject_ids;
  d["parameter_names"] = b.parameter_names;
  d["chains"] = b.chains;
  d["draws_per_chain"] = b.draws_per_chain;
  d["draws"] = matrix(b.draws, b.chains * b.draws_per_chain, b.num_parameters());
  py::list summary;
  for (const auto& s : b.summary) {
    py::dict row;
    row["parameter"] = s.parameter;
    row["mean"] = s.mean;
    row["sd"] = s.sd;
    row["q2.5"] = s.q025;
    row["q97.5"] = s.q975;
    row["rhat"] = s.rhat;
    row["ess_bulk"] = s.ess;
    summary.append(row);
  }
  d["summary"] = summary;
  py::dict loglik;
  for (auto def : {blockjm::LooDefinition::LongitudinalOnly, blockjm::LooDefinition::EventOnly,
                   blockjm::LooDefinition::Joint}) {
    const auto& pw = b.loglik(def);
    loglik[py::str(blockjm::to_string(def))] = matrix(pw.values, pw.draws, pw.subjects);
  }
  d["loglik"] = loglik;
  d["divergences"] = b.divergences;
  d["wall_time_seconds"] = b.wall_time_seconds;
  return d;
}

blockjm::Cohort cohort_for(const blockjm::RunConfig& rc, const py::object& cohort) {
  if (cohort.is_none()) return blockjm::load_or_simulate(rc);
  blockjm::Cohort c = blockjm::cohort_from_json(to_json(cohort));
  blockjm::validate_cohort(c, rc.diagram);
  return c;
}

}  // namespace

PYBIND11_MODULE(blockjm, m) {
  m.doc() = "Blockwise Bayesian joint longitudinal-multistate models";

  py::register_exception<blockjm::Error>(m, "Error", PyExc_RuntimeError);

  m.def("preset_names", &blockjm::preset_names, "Names of the built-in run presets.");
  m.def(
      "preset", [](const std::string& name) { return from_json(blockjm::preset(name)); }, py::arg("name"),
      "Body of a preset as a dict.");

  m.def(
      "validate_config",
      [](const py::object& config) { return from_json(blockjm::parse_run_config(to_json(config)).source); },
      py::arg("config"), "Resolve presets and validate; returns the resolved config.");

  m.def(
      "simulate",
      [](const py::object& config) {
        blockjm::RunConfig rc = blockjm::parse_run_config(to_json(config));
        if (!rc.simulation) throw py::value_error("config has no 'simulate' section");
        blockjm::Cohort c;
        {
          py::gil_scoped_release release;
          c = blockjm::load_or_simulate(rc);
        }
        return from_json(blockjm::cohort_to_json(c));
      },
      py::arg("config"), "Simulate the cohort described by a run config; returns it in cohort JSON form.");

  m.def(
      "fit",
      [](const py::object& config, const py::object& cohort) {
        blockjm::RunConfig rc = blockjm::parse_run_config(to_json(config));
        blockjm::Cohort c = cohort_for(rc, cohort);
        std::vector<blockjm::NamedFit> fits;
        {
          py::gil_scoped_release release;
          fits = blockjm::fit_all(rc, c);
        }
        py::list out;
        for (const auto& f : fits) {
          py::dict d;
          d["name"] = f.name;
          d["approach"] = f.result.spec.label();
          d["wall_time_seconds"] = f.result.wall_time_seconds;
          py::list blocks;
          for (const auto& b : f.result.blocks) blocks.append(block_dict(b));
          d["blocks"] = blocks;
          out.append(d);
        }
        return out;
      },
      py::arg("config"), py::arg("cohort") = py::none(),
      "Fit every entry of config['fits']. The cohort (JSON form) overrides the config's data source.");

  m.def(
      "psis_loo",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& loglik) {
        if (loglik.ndim() != 2) throw py::value_error("expected a (draws, subjects) array");
        blockjm::PointwiseLogLik pw;
        pw.draws = static_cast<std::size_t>(loglik.shape(0));
        pw.subjects = static_cast<std::size_t>(loglik.shape(1));
        pw.values.assign(loglik.data(), loglik.data() + loglik.size());
        for (std::size_t i = 0; i < pw.subjects; ++i) pw.subject_ids.push_back(std::to_string(i));
        return loo_dict(blockjm::psis_loo(pw));
      },
      py::arg("loglik"), "PSIS-LOO from a (draws, subjects) matrix of pointwise log-likelihoods.");

  m.def(
      "split_rhat", [](const py::array_t<double>& x) { return blockjm::split_rhat(chains_from(x)); },
      py::arg("draws"), "Rank-normalized split R-hat of a (chains, draws) array.");
  m.def(
      "ess_bulk", [](const py::array_t<double>& x) { return blockjm::ess_bulk(chains_from(x)); }, py::arg("draws"),
      "Bulk effective sample size of a (chains, draws) array.");

  m.def(
      "run",
      [](const std::string& command, const py::object& config, const std::string& out) {
        blockjm::RunConfig rc;
        if (py::isinstance<py::str>(config) &&
            std::filesystem::exists(std::filesystem::path(config.cast<std::string>()))) {
          rc = blockjm::load_run_config(config.cast<std::string>());
        } else {
          rc = blockjm::parse_run_config(to_json(config));
        }
        auto cmd = blockjm::command_from_string(command);
        std::ostringstream log;
        int status;
        {
          py::gil_scoped_release release;
          status = blockjm::run(cmd, rc, out, log);
        }
        return py::make_tuple(status, log.str());
      },
      py::arg("command"), py::arg("config"), py::arg("out"),
      "Run simulate|fit|compare|study as the CLI does; returns (exit status, log).");
}
