#include "blockjm/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "blockjm/cohort_io.hpp"
#include "blockjm/error.hpp"

namespace blockjm {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ConfigInvalid, where + ": " + what);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) invalid(where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) invalid(where, "unknown key '" + key + "'");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) invalid(where, "missing key '" + std::string(key) + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    invalid(where + "." + key, e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

Transition parse_transition_key(const std::string& key, const std::string& where) {
  auto pos = key.find("->");
  if (pos == std::string::npos) invalid(where, "transition keys look like \"0->1\", got '" + key + "'");
  try {
    return {std::stoi(key.substr(0, pos)), std::stoi(key.substr(pos + 2))};
  } catch (const std::exception&) {
    invalid(where, "bad transition key '" + key + "'");
  }
}

const json kModel1Diagram = {{"states", {0, 1, 2, 3, 4, 5, 6}},
                             {"transitions", {{0, 1}, {0, 2}, {1, 3}, {1, 4}, {2, 5}, {2, 6}}}};

const json kModel2Diagram = {{"states", {0, 1, 2, 3, 4}},
                             {"transitions", {{0, 1}, {0, 2}, {0, 4}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}}}};

const json kTransitionTruth = {{"shape", 1.3}, {"log_scale", -6.0}, {"gamma", {1.0}}, {"alpha", {0.9}},
                               {"form", "M1"}};

json model1(const json& visits, const json& post_change) {
  json sim = {{"n", 1000},
              {"longitudinal",
               {{"beta", {2.0, 0.5}}, {"sigma_e", 0.2}, {"sigma1", 0.4}, {"sigma2", 0.3}, {"rho", 0.4}}},
              {"transition_defaults", kTransitionTruth},
              {"censoring", {6.0, 22.0}},
              {"visit_intervals", visits}};
  if (!post_change.is_null()) sim["post_change_beta"] = post_change;
  return {{"diagram", kModel1Diagram},
          {"simulate", sim},
          {"fits", {"MSM", "CR-C", "CR-H", "ST-C", "ST-H"}},
          {"nuts", {{"chains", 2}, {"draws", 1000}}},
          {"loo", {"i", "iii"}},
          {"study", {{"replicates", 100}, {"parameters", {"alpha"}}}}};
}

}  // namespace

std::vector<std::string> preset_names() { return {"model1-s1", "model1-s2", "model1-s3", "model2"}; }

json preset(const std::string& name) {
  if (name == "model1-s1") return model1({1.6, 0.6}, nullptr);
  if (name == "model1-s2") return model1({1.6, 2.2}, nullptr);
  if (name == "model1-s3") return model1({1.6, 0.6}, {5.0, -0.3});
  if (name == "model2") {
    json j = model1({2.6, 2.0, 1.2}, nullptr);
    j["diagram"] = kModel2Diagram;
    j["simulate"]["longitudinal"] = {{"beta", {0.3, 0.03}}, {"sigma_e", 0.6}, {"sigma1", 0.7}, {"sigma2", 0.1},
                                     {"rho", -0.4}};
    return j;
  }
  invalid("preset", "unknown preset '" + name + "'");
}

int default_warmup(std::size_t n) { return n <= 1000 ? 300 : 500; }

TransitionDiagram diagram_from_json(const json& j) {
  check_keys(j, {"states", "transitions"}, "diagram");
  auto states = get<std::vector<int>>(j, "states", "diagram");
  std::vector<Transition> transitions;
  for (const auto& t : j.at("transitions")) {
    if (!t.is_array() || t.size() != 2) invalid("diagram.transitions", "each transition is a [from, to] pair");
    transitions.push_back({t[0].get<int>(), t[1].get<int>()});
  }
  return TransitionDiagram::build(std::move(states), std::move(transitions));
}

json diagram_to_json(const TransitionDiagram& d) {
  json t = json::array();
  for (const auto& tr : d.transitions()) t.push_back({tr.from, tr.to});
  return {{"states", d.states()}, {"transitions", t}};
}

namespace {

TransitionParams transition_from_json(const json& j, TransitionParams tp, const std::string& where) {
  check_keys(j, {"shape", "scale", "log_scale", "gamma", "alpha", "form", "age_covariate"}, where);
  if (j.contains("form")) tp.form = assoc_form_from_string(get<std::string>(j, "form", where));
  if (j.contains("shape")) tp.shape = get<double>(j, "shape", where);
  if (j.contains("scale") && j.contains("log_scale")) invalid(where, "give scale or log_scale, not both");
  if (j.contains("scale")) tp.scale = get<double>(j, "scale", where);
  if (j.contains("log_scale")) tp.scale = std::exp(get<double>(j, "log_scale", where));
  if (j.contains("gamma")) tp.gamma = get<std::vector<double>>(j, "gamma", where);
  if (j.contains("alpha")) {
    auto a = get<std::vector<double>>(j, "alpha", where);
    if (a.empty() || a.size() > 2) invalid(where + ".alpha", "one or two coefficients");
    tp.alpha = {a[0], a.size() > 1 ? a[1] : 0.0};
  }
  if (j.contains("age_covariate")) tp.age_covariate = get<std::size_t>(j, "age_covariate", where);
  if (!(tp.shape > 0 && tp.scale > 0)) invalid(where, "shape and scale must be positive");
  return tp;
}

PriorSpec priors_from_json(const json& j, PriorSpec p) {
  const std::string w = "priors";
  check_keys(j, {"normal_sd", "half_cauchy_scale", "inv_gamma_shape", "inv_gamma_scale", "beta_a", "beta_b"}, w);
  p.normal_sd = get_or(j, "normal_sd", p.normal_sd, w);
  p.half_cauchy_scale = get_or(j, "half_cauchy_scale", p.half_cauchy_scale, w);
  p.inv_gamma_shape = get_or(j, "inv_gamma_shape", p.inv_gamma_shape, w);
  p.inv_gamma_scale = get_or(j, "inv_gamma_scale", p.inv_gamma_scale, w);
  p.beta_a = get_or(j, "beta_a", p.beta_a, w);
  p.beta_b = get_or(j, "beta_b", p.beta_b, w);
  for (double v : {p.normal_sd, p.half_cauchy_scale, p.inv_gamma_shape, p.inv_gamma_scale, p.beta_a, p.beta_b}) {
    if (!(v > 0.0)) invalid(w, "hyperparameters must be positive");
  }
  return p;
}

NutsConfig nuts_from_json(const json& j, NutsConfig c, const std::string& where) {
  check_keys(j, {"chains", "warmup", "draws", "target_accept", "max_tree_depth", "init", "init_bounds"}, where);
  c.chains = get_or(j, "chains", c.chains, where);
  c.warmup = get_or(j, "warmup", c.warmup, where);
  c.draws = get_or(j, "draws", c.draws, where);
  c.target_accept = get_or(j, "target_accept", c.target_accept, where);
  c.max_tree_depth = get_or(j, "max_tree_depth", c.max_tree_depth, where);
  if (j.contains("init")) {
    auto kind = get<std::string>(j, "init", where);
    if (kind == "zero") {
      c.init = InitSpec::zero();
    } else if (kind == "uniform") {
      c.init = InitSpec::uniform();
    } else {
      invalid(where + ".init", "expected \"zero\" or \"uniform\"");
    }
  }
  if (j.contains("init_bounds")) {
    auto b = get<std::vector<double>>(j, "init_bounds", where);
    if (b.size() != 2 || !(b[0] < b[1])) invalid(where + ".init_bounds", "expected [lo, hi] with lo < hi");
    c.init.lo = b[0];
    c.init.hi = b[1];
  }
  if (c.chains < 1 || c.draws < 1 || c.warmup < 0 || c.max_tree_depth < 1 ||
      !(c.target_accept > 0.0 && c.target_accept < 1.0)) {
    invalid(where, "chains, draws, max_tree_depth must be positive; warmup >= 0; 0 < target_accept < 1");
  }
  return c;
}

ModelSpec model_from_json(const json& assoc, const json& age, const std::string& where) {
  ModelSpec m;
  if (assoc.is_string()) {
    m.default_form = assoc_form_from_string(assoc.get<std::string>());
  } else if (assoc.is_object()) {
    for (const auto& [key, val] : assoc.items()) {
      if (key == "default") {
        m.default_form = assoc_form_from_string(val.get<std::string>());
      } else {
        m.forms[parse_transition_key(key, where + ".assoc")] = assoc_form_from_string(val.get<std::string>());
      }
    }
  } else if (!assoc.is_null()) {
    invalid(where + ".assoc", "expected a form name or an object");
  }
  if (age.is_number_integer()) {
    m.age_covariate = age.get<std::size_t>();
  } else if (!age.is_null() && !age.is_string()) {
    invalid(where + ".age_covariate", "expected a covariate name or index");
  }
  return m;
}

}  // namespace

SimSpec sim_spec_from_json(const json& j, const TransitionDiagram& diagram) {
  const std::string w = "simulate";
  check_keys(j,
             {"n", "longitudinal", "post_change_beta", "transition_defaults", "transitions", "age_mixture",
              "censoring", "visit_intervals"},
             w);
  SimSpec s;
  s.diagram = diagram;
  s.n = get<std::size_t>(j, "n", w);
  const json& l = j.at("longitudinal");
  check_keys(l, {"beta", "sigma_e", "sigma1", "sigma2", "rho"}, w + ".longitudinal");
  auto beta = get<std::vector<double>>(l, "beta", w + ".longitudinal");
  if (beta.size() != 2) invalid(w + ".longitudinal.beta", "expected [beta1, beta2]");
  double sigma_e = get<double>(l, "sigma_e", w + ".longitudinal");
  s.longitudinal = {beta[0], beta[1], sigma_e * sigma_e, get<double>(l, "sigma1", w + ".longitudinal"),
                    get<double>(l, "sigma2", w + ".longitudinal"), get<double>(l, "rho", w + ".longitudinal")};
  if (j.contains("post_change_beta") && !j.at("post_change_beta").is_null()) {
    auto b = get<std::vector<double>>(j, "post_change_beta", w);
    if (b.size() != 2) invalid(w + ".post_change_beta", "expected [beta1', beta2']");
    s.post_change_beta = std::array<double, 2>{b[0], b[1]};
  }
  TransitionParams defaults;
  defaults.gamma = {0.0};
  if (j.contains("transition_defaults")) {
    defaults = transition_from_json(j.at("transition_defaults"), defaults, w + ".transition_defaults");
  }
  s.transitions.assign(diagram.transitions().size(), defaults);
  if (j.contains("transitions")) {
    for (const auto& [key, val] : j.at("transitions").items()) {
      Transition t = parse_transition_key(key, w + ".transitions");
      auto idx = diagram.transition_index(t.from, t.to);
      if (!idx) invalid(w + ".transitions", "transition " + key + " is not in the diagram");
      s.transitions[*idx] = transition_from_json(val, defaults, w + ".transitions." + key);
    }
  }
  for (const auto& tp : s.transitions) {
    if (tp.gamma.size() != 1) invalid(w, "the simulator generates one covariate (age); gamma needs one entry");
  }
  if (j.contains("age_mixture")) {
    const json& a = j.at("age_mixture");
    check_keys(a, {"intervals", "weights"}, w + ".age_mixture");
    s.age.intervals.clear();
    for (const auto& iv : a.at("intervals")) s.age.intervals.push_back({iv.at(0).get<double>(), iv.at(1).get<double>()});
    s.age.weights = get<std::vector<double>>(a, "weights", w + ".age_mixture");
  }
  if (j.contains("censoring")) {
    auto c = get<std::vector<double>>(j, "censoring", w);
    if (c.size() != 2) invalid(w + ".censoring", "expected [a, b]");
    s.censor_lo = c[0];
    s.censor_hi = c[1];
  }
  if (j.contains("visit_intervals")) s.visit_intervals = get<std::vector<double>>(j, "visit_intervals", w);
  try {
    s.validate();
  } catch (const Error& e) {
    invalid(w, e.what());
  }
  return s;
}

RunConfig parse_run_config(const json& input) {
  if (!input.is_object()) invalid("config", "expected a JSON object");
  json j = json::object();
  if (input.contains("preset")) j = preset(input.at("preset").get<std::string>());
  json patch = input;
  patch.erase("preset");
  j.merge_patch(patch);

  check_keys(j,
             {"diagram", "simulate", "cohort", "fits", "nuts", "priors", "loo", "study", "seed", "threads"},
             "config");
  RunConfig rc;
  rc.source = j;
  if (!j.contains("diagram")) invalid("config", "missing key 'diagram'");
  rc.diagram = diagram_from_json(j.at("diagram"));
  rc.seed = get_or<std::uint64_t>(j, "seed", 1, "config");
  rc.threads = get_or(j, "threads", 0, "config");

  if (j.contains("simulate") && !j.at("simulate").is_null()) rc.simulation = sim_spec_from_json(j.at("simulate"), rc.diagram);
  if (j.contains("cohort") && !j.at("cohort").is_null()) {
    const json& c = j.at("cohort");
    check_keys(c, {"json", "longitudinal", "events"}, "cohort");
    if (c.contains("json")) {
      rc.cohort_json = get<std::string>(c, "json", "cohort");
    } else {
      rc.longitudinal_csv = get<std::string>(c, "longitudinal", "cohort");
      rc.events_csv = get<std::string>(c, "events", "cohort");
    }
  }
  if (!rc.simulation && !rc.cohort_json && !rc.longitudinal_csv) {
    invalid("config", "needs a data source: 'simulate' or 'cohort'");
  }

  std::size_t n_hint = rc.simulation ? rc.simulation->n : 1000;
  NutsConfig base_nuts;
  base_nuts.warmup = default_warmup(n_hint);
  if (j.contains("nuts")) base_nuts = nuts_from_json(j.at("nuts"), base_nuts, "nuts");
  PriorSpec base_priors;
  if (j.contains("priors")) base_priors = priors_from_json(j.at("priors"), base_priors);

  if (j.contains("fits")) {
    if (!j.at("fits").is_array()) invalid("fits", "expected an array");
    std::size_t k = 0;
    for (const auto& f : j.at("fits")) {
      std::string w = "fits[" + std::to_string(k++) + "]";
      json obj = f.is_string() ? json{{"approach", f}} : f;
      check_keys(obj, {"name", "approach", "assoc", "age_covariate", "random_effects", "blocks", "nuts", "priors"}, w);
      FitSpec spec = fit_spec_from_label(get<std::string>(obj, "approach", w));
      std::string name = obj.contains("name") ? get<std::string>(obj, "name", w) : spec.label();
      if (name.empty() || name.find_first_of("/\\,\"") != std::string::npos) {
        invalid(w + ".name", "must be non-empty without '/', '\\', ',' or '\"'");
      }
      if (std::find(rc.fit_names.begin(), rc.fit_names.end(), name) != rc.fit_names.end()) {
        invalid(w + ".name", "duplicate fit name '" + name + "'; give each fit a distinct \"name\"");
      }
      rc.fit_names.push_back(name);
      json age = obj.value("age_covariate", json());
      spec.model = model_from_json(obj.value("assoc", json()), age, w);
      if (obj.contains("random_effects")) {
        try {
          spec.model.random_effects = random_effects_scale_from_string(get<std::string>(obj, "random_effects", w));
        } catch (const Error& e) {
          invalid(w + ".random_effects", "expected \"centered\" or \"non-centered\"");
        }
      }
      rc.age_covariate_names.push_back(age.is_string() ? age.get<std::string>() : std::string());
      spec.nuts = obj.contains("nuts") ? nuts_from_json(obj.at("nuts"), base_nuts, w + ".nuts") : base_nuts;
      spec.priors = obj.contains("priors") ? priors_from_json(obj.at("priors"), base_priors) : base_priors;
      spec.blocks = get_or<std::vector<std::string>>(obj, "blocks", {}, w);
      for (const auto& b : spec.blocks) {
        auto names = block_names(rc.diagram, spec.approach);
        if (std::find(names.begin(), names.end(), b) == names.end()) invalid(w + ".blocks", "no block named " + b);
      }
      rc.fits.push_back(std::move(spec));
    }
  }
  if (j.contains("loo")) {
    rc.loo.clear();
    for (const auto& d : j.at("loo")) rc.loo.push_back(loo_definition_from_string(d.get<std::string>()));
  }
  if (j.contains("study")) {
    const json& s = j.at("study");
    check_keys(s, {"replicates", "parameters"}, "study");
    rc.study.replicates = get_or<std::size_t>(s, "replicates", rc.study.replicates, "study");
    rc.study.parameters = get_or(s, "parameters", rc.study.parameters, "study");
    if (rc.study.replicates == 0) invalid("study.replicates", "must be positive");
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    invalid(path.string(), e.what());
  }
  RunConfig rc = parse_run_config(j);
  auto base = path.parent_path();
  for (auto* p : {&rc.cohort_json, &rc.longitudinal_csv, &rc.events_csv}) {
    if (*p && p->value().is_relative()) *p = base / p->value();
  }
  return rc;
}

std::optional<double> true_value(const SimSpec& sim, const std::vector<std::string>& covariate_names,
                                 const std::string& parameter) {
  const auto& lp = sim.longitudinal;
  if (parameter == "beta1") return lp.beta1;
  if (parameter == "beta2") return lp.beta2;
  if (parameter == "sigma_e") return std::sqrt(lp.sigma_e2);
  if (parameter == "sigma1") return lp.sigma1;
  if (parameter == "sigma2") return lp.sigma2;
  if (parameter == "rho") return lp.rho;
  auto open = parameter.find('[');
  auto close = parameter.find(']');
  if (open == std::string::npos || close == std::string::npos) return std::nullopt;
  std::string base = parameter.substr(0, open);
  std::string key = parameter.substr(open + 1, close - open - 1);
  auto pos = key.find("->");
  if (pos == std::string::npos) return std::nullopt;
  auto idx = sim.diagram.transition_index(std::stoi(key.substr(0, pos)), std::stoi(key.substr(pos + 2)));
  if (!idx) return std::nullopt;
  const TransitionParams& tp = sim.transitions[*idx];
  if (base == "shape") return tp.shape;
  if (base == "scale") return tp.scale;
  if (base == "alpha" || base == "alpha1") return tp.alpha[0];
  if (base == "alpha2") return tp.form == AssocForm::M1 ? 0.0 : tp.alpha[1];
  if (base == "gamma") {
    auto open2 = parameter.find('[', close);
    auto close2 = parameter.find(']', open2);
    if (open2 == std::string::npos || close2 == std::string::npos) return std::nullopt;
    std::string cov = parameter.substr(open2 + 1, close2 - open2 - 1);
    auto it = std::find(covariate_names.begin(), covariate_names.end(), cov);
    if (it == covariate_names.end()) return std::nullopt;
    auto c = static_cast<std::size_t>(it - covariate_names.begin());
    if (c < tp.gamma.size()) return tp.gamma[c];
  }
  return std::nullopt;
}

void resolve_covariates(RunConfig& config, const Cohort& cohort) {
  const auto& names = cohort.covariate_names;
  for (std::size_t k = 0; k < config.fits.size(); ++k) {
    const std::string& age = k < config.age_covariate_names.size() ? config.age_covariate_names[k] : std::string();
    std::size_t& idx = config.fits[k].model.age_covariate;
    if (!age.empty()) {
      auto it = std::find(names.begin(), names.end(), age);
      if (it == names.end()) invalid("fits[" + std::to_string(k) + "].age_covariate", "no covariate named " + age);
      idx = static_cast<std::size_t>(it - names.begin());
    } else if (!names.empty() && idx >= names.size()) {
      invalid("fits[" + std::to_string(k) + "].age_covariate", "index out of range");
    }
  }
}

Cohort load_or_simulate(const RunConfig& config) {
  Cohort c;
  if (config.cohort_json) {
    c = read_cohort_json(*config.cohort_json);
  } else if (config.longitudinal_csv) {
    c = read_cohort_csv(*config.longitudinal_csv, *config.events_csv);
  } else {
    SimSpec s = *config.simulation;
    s.seed = config.seed;
    c = simulate_cohort(s);
  }
  validate_cohort(c, config.diagram);
  return c;
}

}  // namespace blockjm
