#include "blockjm/cohort_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "blockjm/error.hpp"

namespace blockjm {

namespace fs = std::filesystem;

std::string format_real(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_real(const std::string& s, const std::string& ctx) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw Error(ErrorCode::IoError, "bad number '" + s + "' in " + ctx);
  return v;
}

int parse_int(const std::string& s, const std::string& ctx) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::IoError, "bad integer '" + s + "' in " + ctx);
  }
  return v;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += '|';
    out += fmt(xs[i]);
  }
  return out;
}

}  // namespace

void write_cohort_csv(const Cohort& cohort, const fs::path& dir) {
  fs::create_directories(dir);
  bool any_pre = false;
  for (const auto& s : cohort.subjects) any_pre = any_pre || s.pre_baseline.has_value();

  std::ofstream lon(dir / "longitudinal.csv");
  std::ofstream ev(dir / "events.csv");
  if (!lon || !ev) throw Error(ErrorCode::IoError, "cannot write cohort files in " + dir.string());
  lon << "subject_id,time,value\n";
  ev << "subject_id";
  for (const auto& c : cohort.covariate_names) ev << ',' << c;
  ev << ",visited_states,transition_times,censoring_time";
  if (any_pre) ev << ",pre_baseline_time,pre_baseline_value";
  ev << '\n';

  for (const auto& s : cohort.subjects) {
    for (const auto& m : s.longitudinal) lon << s.id << ',' << format_real(m.time) << ',' << format_real(m.value) << '\n';
    ev << s.id;
    for (double w : s.covariates) ev << ',' << format_real(w);
    ev << ',' << join(s.events.visited_states, [](int x) { return std::to_string(x); });
    ev << ',' << join(s.events.transition_times, format_real);
    ev << ',' << format_real(s.events.censoring_time);
    if (any_pre) {
      if (s.pre_baseline) {
        ev << ',' << format_real(s.pre_baseline->time) << ',' << format_real(s.pre_baseline->value);
      } else {
        ev << ",,";
      }
    }
    ev << '\n';
  }
}

Cohort read_cohort_csv(const fs::path& longitudinal_csv, const fs::path& events_csv) {
  auto ev_lines = read_lines(events_csv);
  if (ev_lines.empty()) throw Error(ErrorCode::IoError, "empty " + events_csv.string());
  auto header = split(ev_lines[0], ',');
  std::size_t vs_col = 0;
  while (vs_col < header.size() && header[vs_col] != "visited_states") ++vs_col;
  if (header.empty() || header[0] != "subject_id" || vs_col + 3 > header.size() ||
      header[vs_col + 1] != "transition_times" || header[vs_col + 2] != "censoring_time") {
    throw Error(ErrorCode::IoError, "unexpected header in " + events_csv.string());
  }
  bool has_pre = header.size() == vs_col + 5;

  Cohort cohort;
  cohort.covariate_names.assign(header.begin() + 1, header.begin() + static_cast<long>(vs_col));
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 1; r < ev_lines.size(); ++r) {
    auto f = split(ev_lines[r], ',');
    std::string ctx = events_csv.string() + " line " + std::to_string(r + 1);
    if (f.size() != header.size()) throw Error(ErrorCode::IoError, "wrong field count at " + ctx);
    Subject s;
    s.id = f[0];
    for (std::size_t c = 1; c < vs_col; ++c) s.covariates.push_back(parse_real(f[c], ctx));
    for (const auto& x : split(f[vs_col], '|')) s.events.visited_states.push_back(parse_int(x, ctx));
    if (!f[vs_col + 1].empty()) {
      for (const auto& x : split(f[vs_col + 1], '|')) s.events.transition_times.push_back(parse_real(x, ctx));
    }
    s.events.censoring_time = parse_real(f[vs_col + 2], ctx);
    if (has_pre && !f[vs_col + 3].empty()) {
      s.pre_baseline = Measurement{parse_real(f[vs_col + 3], ctx), parse_real(f[vs_col + 4], ctx)};
    }
    if (!index.emplace(s.id, cohort.subjects.size()).second) {
      throw Error(ErrorCode::IoError, "duplicate subject " + s.id);
    }
    cohort.subjects.push_back(std::move(s));
  }

  auto lon_lines = read_lines(longitudinal_csv);
  if (lon_lines.empty() || lon_lines[0] != "subject_id,time,value") {
    throw Error(ErrorCode::IoError, "unexpected header in " + longitudinal_csv.string());
  }
  for (std::size_t r = 1; r < lon_lines.size(); ++r) {
    auto f = split(lon_lines[r], ',');
    std::string ctx = longitudinal_csv.string() + " line " + std::to_string(r + 1);
    if (f.size() != 3) throw Error(ErrorCode::IoError, "wrong field count at " + ctx);
    auto it = index.find(f[0]);
    if (it == index.end()) throw Error(ErrorCode::IoError, "unknown subject " + f[0] + " at " + ctx);
    cohort.subjects[it->second].longitudinal.push_back({parse_real(f[1], ctx), parse_real(f[2], ctx)});
  }
  for (auto& s : cohort.subjects) {
    std::stable_sort(s.longitudinal.begin(), s.longitudinal.end(),
                     [](const Measurement& a, const Measurement& b) { return a.time < b.time; });
  }
  return cohort;
}

nlohmann::json cohort_to_json(const Cohort& cohort) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : cohort.subjects) {
    nlohmann::json js;
    js["subject_id"] = s.id;
    js["covariates"] = s.covariates;
    nlohmann::json lon = nlohmann::json::array();
    for (const auto& m : s.longitudinal) lon.push_back({m.time, m.value});
    js["longitudinal"] = lon;
    js["visited_states"] = s.events.visited_states;
    js["transition_times"] = s.events.transition_times;
    js["censoring_time"] = s.events.censoring_time;
    if (s.pre_baseline) js["pre_baseline"] = {s.pre_baseline->time, s.pre_baseline->value};
    subjects.push_back(std::move(js));
  }
  return {{"covariate_names", cohort.covariate_names}, {"subjects", subjects}};
}

Cohort cohort_from_json(const nlohmann::json& j) {
  try {
    Cohort cohort;
    cohort.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    for (const auto& js : j.at("subjects")) {
      Subject s;
      s.id = js.at("subject_id").get<std::string>();
      s.covariates = js.at("covariates").get<std::vector<double>>();
      for (const auto& m : js.at("longitudinal")) s.longitudinal.push_back({m.at(0).get<double>(), m.at(1).get<double>()});
      s.events.visited_states = js.at("visited_states").get<std::vector<int>>();
      s.events.transition_times = js.at("transition_times").get<std::vector<double>>();
      s.events.censoring_time = js.at("censoring_time").get<double>();
      if (js.contains("pre_baseline")) {
        s.pre_baseline = Measurement{js["pre_baseline"].at(0).get<double>(), js["pre_baseline"].at(1).get<double>()};
      }
      cohort.subjects.push_back(std::move(s));
    }
    return cohort;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("malformed cohort JSON: ") + e.what());
  }
}

void write_cohort_json(const Cohort& cohort, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + file.string());
  out << cohort_to_json(cohort).dump(1) << '\n';
}

Cohort read_cohort_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, file.string() + ": " + e.what());
  }
  return cohort_from_json(j);
}

}  // namespace blockjm
