#include "roed/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "roed/errors.hpp"
#include "roed/hash.hpp"
#include "roed/log.hpp"

namespace roed {

using nlohmann::json;

namespace {

constexpr const char* kResultsFormat = "roed-results/1";
constexpr const char* kCodeVersion = "1.0.0";

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose) {
  return splitmix(seed ^ splitmix(purpose));
}

// Typed access to one JSON object with unknown-key rejection.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!allowed.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
    }
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const char* key) const { return j_.at(key); }
  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  Section section(const char* key) const {
    static const json empty = json::object();
    return has(key) ? Section(j_.at(key), where(key)) : Section(empty, where(key));
  }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_number()) throw ConfigError(where(key) + " must be a number");
    return j_.at(key).get<double>();
  }
  double positive(const char* key, double fallback) const {
    const double v = number(key, fallback);
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(where(key) + " must be positive");
    return v;
  }
  long integer(const char* key, long fallback, long lo, long hi) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
    const long x = v.get<long>();
    if (x < lo || x > hi) {
      throw ConfigError(where(key) + " must lie in [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    }
    return x;
  }
  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) throw ConfigError(where(key) + " must be true or false");
    return j_.at(key).get<bool>();
  }
  std::string string(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_string()) throw ConfigError(where(key) + " must be a string");
    return j_.at(key).get<std::string>();
  }
  Vector vector(const char* key) const {
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + " must be an array of numbers");
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(where(key) + " must be an array of numbers");
      out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    return out;
  }
  std::pair<double, double> range(const char* key) const {
    if (!has(key)) throw ConfigError(where(key) + " is required");
    const Vector v = vector(key);
    if (v.size() != 2 || !(v[0] <= v[1])) {
      throw ConfigError(where(key) + " must be [lower, upper] with lower <= upper");
    }
    return {v[0], v[1]};
  }

 private:
  const json& j_;
  std::string path_;
};

Matrix matrix_of(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Matrix out(rows, rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != rows) {
      throw ConfigError(where + " must be square");
    }
    for (Eigen::Index c = 0; c < rows; ++c) {
      if (!j[r][c].is_number()) throw ConfigError(where + " must contain numbers");
      out(r, c) = j[r][c].get<double>();
    }
  }
  return out;
}

Design design_of(const json& j, int n, const std::string& where) {
  Design d;
  if (j.is_string()) {
    d = parse_design(j.get<std::string>());
  } else if (j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
        throw ConfigError(where + " entries must be 0 or 1");
      }
      d.push_back(v.get<int>());
    }
  } else {
    throw ConfigError(where + " must be a bit string or an array");
  }
  if (static_cast<int>(d.size()) != n) throw ConfigError(where + " has the wrong length");
  return d;
}

void parse_problem(const Section& root, ExperimentConfig& cfg) {
  ProblemConfig& pc = cfg.problem;
  const Section mesh = root.section("mesh");
  mesh.allow({"nx", "ny"});
  pc.nx = static_cast<int>(mesh.integer("nx", 32, 1, 512));
  pc.ny = static_cast<int>(mesh.integer("ny", pc.nx, 1, 512));

  const std::string solver = root.string("solver", "direct");
  if (solver == "direct") {
    pc.solver = fem::SolverMethod::kDirect;
  } else if (solver == "cg") {
    pc.solver = fem::SolverMethod::kConjugateGradient;
  } else {
    throw ConfigError("solver must be \"direct\" or \"cg\"");
  }

  const Section prior = root.section("prior");
  prior.allow({"gamma", "delta", "K", "mean", "robin"});
  pc.prior.gamma = prior.positive("gamma", 0.04);
  pc.prior.delta = prior.positive("delta", 0.2);
  if (prior.has("K")) {
    const Matrix K = matrix_of(prior.raw("K"), prior.where("K"));
    if (K.rows() != 2) throw ConfigError("prior.K must be 2x2");
    if (std::abs(K(0, 1) - K(1, 0)) > 1e-14 || Eigen::LLT<Matrix>(K).info() != Eigen::Success) {
      throw ConfigError("prior.K must be symmetric positive definite");
    }
    pc.prior.K = K;
  }
  pc.prior_mean = prior.number("mean", 0.0);
  if (prior.has("robin")) pc.prior.robin = prior.positive("robin", 1.0);

  const Section sensors = root.section("sensors");
  sensors.allow({"points", "grid"});
  if (sensors.has("points") == sensors.has("grid")) {
    throw ConfigError("sensors needs exactly one of \"points\" or \"grid\"");
  }
  if (sensors.has("points")) {
    const json& pts = sensors.raw("points");
    if (!pts.is_array() || pts.empty()) throw ConfigError("sensors.points must be a nonempty array");
    for (const auto& p : pts) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw ConfigError("each sensor must be [x, y]");
      }
      const double x = p[0].get<double>();
      const double y = p[1].get<double>();
      if (!(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0)) {
        throw ConfigError("sensors must lie strictly inside the unit square");
      }
      pc.sensors.emplace_back(x, y);
    }
  } else {
    const Section g = sensors.section("grid");
    g.allow({"nx", "ny"});
    const int sx = static_cast<int>(g.integer("nx", 4, 1, 64));
    const int sy = static_cast<int>(g.integer("ny", sx, 1, 64));
    pc.sensors = sensor_grid(sx, sy);
  }
  const int nd = static_cast<int>(pc.sensors.size());

  const Section noise = root.section("noise");
  noise.allow({"variant", "sigma", "rho", "length", "covariance"});
  try {
    pc.variant = noise_variant_from_string(noise.string("variant", "two_sensor_correlated"));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  switch (pc.variant) {
    case NoiseVariant::kTwoSensorCorrelated: {
      if (nd != 2) throw ConfigError("two_sensor_correlated noise needs exactly two sensors");
      const auto [slo, shi] = noise.range("sigma");
      const auto [rlo, rhi] = noise.range("rho");
      if (!(slo > 0.0)) throw ConfigError("noise.sigma must be positive");
      if (!(rlo > -1.0 && rhi < 1.0)) throw ConfigError("noise.rho must lie in (-1, 1)");
      pc.box.lower = Vector(3);
      pc.box.upper = Vector(3);
      pc.box.lower << slo, slo, rlo;
      pc.box.upper << shi, shi, rhi;
      break;
    }
    case NoiseVariant::kGridExponential: {
      const auto [slo, shi] = noise.range("sigma");
      const auto [llo, lhi] = noise.range("length");
      if (!(slo > 0.0) || !(llo > 0.0)) throw ConfigError("noise ranges must be positive");
      pc.box.lower = Vector(nd + 2);
      pc.box.upper = Vector(nd + 2);
      pc.box.lower.head(nd).setConstant(slo);
      pc.box.upper.head(nd).setConstant(shi);
      pc.box.lower.tail(2).setConstant(llo);
      pc.box.upper.tail(2).setConstant(lhi);
      break;
    }
    case NoiseVariant::kIsotropic: {
      const auto [slo, shi] = noise.range("sigma");
      if (!(slo > 0.0)) throw ConfigError("noise.sigma must be positive");
      pc.box.lower = Vector::Constant(1, slo);
      pc.box.upper = Vector::Constant(1, shi);
      break;
    }
    case NoiseVariant::kFixed: {
      if (!noise.has("covariance")) throw ConfigError("noise.covariance is required");
      const json& c = noise.raw("covariance");
      if (c.is_number()) {
        if (!(c.get<double>() > 0.0)) throw ConfigError("noise.covariance must be positive");
        pc.fixed_covariance = c.get<double>() * Matrix::Identity(nd, nd);
      } else {
        pc.fixed_covariance = matrix_of(c, "noise.covariance");
        if (pc.fixed_covariance.rows() != nd) {
          throw ConfigError("noise.covariance must be Nd x Nd");
        }
      }
      pc.box.lower = Vector::Zero(1);
      pc.box.upper = Vector::Ones(1);
      break;
    }
  }

  const Section inf = root.section("inference");
  inf.allow({"n_saa", "map", "refresh_threshold", "cache_dir"});
  pc.n_saa = static_cast<int>(inf.integer("n_saa", 32, 1, 4096));
  pc.refresh_threshold = inf.number("refresh_threshold", 0.25);
  if (!(pc.refresh_threshold >= 0.0)) throw ConfigError("refresh_threshold must be >= 0");
  if (inf.has("cache_dir")) pc.cache_dir = inf.string("cache_dir", "");
  const Section map = inf.section("map");
  map.allow({"max_iterations", "gradient_tolerance", "armijo_c", "max_backtracks",
             "max_cg_iterations"});
  pc.map.max_iterations = static_cast<int>(map.integer("max_iterations", 25, 1, 1000));
  pc.map.gradient_tolerance = map.positive("gradient_tolerance", 1e-8);
  pc.map.armijo_c = map.positive("armijo_c", 1e-4);
  pc.map.max_backtracks = static_cast<int>(map.integer("max_backtracks", 20, 1, 200));
  pc.map.max_cg_iterations = static_cast<int>(map.integer("max_cg_iterations", 200, 1, 100000));

  const Section util = root.section("utility");
  util.allow({"oversample", "power_iterations", "rank", "truncation"});
  pc.utility.oversample = static_cast<int>(util.integer("oversample", 10, 0, 1000));
  pc.utility.power_iterations = static_cast<int>(util.integer("power_iterations", 0, 0, 10));
  if (util.has("rank")) pc.utility.rank = static_cast<int>(util.integer("rank", 1, 1, 100000));
  pc.utility.truncation = util.positive("truncation", 1e-10);
  pc.utility.eig_seed = derive_seed(cfg.seed, 2);
  pc.data_seed = cfg.seed;
}

void parse_optimizer(const Section& root, ExperimentConfig& cfg) {
  const int nd = static_cast<int>(cfg.problem.sensors.size());
  const int dim = static_cast<int>(cfg.problem.box.dim());
  OptimizerConfig& oc = cfg.optimizer;
  const Section s = root.section("optimizer");
  s.allow({"budget", "ensemble", "final_ensemble", "learning_rate", "halving_patience",
           "max_outer_iterations", "max_policy_iterations", "policy_tolerance", "use_baseline",
           "baseline_estimator", "max_inner_iterations", "inner_tolerance", "lbfgs_memory",
           "stagnation_tolerance", "duplicate_tolerance", "initial_policy", "initial_theta"});
  if (!s.has("budget")) throw ConfigError("optimizer.budget is required");
  const json& b = s.raw("budget");
  if (!b.is_number_integer()) throw ConfigError("optimizer.budget must be an integer");
  oc.budget = b.get<int>();
  if (oc.budget < 1 || oc.budget > nd) {
    throw ConfigError("optimizer.budget must lie in [1, " + std::to_string(nd) +
                      "] (the number of candidate sensors)");
  }
  oc.ensemble = static_cast<int>(s.integer("ensemble", 16, 1, 100000));
  oc.final_ensemble = static_cast<int>(s.integer("final_ensemble", oc.ensemble, 1, 100000));
  oc.learning_rate = s.number("learning_rate", 0.5);
  if (!(oc.learning_rate >= 0.0)) throw ConfigError("optimizer.learning_rate must be >= 0");
  oc.halving_patience = static_cast<int>(s.integer("halving_patience", 5, 1, 1000));
  oc.max_outer_iterations = static_cast<int>(s.integer("max_outer_iterations", 20, 1, 10000));
  oc.max_policy_iterations = static_cast<int>(s.integer("max_policy_iterations", 100, 1, 100000));
  oc.policy_tolerance = s.positive("policy_tolerance", 1e-12);
  oc.use_baseline = s.boolean("use_baseline", true);
  try {
    oc.baseline_estimator = baseline_estimator_from_string(s.string("baseline_estimator", "diagonal"));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  oc.max_inner_iterations = static_cast<int>(s.integer("max_inner_iterations", 100, 1, 100000));
  oc.inner_tolerance = s.positive("inner_tolerance", 1e-6);
  oc.lbfgs_memory = static_cast<int>(s.integer("lbfgs_memory", 10, 1, 1000));
  oc.stagnation_tolerance = s.positive("stagnation_tolerance", 1e-8);
  oc.duplicate_tolerance = s.positive("duplicate_tolerance", 1e-10);
  if (s.has("initial_policy")) {
    Vector p = s.vector("initial_policy");
    if (p.size() != nd || (p.array() < 0.0).any() || (p.array() > 1.0).any()) {
      throw ConfigError("optimizer.initial_policy must have Nd entries in [0, 1]");
    }
    oc.initial_policy = p;
  }
  if (s.has("initial_theta")) {
    const json& list = s.raw("initial_theta");
    if (!list.is_array() || list.empty()) {
      throw ConfigError("optimizer.initial_theta must be a nonempty list");
    }
    for (const auto& t : list) {
      if (!t.is_array() || static_cast<int>(t.size()) != dim) {
        throw ConfigError("each initial theta must have " + std::to_string(dim) + " entries");
      }
      Vector v(dim);
      for (int k = 0; k < dim; ++k) v[k] = t[k].get<double>();
      if (!cfg.problem.box.contains(v)) throw ConfigError("initial theta outside the box");
      oc.initial_theta.push_back(v);
    }
  }
  oc.seed = derive_seed(cfg.seed, 3);
}

void parse_tools(const Section& root, ExperimentConfig& cfg) {
  const int nd = static_cast<int>(cfg.problem.sensors.size());
  const Section land = root.section("landscape");
  land.allow({"designs", "points_per_axis", "max_points", "max_sensors", "empty_design"});
  cfg.landscape.points_per_axis = static_cast<int>(land.integer("points_per_axis", 5, 1, 10000));
  cfg.landscape.max_points = land.integer("max_points", 10000, 1, 100000000);
  cfg.landscape.max_sensors = static_cast<int>(land.integer("max_sensors", 8, 1, 64));
  const std::string empty = land.string("empty_design", "nan");
  if (empty != "nan" && empty != "constant") {
    throw ConfigError("landscape.empty_design must be \"nan\" or \"constant\"");
  }
  cfg.landscape.empty_design_constant = empty == "constant";
  if (land.has("designs")) {
    const json& list = land.raw("designs");
    if (!list.is_array()) throw ConfigError("landscape.designs must be a list");
    for (const auto& d : list) cfg.landscape.designs.push_back(design_of(d, nd, "landscape.designs"));
  }

  const Section cmp = root.section("compare");
  cmp.allow({"count", "seed"});
  cfg.compare.count = static_cast<int>(cmp.integer("count", 64, 1, 1000000));
  cfg.compare.seed = cmp.has("seed")
                         ? static_cast<std::uint64_t>(cmp.integer("seed", 0, 0, std::numeric_limits<long>::max()))
                         : derive_seed(cfg.seed, 4);

  const Section out = root.section("output");
  out.allow({"directory"});
  cfg.output_dir = out.string("directory", "roed_output");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string vector_string(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector as_vector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

json provenance(const ExperimentConfig& cfg) {
  return {{"config_hash", cfg.hash()},
          {"seed", cfg.seed},
          {"data_seed", cfg.problem.data_seed},
          {"optimizer_seed", cfg.optimizer.seed},
          {"eig_seed", cfg.problem.utility.eig_seed},
          {"code_version", kCodeVersion}};
}

ProblemConfig problem_for(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                          int workers) {
  ProblemConfig pc = config.problem;
  if (!pc.cache_dir) pc.cache_dir = out_dir / "cache";
  pc.workers = std::max(1, workers);
  return pc;
}

json read_results(const std::filesystem::path& out_dir) {
  const auto path = out_dir / "results.json";
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string() + "; run the experiment first");
  json j;
  in >> j;
  if (j.value("format", "") != kResultsFormat) throw Error(path.string() + " has an unknown format");
  return j;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string design_string(const Design& design) {
  std::string s;
  for (int bit : design) s += bit ? '1' : '0';
  return s;
}

Design parse_design(const std::string& bits) {
  Design d;
  for (char c : bits) {
    if (c != '0' && c != '1') throw ConfigError("design string must contain only 0 and 1");
    d.push_back(c - '0');
  }
  return d;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a(canonical)); }

ExperimentConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (seed_override) j["seed"] = *seed_override;
  ExperimentConfig cfg;
  const Section root(j, "");
  root.allow({"name", "seed", "mesh", "solver", "prior", "sensors", "noise", "inference",
              "utility", "optimizer", "landscape", "compare", "output"});
  cfg.name = root.string("name", "experiment");
  if (root.has("seed")) {
    const json& s = root.raw("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw ConfigError("seed must be a nonnegative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  try {
    parse_problem(root, cfg);
    parse_optimizer(root, cfg);
    parse_tools(root, cfg);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.canonical = j.dump();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), seed_override);
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config,
                                         const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("ROED_OUTPUT_DIR"); env && *env) return env;
  return config.output_dir;
}

RunArtifacts run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                            int workers) {
  PdeProblem problem(problem_for(config, out_dir, workers));
  RoedOptimizer optimizer(problem, config.optimizer);
  RunArtifacts art;
  art.result = optimizer.run();
  art.reference_theta_bar = problem.theta_bar();
  const RoedResult& r = art.result;
  const std::string hash = config.hash();

  json res;
  res["format"] = kResultsFormat;
  res["name"] = config.name;
  res["provenance"] = provenance(config);
  res["config"] = json::parse(config.canonical);
  res["design"] = design_string(r.design);
  res["design_bits"] = r.design;
  res["policy"] = as_std(r.policy);
  res["theta_opt"] = as_std(r.theta_opt);
  res["value"] = r.value;
  res["reference_theta_bar"] = as_std(art.reference_theta_bar);
  auto& tb = res["theta_bar"] = json::array();
  for (const Vector& t : r.theta_bar) tb.push_back(as_std(t));
  auto& fin = res["final_samples"] = json::array();
  for (std::size_t k = 0; k < r.final_samples.size(); ++k) {
    fin.push_back({{"design", design_string(r.final_samples[k])},
                   {"utility", r.final_utilities[k]}});
  }
  res["counters"] = {{"sampled_designs", r.sampled_designs},
                     {"infeasible_designs", r.infeasible_designs},
                     {"utility_evaluations", r.utility_evaluations},
                     {"memo_hits", r.memo_hits},
                     {"theta_bar_refreshes", r.theta_bar_refreshes},
                     {"forward_solves", problem.totals().forward_solves},
                     {"prior_solves", problem.totals().prior_solves},
                     {"hessian_applies", problem.totals().hessian_applies}};
  res["converged"] = r.converged;
  res["stop_reason"] = r.stop_reason;
  res["outer_iterations"] = r.outer.size();

  art.results = out_dir / "results.json";
  open_output(art.results) << res.dump(2) << '\n';

  art.trajectory = out_dir / "trajectory.csv";
  {
    auto out = open_output(art.trajectory);
    out << "outer,policy_iterations,incumbent,incumbent_value,theta_start,theta_new,theta_value,"
           "inner_iterations,inner_converged,appended,theta_count,note,policy,config_hash,seed\n";
    for (const OuterRecord& o : r.outer) {
      out << o.outer << ',' << o.policy_iterations << ',' << design_string(o.incumbent) << ','
          << format_double(o.incumbent_value) << ',' << csv_field(vector_string(o.theta_start))
          << ',' << csv_field(vector_string(o.theta_new)) << ',' << format_double(o.theta_value)
          << ',' << o.inner_iterations << ',' << (o.inner_converged ? 1 : 0) << ','
          << (o.appended ? 1 : 0) << ',' << o.theta_count << ',' << csv_field(o.note) << ','
          << csv_field(vector_string(o.policy)) << ',' << hash << ',' << config.seed << '\n';
    }
  }
  art.policy_steps = out_dir / "policy_steps.csv";
  {
    auto out = open_output(art.policy_steps);
    out << "outer,step,objective,baseline,gradient_norm,step_norm,learning_rate,new_evaluations,"
           "theta_count,policy,config_hash,seed\n";
    for (const PolicyStepRecord& s : r.policy_steps) {
      out << s.outer << ',' << s.step << ',' << format_double(s.objective) << ','
          << format_double(s.baseline) << ',' << format_double(s.gradient_norm) << ','
          << format_double(s.step_norm) << ',' << format_double(s.learning_rate) << ','
          << s.new_evaluations << ',' << s.theta_count << ',' << csv_field(vector_string(s.policy))
          << ',' << hash << ',' << config.seed << '\n';
    }
  }
  return art;
}

std::vector<Vector> theta_grid(const Box& box, int points_per_axis) {
  if (points_per_axis < 1) throw InvalidArgument("theta_grid: need at least one point per axis");
  const int dim = box.dim();
  std::vector<Vector> out;
  std::vector<int> idx(dim, 0);
  while (true) {
    Vector t(dim);
    for (int k = 0; k < dim; ++k) {
      t[k] = points_per_axis == 1
                 ? 0.5 * (box.lower[k] + box.upper[k])
                 : box.lower[k] + (box.upper[k] - box.lower[k]) * idx[k] / (points_per_axis - 1);
    }
    out.push_back(t);
    int k = dim - 1;
    while (k >= 0 && ++idx[k] == points_per_axis) idx[k--] = 0;
    if (k < 0) break;
  }
  return out;
}

std::vector<LandscapeRow> evaluate_landscape(const ExperimentConfig& config, PdeProblem& problem) {
  const int nd = problem.num_sensors();
  const LandscapeConfig& lc = config.landscape;
  if (nd > lc.max_sensors) {
    throw SizeGuard("landscape is limited to " + std::to_string(lc.max_sensors) + " sensors");
  }
  const double points = std::pow(static_cast<double>(lc.points_per_axis), problem.box().dim());
  if (points > static_cast<double>(lc.max_points)) {
    throw SizeGuard("theta grid of " + format_double(points) + " points exceeds the limit of " +
                    std::to_string(lc.max_points));
  }
  std::vector<Design> designs = lc.designs;
  if (designs.empty()) {
    for (int mask = 0; mask < (1 << nd); ++mask) {
      Design d(nd);
      for (int i = 0; i < nd; ++i) d[i] = (mask >> i) & 1;
      designs.push_back(d);
    }
  }
  const std::vector<Vector> grid = theta_grid(problem.box(), lc.points_per_axis);
  std::vector<LandscapeRow> rows;
  rows.reserve(designs.size() * grid.size());
  bool warned = false;
  for (const Design& d : designs) {
    const bool empty = active_count(d) == 0;
    if (empty && !warned && !lc.empty_design_constant) {
      log::warn("the empty design has no masked precision; reporting NaN");
      warned = true;
    }
    for (const Vector& t : grid) {
      double v;
      if (empty) {
        v = lc.empty_design_constant ? problem.mean_constant()
                                     : std::numeric_limits<double>::quiet_NaN();
      } else {
        v = problem.value(d, t);
      }
      rows.push_back({d, t, v});
    }
  }
  return rows;
}

std::filesystem::path write_landscape(const ExperimentConfig& config,
                                      const std::vector<LandscapeRow>& rows,
                                      const std::filesystem::path& out_dir) {
  const auto path = out_dir / "landscape.csv";
  auto out = open_output(path);
  const int dim = rows.empty() ? 0 : static_cast<int>(rows.front().theta.size());
  out << "design";
  for (int k = 0; k < dim; ++k) out << ",theta_" << k + 1;
  out << ",utility,config_hash,seed\n";
  const std::string hash = config.hash();
  for (const LandscapeRow& r : rows) {
    out << design_string(r.design);
    for (int k = 0; k < dim; ++k) out << ',' << format_double(r.theta[k]);
    out << ',' << format_double(r.value) << ',' << hash << ',' << config.seed << '\n';
  }
  return path;
}

std::vector<Design> random_designs(int num_sensors, int budget, int count, std::uint64_t seed) {
  if (budget < 0 || budget > num_sensors) throw InvalidArgument("random_designs: bad budget");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<int> idx(num_sensors);
  std::vector<Design> out;
  for (int c = 0; c < count; ++c) {
    for (int i = 0; i < num_sensors; ++i) idx[i] = i;
    // Partial Fisher-Yates over the first `budget` slots.
    for (int k = 0; k < budget; ++k) {
      std::uniform_int_distribution<int> pick(k, num_sensors - 1);
      std::swap(idx[k], idx[pick(rng)]);
    }
    Design d(num_sensors, 0);
    for (int k = 0; k < budget; ++k) d[idx[k]] = 1;
    out.push_back(d);
  }
  return out;
}

CompareReport compare_random_designs(const ExperimentConfig& config,
                                     const std::filesystem::path& out_dir, int workers) {
  const json res = read_results(out_dir);
  PdeProblem problem(problem_for(config, out_dir, workers), as_vector(res.at("reference_theta_bar")));
  const Design opt = parse_design(res.at("design").get<std::string>());
  const Vector theta_opt = as_vector(res.at("theta_opt"));
  if (static_cast<int>(opt.size()) != problem.num_sensors()) {
    throw Error("results.json does not match the configured sensors");
  }
  CompareReport rep;
  rep.optimal_value = problem.value(opt, theta_opt);
  rep.rows.push_back({"optimal", 0, opt, rep.optimal_value});
  const auto designs =
      random_designs(problem.num_sensors(), config.optimizer.budget, config.compare.count,
                     config.compare.seed);
  for (std::size_t k = 0; k < designs.size(); ++k) {
    const double v = problem.value(designs[k], theta_opt);
    rep.rows.push_back({"random", static_cast<int>(k + 1), designs[k], v});
    if (v <= rep.optimal_value) ++rep.beaten;
  }
  rep.percentile = designs.empty() ? 1.0 : static_cast<double>(rep.beaten) / designs.size();
  rep.table = out_dir / "compare.csv";
  auto out = open_output(rep.table);
  out << "kind,index,design,utility,config_hash,seed\n";
  for (const CompareRow& r : rep.rows) {
    out << r.kind << ',' << r.index << ',' << design_string(r.design) << ','
        << format_double(r.value) << ',' << config.hash() << ',' << config.seed << '\n';
  }
  return rep;
}

VerifyReport verify_results(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                            int workers) {
  VerifyReport rep;
  auto check = [&](bool ok, const std::string& what) {
    rep.lines.push_back(std::string(ok ? "ok    " : "FAIL  ") + what);
    rep.ok = rep.ok && ok;
  };
  const json res = read_results(out_dir);
  const json prov = res.at("provenance");
  check(prov.value("config_hash", "") == config.hash(), "config hash " + config.hash());
  check(prov.value("seed", std::uint64_t{0}) == config.seed, "seed " + std::to_string(config.seed));

  const Design design = parse_design(res.at("design").get<std::string>());
  check(active_count(design) == config.optimizer.budget, "design " + design_string(design) +
                                                             " has " +
                                                             std::to_string(active_count(design)) +
                                                             " active sensors");
  const auto& counters = res.at("counters");
  check(counters.value("infeasible_designs", -1L) == 0,
        "no infeasible designs among " + std::to_string(counters.value("sampled_designs", 0L)));

  PdeProblem problem(problem_for(config, out_dir, workers), as_vector(res.at("reference_theta_bar")));
  std::vector<Vector> theta_bar;
  bool inside = true;
  for (const auto& t : res.at("theta_bar")) {
    theta_bar.push_back(as_vector(t));
    inside = inside && problem.box().contains(theta_bar.back(), 1e-12);
  }
  check(inside, std::to_string(theta_bar.size()) + " parameter samples inside the box");
  int worst = 0;
  const RobustMin m = robust_min_utility(
      design, theta_bar, [&](const Design& d, const Vector& t) { return problem.value(d, t); });
  worst = m.index;
  const double recorded = res.at("value").get<double>();
  const double tol = 1e-12 * std::max(1.0, std::abs(recorded));
  check(std::abs(m.value - recorded) <= tol,
        "robust value " + format_double(m.value) + " vs recorded " + format_double(recorded));
  const Vector theta_opt = as_vector(res.at("theta_opt"));
  check((theta_bar[worst] - theta_opt).norm() <= 1e-12, "worst-case parameter matches");
  return rep;
}

}  // namespace roed
