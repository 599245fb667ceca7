#include "opsplit/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

namespace opsplit {
namespace {

using nlohmann::json;

constexpr double kDivergenceGap = 1e12;
constexpr const char* kSeedDerivation =
    "v1: problem seed = derive(s, 1); scheme seed = derive(s, 2); participation "
    "sampler = derive(scheme, 0); minibatch stream of user i = derive(scheme, i + 1); "
    "derive(p, i) = mix(mix(p) ^ mix(i + 0x632BE59BD9B4E019)), mix = SplitMix64";

// Typed access to one JSON object with the key path kept for messages.
class Section {
 public:
  Section(const json& doc, std::string path, std::set<std::string> allowed)
      : path_(std::move(path)) {
    if (doc.is_null()) {
      obj_ = json::object();
    } else if (!doc.is_object()) {
      throw ConfigError(path_ + ": expected an object");
    } else {
      obj_ = doc;
    }
    for (const auto& [key, _] : obj_.items()) {
      if (!allowed.count(key)) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        throw ConfigError(key_path(key) + ": unknown key (allowed: " + list + ")");
      }
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key) && !obj_[key].is_null(); }
  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  const json& raw(const std::string& key) const { return obj_.at(key); }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_[key];
    if (!v.is_number()) throw ConfigError(key_path(key) + ": expected a number");
    return v.get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_[key];
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    throw ConfigError(key_path(key) + ": expected an integer");
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_[key];
    if (!v.is_boolean()) throw ConfigError(key_path(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_[key];
    if (!v.is_string()) throw ConfigError(key_path(key) + ": expected a string");
    return v.get<std::string>();
  }

  Schedule schedule(const std::string& key, const Schedule& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_[key];
    try {
      if (v.is_number()) return Schedule::constant(v.get<double>());
      if (v.is_string()) return Schedule::parse(v.get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(key_path(key) + ": " + e.what());
    }
    throw ConfigError(key_path(key) + ": expected a schedule such as constant:1e-2");
  }

 private:
  std::string path_;
  json obj_;
};

std::int64_t at_least(const Section& s, const std::string& key, std::int64_t fallback,
                      std::int64_t lo) {
  const auto v = s.integer(key, fallback);
  if (v < lo) {
    throw ConfigError(s.key_path(key) + ": must be >= " + std::to_string(lo) + ", got " +
                      std::to_string(v));
  }
  return v;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_csv(const std::filesystem::path& path, const std::vector<RoundMetrics>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << csv_header() << '\n';
  for (const auto& r : rows) out << format_csv_row(r) << '\n';
  out.flush();
  if (!out) throw Error("write to " + path.string() + " failed");
}

}  // namespace

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config: " + path.string() + ": " + e.what());
  }
}

RunConfig resolve_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object at top level");
  Section top(doc, "", {"problem", "scheme", "anderson", "run"});
  const Section problem(top.has("problem") ? top.raw("problem") : json(), "problem",
                        {"kind", "users", "dim", "samples", "noise_variance",
                         "heterogeneity_shift", "truth_scale"});
  const Section scheme(top.has("scheme") ? top.raw("scheme") : json(), "scheme",
                       {"preset", "eta", "alpha", "beta", "gamma", "k", "batch",
                        "participation", "ergodic_average", "inner_steps",
                        "inner_step_size"});
  const Section anderson(top.has("anderson") ? top.raw("anderson") : json(), "anderson",
                         {"tau", "mode", "ridge", "svd_tol"});
  const Section runs(top.has("run") ? top.raw("run") : json(), "run",
                     {"rounds", "seeds", "out", "cadence", "timing"});

  std::vector<std::string> missing;
  if (!scheme.has("preset")) missing.push_back("scheme.preset");
  if (!runs.has("rounds")) missing.push_back("run.rounds");
  if (!missing.empty()) {
    std::string list;
    for (const auto& k : missing) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("config: missing required keys: " + list);
  }

  RunConfig cfg;
  json resolved;

  // problem
  const auto kind = problem.text("kind", "least_squares");
  if (kind == "least_squares") {
    if (problem.has("truth_scale")) {
      throw ConfigError("problem.truth_scale: only applies to kind logistic");
    }
    LeastSquaresSpec s;
    s.users = at_least(problem, "users", s.users, 1);
    s.dim = at_least(problem, "dim", s.dim, 1);
    s.samples = at_least(problem, "samples", s.samples, 1);
    s.noise_variance = problem.number("noise_variance", s.noise_variance);
    if (!(s.noise_variance >= 0.0)) {
      throw ConfigError("problem.noise_variance: must be >= 0");
    }
    s.heterogeneity_shift = problem.number("heterogeneity_shift", s.heterogeneity_shift);
    if (!(s.heterogeneity_shift >= 0.0)) {
      throw ConfigError("problem.heterogeneity_shift: must be >= 0");
    }
    cfg.gen.kind = s;
    resolved["problem"] = {{"kind", kind},
                           {"users", s.users},
                           {"dim", s.dim},
                           {"samples", s.samples},
                           {"noise_variance", s.noise_variance},
                           {"heterogeneity_shift", s.heterogeneity_shift}};
  } else if (kind == "logistic") {
    for (const char* key : {"noise_variance", "heterogeneity_shift"}) {
      if (problem.has(key)) {
        throw ConfigError(problem.key_path(key) + ": only applies to kind least_squares");
      }
    }
    LogisticSpec s;
    s.users = at_least(problem, "users", s.users, 1);
    s.dim = at_least(problem, "dim", s.dim, 1);
    s.samples = at_least(problem, "samples", s.samples, 1);
    s.truth_scale = problem.number("truth_scale", s.truth_scale);
    if (!(s.truth_scale >= 0.0)) throw ConfigError("problem.truth_scale: must be >= 0");
    cfg.gen.kind = s;
    resolved["problem"] = {{"kind", kind},
                           {"users", s.users},
                           {"dim", s.dim},
                           {"samples", s.samples},
                           {"truth_scale", s.truth_scale}};
  } else {
    throw ConfigError("problem.kind: expected least_squares or logistic, got '" + kind + "'");
  }

  // scheme
  const auto preset_text = scheme.text("preset", "");
  try {
    cfg.preset = parse_preset(preset_text);
  } catch (const Error& e) {
    throw ConfigError(std::string("scheme.preset: ") + e.what());
  }
  const Schedule eta = scheme.schedule("eta", Schedule::constant(1.0));
  SchemeParams base = preset(cfg.preset, 1, eta);
  const bool grad_local = base.local.kind == LocalSolver::Kind::GradK;
  const std::string pname(preset_name(cfg.preset));

  if (!grad_local) {
    for (const char* key : {"k", "batch"}) {
      if (scheme.has(key)) {
        throw ConfigError(scheme.key_path(key) + ": preset " + pname +
                          " uses a proximal local solver, which has no " + key);
      }
    }
  } else {
    for (const char* key : {"inner_steps", "inner_step_size"}) {
      if (scheme.has(key)) {
        throw ConfigError(scheme.key_path(key) + ": preset " + pname +
                          " uses gradient steps, not an iterative prox");
      }
    }
  }
  const int k = static_cast<int>(at_least(scheme, "k", 1, 1));
  SchemeParams params = preset(cfg.preset, k, eta);
  params.alpha = scheme.schedule("alpha", params.alpha);
  params.beta = scheme.schedule("beta", params.beta);
  params.gamma = scheme.schedule("gamma", params.gamma);
  if (grad_local && scheme.has("batch")) {
    params.local.batch = at_least(scheme, "batch", 1, 1);
  }
  if (!grad_local && (scheme.has("inner_steps") || scheme.has("inner_step_size"))) {
    auto spec = ProxSolverSpec::gradient_descent(
        static_cast<int>(at_least(scheme, "inner_steps", 100, 1)));
    if (scheme.has("inner_step_size")) {
      const double step = scheme.number("inner_step_size", 0.0);
      if (!(step > 0.0)) throw ConfigError("scheme.inner_step_size: must be > 0");
      spec.inner_step_size = step;
    }
    params.local = LocalSolver::iterative_prox(spec);
  }
  params.participation = scheme.number("participation", 1.0);
  if (!(params.participation > 0.0 && params.participation <= 1.0)) {
    throw ConfigError("scheme.participation: must lie in (0,1], got " +
                      fmt(params.participation));
  }
  params.ergodic_average = scheme.boolean("ergodic_average", false);

  json rs = {{"preset", pname},
             {"eta", params.eta.to_string()},
             {"alpha", params.alpha.to_string()},
             {"beta", params.beta.to_string()},
             {"gamma", params.gamma.to_string()},
             {"participation", params.participation},
             {"ergodic_average", params.ergodic_average}};
  if (grad_local) {
    rs["k"] = k;
    rs["batch"] = params.local.batch ? json(*params.local.batch) : json();
  } else if (params.local.kind == LocalSolver::Kind::IterativeProx) {
    rs["inner_steps"] = params.local.prox_spec.inner_steps;
    if (params.local.prox_spec.inner_step_size) {
      rs["inner_step_size"] = *params.local.prox_spec.inner_step_size;
    }
  }
  resolved["scheme"] = rs;

  // anderson
  AndersonConfig ac;
  ac.tau = static_cast<int>(at_least(anderson, "tau", 0, 0));
  const auto mode = anderson.text("mode", "u");
  if (mode == "u") {
    ac.mode = AndersonMode::OnU;
  } else if (mode == "proj") {
    ac.mode = AndersonMode::OnProjected;
  } else {
    throw ConfigError("anderson.mode: expected u or proj, got '" + mode + "'");
  }
  if (anderson.has("ridge")) {
    ac.ridge = anderson.number("ridge", 0.0);
    if (!(*ac.ridge >= 0.0)) throw ConfigError("anderson.ridge: must be >= 0");
  }
  ac.svd_tol = anderson.number("svd_tol", ac.svd_tol);
  if (!(ac.svd_tol > 0.0)) throw ConfigError("anderson.svd_tol: must be > 0");
  if (ac.tau > 0) params.anderson = ac;
  resolved["anderson"] = {{"tau", ac.tau},
                          {"mode", mode},
                          {"ridge", ac.ridge ? json(*ac.ridge) : json()},
                          {"svd_tol", ac.svd_tol}};

  // run
  cfg.rounds = at_least(runs, "rounds", 1, 1);
  cfg.cadence = at_least(runs, "cadence", 1, 1);
  cfg.timing = runs.boolean("timing", true);
  cfg.out_dir = runs.text("out", "out");
  if (runs.has("seeds")) {
    const auto& s = runs.raw("seeds");
    if (!s.is_array() || s.empty()) {
      throw ConfigError("run.seeds: expected a non-empty array of nonnegative integers");
    }
    cfg.seeds.clear();
    for (const auto& v : s) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ConfigError("run.seeds: expected nonnegative integers, got " + v.dump());
      }
      cfg.seeds.push_back(v.is_number_unsigned() ? v.get<std::uint64_t>()
                                                 : static_cast<std::uint64_t>(v.get<std::int64_t>()));
    }
  }
  resolved["run"] = {{"rounds", cfg.rounds},
                     {"seeds", cfg.seeds},
                     {"out", cfg.out_dir.string()},
                     {"cadence", cfg.cadence},
                     {"timing", cfg.timing}};

  try {
    params.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("scheme: ") + e.what());
  }
  cfg.params = std::move(params);
  cfg.resolved = std::move(resolved);
  return cfg;
}

std::optional<RunConfig> parse_command_line(int argc, const char* const* argv,
                                            std::ostream& out) {
  CLI::App app{"Federated operator-splitting simulator"};
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_path, preset_name_flag, eta, alpha, beta, gamma, mode, out_dir, problem;
  std::int64_t rounds = 0, k = 0, batch = 0, tau = 0, cadence = 0;
  double participation = 0.0;
  std::vector<std::uint64_t> seeds;
  bool no_timing = false, ergodic = false;

  app.add_option("--config", config_path, "JSON configuration file");
  auto* o_preset = app.add_option("--preset", preset_name_flag,
                                   "FedAvg, FedProx, FedSplit, FedPi, FedRP, "
                                   "ReflectGrad or ReflectProx");
  auto* o_problem = app.add_option("--problem", problem, "least_squares or logistic");
  auto* o_rounds = app.add_option("--rounds", rounds, "Number of rounds");
  auto* o_eta = app.add_option("--eta", eta, "Step size schedule, e.g. constant:1e-5, "
                                             "inv_t:1.0, exp:100:0.5:500, inv_log:100");
  auto* o_alpha = app.add_option("--alpha", alpha, "Override the alpha schedule");
  auto* o_beta = app.add_option("--beta", beta, "Override the beta schedule");
  auto* o_gamma = app.add_option("--gamma", gamma, "Override the gamma schedule");
  auto* o_k = app.add_option("--k", k, "Local gradient steps");
  auto* o_batch = app.add_option("--batch", batch, "Minibatch size of local gradient steps");
  auto* o_part = app.add_option("--participation", participation, "User sampling probability");
  auto* o_tau = app.add_option("--tau", tau, "Anderson memory (0 disables)");
  auto* o_mode = app.add_option("--anderson-mode", mode, "u or proj");
  auto* o_seeds = app.add_option("--seeds", seeds, "Comma-separated replicate seeds")
                      ->delimiter(',');
  auto* o_out = app.add_option("--out", out_dir, "Output directory");
  auto* o_cadence = app.add_option("--cadence", cadence, "Rounds between metric rows");
  app.add_flag("--no-timing", no_timing, "Write wall_ms as 0");
  app.add_flag("--ergodic", ergodic, "Report the step-size weighted ergodic average");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return std::nullopt;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return std::nullopt;
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }

  json doc = config_path.empty() ? json::object() : load_config_file(config_path);
  if (!doc.is_object()) throw ConfigError("--config: top level must be a JSON object");
  auto set = [&](const char* section, const char* key, json value) {
    auto& s = doc[section];
    if (s.is_null()) s = json::object();
    if (!s.is_object()) throw ConfigError(std::string(section) + ": expected an object");
    s[key] = std::move(value);
  };
  if (*o_preset) set("scheme", "preset", preset_name_flag);
  if (*o_problem) set("problem", "kind", problem);
  if (*o_rounds) set("run", "rounds", rounds);
  if (*o_eta) set("scheme", "eta", eta);
  if (*o_alpha) set("scheme", "alpha", alpha);
  if (*o_beta) set("scheme", "beta", beta);
  if (*o_gamma) set("scheme", "gamma", gamma);
  if (*o_k) set("scheme", "k", k);
  if (*o_batch) set("scheme", "batch", batch);
  if (*o_part) set("scheme", "participation", participation);
  if (*o_tau) set("anderson", "tau", tau);
  if (*o_mode) set("anderson", "mode", mode);
  if (*o_seeds) set("run", "seeds", seeds);
  if (*o_out) set("run", "out", out_dir);
  if (*o_cadence) set("run", "cadence", cadence);
  if (no_timing) set("run", "timing", false);
  if (ergodic) set("scheme", "ergodic_average", true);
  return resolve_config(doc);
}

double SeedRecord::final_gap() const {
  if (metrics.empty()) return std::numeric_limits<double>::quiet_NaN();
  return metrics.back().ergodic_gap.value_or(metrics.back().gap);
}

bool RunRecord::ok() const {
  return std::none_of(seeds.begin(), seeds.end(),
                      [](const SeedRecord& s) { return s.error.has_value(); });
}

std::string config_hash(const nlohmann::json& resolved) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : resolved.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunSummary summarize(const std::vector<SeedRecord>& seeds) {
  RunSummary s;
  double total = 0.0;
  for (const auto& r : seeds) {
    if (r.diverged || r.error || r.metrics.empty()) continue;
    const double g = r.final_gap();
    if (s.seeds_used == 0) {
      s.final_gap_min = g;
      s.final_gap_max = g;
    } else {
      s.final_gap_min = std::min(s.final_gap_min, g);
      s.final_gap_max = std::max(s.final_gap_max, g);
    }
    total += g;
    ++s.seeds_used;
  }
  if (s.seeds_used == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.final_gap_mean = s.final_gap_min = s.final_gap_max = nan;
  } else {
    s.final_gap_mean = total / static_cast<double>(s.seeds_used);
  }
  return s;
}

SeedRecord run_seed(const RunConfig& config, std::uint64_t seed) {
  SeedRecord rec;
  rec.seed = seed;
  GenSpec gen = config.gen;
  gen.seed = derive_seed(seed, 1);
  FederatedProblem problem = generate(gen);
  if (config.params.local.uses_prox() && config.params.eta.is_constant()) {
    try {
      problem.regularized = solve_regularized(problem, config.params.eta.at(1));
    } catch (const NumericalError&) {
      // regularized_gap stays NaN.
    }
  }

  Simulator sim(problem, config.params, derive_seed(seed, 2), Vector::Zero(problem.dim()));
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t t = 1; t <= config.rounds; ++t) {
    sim.step();
    const bool finite = sim.state().w.flat().allFinite();
    if (t % config.cadence != 0 && t != config.rounds && finite) continue;
    RoundMetrics m = compute_metrics(sim.state(), problem, config.params);
    m.accelerated = sim.last_step_accelerated();
    if (config.timing) {
      m.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    }
    rec.metrics.push_back(m);
    const double gap = m.ergodic_gap.value_or(m.gap);
    if (!finite || !std::isfinite(m.objective) || gap > kDivergenceGap) {
      rec.diverged = true;
      break;
    }
  }
  rec.empty_redraws = sim.context().empty_redraws();
  rec.anderson_fallbacks = sim.anderson_fallbacks();
  return rec;
}

RunRecord run(const RunConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw Error("cannot create " + config.out_dir.string() + ": " + ec.message());

  RunRecord record;
  record.config_hash = config_hash(config.resolved);
  record.seeds.resize(config.seeds.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= config.seeds.size()) return;
      const auto seed = config.seeds[i];
      auto& rec = record.seeds[i];
      try {
        rec = run_seed(config, seed);
        rec.csv = config.out_dir / ("seed_" + std::to_string(seed) + ".csv");
        write_csv(rec.csv, rec.metrics);
      } catch (const std::exception& e) {
        rec.seed = seed;
        rec.error = e.what();
      }
    }
  };
  const std::size_t slots = std::max<std::size_t>(
      1, std::min<std::size_t>(config.seeds.size(), std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t s = 1; s < slots; ++s) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  record.summary = summarize(record.seeds);
  const auto path = config.out_dir / "summary.json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << summary_json(config, record).dump(2) << '\n';
  if (!out) throw Error("write to " + path.string() + " failed");
  return record;
}

nlohmann::json summary_json(const RunConfig& config, const RunRecord& record) {
  json seeds = json::array();
  for (const auto& r : record.seeds) {
    json s = {{"seed", r.seed},
              {"csv", r.csv.filename().string()},
              {"rows", r.metrics.size()},
              {"final_round", r.metrics.empty() ? json() : json(r.metrics.back().round)},
              {"final_gap", r.final_gap()},
              {"diverged", r.diverged},
              {"empty_redraws", r.empty_redraws},
              {"anderson_fallbacks", r.anderson_fallbacks}};
    if (r.error) s["error"] = *r.error;
    seeds.push_back(std::move(s));
  }
  return {{"schema_version", kSchemaVersion},
          {"version", record.version},
          {"config_hash", record.config_hash},
          {"config", config.resolved},
          {"seed_derivation", kSeedDerivation},
          {"seeds", seeds},
          {"summary",
           {{"final_gap_mean", record.summary.final_gap_mean},
            {"final_gap_min", record.summary.final_gap_min},
            {"final_gap_max", record.summary.final_gap_max},
            {"seeds_used", record.summary.seeds_used}}}};
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    const auto config = parse_command_line(argc, argv, out);
    if (!config) return 0;
    const auto record = run(*config);
    for (const auto& s : record.seeds) {
      if (s.error) {
        err << "seed " << s.seed << ": error: " << *s.error << '\n';
      } else {
        out << "seed " << s.seed << ": " << s.metrics.size() << " rows, final gap "
            << fmt(s.final_gap()) << (s.diverged ? " (diverged)" : "") << '\n';
      }
    }
    out << "summary: " << (config->out_dir / "summary.json").string() << '\n';
    return record.ok() ? 0 : 1;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace opsplit
