#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "opsplit/cli.hpp"

using namespace opsplit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("opsplit_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string config_error(const json& doc) {
  try {
    resolve_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

RunConfig parse(std::vector<std::string> args) {
  args.insert(args.begin(), "fedsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  auto cfg = parse_command_line(static_cast<int>(argv.size()), argv.data(), out);
  REQUIRE(cfg.has_value());
  return *cfg;
}

std::vector<RoundMetrics> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  CHECK(line == csv_header());
  std::vector<RoundMetrics> rows;
  while (std::getline(in, line)) rows.push_back(parse_csv_row(line));
  return rows;
}

json fedsplit_desk(const fs::path& out, std::int64_t rounds) {
  return {{"scheme", {{"preset", "FedSplit"}, {"eta", "constant:0.0057"}}},
          {"run", {{"rounds", rounds}, {"out", out.string()}, {"timing", false}}}};
}

}  // namespace

TEST_CASE("config resolution") {
  SUBCASE("FedProx with a constant step") {
    const auto cfg = resolve_config(
        {{"scheme", {{"preset", "FedProx"}, {"eta", "constant:1e-2"}}}, {"run", {{"rounds", 10}}}});
    CHECK(cfg.preset == Preset::FedProx);
    CHECK(cfg.params.eta == Schedule::constant(1e-2));
    CHECK(cfg.params.alpha == Schedule::constant(1));
    CHECK(cfg.params.beta == Schedule::constant(1));
    CHECK(cfg.params.gamma == Schedule::constant(1));
    CHECK(cfg.params.local.kind == LocalSolver::Kind::ExactProx);
    CHECK(cfg.rounds == 10);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{0});
    CHECK(cfg.resolved["problem"]["users"] == 10);
    CHECK(cfg.resolved["scheme"]["eta"] == "constant:0.01");
    // The resolved document resolves to itself.
    CHECK(resolve_config(cfg.resolved).resolved == cfg.resolved);
  }
  SUBCASE("empty file lists the required keys") {
    TempDir dir;
    write_text(dir.path / "empty.json", "  \n");
    const auto doc = load_config_file(dir.path / "empty.json");
    const auto msg = config_error(doc);
    CHECK(msg.find("scheme.preset") != std::string::npos);
    CHECK(msg.find("run.rounds") != std::string::npos);
  }
  SUBCASE("errors carry the key path") {
    const json base = {{"scheme", {{"preset", "FedProx"}}}, {"run", {{"rounds", 5}}}};
    auto doc = base;
    doc["scheme"]["etta"] = 1;
    CHECK(config_error(doc).rfind("scheme.etta", 0) == 0);
    doc = base;
    doc["scheme"]["k"] = 5;
    CHECK(config_error(doc).rfind("scheme.k", 0) == 0);
    doc = base;
    doc["scheme"]["preset"] = "FedAvg";
    doc["scheme"]["inner_steps"] = 5;
    CHECK(config_error(doc).rfind("scheme.inner_steps", 0) == 0);
    doc = base;
    doc["problem"] = {{"truth_scale", 2}};
    CHECK(config_error(doc).rfind("problem.truth_scale", 0) == 0);
    doc = base;
    doc["scheme"]["participation"] = 1.5;
    CHECK(config_error(doc).rfind("scheme.participation", 0) == 0);
    doc = base;
    doc["run"]["rounds"] = 0;
    CHECK(config_error(doc).rfind("run.rounds", 0) == 0);
    doc = base;
    doc["scheme"]["eta"] = "linear:1";
    CHECK(config_error(doc).rfind("scheme.eta", 0) == 0);
    doc = base;
    doc["anderson"] = {{"mode", "x"}};
    CHECK(config_error(doc).rfind("anderson.mode", 0) == 0);
    doc = base;
    doc["bogus"] = 1;
    CHECK(config_error(doc).find("bogus") != std::string::npos);
  }
  SUBCASE("gradient presets take k, batch and anderson settings") {
    const auto cfg = resolve_config({{"scheme", {{"preset", "FedAvg"}, {"k", 5}, {"batch", 8}}},
                                     {"anderson", {{"tau", 3}, {"mode", "proj"}}},
                                     {"run", {{"rounds", 5}, {"seeds", {3, 4}}}}});
    CHECK(cfg.params.local.k == 5);
    CHECK(cfg.params.local.batch == 8);
    REQUIRE(cfg.params.anderson.has_value());
    CHECK(cfg.params.anderson->tau == 3);
    CHECK(cfg.params.anderson->mode == AndersonMode::OnProjected);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 4});
  }
}

TEST_CASE("command line") {
  TempDir dir;
  write_text(dir.path / "c.json",
             R"({"scheme": {"preset": "FedProx", "eta": "constant:0.01"}, "run": {"rounds": 50}})");
  const auto file = (dir.path / "c.json").string();
  SUBCASE("flags override the file") {
    const auto cfg = parse({"--config", file, "--rounds", "7", "--seeds", "1,2,3", "--no-timing"});
    CHECK(cfg.rounds == 7);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK_FALSE(cfg.timing);
    CHECK(cfg.params.eta == Schedule::constant(0.01));
  }
  SUBCASE("contradictory override") {
    CHECK_THROWS_WITH_AS(parse({"--config", file, "--k", "3"}), doctest::Contains("scheme.k"),
                         ConfigError);
  }
  SUBCASE("help and exit codes") {
    std::ostringstream out, err;
    const char* help[] = {"fedsim", "--help"};
    CHECK(cli_main(2, help, out, err) == 0);
    CHECK(out.str().find("--preset") != std::string::npos);
    const char* bad[] = {"fedsim", "--config", file.c_str(), "--preset", "Nope"};
    CHECK(cli_main(5, bad, out, err) == 2);
    CHECK(err.str().find("scheme.preset") != std::string::npos);
    const char* missing[] = {"fedsim", "--config", "/nonexistent/x.json"};
    CHECK(cli_main(3, missing, out, err) != 0);
  }
}

TEST_CASE("runs") {
  TempDir dir;
  SUBCASE("FedSplit reaches the solution on the desk instance") {
    auto cfg = resolve_config(fedsplit_desk(dir.path, 2000));
    const auto rec = run(cfg);
    REQUIRE(rec.ok());
    CHECK(rec.summary.final_gap_max < 1e-8);
    const auto summary = json::parse(slurp(dir.path / "summary.json"));
    CHECK(summary["schema_version"] == kSchemaVersion);
    CHECK(summary["config_hash"] == config_hash(cfg.resolved));
    CHECK(summary["summary"]["final_gap_max"].get<double>() < 1e-8);
  }
  SUBCASE("identical seeds give identical files") {
    auto doc = fedsplit_desk(dir.path / "a", 100);
    doc["run"]["seeds"] = {5};
    run(resolve_config(doc));
    doc["run"]["out"] = (dir.path / "b").string();
    run(resolve_config(doc));
    const auto a = slurp(dir.path / "a" / "seed_5.csv");
    CHECK(!a.empty());
    CHECK(a == slurp(dir.path / "b" / "seed_5.csv"));
  }
  SUBCASE("cadence, envelope and summary consistency") {
    auto doc = fedsplit_desk(dir.path, 103);
    doc["scheme"] = {{"preset", "FedAvg"}, {"eta", "constant:1e-3"}, {"k", 3}, {"batch", 20}};
    doc["run"]["seeds"] = {0, 1, 2, 3};
    doc["run"]["cadence"] = 10;
    const auto rec = run(resolve_config(doc));
    REQUIRE(rec.ok());
    std::vector<double> finals;
    for (std::uint64_t s = 0; s < 4; ++s) {
      const auto rows = read_csv(dir.path / ("seed_" + std::to_string(s) + ".csv"));
      CHECK(rows.size() == 11);  // ceil(103 / 10)
      for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].round > rows[i - 1].round);
      CHECK(rows.back().round == 103);
      finals.push_back(rows.back().gap);
    }
    const auto summary = json::parse(slurp(dir.path / "summary.json"))["summary"];
    const double mean = (finals[0] + finals[1] + finals[2] + finals[3]) / 4;
    CHECK(summary["final_gap_min"].get<double>() == *std::min_element(finals.begin(), finals.end()));
    CHECK(summary["final_gap_max"].get<double>() == *std::max_element(finals.begin(), finals.end()));
    CHECK(summary["final_gap_mean"].get<double>() == doctest::Approx(mean).epsilon(1e-14));
    CHECK(summary["seeds_used"] == 4);
    // Different minibatch streams per seed.
    CHECK(summary["final_gap_min"].get<double>() < summary["final_gap_max"].get<double>());
  }
  SUBCASE("divergence is recorded and excluded") {
    auto doc = fedsplit_desk(dir.path, 200);
    doc["scheme"] = {{"preset", "FedAvg"}, {"eta", "constant:1"}, {"k", 2}};
    doc["run"]["seeds"] = {0};
    const auto rec = run(resolve_config(doc));
    CHECK(rec.seeds[0].diverged);
    CHECK(rec.summary.seeds_used == 0);
  }
}
