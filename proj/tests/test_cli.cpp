#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  const std::string command = std::string(XDHOM_CLI) + " " + args + " 2>/dev/null";
  Outcome result;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buffer{};
  std::size_t n;
  while ((n = std::fread(buffer.data(), 1, buffer.size(), pipe)) > 0) result.out.append(buffer.data(), n);
  const int status = pclose(pipe);
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string config(const char* name) { return std::string(XDHOM_CONFIGS) + "/" + name; }

fs::path scratch(const std::string& name) {
  const auto dir = fs::current_path() / "cli_scratch" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("check prints a JSON report") {
  const auto r = run("check --model biofilm --params " + config("biofilm_params.json") + " --samples 1000 --seed 0");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["violation_count"] == 0);
  CHECK(j["samples"] == 1000);
  CHECK(run("check --model biofilm --params " + config("biofilm_params.json") + " --samples 1000 --seed 0").out ==
        r.out);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  write(dir / "unknown.json", R"({"cell": {"dim": 1, "resolution": 16}, "extra": 0})");
  CHECK(run("cell --config " + (dir / "unknown.json").string() + " --out " + (dir / "o").string()).code == 2);
  CHECK(run("cell --config " + (dir / "missing.json").string() + " --out " + (dir / "o").string()).code == 4);
  CHECK(run("cell --out " + (dir / "o").string()).code == 2);
  CHECK(run("check --model tumor --params " + config("biofilm_params.json")).code == 2);
  write(dir / "file", "x");
  CHECK(run("cell --config " + config("cell.json") + " --out " + (dir / "file").string()).code == 4);
  write(dir / "tight.json", R"({
    "model": {"name": "biofilm", "params": {"D1": 1.0, "D2": 0.5}},
    "cell": {"dim": 1, "resolution": 64, "tolerance": 1e-300,
             "coefficient": {"type": "layers", "axis": 0, "breaks": [0.3], "values": [[1.0], [4.0]]}}
  })");
  CHECK(run("cell --config " + (dir / "tight.json").string() + " --out " + (dir / "o").string()).code == 3);
}

TEST_CASE("cell and effective outputs") {
  const auto dir = scratch("cell");
  REQUIRE(run("cell --config " + config("cell.json") + " --out " + (dir / "cell").string()).code == 0);
  for (const char* f : {"dhom.json", "dhom.csv", "correctors.csv", "cell.json"}) CHECK(fs::exists(dir / "cell" / f));
  REQUIRE(run("effective --config " + config("effective.json") + " --state " + config("state.json") + " --out " +
              (dir / "eff").string())
              .code == 0);
  const auto t = nlohmann::json::parse(slurp(dir / "eff" / "tensor.json"));
  CHECK(t["index_order"] == nlohmann::json({"i", "l", "m", "k"}));
}

TEST_CASE("macro and micro outputs are byte-identical across runs") {
  const auto dir = scratch("repeat");
  for (const char* run_dir : {"a", "b"}) {
    REQUIRE(run("macro --config " + config("macro.json") + " --out " + (dir / run_dir / "macro").string()).code == 0);
    REQUIRE(run("micro --config " + config("micro.json") + " --eps 0.125 --out " + (dir / run_dir / "micro").string())
                .code == 0);
  }
  for (const char* f : {"macro/trajectory.csv", "macro/final_state.csv", "micro/trajectory.csv"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  const auto header = slurp(dir / "a" / "macro/trajectory.csv").substr(0, 60);
  CHECK(header.rfind("t,H,production,mass_1,mass_2,newton_iters,dt\n", 0) == 0);
}
