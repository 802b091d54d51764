#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "cascadecnn/fixture.hpp"
#include "cascadecnn/io.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace cascadecnn;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CASCADECNN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string common(const fs::path& fixture, const fs::path& out) {
  return "--model " + q(fixture / "toy_net.json") + " --eval-set " + q(fixture / "eval") + " --platform " +
         q(fixture / "platform.json") + " --out " + q(out) + " --batch 64";
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p)); }

}  // namespace

TEST_CASE("full pipeline on a generated fixture") {
  TempDir dir("cli");
  const fs::path fx = dir.path() / "fixture";
  REQUIRE(run("make-fixture --out " + q(fx) + " --samples 120") == 0);
  REQUIRE(fs::exists(fx / "toy_net.json"));

  const fs::path out = dir.path() / "out";
  REQUIRE(run("run " + common(fx, out) + " --tolerance 0.02") == 0);
  for (const char* f : {"lpu_scheme.json", "hpu_scheme.json", "sweep.csv", "quantize_summary.json", "ceu.json",
                        "gate.csv", "dse_lpu.csv", "dse_hpu.csv", "dse_summary.json", "tolerance_sweep.csv",
                        "cascade_predictions.csv", "simulate_summary.json", "report.json"}) {
    CHECK(fs::exists(out / f));
  }
  const auto lpu = read_json(out / "lpu_scheme.json");
  const auto hpu = read_json(out / "hpu_scheme.json");
  CHECK(lpu.at("wordlength").get<int>() < hpu.at("wordlength").get<int>());
  CHECK(hpu.at("accuracy_drop_vs_float").get<double>() <= 0.02 + 1e-12);
  const auto report = read_json(out / "report.json");
  CHECK(report.contains("tolerance_sweep"));
  CHECK(report.at("simulate").at("samples").get<int>() == 120);

  // Rerunning rewrites byte-identical outputs.
  const auto first = read_file_bytes(out / "report.json");
  const auto first_sweep = read_file_bytes(out / "tolerance_sweep.csv");
  REQUIRE(run("run " + common(fx, out) + " --tolerance 0.02") == 0);
  CHECK(read_file_bytes(out / "report.json") == first);
  CHECK(read_file_bytes(out / "tolerance_sweep.csv") == first_sweep);
}

TEST_CASE("exact-8 fixture at zero tolerance picks an 8-bit HPU") {
  TempDir dir("cli8");
  const NamedFixture f = make_exact8_fixture();
  save_network(f.net, dir.path() / "net.json");
  save_eval_set(f.eval, dir.path() / "eval");
  const fs::path out = dir.path() / "out";
  REQUIRE(run("quantize --model " + q(dir.path() / "net.json") + " --eval-set " + q(dir.path() / "eval") +
              " --tolerance 0 --out " + q(out)) == 0);
  CHECK(read_json(out / "hpu_scheme.json").at("wordlength").get<int>() == 8);
}

TEST_CASE("exit codes") {
  TempDir dir("clierr");
  const fs::path fx = dir.path() / "fixture";
  REQUIRE(run("make-fixture --out " + q(fx) + " --samples 40") == 0);
  const fs::path out = dir.path() / "out";

  CHECK(run("quantize --model " + q(dir.path() / "absent.json") + " --eval-set " + q(fx / "eval") + " --out " +
            q(out)) == 2);
  CHECK(run("report --out " + q(out)) == 2);
  CHECK(run("dse " + common(fx, out)) == 2);  // no schemes yet
  CHECK(run("quantize --tolerance -1 " + common(fx, out)) == 2);
  CHECK(run("no-such-command") == 2);

  REQUIRE(run("quantize " + common(fx, out) + " --tolerance 0.05") == 0);
  CHECK(run("report --out " + q(out)) == 2);  // simulate has not run

  // A device too small for one MACC.
  auto platform = read_json(fx / "platform.json");
  platform["avail_lut"] = 0;
  platform["avail_dsp"] = 0;
  write_text_file(dir.path() / "tiny.json", platform.dump());
  CHECK(run("dse --model " + q(fx / "toy_net.json") + " --platform " + q(dir.path() / "tiny.json") + " --out " +
            q(out)) == 3);
}
