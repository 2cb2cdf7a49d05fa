// Drives the installed binary end to end: exit codes, artifact layout and
// byte-level determinism. SEFOSS_TOOL_PATH is injected by the build.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>
#include <string>

#include <unistd.h>

#include <doctest.h>

#ifndef SEFOSS_TOOL_PATH
#error "SEFOSS_TOOL_PATH must be defined by the build"
#endif

namespace {

struct ToolResult {
  int exit_code = -1;
  std::string output;
};

ToolResult run_tool(const std::string& args, bool raw = false) {
  const std::string command =
      raw ? args + " 2>&1"
          : std::string(SEFOSS_TOOL_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buffer{};
  ToolResult result;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (std::fgets(buffer.data(), buffer.size(), pipe) != nullptr) {
    result.output += buffer.data();
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::filesystem::path temp_dir(const char* tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("sefoss_cli_" + std::to_string(::getpid()) + "_" + tag + "_" +
              std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Tiny but complete run: pretraining, calibration and main phase.
const char* kTinyArgs =
    "--set K=20 --set K_p=10 --set eval_every=5 --set B=8 --set mu=2 "
    "--set n_labeled=8 --set n_unlabeled=64 --set n_test_id=32 "
    "--set n_test_ood=32 --set hidden_sizes=8 --set feature_dim=4";

}  // namespace

TEST_CASE("train smoke run writes the artifact set") {
  const auto dir = temp_dir("smoke");
  const ToolResult r =
      run_tool("train --out " + dir.string() + " " + kTinyArgs);
  CHECK(r.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "summary.json"));
  CHECK(std::filesystem::exists(dir / "checkpoint.bin"));

  std::ifstream in(dir / "metrics.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "step,lr,l_l,l_p,l_s,l_e,l_w,total,inlier_mask_rate,"
        "outlier_mask_rate,acc_id,auroc_energy,auroc_confidence,"
        "tau_id,tau_ood,m_ood");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);  // evals at 5, 10, 15, 20
  std::filesystem::remove_all(dir);
}

TEST_CASE("--set accepts several assignments per occurrence") {
  const auto dir = temp_dir("multiset");
  const ToolResult r = run_tool(
      "train --out " + dir.string() +
      " --set K=10 K_p=5 eval_every=5 B=4 mu=1 n_labeled=8 n_unlabeled=24 "
      "n_test_id=16 n_test_ood=16 hidden_sizes=6 feature_dim=3");
  CHECK(r.exit_code == 0);
  std::ifstream in(dir / "metrics.csv");
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);  // evals at steps 5 and 10
  std::filesystem::remove_all(dir);
}

TEST_CASE("summary echoes the resolved mode") {
  const auto dir = temp_dir("mode");
  const ToolResult r = run_tool("train --mode supervised --out " +
                                dir.string() + " " + kTinyArgs);
  CHECK(r.exit_code == 0);
  const std::string summary = read_file(dir / "summary.json");
  CHECK(summary.find("\"mode\": \"supervised\"") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("same config and seed give byte-identical metrics") {
  const auto dir1 = temp_dir("det1");
  const auto dir2 = temp_dir("det2");
  CHECK(run_tool("train --seed 5 --out " + dir1.string() + " " + kTinyArgs)
            .exit_code == 0);
  CHECK(run_tool("train --seed 5 --out " + dir2.string() + " " + kTinyArgs)
            .exit_code == 0);
  const std::string a = read_file(dir1 / "metrics.csv");
  CHECK(!a.empty());
  CHECK(a == read_file(dir2 / "metrics.csv"));
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("config errors exit with code 2 and name the key") {
  const auto dir = temp_dir("badkey");
  const ToolResult bad_key =
      run_tool("train --out " + dir.string() + " --set no_such_key=1");
  CHECK(bad_key.exit_code == 2);
  CHECK(bad_key.output.find("no_such_key") != std::string::npos);

  const ToolResult bad_value =
      run_tool("train --out " + dir.string() + " --set eta0=warp");
  CHECK(bad_value.exit_code == 2);
  CHECK(bad_value.output.find("eta0") != std::string::npos);

  const ToolResult bad_invariant =
      run_tool("train --out " + dir.string() + " --set K=5 --set K_p=9");
  CHECK(bad_invariant.exit_code == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config file parsing errors carry the line number") {
  const auto dir = temp_dir("cfgfile");
  const auto cfg = dir / "bad.cfg";
  {
    std::ofstream out(cfg);
    out << "K=10\nbogus_key=3\n";
  }
  const ToolResult r = run_tool("train --config " + cfg.string() + " --out " +
                                dir.string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("bogus_key") != std::string::npos);
  CHECK(r.output.find(":2") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("eval reproduces the final logged auroc exactly") {
  const auto dir = temp_dir("evalrun");
  const std::string train_args = std::string(kTinyArgs) + " --seed 3";
  REQUIRE(run_tool("train --out " + dir.string() + " " + train_args)
              .exit_code == 0);

  // Materialize the resolved config for --gen from the summary echo: the
  // tiny overrides are enough to reconstruct it here.
  const auto cfg = dir / "run.cfg";
  {
    std::ofstream out(cfg);
    out << "K=20\nK_p=10\neval_every=5\nB=8\nmu=2\nn_labeled=8\n"
           "n_unlabeled=64\nn_test_id=32\nn_test_ood=32\nhidden_sizes=8\n"
           "feature_dim=4\nseed=3\n";
  }
  const ToolResult r =
      run_tool("eval --checkpoint " + (dir / "checkpoint.bin").string() +
               " --gen " + cfg.string() + " --out " + (dir / "ev").string());
  CHECK(r.exit_code == 0);

  // Final metrics row: auroc_energy is column 12 (1-based).
  std::ifstream metrics(dir / "metrics.csv");
  std::string line, last;
  std::getline(metrics, line);
  while (std::getline(metrics, line)) {
    if (!line.empty()) last = line;
  }
  std::vector<std::string> fields;
  std::stringstream ss(last);
  while (std::getline(ss, line, ',')) fields.push_back(line);
  const double logged = std::stod(fields[11]);

  const auto pos = r.output.find("auroc_energy=");
  REQUIRE(pos != std::string::npos);
  const double reported = std::stod(r.output.substr(pos + 13));
  CHECK(reported == logged);
  std::filesystem::remove_all(dir);
}

TEST_CASE("eval with unseen OOD emits the unseen rows") {
  const auto dir = temp_dir("unseen");
  REQUIRE(run_tool("train --out " + dir.string() + " " + kTinyArgs)
              .exit_code == 0);
  const auto cfg = dir / "run.cfg";
  {
    std::ofstream out(cfg);
    out << "K=20\nK_p=10\neval_every=5\nB=8\nmu=2\nn_labeled=8\n"
           "n_unlabeled=64\nn_test_id=32\nn_test_ood=32\nhidden_sizes=8\n"
           "feature_dim=4\n";
  }
  const ToolResult r = run_tool(
      "eval --checkpoint " + (dir / "checkpoint.bin").string() + " --gen " +
      cfg.string() + " --unseen-ood uniform_noise --out " +
      (dir / "ev").string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("unseen") != std::string::npos);
  const std::string scores = read_file(dir / "ev" / "scores.csv");
  CHECK(scores.find("unseen_ood,1,") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("eval of a version-mismatched checkpoint exits with code 3") {
  const auto dir = temp_dir("badckpt");
  const auto file = dir / "bogus.bin";
  {
    std::ofstream out(file, std::ios::binary);
    out << "SFOS";
    const std::uint32_t bad_version = 42;
    out.write(reinterpret_cast<const char*>(&bad_version), 4);
  }
  const ToolResult r = run_tool("eval --checkpoint " + file.string() +
                                " --gen nowhere.cfg --out " + dir.string());
  CHECK(r.exit_code == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("sweep cardinality and artifacts") {
  const auto dir = temp_dir("sweep");
  const std::string tiny =
      "--set K=4 --set K_p=2 --set eval_every=2 --set B=4 --set mu=1 "
      "--set n_labeled=8 --set n_unlabeled=24 --set n_test_id=16 "
      "--set n_test_ood=16 --set hidden_sizes=6 --set feature_dim=3";

  SUBCASE("single fraction, single mode") {
    const ToolResult r = run_tool("sweep --fractions 0 --modes sefoss --out " +
                                  dir.string() + " " + tiny);
    CHECK(r.exit_code == 0);
    std::ifstream in(dir / "sweep.csv");
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    double auroc = -1.0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++rows;
      auroc = std::stod(line.substr(line.find_last_of(',') + 1));
    }
    CHECK(rows == 1);
    CHECK(auroc >= 0.0);  // OOD test split exists even at fraction 0
    CHECK(auroc <= 1.0);
  }
  SUBCASE("three fractions by two modes") {
    const ToolResult r = run_tool(
        "sweep --fractions 0,0.5,1 --modes sefoss,fixmatch_baseline --out " +
        dir.string() + " " + tiny);
    CHECK(r.exit_code == 0);
    std::ifstream in(dir / "sweep.csv");
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (!line.empty()) ++rows;
    }
    CHECK(rows == 6);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("gradcheck subcommand exit codes") {
  CHECK(run_tool("gradcheck --trials 3").exit_code == 0);
  const ToolResult corrupted = run_tool("gradcheck --trials 1 --corrupt");
  CHECK(corrupted.exit_code == 1);
  CHECK(corrupted.output.find("FAIL") != std::string::npos);
}

TEST_CASE("config-doc covers the whole key registry") {
  const ToolResult r = run_tool("config-doc");
  CHECK(r.exit_code == 0);
  for (const char* key :
       {"`K`", "`K_p`", "`eta0`", "`gamma`", "`B`", "`mu`", "`w_p`", "`w_s`",
        "`w_e`", "`w_w`", "`mode`", "`seed`", "`ood_fraction`",
        "`hidden_sizes`", "`fixmatch_conf_threshold`"}) {
    INFO(key);
    CHECK(r.output.find(key) != std::string::npos);
  }
}

TEST_CASE("the config file can carry the output directory") {
  const auto dir = temp_dir("outkey");
  const auto cfg = dir / "run.cfg";
  {
    std::ofstream out(cfg);
    out << "K=4\nK_p=2\neval_every=2\nB=4\nmu=1\nn_labeled=8\n"
           "n_unlabeled=24\nn_test_id=16\nn_test_ood=16\nhidden_sizes=6\n"
           "feature_dim=3\nout=" << (dir / "from_cfg").string() << "\n";
  }
  CHECK(run_tool("train --config " + cfg.string()).exit_code == 0);
  CHECK(std::filesystem::exists(dir / "from_cfg" / "metrics.csv"));
  // Without --out and without an out key the run is a config error.
  const ToolResult r = run_tool("train --set K=2 --set K_p=1");
  CHECK(r.exit_code == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("export-data writes an importable CSV") {
  const auto dir = temp_dir("export");
  const auto file = dir / "dataset.csv";
  const ToolResult r = run_tool(
      "export-data --file " + file.string() +
      " --hidden --set n_labeled=8 --set n_unlabeled=16 --set n_test_id=8 "
      "--set n_test_ood=8");
  CHECK(r.exit_code == 0);
  REQUIRE(std::filesystem::exists(file));
  CHECK(std::filesystem::exists(dir / "dataset.csv.hidden.csv"));
  std::ifstream in(file);
  std::string header;
  std::getline(in, header);
  CHECK(header == "split,x_0,x_1,x_2,x_3,x_4,x_5,x_6,x_7,label,is_ood");
  std::filesystem::remove_all(dir);
}

TEST_CASE("SEFOSS_THREADS controls sweep parallelism without changing output") {
  const auto dir1 = temp_dir("thr1");
  const auto dir2 = temp_dir("thr2");
  const std::string tiny =
      "--set K=4 --set K_p=2 --set eval_every=2 --set B=4 --set mu=1 "
      "--set n_labeled=8 --set n_unlabeled=24 --set n_test_id=16 "
      "--set n_test_ood=16 --set hidden_sizes=6 --set feature_dim=3";
  const std::string args = "sweep --fractions 0,0.5 --modes sefoss ";
  CHECK(run_tool("env SEFOSS_THREADS=2 " + std::string(SEFOSS_TOOL_PATH) +
                 " " + args + "--out " + dir1.string() + " " + tiny,
                 /*raw=*/true)
            .exit_code == 0);
  CHECK(run_tool(args + "--out " + dir2.string() + " " + tiny).exit_code == 0);
  CHECK(read_file(dir1 / "sweep.csv") == read_file(dir2 / "sweep.csv"));
  CHECK(!read_file(dir1 / "sweep.csv").empty());
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("unknown subcommands exit with the config-error code") {
  CHECK(run_tool("frobnicate").exit_code == 2);
}
