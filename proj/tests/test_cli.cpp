#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mpopf/cli.hpp"
#include "support/feeders.hpp"

namespace mpopf {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("mpopf_cli_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_feeder(const std::string& name, const FeederSpec& spec) {
    std::ofstream f(path(name));
    save_feeder(f, spec);
    return path(name);
  }

  int call(std::vector<std::string> args) {
    args.insert(args.begin(), "mpopf");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::main(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  static json read_json(const std::string& p) { return json::parse(read_text_file(p)); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, SolveWritesArtifacts) {
  const std::string net = write_feeder("two.json", testing::two_bus_spec());
  ASSERT_EQ(call({"solve", "--network", net, "--out-dir", path("run")}), cli::kOk) << err_.str();
  const json manifest = read_json(path("run/manifest.json"));
  EXPECT_EQ(manifest["status"], "converged");
  EXPECT_EQ(manifest["buses"], 2);
  EXPECT_EQ(manifest["config"]["rho"], 1.0);
  EXPECT_EQ(manifest["model_hash"].get<std::string>().size(), 16u);
  EXPECT_TRUE(manifest["exactness"]["exact"].get<bool>());
  const json sol = read_json(path("run/solution.json"));
  EXPECT_EQ(sol["status"], "converged");
  EXPECT_EQ(sol["iterations"], manifest["iterations"]);
  EXPECT_TRUE(sol["buses"][1].contains("S"));
  EXPECT_FALSE(sol["buses"][0].contains("S"));
  const std::string hist = read_text_file(path("run/history.csv"));
  EXPECT_EQ(hist.substr(0, hist.find('\n')), "k,r,s,objective");
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), manifest["iterations"].get<int>() + 1);
  EXPECT_NE(out_.str().find("status converged"), std::string::npos);
}

TEST_F(CliTest, SolveHitsIterationCap) {
  const std::string net = write_feeder("two.json", testing::two_bus_spec());
  EXPECT_EQ(call({"solve", "--network", net, "--out-dir", path("run"), "--max-iters", "1"}), cli::kMaxIters);
  EXPECT_EQ(read_json(path("run/manifest.json"))["status"], "max-iters");
}

TEST_F(CliTest, SolveReportsMissingFileAndBadInput) {
  const std::string missing = path("nope.json");
  EXPECT_EQ(call({"solve", "--network", missing}), cli::kIo);
  EXPECT_NE(err_.str().find(missing), std::string::npos);

  write_text_file(path("bad.json"), "{\n  \"buses\": [\n    {\"id\": 0,,}\n  ]\n}\n");
  EXPECT_EQ(call({"solve", "--network", path("bad.json")}), cli::kInvalid);
  EXPECT_NE(err_.str().find("line 3"), std::string::npos);

  FeederSpec dup = testing::two_bus_spec();
  dup.buses[1].id = 0;
  EXPECT_EQ(call({"solve", "--network", write_feeder("dup.json", dup)}), cli::kInvalid);
  EXPECT_NE(err_.str().find("duplicate id"), std::string::npos);

  const std::string net = write_feeder("two.json", testing::two_bus_spec());
  EXPECT_EQ(call({"solve", "--network", net, "--rho", "-1"}), cli::kInvalid);
  EXPECT_EQ(call({"solve", "--network", net, "--mode", "async"}), cli::kInvalid);
  EXPECT_EQ(call({"solve"}), cli::kInvalid);
  EXPECT_EQ(call({}), cli::kInvalid);
  EXPECT_EQ(call({"--help"}), cli::kOk);
}

TEST_F(CliTest, GenerateProducesValidFeeders) {
  ASSERT_EQ(call({"generate", "--kind", "line", "--size", "50", "-o", path("line.json")}), cli::kOk);
  const FeederModel line = load_feeder_file(path("line.json"));
  EXPECT_EQ(line.size(), 50);
  EXPECT_EQ(line.diameter(), 49);
  ASSERT_EQ(call({"generate", "--kind", "fat-tree", "--size", "7"}), cli::kOk);
  const FeederModel tree = load_feeder_string(out_.str());
  EXPECT_EQ(tree.size(), 7);
  EXPECT_EQ(tree.children(0).size(), 2u);
  EXPECT_EQ(call({"generate", "--kind", "line", "--size", "1"}), cli::kInvalid);
  EXPECT_EQ(call({"generate", "--kind", "star", "--size", "5"}), cli::kInvalid);
}

TEST_F(CliTest, BenchWritesCsv) {
  ASSERT_EQ(call({"bench", "--sizes", "3,4", "--kinds", "line,fat-tree", "-o", path("bench.csv")}), cli::kOk);
  std::istringstream csv(read_text_file(path("bench.csv")));
  std::string row;
  std::getline(csv, row);
  EXPECT_EQ(row, "kind,size,iterations,total_s,per_bus_s");
  std::vector<std::string> rows;
  while (std::getline(csv, row)) rows.push_back(row.substr(0, row.find(',', row.find(',') + 1)));
  EXPECT_EQ(rows, (std::vector<std::string>{"line,3", "line,4", "fat-tree,3", "fat-tree,4"}));
  EXPECT_EQ(call({"bench", "--sizes", "1"}), cli::kInvalid);
  EXPECT_EQ(call({"bench", "--sizes", "3", "--kinds", "ring"}), cli::kInvalid);
}

TEST_F(CliTest, VerifyAcceptsSolveOutputAndFlagsCorruption) {
  const std::string net = write_feeder("four.json", testing::four_bus_unbalanced_spec());
  ASSERT_EQ(call({"solve", "--network", net, "--out-dir", path("run")}), cli::kOk) << err_.str();
  const std::string sol = path("run/solution.json");
  EXPECT_EQ(call({"verify", "--solution", sol, "--network", net, "--report", path("rep.json")}), cli::kOk);
  EXPECT_NE(out_.str().find("BFM feasibility: PASS"), std::string::npos);
  EXPECT_TRUE(read_json(path("rep.json"))["bfm"]["pass"].get<bool>());

  json doc = read_json(sol);
  for (auto& b : doc["buses"])
    if (b["id"] == 2) b["v"][0][0]["re"] = b["v"][0][0]["re"].get<double>() + 0.1;
  write_text_file(path("bad_sol.json"), doc.dump());
  EXPECT_EQ(call({"verify", "--solution", path("bad_sol.json"), "--network", net}), cli::kInvalid);
  EXPECT_NE(out_.str().find("FAIL"), std::string::npos);
  EXPECT_NE(out_.str().find("bus 2:"), std::string::npos);

  const std::string other = write_feeder("two.json", testing::two_bus_spec());
  EXPECT_EQ(call({"verify", "--solution", sol, "--network", other}), cli::kInvalid);
  EXPECT_NE(err_.str().find("dimension mismatch"), std::string::npos);

  EXPECT_EQ(call({"verify", "--solution", path("none.json"), "--network", net}), cli::kIo);
}

TEST_F(CliTest, VerifyRequireExact) {
  const std::string net = write_feeder("two.json", testing::two_bus_spec());
  ASSERT_EQ(call({"solve", "--network", net, "--out-dir", path("run")}), cli::kOk);
  EXPECT_EQ(call({"verify", "--solution", path("run/solution.json"), "--network", net, "--require-exact"}), cli::kOk);
  EXPECT_NE(out_.str().find("Exactness: rank-1"), std::string::npos);

  // A converged block is only numerically rank-1, so a zero threshold rejects it.
  EXPECT_EQ(call({"verify", "--solution", path("run/solution.json"), "--network", net, "--require-exact",
                  "--threshold", "0"}),
            cli::kInvalid);
  EXPECT_NE(out_.str().find("NOT rank-1"), std::string::npos);
  EXPECT_EQ(call({"verify", "--solution", path("run/solution.json"), "--network", net, "--threshold", "0"}), cli::kOk);
}

}  // namespace
}  // namespace mpopf
