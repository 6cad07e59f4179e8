#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(NILSYNTH_CLI) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string data(const std::string& name) { return std::string(NILSYNTH_DATA_DIR) + "/" + name; }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::string temp_file(const std::string& name, const std::string& content) {
  const std::string path = ::testing::TempDir() + name;
  std::ofstream(path) << content;
  return path;
}

const std::string kGeneric = "--spec " + data("generic_4_6.json");

}  // namespace

TEST(Cli, GeodesicStraightLineAndCutFlags) {
  const CliRun s = run("geodesic --spec " + data("corank1_5.json") + " --u0 0.6,0,0.8,0,0 --r 0 --t 0,1,2.5");
  ASSERT_EQ(s.code, 0);
  const auto j = nlohmann::json::parse(s.out);
  EXPECT_TRUE(j["cut_time"].is_null());
  for (const auto& row : j["rows"]) {
    const double t = row["t"].get<double>();
    EXPECT_NEAR(row["x1"].get<double>(), 0.6 * t, 1e-15);
    EXPECT_NEAR(row["x3"].get<double>(), 0.8 * t, 1e-15);
    EXPECT_EQ(row["y1"].get<double>(), 0.0);
    EXPECT_EQ(row["flag"], "");
  }
  const CliRun c = run("geodesic " + kGeneric + " --u0 0.5,0.5,0.5,0.5 --r 1,0.3 --t-max 8 --samples 5 --include-cut");
  ASSERT_EQ(c.code, 0);
  const auto k = nlohmann::json::parse(c.out);
  int cut = 0, post = 0;
  for (const auto& row : k["rows"]) {
    cut += row["flag"] == "cut";
    post += row["flag"] == "post_cut";
    if (row["flag"] == "cut") EXPECT_EQ(row["t"].get<double>(), k["cut_time"].get<double>());
  }
  EXPECT_EQ(cut, 1);
  EXPECT_EQ(post, 2);
}

TEST(Cli, CsvAndJsonCarryIdenticalNumbers) {
  const std::string args = "geodesic " + kGeneric + " --u0 0.5,0.5,0.5,0.5 --r 1,0.3 --t 0.3,1.7,5";
  const CliRun j = run(args + " --format json");
  const CliRun c = run(args + " --format csv");
  ASSERT_EQ(j.code, 0);
  ASSERT_EQ(c.code, 0);
  const auto doc = nlohmann::json::parse(j.out);
  const auto rows = parse_csv(c.out);
  ASSERT_EQ(rows.size(), doc["rows"].size() + 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    for (std::size_t col = 0; col < rows[0].size(); ++col) {
      const auto& v = doc["rows"][r - 1][rows[0][col]];
      if (v.is_number()) {
        EXPECT_EQ(std::stod(rows[r][col]), v.get<double>()) << rows[0][col];
      } else {
        EXPECT_EQ(rows[r][col], v.get<std::string>());
      }
    }
  }
  // 17 significant digits round-trip exactly.
  EXPECT_NE(j.out.find("0.29999999999999999"), std::string::npos);
}

TEST(Cli, Deterministic) {
  const std::string args = "report " + kGeneric + " --samples 3 --verdict-samples 8";
  const CliRun a = run(args), b = run(args, "NILSYNTH_THREADS=2");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["seed"], 42);
  EXPECT_EQ(j["rows"].size(), 3u);
  EXPECT_FALSE(j["p1"].get<bool>());
}

TEST(Cli, ClassifyVerdicts) {
  const auto ij = nlohmann::json::parse(run("classify --spec " + data("quaternion_i_j.json")).out);
  EXPECT_EQ(ij["kind"], "BothQ");
  EXPECT_TRUE(ij["p1"].get<bool>());
  EXPECT_TRUE(ij["p2"].get<bool>());
  const auto mixed = nlohmann::json::parse(run("classify --spec " + data("mixed_i_ihat.json")).out);
  EXPECT_EQ(mixed["kind"], "MixedSplit");
  EXPECT_TRUE(mixed["p1"].get<bool>());
  EXPECT_TRUE(mixed["p2"].get<bool>());
  const auto gen = nlohmann::json::parse(run("classify " + kGeneric).out);
  EXPECT_EQ(gen["kind"], "Generic");
  EXPECT_FALSE(gen["p1"].get<bool>());
  EXPECT_FALSE(gen["p2"].get<bool>());
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("cut-time --spec " + temp_file("bad.json", "{\"m\": 4, \"L\": [") + " --u0 1,0,0,0 --r 1").code, 2);
  const std::string nonskew = "{\"m\":4,\"L\":[[[0,1,0,0],[1,0,0,0],[0,0,0,0],[0,0,0,0]]]}";
  EXPECT_EQ(run("cut-time --spec " + temp_file("ns.json", nonskew) + " --u0 1,0,0,0 --r 1").code, 2);
  const std::string extra = "{\"m\":4,\"L\":[[[0,1,0,0],[-1,0,0,0],[0,0,0,0],[0,0,0,0]]],\"note\":1}";
  EXPECT_EQ(run("cut-time --spec " + temp_file("ex.json", extra) + " --u0 1,0,0,0 --r 1").code, 2);
  EXPECT_EQ(run("cut-time " + kGeneric + " --u0 1,0,0,0 --r 1,0 --unknown 1").code, 2);
  EXPECT_EQ(run("cut-time " + kGeneric + " --u0 1,1,0,0 --r 1,0").code, 2);
  // Forcing a zero tolerance breaks the (P1) <=> (P2) agreement for (i, j).
  EXPECT_EQ(run("classify --spec " + data("quaternion_i_j.json") + " --tol 0").code, 3);
  EXPECT_EQ(run("volume " + kGeneric + " --theta-nodes 8 --r-nodes 4 --target-error 1e-30").code, 4);
  EXPECT_EQ(run("volume --spec " + data("corank1_5.json")).code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, VolumeModesAndDensity) {
  const std::string spec = "--spec " + data("mixed_i_ihat.json");
  const auto t = nlohmann::json::parse(run("volume " + spec).out);
  const auto m = nlohmann::json::parse(run("volume " + spec + " --mode monte_carlo --mc-samples 50000").out);
  const double vt = t["volume"].get<double>(), vm = m["volume"].get<double>();
  EXPECT_LT(std::abs(vt - vm), t["error_estimate"].get<double>() + m["error_estimate"].get<double>());
  EXPECT_NEAR(t["density"].get<double>() * vt, 256.0, 1e-10);
  const auto fine = nlohmann::json::parse(run("volume " + spec + " --theta-nodes 128 --r-nodes 32").out);
  EXPECT_LT(std::abs(fine["volume"].get<double>() - vt), t["error_estimate"].get<double>());
  const auto d = nlohmann::json::parse(run("density " + spec).out);
  EXPECT_EQ(d["density"].get<double>(), t["density"].get<double>());
  EXPECT_EQ(d["homogeneous_dimension"], 8);
}

TEST(Cli, SweepCsvColumns) {
  const CliRun s = run("sweep --base " + data("sigma_zero_base.json") + " --direction " + data("sigma_zero_direction.json") +
                    " --points 5 --theta-nodes 16 --r-nodes 8 --format csv");
  ASSERT_EQ(s.code, 0);
  const auto rows = parse_csv(s.out);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"parameter", "V", "dV_dp", "sigma_class", "flags"}));
  EXPECT_EQ(rows[3][3], "SigmaZero");
  EXPECT_EQ(rows[1][3], "NonCritical");
}

TEST(Cli, MaxwellConjugateDistance) {
  const std::string cov = " --u0 0.5,0.5,0.5,0.5 --r 1,0.3";
  const auto mx = nlohmann::json::parse(run("maxwell " + kGeneric + cov).out);
  EXPECT_LT(mx["endpoint_gap"].get<double>(), 1e-9);
  EXPECT_GT(mx["velocity_gap"].get<double>(), 1e-3);
  const auto cj = nlohmann::json::parse(run("conjugate " + kGeneric + cov).out);
  EXPECT_GE(cj["conjugate_time"].get<double>(), cj["cut_time"].get<double>() - 1e-6);
  const auto ds = nlohmann::json::parse(run("distance " + kGeneric + cov + " --t 2 --oracle").out);
  EXPECT_NEAR(ds["distance"].get<double>(), 2.0, 1e-9);
  EXPECT_GE(ds["oracle_distance"].get<double>(), 2.0 - 1e-3);
}
