#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include "hsp/cli.hpp"
#include "test_util.hpp"

namespace hsp {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("hsp_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

RunResult run_cli(const std::string& args, const fs::path& ws, const std::string& env = "") {
  const fs::path err = ws / "stderr.txt";
  std::string cmd = env + " " + std::string(HSP_CLI_PATH) + " --workspace " + ws.string() + " " + args + " 2>" + err.string();
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  char buf[4096];
  std::size_t k;
  while ((k = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, k);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = cli::slurp(err);
  return r;
}

const std::string kTiny = " --steps 1600 --hidden 16 --episodes-per-iter 4 --ec-episodes 4 ";

json read_json(const fs::path& p) { return json::parse(cli::slurp(p)); }

std::map<std::string, std::string> output_hashes(const fs::path& manifest) {
  std::map<std::string, std::string> m;
  const json j = read_json(manifest);
  for (const auto& o : j["outputs"]) m[o["path"].get<std::string>()] = o["hash"].get<std::string>();
  return m;
}

// Greedy selection recomputed from scratch at every step.
std::vector<std::size_t> oracle_greedy(const std::vector<std::vector<double>>& ecs, std::size_t K, std::size_t i0) {
  const std::size_t n = ecs.size(), m = ecs[0].size();
  std::vector<double> c(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double mx = 0.0;
    for (const auto& e : ecs) mx = std::max(mx, e[k]);
    c[k] = mx > 0 ? 1.0 / mx : 0.0;
  }
  auto ed = [&](const std::vector<std::size_t>& S) {
    double t = 0.0;
    for (std::size_t a = 0; a < S.size(); ++a)
      for (std::size_t b = a + 1; b < S.size(); ++b)
        for (std::size_t k = 0; k < m; ++k) t += c[k] * std::abs(ecs[S[a]][k] - ecs[S[b]][k]);
    return t;
  };
  std::vector<std::size_t> S{i0};
  while (S.size() < K) {
    std::size_t best = n;
    double bv = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::find(S.begin(), S.end(), j) != S.end()) continue;
      auto T = S;
      T.push_back(j);
      double v = ed(T);
      if (best == n || v > bv + 1e-12) best = j, bv = v;
    }
    S.push_back(best);
  }
  return S;
}

TEST(Cli, ReplayShippedFixturesGiveIdenticalHash) {
  auto ws = scratch("replay");
  int n = 0;
  for (const auto& e : fs::directory_iterator(testing::source_dir() / "tests" / "fixtures")) {
    if (e.path().extension() != ".traj") continue;
    auto r = run_cli("replay " + e.path().string(), ws);
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = json::parse(r.out);
    EXPECT_TRUE(j["identical"].get<bool>());
    EXPECT_EQ(j["hash"], j["replay_hash"]);
    EXPECT_EQ(j["hash"], cli::content_hash(cli::slurp(e.path())));
    ++n;
  }
  EXPECT_GE(n, 3);
}

TEST(Cli, ReplayDetectsTamperedLog) {
  auto ws = scratch("tamper");
  std::string text = cli::slurp(testing::source_dir() / "tests" / "fixtures" / "coordination_ring.traj");
  auto pos = text.find(" r=20 ");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 6, " r=0 ");
  cli::write_text(ws / "bad.traj", text);
  auto r = run_cli("replay bad.traj", ws);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.err)["error"], "ReplayMismatch");
}

TEST(Cli, ErrorsAreMachineReadable) {
  auto ws = scratch("errors");
  auto a = run_cli("no-such-command", ws);
  EXPECT_EQ(a.code, 2);
  EXPECT_EQ(json::parse(a.err)["error"], "UsageError");
  auto b = run_cli("eval --layout nowhere --policy noop --partner noop", ws);
  EXPECT_EQ(b.code, 1);
  EXPECT_EQ(json::parse(b.err)["error"], "UnknownLayout");
  auto c = run_cli("eval --layout symmetric_mini --policy script:juggle --partner noop", ws);
  EXPECT_EQ(json::parse(c.err)["error"], "UnknownAgent");
  cli::write_text(ws / "bad.json", R"({"no_such_key": 1})");
  auto d = run_cli("train-biased --layout symmetric_mini --config bad.json", ws);
  EXPECT_EQ(d.code, 1);
  EXPECT_EQ(json::parse(d.err)["error"], "InvalidArgument");
}

TEST(Cli, TrainBiasedThenFilterMatchesGreedyOracle) {
  auto ws = scratch("pipeline");
  auto r = run_cli("train-biased --layout distant_tomato_mini --n 8 --seed 7" + kTiny + "--out biased", ws);
  ASSERT_EQ(r.code, 0) << r.err;
  auto cands = read_json(ws / "biased" / "candidates.json");
  ASSERT_EQ(cands["members"].size(), 8u);
  std::set<std::uint64_t> weight_seeds;
  std::vector<std::vector<double>> ecs;
  for (const auto& m : cands["members"]) {
    EXPECT_TRUE(fs::exists(ws / "biased" / m["checkpoint"].get<std::string>()));
    weight_seeds.insert(m["weight_seed"].get<std::uint64_t>());
    ecs.push_back(m["ec"].get<std::vector<double>>());
  }
  EXPECT_EQ(weight_seeds.size(), 8u);
  auto manifest = read_json(ws / "biased" / "manifest.json");
  EXPECT_EQ(manifest["command"], "train-biased");
  EXPECT_EQ(manifest["outputs"].size(), 8u * 3 + 1);

  auto f = run_cli("filter-pool --candidates biased/candidates.json --k 4 --seed 7 --out pool", ws);
  ASSERT_EQ(f.code, 0) << f.err;
  auto ids = json::parse(f.out)["ids"].get<std::vector<std::string>>();
  auto expect = oracle_greedy(ecs, 4, Rng(7).uniform(8));
  ASSERT_EQ(ids.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ids[i], "biased-" + std::to_string(expect[i]));
  auto pool = load_pool_manifest(ws / "pool" / "pool.json");
  EXPECT_EQ(pool.members.size(), 4u);
  for (const auto& m : pool.members) EXPECT_TRUE(fs::exists(ws / "pool" / m.checkpoint));
}

TEST(Cli, RerunsAreHashEqualAndWorkerIndependent) {
  auto ws = scratch("idempotent");
  const std::string base = "train-biased --layout symmetric_mini --n 2" + kTiny;
  const std::string args = base + "--seed 3 ";
  ASSERT_EQ(run_cli(args + "--out a", ws).code, 0);
  ASSERT_EQ(run_cli(args + "--out b", ws, "HSP_WORKERS=3").code, 0);
  ASSERT_EQ(run_cli(args + "--out c --workers 2", ws).code, 0);
  auto ha = output_hashes(ws / "a" / "manifest.json");
  EXPECT_EQ(ha.size(), 7u);
  EXPECT_EQ(ha, output_hashes(ws / "b" / "manifest.json"));
  EXPECT_EQ(ha, output_hashes(ws / "c" / "manifest.json"));
  EXPECT_EQ(read_json(ws / "c" / "manifest.json")["config"]["train"]["workers"], 2);
  ASSERT_EQ(run_cli(base + "--seed 4 --out d", ws).code, 0);
  EXPECT_NE(ha, output_hashes(ws / "d" / "manifest.json"));
}

TEST(Cli, FlagsOverrideConfigFileOverDefaults) {
  auto ws = scratch("precedence");
  cli::write_text(ws / "cfg.json", R"({"n": 3, "total_steps": 800, "hidden": 16, "episodes_per_iter": 4, "ec_episodes": 2})");
  auto r = run_cli("train-biased --layout symmetric_mini --config cfg.json --n 1 --out o", ws);
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = read_json(ws / "o" / "manifest.json");
  EXPECT_EQ(m["config"]["n"], 1);
  EXPECT_EQ(m["config"]["ec_episodes"], 2);
  EXPECT_EQ(m["config"]["train"]["total_steps"], 800);
  EXPECT_EQ(m["config"]["train"]["lr"], TrainConfig{}.lr);
  bool cfg_listed = false;
  for (const auto& in : m["inputs"]) cfg_listed |= in["path"].get<std::string>().find("cfg.json") != std::string::npos;
  EXPECT_TRUE(cfg_listed);
}

TEST(Cli, BaselinePoolAdaptiveAndEval) {
  auto ws = scratch("stage2");
  const std::string tiny = " --steps 1600 --hidden 16 --episodes-per-iter 4 ";
  ASSERT_EQ(run_cli("train-biased --layout distant_tomato_mini --n 3" + kTiny + "--out biased", ws).code, 0);
  auto b = run_cli("build-baseline-pool --layout distant_tomato_mini --method mep --n 2" + tiny + "--out mep", ws);
  ASSERT_EQ(b.code, 0) << b.err;
  auto members = read_json(ws / "mep" / "members.json")["members"];
  EXPECT_EQ(members.size(), 6u);
  auto f = run_cli("filter-pool --candidates biased/candidates.json --mep mep/members.json --k 4 --out pool", ws);
  ASSERT_EQ(f.code, 0) << f.err;
  auto ids = json::parse(f.out)["ids"].get<std::vector<std::string>>();
  EXPECT_EQ(ids[2], "mep-0-final");
  EXPECT_EQ(ids[3], "mep-1-final");
  auto a = run_cli("train-adaptive --layout distant_tomato_mini --pool pool/pool.json --arch mlp" + tiny + "--out adaptive", ws);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(read_json(ws / "adaptive" / "manifest.json")["result"]["partners"].size(), 4u);
  auto e = run_cli("eval --layout distant_tomato_mini --policy adaptive/adaptive.ckpt --partner "
                   "script:onion_placement_and_delivery,noop --episodes 3 --seats both --out eval",
                   ws);
  ASSERT_EQ(e.code, 0) << e.err;
  auto summary = read_json(ws / "eval" / "summary.json");
  EXPECT_EQ(summary["results"].size(), 4u);
  EXPECT_NE(e.out.find("noop (pos 1)"), std::string::npos);
  EXPECT_NE(e.out.find("noop (pos 2)"), std::string::npos);
  auto fcp = run_cli("train-adaptive --layout distant_tomato_mini --pool mep/members.json --arch mlp" + tiny + "--out on-mep", ws);
  EXPECT_EQ(fcp.code, 0) << fcp.err;
}

TEST(Cli, ServeAcceptsAClient) {
  auto ws = scratch("serve");
  std::string cmd = std::string(HSP_CLI_PATH) + " --workspace " + ws.string() +
                    " serve --layout symmetric_mini --roster noop,random,script:delivery,script:onion_placement"
                    " --port 0 --tick-ms 5 --duration 4 --store st 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  char line[256] = {0};
  ASSERT_TRUE(fgets(line, sizeof line, p));
  int port = json::parse(line)["listening"];
  {
    ws::Client client("127.0.0.1", port);
    client.send_json({{"type", "join"}, {"participant", "cli"}});
    auto m = client.receive();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["type"], "joined");
    bool delta = false;
    for (int i = 0; i < 10 && !delta; ++i) {
      auto x = client.receive();
      delta = x && (*x)["type"] == "stateDelta";
    }
    EXPECT_TRUE(delta);
  }
  EXPECT_EQ(WEXITSTATUS(pclose(p)), 0);
  bool session_dir = false;
  for (const auto& e : fs::directory_iterator(ws / "st")) session_dir |= fs::exists(e.path() / "session.json");
  EXPECT_TRUE(session_dir);
}

}  // namespace
}  // namespace hsp
