#pragma once

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hsp/learners.hpp"
#include "hsp/playserver.hpp"
#include "hsp/pool.hpp"

namespace hsp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Git blob hash of a byte string, hex encoded.
inline std::string content_hash(std::string_view data) {
  std::string blob = "blob " + std::to_string(data.size()) + std::string(1, '\0');
  blob.append(data);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) throw Error(Errc::IoError, "SHA-1 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(Errc::IoError, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(Errc::IoError, "cannot write " + p.string());
  f << text;
}

inline fs::path data_dir() {
  if (const char* env = std::getenv("HSP_DATA_DIR")) return env;
#ifdef HSP_DATA_DIR
  return HSP_DATA_DIR;
#else
  return fs::current_path();
#endif
}

// Paths are relative to the workspace; shipped layouts and configs are
// found by name under the data directory.
struct Context {
  fs::path workspace = ".";

  fs::path resolve(const std::string& p) const {
    fs::path q(p);
    return q.is_absolute() ? q : workspace / q;
  }

  fs::path find_layout(const std::string& arg) const {
    fs::path p = resolve(arg);
    if (fs::is_regular_file(p)) return p;
    fs::path shipped = data_dir() / "layouts" / (arg + ".layout");
    if (fs::is_regular_file(shipped)) return shipped;
    throw Error(Errc::UnknownLayout, "no layout '" + arg + "'");
  }

  // "none" disables; "" picks the shipped default for the layout.
  std::optional<fs::path> find_config(const std::string& arg, const fs::path& shipped) const {
    if (arg == "none") return std::nullopt;
    if (arg.empty()) {
      if (fs::is_regular_file(shipped)) return shipped;
      return std::nullopt;
    }
    fs::path p = resolve(arg);
    if (!fs::is_regular_file(p)) throw Error(Errc::IoError, "cannot read " + p.string());
    return p;
  }

  PolicyHandle policy(const std::string& spec) const {
    if (spec == "noop" || spec == "random" || spec.rfind("script:", 0) == 0) return parse_partner_spec(spec);
    return parse_partner_spec(resolve(spec).string());
  }
};

// Records the inputs, configuration and outputs of one subcommand run.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir) : command_(std::move(command)), dir_(std::move(out_dir)) {}

  void input(const fs::path& p) { inputs_.push_back({{"path", p.generic_string()}, {"hash", content_hash(slurp(p))}}); }
  void config(json c) { config_ = std::move(c); }
  void seed(const std::string& name, std::uint64_t v) { seeds_[name] = v; }
  json& extra() { return extra_; }

  // Writes an artifact under the output directory and registers it.
  fs::path output(const std::string& rel, const std::string& bytes) {
    fs::path p = dir_ / rel;
    write_text(p, bytes);
    outputs_.push_back({{"path", rel}, {"hash", content_hash(bytes)}});
    return p;
  }

  json to_json() const {
    json j{{"command", command_}, {"config", config_}, {"seeds", seeds_}, {"inputs", inputs_}, {"outputs", outputs_}};
    if (!extra_.is_null()) j["result"] = extra_;
    j["hash"] = content_hash(j.dump());
    return j;
  }

  fs::path write() const {
    fs::path p = dir_ / "manifest.json";
    write_text(p, to_json().dump(2) + "\n");
    return p;
  }

 private:
  std::string command_;
  fs::path dir_;
  json config_ = json::object();
  json seeds_ = json::object();
  json inputs_ = json::array();
  json outputs_ = json::array();
  json extra_;
};

// Built-in defaults < config file < explicit flags.
class Settings {
 public:
  void declare(CLI::App* app, const std::string& key, json def, const std::string& help) {
    values_[key] = def;
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    opts_[key] = app->add_option(flag, raw_[key], help);
  }

  // Train-config keys are exposed as flags too and land in TrainConfig.
  void declare_train(CLI::App* app) {
    train_flag(app, "--steps", "total_steps", "environment steps per training run");
    train_flag(app, "--seed", "seed", "master seed");
    train_flag(app, "--workers", "workers", "worker threads (default: HSP_WORKERS or 1)");
    train_flag(app, "--hidden", "hidden", "hidden layer width");
    train_flag(app, "--episodes-per-iter", "episodes_per_iter", "episodes per PPO iteration");
    train_flag(app, "--lr", "lr", "Adam learning rate");
    train_flag(app, "--entropy-coef", "entropy_coef", "entropy bonus coefficient");
    train_flag(app, "--ppo-epochs", "ppo_epochs", "PPO epochs per iteration");
    train_flag(app, "--population-entropy-coef", "population_entropy_coef", "MEP population entropy coefficient");
    app->add_option("--config", config_file_, "JSON config file (flags override it)");
  }

  void finalize(const Context& ctx) {
    json file = json::object();
    if (!config_file_.empty()) {
      fs::path p = ctx.resolve(config_file_);
      config_path_ = p;
      try {
        file = json::parse(slurp(p));
      } catch (const json::exception& e) {
        throw Error(Errc::ParseError, p.string() + ": " + e.what());
      }
      if (!file.is_object()) throw Error(Errc::ParseError, p.string() + ": expected a JSON object");
    }
    json train_overrides = json::object();
    for (auto it = file.begin(); it != file.end(); ++it) {
      if (values_.contains(it.key()))
        values_[it.key()] = it.value();
      else
        train_overrides[it.key()] = it.value();
    }
    apply_json(train, train_overrides);
    for (auto& [key, opt] : opts_) {
      if (opt->count() == 0) continue;
      values_[key] = convert(raw_[key], values_[key], key);
    }
    json flags = json::object();
    for (auto& [key, opt] : train_opts_)
      if (opt->count() > 0) flags[key] = convert(train_raw_[key], to_json_with_workers()[key], key);
    apply_json(train, flags);
    train.validate();
  }

  void record_config(Manifest& m) const {
    if (config_path_) m.input(*config_path_);
    m.config(snapshot());
    m.seed("seed", train.seed);
  }

  template <class T>
  T get(const std::string& key) const {
    return values_.at(key).get<T>();
  }

  json snapshot() const {
    json j = values_;
    j["train"] = to_json_with_workers();
    return j;
  }

  TrainConfig train;

 private:
  void train_flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    train_opts_[key] = app->add_option(flag, train_raw_[key], help);
  }

  json to_json_with_workers() const {
    json j = hsp::to_json(train);
    j["workers"] = train.workers;
    return j;
  }

  static json convert(const std::string& s, const json& like, const std::string& key) {
    try {
      if (like.is_boolean()) {
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        throw std::invalid_argument(s);
      }
      if (like.is_number_unsigned()) return static_cast<std::uint64_t>(std::stoull(s));
      if (like.is_number_integer()) return static_cast<long long>(std::stoll(s));
      if (like.is_number_float()) return std::stod(s);
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "bad value '" + s + "' for " + key);
    }
    return s;
  }

  json values_ = json::object();
  std::map<std::string, std::string> raw_;
  std::map<std::string, CLI::Option*> opts_;
  std::map<std::string, std::string> train_raw_;
  std::map<std::string, CLI::Option*> train_opts_;
  std::string config_file_;
  std::optional<fs::path> config_path_;
};

inline std::string rel(const fs::path& target, const fs::path& base) {
  return fs::relative(fs::absolute(target), fs::absolute(base)).generic_string();
}

struct LoadedLayout {
  fs::path path;
  std::shared_ptr<const Layout> layout;
};

inline LoadedLayout load(const Context& ctx, const std::string& arg, Manifest* m) {
  fs::path p = ctx.find_layout(arg);
  if (m) m->input(p);
  return {p, std::make_shared<const Layout>(load_layout(p))};
}

inline ShapingSchedule load_shaping(const Context& ctx, const std::string& arg, const Layout& L, int stage, Manifest& m) {
  auto p = ctx.find_config(arg, data_dir() / "configs" / "shaping" / (L.name + "_stage" + std::to_string(stage) + ".shaping"));
  if (!p) return {};
  m.input(*p);
  return parse_shaping_schedule(slurp(*p));
}

// Members of a pool or population file: {"members": [{"id", "checkpoint"}]},
// checkpoint paths relative to the file.
inline std::vector<PolicyHandle> load_pool_policies(const fs::path& file, Manifest& m) {
  json j;
  try {
    j = json::parse(slurp(file));
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, file.string() + ": " + e.what());
  }
  m.input(file);
  std::vector<PolicyHandle> out;
  for (const auto& e : j.at("members")) {
    fs::path ck = file.parent_path() / e.at("checkpoint").get<std::string>();
    m.input(ck);
    auto c = load_checkpoint(ck);
    c.id = e.at("id").get<std::string>();
    out.push_back(policy_from_checkpoint(c));
  }
  return out;
}

// ------------------------------------------------------------ subcommands

struct Command {
  CLI::App* app = nullptr;
  Settings settings;
  std::function<int(Command&)> run;
};

inline int train_biased(const Context& ctx, Command& c) {
  auto& s = c.settings;
  s.finalize(ctx);
  fs::path out = ctx.resolve(s.get<std::string>("out"));
  Manifest m("train-biased", out);
  s.record_config(m);
  auto [lp, L] = load(ctx, s.get<std::string>("layout"), &m);
  const std::size_t dim = event_dim(*L);
  WeightGrid grid = zero_weight_grid(dim);
  if (auto gp = ctx.find_config(s.get<std::string>("grid"), data_dir() / "configs" / "grids" / (L->name + ".grid"))) {
    m.input(*gp);
    grid = parse_weight_grid(slurp(*gp), dim);
  } else {
    throw Error(Errc::IoError, "no weight grid for layout '" + L->name + "'");
  }
  ShapingSchedule shaping = load_shaping(ctx, s.get<std::string>("shaping"), *L, 1, m);
  const int n = s.get<int>("n");
  if (n < 1) throw Error(Errc::InvalidArgument, "--n must be >= 1");
  const int ec_episodes = s.get<int>("ec_episodes");
  const std::uint64_t seed = s.train.seed;
  json cands = json::array();
  for (int i = 0; i < n; ++i) {
    const std::uint64_t ws = derive_seed(seed, 500 + static_cast<std::uint64_t>(i));
    WeightVector w = sample_weight_vector(grid, ws);
    TrainConfig cfg = s.train;
    cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    auto run = selfplay_train(L, w, cfg, shaping);
    const std::string id = "biased-" + std::to_string(i);
    Checkpoint cw = checkpoint_from_model(*run.w_policy, id, L->name);
    cw.meta = {{"weight_seed", ws}, {"w", w.w}, {"order_multiplier", w.order_multiplier}, {"train_seed", cfg.seed}};
    Checkpoint ca = checkpoint_from_model(*run.a_policy, id + "-partner", L->name);
    ca.meta = {{"train_seed", cfg.seed}};
    m.output(id + ".ckpt", serialize_checkpoint(cw));
    m.output(id + "-partner.ckpt", serialize_checkpoint(ca));
    m.output(id + ".curves.tsv", format_curves(run.curves));
    auto ec = expected_event_count(policy_from_checkpoint(cw), policy_from_checkpoint(ca), L, ec_episodes,
                                   derive_seed(seed, 900 + static_cast<std::uint64_t>(i)), cfg.workers);
    m.seed(id, cfg.seed);
    cands.push_back({{"id", id},
                     {"checkpoint", id + ".ckpt"},
                     {"partner_checkpoint", id + "-partner.ckpt"},
                     {"weight_seed", ws},
                     {"w", w.w},
                     {"order_multiplier", w.order_multiplier},
                     {"ec", ec.joint},
                     {"mean_score", ec.mean_score}});
    std::fprintf(stderr, "trained %s (%d/%d)\n", id.c_str(), i + 1, n);
  }
  m.output("candidates.json", json{{"layout", L->name}, {"members", cands}}.dump(2) + "\n");
  m.write();
  std::cout << json{{"manifest", (out / "manifest.json").generic_string()}, {"candidates", n}}.dump() << "\n";
  return 0;
}

inline int build_baseline(const Context& ctx, Command& c) {
  auto& s = c.settings;
  s.finalize(ctx);
  fs::path out = ctx.resolve(s.get<std::string>("out"));
  Manifest m("build-baseline-pool", out);
  s.record_config(m);
  auto [lp, L] = load(ctx, s.get<std::string>("layout"), &m);
  const std::string method_name = s.get<std::string>("method");
  PoolMethod method;
  if (method_name == "fcp")
    method = PoolMethod::FCP;
  else if (method_name == "mep")
    method = PoolMethod::MEP;
  else
    throw Error(Errc::InvalidArgument, "--method must be fcp or mep");
  ShapingSchedule shaping = load_shaping(ctx, s.get<std::string>("shaping"), *L, 1, m);
  auto pop = build_baseline_pool(method, L, s.get<int>("n"), s.train, shaping);
  json members = json::array();
  for (const auto& mem : pop.members) {
    auto ck = checkpoint_from_model(*mem.policy, mem.id, L->name);
    ck.meta = {{"method", method_name}, {"run", mem.run}, {"stage", mem.stage}};
    m.output(mem.id + ".ckpt", serialize_checkpoint(ck));
    members.push_back({{"id", mem.id}, {"checkpoint", mem.id + ".ckpt"}, {"run", mem.run}, {"stage", mem.stage}});
  }
  for (std::size_t r = 0; r < pop.curves.size(); ++r)
    m.output(method_name + "-" + std::to_string(r) + ".curves.tsv", format_curves(pop.curves[r]));
  m.output("members.json", json{{"layout", L->name}, {"method", method_name}, {"members", members}}.dump(2) + "\n");
  m.write();
  std::cout << json{{"manifest", (out / "manifest.json").generic_string()}, {"members", members.size()}}.dump() << "\n";
  return 0;
}

inline int filter_pool(const Context& ctx, Command& c) {
  auto& s = c.settings;
  s.finalize(ctx);
  fs::path out = ctx.resolve(s.get<std::string>("out"));
  Manifest m("filter-pool", out);
  s.record_config(m);
  fs::path cand_file = ctx.resolve(s.get<std::string>("candidates"));
  m.input(cand_file);
  json cj = json::parse(slurp(cand_file));
  std::vector<PoolMember> biased;
  for (const auto& e : cj.at("members")) {
    PoolMember pm;
    pm.id = e.at("id").get<std::string>();
    pm.provenance = Provenance::Biased;
    fs::path ck = cand_file.parent_path() / e.at("checkpoint").get<std::string>();
    m.input(ck);
    pm.checkpoint = rel(ck, out);
    pm.weight_seed = e.at("weight_seed").get<std::uint64_t>();
    pm.ec = e.at("ec").get<std::vector<double>>();
    biased.push_back(std::move(pm));
  }
  if (biased.empty()) throw Error(Errc::EmptyCandidateSet, "no candidates in " + cand_file.string());
  const auto k = static_cast<std::size_t>(s.get<int>("k"));
  const std::uint64_t seed = s.train.seed;
  PoolSpec spec;
  if (const auto mep_arg = s.get<std::string>("mep"); !mep_arg.empty()) {
    fs::path mep_file = ctx.resolve(mep_arg);
    m.input(mep_file);
    json mj = json::parse(slurp(mep_file));
    std::vector<PoolMember> mep;
    for (const char* stage : {"final", "middle", "init"})
      for (const auto& e : mj.at("members")) {
        if (e.at("stage").get<std::string>() != stage) continue;
        PoolMember pm;
        pm.id = e.at("id").get<std::string>();
        pm.provenance = Provenance::MEPCheckpoint;
        fs::path ck = mep_file.parent_path() / e.at("checkpoint").get<std::string>();
        m.input(ck);
        pm.checkpoint = rel(ck, out);
        mep.push_back(std::move(pm));
      }
    spec = assemble_hsp_pool(biased, mep, k, seed);
  } else {
    std::vector<std::vector<double>> ecs;
    for (const auto& b : biased) ecs.push_back(b.ec);
    spec.target_size = k;
    spec.seed = seed;
    spec.start_index = Rng(seed).uniform(biased.size());
    for (std::size_t i : greedy_select(ecs, k, spec.start_index)) spec.members.push_back(biased[i]);
  }
  spec.layout = cj.at("layout").get<std::string>();
  m.output("pool.json", to_json(spec).dump(2) + "\n");
  json ids = json::array();
  for (const auto& mem : spec.members) ids.push_back(mem.id);
  m.extra() = {{"ids", ids}, {"start_index", spec.start_index}};
  m.write();
  std::cout << json{{"manifest", (out / "manifest.json").generic_string()}, {"ids", ids}}.dump() << "\n";
  return 0;
}

inline int train_adaptive_cmd(const Context& ctx, Command& c) {
  auto& s = c.settings;
  s.finalize(ctx);
  fs::path out = ctx.resolve(s.get<std::string>("out"));
  Manifest m("train-adaptive", out);
  s.record_config(m);
  auto [lp, L] = load(ctx, s.get<std::string>("layout"), &m);
  auto pool = load_pool_policies(ctx.resolve(s.get<std::string>("pool")), m);
  ShapingSchedule shaping = load_shaping(ctx, s.get<std::string>("shaping"), *L, 2, m);
  Arch arch = arch_from_name(s.get<std::string>("arch"));
  auto run = train_adaptive(pool, L, s.train, shaping, arch);
  const std::string id = s.get<std::string>("id");
  auto ck = checkpoint_from_model(*run.policy, id, L->name);
  json partners = json::array();
  for (const auto& p : pool) partners.push_back(p.id);
  ck.meta = {{"pool", partners}, {"train_seed", s.train.seed}};
  m.output(id + ".ckpt", serialize_checkpoint(ck));
  m.output(id + ".curves.tsv", format_curves(run.curves));
  m.extra() = {{"partners", partners}, {"partner_episodes", run.partner_episodes}, {"steps", run.steps}};
  m.write();
  std::cout << json{{"manifest", (out / "manifest.json").generic_string()}, {"checkpoint", (out / (id + ".ckpt")).generic_string()}}.dump()
            << "\n";
  return 0;
}

inline BoldMode bold_from_name(const std::string& s) {
  if (s == "none") return BoldMode::None;
  if (s == "threshold") return BoldMode::Threshold;
  if (s == "stddev") return BoldMode::StdDevs;
  throw Error(Errc::InvalidArgument, "--bold must be none, threshold or stddev");
}

inline int eval_cmd(const Context& ctx, Command& c) {
  auto& s = c.settings;
  s.finalize(ctx);
  const std::string out_arg = s.get<std::string>("out");
  fs::path out = out_arg.empty() ? fs::path() : ctx.resolve(out_arg);
  Manifest m("eval", out);
  s.record_config(m);
  auto [lp, L] = load(ctx, s.get<std::string>("layout"), &m);
  std::vector<int> positions;
  const std::string seats = s.get<std::string>("seats");
  if (seats == "both")
    positions = {1, 2};
  else if (seats == "1" || seats == "2")
    positions = {std::stoi(seats)};
  else
    throw Error(Errc::InvalidArgument, "--seats must be 1, 2 or both");
  std::vector<PolicyHandle> policies, partners;
  for (const auto& spec : split(s.get<std::string>("policy"), ',')) policies.push_back(ctx.policy(trim(spec)));
  for (const auto& spec : split(s.get<std::string>("partner"), ',')) partners.push_back(ctx.policy(trim(spec)));
  if (policies.empty() || partners.empty()) throw Error(Errc::InvalidArgument, "--policy and --partner are required");
  const int episodes = s.get<int>("episodes");
  std::vector<MatchupResult> results;
  json rj = json::array();
  for (const auto& pol : policies)
    for (const auto& part : partners)
      for (int pos : positions) {
        results.push_back(crossplay(pol, part, L, pos, episodes, s.train.seed, s.train.workers));
        rj.push_back(to_json(results.back()));
      }
  auto table = MatchupTable::from_results(results);
  const std::string text = table.render(bold_from_name(s.get<std::string>("bold")), s.get<double>("bold_k"));
  std::cout << text;
  if (!out.empty()) {
    m.output("table.tsv", text);
    m.output("summary.json", json{{"layout", L->name}, {"episodes", episodes}, {"results", rj}}.dump(2) + "\n");
    m.write();
  }
  return 0;
}

inline std::atomic<bool> g_stop{false};

inline int serve_cmd(const Context& ctx, Command& c) {
  auto& s = c.settings;
  s.finalize(ctx);
  auto [lp, L] = load(ctx, s.get<std::string>("layout"), nullptr);
  std::vector<PolicyHandle> roster;
  for (const auto& spec : split(s.get<std::string>("roster"), ',')) roster.push_back(ctx.policy(trim(spec)));
  ServerConfig sc;
  sc.bind = s.get<std::string>("bind");
  sc.port = s.get<int>("port");
  sc.host.layout = L;
  sc.host.roster = roster;
  sc.host.seed = s.train.seed;
  sc.host.tick.human_input_ms = s.get<int>("tick_ms");
  sc.host.tick.ai_idle_steps = s.get<int>("idle_steps");
  sc.host.store = std::make_shared<SessionStore>(ctx.resolve(s.get<std::string>("store")));
  // Validates the roster before the port opens.
  Session probe(SessionConfig{"probe", "probe", L, roster, 0, sc.host.tick});
  PlayServer server(sc);
  int port = server.start();
  std::cout << json{{"listening", port}, {"layout", L->name}}.dump() << std::endl;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  const double duration = s.get<double>("duration");
  auto t0 = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (duration > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= duration) break;
  }
  server.stop();
  return 0;
}

inline int replay_cmd(const Context& ctx, Command& c, const std::string& file) {
  auto& s = c.settings;
  s.finalize(ctx);
  fs::path p = ctx.resolve(file);
  const std::string text = slurp(p);
  Trajectory t = parse_trajectory(text);
  const std::string layout_arg = s.get<std::string>("layout");
  auto [lp, L] = load(ctx, layout_arg.empty() ? t.layout_name : layout_arg, nullptr);
  const std::string again = format_trajectory(resimulate(t, *L));
  const bool same = again == text;
  json r{{"file", p.generic_string()},
         {"hash", content_hash(text)},
         {"replay_hash", content_hash(again)},
         {"identical", same},
         {"score", t.score}};
  std::cout << r.dump() << "\n";
  if (!same) {
    std::cerr << json{{"error", "ReplayMismatch"}, {"message", "re-simulation differs from " + p.generic_string()}}.dump()
              << "\n";
    return 1;
  }
  return 0;
}

inline int record_cmd(const Context& ctx, Command& c) {
  auto& s = c.settings;
  s.finalize(ctx);
  auto [lp, L] = load(ctx, s.get<std::string>("layout"), nullptr);
  auto a = ctx.policy(s.get<std::string>("policy"));
  auto b = ctx.policy(s.get<std::string>("partner"));
  TrajectoryRecorder rec(*L, s.train.seed);
  run_episode(L, a, b, s.train.seed, &rec);
  const std::string text = format_trajectory(rec.trajectory());
  fs::path out = ctx.resolve(s.get<std::string>("out"));
  write_text(out, text);
  std::cout << json{{"file", out.generic_string()}, {"hash", content_hash(text)}, {"score", rec.trajectory().score}}.dump()
            << "\n";
  return 0;
}

inline void error_record(const std::string& code, const std::string& msg) {
  std::cerr << json{{"error", code}, {"message", msg}}.dump() << std::endl;
}

inline int run(int argc, char** argv) {
  CLI::App app{"Hidden-utility self-play toolkit"};
  app.require_subcommand(1);
  Context ctx;
  std::string workspace = ".";
  app.add_option("--workspace", workspace, "directory that relative paths resolve against");

  std::map<std::string, Command> cmds;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    Command& c = cmds[name];
    c.app = app.add_subcommand(name, help);
    if (name != "replay" && name != "serve" && name != "record") c.settings.declare_train(c.app);
    return c;
  };
  auto seed_only = [](Command& c) {
    c.settings.declare_train(c.app);
  };

  {
    auto& c = add("train-biased", "train biased policy candidates with random hidden rewards");
    c.settings.declare(c.app, "layout", "", "layout name or file");
    c.settings.declare(c.app, "n", 8, "number of candidates");
    c.settings.declare(c.app, "grid", "", "weight grid file (default: shipped grid for the layout)");
    c.settings.declare(c.app, "shaping", "", "partner shaping schedule, or 'none'");
    c.settings.declare(c.app, "ec_episodes", 20, "episodes for expected event counts");
    c.settings.declare(c.app, "out", "biased", "output directory");
    c.run = [&](Command& c) { return train_biased(ctx, c); };
  }
  {
    auto& c = add("build-baseline-pool", "train an FCP or MEP population");
    c.settings.declare(c.app, "layout", "", "layout name or file");
    c.settings.declare(c.app, "method", "mep", "fcp or mep");
    c.settings.declare(c.app, "n", 4, "number of runs");
    c.settings.declare(c.app, "shaping", "", "shaping schedule, or 'none'");
    c.settings.declare(c.app, "out", "population", "output directory");
    c.run = [&](Command& c) { return build_baseline(ctx, c); };
  }
  {
    auto& c = add("filter-pool", "select a diverse pool from biased candidates");
    c.settings.declare(c.app, "candidates", "biased/candidates.json", "candidates file from train-biased");
    c.settings.declare(c.app, "mep", "", "members.json of an MEP population to fill half the pool");
    c.settings.declare(c.app, "k", 4, "pool size");
    c.settings.declare(c.app, "out", "pool", "output directory");
    c.run = [&](Command& c) { return filter_pool(ctx, c); };
  }
  {
    auto& c = add("train-adaptive", "train the adaptive policy against a pool");
    c.settings.declare(c.app, "layout", "", "layout name or file");
    c.settings.declare(c.app, "pool", "pool/pool.json", "pool or population file");
    c.settings.declare(c.app, "shaping", "", "shaping schedule, or 'none'");
    c.settings.declare(c.app, "arch", "gru", "gru or mlp");
    c.settings.declare(c.app, "id", "adaptive", "checkpoint id");
    c.settings.declare(c.app, "out", "adaptive", "output directory");
    c.run = [&](Command& c) { return train_adaptive_cmd(ctx, c); };
  }
  {
    auto& c = add("eval", "cross-play evaluation");
    c.settings.declare(c.app, "layout", "", "layout name or file");
    c.settings.declare(c.app, "policy", "", "comma-separated policies (checkpoint, script:<name>, noop, random)");
    c.settings.declare(c.app, "partner", "", "comma-separated partners");
    c.settings.declare(c.app, "episodes", 20, "episodes per matchup");
    c.settings.declare(c.app, "seats", "both", "1, 2 or both");
    c.settings.declare(c.app, "bold", "threshold", "none, threshold or stddev");
    c.settings.declare(c.app, "bold_k", 5.0, "bolding margin");
    c.settings.declare(c.app, "out", "", "directory for table.tsv, summary.json and manifest");
    c.run = [&](Command& c) { return eval_cmd(ctx, c); };
  }
  {
    auto& c = add("serve", "host human study sessions over WebSocket");
    seed_only(c);
    c.settings.declare(c.app, "layout", "", "layout name or file");
    c.settings.declare(c.app, "roster", "", "four comma-separated agent specs");
    c.settings.declare(c.app, "bind", "127.0.0.1", "bind address");
    c.settings.declare(c.app, "port", 8765, "port (0 picks a free one)");
    c.settings.declare(c.app, "store", "sessions", "session store directory");
    c.settings.declare(c.app, "tick_ms", 150, "tick period in milliseconds");
    c.settings.declare(c.app, "idle_steps", 7, "idle ticks before each AI step");
    c.settings.declare(c.app, "duration", 0.0, "stop after this many seconds (0: run until interrupted)");
    c.run = [&](Command& c) { return serve_cmd(ctx, c); };
  }
  std::string replay_file;
  {
    auto& c = add("replay", "re-simulate a trajectory log and byte-compare it");
    seed_only(c);
    c.app->add_option("trajectory", replay_file, "trajectory file")->required();
    c.settings.declare(c.app, "layout", "", "layout (default: the one named in the log)");
    c.run = [&](Command& c) { return replay_cmd(ctx, c, replay_file); };
  }
  {
    auto& c = add("record", "play one episode and write its trajectory log");
    seed_only(c);
    c.settings.declare(c.app, "layout", "", "layout name or file");
    c.settings.declare(c.app, "policy", "script:onion_placement_and_delivery", "seat 1 agent");
    c.settings.declare(c.app, "partner", "random", "seat 2 agent");
    c.settings.declare(c.app, "out", "episode.traj", "output file");
    c.run = [&](Command& c) { return record_cmd(ctx, c); };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_record("UsageError", e.what());
    return 2;
  }
  ctx.workspace = workspace;
  try {
    for (auto& [name, c] : cmds)
      if (c.app->parsed()) return c.run(c);
  } catch (const Error& e) {
    error_record(std::string(errc_name(e.code())), e.what());
    return 1;
  } catch (const json::exception& e) {
    error_record("ParseError", e.what());
    return 1;
  } catch (const std::exception& e) {
    error_record("Internal", e.what());
    return 3;
  }
  return 2;
}

}  // namespace hsp::cli
