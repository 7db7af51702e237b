#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hsp/nn.hpp"
#include "hsp/observation.hpp"
#include "hsp/policy.hpp"

namespace hsp {

enum class Arch { Mlp, Gru };

inline std::string_view arch_name(Arch a) { return a == Arch::Mlp ? "mlp" : "gru"; }

inline Arch arch_from_name(std::string_view s) {
  if (s == "mlp") return Arch::Mlp;
  if (s == "gru") return Arch::Gru;
  throw Error(Errc::ParseError, "unknown architecture '" + std::string(s) + "'");
}

// Actor network description plus its parameters. Immutable once published
// to rollout workers.
struct ActorModel {
  Arch arch = Arch::Mlp;
  int obs_size = 0;
  int hidden = 64;
  std::vector<float> params;
  nn::Mlp mlp;
  nn::GruNet gru;

  ActorModel() = default;
  ActorModel(Arch a, int obs, int h) : arch(a), obs_size(obs), hidden(h) { build(); }

  void build() {
    if (arch == Arch::Mlp)
      mlp.build(obs_size, hidden, kNumActions);
    else
      gru.build(obs_size, hidden, kNumActions);
  }
  std::size_t num_params() const { return arch == Arch::Mlp ? mlp.num_params() : gru.num_params(); }

  void init(Rng& rng) {
    if (arch == Arch::Mlp)
      mlp.init(params, 0.01, rng);
    else
      gru.init(params, 0.01, rng);
  }
};

inline void observe_sparse(const GameState& s, int player, std::vector<float>& dense, nn::SparseInput& out) {
  dense.resize(static_cast<std::size_t>(observation_size(*s.layout)));
  observe_into(s, player, dense);
  out.clear();
  for (std::size_t i = 0; i < dense.size(); ++i)
    if (dense[i] != 0.0f) out.push(static_cast<std::uint32_t>(i), dense[i]);
}

// Runs an actor step by step, keeping the recurrent state for GRU models.
class ActorRunner {
 public:
  explicit ActorRunner(std::shared_ptr<const ActorModel> m) : m_(std::move(m)) { reset(); }

  void reset() { h_.assign(static_cast<std::size_t>(m_->hidden), 0.0f); }

  // Log-probabilities of the six actions for this observation; advances the
  // recurrent state.
  void log_probs(const nn::SparseInput& x, double* out) {
    const float* logits = nullptr;
    if (m_->arch == Arch::Mlp) {
      m_->mlp.forward(m_->params.data(), x, mc_);
      logits = mc_.out.data();
    } else {
      m_->gru.step(m_->params.data(), x, h_.data(), gc_);
      h_ = gc_.h;
      logits = gc_.out.data();
    }
    nn::log_softmax(logits, kNumActions, out);
  }

  const std::vector<float>& hidden_state() const { return h_; }

 private:
  std::shared_ptr<const ActorModel> m_;
  std::vector<float> h_;
  nn::Mlp::Cache mc_;
  nn::GruNet::StepCache gc_;
};

inline int sample_action(const double* logp, Rng& rng) {
  double p[kNumActions];
  for (int i = 0; i < kNumActions; ++i) p[i] = std::exp(logp[i]);
  return static_cast<int>(rng.categorical(p));
}

class ParametricAgent : public Agent {
 public:
  ParametricAgent(std::shared_ptr<const ActorModel> m, bool greedy) : runner_(m), greedy_(greedy) {}

  void begin(int seat, std::uint64_t seed) override {
    seat_ = seat;
    rng_ = Rng(seed);
    runner_.reset();
  }

  Action act(const GameState& s) override {
    observe_sparse(s, seat_, dense_, x_);
    double logp[kNumActions];
    runner_.log_probs(x_, logp);
    if (greedy_) return static_cast<Action>(std::max_element(logp, logp + kNumActions) - logp);
    return static_cast<Action>(sample_action(logp, rng_));
  }

 private:
  ActorRunner runner_;
  bool greedy_;
  int seat_ = 0;
  Rng rng_;
  std::vector<float> dense_;
  nn::SparseInput x_;
};

inline PolicyHandle parametric_policy(std::string id, std::shared_ptr<const ActorModel> m, bool greedy = false) {
  return {PolicyKind::Parametric, std::move(id),
          [m, greedy] { return std::make_unique<ParametricAgent>(m, greedy); }};
}

// Checkpoint file: "HSPCKPT1", u32 version, u64 metadata length, metadata
// JSON, u64 parameter count, float32 parameters (little-endian host order).
struct Checkpoint {
  std::string id;
  std::string layout;
  Arch arch = Arch::Mlp;
  int obs_size = 0;
  int hidden = 64;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<float> params;

  std::uint64_t param_hash() const { return nn::hash_params(params); }
};

inline constexpr char kCheckpointMagic[8] = {'H', 'S', 'P', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string serialize_checkpoint(const Checkpoint& c) {
  nlohmann::json j = c.meta;
  j["id"] = c.id;
  j["layout"] = c.layout;
  j["arch"] = std::string(arch_name(c.arch));
  j["obs_size"] = c.obs_size;
  j["hidden"] = c.hidden;
  j["param_hash"] = hex64(c.param_hash());
  std::string meta = j.dump();
  std::string out(kCheckpointMagic, 8);
  auto put = [&](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
  std::uint32_t ver = kCheckpointVersion;
  std::uint64_t mlen = meta.size(), n = c.params.size();
  put(&ver, 4);
  put(&mlen, 8);
  out += meta;
  put(&n, 8);
  put(c.params.data(), n * sizeof(float));
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view data) {
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (pos + n > data.size()) throw Error(Errc::ParseError, "checkpoint truncated");
    std::memcpy(dst, data.data() + pos, n);
    pos += n;
  };
  char magic[8];
  take(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw Error(Errc::ParseError, "not a checkpoint (bad magic)");
  std::uint32_t ver = 0;
  take(&ver, 4);
  if (ver != kCheckpointVersion) throw Error(Errc::ParseError, "unsupported checkpoint version " + std::to_string(ver));
  std::uint64_t mlen = 0;
  take(&mlen, 8);
  if (pos + mlen > data.size()) throw Error(Errc::ParseError, "checkpoint truncated");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(data.substr(pos, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("checkpoint metadata: ") + e.what());
  }
  pos += mlen;
  std::uint64_t n = 0;
  take(&n, 8);
  Checkpoint c;
  c.params.resize(n);
  take(c.params.data(), n * sizeof(float));
  if (pos != data.size()) throw Error(Errc::ParseError, "trailing bytes after checkpoint");
  try {
    c.id = j.at("id").get<std::string>();
    c.layout = j.at("layout").get<std::string>();
    c.arch = arch_from_name(j.at("arch").get<std::string>());
    c.obs_size = j.at("obs_size").get<int>();
    c.hidden = j.at("hidden").get<int>();
    if (j.at("param_hash").get<std::string>() != hex64(c.param_hash()))
      throw Error(Errc::ParseError, "checkpoint parameter hash mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("checkpoint metadata: ") + e.what());
  }
  for (const char* k : {"id", "layout", "arch", "obs_size", "hidden", "param_hash"}) j.erase(k);
  c.meta = j;
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, "cannot write " + path.string());
  std::string data = serialize_checkpoint(c);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, "cannot read " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(data);
}

inline std::shared_ptr<const ActorModel> model_from_checkpoint(const Checkpoint& c) {
  auto m = std::make_shared<ActorModel>(c.arch, c.obs_size, c.hidden);
  if (m->num_params() != c.params.size())
    throw Error(Errc::ParseError, "checkpoint has " + std::to_string(c.params.size()) + " parameters, architecture needs " +
                                      std::to_string(m->num_params()));
  m->params = c.params;
  return m;
}

inline Checkpoint checkpoint_from_model(const ActorModel& m, std::string id, std::string layout) {
  Checkpoint c;
  c.id = std::move(id);
  c.layout = std::move(layout);
  c.arch = m.arch;
  c.obs_size = m.obs_size;
  c.hidden = m.hidden;
  c.params = m.params;
  return c;
}

inline PolicyHandle policy_from_checkpoint(const Checkpoint& c) { return parametric_policy(c.id, model_from_checkpoint(c)); }

}  // namespace hsp
