#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "hsp/engine.hpp"
#include "hsp/trajectory.hpp"

namespace hsp {

enum class PolicyKind { Scripted, Tabular, Parametric };

inline std::string_view policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::Scripted: return "scripted";
    case PolicyKind::Tabular: return "tabular";
    case PolicyKind::Parametric: return "parametric";
  }
  return "?";
}

// One seat's controller for one episode. begin() must fully reset internal
// state, so act() is a deterministic function of (seat, seed, states seen).
class Agent {
 public:
  virtual ~Agent() = default;
  virtual void begin(int seat, std::uint64_t seed) = 0;
  virtual Action act(const GameState& s) = 0;
};

// A playable policy. Handles are cheap to copy and safe to share between
// workers; each worker creates its own Agent.
struct PolicyHandle {
  PolicyKind kind = PolicyKind::Scripted;
  std::string id;
  std::function<std::unique_ptr<Agent>()> make;

  std::unique_ptr<Agent> make_agent() const {
    if (!make) throw Error(Errc::InvalidArgument, "policy '" + id + "' has no agent factory");
    return make();
  }
};

class FixedActionAgent : public Agent {
 public:
  explicit FixedActionAgent(Action a) : a_(a) {}
  void begin(int, std::uint64_t) override {}
  Action act(const GameState&) override { return a_; }

 private:
  Action a_;
};

class RandomAgent : public Agent {
 public:
  void begin(int, std::uint64_t seed) override { rng_ = Rng(seed); }
  Action act(const GameState&) override { return static_cast<Action>(rng_.uniform(kNumActions)); }

 private:
  Rng rng_;
};

inline PolicyHandle noop_policy() {
  return {PolicyKind::Scripted, "noop", [] { return std::make_unique<FixedActionAgent>(Action::NoOp); }};
}

inline PolicyHandle random_policy() {
  return {PolicyKind::Scripted, "random", [] { return std::make_unique<RandomAgent>(); }};
}

// Hash of everything that determines the future of a state (except layout).
inline std::uint64_t state_key(const GameState& s) {
  Fnv1a h;
  auto put = [&](auto v) { h.update(&v, sizeof(v)); };
  for (const auto& p : s.players) {
    put(p.pos.x);
    put(p.pos.y);
    put(static_cast<int>(p.facing));
    put(static_cast<int>(p.held.kind));
    put(p.held.soup.onions);
    put(p.held.soup.tomatoes);
  }
  for (std::size_t i = 0; i < s.counters.size(); ++i)
    if (!s.counters[i].empty()) {
      put(i);
      put(static_cast<int>(s.counters[i].kind));
      put(s.counters[i].soup.onions);
      put(s.counters[i].soup.tomatoes);
    }
  for (const auto& pot : s.pots) {
    put(pot.contents.onions);
    put(pot.contents.tomatoes);
    put(pot.cook_remaining);
  }
  put(s.tick);
  return h.digest();
}

using ActionDist = std::array<double, kNumActions>;

// Explicit state -> action distribution table, keyed by (seat, state_key).
// Unlisted states fall back to `fallback`.
struct TabularTable {
  std::unordered_map<std::uint64_t, ActionDist> table;
  ActionDist fallback{1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};

  static std::uint64_t key(int seat, const GameState& s) { return derive_seed(state_key(s), static_cast<std::uint64_t>(seat)); }
  const ActionDist& at(int seat, const GameState& s) const {
    auto it = table.find(key(seat, s));
    return it == table.end() ? fallback : it->second;
  }
};

class TabularAgent : public Agent {
 public:
  explicit TabularAgent(std::shared_ptr<const TabularTable> t) : t_(std::move(t)) {}
  void begin(int seat, std::uint64_t seed) override {
    seat_ = seat;
    rng_ = Rng(seed);
  }
  Action act(const GameState& s) override { return static_cast<Action>(rng_.categorical(t_->at(seat_, s))); }

 private:
  std::shared_ptr<const TabularTable> t_;
  int seat_ = 0;
  Rng rng_;
};

inline PolicyHandle tabular_policy(std::string id, std::shared_ptr<const TabularTable> t) {
  return {PolicyKind::Tabular, std::move(id), [t] { return std::make_unique<TabularAgent>(t); }};
}

struct EpisodeResult {
  double score = 0.0;
  EventVector events;
  std::array<EventVector, 2> player_events;
};

// Seeds handed to the agents of an episode; fixed so that seat swaps and
// replays see the same streams.
inline std::uint64_t agent_seed(std::uint64_t episode_seed, int seat) {
  return derive_seed(episode_seed, 0x5eed0000ULL + static_cast<std::uint64_t>(seat));
}

inline EpisodeResult run_episode(std::shared_ptr<const Layout> L, Agent& a0, Agent& a1, std::uint64_t seed,
                                 TrajectoryRecorder* rec = nullptr) {
  GameState s = reset(std::move(L), seed);
  a0.begin(0, agent_seed(seed, 0));
  a1.begin(1, agent_seed(seed, 1));
  EpisodeResult r;
  StepInfo info;
  std::vector<EventRecord> evs;
  while (!s.done()) {
    Action x = a0.act(s);
    Action y = a1.act(s);
    int tick = s.tick;
    evs.clear();
    step_inplace(s, x, y, info, rec ? &evs : nullptr);
    r.events += info.events;
    r.player_events[0] += info.player_events[0];
    r.player_events[1] += info.player_events[1];
    if (rec) rec->record(tick, x, y, info.task_reward, evs);
  }
  r.score = s.cumulative_reward;
  return r;
}

inline EpisodeResult run_episode(std::shared_ptr<const Layout> L, const PolicyHandle& p0, const PolicyHandle& p1,
                                 std::uint64_t seed, TrajectoryRecorder* rec = nullptr) {
  auto a0 = p0.make_agent();
  auto a1 = p1.make_agent();
  return run_episode(std::move(L), *a0, *a1, seed, rec);
}

// Mean episode-summed events of a policy pair. `joint` sums both seats;
// `own` is the share attributed to the measured policy.
struct EventCount {
  std::vector<double> joint;
  std::vector<double> own;
  std::string policy_id;
  std::string partner_id;
  int episodes = 0;
  double mean_score = 0.0;
};

inline std::vector<double> to_doubles(const EventVector& ev, std::size_t dim) {
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = ev[i];
  return out;
}

// Rolls out `episodes` seeded episodes with `policy` in `seat`. Episode e
// uses seed derive_seed(seed, e), so results are independent of `workers`.
inline EventCount measure_events(std::shared_ptr<const Layout> L, const PolicyHandle& policy,
                                 const PolicyHandle& partner, int episodes, std::uint64_t seed, int seat = 0,
                                 int workers = 1) {
  if (episodes < 1) throw Error(Errc::InvalidArgument, "episodes must be >= 1");
  std::vector<EpisodeResult> results(static_cast<std::size_t>(episodes));
  parallel_for(results.size(), resolve_workers(workers), [&](std::size_t e) {
    auto me = policy.make_agent();
    auto other = partner.make_agent();
    std::uint64_t es = derive_seed(seed, e);
    results[e] = seat == 0 ? run_episode(L, *me, *other, es) : run_episode(L, *other, *me, es);
  });
  const std::size_t dim = event_dim(*L);
  EventCount ec;
  ec.joint.assign(dim, 0.0);
  ec.own.assign(dim, 0.0);
  for (const auto& r : results) {
    for (std::size_t k = 0; k < dim; ++k) {
      ec.joint[k] += r.events[k];
      ec.own[k] += r.player_events[static_cast<std::size_t>(seat)][k];
    }
    ec.mean_score += r.score;
  }
  const double n = episodes;
  for (std::size_t k = 0; k < dim; ++k) {
    ec.joint[k] /= n;
    ec.own[k] /= n;
  }
  ec.mean_score /= n;
  ec.policy_id = policy.id;
  ec.partner_id = partner.id;
  ec.episodes = episodes;
  return ec;
}

}  // namespace hsp
