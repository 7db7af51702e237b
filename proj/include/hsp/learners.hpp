#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hsp/hidden_reward.hpp"
#include "hsp/parametric.hpp"
#include "hsp/ppo.hpp"
#include "hsp/rewards.hpp"

namespace hsp {

// One row per training iteration. shaped_return = env_return + factor *
// shaping_return; hidden_return is only meaningful for biased runs.
struct CurveRow {
  long long step = 0;
  double env_return = 0.0;
  double hidden_return = 0.0;
  double shaping_return = 0.0;
  double shaped_return = 0.0;
  double entropy = 0.0;
  double factor = 0.0;
};

inline std::string format_curves(const std::vector<CurveRow>& rows) {
  std::ostringstream os;
  os << "step\tenv_return\thidden_return\tshaping_return\tshaped_return\tentropy\tfactor\n";
  for (const auto& r : rows)
    os << r.step << '\t' << format_number(r.env_return) << '\t' << format_number(r.hidden_return) << '\t'
       << format_number(r.shaping_return) << '\t' << format_number(r.shaped_return) << '\t'
       << format_number(r.entropy) << '\t' << format_number(r.factor) << '\n';
  return os.str();
}

inline std::vector<CurveRow> parse_curves(std::string_view text) {
  std::vector<CurveRow> rows;
  auto lines = split(text, '\n');
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto f = split(lines[i], '\t');
    if (f.size() != 7) throw Error(Errc::ParseError, "curve line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) + " fields");
    rows.push_back({std::stoll(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                    std::stod(f[5]), std::stod(f[6])});
  }
  return rows;
}

struct Sample {
  nn::SparseInput x;
  int action = 0;
  float logp = 0.0f;
  float value = 0.0f;
  double reward = 0.0;  // training reward before scaling
  double adv = 0.0;
  double ret = 0.0;
};
using EpisodeSamples = std::vector<Sample>;

// Actor-critic pair with its optimizers. The critic is always an MLP; it
// may receive a one-hot partner identity appended after the observation.
class Learner {
 public:
  std::shared_ptr<ActorModel> actor;
  nn::Mlp critic;
  std::vector<float> critic_params;
  int obs_size = 0;
  int critic_extra = 0;
  nn::Adam actor_opt, critic_opt;
  ReturnScaler scaler;

  Learner(Arch arch, int obs, int extra, const TrainConfig& cfg, std::uint64_t seed)
      : obs_size(obs), critic_extra(extra) {
    actor = std::make_shared<ActorModel>(arch, obs, cfg.hidden);
    Rng rng(derive_seed(seed, 0xac7012));
    actor->init(rng);
    critic.build(obs + extra, cfg.hidden, 1);
    Rng crng(derive_seed(seed, 0xc217c));
    critic.init(critic_params, 1.0, crng);
    actor_opt = nn::Adam(actor->num_params(), cfg.lr, cfg.adam_eps);
    critic_opt = nn::Adam(critic.num_params(), cfg.lr, cfg.adam_eps);
  }

  std::shared_ptr<const ActorModel> snapshot() const { return std::make_shared<const ActorModel>(*actor); }

  void critic_input(const nn::SparseInput& x, int partner, nn::SparseInput& out) const {
    out = x;
    if (partner >= 0 && partner < critic_extra) out.push(static_cast<std::uint32_t>(obs_size + partner), 1.0f);
  }

  float value(const nn::SparseInput& x, int partner, nn::Mlp::Cache& c, nn::SparseInput& tmp) const {
    critic_input(x, partner, tmp);
    critic.forward(critic_params.data(), tmp, c);
    return c.out[0];
  }
};

namespace detail {

// Controller for one seat of a training episode.
struct SeatCtl {
  Learner* learner = nullptr;          // learning seat when set
  std::unique_ptr<Agent> agent;        // fixed seat otherwise
  int partner_id = -1;                 // critic one-hot
  const WeightVector* hidden = nullptr;  // train on hidden reward of own events
  const ShapingSchedule* shaping = nullptr;
  double factor = 0.0;
};

struct TrainEpisode {
  std::array<EpisodeSamples, 2> samples;
  double env_return = 0.0;
  std::array<double, 2> hidden_return{};
  std::array<double, 2> shaping_raw{};
  std::array<double, 2> entropy_sum{};
  std::array<EventVector, 2> events;
};

inline TrainEpisode run_training_episode(std::shared_ptr<const Layout> L, std::array<SeatCtl, 2>& seats,
                                         std::uint64_t seed) {
  TrainEpisode out;
  GameState s = reset(L, seed);
  std::array<std::unique_ptr<ActorRunner>, 2> runners;
  std::array<Rng, 2> rngs{Rng(agent_seed(seed, 0)), Rng(agent_seed(seed, 1))};
  for (int p = 0; p < 2; ++p) {
    auto& sc = seats[static_cast<std::size_t>(p)];
    if (sc.learner)
      runners[static_cast<std::size_t>(p)] = std::make_unique<ActorRunner>(sc.learner->actor);
    else
      sc.agent->begin(p, agent_seed(seed, p));
  }
  std::vector<float> dense;
  nn::SparseInput tmp;
  nn::Mlp::Cache cc;
  StepInfo info;
  while (!s.done()) {
    std::array<Action, 2> acts{};
    for (int p = 0; p < 2; ++p) {
      auto& sc = seats[static_cast<std::size_t>(p)];
      if (!sc.learner) {
        acts[static_cast<std::size_t>(p)] = sc.agent->act(s);
        continue;
      }
      Sample smp;
      observe_sparse(s, p, dense, smp.x);
      double logp[kNumActions];
      runners[static_cast<std::size_t>(p)]->log_probs(smp.x, logp);
      smp.action = sample_action(logp, rngs[static_cast<std::size_t>(p)]);
      smp.logp = static_cast<float>(logp[smp.action]);
      smp.value = sc.learner->value(smp.x, sc.partner_id, cc, tmp);
      double H = 0.0;
      for (double lp : logp) H -= std::exp(lp) * lp;
      out.entropy_sum[static_cast<std::size_t>(p)] += H;
      acts[static_cast<std::size_t>(p)] = static_cast<Action>(smp.action);
      out.samples[static_cast<std::size_t>(p)].push_back(std::move(smp));
    }
    step_inplace(s, acts[0], acts[1], info);
    out.env_return += info.task_reward;
    for (int p = 0; p < 2; ++p) {
      auto& sc = seats[static_cast<std::size_t>(p)];
      const EventVector& own = info.player_events[static_cast<std::size_t>(p)];
      out.events[static_cast<std::size_t>(p)] += own;
      double hid = sc.hidden ? hidden_reward(own, info.task_reward, *sc.hidden) : 0.0;
      double sh = sc.shaping ? shaping_raw(own, *sc.shaping) : 0.0;
      out.hidden_return[static_cast<std::size_t>(p)] += hid;
      out.shaping_raw[static_cast<std::size_t>(p)] += sh;
      if (sc.learner) {
        double r = (sc.hidden ? hid : info.task_reward) + sc.factor * sh;
        out.samples[static_cast<std::size_t>(p)].back().reward = r;
      }
    }
  }
  return out;
}

struct GradBuffers {
  std::vector<float> actor, critic;
  double entropy = 0.0, policy_loss = 0.0, value_loss = 0.0;
  int clipped = 0;
};

inline void mlp_sample_grad(const Learner& lr, const Sample& smp, int partner, const TrainConfig& cfg,
                            GradBuffers& g, nn::Mlp::Cache& ac, nn::Mlp::Cache& cc, nn::SparseInput& tmp) {
  const ActorModel& m = *lr.actor;
  m.mlp.forward(m.params.data(), smp.x, ac);
  float dlogits[kNumActions];
  PolicyGradStats st = ppo_policy_grad(ac.out.data(), kNumActions, smp.action, smp.logp, smp.adv, cfg.clip,
                                       cfg.entropy_coef, dlogits);
  m.mlp.backward(m.params.data(), smp.x, ac, dlogits, g.actor.data());
  g.entropy += st.entropy;
  g.policy_loss += st.loss;
  g.clipped += st.clipped;
  lr.critic_input(smp.x, partner, tmp);
  lr.critic.forward(lr.critic_params.data(), tmp, cc);
  float dv = static_cast<float>(huber_grad(cc.out[0], smp.ret, cfg.huber_delta));
  g.value_loss += huber_loss(cc.out[0], smp.ret, cfg.huber_delta);
  lr.critic.backward(lr.critic_params.data(), tmp, cc, &dv, g.critic.data());
}

inline void gru_episode_grad(const Learner& lr, const EpisodeSamples& ep, int partner, const TrainConfig& cfg,
                             GradBuffers& g) {
  const ActorModel& m = *lr.actor;
  const std::size_t T = ep.size();
  std::vector<nn::GruNet::StepCache> caches(T);
  std::vector<float> h(static_cast<std::size_t>(m.hidden), 0.0f);
  for (std::size_t t = 0; t < T; ++t) {
    m.gru.step(m.params.data(), ep[t].x, h.data(), caches[t]);
    h = caches[t].h;
  }
  std::vector<float> dh(static_cast<std::size_t>(m.hidden), 0.0f);
  nn::Mlp::Cache cc;
  nn::SparseInput tmp;
  for (std::size_t t = T; t-- > 0;) {
    const Sample& smp = ep[t];
    float dlogits[kNumActions];
    PolicyGradStats st = ppo_policy_grad(caches[t].out.data(), kNumActions, smp.action, smp.logp, smp.adv, cfg.clip,
                                         cfg.entropy_coef, dlogits);
    m.gru.step_backward(m.params.data(), smp.x, caches[t], dlogits, dh.data(), g.actor.data());
    g.entropy += st.entropy;
    g.policy_loss += st.loss;
    g.clipped += st.clipped;
    lr.critic_input(smp.x, partner, tmp);
    lr.critic.forward(lr.critic_params.data(), tmp, cc);
    float dv = static_cast<float>(huber_grad(cc.out[0], smp.ret, cfg.huber_delta));
    g.value_loss += huber_loss(cc.out[0], smp.ret, cfg.huber_delta);
    lr.critic.backward(lr.critic_params.data(), tmp, cc, &dv, g.critic.data());
  }
}

}  // namespace detail

struct UpdateStats {
  double entropy = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
};

// Fixed gradient chunk size; chunk gradients are summed in chunk order so
// results do not depend on the worker count.
inline constexpr std::size_t kGradChunk = 64;

// PPO update from a batch of episodes. `partners[i]` is the critic one-hot
// index of episode i (-1 for none).
inline UpdateStats ppo_update(Learner& lr, std::vector<EpisodeSamples*>& episodes, const std::vector<int>& partners,
                              const TrainConfig& cfg, Rng& rng) {
  const int workers = resolve_workers(cfg.workers);
  // Reward scaling by the running std of discounted returns.
  if (cfg.reward_normalization) {
    for (auto* ep : episodes) {
      double G = 0.0;
      for (const auto& smp : *ep) {
        G = cfg.gamma * G + smp.reward;
        lr.scaler.update(G);
      }
    }
  }
  const double scale = cfg.reward_normalization ? lr.scaler.scale() : 1.0;
  std::size_t n = 0;
  std::vector<double> rew, val, adv, ret;
  for (auto* ep : episodes) {
    rew.clear();
    val.clear();
    for (const auto& smp : *ep) {
      rew.push_back(smp.reward * scale);
      val.push_back(smp.value);
    }
    gae(rew, val, cfg.gamma, cfg.gae_lambda, adv, ret);
    for (std::size_t t = 0; t < ep->size(); ++t) {
      (*ep)[t].adv = adv[t];
      (*ep)[t].ret = ret[t];
    }
    n += ep->size();
  }
  UpdateStats stats;
  if (n == 0) return stats;
  double mean = 0.0, sq = 0.0;
  for (auto* ep : episodes)
    for (const auto& smp : *ep) mean += smp.adv;
  mean /= static_cast<double>(n);
  for (auto* ep : episodes)
    for (const auto& smp : *ep) sq += (smp.adv - mean) * (smp.adv - mean);
  const double sd = std::sqrt(sq / static_cast<double>(n)) + 1e-8;
  for (auto* ep : episodes)
    for (auto& smp : *ep) smp.adv = (smp.adv - mean) / sd;

  const bool recurrent = lr.actor->arch == Arch::Gru;
  const std::size_t na = lr.actor->num_params(), nc = lr.critic.num_params();
  std::vector<float> ga(na), gc(nc);
  double ent = 0.0, pl = 0.0, vl = 0.0, clipped = 0.0, counted = 0.0;

  // Work units: single samples (MLP) or whole episodes (GRU).
  struct Unit {
    std::size_t ep, t;
  };
  std::vector<Unit> units;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    if (recurrent)
      units.push_back({e, 0});
    else
      for (std::size_t t = 0; t < episodes[e]->size(); ++t) units.push_back({e, t});
  }
  const std::size_t mbs = static_cast<std::size_t>(cfg.minibatches);
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    std::vector<std::size_t> order(units.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform(i)]);
    for (std::size_t mb = 0; mb < mbs; ++mb) {
      std::size_t b = order.size() * mb / mbs, e = order.size() * (mb + 1) / mbs;
      if (b == e) continue;
      const std::size_t chunk = recurrent ? 1 : kGradChunk;
      const std::size_t nchunks = (e - b + chunk - 1) / chunk;
      std::vector<detail::GradBuffers> bufs(nchunks);
      parallel_for(nchunks, workers, [&](std::size_t c) {
        auto& g = bufs[c];
        g.actor.assign(na, 0.0f);
        g.critic.assign(nc, 0.0f);
        nn::Mlp::Cache ac, cc;
        nn::SparseInput tmp;
        std::size_t cb = b + c * chunk, ce = std::min(e, cb + chunk);
        for (std::size_t i = cb; i < ce; ++i) {
          const Unit& u = units[order[i]];
          int partner = partners.empty() ? -1 : partners[u.ep];
          if (recurrent)
            detail::gru_episode_grad(lr, *episodes[u.ep], partner, cfg, g);
          else
            detail::mlp_sample_grad(lr, (*episodes[u.ep])[u.t], partner, cfg, g, ac, cc, tmp);
        }
      });
      std::fill(ga.begin(), ga.end(), 0.0f);
      std::fill(gc.begin(), gc.end(), 0.0f);
      double samples = 0.0;
      for (std::size_t i = b; i < e; ++i)
        samples += recurrent ? static_cast<double>(episodes[units[order[i]].ep]->size()) : 1.0;
      for (const auto& g : bufs) {
        for (std::size_t k = 0; k < na; ++k) ga[k] += g.actor[k];
        for (std::size_t k = 0; k < nc; ++k) gc[k] += g.critic[k];
        ent += g.entropy;
        pl += g.policy_loss;
        vl += g.value_loss;
        clipped += g.clipped;
      }
      counted += samples;
      const float inv = static_cast<float>(1.0 / samples);
      for (auto& v : ga) v *= inv;
      for (auto& v : gc) v *= inv;
      lr.actor_opt.step(lr.actor->params, ga, cfg.max_grad_norm);
      lr.critic_opt.step(lr.critic_params, gc, cfg.max_grad_norm);
    }
  }
  if (counted > 0) {
    stats.entropy = ent / counted;
    stats.policy_loss = pl / counted;
    stats.value_loss = vl / counted;
    stats.clip_fraction = clipped / counted;
  }
  return stats;
}

namespace detail {

inline long long steps_per_iter(const Layout& L, const TrainConfig& cfg) {
  return static_cast<long long>(cfg.episodes_per_iter) * L.episode_length;
}

inline long long num_iters(const Layout& L, const TrainConfig& cfg) {
  long long per = steps_per_iter(L, cfg);
  return (cfg.total_steps + per - 1) / per;
}

// Horizon 0 in a schedule means "anneal over the whole run".
inline ShapingSchedule resolve_horizon(ShapingSchedule s, const TrainConfig& cfg) {
  if (s.horizon <= 0) s.horizon = cfg.total_steps;
  return s;
}

}  // namespace detail

// Biased self-play (one round of random search): π_w is trained on the
// hidden reward of its own events, π_a on the task reward plus shaping.
struct BiasedRun {
  std::shared_ptr<const ActorModel> w_policy;
  std::shared_ptr<const ActorModel> a_policy;
  std::vector<CurveRow> curves;
  long long steps = 0;
};

inline BiasedRun selfplay_train(std::shared_ptr<const Layout> L, const WeightVector& w, const TrainConfig& cfg,
                                const ShapingSchedule& shaping_a = {}) {
  cfg.validate();
  if (w.w.size() != event_dim(*L))
    throw Error(Errc::DimensionMismatch, "weight vector has " + std::to_string(w.w.size()) + " entries, layout has " +
                                             std::to_string(event_dim(*L)) + " events");
  const int obs = observation_size(*L);
  Learner lw(Arch::Mlp, obs, 0, cfg, derive_seed(cfg.seed, 1));
  Learner la(Arch::Mlp, obs, 0, cfg, derive_seed(cfg.seed, 2));
  const ShapingSchedule sched = detail::resolve_horizon(shaping_a, cfg);
  const long long iters = detail::num_iters(*L, cfg), per = detail::steps_per_iter(*L, cfg);
  const int workers = resolve_workers(cfg.workers);
  Rng shuffle_w(derive_seed(cfg.seed, 3)), shuffle_a(derive_seed(cfg.seed, 4));
  BiasedRun run;
  for (long long it = 0; it < iters; ++it) {
    const double factor = shaping_factor(run.steps, sched);
    std::vector<detail::TrainEpisode> eps(static_cast<std::size_t>(cfg.episodes_per_iter));
    std::vector<int> wseat(eps.size());
    parallel_for(eps.size(), workers, [&](std::size_t e) {
      std::uint64_t es = derive_seed(cfg.seed, static_cast<std::uint64_t>(it), e);
      Rng env_rng(es);
      int ws = static_cast<int>(env_rng.uniform(2));
      wseat[e] = ws;
      std::array<detail::SeatCtl, 2> seats;
      seats[static_cast<std::size_t>(ws)].learner = &lw;
      seats[static_cast<std::size_t>(ws)].hidden = &w;
      seats[static_cast<std::size_t>(1 - ws)].learner = &la;
      seats[static_cast<std::size_t>(1 - ws)].shaping = &sched;
      seats[static_cast<std::size_t>(1 - ws)].factor = factor;
      eps[e] = detail::run_training_episode(L, seats, derive_seed(es, 7));
    });
    std::vector<EpisodeSamples*> bw, ba;
    CurveRow row;
    row.step = run.steps;
    row.factor = factor;
    double ent = 0.0, ent_n = 0.0;
    for (std::size_t e = 0; e < eps.size(); ++e) {
      auto ws = static_cast<std::size_t>(wseat[e]);
      bw.push_back(&eps[e].samples[ws]);
      ba.push_back(&eps[e].samples[1 - ws]);
      row.env_return += eps[e].env_return;
      row.hidden_return += eps[e].hidden_return[ws];
      row.shaping_return += eps[e].shaping_raw[1 - ws];
      ent += eps[e].entropy_sum[0] + eps[e].entropy_sum[1];
      ent_n += static_cast<double>(eps[e].samples[0].size() + eps[e].samples[1].size());
    }
    const double ne = static_cast<double>(eps.size());
    row.env_return /= ne;
    row.hidden_return /= ne;
    row.shaping_return /= ne;
    row.shaped_return = row.env_return + factor * row.shaping_return;
    row.entropy = ent_n > 0 ? ent / ent_n : 0.0;
    ppo_update(lw, bw, {}, cfg, shuffle_w);
    ppo_update(la, ba, {}, cfg, shuffle_a);
    run.steps += per;
    run.curves.push_back(row);
  }
  run.w_policy = lw.snapshot();
  run.a_policy = la.snapshot();
  return run;
}

enum class PoolMethod { FCP, MEP };

struct PopulationMember {
  std::string id;
  int run = 0;
  std::string stage;  // init | middle | final
  std::shared_ptr<const ActorModel> policy;
};

struct PopulationRun {
  std::vector<PopulationMember> members;  // run-major: init, middle, final
  std::vector<std::vector<CurveRow>> curves;
};

// Trains `n_runs` self-play policies (one network for both seats) and keeps
// init/middle/final checkpoints of each. MEP adds the population-entropy
// bonus -coef * log(mean_j pi_j(a|s)) to every training reward.
inline PopulationRun build_baseline_pool(PoolMethod method, std::shared_ptr<const Layout> L, int n_runs,
                                         const TrainConfig& cfg, const ShapingSchedule& shaping = {},
                                         const std::string& id_prefix = "") {
  cfg.validate();
  if (n_runs < 1) throw Error(Errc::InvalidArgument, "nPolicies must be >= 1");
  const double coef = method == PoolMethod::MEP ? cfg.population_entropy_coef : 0.0;
  const std::string prefix = id_prefix.empty() ? (method == PoolMethod::FCP ? "fcp" : "mep") : id_prefix;
  const int obs = observation_size(*L);
  const ShapingSchedule sched = detail::resolve_horizon(shaping, cfg);
  const long long iters = detail::num_iters(*L, cfg), per = detail::steps_per_iter(*L, cfg);
  const long long mid_iter = iters / 2;
  const int workers = resolve_workers(cfg.workers);
  std::vector<std::unique_ptr<Learner>> pop;
  std::vector<Rng> shuffles;
  for (int i = 0; i < n_runs; ++i) {
    std::uint64_t rs = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(i));
    pop.push_back(std::make_unique<Learner>(Arch::Mlp, obs, 0, cfg, rs));
    shuffles.emplace_back(derive_seed(rs, 3));
  }
  PopulationRun out;
  out.curves.resize(static_cast<std::size_t>(n_runs));
  std::vector<std::array<std::shared_ptr<const ActorModel>, 3>> snaps(static_cast<std::size_t>(n_runs));
  for (int i = 0; i < n_runs; ++i) {
    snaps[static_cast<std::size_t>(i)][0] = pop[static_cast<std::size_t>(i)]->snapshot();
    if (iters == 0) snaps[static_cast<std::size_t>(i)][1] = snaps[static_cast<std::size_t>(i)][0];
  }
  long long steps = 0;
  for (long long it = 0; it < iters; ++it) {
    const double factor = shaping_factor(steps, sched);
    std::vector<std::vector<detail::TrainEpisode>> eps(static_cast<std::size_t>(n_runs));
    for (int i = 0; i < n_runs; ++i) {
      auto& mine = eps[static_cast<std::size_t>(i)];
      mine.resize(static_cast<std::size_t>(cfg.episodes_per_iter));
      std::uint64_t rs = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(i));
      parallel_for(mine.size(), workers, [&](std::size_t e) {
        std::uint64_t es = derive_seed(rs, static_cast<std::uint64_t>(it), e);
        std::array<detail::SeatCtl, 2> seats;
        for (auto& sc : seats) {
          sc.learner = pop[static_cast<std::size_t>(i)].get();
          sc.shaping = &sched;
          sc.factor = factor;
        }
        mine[e] = detail::run_training_episode(L, seats, derive_seed(es, 7));
      });
    }
    if (coef > 0.0) {
      // Population entropy bonus from the current (pre-update) members.
      for (int i = 0; i < n_runs; ++i)
        for (auto& ep : eps[static_cast<std::size_t>(i)]) {
          for (auto& seat : ep.samples) {
            parallel_for(seat.size(), workers, [&](std::size_t t) {
              Sample& smp = seat[t];
              double mean_p = 0.0;
              for (int j = 0; j < n_runs; ++j) {
                nn::Mlp::Cache c;
                const ActorModel& m = *pop[static_cast<std::size_t>(j)]->actor;
                m.mlp.forward(m.params.data(), smp.x, c);
                double lp[kNumActions];
                nn::log_softmax(c.out.data(), kNumActions, lp);
                mean_p += std::exp(lp[smp.action]);
              }
              mean_p /= n_runs;
              smp.reward += -coef * std::log(std::max(mean_p, 1e-12));
            });
          }
        }
    }
    for (int i = 0; i < n_runs; ++i) {
      auto& mine = eps[static_cast<std::size_t>(i)];
      std::vector<EpisodeSamples*> batch;
      CurveRow row;
      row.step = steps;
      row.factor = factor;
      double ent = 0.0, ent_n = 0.0;
      for (auto& ep : mine) {
        batch.push_back(&ep.samples[0]);
        batch.push_back(&ep.samples[1]);
        row.env_return += ep.env_return;
        row.shaping_return += ep.shaping_raw[0] + ep.shaping_raw[1];
        ent += ep.entropy_sum[0] + ep.entropy_sum[1];
        ent_n += static_cast<double>(ep.samples[0].size() + ep.samples[1].size());
      }
      const double ne = static_cast<double>(mine.size());
      row.env_return /= ne;
      row.shaping_return /= ne;
      row.shaped_return = row.env_return + factor * row.shaping_return;
      row.entropy = ent_n > 0 ? ent / ent_n : 0.0;
      ppo_update(*pop[static_cast<std::size_t>(i)], batch, {}, cfg, shuffles[static_cast<std::size_t>(i)]);
      out.curves[static_cast<std::size_t>(i)].push_back(row);
      if (it + 1 == mid_iter || (mid_iter == 0 && it == 0))
        snaps[static_cast<std::size_t>(i)][1] = pop[static_cast<std::size_t>(i)]->snapshot();
    }
    steps += per;
  }
  static const char* stages[3] = {"init", "middle", "final"};
  for (int i = 0; i < n_runs; ++i) {
    snaps[static_cast<std::size_t>(i)][2] = pop[static_cast<std::size_t>(i)]->snapshot();
    for (int k = 0; k < 3; ++k) {
      PopulationMember m;
      m.run = i;
      m.stage = stages[k];
      m.id = prefix + "-" + std::to_string(i) + "-" + stages[k];
      m.policy = snaps[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      out.members.push_back(std::move(m));
    }
  }
  return out;
}

struct AdaptiveRun {
  std::shared_ptr<const ActorModel> policy;
  std::vector<CurveRow> curves;
  std::vector<long long> partner_episodes;  // per pool member
  long long steps = 0;
};

// Stage 2: a recurrent policy trained against uniformly sampled pool
// members; the critic sees the partner's one-hot identity.
inline AdaptiveRun train_adaptive(const std::vector<PolicyHandle>& pool, std::shared_ptr<const Layout> L,
                                  const TrainConfig& cfg, const ShapingSchedule& shaping = {},
                                  Arch arch = Arch::Gru) {
  cfg.validate();
  if (pool.empty()) throw Error(Errc::EmptyPool, "train_adaptive needs at least one partner");
  const int K = static_cast<int>(pool.size());
  const int obs = observation_size(*L);
  Learner lr(arch, obs, K, cfg, derive_seed(cfg.seed, 11));
  const ShapingSchedule sched = detail::resolve_horizon(shaping, cfg);
  const long long iters = detail::num_iters(*L, cfg), per = detail::steps_per_iter(*L, cfg);
  const int workers = resolve_workers(cfg.workers);
  Rng shuffle(derive_seed(cfg.seed, 12));
  AdaptiveRun run;
  run.partner_episodes.assign(static_cast<std::size_t>(K), 0);
  for (long long it = 0; it < iters; ++it) {
    const double factor = shaping_factor(run.steps, sched);
    std::vector<detail::TrainEpisode> eps(static_cast<std::size_t>(cfg.episodes_per_iter));
    std::vector<int> seat(eps.size()), partner(eps.size());
    parallel_for(eps.size(), workers, [&](std::size_t e) {
      std::uint64_t es = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(it), e);
      Rng env_rng(es);
      int k = static_cast<int>(env_rng.uniform(static_cast<std::size_t>(K)));
      int ms = static_cast<int>(env_rng.uniform(2));
      partner[e] = k;
      seat[e] = ms;
      std::array<detail::SeatCtl, 2> seats;
      auto& me = seats[static_cast<std::size_t>(ms)];
      me.learner = &lr;
      me.partner_id = k;
      me.shaping = &sched;
      me.factor = factor;
      seats[static_cast<std::size_t>(1 - ms)].agent = pool[static_cast<std::size_t>(k)].make_agent();
      eps[e] = detail::run_training_episode(L, seats, derive_seed(es, 7));
    });
    std::vector<EpisodeSamples*> batch;
    CurveRow row;
    row.step = run.steps;
    row.factor = factor;
    double ent = 0.0, ent_n = 0.0;
    for (std::size_t e = 0; e < eps.size(); ++e) {
      auto ms = static_cast<std::size_t>(seat[e]);
      batch.push_back(&eps[e].samples[ms]);
      run.partner_episodes[static_cast<std::size_t>(partner[e])]++;
      row.env_return += eps[e].env_return;
      row.shaping_return += eps[e].shaping_raw[ms];
      ent += eps[e].entropy_sum[ms];
      ent_n += static_cast<double>(eps[e].samples[ms].size());
    }
    const double ne = static_cast<double>(eps.size());
    row.env_return /= ne;
    row.shaping_return /= ne;
    row.shaped_return = row.env_return + factor * row.shaping_return;
    row.entropy = ent_n > 0 ? ent / ent_n : 0.0;
    ppo_update(lr, batch, partner, cfg, shuffle);
    run.steps += per;
    run.curves.push_back(row);
  }
  run.policy = lr.snapshot();
  return run;
}

// Policy-gradient sanity check on a small tabular softmax policy. The
// analytic gradient is accumulated over a frozen sampled batch through
// ppo_policy_grad (ratio 1, exact advantages, discount-weighted); each
// coordinate's sign is compared with a central finite difference of the
// exact expected return.
struct GradientSanityReport {
  int coordinates = 0;
  int agree = 0;
  double fraction() const { return coordinates ? static_cast<double>(agree) / coordinates : 0.0; }
};

inline GradientSanityReport tabular_gradient_sanity(std::uint64_t seed, int S = 4, int A = 3, int episodes = 4000,
                                                    int horizon = 60) {
  Rng rng(seed);
  const double gamma = 0.9;
  FiniteMDP mdp = random_mdp(S, A, gamma, rng);
  StateActionTable R(S, A);
  for (auto& v : R.v) v = rng.normal();
  std::vector<double> theta(static_cast<std::size_t>(S * A));
  for (auto& v : theta) v = rng.normal();

  auto policy = [&](const std::vector<double>& th) {
    StateActionTable pi(S, A);
    for (int s = 0; s < S; ++s) {
      double mx = -1e300, z = 0.0;
      for (int a = 0; a < A; ++a) mx = std::max(mx, th[static_cast<std::size_t>(s * A + a)]);
      for (int a = 0; a < A; ++a) z += pi(s, a) = std::exp(th[static_cast<std::size_t>(s * A + a)] - mx);
      for (int a = 0; a < A; ++a) pi(s, a) /= z;
    }
    return pi;
  };
  // Exact values: V = (I - gamma P_pi)^-1 r_pi; start state uniform.
  auto values = [&](const StateActionTable& pi) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(S, S);
    Eigen::VectorXd r(S);
    for (int s = 0; s < S; ++s) {
      r(s) = 0.0;
      for (int a = 0; a < A; ++a) {
        r(s) += pi(s, a) * R(s, a);
        for (int s2 = 0; s2 < S; ++s2) M(s, s2) -= gamma * pi(s, a) * mdp.p(s, a, s2);
      }
    }
    Eigen::VectorXd V = M.partialPivLu().solve(r);
    return std::vector<double>(V.data(), V.data() + S);
  };
  auto J = [&](const std::vector<double>& th) {
    auto V = values(policy(th));
    return std::accumulate(V.begin(), V.end(), 0.0) / S;
  };

  StateActionTable pi = policy(theta);
  std::vector<double> V = values(pi);
  // Frozen batch of (s, a, discount) from rollouts of the current policy.
  std::vector<double> grad(theta.size(), 0.0);
  for (int ep = 0; ep < episodes; ++ep) {
    int s = static_cast<int>(rng.uniform(static_cast<std::size_t>(S)));
    double disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      std::vector<double> row(static_cast<std::size_t>(A));
      for (int a = 0; a < A; ++a) row[static_cast<std::size_t>(a)] = pi(s, a);
      int a = static_cast<int>(rng.categorical(row));
      double q = R(s, a) + gamma * mdp.expect(s, a, V);
      double adv = q - V[static_cast<std::size_t>(s)];
      float logits[16] = {}, dl[16] = {};
      for (int k = 0; k < A; ++k) logits[k] = static_cast<float>(theta[static_cast<std::size_t>(s * A + k)]);
      ppo_policy_grad(logits, A, a, std::log(pi(s, a)), disc * adv, 0.2, 0.0, dl);
      for (int k = 0; k < A; ++k) grad[static_cast<std::size_t>(s * A + k)] -= dl[k];  // ascent direction
      std::vector<double> next(static_cast<std::size_t>(S));
      for (int s2 = 0; s2 < S; ++s2) next[static_cast<std::size_t>(s2)] = mdp.p(s, a, s2);
      s = static_cast<int>(rng.categorical(next));
      disc *= gamma;
    }
  }
  GradientSanityReport rep;
  const double eps = 1e-5;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto up = theta, down = theta;
    up[i] += eps;
    down[i] -= eps;
    double fd = (J(up) - J(down)) / (2 * eps);
    rep.coordinates++;
    if ((fd > 0) == (grad[i] > 0)) rep.agree++;
  }
  return rep;
}

}  // namespace hsp
