#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsp/nn.hpp"
#include "hsp/rewards.hpp"

namespace hsp {

struct TrainConfig {
  long long total_steps = 200000;  // environment ticks
  int workers = 0;                 // 0: HSP_WORKERS or 1
  int episodes_per_iter = 16;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double lr = 5e-4;
  double adam_eps = 1e-5;
  double clip = 0.2;
  double entropy_coef = 0.01;
  double huber_delta = 10.0;
  double max_grad_norm = 10.0;
  int ppo_epochs = 4;
  int minibatches = 4;
  int hidden = 64;
  double population_entropy_coef = 0.01;
  bool reward_normalization = true;
  std::uint64_t seed = 1;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(Errc::InvalidArgument, "train config: " + what); };
    if (total_steps < 0) bad("total_steps must be >= 0");
    if (episodes_per_iter < 1) bad("episodes_per_iter must be >= 1");
    if (!(gamma > 0 && gamma < 1)) bad("gamma must lie in (0, 1)");
    if (!(gae_lambda >= 0 && gae_lambda <= 1)) bad("gae_lambda must lie in [0, 1]");
    if (!(lr > 0)) bad("lr must be positive");
    if (!(clip > 0)) bad("clip must be positive");
    if (entropy_coef < 0) bad("entropy_coef must be >= 0");
    if (!(huber_delta > 0)) bad("huber_delta must be positive");
    if (ppo_epochs < 1 || minibatches < 1) bad("ppo_epochs and minibatches must be >= 1");
    if (hidden < 1 || hidden > 256) bad("hidden must lie in [1, 256]");
    if (population_entropy_coef < 0) bad("population_entropy_coef must be >= 0");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"total_steps", c.total_steps},
          {"episodes_per_iter", c.episodes_per_iter},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"lr", c.lr},
          {"adam_eps", c.adam_eps},
          {"clip", c.clip},
          {"entropy_coef", c.entropy_coef},
          {"huber_delta", c.huber_delta},
          {"max_grad_norm", c.max_grad_norm},
          {"ppo_epochs", c.ppo_epochs},
          {"minibatches", c.minibatches},
          {"hidden", c.hidden},
          {"population_entropy_coef", c.population_entropy_coef},
          {"reward_normalization", c.reward_normalization},
          {"seed", c.seed}};
}

// Overwrites fields present in `j`; unknown keys are rejected.
inline void apply_json(TrainConfig& c, const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    if (k == "total_steps") c.total_steps = v.get<long long>();
    else if (k == "workers") c.workers = v.get<int>();
    else if (k == "episodes_per_iter") c.episodes_per_iter = v.get<int>();
    else if (k == "gamma") c.gamma = v.get<double>();
    else if (k == "gae_lambda") c.gae_lambda = v.get<double>();
    else if (k == "lr") c.lr = v.get<double>();
    else if (k == "adam_eps") c.adam_eps = v.get<double>();
    else if (k == "clip") c.clip = v.get<double>();
    else if (k == "entropy_coef") c.entropy_coef = v.get<double>();
    else if (k == "huber_delta") c.huber_delta = v.get<double>();
    else if (k == "max_grad_norm") c.max_grad_norm = v.get<double>();
    else if (k == "ppo_epochs") c.ppo_epochs = v.get<int>();
    else if (k == "minibatches") c.minibatches = v.get<int>();
    else if (k == "hidden") c.hidden = v.get<int>();
    else if (k == "population_entropy_coef") c.population_entropy_coef = v.get<double>();
    else if (k == "reward_normalization") c.reward_normalization = v.get<bool>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else throw Error(Errc::InvalidArgument, "unknown train config key '" + k + "'");
  }
}

// Welford running variance of discounted returns, used to scale rewards.
struct ReturnScaler {
  double count = 0.0, mean = 0.0, m2 = 0.0;

  void update(double x) {
    count += 1.0;
    double d = x - mean;
    mean += d / count;
    m2 += d * (x - mean);
  }
  double scale() const {
    if (count < 2.0) return 1.0;
    double sd = std::sqrt(m2 / count);
    return sd > 1e-8 ? 1.0 / sd : 1.0;
  }
};

struct PolicyGradStats {
  double loss = 0.0;
  double entropy = 0.0;
  bool clipped = false;
};

// Gradient of the clipped-surrogate loss minus entropy bonus for one sample
// with respect to its logits:
//   L = -min(r A, clip(r, 1-eps, 1+eps) A) - c_ent H(pi),  r = pi(a)/pi_old(a).
inline PolicyGradStats ppo_policy_grad(const float* logits, int n, int action, double old_logp, double adv,
                                       double clip, double ent_coef, float* dlogits) {
  double logp[16], p[16];
  nn::log_softmax(logits, n, logp);
  double H = 0.0;
  for (int k = 0; k < n; ++k) {
    p[k] = std::exp(logp[k]);
    H -= p[k] * logp[k];
  }
  double ratio = std::exp(logp[action] - old_logp);
  double s1 = ratio * adv;
  double s2 = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
  PolicyGradStats st;
  st.entropy = H;
  st.loss = -std::min(s1, s2) - ent_coef * H;
  // d(-r A)/d logp_a = -r A when the unclipped term is the minimum.
  double g_logp = 0.0;
  if (s1 <= s2)
    g_logp = -s1;
  else
    st.clipped = true;
  for (int k = 0; k < n; ++k) {
    double dlogp_dz = (k == action ? 1.0 : 0.0) - p[k];
    double dent = -p[k] * (logp[k] + H);  // dH/dz_k
    dlogits[k] = static_cast<float>(g_logp * dlogp_dz - ent_coef * dent);
  }
  return st;
}

// Huber loss derivative with respect to the prediction.
inline double huber_grad(double pred, double target, double delta) {
  double d = pred - target;
  if (d > delta) return delta;
  if (d < -delta) return -delta;
  return d;
}

inline double huber_loss(double pred, double target, double delta) {
  double d = std::abs(pred - target);
  return d <= delta ? 0.5 * d * d : delta * (d - 0.5 * delta);
}

// Generalized advantage estimation over one episode that ends after the
// last reward (bootstrap value 0).
inline void gae(const std::vector<double>& rewards, const std::vector<double>& values, double gamma, double lambda,
                std::vector<double>& adv, std::vector<double>& ret) {
  const std::size_t T = rewards.size();
  adv.assign(T, 0.0);
  ret.assign(T, 0.0);
  double last = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    double next_v = i + 1 < T ? values[i + 1] : 0.0;
    double delta = rewards[i] + gamma * next_v - values[i];
    last = delta + gamma * lambda * last;
    adv[i] = last;
    ret[i] = last + values[i];
  }
}

}  // namespace hsp
