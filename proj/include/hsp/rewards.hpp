#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hsp/events.hpp"

namespace hsp {

// Linear hidden-reward coefficients: one weight per active event plus a
// multiplier on the task (order) reward.
struct WeightVector {
  std::vector<double> w;
  double order_multiplier = 0.0;
  double c_max = 0.0;  // bound of the grid it was drawn from; informational
  std::uint64_t seed = 0;

  std::size_t dim() const { return w.size(); }
  double norm_inf() const {
    double m = 0.0;
    for (double v : w) m = std::max(m, std::abs(v));
    return m;
  }
  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

inline double hidden_reward(std::span<const double> phi, double task_reward, const WeightVector& w) {
  if (phi.size() != w.w.size())
    throw Error(Errc::DimensionMismatch,
                "event vector has " + std::to_string(phi.size()) + " dims, weights have " + std::to_string(w.w.size()));
  double r = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) r += phi[i] * w.w[i];
  return r + w.order_multiplier * task_reward;
}

inline double hidden_reward(const EventVector& phi, double task_reward, const WeightVector& w) {
  if (w.w.size() > kNumEvents)
    throw Error(Errc::DimensionMismatch, "weights have " + std::to_string(w.w.size()) + " dims, at most " +
                                             std::to_string(kNumEvents) + " events exist");
  for (std::size_t i = w.w.size(); i < kNumEvents; ++i)
    if (phi[i])
      throw Error(Errc::DimensionMismatch,
                  "event '" + std::string(kEventNames[i]) + "' fired but has no weight (dim " + std::to_string(w.w.size()) + ")");
  double r = 0.0;
  for (std::size_t i = 0; i < w.w.size(); ++i) r += static_cast<double>(phi[i]) * w.w[i];
  return r + w.order_multiplier * task_reward;
}

// Per-event candidate sets for random search over weight vectors.
struct WeightGrid {
  std::vector<std::vector<double>> candidates;  // indexed by event
  std::vector<double> order_multiplier{0.0, 1.0};

  std::size_t dim() const { return candidates.size(); }

  // Largest candidate magnitude; serves as the norm bound of sampled weights.
  double c_max() const {
    double m = 0.0;
    for (const auto& c : candidates)
      for (double v : c) m = std::max(m, std::abs(v));
    return m;
  }
};

inline WeightGrid zero_weight_grid(std::size_t dim) {
  WeightGrid g;
  g.candidates.assign(dim, std::vector<double>{0.0});
  g.order_multiplier = {0.0};
  return g;
}

inline WeightVector sample_weight_vector(const WeightGrid& grid, std::uint64_t seed) {
  for (std::size_t j = 0; j < grid.candidates.size(); ++j)
    if (grid.candidates[j].empty())
      throw Error(Errc::EmptyCandidateSet, "no candidates for event '" +
                                               std::string(j < kNumEvents ? kEventNames[j] : "?") + "'");
  if (grid.order_multiplier.empty()) throw Error(Errc::EmptyCandidateSet, "no candidates for order_reward");
  Rng rng(seed);
  WeightVector out;
  out.seed = seed;
  out.c_max = grid.c_max();
  out.w.reserve(grid.candidates.size());
  for (const auto& c : grid.candidates) out.w.push_back(c[rng.uniform(c.size())]);
  out.order_multiplier = grid.order_multiplier[rng.uniform(grid.order_multiplier.size())];
  return out;
}

// Key/value text config shared by grids and schedules; '#' starts a comment.
namespace detail {

inline std::vector<std::pair<std::string, std::vector<std::string>>> parse_kv(std::string_view text) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  int lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": expected 'key = values'");
    std::string key = trim(line.substr(0, eq));
    std::string rest = line.substr(eq + 1);
    std::replace(rest.begin(), rest.end(), ',', ' ');
    out.emplace_back(key, split_ws(rest));
  }
  return out;
}

inline double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw Error(Errc::ParseError, "bad number '" + s + "' for '" + key + "'");
  }
}

inline Event event_or_throw(const std::string& name) {
  auto e = event_from_name(name);
  if (!e) throw Error(Errc::ParseError, "unknown event '" + name + "'");
  return *e;
}

}  // namespace detail

// Grid file: `<event_name> = v1 v2 ...` and `order_reward = v1 v2 ...`.
// Events not listed get the singleton {0}.
inline WeightGrid parse_weight_grid(std::string_view text, std::size_t dim) {
  WeightGrid g = zero_weight_grid(dim);
  g.order_multiplier = {0.0, 1.0};
  for (auto& [key, vals] : detail::parse_kv(text)) {
    std::vector<double> c;
    for (const auto& v : vals) c.push_back(detail::to_double(v, key));
    if (key == "order_reward") {
      g.order_multiplier = std::move(c);
      continue;
    }
    std::size_t j = event_index(detail::event_or_throw(key));
    if (j >= dim)
      throw Error(Errc::InvalidArgument, "event '" + key + "' is not active on this layout (" + std::to_string(dim) + " events)");
    g.candidates[j] = std::move(c);
  }
  return g;
}

inline std::string format_weight_grid(const WeightGrid& g) {
  std::string out;
  for (std::size_t j = 0; j < g.candidates.size(); ++j) {
    const auto& c = g.candidates[j];
    if (c.size() == 1 && c[0] == 0.0) continue;
    out += std::string(kEventNames[j]) + " =";
    for (double v : c) out += " " + format_number(v);
    out += "\n";
  }
  out += "order_reward =";
  for (double v : g.order_multiplier) out += " " + format_number(v);
  return out + "\n";
}

struct ShapingTerm {
  Event event{};
  double value = 0.0;
  friend bool operator==(const ShapingTerm&, const ShapingTerm&) = default;
};

// Event-based reward shaping whose scale anneals linearly from 1 at step 0
// to end_factor at step `horizon`.
struct ShapingSchedule {
  std::vector<ShapingTerm> terms;
  long long horizon = 0;
  double end_factor = 0.0;

  bool empty() const { return terms.empty(); }
  friend bool operator==(const ShapingSchedule&, const ShapingSchedule&) = default;
};

inline double shaping_factor(long long t, const ShapingSchedule& s) {
  if (t < 0) throw Error(Errc::InvalidArgument, "negative step " + std::to_string(t));
  if (s.horizon <= 0 || t >= s.horizon) return s.horizon <= 0 && t == 0 ? 1.0 : s.end_factor;
  double frac = static_cast<double>(t) / static_cast<double>(s.horizon);
  return 1.0 + (s.end_factor - 1.0) * frac;
}

// Unscaled shaping reward of an event vector.
inline double shaping_raw(const EventVector& ev, const ShapingSchedule& s) {
  double r = 0.0;
  for (const auto& t : s.terms) r += t.value * static_cast<double>(ev[t.event]);
  return r;
}

// Schedule file: `horizon = <steps>`, `end_factor = <x>`, `<event_name> = <value>`.
inline ShapingSchedule parse_shaping_schedule(std::string_view text) {
  ShapingSchedule s;
  for (auto& [key, vals] : detail::parse_kv(text)) {
    if (vals.size() != 1) throw Error(Errc::ParseError, "'" + key + "' takes exactly one value");
    double v = detail::to_double(vals[0], key);
    if (key == "horizon")
      s.horizon = static_cast<long long>(v);
    else if (key == "end_factor")
      s.end_factor = v;
    else
      s.terms.push_back(ShapingTerm{detail::event_or_throw(key), v});
  }
  if (s.end_factor < 0.0 || s.end_factor > 1.0) throw Error(Errc::InvalidArgument, "end_factor must be in [0, 1]");
  if (s.horizon < 0) throw Error(Errc::InvalidArgument, "horizon must be non-negative");
  return s;
}

inline std::string format_shaping_schedule(const ShapingSchedule& s) {
  std::string out = "horizon = " + std::to_string(s.horizon) + "\nend_factor = " + format_number(s.end_factor) + "\n";
  for (const auto& t : s.terms) out += std::string(event_name(t.event)) + " = " + format_number(t.value) + "\n";
  return out;
}

}  // namespace hsp
