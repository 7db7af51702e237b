#pragma once

#include <charconv>
#include <string>
#include <vector>

#include "hsp/engine.hpp"

namespace hsp {

// Plain-text trajectory log, one record per tick:
//
//   # hsp-trajectory v1
//   layout=<name> layout_hash=<16 hex> seed=<u64> episode_length=<n>
//   tick=<t> a=<act0>,<act1> r=<reward> ev=<p>:<event>@<x>,<y>;...   (ev=- if none)
//   ...
//   end ticks=<n> score=<total>
//
// Numbers use shortest round-trip formatting, so the text is bit-stable for
// a fixed (layout, seed, action sequence).
struct TrajectoryStep {
  int tick = 0;
  Action a0 = Action::NoOp;
  Action a1 = Action::NoOp;
  double reward = 0.0;
  std::vector<EventRecord> events;
};

struct Trajectory {
  std::string layout_name;
  std::uint64_t layout_hash = 0;
  std::uint64_t seed = 0;
  int episode_length = 0;
  std::vector<TrajectoryStep> steps;
  double score = 0.0;

  EventVector event_totals() const {
    EventVector v;
    for (const auto& s : steps)
      for (const auto& e : s.events) v[e.event] += 1;
    return v;
  }
};

inline std::uint64_t layout_hash(const Layout& L) {
  Layout copy = L;
  copy.name.clear();
  return fnv1a(format_layout(copy));
}

inline std::string format_step(const TrajectoryStep& st) {
  std::string line = "tick=" + std::to_string(st.tick) + " a=" + std::string(action_name(st.a0)) + "," +
                     std::string(action_name(st.a1)) + " r=" + format_number(st.reward) + " ev=";
  if (st.events.empty()) {
    line += "-";
  } else {
    for (std::size_t i = 0; i < st.events.size(); ++i) {
      const auto& e = st.events[i];
      if (i) line += ';';
      line += std::to_string(e.player) + ":" + std::string(event_name(e.event)) + "@" + std::to_string(e.cell.x) +
              "," + std::to_string(e.cell.y);
    }
  }
  return line;
}

inline std::string format_trajectory(const Trajectory& t) {
  std::string out = "# hsp-trajectory v1\n";
  out += "layout=" + (t.layout_name.empty() ? std::string("-") : t.layout_name) + " layout_hash=" + hex64(t.layout_hash) +
         " seed=" + std::to_string(t.seed) + " episode_length=" + std::to_string(t.episode_length) + "\n";
  for (const auto& st : t.steps) out += format_step(st) + "\n";
  out += "end ticks=" + std::to_string(t.steps.size()) + " score=" + format_number(t.score) + "\n";
  return out;
}

namespace detail {

inline std::string field(const std::string& tok, std::string_view key, int lineno) {
  if (tok.size() < key.size() + 1 || tok.compare(0, key.size(), key) != 0 || tok[key.size()] != '=')
    throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": expected '" + std::string(key) + "=...'");
  return tok.substr(key.size() + 1);
}

inline double parse_number(const std::string& s, int lineno) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad number '" + s + "'");
  return v;
}

inline Action parse_action(const std::string& s, int lineno) {
  auto a = action_from_name(s);
  if (!a) throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": unknown action '" + s + "'");
  return *a;
}

}  // namespace detail

inline Trajectory parse_trajectory(std::string_view text) {
  Trajectory t;
  auto lines = split(text, '\n');
  int lineno = 0;
  bool header = false, ended = false;
  for (const auto& raw : lines) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto toks = split_ws(line);
    if (!header) {
      if (toks.size() != 4) throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad header");
      t.layout_name = detail::field(toks[0], "layout", lineno);
      if (t.layout_name == "-") t.layout_name.clear();
      t.layout_hash = std::stoull(detail::field(toks[1], "layout_hash", lineno), nullptr, 16);
      t.seed = std::stoull(detail::field(toks[2], "seed", lineno));
      t.episode_length = std::stoi(detail::field(toks[3], "episode_length", lineno));
      header = true;
      continue;
    }
    if (toks[0] == "end") {
      if (toks.size() != 3) throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad end record");
      t.score = detail::parse_number(detail::field(toks[2], "score", lineno), lineno);
      ended = true;
      continue;
    }
    if (toks.size() != 4) throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad tick record");
    TrajectoryStep st;
    st.tick = std::stoi(detail::field(toks[0], "tick", lineno));
    auto acts = split(detail::field(toks[1], "a", lineno), ',');
    if (acts.size() != 2) throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": expected two actions");
    st.a0 = detail::parse_action(acts[0], lineno);
    st.a1 = detail::parse_action(acts[1], lineno);
    st.reward = detail::parse_number(detail::field(toks[2], "r", lineno), lineno);
    std::string ev = detail::field(toks[3], "ev", lineno);
    if (ev != "-") {
      for (const auto& item : split(ev, ';')) {
        auto colon = item.find(':'), at = item.find('@');
        if (colon == std::string::npos || at == std::string::npos || at < colon)
          throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad event '" + item + "'");
        EventRecord rec;
        rec.player = std::stoi(item.substr(0, colon));
        auto e = event_from_name(item.substr(colon + 1, at - colon - 1));
        if (!e) throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": unknown event in '" + item + "'");
        rec.event = *e;
        auto xy = split(item.substr(at + 1), ',');
        if (xy.size() != 2) throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad cell in '" + item + "'");
        rec.cell = Cell{std::stoi(xy[0]), std::stoi(xy[1])};
        st.events.push_back(rec);
      }
    }
    t.steps.push_back(std::move(st));
  }
  if (!header) throw Error(Errc::ParseError, "missing trajectory header");
  if (!ended) throw Error(Errc::ParseError, "missing end record");
  return t;
}

// Accumulates a trajectory while an episode is simulated.
class TrajectoryRecorder {
 public:
  TrajectoryRecorder(const Layout& L, std::uint64_t seed) {
    traj_.layout_name = L.name;
    traj_.layout_hash = layout_hash(L);
    traj_.seed = seed;
    traj_.episode_length = L.episode_length;
  }

  void record(int tick, Action a0, Action a1, double reward, std::vector<EventRecord> events) {
    traj_.steps.push_back(TrajectoryStep{tick, a0, a1, reward, std::move(events)});
    traj_.score += reward;
  }

  const Trajectory& trajectory() const { return traj_; }
  Trajectory take() { return std::move(traj_); }

 private:
  Trajectory traj_;
};

// Re-simulates the logged actions from reset and returns the regenerated
// trajectory; byte-compare its formatted text against the original.
inline Trajectory resimulate(const Trajectory& t, const Layout& L) {
  if (layout_hash(L) != t.layout_hash)
    throw Error(Errc::InvalidArgument, "layout does not match trajectory (hash " + hex64(layout_hash(L)) + " vs " +
                                           hex64(t.layout_hash) + ")");
  auto layout = std::make_shared<const Layout>(L);
  GameState s = reset(layout, t.seed);
  TrajectoryRecorder rec(L, t.seed);
  StepInfo info;
  for (const auto& st : t.steps) {
    std::vector<EventRecord> evs;
    int tick = s.tick;
    step_inplace(s, st.a0, st.a1, info, &evs);
    rec.record(tick, st.a0, st.a1, info.task_reward, std::move(evs));
  }
  return rec.take();
}

}  // namespace hsp
