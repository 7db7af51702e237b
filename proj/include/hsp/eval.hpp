#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsp/parametric.hpp"
#include "hsp/scripted.hpp"
#include "hsp/trajectory.hpp"

namespace hsp {

struct MatchupResult {
  std::string policy_id;
  std::string partner_id;
  int position = 1;  // 1 or 2: seat of the evaluated policy
  int episodes = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  std::vector<double> mean_events;  // joint events per episode
};

// Episode e uses seed derive_seed(seed, e); `policy` sits in seat
// position - 1. Std is the population std over episodes.
inline MatchupResult crossplay(const PolicyHandle& policy, const PolicyHandle& partner, std::shared_ptr<const Layout> L,
                               int position, int episodes, std::uint64_t seed, int workers = 1) {
  if (episodes < 1) throw Error(Errc::InvalidArgument, "episodes must be >= 1");
  if (position != 1 && position != 2) throw Error(Errc::InvalidArgument, "position must be 1 or 2");
  std::vector<EpisodeResult> res(static_cast<std::size_t>(episodes));
  parallel_for(res.size(), resolve_workers(workers), [&](std::size_t e) {
    auto me = policy.make_agent();
    auto other = partner.make_agent();
    std::uint64_t es = derive_seed(seed, e);
    res[e] = position == 1 ? run_episode(L, *me, *other, es) : run_episode(L, *other, *me, es);
  });
  MatchupResult m;
  m.policy_id = policy.id;
  m.partner_id = partner.id;
  m.position = position;
  m.episodes = episodes;
  const std::size_t dim = event_dim(*L);
  m.mean_events.assign(dim, 0.0);
  for (const auto& r : res) {
    m.mean_reward += r.score;
    for (std::size_t k = 0; k < dim; ++k) m.mean_events[k] += r.events[k];
  }
  m.mean_reward /= episodes;
  for (auto& v : m.mean_events) v /= episodes;
  double var = 0.0;
  for (const auto& r : res) var += (r.score - m.mean_reward) * (r.score - m.mean_reward);
  m.std_reward = std::sqrt(var / episodes);
  return m;
}

// Bolding rules for matchup tables: entries within `k` reward of the row's
// best (Threshold), or within k standard deviations of the best entry
// (StdDevs, using the best entry's std).
enum class BoldMode { None, Threshold, StdDevs };

struct TableCell {
  double mean = 0.0;
  double std = 0.0;
  bool present = false;
};

// Rows are partners, columns are evaluated policies.
struct MatchupTable {
  std::vector<std::string> policies;
  std::vector<std::string> partners;
  std::vector<std::vector<TableCell>> cells;  // [partner][policy]

  static MatchupTable from_results(const std::vector<MatchupResult>& results) {
    MatchupTable t;
    auto slot = [](std::vector<std::string>& v, const std::string& s) {
      auto it = std::find(v.begin(), v.end(), s);
      if (it != v.end()) return static_cast<std::size_t>(it - v.begin());
      v.push_back(s);
      return v.size() - 1;
    };
    for (const auto& r : results) {
      slot(t.policies, r.policy_id);
      std::string row = r.partner_id + (r.position == 1 ? " (pos 2)" : " (pos 1)");
      slot(t.partners, row);
    }
    t.cells.assign(t.partners.size(), std::vector<TableCell>(t.policies.size()));
    for (const auto& r : results) {
      std::size_t c = slot(t.policies, r.policy_id);
      std::size_t row = slot(t.partners, r.partner_id + (r.position == 1 ? " (pos 2)" : " (pos 1)"));
      t.cells[row][c] = {r.mean_reward, r.std_reward, true};
    }
    return t;
  }

  std::vector<std::vector<bool>> bold(BoldMode mode, double k) const {
    std::vector<std::vector<bool>> b(cells.size(), std::vector<bool>(policies.size(), false));
    if (mode == BoldMode::None) return b;
    for (std::size_t r = 0; r < cells.size(); ++r) {
      const TableCell* best = nullptr;
      for (const auto& c : cells[r])
        if (c.present && (!best || c.mean > best->mean)) best = &c;
      if (!best) continue;
      const double margin = mode == BoldMode::Threshold ? k : k * best->std;
      for (std::size_t c = 0; c < cells[r].size(); ++c)
        b[r][c] = cells[r][c].present && best->mean - cells[r][c].mean <= margin;
    }
    return b;
  }

  // Tab-separated, "mean±std" cells; bold entries are wrapped in '*'.
  std::string render(BoldMode mode = BoldMode::None, double k = 5.0, char sep = '\t') const {
    auto b = bold(mode, k);
    std::ostringstream os;
    os << "partner";
    for (const auto& p : policies) os << sep << p;
    os << "\n";
    for (std::size_t r = 0; r < partners.size(); ++r) {
      os << partners[r];
      for (std::size_t c = 0; c < policies.size(); ++c) {
        os << sep;
        const auto& cell = cells[r][c];
        if (!cell.present) {
          os << "-";
          continue;
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2f±%.2f", cell.mean, cell.std);
        os << (b[r][c] ? "*" : "") << buf << (b[r][c] ? "*" : "");
      }
      os << "\n";
    }
    return os.str();
  }
};

inline nlohmann::json to_json(const MatchupResult& m) {
  return {{"policy", m.policy_id},     {"partner", m.partner_id},       {"position", m.position},
          {"episodes", m.episodes},    {"mean_reward", m.mean_reward},  {"std_reward", m.std_reward},
          {"mean_events", m.mean_events}};
}

struct RankingRecord {
  std::string participant;
  std::string layout;
  std::vector<std::string> ranking;  // best first
};

inline void validate_ranking(const std::vector<std::string>& ranking) {
  auto sorted = ranking;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error(Errc::NotAPermutation, "ranking repeats an agent");
}

// (#records ranking A above B - #records ranking B above A) / N.
inline double preference_score(const std::vector<RankingRecord>& records, const std::string& A, const std::string& B) {
  if (records.empty()) throw Error(Errc::InvalidArgument, "no ranking records");
  int a_over_b = 0, b_over_a = 0;
  for (const auto& r : records) {
    validate_ranking(r.ranking);
    auto ia = std::find(r.ranking.begin(), r.ranking.end(), A);
    auto ib = std::find(r.ranking.begin(), r.ranking.end(), B);
    if (ia == r.ranking.end() || ib == r.ranking.end())
      throw Error(Errc::MissingAgent, "record of '" + r.participant + "' does not rank both " + A + " and " + B);
    if (ia < ib)
      ++a_over_b;
    else if (ib < ia)
      ++b_over_a;
  }
  return static_cast<double>(a_over_b - b_over_a) / static_cast<double>(records.size());
}

// Behavior counters derived from logged event records, per seat.
struct BehaviorStats {
  int episodes = 0;
  std::array<double, 2> wrong_placements{};    // onion into a pot holding tomatoes
  std::array<double, 2> correct_placements{};  // tomato into a pot holding only tomatoes
  std::array<double, 2> middle_pot_pickups{};  // soups taken from the middle pot
  std::array<double, 2> onion_passes{};        // onions this seat put down that the partner picked up
  bool has_middle_pot = false;

  std::map<std::string, double> named() const {
    std::map<std::string, double> m;
    m["wrong_placements"] = wrong_placements[0] + wrong_placements[1];
    m["correct_placements"] = correct_placements[0] + correct_placements[1];
    if (has_middle_pot) m["middle_pot_pickups"] = middle_pot_pickups[0] + middle_pot_pickups[1];
    m["onion_passes"] = onion_passes[0] + onion_passes[1];
    return m;
  }
};

// Streaming counter fed one logged step at a time.
class BehaviorCounter {
 public:
  explicit BehaviorCounter(const Layout& L) : L_(L) {
    int mid = L.middle_pot();
    if (mid >= 0) middle_ = L.pots[static_cast<std::size_t>(mid)];
    placer_.assign(static_cast<std::size_t>(L.cells()), -1);
  }

  void begin_episode() {
    std::fill(placer_.begin(), placer_.end(), -1);
    ++totals_.episodes;
  }

  void observe(const std::vector<EventRecord>& events) {
    auto has = [&](int p, Event e, Cell c) {
      return std::any_of(events.begin(), events.end(),
                         [&](const EventRecord& r) { return r.player == p && r.event == e && r.cell == c; });
    };
    for (const auto& r : events) {
      auto p = static_cast<std::size_t>(r.player);
      switch (r.event) {
        case Event::PlaceOnionInPot:
          if (has(r.player, Event::CatastrophicPlacement, r.cell)) totals_.wrong_placements[p] += 1;
          break;
        case Event::PlaceTomatoInPot:
          if (has(r.player, Event::OptimalPlacement, r.cell) && !has(r.player, Event::PlaceTomatoInEmptyPot, r.cell) &&
              L_.tomato_shaping_events)
            totals_.correct_placements[p] += 1;
          break;
        case Event::PickupSoup:
          if (middle_ && r.cell == *middle_) totals_.middle_pot_pickups[p] += 1;
          break;
        case Event::PutOnionOnCounter:
          placer_[static_cast<std::size_t>(L_.index(r.cell))] = r.player;
          break;
        case Event::PickupOnionFromCounter: {
          int& who = placer_[static_cast<std::size_t>(L_.index(r.cell))];
          if (who >= 0 && who != r.player) totals_.onion_passes[static_cast<std::size_t>(who)] += 1;
          who = -1;
          break;
        }
        default:
          break;
      }
    }
  }

  // Per-episode averages.
  BehaviorStats stats() const {
    BehaviorStats s = totals_;
    s.has_middle_pot = middle_.has_value();
    if (s.episodes > 0)
      for (auto* arr : {&s.wrong_placements, &s.correct_placements, &s.middle_pot_pickups, &s.onion_passes})
        for (auto& v : *arr) v /= s.episodes;
    return s;
  }

 private:
  const Layout& L_;
  std::optional<Cell> middle_;
  std::vector<int> placer_;
  BehaviorStats totals_;
};

inline BehaviorStats behavior_stats(const std::vector<Trajectory>& trajectories, const Layout& L) {
  const std::uint64_t h = layout_hash(L);
  BehaviorCounter counter(L);
  for (const auto& t : trajectories) {
    if (t.layout_hash != h)
      throw Error(Errc::UnknownLayout, "trajectory recorded on '" + t.layout_name + "', not '" + L.name + "'");
    counter.begin_episode();
    for (const auto& st : t.steps) counter.observe(st.events);
  }
  return counter.stats();
}

// Soups taken from the middle pot; only defined on layouts with one.
inline double middle_pot_pickups(const std::vector<Trajectory>& trajectories, const Layout& L) {
  if (L.middle_pot() < 0) throw Error(Errc::UnknownLayout, "layout '" + L.name + "' has no middle pot");
  auto s = behavior_stats(trajectories, L);
  return s.middle_pot_pickups[0] + s.middle_pot_pickups[1];
}

// Partner specs: "noop", "random", "script:<name>", or a checkpoint path.
inline PolicyHandle parse_partner_spec(const std::string& spec) {
  if (spec == "noop") return noop_policy();
  if (spec == "random") return random_policy();
  if (spec.rfind("script:", 0) == 0) {
    auto k = script_from_name(spec.substr(7));
    if (!k) throw Error(Errc::UnknownAgent, "unknown script '" + spec.substr(7) + "'");
    return script_policy(*k);
  }
  if (!std::filesystem::exists(spec)) throw Error(Errc::UnknownAgent, "unknown partner '" + spec + "'");
  return policy_from_checkpoint(load_checkpoint(spec));
}

}  // namespace hsp
