#pragma once

#include <array>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hsp/policy.hpp"

namespace hsp {

enum class ScriptKind {
  OnionEverywhere,
  TomatoEverywhere,
  DishEverywhere,
  OnionPlacement,
  TomatoPlacement,
  Delivery,
  OnionPlacementAndDelivery,
  TomatoPlacementAndDelivery,
  OnionToMiddleCounter,
};

inline constexpr std::array<ScriptKind, 9> kAllScripts = {
    ScriptKind::OnionEverywhere,          ScriptKind::TomatoEverywhere,
    ScriptKind::DishEverywhere,           ScriptKind::OnionPlacement,
    ScriptKind::TomatoPlacement,          ScriptKind::Delivery,
    ScriptKind::OnionPlacementAndDelivery, ScriptKind::TomatoPlacementAndDelivery,
    ScriptKind::OnionToMiddleCounter,
};

inline std::string_view script_name(ScriptKind k) {
  switch (k) {
    case ScriptKind::OnionEverywhere: return "onion_everywhere";
    case ScriptKind::TomatoEverywhere: return "tomato_everywhere";
    case ScriptKind::DishEverywhere: return "dish_everywhere";
    case ScriptKind::OnionPlacement: return "onion_placement";
    case ScriptKind::TomatoPlacement: return "tomato_placement";
    case ScriptKind::Delivery: return "delivery";
    case ScriptKind::OnionPlacementAndDelivery: return "onion_placement_and_delivery";
    case ScriptKind::TomatoPlacementAndDelivery: return "tomato_placement_and_delivery";
    case ScriptKind::OnionToMiddleCounter: return "onion_to_middle_counter";
  }
  return "?";
}

inline std::optional<ScriptKind> script_from_name(std::string_view s) {
  for (auto k : kAllScripts)
    if (script_name(k) == s) return k;
  return std::nullopt;
}

// Events a script may emit through its own actions.
inline std::vector<Event> script_declared_events(ScriptKind k) {
  const std::vector<Event> placement = {Event::ViablePlacement, Event::OptimalPlacement, Event::CatastrophicPlacement,
                                        Event::UselessPlacement};
  const std::vector<Event> delivery = {Event::PickupDishFromDispenser, Event::UsefulDishPickup, Event::PickupSoup,
                                       Event::SoupDelivery};
  std::vector<Event> out;
  auto add = [&](const std::vector<Event>& v) { out.insert(out.end(), v.begin(), v.end()); };
  switch (k) {
    case ScriptKind::OnionEverywhere:
    case ScriptKind::OnionToMiddleCounter:
      add({Event::PickupOnionFromDispenser, Event::PutOnionOnCounter});
      break;
    case ScriptKind::TomatoEverywhere:
      add({Event::PickupTomatoFromDispenser, Event::UsefulTomatoPickup, Event::PutTomatoOnCounter});
      break;
    case ScriptKind::DishEverywhere:
      add({Event::PickupDishFromDispenser, Event::UsefulDishPickup, Event::PutDishOnCounter});
      break;
    case ScriptKind::OnionPlacement:
      add({Event::PickupOnionFromDispenser, Event::PlaceOnionInPot});
      add(placement);
      break;
    case ScriptKind::TomatoPlacement:
      add({Event::PickupTomatoFromDispenser, Event::UsefulTomatoPickup, Event::PlaceTomatoInPot,
           Event::PlaceTomatoInEmptyPot, Event::OptimalTomatoPlacement});
      add(placement);
      break;
    case ScriptKind::Delivery:
      add(delivery);
      break;
    case ScriptKind::OnionPlacementAndDelivery:
      add({Event::PickupOnionFromDispenser, Event::PlaceOnionInPot});
      add(placement);
      add(delivery);
      break;
    case ScriptKind::TomatoPlacementAndDelivery:
      add({Event::PickupTomatoFromDispenser, Event::UsefulTomatoPickup, Event::PlaceTomatoInPot,
           Event::PlaceTomatoInEmptyPot, Event::OptimalTomatoPlacement});
      add(placement);
      add(delivery);
      break;
  }
  return out;
}

namespace detail {

inline constexpr std::array<Dir, 4> kDirOrder = {Dir::Up, Dir::Down, Dir::Left, Dir::Right};

// Breadth-first search over Floor cells from `from`, with `blocked` treated
// as a wall. Neighbors expand in Up, Down, Left, Right order, so the parent
// of every cell is its first-discovered predecessor.
struct PathMap {
  std::vector<int> dist;
  std::vector<int> parent;

  PathMap(const Layout& L, Cell from, Cell blocked) : dist(static_cast<std::size_t>(L.cells()), -1),
                                                      parent(static_cast<std::size_t>(L.cells()), -1) {
    std::deque<Cell> q;
    dist[static_cast<std::size_t>(L.index(from))] = 0;
    q.push_back(from);
    while (!q.empty()) {
      Cell c = q.front();
      q.pop_front();
      for (Dir d : kDirOrder) {
        Cell n = neighbor(c, d);
        if (!L.walkable(n) || n == blocked) continue;
        auto ni = static_cast<std::size_t>(L.index(n));
        if (dist[ni] >= 0) continue;
        dist[ni] = dist[static_cast<std::size_t>(L.index(c))] + 1;
        parent[ni] = L.index(c);
        q.push_back(n);
      }
    }
  }

  int at(const Layout& L, Cell c) const { return dist[static_cast<std::size_t>(L.index(c))]; }

  // First move from the origin toward `to` (which must be reachable and not the origin).
  Dir first_step(const Layout& L, Cell to) const {
    int cur = L.index(to);
    int prev = parent[static_cast<std::size_t>(cur)];
    while (parent[static_cast<std::size_t>(prev)] >= 0) {
      cur = prev;
      prev = parent[static_cast<std::size_t>(cur)];
    }
    Cell a{prev % L.width, prev / L.width}, b{cur % L.width, cur / L.width};
    for (Dir d : kDirOrder)
      if (neighbor(a, d) == b) return d;
    return Dir::Up;
  }
};

}  // namespace detail

// Rule-based partner reading the ground-truth state. Each tick it picks the
// set of tiles it wants to interact with; the nearest reachable one is
// approached along a shortest path and interacted with once faced. With no
// reachable target it walks toward a random reachable floor cell.
class ScriptAgent : public Agent {
 public:
  explicit ScriptAgent(ScriptKind k) : kind_(k) {}

  void begin(int seat, std::uint64_t seed) override {
    seat_ = seat;
    rng_ = Rng(seed);
    wander_.reset();
    middle_target_.reset();
    last_pos_.reset();
    stuck_ = 0;
  }

  Action act(const GameState& s) override {
    const Player& me = s.players[static_cast<std::size_t>(seat_)];
    if (last_pos_ && *last_pos_ == me.pos && last_was_move_)
      ++stuck_;
    else
      stuck_ = 0;
    last_pos_ = me.pos;
    Action a;
    if (stuck_ >= 3) {
      // Repeated stand-offs: break symmetry with one random move.
      a = static_cast<Action>(rng_.uniform(4));
      stuck_ = 0;
    } else {
      a = decide(s);
    }
    last_was_move_ = a != Action::NoOp && a != Action::Interact;
    return a;
  }

  ScriptKind kind() const { return kind_; }

 private:
  enum class Mission { Placement, Delivery };

  Action decide(const GameState& s) {
    const Layout& L = *s.layout;
    const Player& me = s.players[static_cast<std::size_t>(seat_)];
    const Cell partner = s.players[static_cast<std::size_t>(1 - seat_)].pos;
    detail::PathMap paths(L, me.pos, partner);
    std::vector<Cell> targets = goal_targets(s);
    if (auto a = approach(L, me, paths, targets)) {
      wander_.reset();
      return *a;
    }
    return wander(L, me, paths);
  }

  Mission mission(const GameState& s) const {
    return 2 * s.tick < s.layout->episode_length ? Mission::Placement : Mission::Delivery;
  }

  static bool pot_accepts(const Pot& p) { return p.idle() && p.contents.size() < 3; }

  std::vector<Cell> tiles_of(const Layout& L, Tile t) const {
    std::vector<Cell> out;
    for (int i = 0; i < L.cells(); ++i)
      if (L.tile(i) == t) out.push_back(Cell{i % L.width, i / L.width});
    return out;
  }

  std::vector<Cell> empty_counters(const GameState& s, bool middle_only) const {
    const Layout& L = *s.layout;
    std::vector<Cell> out;
    for (int i = 0; i < L.cells(); ++i)
      if (L.tile(i) == Tile::Counter && s.counters[static_cast<std::size_t>(i)].empty() &&
          (!middle_only || L.middle_counter[static_cast<std::size_t>(i)]))
        out.push_back(Cell{i % L.width, i / L.width});
    return out;
  }

  std::vector<Cell> pots_where(const GameState& s, bool (*pred)(const Pot&)) const {
    std::vector<Cell> out;
    for (std::size_t i = 0; i < s.pots.size(); ++i)
      if (pred(s.pots[i])) out.push_back(s.layout->pots[i]);
    return out;
  }

  std::vector<Cell> ingredient_goal(const GameState& s, ItemKind ing) const {
    const Layout& L = *s.layout;
    const Player& me = s.players[static_cast<std::size_t>(seat_)];
    std::vector<Cell> pots = pots_where(s, pot_accepts);
    if (me.held.kind == ing) return pots;
    if (!me.held.empty() || pots.empty()) return {};
    return tiles_of(L, ing == ItemKind::Onion ? Tile::OnionDispenser : Tile::TomatoDispenser);
  }

  std::vector<Cell> delivery_goal(const GameState& s) const {
    const Layout& L = *s.layout;
    const Player& me = s.players[static_cast<std::size_t>(seat_)];
    if (me.held.kind == ItemKind::Soup) return tiles_of(L, Tile::Serving);
    std::vector<Cell> ready = pots_where(s, [](const Pot& p) { return p.ready(); });
    if (me.held.kind == ItemKind::Dish) return ready;
    if (!me.held.empty() || ready.empty()) return {};
    return tiles_of(L, Tile::DishDispenser);
  }

  std::vector<Cell> everywhere_goal(const GameState& s, ItemKind item) const {
    const Layout& L = *s.layout;
    const Player& me = s.players[static_cast<std::size_t>(seat_)];
    std::vector<Cell> counters = empty_counters(s, false);
    if (me.held.kind == item) return counters;
    if (!me.held.empty() || counters.empty()) return {};
    Tile src = item == ItemKind::Onion ? Tile::OnionDispenser
               : item == ItemKind::Tomato ? Tile::TomatoDispenser
                                          : Tile::DishDispenser;
    return tiles_of(L, src);
  }

  std::vector<Cell> middle_goal(const GameState& s) {
    const Layout& L = *s.layout;
    const Player& me = s.players[static_cast<std::size_t>(seat_)];
    std::vector<Cell> free = empty_counters(s, true);
    if (me.held.kind == ItemKind::Onion) {
      if (free.empty()) return {};
      if (!middle_target_ || !s.counter_at(*middle_target_).empty())
        middle_target_ = free[rng_.uniform(free.size())];
      return {*middle_target_};
    }
    middle_target_.reset();
    if (!me.held.empty() || free.empty()) return {};
    return tiles_of(L, Tile::OnionDispenser);
  }

  std::vector<Cell> goal_targets(const GameState& s) {
    const Player& me = s.players[static_cast<std::size_t>(seat_)];
    switch (kind_) {
      case ScriptKind::OnionEverywhere: return everywhere_goal(s, ItemKind::Onion);
      case ScriptKind::TomatoEverywhere: return everywhere_goal(s, ItemKind::Tomato);
      case ScriptKind::DishEverywhere: return everywhere_goal(s, ItemKind::Dish);
      case ScriptKind::OnionPlacement: return ingredient_goal(s, ItemKind::Onion);
      case ScriptKind::TomatoPlacement: return ingredient_goal(s, ItemKind::Tomato);
      case ScriptKind::Delivery: return delivery_goal(s);
      case ScriptKind::OnionPlacementAndDelivery:
      case ScriptKind::TomatoPlacementAndDelivery: {
        ItemKind ing = kind_ == ScriptKind::OnionPlacementAndDelivery ? ItemKind::Onion : ItemKind::Tomato;
        // A held item from the previous half is finished first.
        if (me.held.kind == ing) return ingredient_goal(s, ing);
        if (me.held.kind == ItemKind::Dish || me.held.kind == ItemKind::Soup) return delivery_goal(s);
        return mission(s) == Mission::Placement ? ingredient_goal(s, ing) : delivery_goal(s);
      }
      case ScriptKind::OnionToMiddleCounter: return middle_goal(s);
    }
    return {};
  }

  // Nearest (stand cell, target) pair; ties go to the lower target index,
  // then the lower approach direction.
  std::optional<Action> approach(const Layout& L, const Player& me, const detail::PathMap& paths,
                                 const std::vector<Cell>& targets) const {
    for (Cell t : targets)
      if (neighbor(me.pos, me.facing) == t) return Action::Interact;
    int best = -1;
    Cell best_stand{}, best_target{};
    for (Cell t : targets) {
      for (Dir d : detail::kDirOrder) {
        Cell stand = neighbor(t, d);
        if (!L.walkable(stand)) continue;
        int dd = paths.at(L, stand);
        if (dd < 0) continue;
        if (best < 0 || dd < best) {
          best = dd;
          best_stand = stand;
          best_target = t;
        }
      }
    }
    if (best < 0) return std::nullopt;
    if (best == 0) {
      for (Dir d : detail::kDirOrder)
        if (neighbor(me.pos, d) == best_target) return static_cast<Action>(d);
    }
    return static_cast<Action>(paths.first_step(L, best_stand));
  }

  Action wander(const Layout& L, const Player& me, const detail::PathMap& paths) {
    if (wander_ && (*wander_ == me.pos || paths.at(L, *wander_) < 0)) wander_.reset();
    if (!wander_) {
      std::vector<Cell> reachable;
      for (int i = 0; i < L.cells(); ++i)
        if (paths.dist[static_cast<std::size_t>(i)] > 0) reachable.push_back(Cell{i % L.width, i / L.width});
      if (reachable.empty()) return static_cast<Action>(rng_.uniform(4));
      wander_ = reachable[rng_.uniform(reachable.size())];
    }
    return static_cast<Action>(paths.first_step(L, *wander_));
  }

  ScriptKind kind_;
  int seat_ = 0;
  Rng rng_;
  std::optional<Cell> wander_;
  std::optional<Cell> middle_target_;
  std::optional<Cell> last_pos_;
  bool last_was_move_ = false;
  int stuck_ = 0;
};

inline PolicyHandle script_policy(ScriptKind k) {
  return {PolicyKind::Scripted, "script:" + std::string(script_name(k)),
          [k] { return std::make_unique<ScriptAgent>(k); }};
}

// Mean episode events of a script paired with `partner`, script in seat 0.
inline EventCount event_profile(ScriptKind kind, std::shared_ptr<const Layout> L, const PolicyHandle& partner,
                                int episodes, std::uint64_t seed = 0, int workers = 1) {
  if (episodes < 1) throw Error(Errc::InvalidArgument, "event_profile needs episodes >= 1, got " + std::to_string(episodes));
  return measure_events(std::move(L), script_policy(kind), partner, episodes, seed, 0, workers);
}

// Scripts applicable to a layout: ingredient scripts need the matching
// dispenser and the middle-counter script needs middle counters.
inline std::vector<ScriptKind> scripts_for_layout(const Layout& L) {
  bool onion = false, tomato = false, middle = false;
  for (int i = 0; i < L.cells(); ++i) {
    onion |= L.tile(i) == Tile::OnionDispenser;
    tomato |= L.tile(i) == Tile::TomatoDispenser;
    middle |= L.middle_counter[static_cast<std::size_t>(i)];
  }
  std::vector<ScriptKind> out;
  for (auto k : kAllScripts) {
    bool uses_onion = k == ScriptKind::OnionEverywhere || k == ScriptKind::OnionPlacement ||
                      k == ScriptKind::OnionPlacementAndDelivery || k == ScriptKind::OnionToMiddleCounter;
    bool uses_tomato = k == ScriptKind::TomatoEverywhere || k == ScriptKind::TomatoPlacement ||
                       k == ScriptKind::TomatoPlacementAndDelivery;
    if (uses_onion && !onion) continue;
    if (uses_tomato && !tomato) continue;
    if (k == ScriptKind::OnionToMiddleCounter && !middle) continue;
    out.push_back(k);
  }
  return out;
}

}  // namespace hsp
