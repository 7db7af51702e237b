#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "hsp/events.hpp"
#include "hsp/layout.hpp"

namespace hsp {

enum class Action : std::uint8_t { Up, Down, Left, Right, NoOp, Interact };

inline constexpr int kNumActions = 6;
inline constexpr std::array<std::string_view, kNumActions> kActionNames = {"up", "down", "left", "right", "noop",
                                                                           "interact"};

inline std::string_view action_name(Action a) { return kActionNames[static_cast<std::size_t>(a)]; }

inline std::optional<Action> action_from_name(std::string_view s) {
  for (int i = 0; i < kNumActions; ++i)
    if (kActionNames[static_cast<std::size_t>(i)] == s) return static_cast<Action>(i);
  return std::nullopt;
}

// Facing directions share the first four Action values.
enum class Dir : std::uint8_t { Up, Down, Left, Right };

inline Cell neighbor(Cell c, Dir d) {
  switch (d) {
    case Dir::Up: return {c.x, c.y - 1};
    case Dir::Down: return {c.x, c.y + 1};
    case Dir::Left: return {c.x - 1, c.y};
    case Dir::Right: return {c.x + 1, c.y};
  }
  return c;
}

enum class ItemKind : std::uint8_t { None, Onion, Tomato, Dish, Soup };

struct Item {
  ItemKind kind = ItemKind::None;
  Contents soup{};  // only meaningful for Soup

  bool empty() const { return kind == ItemKind::None; }
  friend bool operator==(const Item&, const Item&) = default;
};

inline std::string item_code(const Item& it) {
  switch (it.kind) {
    case ItemKind::None: return "none";
    case ItemKind::Onion: return "onion";
    case ItemKind::Tomato: return "tomato";
    case ItemKind::Dish: return "dish";
    case ItemKind::Soup: return "soup:" + contents_code(it.soup);
  }
  return "?";
}

struct Player {
  Cell pos{};
  Dir facing = Dir::Up;
  Item held{};
  friend bool operator==(const Player&, const Player&) = default;
};

// cook_remaining: -1 idle (filling), >0 cooking, 0 ready.
struct Pot {
  Contents contents{};
  int cook_remaining = -1;

  bool idle() const { return cook_remaining < 0; }
  bool cooking() const { return cook_remaining > 0; }
  bool ready() const { return cook_remaining == 0; }
  friend bool operator==(const Pot&, const Pot&) = default;
};

struct GameState {
  std::shared_ptr<const Layout> layout;
  std::array<Player, 2> players{};
  std::vector<Item> counters;  // one slot per cell; only Counter cells hold items
  std::vector<Pot> pots;       // indexed like layout->pots
  int tick = 0;
  double cumulative_reward = 0.0;
  std::uint64_t seed = 0;

  bool done() const { return tick >= layout->episode_length; }
  const Item& counter_at(Cell c) const { return counters[static_cast<std::size_t>(layout->index(c))]; }

  friend bool operator==(const GameState& a, const GameState& b) {
    return a.layout == b.layout && a.players == b.players && a.counters == b.counters && a.pots == b.pots &&
           a.tick == b.tick && a.cumulative_reward == b.cumulative_reward && a.seed == b.seed;
  }
};

struct StepOutcome {
  GameState next;
  double task_reward = 0.0;
  EventVector events;                       // joint: both players summed
  std::array<EventVector, 2> player_events;  // per-player attribution
  bool done = false;
};

// Results of an in-place step; avoids copying the state in rollout loops.
struct StepInfo {
  double task_reward = 0.0;
  EventVector events;
  std::array<EventVector, 2> player_events;
  bool done = false;
};

inline GameState reset(std::shared_ptr<const Layout> layout, std::uint64_t seed = 0) {
  GameState s;
  s.layout = std::move(layout);
  s.seed = seed;
  for (int p = 0; p < 2; ++p) {
    s.players[static_cast<std::size_t>(p)].pos = s.layout->starts[static_cast<std::size_t>(p)];
    s.players[static_cast<std::size_t>(p)].facing = Dir::Up;
  }
  s.counters.assign(static_cast<std::size_t>(s.layout->cells()), Item{});
  s.pots.assign(s.layout->pots.size(), Pot{});
  return s;
}

inline GameState reset(const Layout& layout, std::uint64_t seed = 0) {
  return reset(std::make_shared<const Layout>(layout), seed);
}

namespace detail {

struct Emitter {
  StepInfo& info;
  std::vector<EventRecord>* records;

  void operator()(int player, Event e, Cell c) {
    info.player_events[static_cast<std::size_t>(player)][e] += 1;
    info.events[e] += 1;
    if (records) records->push_back(EventRecord{player, e, c});
  }
};

inline bool dish_pickup_useful(const GameState& s) {
  for (int i = 0; i < s.layout->cells(); ++i)
    if (s.counters[static_cast<std::size_t>(i)].kind == ItemKind::Dish) return false;
  int dishes = 0;
  for (const auto& p : s.players)
    if (p.held.kind == ItemKind::Dish) ++dishes;
  int soups = 0;
  for (const auto& pot : s.pots)
    if (!pot.contents.empty()) ++soups;
  return dishes < soups;
}

inline bool tomato_pickup_useful(const GameState& s, int player) {
  const Player& partner = s.players[static_cast<std::size_t>(1 - player)];
  if (partner.held.kind == ItemKind::Tomato) return false;
  for (const auto& pot : s.pots)
    if (pot.idle() && pot.contents.size() < 3 && pot.contents.tomatoes > 0 && pot.contents.onions == 0) return true;
  return false;
}

inline Event put_event(ItemKind k) {
  switch (k) {
    case ItemKind::Onion: return Event::PutOnionOnCounter;
    case ItemKind::Tomato: return Event::PutTomatoOnCounter;
    case ItemKind::Dish: return Event::PutDishOnCounter;
    default: return Event::PutSoupOnCounter;
  }
}

inline Event counter_pickup_event(ItemKind k) {
  switch (k) {
    case ItemKind::Onion: return Event::PickupOnionFromCounter;
    case ItemKind::Tomato: return Event::PickupTomatoFromCounter;
    case ItemKind::Dish: return Event::PickupDishFromCounter;
    default: return Event::PickupSoupFromCounter;
  }
}

// Resolves one player's Interact against the tile it faces. Pots that start
// cooking are flagged in `started`.
inline void interact(GameState& s, int p, StepInfo& info, Emitter& emit, std::uint32_t& started) {
  const Layout& L = *s.layout;
  Player& pl = s.players[static_cast<std::size_t>(p)];
  Cell target = neighbor(pl.pos, pl.facing);
  if (!L.in_bounds(target)) return;
  const bool tomato_events = L.tomato_shaping_events;
  switch (L.tile(target)) {
    case Tile::Floor:
      return;
    case Tile::Counter: {
      Item& slot = s.counters[static_cast<std::size_t>(L.index(target))];
      if (!pl.held.empty() && slot.empty()) {
        emit(p, put_event(pl.held.kind), target);
        slot = pl.held;
        pl.held = Item{};
      } else if (pl.held.empty() && !slot.empty()) {
        // Dish pickups from a counter are never useful: a dish was on a counter.
        if (slot.kind == ItemKind::Tomato && tomato_events && tomato_pickup_useful(s, p))
          emit(p, Event::UsefulTomatoPickup, target);
        emit(p, counter_pickup_event(slot.kind), target);
        pl.held = slot;
        slot = Item{};
      }
      return;
    }
    case Tile::OnionDispenser:
      if (pl.held.empty()) {
        pl.held = Item{ItemKind::Onion, {}};
        emit(p, Event::PickupOnionFromDispenser, target);
      }
      return;
    case Tile::TomatoDispenser:
      if (pl.held.empty()) {
        if (tomato_events && tomato_pickup_useful(s, p)) emit(p, Event::UsefulTomatoPickup, target);
        pl.held = Item{ItemKind::Tomato, {}};
        emit(p, Event::PickupTomatoFromDispenser, target);
      }
      return;
    case Tile::DishDispenser:
      if (pl.held.empty()) {
        if (dish_pickup_useful(s)) emit(p, Event::UsefulDishPickup, target);
        pl.held = Item{ItemKind::Dish, {}};
        emit(p, Event::PickupDishFromDispenser, target);
      }
      return;
    case Tile::Pot: {
      int slot_index = L.pot_index[static_cast<std::size_t>(L.index(target))];
      Pot& pot = s.pots[static_cast<std::size_t>(slot_index)];
      const bool ingredient = pl.held.kind == ItemKind::Onion || pl.held.kind == ItemKind::Tomato;
      if (ingredient && pot.idle() && pot.contents.size() < 3) {
        const bool tomato = pl.held.kind == ItemKind::Tomato;
        Contents before = pot.contents;
        Contents after = before;
        if (tomato)
          ++after.tomatoes;
        else
          ++after.onions;
        double best_before = L.best_reachable_reward(before);
        double best_after = L.best_reachable_reward(after);
        emit(p, tomato ? Event::PlaceTomatoInPot : Event::PlaceOnionInPot, target);
        if (best_after > 0) emit(p, Event::ViablePlacement, target);
        const bool optimal = best_after >= best_before;
        if (optimal) emit(p, Event::OptimalPlacement, target);
        if (best_before > 0 && best_after == 0) emit(p, Event::CatastrophicPlacement, target);
        if (best_before == 0) emit(p, Event::UselessPlacement, target);
        if (tomato && tomato_events) {
          if (before.empty()) emit(p, Event::PlaceTomatoInEmptyPot, target);
          if (optimal) emit(p, Event::OptimalTomatoPlacement, target);
        }
        pot.contents = after;
        pl.held = Item{};
        if (after.size() == 3) {
          pot.cook_remaining = L.cook_ticks_for(after);
          started |= 1u << slot_index;
        }
      } else if (pl.held.kind == ItemKind::Dish && pot.ready()) {
        pl.held = Item{ItemKind::Soup, pot.contents};
        pot = Pot{};
        emit(p, Event::PickupSoup, target);
      }
      return;
    }
    case Tile::Serving:
      if (pl.held.kind == ItemKind::Soup) {
        const Recipe* r = L.match(pl.held.soup);
        info.task_reward += r ? r->reward : 0.0;
        pl.held = Item{};
        emit(p, Event::SoupDelivery, target);
      }
      return;
  }
}

}  // namespace detail

// Advances `s` by one tick. Interactions resolve first, in player-index
// order; pots that were already cooking then count down; movement resolves
// last with stand-off on conflicts (same target cell or swap: nobody moves).
inline void step_inplace(GameState& s, Action a0, Action a1, StepInfo& info,
                         std::vector<EventRecord>* records = nullptr) {
  if (s.done())
    throw Error(Errc::SteppedAfterDone, "tick " + std::to_string(s.tick) + " reached episode length " +
                                            std::to_string(s.layout->episode_length));
  const Layout& L = *s.layout;
  info = StepInfo{};
  detail::Emitter emit{info, records};
  const std::array<Action, 2> acts{a0, a1};

  std::uint32_t started = 0;
  for (int p = 0; p < 2; ++p)
    if (acts[static_cast<std::size_t>(p)] == Action::Interact) detail::interact(s, p, info, emit, started);

  for (std::size_t i = 0; i < s.pots.size(); ++i)
    if (s.pots[i].cooking() && !(started & (1u << i))) --s.pots[i].cook_remaining;

  std::array<Cell, 2> next{s.players[0].pos, s.players[1].pos};
  for (int p = 0; p < 2; ++p) {
    Action a = acts[static_cast<std::size_t>(p)];
    if (a == Action::NoOp || a == Action::Interact) continue;
    Player& pl = s.players[static_cast<std::size_t>(p)];
    pl.facing = static_cast<Dir>(a);
    Cell t = neighbor(pl.pos, pl.facing);
    if (L.walkable(t)) next[static_cast<std::size_t>(p)] = t;
  }
  const bool same = next[0] == next[1];
  const bool swap = next[0] == s.players[1].pos && next[1] == s.players[0].pos;
  if (!same && !swap) {
    s.players[0].pos = next[0];
    s.players[1].pos = next[1];
  }

  ++s.tick;
  s.cumulative_reward += info.task_reward;
  info.done = s.done();
}

inline StepOutcome step(const GameState& state, Action a0, Action a1, std::vector<EventRecord>* records = nullptr) {
  StepOutcome out{state, 0.0, {}, {}, false};
  StepInfo info;
  step_inplace(out.next, a0, a1, info, records);
  out.task_reward = info.task_reward;
  out.events = info.events;
  out.player_events = info.player_events;
  out.done = info.done;
  return out;
}

}  // namespace hsp
