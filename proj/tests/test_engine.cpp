#include <gtest/gtest.h>

#include "hsp/engine.hpp"
#include "test_util.hpp"

using namespace hsp;
using namespace hsp::testing;

namespace {

// Distant Tomato coordinates used below:
//   onion dispenser (2,4), dish dispenser (3,4), serving (4,4),
//   tomato dispenser (0,1), pots (4,2) and (5,2), counter (4,1).
constexpr Cell kPotA{4, 2};
constexpr Cell kLeftOfPotA{3, 2};
constexpr Cell kBelowPotA{4, 3};

GameState dt_state() { return reset(layout("distant_tomato"), 1); }

int ingredient_units(const GameState& s) {
  auto units = [](const Item& it) {
    if (it.kind == ItemKind::Onion || it.kind == ItemKind::Tomato) return 1;
    if (it.kind == ItemKind::Soup) return it.soup.size();
    return 0;
  };
  int n = 0;
  for (const auto& p : s.players) n += units(p.held);
  for (const auto& c : s.counters) n += units(c);
  for (const auto& pot : s.pots) n += pot.contents.size();
  return n;
}

int dish_units(const GameState& s) {
  auto units = [](const Item& it) { return it.kind == ItemKind::Dish || it.kind == ItemKind::Soup ? 1 : 0; };
  int n = 0;
  for (const auto& p : s.players) n += units(p.held);
  for (const auto& c : s.counters) n += units(c);
  return n;
}

}  // namespace

TEST(Engine, ResetIsDeterministicAndInitial) {
  auto L = layout("distant_tomato");
  GameState a = reset(L, 5), b = reset(L, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.tick, 0);
  EXPECT_EQ(a.cumulative_reward, 0.0);
  for (const auto& pot : a.pots) EXPECT_TRUE(pot.idle());
  for (int p = 0; p < 2; ++p) {
    EXPECT_EQ(a.players[static_cast<std::size_t>(p)].pos, L->starts[static_cast<std::size_t>(p)]);
    EXPECT_TRUE(a.players[static_cast<std::size_t>(p)].held.empty());
  }
  EXPECT_EQ(a.layout->recipes, L->recipes);
}

TEST(Engine, PickupOnionFromDispenser) {
  GameState s = dt_state();
  put_player(s, 0, {2, 3}, Dir::Down);
  auto out = interact(s);
  EXPECT_EQ(out.next.players[0].held.kind, ItemKind::Onion);
  EXPECT_EQ(out.events[Event::PickupOnionFromDispenser], 1u);
  EXPECT_EQ(out.events.total(), 1u);
  EXPECT_EQ(out.task_reward, 0.0);
}

TEST(Engine, AutoCookOnThirdIngredient) {
  GameState s = dt_state();
  put_player(s, 0, kLeftOfPotA, Dir::Right, onion());
  pot_at(s, kPotA).contents = Contents{2, 0};
  auto out = interact(s);
  const Pot& pot = out.next.pots[0];
  EXPECT_EQ(pot.contents, (Contents{3, 0}));
  EXPECT_TRUE(pot.cooking());
  EXPECT_EQ(pot.cook_remaining, 20);
  // Ready after exactly 20 further ticks.
  GameState t = out.next;
  for (int i = 0; i < 19; ++i) {
    t = step(t, Action::NoOp, Action::NoOp).next;
    EXPECT_TRUE(t.pots[0].cooking());
  }
  t = step(t, Action::NoOp, Action::NoOp).next;
  EXPECT_TRUE(t.pots[0].ready());
  t = step(t, Action::NoOp, Action::NoOp).next;
  EXPECT_TRUE(t.pots[0].ready());
}

TEST(Engine, CookTicksPerRecipe) {
  auto cook_for = [](Contents before, Item add) {
    GameState s = dt_state();
    put_player(s, 0, kLeftOfPotA, Dir::Right, add);
    pot_at(s, kPotA).contents = before;
    return interact(s).next.pots[0].cook_remaining;
  };
  EXPECT_EQ(cook_for({2, 0}, onion()), 20);
  EXPECT_EQ(cook_for({0, 2}, tomato()), 10);
  // No recipe matches: cook time is the longest recipe's.
  EXPECT_EQ(cook_for({2, 0}, tomato()), 20);
  EXPECT_EQ(cook_for({1, 1}, tomato()), 20);
}

TEST(Engine, TwoPlayersFillSamePotInOneTick) {
  GameState s = dt_state();
  put_player(s, 0, kLeftOfPotA, Dir::Right, onion());
  put_player(s, 1, kBelowPotA, Dir::Up, onion());
  pot_at(s, kPotA).contents = Contents{1, 0};
  auto out = step(s, Action::Interact, Action::Interact);
  EXPECT_EQ(out.next.pots[0].contents, (Contents{3, 0}));
  EXPECT_EQ(out.next.pots[0].cook_remaining, 20);
  EXPECT_EQ(out.player_events[0][Event::PlaceOnionInPot], 1u);
  EXPECT_EQ(out.player_events[1][Event::PlaceOnionInPot], 1u);

  // A full pot rejects the second player's ingredient.
  pot_at(s, kPotA).contents = Contents{2, 0};
  out = step(s, Action::Interact, Action::Interact);
  EXPECT_EQ(out.next.pots[0].contents, (Contents{3, 0}));
  EXPECT_EQ(out.next.players[1].held.kind, ItemKind::Onion);
  EXPECT_EQ(out.player_events[1].total(), 0u);
}

TEST(Engine, DeliveryRewards) {
  auto deliver = [](Item soup_item) {
    GameState s = dt_state();
    put_player(s, 0, {4, 3}, Dir::Down, soup_item);
    return interact(s);
  };
  auto onion_soup = deliver(soup(3, 0));
  EXPECT_EQ(onion_soup.task_reward, 20.0);
  EXPECT_EQ(onion_soup.events[Event::SoupDelivery], 1u);
  EXPECT_TRUE(onion_soup.next.players[0].held.empty());
  EXPECT_EQ(onion_soup.next.cumulative_reward, 20.0);
  EXPECT_EQ(deliver(soup(0, 3)).task_reward, 20.0);
  auto mixed = deliver(soup(2, 1));
  EXPECT_EQ(mixed.task_reward, 0.0);
  EXPECT_EQ(mixed.events[Event::SoupDelivery], 1u);
}

TEST(Engine, SoupPickupOnlyWhenReady) {
  GameState s = dt_state();
  put_player(s, 0, kLeftOfPotA, Dir::Right, dish());
  pot_at(s, kPotA) = Pot{Contents{3, 0}, 4};
  auto out = interact(s);
  EXPECT_EQ(out.next.players[0].held.kind, ItemKind::Dish);
  EXPECT_EQ(out.events.total(), 0u);
  EXPECT_EQ(out.next.pots[0].cook_remaining, 3);

  pot_at(s, kPotA) = Pot{Contents{3, 0}, 0};
  out = interact(s);
  EXPECT_EQ(out.next.players[0].held, soup(3, 0));
  EXPECT_TRUE(out.next.pots[0].idle());
  EXPECT_TRUE(out.next.pots[0].contents.empty());
  EXPECT_EQ(out.events[Event::PickupSoup], 1u);
}

TEST(Engine, InvalidInteractIsSilentNoop) {
  GameState s = dt_state();
  put_player(s, 0, {4, 3}, Dir::Down, onion());  // onion at serving
  auto out = interact(s);
  EXPECT_EQ(out.next.players, s.players);
  EXPECT_TRUE(out.events.zero());

  put_player(s, 0, {2, 3}, Dir::Down, dish());  // full hands at dispenser
  out = interact(s);
  EXPECT_EQ(out.next.players[0].held.kind, ItemKind::Dish);
  EXPECT_TRUE(out.events.zero());

  put_player(s, 0, {2, 3}, Dir::Right);  // facing floor
  out = interact(s);
  EXPECT_TRUE(out.events.zero());
  EXPECT_EQ(out.next.counters, s.counters);
}

TEST(Engine, CollisionStandOff) {
  GameState s = dt_state();
  put_player(s, 0, {1, 3}, Dir::Up);
  put_player(s, 1, {3, 3}, Dir::Up);
  auto out = step(s, Action::Right, Action::Left);  // same target (2,3)
  EXPECT_EQ(out.next.players[0].pos, (Cell{1, 3}));
  EXPECT_EQ(out.next.players[1].pos, (Cell{3, 3}));
  EXPECT_EQ(out.next.players[0].facing, Dir::Right);
  EXPECT_EQ(out.next.players[1].facing, Dir::Left);

  put_player(s, 1, {2, 3}, Dir::Up);
  out = step(s, Action::Right, Action::Left);  // swap
  EXPECT_EQ(out.next.players[0].pos, (Cell{1, 3}));
  EXPECT_EQ(out.next.players[1].pos, (Cell{2, 3}));

  out = step(s, Action::Right, Action::NoOp);  // into a standing player
  EXPECT_EQ(out.next.players[0].pos, (Cell{1, 3}));

  out = step(s, Action::Right, Action::Right);  // follow the leader
  EXPECT_EQ(out.next.players[0].pos, (Cell{2, 3}));
  EXPECT_EQ(out.next.players[1].pos, (Cell{3, 3}));

  out = step(s, Action::Down, Action::NoOp);  // into a wall: turn only
  EXPECT_EQ(out.next.players[0].pos, (Cell{1, 3}));
  EXPECT_EQ(out.next.players[0].facing, Dir::Down);
}

TEST(Engine, SteppedAfterDone) {
  GameState s = reset(layout("symmetric_mini"), 0);
  for (int t = 0; t < s.layout->episode_length; ++t) {
    auto info = step(s, Action::NoOp, Action::NoOp);
    EXPECT_EQ(info.done, t + 1 == s.layout->episode_length);
    s = info.next;
  }
  try {
    step(s, Action::NoOp, Action::NoOp);
    FAIL() << "expected SteppedAfterDone";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SteppedAfterDone);
  }
}

TEST(Engine, DeterministicTraces) {
  auto L = layout("many_orders");
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    GameState s = reset(L, seed);
    std::vector<EventRecord> recs;
    std::vector<double> rewards;
    while (!s.done()) {
      auto a0 = static_cast<Action>(rng.uniform(kNumActions));
      auto a1 = static_cast<Action>(rng.uniform(kNumActions));
      StepInfo info;
      step_inplace(s, a0, a1, info, &recs);
      rewards.push_back(info.task_reward);
    }
    return std::make_tuple(s, recs, rewards);
  };
  EXPECT_EQ(run(3), run(3));
}

// Random rollouts checking the state invariants, item conservation and
// pot monotonicity on every layout.
TEST(Engine, RandomRolloutInvariants) {
  for (const auto& name : all_layouts()) {
    SCOPED_TRACE(name);
    auto L = layout(name);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      GameState s = reset(L, seed);
      double total = 0.0;
      while (!s.done()) {
        // Bias toward Interact so that items actually move.
        auto pick = [&] { return rng.uniform01() < 0.3 ? Action::Interact : static_cast<Action>(rng.uniform(5)); };
        Action a0 = pick(), a1 = pick();
        GameState before = s;
        StepInfo info;
        step_inplace(s, a0, a1, info);
        total += info.task_reward;

        ASSERT_NE(s.players[0].pos, s.players[1].pos);
        for (const auto& p : s.players) ASSERT_TRUE(L->walkable(p.pos));
        for (std::size_t i = 0; i < s.pots.size(); ++i) {
          const Pot& pot = s.pots[i];
          const Pot& old = before.pots[i];
          ASSERT_LE(pot.contents.size(), 3);
          if (pot.contents.size() == 3) {
            ASSERT_FALSE(pot.idle());
          }
          if (old.cooking() && old.cook_remaining > 0) {
            ASSERT_EQ(pot.cook_remaining, old.cook_remaining - 1);
            ASSERT_EQ(pot.contents, old.contents);
          }
        }
        for (int i = 0; i < L->cells(); ++i) {
          if (L->tile(i) != Tile::Counter) {
            ASSERT_TRUE(s.counters[static_cast<std::size_t>(i)].empty());
          }
        }

        const auto& ev = info.events;
        int created = static_cast<int>(ev[Event::PickupOnionFromDispenser] + ev[Event::PickupTomatoFromDispenser]);
        int delivered = static_cast<int>(ev[Event::SoupDelivery]);
        ASSERT_EQ(ingredient_units(s) - ingredient_units(before), created - 3 * delivered);
        ASSERT_EQ(dish_units(s) - dish_units(before),
                  static_cast<int>(ev[Event::PickupDishFromDispenser]) - delivered);
      }
      EXPECT_EQ(s.cumulative_reward, total);
      EXPECT_EQ(s.tick, L->episode_length);
    }
  }
}
