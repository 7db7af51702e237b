#include <gtest/gtest.h>

#include <set>
#include <tuple>

#include "hsp/scripted.hpp"
#include "test_util.hpp"

using namespace hsp;
using namespace hsp::testing;

namespace {

struct Rollout {
  std::vector<GameState> states;
  std::vector<Action> actions;  // seat-0 actions
  Trajectory traj;
  EpisodeResult result;
};

Rollout roll(std::shared_ptr<const Layout> L, Agent& a0, Agent& a1, std::uint64_t seed) {
  Rollout r;
  GameState s = reset(L, seed);
  a0.begin(0, agent_seed(seed, 0));
  a1.begin(1, agent_seed(seed, 1));
  TrajectoryRecorder rec(*L, seed);
  StepInfo info;
  while (!s.done()) {
    r.states.push_back(s);
    Action x = a0.act(s), y = a1.act(s);
    r.actions.push_back(x);
    std::vector<EventRecord> evs;
    int tick = s.tick;
    step_inplace(s, x, y, info, &evs);
    r.result.events += info.events;
    r.result.player_events[0] += info.player_events[0];
    r.result.player_events[1] += info.player_events[1];
    rec.record(tick, x, y, info.task_reward, evs);
  }
  r.result.score = s.cumulative_reward;
  r.traj = rec.take();
  return r;
}

}  // namespace

TEST(Scripted, NamesRoundTrip) {
  for (auto k : kAllScripts) EXPECT_EQ(script_from_name(script_name(k)), k);
  EXPECT_FALSE(script_from_name("juggler").has_value());
}

TEST(Scripted, DeliveryWithoutReadySoupOnlyWanders) {
  for (const auto& name : all_layouts()) {
    auto L = layout(name);
    ScriptAgent a(ScriptKind::Delivery);
    FixedActionAgent noop(Action::NoOp);
    Rollout r = roll(L, a, noop, 3);
    EXPECT_EQ(r.result.score, 0.0) << name;
    int moves = 0;
    for (Action x : r.actions) {
      EXPECT_NE(x, Action::Interact) << name;
      moves += x != Action::NoOp;
    }
    EXPECT_EQ(moves, static_cast<int>(r.actions.size())) << name;
  }
}

TEST(Scripted, OnionPlacementInteractsWhenFacingFillablePot) {
  auto L = layout("distant_tomato");
  GameState s = reset(L, 0);
  put_player(s, 0, Cell{3, 2}, Dir::Right, onion());
  pot_at(s, Cell{4, 2}).contents = Contents{2, 0};
  ScriptAgent a(ScriptKind::OnionPlacement);
  a.begin(0, 1);
  EXPECT_EQ(a.act(s), Action::Interact);
  // Facing away: turn toward the pot first.
  put_player(s, 0, Cell{3, 2}, Dir::Up, onion());
  a.begin(0, 1);
  EXPECT_EQ(a.act(s), Action::Right);
}

TEST(Scripted, PathTiesFollowDirectionOrder) {
  // From (2,2) in an open room both Up and Left reach (1,1) in two moves.
  auto L = std::make_shared<const Layout>(parse_layout("XXXXX\nX   X\nX 1 X\nX  2X\nXPSOX\nXXDXX\n\ningredients=O3 cook=20 reward=20\nepisode_length=20\n"));
  GameState s = reset(L, 0);
  detail::PathMap pm(*L, Cell{2, 2}, Cell{3, 3});
  EXPECT_EQ(pm.at(*L, Cell{1, 1}), 2);
  EXPECT_EQ(pm.first_step(*L, Cell{1, 1}), Dir::Up);
  EXPECT_EQ(pm.first_step(*L, Cell{3, 1}), Dir::Up);
  EXPECT_EQ(pm.first_step(*L, Cell{1, 3}), Dir::Down);
  EXPECT_EQ(pm.at(*L, Cell{3, 3}), -1);
}

TEST(Scripted, OnionToMiddleCounterUsesOnlyMiddleCounters) {
  auto L = layout("counter_circuit");
  int placed = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ScriptAgent a(ScriptKind::OnionToMiddleCounter);
    RandomAgent partner;
    Rollout r = roll(L, a, partner, seed);
    for (const auto& st : r.traj.steps)
      for (const auto& ev : st.events)
        if (ev.player == 0 && ev.event == Event::PutOnionOnCounter) {
          EXPECT_TRUE(L->middle_counter[static_cast<std::size_t>(L->index(ev.cell))])
              << "seed " << seed << " cell " << ev.cell.x << "," << ev.cell.y;
          ++placed;
        }
  }
  EXPECT_GT(placed, 100);
}

TEST(Scripted, EventsStayWithinDeclaredSet) {
  for (const auto& name : all_layouts()) {
    auto L = layout(name);
    for (auto k : scripts_for_layout(*L)) {
      auto declared = script_declared_events(k);
      std::set<Event> allowed(declared.begin(), declared.end());
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        ScriptAgent a(k);
        std::unique_ptr<Agent> partner;
        if (seed % 2)
          partner = std::make_unique<RandomAgent>();
        else
          partner = std::make_unique<ScriptAgent>(ScriptKind::Delivery);
        Rollout r = roll(L, a, *partner, seed);
        for (std::size_t e = 0; e < kNumEvents; ++e)
          if (r.result.player_events[0][e] > 0) {
            EXPECT_TRUE(allowed.count(static_cast<Event>(e)))
                << name << " " << script_name(k) << " emitted " << kEventNames[e];
          }
      }
    }
  }
}

TEST(Scripted, NoLongIdenticalPoseRuns) {
  for (const auto& name : all_layouts()) {
    auto L = layout(name);
    for (auto k : scripts_for_layout(*L)) {
      ScriptAgent a(k);
      RandomAgent partner;
      Rollout r = roll(L, a, partner, 17);
      int run = 1, longest = 1;
      for (std::size_t t = 1; t < r.states.size(); ++t) {
        const auto& p = r.states[t].players[0];
        const auto& q = r.states[t - 1].players[0];
        bool same = p.pos == q.pos && p.facing == q.facing && p.held == q.held;
        run = same ? run + 1 : 1;
        longest = std::max(longest, run);
      }
      EXPECT_LE(longest, 50) << name << " " << script_name(k);
    }
  }
}

TEST(Scripted, PlacementAndDeliveryAlternateByEpisodeHalf) {
  auto L = layout("distant_tomato");
  ScriptAgent a(ScriptKind::TomatoPlacementAndDelivery);
  ScriptAgent helper(ScriptKind::OnionPlacementAndDelivery);
  Rollout r = roll(L, a, helper, 5);
  int late_placements = 0, early_deliveries = 0, late_deliveries = 0;
  for (const auto& st : r.traj.steps)
    for (const auto& ev : st.events) {
      if (ev.player != 0) continue;
      bool late = 2 * st.tick >= L->episode_length;
      if (ev.event == Event::PlaceTomatoInPot && late) ++late_placements;
      if (ev.event == Event::PickupDishFromDispenser) (late ? late_deliveries : early_deliveries)++;
    }
  EXPECT_LE(late_placements, 1);
  EXPECT_EQ(early_deliveries, 0);
  EXPECT_GT(r.result.player_events[0][Event::PlaceTomatoInPot], 0u);
}

TEST(Scripted, CooperatingScriptsScore) {
  auto L = layout("coordination_ring");
  ScriptAgent a(ScriptKind::OnionPlacement);
  ScriptAgent b(ScriptKind::Delivery);
  Rollout r = roll(L, a, b, 1);
  EXPECT_GE(r.result.score, 40.0);
}

TEST(Scripted, EventProfile) {
  auto L = layout("many_orders");
  EventCount ec = event_profile(ScriptKind::OnionPlacement, L, random_policy(), 3, 9);
  EXPECT_EQ(ec.own[event_index(Event::PlaceTomatoInPot)], 0.0);
  EXPECT_GT(ec.own[event_index(Event::PlaceOnionInPot)], 0.0);
  for (const auto& name : all_layouts()) {
    EventCount e = event_profile(ScriptKind::OnionPlacement, layout(name), noop_policy(), 1, 2);
    EXPECT_EQ(e.own[event_index(Event::PlaceTomatoInPot)], 0.0) << name;
  }
  // Deterministic partner: the profile over one episode is that rollout.
  EventCount one = event_profile(ScriptKind::Delivery, L, noop_policy(), 1, 4);
  EpisodeResult direct = run_episode(L, script_policy(ScriptKind::Delivery), noop_policy(), derive_seed(4, 0));
  EXPECT_EQ(one.joint, to_doubles(direct.events, event_dim(*L)));
  EXPECT_THROW(event_profile(ScriptKind::Delivery, L, noop_policy(), 0), Error);
}
