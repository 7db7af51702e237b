#include <gtest/gtest.h>

#include "hsp/layout.hpp"
#include "test_util.hpp"

using namespace hsp;
using hsp::testing::layout;

namespace {

const char* kMinimal =
    "XXPXX\n"
    "O1 2D\n"
    "X   S\n"
    "XXXXX\n"
    "\n"
    "ingredients=O3 cook=20 reward=20\n"
    "episode_length=400\n";

Errc parse_error(const std::string& text) {
  try {
    parse_layout(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected parse failure";
  return Errc::InvalidArgument;
}

std::string what(const std::string& text) {
  try {
    parse_layout(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Layout, MinimalWellFormed) {
  Layout L = parse_layout(kMinimal);
  EXPECT_EQ(L.width, 5);
  EXPECT_EQ(L.height, 4);
  EXPECT_EQ(L.starts[0], (Cell{1, 1}));
  EXPECT_EQ(L.starts[1], (Cell{3, 1}));
  ASSERT_EQ(L.recipes.size(), 1u);
  EXPECT_EQ(L.recipes[0].ingredients, (Contents{3, 0}));
  EXPECT_EQ(L.recipes[0].cook_ticks, 20);
  EXPECT_EQ(L.recipes[0].reward, 20.0);
  EXPECT_EQ(L.episode_length, 400);
  ASSERT_EQ(L.pots.size(), 1u);
  EXPECT_EQ(L.pots[0], (Cell{2, 0}));
  EXPECT_EQ(L.tile(Cell{2, 2}), Tile::Floor);
  EXPECT_EQ(L.tile(Cell{4, 2}), Tile::Serving);
  EXPECT_FALSE(L.tomato_shaping_events);
}

TEST(Layout, MissingStart) {
  std::string t = kMinimal;
  t[7] = ' ';
  EXPECT_EQ(parse_error(t), Errc::MissingStart);
  EXPECT_NE(what(t).find("'1'"), std::string::npos);
}

TEST(Layout, NoPot) {
  std::string t = kMinimal;
  t[2] = 'X';
  EXPECT_EQ(parse_error(t), Errc::NoPot);
}

TEST(Layout, RaggedGridNamesRow) {
  std::string t =
      "XXPXX\n"
      "O1 2D\n"
      "X   SX\n"
      "XXXXX\n\ningredients=O3 cook=20 reward=20\nepisode_length=10\n";
  EXPECT_EQ(parse_error(t), Errc::RaggedGrid);
  EXPECT_NE(what(t).find("row 2"), std::string::npos);
}

TEST(Layout, UnknownCharNamesLocation) {
  std::string t = kMinimal;
  t[13] = 'Q';  // row 2, col 1
  EXPECT_EQ(parse_error(t), Errc::UnknownChar);
  EXPECT_NE(what(t).find("row 2, col 1"), std::string::npos);
}

TEST(Layout, RejectsFloorOnBoundaryAndBadOrders) {
  std::string t = kMinimal;
  t[12] = ' ';
  EXPECT_EQ(parse_error(t), Errc::InvalidLayout);
  EXPECT_EQ(parse_error("XXPXX\nO1 2D\nX   S\nXXXXX\n\ningredients=O2 cook=20 reward=20\nepisode_length=4\n"),
            Errc::InvalidLayout);
  EXPECT_EQ(parse_error("XXPXX\nO1 2D\nX   S\nXXXXX\n\nepisode_length=4\n"), Errc::InvalidLayout);
  EXPECT_EQ(parse_error("XXPXX\nO1 2D\nX   X\nXXXXX\n\ningredients=O3\nepisode_length=4\n"), Errc::InvalidLayout);
}

TEST(Layout, FullSizeLayoutsParse) {
  for (const auto& name : hsp::testing::full_size_layouts()) {
    SCOPED_TRACE(name);
    auto L = layout(name);
    EXPECT_EQ(L->name, name);
    EXPECT_GE(L->pots.size(), 1u);
    EXPECT_EQ(L->episode_length, 400);
    EXPECT_TRUE(L->walkable(L->starts[0]));
    EXPECT_TRUE(L->walkable(L->starts[1]));
  }
}

TEST(Layout, DistantTomatoOrders) {
  auto L = layout("distant_tomato");
  EXPECT_TRUE(L->tomato_shaping_events);
  const Recipe* onion = L->match(Contents{3, 0});
  const Recipe* tomato = L->match(Contents{0, 3});
  ASSERT_TRUE(onion && tomato);
  EXPECT_EQ(onion->reward, 20.0);
  EXPECT_EQ(onion->cook_ticks, 20);
  EXPECT_EQ(tomato->reward, 20.0);
  EXPECT_EQ(tomato->cook_ticks, 10);
  EXPECT_EQ(L->match(Contents{2, 1}), nullptr);
  EXPECT_EQ(L->mixed_cook_ticks, 20);
}

TEST(Layout, FormatRoundTrips) {
  for (const auto& name : hsp::testing::all_layouts()) {
    auto L = layout(name);
    Layout again = parse_layout(format_layout(*L));
    EXPECT_EQ(again.tiles, L->tiles) << name;
    EXPECT_EQ(again.recipes, L->recipes) << name;
    EXPECT_EQ(again.starts, L->starts) << name;
    EXPECT_EQ(again.name, L->name) << name;
    EXPECT_EQ(again.tomato_shaping_events, L->tomato_shaping_events) << name;
  }
}

TEST(Layout, BestReachableReward) {
  auto L = layout("distant_tomato");
  EXPECT_EQ(L->best_reachable_reward(Contents{0, 0}), 20.0);
  EXPECT_EQ(L->best_reachable_reward(Contents{2, 0}), 20.0);
  EXPECT_EQ(L->best_reachable_reward(Contents{1, 1}), 0.0);
  auto M = layout("many_orders");
  EXPECT_EQ(M->best_reachable_reward(Contents{1, 1}), 20.0);
  EXPECT_EQ(M->best_reachable_reward(Contents{2, 1}), 0.0);
}

TEST(Layout, MiddleCountersAndPot) {
  auto cc = layout("counter_circuit");
  int middle = 0;
  for (int i = 0; i < cc->cells(); ++i) middle += cc->middle_counter[static_cast<std::size_t>(i)];
  EXPECT_EQ(middle, 4);
  EXPECT_EQ(cc->middle_pot(), -1);
  auto mo = layout("many_orders");
  ASSERT_EQ(mo->pots.size(), 3u);
  EXPECT_EQ(mo->pots[static_cast<std::size_t>(mo->middle_pot())], (Cell{4, 0}));
}
