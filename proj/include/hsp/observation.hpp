#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "hsp/engine.hpp"

namespace hsp {

// Ego-centric observation: channel planes over the grid followed by scalar
// features. Ego and partner channels swap with the player index, so both
// seats share one policy network.
namespace obs {

enum Plane : int {
  EgoPos,
  PartnerPos,
  EgoFacing,       // 4 planes: Up, Down, Left, Right
  PartnerFacing = EgoFacing + 4,
  TileCounter = PartnerFacing + 4,
  TileOnionDispenser,
  TileTomatoDispenser,
  TileDishDispenser,
  TilePot,
  TileServing,
  LooseOnion,      // items on counters or in hands
  LooseTomato,
  LooseDish,
  LooseSoup,
  SoupOnions,      // contents of loose soups, /3
  SoupTomatoes,
  PotOnions,       // pot contents, /3
  PotTomatoes,
  PotCookRemaining,  // remaining / max cook ticks
  PotReady,
  kNumPlanes,
};

inline constexpr int kMaxOrders = 4;
inline constexpr int kHeldSlots = 5;
// ego held one-hot, partner held one-hot, orders (onions, tomatoes, reward), time
inline constexpr int kNumScalars = 2 * kHeldSlots + 3 * kMaxOrders + 1;

}  // namespace obs

inline int observation_size(const Layout& L) { return obs::kNumPlanes * L.cells() + obs::kNumScalars; }

// Index of the normalized-time scalar inside an observation vector.
inline int observation_time_index(const Layout& L) { return observation_size(L) - 1; }

inline void observe_into(const GameState& s, int player, std::span<float> out) {
  const Layout& L = *s.layout;
  const int n = L.cells();
  std::fill(out.begin(), out.end(), 0.0f);
  auto plane = [&](int ch, Cell c) -> float& { return out[static_cast<std::size_t>(ch * n + L.index(c))]; };

  const Player& ego = s.players[static_cast<std::size_t>(player)];
  const Player& partner = s.players[static_cast<std::size_t>(1 - player)];
  plane(obs::EgoPos, ego.pos) = 1.0f;
  plane(obs::PartnerPos, partner.pos) = 1.0f;
  plane(obs::EgoFacing + static_cast<int>(ego.facing), ego.pos) = 1.0f;
  plane(obs::PartnerFacing + static_cast<int>(partner.facing), partner.pos) = 1.0f;

  for (int y = 0; y < L.height; ++y)
    for (int x = 0; x < L.width; ++x) {
      Cell c{x, y};
      switch (L.tile(c)) {
        case Tile::Counter: plane(obs::TileCounter, c) = 1.0f; break;
        case Tile::OnionDispenser: plane(obs::TileOnionDispenser, c) = 1.0f; break;
        case Tile::TomatoDispenser: plane(obs::TileTomatoDispenser, c) = 1.0f; break;
        case Tile::DishDispenser: plane(obs::TileDishDispenser, c) = 1.0f; break;
        case Tile::Pot: plane(obs::TilePot, c) = 1.0f; break;
        case Tile::Serving: plane(obs::TileServing, c) = 1.0f; break;
        case Tile::Floor: break;
      }
    }

  auto loose = [&](const Item& it, Cell c) {
    switch (it.kind) {
      case ItemKind::None: break;
      case ItemKind::Onion: plane(obs::LooseOnion, c) = 1.0f; break;
      case ItemKind::Tomato: plane(obs::LooseTomato, c) = 1.0f; break;
      case ItemKind::Dish: plane(obs::LooseDish, c) = 1.0f; break;
      case ItemKind::Soup:
        plane(obs::LooseSoup, c) = 1.0f;
        plane(obs::SoupOnions, c) = it.soup.onions / 3.0f;
        plane(obs::SoupTomatoes, c) = it.soup.tomatoes / 3.0f;
        break;
    }
  };
  for (int i = 0; i < n; ++i) {
    const Item& it = s.counters[static_cast<std::size_t>(i)];
    if (!it.empty()) loose(it, Cell{i % L.width, i / L.width});
  }
  loose(ego.held, ego.pos);
  loose(partner.held, partner.pos);

  const float max_cook = static_cast<float>(std::max(1, L.mixed_cook_ticks));
  for (std::size_t i = 0; i < s.pots.size(); ++i) {
    const Pot& pot = s.pots[i];
    Cell c = L.pots[i];
    plane(obs::PotOnions, c) = pot.contents.onions / 3.0f;
    plane(obs::PotTomatoes, c) = pot.contents.tomatoes / 3.0f;
    if (pot.cooking()) plane(obs::PotCookRemaining, c) = static_cast<float>(pot.cook_remaining) / max_cook;
    if (pot.ready()) plane(obs::PotReady, c) = 1.0f;
  }

  std::size_t k = static_cast<std::size_t>(obs::kNumPlanes * n);
  out[k + static_cast<std::size_t>(ego.held.kind)] = 1.0f;
  k += obs::kHeldSlots;
  out[k + static_cast<std::size_t>(partner.held.kind)] = 1.0f;
  k += obs::kHeldSlots;
  const float max_reward = static_cast<float>(std::max(1.0, L.max_recipe_reward));
  for (int r = 0; r < obs::kMaxOrders && r < static_cast<int>(L.recipes.size()); ++r) {
    const Recipe& rec = L.recipes[static_cast<std::size_t>(r)];
    out[k + static_cast<std::size_t>(3 * r)] = rec.ingredients.onions / 3.0f;
    out[k + static_cast<std::size_t>(3 * r + 1)] = rec.ingredients.tomatoes / 3.0f;
    out[k + static_cast<std::size_t>(3 * r + 2)] = static_cast<float>(rec.reward) / max_reward;
  }
  k += 3 * obs::kMaxOrders;
  out[k] = static_cast<float>(s.tick) / static_cast<float>(L.episode_length);
}

inline std::vector<float> observe(const GameState& s, int player) {
  std::vector<float> out(static_cast<std::size_t>(observation_size(*s.layout)));
  observe_into(s, player, out);
  return out;
}

}  // namespace hsp
