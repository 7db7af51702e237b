#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hsp/engine.hpp"

namespace hsp::testing {

inline std::filesystem::path source_dir() { return std::filesystem::path(HSP_SOURCE_DIR); }
inline std::filesystem::path layout_path(const std::string& name) { return source_dir() / "layouts" / (name + ".layout"); }

inline std::shared_ptr<const Layout> layout(const std::string& name) {
  return std::make_shared<const Layout>(load_layout(layout_path(name)));
}

inline const std::vector<std::string>& full_size_layouts() {
  static const std::vector<std::string> names = {"asymmetric_advantages", "coordination_ring", "counter_circuit",
                                                 "distant_tomato", "many_orders"};
  return names;
}

inline const std::vector<std::string>& all_layouts() {
  static const std::vector<std::string> names = {"asymmetric_advantages", "coordination_ring", "counter_circuit",
                                                 "distant_tomato",        "many_orders",       "distant_tomato_mini",
                                                 "many_orders_mini",      "symmetric_mini",  "open_mini"};
  return names;
}

// Places player p at `pos` facing `facing` holding `held`.
inline void put_player(GameState& s, int p, Cell pos, Dir facing, Item held = {}) {
  auto& pl = s.players[static_cast<std::size_t>(p)];
  pl.pos = pos;
  pl.facing = facing;
  pl.held = held;
}

inline Item onion() { return Item{ItemKind::Onion, {}}; }
inline Item tomato() { return Item{ItemKind::Tomato, {}}; }
inline Item dish() { return Item{ItemKind::Dish, {}}; }
inline Item soup(int onions, int tomatoes) {
  return Item{ItemKind::Soup, Contents{static_cast<std::uint8_t>(onions), static_cast<std::uint8_t>(tomatoes)}};
}

inline Pot& pot_at(GameState& s, Cell c) {
  return s.pots[static_cast<std::size_t>(s.layout->pot_index[static_cast<std::size_t>(s.layout->index(c))])];
}

inline Item& counter(GameState& s, Cell c) { return s.counters[static_cast<std::size_t>(s.layout->index(c))]; }

// Player p interacts, the partner idles.
inline StepOutcome interact(const GameState& s, int p = 0) {
  return p == 0 ? step(s, Action::Interact, Action::NoOp) : step(s, Action::NoOp, Action::Interact);
}

}  // namespace hsp::testing
