#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hsp/layout.hpp"

namespace hsp {

// Canonical game events. The first 20 are emitted on every layout; the last
// three only on layouts with `tomato_shaping_events`.
enum class Event : std::uint8_t {
  PutOnionOnCounter,
  PutTomatoOnCounter,
  PutDishOnCounter,
  PutSoupOnCounter,
  PickupOnionFromCounter,
  PickupTomatoFromCounter,
  PickupDishFromCounter,
  PickupSoupFromCounter,
  PickupOnionFromDispenser,
  PickupTomatoFromDispenser,
  PickupDishFromDispenser,
  PickupSoup,
  PlaceOnionInPot,
  PlaceTomatoInPot,
  ViablePlacement,
  OptimalPlacement,
  CatastrophicPlacement,
  UselessPlacement,
  UsefulDishPickup,
  SoupDelivery,
  PlaceTomatoInEmptyPot,
  OptimalTomatoPlacement,
  UsefulTomatoPickup,
};

inline constexpr std::size_t kNumEvents = 23;
inline constexpr std::size_t kNumBaseEvents = 20;

inline constexpr std::array<std::string_view, kNumEvents> kEventNames = {
    "put_onion_on_counter",
    "put_tomato_on_counter",
    "put_dish_on_counter",
    "put_soup_on_counter",
    "pickup_onion_from_counter",
    "pickup_tomato_from_counter",
    "pickup_dish_from_counter",
    "pickup_soup_from_counter",
    "pickup_onion_from_dispenser",
    "pickup_tomato_from_dispenser",
    "pickup_dish_from_dispenser",
    "pickup_soup",
    "place_onion_in_pot",
    "place_tomato_in_pot",
    "viable_placement",
    "optimal_placement",
    "catastrophic_placement",
    "useless_placement",
    "useful_dish_pickup",
    "soup_delivery",
    "place_tomato_in_empty_pot",
    "optimal_tomato_placement",
    "useful_tomato_pickup",
};

constexpr std::size_t event_index(Event e) { return static_cast<std::size_t>(e); }
constexpr std::string_view event_name(Event e) { return kEventNames[event_index(e)]; }

inline std::optional<Event> event_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumEvents; ++i)
    if (kEventNames[i] == name) return static_cast<Event>(i);
  return std::nullopt;
}

// Number of event dimensions active on a layout.
inline std::size_t event_dim(const Layout& L) { return L.tomato_shaping_events ? kNumEvents : kNumBaseEvents; }

inline std::vector<std::string> event_names(const Layout& L) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < event_dim(L); ++i) out.emplace_back(kEventNames[i]);
  return out;
}

// Per-tick (or per-episode, when summed) event counts, indexed by Event.
// Inactive dimensions on a layout stay zero.
struct EventVector {
  std::array<std::uint32_t, kNumEvents> counts{};

  std::uint32_t operator[](Event e) const { return counts[event_index(e)]; }
  std::uint32_t& operator[](Event e) { return counts[event_index(e)]; }
  std::uint32_t operator[](std::size_t i) const { return counts[i]; }
  std::uint32_t& operator[](std::size_t i) { return counts[i]; }

  EventVector& operator+=(const EventVector& o) {
    for (std::size_t i = 0; i < kNumEvents; ++i) counts[i] += o.counts[i];
    return *this;
  }
  friend EventVector operator+(EventVector a, const EventVector& b) { return a += b; }
  friend bool operator==(const EventVector&, const EventVector&) = default;

  bool zero() const {
    for (auto c : counts)
      if (c) return false;
    return true;
  }
  std::uint32_t total() const {
    std::uint32_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

// One event occurrence with the acting player and the interacted cell. These
// records carry the provenance needed for pass and per-pot statistics.
struct EventRecord {
  int player = 0;
  Event event{};
  Cell cell{};
  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

}  // namespace hsp
