#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hsp/core.hpp"

namespace hsp {

enum class Tile : std::uint8_t {
  Floor,
  Counter,
  OnionDispenser,
  TomatoDispenser,
  DishDispenser,
  Pot,
  Serving,
};

inline constexpr int kNumTileKinds = 7;

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

// Soup contents as ingredient counts. Orders are always exactly three items.
struct Contents {
  std::uint8_t onions = 0;
  std::uint8_t tomatoes = 0;

  int size() const { return onions + tomatoes; }
  bool empty() const { return size() == 0; }
  friend bool operator==(const Contents&, const Contents&) = default;
};

// True if `part` can be completed into `whole` by adding ingredients.
inline bool is_subset(const Contents& part, const Contents& whole) {
  return part.onions <= whole.onions && part.tomatoes <= whole.tomatoes;
}

inline std::string contents_code(const Contents& c) {
  if (c.empty()) return "-";
  std::string s;
  if (c.onions) s += "O" + std::to_string(c.onions);
  if (c.tomatoes) s += "T" + std::to_string(c.tomatoes);
  return s;
}

// Parses "O3", "T3", "O1T2"; the inverse of contents_code.
inline Contents parse_contents(std::string_view code) {
  Contents c;
  std::size_t i = 0;
  if (code == "-") return c;
  while (i < code.size()) {
    char k = code[i++];
    std::size_t j = i;
    while (j < code.size() && code[j] >= '0' && code[j] <= '9') ++j;
    if (j == i) throw Error(Errc::ParseError, "ingredient count missing in '" + std::string(code) + "'");
    int n = std::stoi(std::string(code.substr(i, j - i)));
    if (n < 0 || n > 3) throw Error(Errc::ParseError, "ingredient count out of range in '" + std::string(code) + "'");
    if (k == 'O')
      c.onions = static_cast<std::uint8_t>(c.onions + n);
    else if (k == 'T')
      c.tomatoes = static_cast<std::uint8_t>(c.tomatoes + n);
    else
      throw Error(Errc::ParseError, "unknown ingredient '" + std::string(1, k) + "'");
    i = j;
  }
  return c;
}

struct Recipe {
  Contents ingredients;
  int cook_ticks = 20;
  double reward = 20.0;
  friend bool operator==(const Recipe&, const Recipe&) = default;
};

struct Layout {
  std::string name;
  int width = 0;
  int height = 0;
  std::vector<Tile> tiles;
  std::array<Cell, 2> starts{};
  std::vector<Recipe> recipes;
  int episode_length = 400;
  // Enables the three tomato-specific shaping events.
  bool tomato_shaping_events = false;

  // Derived lookups filled by finalize().
  std::vector<Cell> pots;
  std::vector<int> pot_index;  // cell index -> pot slot or -1
  std::vector<bool> middle_counter;
  int mixed_cook_ticks = 20;
  double max_recipe_reward = 0.0;

  int index(Cell c) const { return c.y * width + c.x; }
  int index(int x, int y) const { return y * width + x; }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  Tile tile(Cell c) const { return tiles[static_cast<std::size_t>(index(c))]; }
  Tile tile(int idx) const { return tiles[static_cast<std::size_t>(idx)]; }
  int cells() const { return width * height; }
  bool walkable(Cell c) const { return in_bounds(c) && tile(c) == Tile::Floor; }

  // Recipe whose ingredients exactly match, or nullptr.
  const Recipe* match(const Contents& c) const {
    for (const auto& r : recipes)
      if (r.ingredients == c) return &r;
    return nullptr;
  }

  int cook_ticks_for(const Contents& c) const {
    const Recipe* r = match(c);
    return r ? r->cook_ticks : mixed_cook_ticks;
  }

  // Best order reward still reachable from pot contents `c` by adding items.
  double best_reachable_reward(const Contents& c) const {
    double best = 0.0;
    for (const auto& r : recipes)
      if (is_subset(c, r.ingredients)) best = std::max(best, r.reward);
    return best;
  }

  // Pot slot sitting in the middle column of three or more pots, or -1.
  int middle_pot() const {
    if (pots.size() < 3 || pots.size() % 2 == 0) return -1;
    std::vector<int> order(pots.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const Cell& ca = pots[static_cast<std::size_t>(a)];
      const Cell& cb = pots[static_cast<std::size_t>(b)];
      return ca.x != cb.x ? ca.x < cb.x : ca.y < cb.y;
    });
    return order[order.size() / 2];
  }

  void finalize() {
    pots.clear();
    pot_index.assign(static_cast<std::size_t>(cells()), -1);
    middle_counter.assign(static_cast<std::size_t>(cells()), false);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        Tile t = tile(Cell{x, y});
        if (t == Tile::Pot) {
          pot_index[static_cast<std::size_t>(index(x, y))] = static_cast<int>(pots.size());
          pots.push_back(Cell{x, y});
        }
        bool border = x == 0 || y == 0 || x == width - 1 || y == height - 1;
        if (t == Tile::Counter && !border) middle_counter[static_cast<std::size_t>(index(x, y))] = true;
      }
    mixed_cook_ticks = 1;
    max_recipe_reward = 0.0;
    for (const auto& r : recipes) {
      mixed_cook_ticks = std::max(mixed_cook_ticks, r.cook_ticks);
      max_recipe_reward = std::max(max_recipe_reward, r.reward);
    }
  }
};

namespace detail {

inline std::string at(int row, int col) {
  return "row " + std::to_string(row) + ", col " + std::to_string(col);
}

inline Recipe parse_order_line(const std::string& line, int lineno) {
  Recipe r;
  bool have_ingredients = false;
  for (const auto& tok : split_ws(line)) {
    auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": expected key=value, got '" + tok + "'");
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    try {
      if (key == "ingredients") {
        r.ingredients = parse_contents(val);
        have_ingredients = true;
      } else if (key == "cook") {
        r.cook_ticks = std::stoi(val);
      } else if (key == "reward") {
        r.reward = std::stod(val);
      } else {
        throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": unknown order key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad value '" + val + "'");
    }
  }
  if (!have_ingredients) throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": order without ingredients");
  if (r.ingredients.size() != 3)
    throw Error(Errc::InvalidLayout, "line " + std::to_string(lineno) + ": orders must have exactly 3 ingredients");
  if (r.cook_ticks <= 0) throw Error(Errc::InvalidLayout, "line " + std::to_string(lineno) + ": cook ticks must be positive");
  if (r.reward < 0) throw Error(Errc::InvalidLayout, "line " + std::to_string(lineno) + ": reward must be non-negative");
  return r;
}

}  // namespace detail

// Parses the layout text format:
//
//   <ASCII grid>          X counter, O onion, T tomato, D dish, P pot,
//                         S serving, ' ' floor, 1/2 start cells
//   <blank line>
//   ingredients=O3 cook=20 reward=20     (one line per order)
//   episode_length=400
//   flags=tomato_shaping_events          (optional)
//   name=<id>                            (optional)
inline Layout parse_layout(std::string_view text, std::string name = "") {
  std::vector<std::string> lines;
  {
    std::string cur;
    for (char c : text) {
      if (c == '\n') {
        if (!cur.empty() && cur.back() == '\r') cur.pop_back();
        lines.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) lines.push_back(std::move(cur));
  }
  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]).empty()) ++i;
  std::vector<std::string> grid;
  while (i < lines.size() && !trim(lines[i]).empty()) grid.push_back(lines[i++]);
  if (grid.empty()) throw Error(Errc::InvalidLayout, "empty grid");

  Layout L;
  L.name = std::move(name);
  L.height = static_cast<int>(grid.size());
  L.width = static_cast<int>(grid[0].size());
  for (std::size_t r = 0; r < grid.size(); ++r)
    if (static_cast<int>(grid[r].size()) != L.width)
      throw Error(Errc::RaggedGrid, detail::at(static_cast<int>(r), static_cast<int>(grid[r].size())) + ": row length " +
                                        std::to_string(grid[r].size()) + " != " + std::to_string(L.width));

  L.tiles.assign(static_cast<std::size_t>(L.width * L.height), Tile::Floor);
  bool seen[2] = {false, false};
  bool any_dispenser = false, any_pot = false, any_serving = false;
  for (int y = 0; y < L.height; ++y) {
    for (int x = 0; x < L.width; ++x) {
      char c = grid[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
      Tile t;
      switch (c) {
        case ' ': t = Tile::Floor; break;
        case 'X': t = Tile::Counter; break;
        case 'O': t = Tile::OnionDispenser; any_dispenser = true; break;
        case 'T': t = Tile::TomatoDispenser; any_dispenser = true; break;
        case 'D': t = Tile::DishDispenser; any_dispenser = true; break;
        case 'P': t = Tile::Pot; any_pot = true; break;
        case 'S': t = Tile::Serving; any_serving = true; break;
        case '1':
        case '2': {
          int p = c - '1';
          if (seen[p]) throw Error(Errc::InvalidLayout, detail::at(y, x) + ": duplicate start marker '" + std::string(1, c) + "'");
          seen[p] = true;
          L.starts[static_cast<std::size_t>(p)] = Cell{x, y};
          t = Tile::Floor;
          break;
        }
        default:
          throw Error(Errc::UnknownChar, detail::at(y, x) + ": unknown character '" + std::string(1, c) + "'");
      }
      L.tiles[static_cast<std::size_t>(L.index(x, y))] = t;
      bool border = x == 0 || y == 0 || x == L.width - 1 || y == L.height - 1;
      if (border && t == Tile::Floor)
        throw Error(Errc::InvalidLayout, detail::at(y, x) + ": grid boundary must not be floor");
    }
  }
  for (int p = 0; p < 2; ++p)
    if (!seen[p]) throw Error(Errc::MissingStart, "no start marker '" + std::to_string(p + 1) + "' in grid");
  if (!any_pot) throw Error(Errc::NoPot, "grid has no 'P' cell");
  if (std::count(L.tiles.begin(), L.tiles.end(), Tile::Pot) > 32) throw Error(Errc::InvalidLayout, "more than 32 pots");
  if (!any_serving) throw Error(Errc::InvalidLayout, "grid has no 'S' cell");
  if (!any_dispenser) throw Error(Errc::InvalidLayout, "grid has no dispenser");

  bool have_length = false;
  for (; i < lines.size(); ++i) {
    std::string line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    int lineno = static_cast<int>(i) + 1;
    if (line.rfind("ingredients=", 0) == 0) {
      L.recipes.push_back(detail::parse_order_line(line, lineno));
    } else if (line.rfind("episode_length=", 0) == 0) {
      try {
        L.episode_length = std::stoi(line.substr(15));
      } catch (const std::logic_error&) {
        throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": bad episode_length");
      }
      if (L.episode_length <= 0) throw Error(Errc::InvalidLayout, "episode_length must be positive");
      have_length = true;
    } else if (line.rfind("flags=", 0) == 0) {
      for (const auto& f : split(line.substr(6), ',')) {
        if (trim(f) == "tomato_shaping_events")
          L.tomato_shaping_events = true;
        else if (!trim(f).empty())
          throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": unknown flag '" + f + "'");
      }
    } else if (line.rfind("name=", 0) == 0) {
      L.name = trim(line.substr(5));
    } else {
      throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": unrecognized line '" + line + "'");
    }
  }
  if (L.recipes.empty()) throw Error(Errc::InvalidLayout, "layout has no orders");
  if (!have_length) throw Error(Errc::InvalidLayout, "missing episode_length");
  L.finalize();
  return L;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Layout load_layout(const std::filesystem::path& path) {
  return parse_layout(read_file(path), path.stem().string());
}

// Serializes a layout back into the file format (round-trips through parse_layout).
inline std::string format_layout(const Layout& L) {
  std::string out;
  for (int y = 0; y < L.height; ++y) {
    for (int x = 0; x < L.width; ++x) {
      Cell c{x, y};
      if (c == L.starts[0]) {
        out += '1';
        continue;
      }
      if (c == L.starts[1]) {
        out += '2';
        continue;
      }
      switch (L.tile(c)) {
        case Tile::Floor: out += ' '; break;
        case Tile::Counter: out += 'X'; break;
        case Tile::OnionDispenser: out += 'O'; break;
        case Tile::TomatoDispenser: out += 'T'; break;
        case Tile::DishDispenser: out += 'D'; break;
        case Tile::Pot: out += 'P'; break;
        case Tile::Serving: out += 'S'; break;
      }
    }
    out += '\n';
  }
  out += '\n';
  for (const auto& r : L.recipes) {
    std::ostringstream s;
    s << "ingredients=" << contents_code(r.ingredients) << " cook=" << r.cook_ticks << " reward=" << r.reward << '\n';
    out += s.str();
  }
  out += "episode_length=" + std::to_string(L.episode_length) + '\n';
  if (L.tomato_shaping_events) out += "flags=tomato_shaping_events\n";
  if (!L.name.empty()) out += "name=" + L.name + '\n';
  return out;
}

}  // namespace hsp
