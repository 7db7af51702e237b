#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "hsp/eval.hpp"

namespace hsp {

// ---------------------------------------------------------------- sessions

struct TickPolicy {
  int human_input_ms = 150;  // tick period; the human action window
  int ai_idle_steps = 7;     // AI acts on every (ai_idle_steps + 1)-th tick

  bool ai_duty(int tick) const { return (tick + 1) % (ai_idle_steps + 1) == 0; }
};

enum class Stage { WarmUp, Exploitation, Done };

inline std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::WarmUp: return "warmup";
    case Stage::Exploitation: return "exploitation";
    case Stage::Done: return "done";
  }
  return "?";
}

inline constexpr int kRosterSize = 4;
inline constexpr int kRepeats = 3;
inline constexpr int kScheduledGames = kRosterSize * 2 * kRepeats;

inline std::string slot_label(int slot) { return std::string(1, static_cast<char>('A' + slot)); }

struct ScheduledGame {
  int slot = 0;
  int agent_position = 1;  // seat of the AI, 1 or 2
  int repeat = 0;
  friend bool operator==(const ScheduledGame&, const ScheduledGame&) = default;
};

// Every (slot, position) pair exactly kRepeats times, shuffled by seed.
inline std::vector<ScheduledGame> make_schedule(std::uint64_t seed) {
  std::vector<ScheduledGame> g;
  for (int s = 0; s < kRosterSize; ++s)
    for (int pos = 1; pos <= 2; ++pos)
      for (int r = 0; r < kRepeats; ++r) g.push_back({s, pos, r});
  Rng rng(seed);
  for (std::size_t i = g.size(); i > 1; --i) std::swap(g[i - 1], g[rng.uniform(i)]);
  return g;
}

struct RankingEntry {
  std::string session;
  RankingRecord record;
  std::vector<std::string> slots;  // as submitted
  std::string comment;
};

// Append-only persistence: one directory per session plus a shared ranking table.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path session_dir(const std::string& session) const { return root_ / session; }

  void create(const std::string& session, const nlohmann::json& header) {
    auto dir = session_dir(session);
    if (std::filesystem::exists(dir / "session.json"))
      throw Error(Errc::IoError, "session '" + session + "' already exists in " + root_.string());
    std::filesystem::create_directories(dir);
    write_new(dir / "session.json", header.dump(2) + "\n");
  }

  void append_event(const std::string& session, const nlohmann::json& ev) {
    std::lock_guard lk(mu_);
    append(session_dir(session) / "events.jsonl", ev.dump() + "\n");
  }

  std::filesystem::path write_trajectory(const std::string& session, int game, const Trajectory& t) {
    char name[32];
    std::snprintf(name, sizeof name, "game-%03d.traj", game);
    auto p = session_dir(session) / name;
    write_new(p, format_trajectory(t));
    return p;
  }

  void append_ranking(const RankingEntry& r) {
    nlohmann::json j{{"session", r.session},   {"participant", r.record.participant}, {"layout", r.record.layout},
                     {"ranking", r.record.ranking}, {"slots", r.slots},              {"comment", r.comment}};
    std::lock_guard lk(mu_);
    append(root_ / "rankings.jsonl", j.dump() + "\n");
  }

  std::vector<RankingEntry> load_rankings() const {
    std::vector<RankingEntry> out;
    std::ifstream f(root_ / "rankings.jsonl");
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        RankingEntry e;
        e.session = j.at("session").get<std::string>();
        e.record.participant = j.at("participant").get<std::string>();
        e.record.layout = j.at("layout").get<std::string>();
        e.record.ranking = j.at("ranking").get<std::vector<std::string>>();
        e.slots = j.at("slots").get<std::vector<std::string>>();
        e.comment = j.at("comment").get<std::string>();
        out.push_back(std::move(e));
      } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::ParseError, "rankings.jsonl line " + std::to_string(lineno) + ": " + ex.what());
      }
    }
    return out;
  }

  std::vector<RankingRecord> ranking_records(const std::string& layout = "") const {
    std::vector<RankingRecord> out;
    for (auto& e : load_rankings())
      if (layout.empty() || e.record.layout == layout) out.push_back(e.record);
    return out;
  }

 private:
  static void append(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::app);
    if (!f) throw Error(Errc::IoError, "cannot append to " + p.string());
    f << text;
  }
  static void write_new(const std::filesystem::path& p, const std::string& text) {
    if (std::filesystem::exists(p)) throw Error(Errc::IoError, p.string() + " already exists");
    std::ofstream f(p);
    if (!f) throw Error(Errc::IoError, "cannot write " + p.string());
    f << text;
  }

  std::filesystem::path root_;
  std::mutex mu_;
};

struct SessionConfig {
  std::string session_id;
  std::string participant;
  std::shared_ptr<const Layout> layout;
  std::vector<PolicyHandle> roster;
  std::uint64_t seed = 0;
  TickPolicy tick;
};

struct GameRecord {
  int index = 0;  // running game number within the session
  bool warmup = true;
  int slot = 0;
  int agent_position = 1;
  double score = 0.0;
  bool completed = false;
  Trajectory trajectory;
};

struct TickResult {
  int tick = 0;
  Action human = Action::NoOp;
  Action ai = Action::NoOp;
  double reward = 0.0;
  bool game_over = false;
};

class Session {
 public:
  Session(SessionConfig cfg, std::shared_ptr<SessionStore> store = nullptr)
      : cfg_(std::move(cfg)), store_(std::move(store)) {
    if (!cfg_.layout) throw Error(Errc::UnknownLayout, "session needs a layout");
    if (cfg_.roster.size() != static_cast<std::size_t>(kRosterSize))
      throw Error(Errc::UnknownAgent, "roster needs " + std::to_string(kRosterSize) + " agents, got " +
                                          std::to_string(cfg_.roster.size()));
    for (std::size_t i = 0; i < cfg_.roster.size(); ++i) {
      if (!cfg_.roster[i].make) throw Error(Errc::UnknownAgent, "roster entry " + std::to_string(i) + " is not playable");
      for (std::size_t j = 0; j < i; ++j)
        if (cfg_.roster[i].id == cfg_.roster[j].id)
          throw Error(Errc::UnknownAgent, "roster lists '" + cfg_.roster[i].id + "' twice");
    }
    if (cfg_.tick.ai_idle_steps < 0) throw Error(Errc::InvalidArgument, "ai_idle_steps must be >= 0");
    Rng rng(derive_seed(cfg_.seed, 0x5107));
    slot_agent_ = {0, 1, 2, 3};
    for (std::size_t i = slot_agent_.size(); i > 1; --i) std::swap(slot_agent_[i - 1], slot_agent_[rng.uniform(i)]);
    schedule_ = make_schedule(derive_seed(cfg_.seed, 0x5c4e));
    if (store_) {
      nlohmann::json slots = nlohmann::json::object();
      for (int s = 0; s < kRosterSize; ++s) slots[slot_label(s)] = agent_id(s);
      nlohmann::json sched = nlohmann::json::array();
      for (const auto& g : schedule_) sched.push_back({slot_label(g.slot), g.agent_position});
      store_->create(cfg_.session_id, {{"session", cfg_.session_id},
                                       {"participant", cfg_.participant},
                                       {"layout", cfg_.layout->name},
                                       {"seed", cfg_.seed},
                                       {"ai_idle_steps", cfg_.tick.ai_idle_steps},
                                       {"tick_ms", cfg_.tick.human_input_ms},
                                       {"slots", slots},
                                       {"schedule", sched}});
    }
  }

  const std::string& id() const { return cfg_.session_id; }
  const SessionConfig& config() const { return cfg_; }
  Stage stage() const { return stage_; }
  const std::vector<ScheduledGame>& schedule() const { return schedule_; }
  const std::vector<GameRecord>& games() const { return games_; }
  bool game_active() const { return game_.has_value(); }
  int exploitation_played() const { return exploit_next_; }
  std::vector<std::string> slot_labels() const {
    std::vector<std::string> v;
    for (int s = 0; s < kRosterSize; ++s) v.push_back(slot_label(s));
    return v;
  }

  // Server-side resolution of an anonymized slot.
  const std::string& agent_id(int slot) const {
    return cfg_.roster[static_cast<std::size_t>(slot_agent_[static_cast<std::size_t>(slot)])].id;
  }

  // Slot identities are only disclosed once the study is over.
  std::map<std::string, std::string> reveal() const {
    if (stage_ != Stage::Done) throw Error(Errc::WrongStage, "agent identities stay hidden until the session ends");
    std::map<std::string, std::string> m;
    for (int s = 0; s < kRosterSize; ++s) m[slot_label(s)] = agent_id(s);
    return m;
  }

  bool warmup_complete() const {
    for (int s = 0; s < kRosterSize; ++s)
      if (warm_done_[static_cast<std::size_t>(s)] == 0) return false;
    return true;
  }

  const GameState& state() const {
    if (!game_) throw Error(Errc::SessionClosed, "no game in progress");
    return game_->state;
  }
  const GameRecord& current_game() const {
    if (!game_) throw Error(Errc::SessionClosed, "no game in progress");
    return game_->record;
  }
  int human_seat() const { return 2 - current_game().agent_position; }

  void start_warmup_game(int slot, int agent_position) {
    ensure_open();
    if (stage_ != Stage::WarmUp) throw Error(Errc::WrongStage, "warm-up games are over");
    if (game_) throw Error(Errc::WrongStage, "a game is already in progress");
    if (slot < 0 || slot >= kRosterSize) throw Error(Errc::UnknownAgent, "no slot " + std::to_string(slot));
    if (agent_position != 1 && agent_position != 2) throw Error(Errc::InvalidArgument, "position must be 1 or 2");
    begin_game(true, slot, agent_position);
  }

  void start_next_game() {
    ensure_open();
    if (stage_ != Stage::Exploitation) throw Error(Errc::WrongStage, "ranking must be submitted first");
    if (game_) throw Error(Errc::WrongStage, "a game is already in progress");
    const auto& g = schedule_[static_cast<std::size_t>(exploit_next_)];
    begin_game(false, g.slot, g.agent_position);
  }

  // Latest-wins: a later input inside the same tick window replaces an earlier one.
  void submit_human_action(Action a) {
    if (!game_) throw Error(Errc::SessionClosed, "no game in progress");
    game_->pending = a;
  }

  TickResult tick() {
    if (!game_) throw Error(Errc::SessionClosed, "no game in progress");
    auto& g = *game_;
    TickResult r;
    r.tick = g.state.tick;
    r.human = g.pending.value_or(Action::NoOp);
    g.pending.reset();
    r.ai = cfg_.tick.ai_duty(r.tick) ? g.ai->act(g.state) : Action::NoOp;
    const int ai_seat = g.record.agent_position - 1;
    Action a0 = ai_seat == 0 ? r.ai : r.human;
    Action a1 = ai_seat == 0 ? r.human : r.ai;
    std::vector<EventRecord> evs;
    StepInfo info;
    step_inplace(g.state, a0, a1, info, &evs);
    g.rec.record(r.tick, a0, a1, info.task_reward, std::move(evs));
    r.reward = info.task_reward;
    r.game_over = g.state.done();
    if (r.game_over) finish_game(true);
    return r;
  }

  // Ends an unfinished warm-up game; it does not count towards warm-up.
  void abandon_game() {
    if (!game_) return;
    if (!game_->record.warmup) throw Error(Errc::WrongStage, "scheduled games cannot be abandoned");
    finish_game(false);
  }

  RankingEntry submit_ranking(const std::vector<std::string>& order, const std::string& comment = "") {
    ensure_open();
    if (stage_ != Stage::WarmUp) throw Error(Errc::WrongStage, "ranking was already submitted");
    if (!warmup_complete()) throw Error(Errc::WrongStage, "every agent needs at least one warm-up game");
    if (order.size() != static_cast<std::size_t>(kRosterSize))
      throw Error(Errc::NotAPermutation, "ranking must list all " + std::to_string(kRosterSize) + " slots");
    std::array<bool, kRosterSize> seen{};
    RankingEntry e;
    e.session = cfg_.session_id;
    e.slots = order;
    e.comment = comment;
    e.record.participant = cfg_.participant;
    e.record.layout = cfg_.layout->name;
    for (const auto& label : order) {
      int s = label.size() == 1 ? label[0] - 'A' : -1;
      if (s < 0 || s >= kRosterSize) throw Error(Errc::NotAPermutation, "unknown slot '" + label + "'");
      if (seen[static_cast<std::size_t>(s)]) throw Error(Errc::NotAPermutation, "slot '" + label + "' repeated");
      seen[static_cast<std::size_t>(s)] = true;
      e.record.ranking.push_back(agent_id(s));
    }
    if (game_) abandon_game();
    stage_ = Stage::Exploitation;
    if (store_) {
      store_->append_ranking(e);
      log({{"type", "ranking"}, {"slots", order}});
      log({{"type", "stage"}, {"stage", std::string(stage_name(stage_))}});
    }
    return e;
  }

 private:
  struct Active {
    GameState state;
    std::unique_ptr<Agent> ai;
    std::optional<Action> pending;
    TrajectoryRecorder rec;
    GameRecord record;
  };

  void ensure_open() const {
    if (stage_ == Stage::Done) throw Error(Errc::SessionClosed, "session is finished");
  }

  void begin_game(bool warmup, int slot, int agent_position) {
    const int index = static_cast<int>(games_.size());
    const std::uint64_t es = derive_seed(cfg_.seed, 0x6a3e, static_cast<std::uint64_t>(index));
    const auto& policy = cfg_.roster[static_cast<std::size_t>(slot_agent_[static_cast<std::size_t>(slot)])];
    game_.emplace(Active{reset(cfg_.layout, es), policy.make_agent(), std::nullopt, TrajectoryRecorder(*cfg_.layout, es),
                         GameRecord{index, warmup, slot, agent_position, 0.0, false, {}}});
    game_->ai->begin(agent_position - 1, agent_seed(es, agent_position - 1));
    log({{"type", "gameStart"}, {"game", index}, {"warmup", warmup}, {"slot", slot_label(slot)},
         {"agent_position", agent_position}, {"seed", es}});
  }

  void finish_game(bool completed) {
    GameRecord rec = std::move(game_->record);
    rec.trajectory = game_->rec.take();
    rec.score = rec.trajectory.score;
    rec.completed = completed;
    game_.reset();
    nlohmann::json ev{{"type", completed ? "gameEnd" : "gameAbandoned"}, {"game", rec.index}, {"score", rec.score}};
    if (store_) ev["trajectory"] = store_->write_trajectory(cfg_.session_id, rec.index, rec.trajectory).filename().string();
    log(ev);
    if (completed && rec.warmup) ++warm_done_[static_cast<std::size_t>(rec.slot)];
    if (completed && !rec.warmup && ++exploit_next_ == kScheduledGames) {
      stage_ = Stage::Done;
      log({{"type", "stage"}, {"stage", std::string(stage_name(stage_))}});
    }
    games_.push_back(std::move(rec));
  }

  void log(const nlohmann::json& ev) {
    if (store_) store_->append_event(cfg_.session_id, ev);
  }

  SessionConfig cfg_;
  std::shared_ptr<SessionStore> store_;
  std::array<int, kRosterSize> slot_agent_{};
  std::vector<ScheduledGame> schedule_;
  Stage stage_ = Stage::WarmUp;
  std::array<int, kRosterSize> warm_done_{};
  int exploit_next_ = 0;
  std::optional<Active> game_;
  std::vector<GameRecord> games_;
};

// ---------------------------------------------------------------- protocol

inline nlohmann::json item_json(const Item& it) {
  if (it.kind == ItemKind::None) return nullptr;
  return item_code(it);
}

inline nlohmann::json state_delta(const GameState& s, double score) {
  nlohmann::json players = nlohmann::json::array();
  for (const auto& p : s.players)
    players.push_back({{"x", p.pos.x}, {"y", p.pos.y}, {"facing", std::string(action_name(static_cast<Action>(p.facing)))},
                       {"held", item_json(p.held)}});
  nlohmann::json pots = nlohmann::json::array();
  for (std::size_t i = 0; i < s.pots.size(); ++i) {
    const auto& c = s.layout->pots[i];
    const auto& pot = s.pots[i];
    pots.push_back({{"x", c.x},
                    {"y", c.y},
                    {"onions", pot.contents.onions},
                    {"tomatoes", pot.contents.tomatoes},
                    {"cook_remaining", pot.cook_remaining}});
  }
  nlohmann::json counters = nlohmann::json::array();
  for (int y = 0; y < s.layout->height; ++y)
    for (int x = 0; x < s.layout->width; ++x) {
      const Item& it = s.counter_at({x, y});
      if (it.kind != ItemKind::None) counters.push_back({{"x", x}, {"y", y}, {"item", item_code(it)}});
    }
  return {{"type", "stateDelta"},
          {"tick", s.tick},
          {"players", players},
          {"pots", pots},
          {"counters", counters},
          {"score", score},
          {"time_left", s.layout->episode_length - s.tick}};
}

inline nlohmann::json error_message(Errc c, const std::string& msg) {
  return {{"type", "error"}, {"code", std::string(errc_name(c))}, {"message", msg}};
}

struct HostConfig {
  std::shared_ptr<const Layout> layout;
  std::vector<PolicyHandle> roster;
  std::uint64_t seed = 0;
  TickPolicy tick;
  std::shared_ptr<SessionStore> store;
};

// Transport-independent message handling for one client connection. Warm-up
// games cycle through the slots until the ranking arrives; exploitation
// games follow the schedule; every reply is a JSON text message.
class ProtocolHost {
 public:
  explicit ProtocolHost(HostConfig cfg) : cfg_(std::move(cfg)) {}

  Session* session() { return session_ ? &*session_ : nullptr; }
  bool closed() const { return session_ && session_->stage() == Stage::Done; }

  std::vector<nlohmann::json> on_message(std::string_view text) {
    std::vector<nlohmann::json> out;
    try {
      nlohmann::json m;
      try {
        m = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
      }
      const std::string type = m.value("type", "");
      if (type == "join") {
        join(m, out);
      } else if (type == "action") {
        auto a = action_from_name(m.value("action", ""));
        if (!a) throw Error(Errc::InvalidArgument, "unknown action '" + m.value("action", "") + "'");
        need_session().submit_human_action(*a);
      } else if (type == "ranking") {
        auto order = m.at("order").get<std::vector<std::string>>();
        need_session().submit_ranking(order, m.value("comment", ""));
        out.push_back(stage_message());
        start_game(out);
      } else if (type == "heartbeat") {
        out.push_back({{"type", "heartbeat"}, {"tick", session_ && session_->game_active() ? session_->state().tick : -1}});
      } else {
        throw Error(Errc::ParseError, "unknown message type '" + type + "'");
      }
    } catch (const Error& e) {
      out.push_back(error_message(e.code(), e.what()));
    } catch (const nlohmann::json::exception& e) {
      out.push_back(error_message(Errc::ParseError, e.what()));
    }
    return out;
  }

  std::vector<nlohmann::json> on_tick() {
    std::vector<nlohmann::json> out;
    if (!session_ || !session_->game_active()) return out;
    auto r = session_->tick();
    if (!r.game_over) {
      out.push_back(state_delta(session_->state(), session_->state().cumulative_reward));
      return out;
    }
    const auto& g = session_->games().back();
    out.push_back({{"type", "gameEnd"}, {"game_index", game_index(g)}, {"warmup", g.warmup}, {"score", g.score},
                   {"position", 3 - g.agent_position}});
    if (session_->stage() == Stage::Done) {
      out.push_back(stage_message());
      return out;
    }
    start_game(out);
    return out;
  }

 private:
  Session& need_session() {
    if (!session_) throw Error(Errc::WrongStage, "join first");
    return *session_;
  }

  void join(const nlohmann::json& m, std::vector<nlohmann::json>& out) {
    if (session_) throw Error(Errc::WrongStage, "already joined");
    SessionConfig sc;
    sc.participant = m.at("participant").get<std::string>();
    if (sc.participant.empty()) throw Error(Errc::InvalidArgument, "participant id must not be empty");
    sc.layout = cfg_.layout;
    sc.roster = cfg_.roster;
    sc.seed = derive_seed(cfg_.seed, fnv1a(sc.participant));
    sc.tick = cfg_.tick;
    sc.session_id = "s-" + hex64(derive_seed(sc.seed, fnv1a(sc.layout->name)));
    session_.emplace(std::move(sc), cfg_.store);
    out.push_back({{"type", "joined"},
                   {"session", session_->id()},
                   {"layout", cfg_.layout->name},
                   {"slots", session_->slot_labels()},
                   {"tick_ms", cfg_.tick.human_input_ms},
                   {"ai_idle_steps", cfg_.tick.ai_idle_steps},
                   {"games", kScheduledGames}});
    out.push_back(stage_message());
    start_game(out);
  }

  void start_game(std::vector<nlohmann::json>& out) {
    auto& s = *session_;
    if (s.stage() == Stage::WarmUp) {
      const int n = warm_started_++;
      s.start_warmup_game(n % kRosterSize, (n / kRosterSize) % 2 + 1);
    } else {
      s.start_next_game();
    }
    const auto& g = s.current_game();
    out.push_back({{"type", "gameStart"},
                   {"game_index", game_index(g)},
                   {"warmup", g.warmup},
                   {"slot", slot_label(g.slot)},
                   {"position", 3 - g.agent_position}});
    out.push_back(state_delta(s.state(), 0.0));
  }

  // Exploitation games are numbered 1..24, warm-up games by running count.
  int game_index(const GameRecord& g) const {
    if (g.warmup) return g.index + 1;
    int k = 0;
    for (const auto& r : session_->games())
      if (!r.warmup && r.index <= g.index) ++k;
    return g.completed ? k : k + 1;
  }

  nlohmann::json stage_message() const {
    nlohmann::json m{{"type", "stageChange"}, {"stage", std::string(stage_name(session_->stage()))}};
    if (session_->stage() == Stage::Done) m["agents"] = session_->reveal();
    return m;
  }

  HostConfig cfg_;
  std::optional<Session> session_;
  int warm_started_ = 0;
};

// ---------------------------------------------------------------- websocket

namespace ws {

inline constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

enum class Opcode : std::uint8_t { Continuation = 0, Text = 1, Binary = 2, Close = 8, Ping = 9, Pong = 10 };

inline std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

// Sec-WebSocket-Accept for a client key.
inline std::string accept_key(std::string_view client_key) {
  std::string s = std::string(client_key) + std::string(kGuid);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(s.data(), s.size(), md, &len, EVP_sha1(), nullptr) != 1) throw Error(Errc::IoError, "SHA-1 failed");
  return base64(md, len);
}

inline std::string encode_frame(Opcode op, std::string_view payload, std::optional<std::array<std::uint8_t, 4>> mask = {}) {
  std::string f;
  f.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
  const std::uint8_t mbit = mask ? 0x80 : 0;
  const std::uint64_t n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<char>(mbit | n));
  } else if (n <= 0xffff) {
    f.push_back(static_cast<char>(mbit | 126));
    for (int i = 1; i >= 0; --i) f.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  } else {
    f.push_back(static_cast<char>(mbit | 127));
    for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  }
  if (mask) {
    for (auto b : *mask) f.push_back(static_cast<char>(b));
    for (std::size_t i = 0; i < n; ++i) f.push_back(static_cast<char>(payload[i] ^ (*mask)[i % 4]));
  } else {
    f.append(payload);
  }
  return f;
}

struct Message {
  Opcode op = Opcode::Text;
  std::string payload;
};

// Incremental frame decoder; reassembles fragmented data messages.
class FrameParser {
 public:
  explicit FrameParser(bool require_mask, std::size_t max_message = 1 << 20)
      : require_mask_(require_mask), max_(max_message) {}

  void feed(std::string_view bytes) { buf_.append(bytes); }

  std::optional<Message> next() {
    while (true) {
      if (buf_.size() < 2) return std::nullopt;
      const auto b0 = static_cast<std::uint8_t>(buf_[0]), b1 = static_cast<std::uint8_t>(buf_[1]);
      if (b0 & 0x70) throw Error(Errc::ParseError, "reserved frame bits set");
      const bool fin = b0 & 0x80, masked = b1 & 0x80;
      const auto op = static_cast<Opcode>(b0 & 0x0f);
      if (require_mask_ && !masked) throw Error(Errc::ParseError, "client frames must be masked");
      std::size_t pos = 2;
      std::uint64_t n = b1 & 0x7f;
      if (n >= 126) {
        const std::size_t ext = n == 126 ? 2 : 8;
        if (buf_.size() < pos + ext) return std::nullopt;
        n = 0;
        for (std::size_t i = 0; i < ext; ++i) n = (n << 8) | static_cast<std::uint8_t>(buf_[pos + i]);
        pos += ext;
      }
      if (n > max_) throw Error(Errc::ParseError, "frame too large");
      std::array<std::uint8_t, 4> key{};
      if (masked) {
        if (buf_.size() < pos + 4) return std::nullopt;
        for (int i = 0; i < 4; ++i) key[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(buf_[pos + static_cast<std::size_t>(i)]);
        pos += 4;
      }
      if (buf_.size() < pos + n) return std::nullopt;
      std::string payload = buf_.substr(pos, n);
      if (masked)
        for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ key[i % 4]);
      buf_.erase(0, pos + n);

      if (static_cast<std::uint8_t>(op) >= 8) {
        if (!fin || n > 125) throw Error(Errc::ParseError, "malformed control frame");
        return Message{op, std::move(payload)};
      }
      if (op == Opcode::Continuation) {
        if (!partial_) throw Error(Errc::ParseError, "continuation without a started message");
        partial_->payload += payload;
      } else {
        if (partial_) throw Error(Errc::ParseError, "new message inside a fragmented one");
        partial_ = Message{op, std::move(payload)};
      }
      if (partial_->payload.size() > max_) throw Error(Errc::ParseError, "message too large");
      if (fin) {
        Message m = std::move(*partial_);
        partial_.reset();
        return m;
      }
    }
  }

 private:
  bool require_mask_;
  std::size_t max_;
  std::string buf_;
  std::optional<Message> partial_;
};

inline void send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t k = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (k <= 0) throw Error(Errc::IoError, "connection lost");
    data.remove_prefix(static_cast<std::size_t>(k));
  }
}

// Reads the HTTP upgrade request (up to the blank line) and returns the
// client key; leftover bytes are appended to `rest`.
inline std::string read_handshake(int fd, std::string& rest, int timeout_ms = 5000) {
  std::string req;
  char buf[2048];
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (req.find("\r\n\r\n") == std::string::npos) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    pollfd p{fd, POLLIN, 0};
    if (left <= 0 || ::poll(&p, 1, static_cast<int>(left)) <= 0) throw Error(Errc::IoError, "handshake timed out");
    ssize_t k = ::recv(fd, buf, sizeof buf, 0);
    if (k <= 0) throw Error(Errc::IoError, "connection closed during handshake");
    req.append(buf, static_cast<std::size_t>(k));
    if (req.size() > 16384) throw Error(Errc::ParseError, "handshake too large");
  }
  std::size_t end = req.find("\r\n\r\n") + 4;
  rest.append(req.substr(end));
  std::string key;
  bool upgrade = false;
  for (const auto& line : split(req.substr(0, end), '\n')) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string name = trim(line.substr(0, colon));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    std::string value = trim(line.substr(colon + 1));
    if (name == "sec-websocket-key") key = value;
    if (name == "upgrade") {
      std::transform(value.begin(), value.end(), value.begin(), [](unsigned char c) { return std::tolower(c); });
      upgrade = value == "websocket";
    }
  }
  if (!upgrade || key.empty()) throw Error(Errc::ParseError, "not a WebSocket upgrade request");
  return key;
}

inline std::string handshake_response(std::string_view key) {
  return "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: " +
         accept_key(key) + "\r\n\r\n";
}

// Minimal blocking client, used by tests and smoke runs.
class Client {
 public:
  Client(const std::string& host, int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw Error(Errc::IoError, "socket failed");
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1) throw Error(Errc::InvalidArgument, "bad host " + host);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a) != 0) {
      ::close(fd_);
      throw Error(Errc::IoError, "cannot connect to " + host + ":" + std::to_string(port));
    }
    const std::string key = "dGhlIHNhbXBsZSBub25jZQ==";
    send_all(fd_, "GET / HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                  "Sec-WebSocket-Version: 13\r\nSec-WebSocket-Key: " + key + "\r\n\r\n");
    std::string resp;
    char buf[1024];
    while (resp.find("\r\n\r\n") == std::string::npos) {
      ssize_t k = ::recv(fd_, buf, sizeof buf, 0);
      if (k <= 0) throw Error(Errc::IoError, "handshake failed");
      resp.append(buf, static_cast<std::size_t>(k));
    }
    std::size_t end = resp.find("\r\n\r\n") + 4;
    if (resp.find(accept_key(key)) == std::string::npos) throw Error(Errc::ParseError, "bad Sec-WebSocket-Accept");
    parser_.feed(std::string_view(resp).substr(end));
  }
  ~Client() {
    if (fd_ >= 0) ::close(fd_);
  }
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void send_text(std::string_view text) { send_all(fd_, encode_frame(Opcode::Text, text, mask())); }
  void send_json(const nlohmann::json& j) { send_text(j.dump()); }
  void close() { send_all(fd_, encode_frame(Opcode::Close, "", mask())); }

  // Next text message, or nullopt on timeout or close.
  std::optional<nlohmann::json> receive(int timeout_ms = 5000) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (true) {
      if (auto m = parser_.next()) {
        if (m->op == Opcode::Text) return nlohmann::json::parse(m->payload);
        if (m->op == Opcode::Close) return std::nullopt;
        continue;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
      pollfd p{fd_, POLLIN, 0};
      if (left <= 0 || ::poll(&p, 1, static_cast<int>(left)) <= 0) return std::nullopt;
      char buf[8192];
      ssize_t k = ::recv(fd_, buf, sizeof buf, 0);
      if (k <= 0) return std::nullopt;
      parser_.feed(std::string_view(buf, static_cast<std::size_t>(k)));
    }
  }

 private:
  std::array<std::uint8_t, 4> mask() {
    auto v = rng_.next();
    return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v >> 16),
            static_cast<std::uint8_t>(v >> 24)};
  }

  int fd_ = -1;
  FrameParser parser_{false};
  Rng rng_{0x3a5c};
};

}  // namespace ws

// ---------------------------------------------------------------- server

struct ServerConfig {
  std::string bind = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  HostConfig host;
};

// One thread per connection; each thread is the single writer of its
// session and runs the tick loop between socket reads.
class PlayServer {
 public:
  explicit PlayServer(ServerConfig cfg) : cfg_(std::move(cfg)) {}
  ~PlayServer() { stop(); }
  PlayServer(const PlayServer&) = delete;
  PlayServer& operator=(const PlayServer&) = delete;

  int start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(Errc::IoError, "socket failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(static_cast<std::uint16_t>(cfg_.port));
    if (::inet_pton(AF_INET, cfg_.bind.c_str(), &a.sin_addr) != 1) throw Error(Errc::InvalidArgument, "bad bind address");
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&a), sizeof a) != 0 || ::listen(listen_fd_, 16) != 0)
      throw Error(Errc::IoError, "cannot listen on port " + std::to_string(cfg_.port));
    socklen_t len = sizeof a;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&a), &len);
    port_ = ntohs(a.sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    return port_;
  }

  int port() const { return port_; }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    std::lock_guard lk(mu_);
    for (auto& t : conns_)
      if (t.joinable()) t.join();
    conns_.clear();
  }

 private:
  void accept_loop() {
    while (running_) {
      pollfd p{listen_fd_, POLLIN, 0};
      if (::poll(&p, 1, 100) <= 0) continue;
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      std::lock_guard lk(mu_);
      conns_.emplace_back([this, fd] { serve(fd); });
    }
  }

  void serve(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    try {
      std::string rest;
      std::string key = ws::read_handshake(fd, rest);
      ws::send_all(fd, ws::handshake_response(key));
      ws::FrameParser parser(true);
      parser.feed(rest);
      ProtocolHost host(cfg_.host);
      auto send = [&](const std::vector<nlohmann::json>& msgs) {
        for (const auto& m : msgs) ws::send_all(fd, ws::encode_frame(ws::Opcode::Text, m.dump()));
      };
      const auto period = std::chrono::milliseconds(std::max(1, cfg_.host.tick.human_input_ms));
      auto next_tick = std::chrono::steady_clock::now() + period;
      bool open = true;
      while (open && running_) {
        while (auto m = parser.next()) {
          if (m->op == ws::Opcode::Text) {
            send(host.on_message(m->payload));
          } else if (m->op == ws::Opcode::Ping) {
            ws::send_all(fd, ws::encode_frame(ws::Opcode::Pong, m->payload));
          } else if (m->op == ws::Opcode::Close) {
            ws::send_all(fd, ws::encode_frame(ws::Opcode::Close, ""));
            open = false;
            break;
          }
        }
        if (!open) break;
        auto now = std::chrono::steady_clock::now();
        if (now >= next_tick) {
          send(host.on_tick());
          next_tick += period;
          if (next_tick < now) next_tick = now + period;
          continue;
        }
        auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(next_tick - now).count();
        pollfd p{fd, POLLIN, 0};
        int r = ::poll(&p, 1, static_cast<int>(std::min<long long>(wait, 100)));
        if (r > 0) {
          char buf[8192];
          ssize_t k = ::recv(fd, buf, sizeof buf, 0);
          if (k <= 0) break;
          parser.feed(std::string_view(buf, static_cast<std::size_t>(k)));
        }
      }
    } catch (const std::exception&) {
      // A broken connection ends only its own session.
    }
    ::close(fd);
  }

  ServerConfig cfg_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> conns_;
};

}  // namespace hsp
