#include <gtest/gtest.h>

#include <set>

#include "hsp/playserver.hpp"
#include "test_util.hpp"

namespace hsp {
namespace {

using namespace hsp::testing;

PolicyHandle fixed(std::string id, Action a) {
  return {PolicyKind::Scripted, std::move(id), [a] { return std::make_unique<FixedActionAgent>(a); }};
}

std::vector<PolicyHandle> roster() {
  return {script_policy(ScriptKind::OnionPlacementAndDelivery), script_policy(ScriptKind::Delivery), random_policy(),
          fixed("steady-east", Action::Right)};
}

std::shared_ptr<const Layout> short_layout(int length) {
  auto L = std::make_shared<Layout>(*layout("symmetric_mini"));
  L->episode_length = length;
  return L;
}

SessionConfig config(std::uint64_t seed = 1, int length = 20) {
  return {"s-test", "p1", short_layout(length), roster(), seed, {}};
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  return d;
}

void expect_code(Errc c, const std::function<void()>& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << errc_name(c);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), c) << e.what();
  }
}

void play_out(Session& s) {
  while (!s.tick().game_over) {
  }
}

void finish_warmup(Session& s) {
  for (int slot = 0; slot < kRosterSize; ++slot) {
    s.start_warmup_game(slot, 1);
    play_out(s);
  }
}

TEST(Schedule, BalancedAndSeeded) {
  auto g = make_schedule(7);
  ASSERT_EQ(g.size(), 24u);
  std::map<std::pair<int, int>, int> count;
  for (const auto& x : g) ++count[{x.slot, x.agent_position}];
  EXPECT_EQ(count.size(), 8u);
  for (const auto& [k, v] : count) EXPECT_EQ(v, 3);
  EXPECT_EQ(make_schedule(7), g);
  EXPECT_NE(make_schedule(8), g);

  Session a(config(5)), b(config(5));
  EXPECT_EQ(a.schedule(), b.schedule());
  for (int s = 0; s < kRosterSize; ++s) EXPECT_EQ(a.agent_id(s), b.agent_id(s));
}

TEST(Session, RosterMustHaveFourDistinctAgents) {
  auto c = config();
  c.roster.pop_back();
  expect_code(Errc::UnknownAgent, [&] { Session s(c); });
  c = config();
  c.roster[3] = c.roster[0];
  expect_code(Errc::UnknownAgent, [&] { Session s(c); });
  c = config();
  c.tick.ai_idle_steps = -1;
  expect_code(Errc::InvalidArgument, [&] { Session s(c); });
}

TEST(Session, AiActsOncePerEightTicks) {
  Session s(config());
  int right_slot = -1;
  for (int k = 0; k < kRosterSize; ++k)
    if (s.agent_id(k) == "steady-east") right_slot = k;
  s.start_warmup_game(right_slot, 2);
  std::vector<int> acted;
  for (int t = 0; t < 8; ++t) {
    auto r = s.tick();
    if (r.ai != Action::NoOp) acted.push_back(r.tick);
  }
  EXPECT_EQ(acted, std::vector<int>{7});

  auto c = config();
  c.tick.ai_idle_steps = 0;
  Session every(c);
  every.start_warmup_game(right_slot, 1);
  for (int t = 0; t < 5; ++t) EXPECT_EQ(every.tick().ai, Action::Right);
}

TEST(Session, HumanInputLatestWinsAndDefaultsToNoOp) {
  Session s(config());
  s.start_warmup_game(0, 1);
  EXPECT_EQ(s.human_seat(), 1);
  EXPECT_EQ(s.tick().human, Action::NoOp);
  s.submit_human_action(Action::Up);
  s.submit_human_action(Action::Left);
  EXPECT_EQ(s.tick().human, Action::Left);
  EXPECT_EQ(s.tick().human, Action::NoOp);
  play_out(s);
  const auto& steps = s.games().back().trajectory.steps;
  EXPECT_EQ(steps[0].a1, Action::NoOp);
  EXPECT_EQ(steps[1].a1, Action::Left);
}

TEST(Session, CompletedGamesReplayToStoredScore) {
  auto dir = fresh_dir("hsp_session_replay");
  auto store = std::make_shared<SessionStore>(dir);
  auto c = config(3, 60);
  c.tick.ai_idle_steps = 0;
  Session s(c, store);
  Rng human(11);
  for (int slot = 0; slot < kRosterSize; ++slot) {
    s.start_warmup_game(slot, slot % 2 + 1);
    TickResult r;
    do {
      s.submit_human_action(static_cast<Action>(human.uniform(kNumActions)));
      r = s.tick();
    } while (!r.game_over);
  }
  double total = 0.0;
  for (const auto& g : s.games()) {
    auto re = resimulate(g.trajectory, *c.layout);
    EXPECT_EQ(re.score, g.score);
    EXPECT_EQ(format_trajectory(re), format_trajectory(g.trajectory));
    char name[32];
    std::snprintf(name, sizeof name, "game-%03d.traj", g.index);
    EXPECT_EQ(read_file(dir / "s-test" / name), format_trajectory(g.trajectory));
    total += g.score;
  }
  EXPECT_GT(total, 0.0);
  std::filesystem::remove_all(dir);
}

TEST(Session, StageMachine) {
  Session s(config());
  EXPECT_EQ(s.stage(), Stage::WarmUp);
  expect_code(Errc::WrongStage, [&] { s.start_next_game(); });
  expect_code(Errc::SessionClosed, [&] { s.tick(); });
  for (int slot = 0; slot < 3; ++slot) {
    s.start_warmup_game(slot, 1);
    play_out(s);
  }
  expect_code(Errc::WrongStage, [&] { s.submit_ranking({"A", "B", "C", "D"}); });
  s.start_warmup_game(3, 2);
  s.tick();
  s.abandon_game();
  expect_code(Errc::WrongStage, [&] { s.submit_ranking({"A", "B", "C", "D"}); });
  s.start_warmup_game(3, 2);
  play_out(s);
  EXPECT_TRUE(s.warmup_complete());

  expect_code(Errc::NotAPermutation, [&] { s.submit_ranking({"A", "A", "C", "D"}); });
  expect_code(Errc::NotAPermutation, [&] { s.submit_ranking({"A", "B", "C"}); });
  expect_code(Errc::NotAPermutation, [&] { s.submit_ranking({"A", "B", "C", "E"}); });
  EXPECT_EQ(s.stage(), Stage::WarmUp);
  expect_code(Errc::WrongStage, [&] { s.reveal(); });

  auto e = s.submit_ranking({"B", "A", "D", "C"}, "ok");
  EXPECT_EQ(s.stage(), Stage::Exploitation);
  EXPECT_EQ(e.record.ranking[0], s.agent_id(1));
  EXPECT_EQ(e.record.ranking[3], s.agent_id(2));
  expect_code(Errc::WrongStage, [&] { s.submit_ranking({"A", "B", "C", "D"}); });
  expect_code(Errc::WrongStage, [&] { s.start_warmup_game(0, 1); });

  for (int k = 0; k < kScheduledGames; ++k) {
    s.start_next_game();
    const auto& cur = s.current_game();
    EXPECT_EQ(cur.slot, s.schedule()[static_cast<std::size_t>(k)].slot);
    EXPECT_EQ(cur.agent_position, s.schedule()[static_cast<std::size_t>(k)].agent_position);
    play_out(s);
  }
  EXPECT_EQ(s.stage(), Stage::Done);
  expect_code(Errc::SessionClosed, [&] { s.start_next_game(); });
  expect_code(Errc::SessionClosed, [&] { s.tick(); });
  auto ids = s.reveal();
  std::set<std::string> seen;
  for (const auto& [slot, id] : ids) seen.insert(id);
  EXPECT_EQ(seen.size(), 4u);
}

TEST(Session, RankingsFeedPreferenceScore) {
  auto dir = fresh_dir("hsp_session_rankings");
  auto store = std::make_shared<SessionStore>(dir);
  // Each synthetic participant ranks by true identity; the server resolves slots.
  const std::vector<std::vector<std::string>> prefs = {
      {"steady-east", "random", "script:delivery", "script:onion_placement_and_delivery"},
      {"steady-east", "script:delivery", "random", "script:onion_placement_and_delivery"},
      {"random", "steady-east", "script:delivery", "script:onion_placement_and_delivery"}};
  for (std::size_t i = 0; i < prefs.size(); ++i) {
    auto c = config(100 + i);
    c.session_id = "s" + std::to_string(i);
    c.participant = "p" + std::to_string(i);
    Session s(c, store);
    finish_warmup(s);
    std::vector<std::string> slots;
    for (const auto& id : prefs[i])
      for (int k = 0; k < kRosterSize; ++k)
        if (s.agent_id(k) == id) slots.push_back(slot_label(k));
    s.submit_ranking(slots, "comment " + std::to_string(i) + " \"quoted\"");
  }
  auto entries = store->load_rankings();
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[2].comment, "comment 2 \"quoted\"");
  auto records = store->ranking_records("symmetric_mini");
  for (std::size_t i = 0; i < prefs.size(); ++i) EXPECT_EQ(records[i].ranking, prefs[i]);
  EXPECT_NEAR(preference_score(records, "steady-east", "random"), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(preference_score(records, "steady-east", "script:onion_placement_and_delivery"), 1.0);
  EXPECT_TRUE(store->ranking_records("distant_tomato").empty());
  std::filesystem::remove_all(dir);
}

TEST(Session, StoreIsAppendOnly) {
  auto dir = fresh_dir("hsp_session_append");
  auto store = std::make_shared<SessionStore>(dir);
  Session s(config(), store);
  expect_code(Errc::IoError, [&] { Session again(config(), store); });
  s.start_warmup_game(0, 1);
  play_out(s);
  auto log = read_file(dir / "s-test" / "events.jsonl");
  EXPECT_NE(log.find("\"gameStart\""), std::string::npos);
  EXPECT_NE(log.find("\"gameEnd\""), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(WebSocket, AcceptKeyMatchesRfcSample) {
  EXPECT_EQ(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST(WebSocket, FrameRoundTrip) {
  for (std::size_t n : {0u, 1u, 125u, 126u, 65535u, 65536u, 70000u}) {
    std::string payload(n, 'x');
    for (std::size_t i = 0; i < n; ++i) payload[i] = static_cast<char>('a' + i % 26);
    for (bool masked : {false, true}) {
      ws::FrameParser p(masked);
      std::optional<std::array<std::uint8_t, 4>> key;
      if (masked) key = std::array<std::uint8_t, 4>{0x12, 0x34, 0x56, 0x78};
      std::string f = ws::encode_frame(ws::Opcode::Text, payload, key);
      // Byte-at-a-time feeding exercises partial headers.
      std::optional<ws::Message> m;
      for (std::size_t i = 0; i < f.size(); ++i) {
        p.feed(std::string_view(f).substr(i, 1));
        if (i + 1 < f.size() && n < 200) {
          ASSERT_FALSE(p.next());
        }
      }
      m = p.next();
      ASSERT_TRUE(m);
      EXPECT_EQ(m->payload, payload) << n;
      EXPECT_FALSE(p.next());
    }
  }
}

TEST(WebSocket, FragmentsAndControlFrames) {
  ws::FrameParser p(false);
  std::string first = ws::encode_frame(ws::Opcode::Text, "hel");
  first[0] = static_cast<char>(0x01);  // FIN clear
  std::string ping = ws::encode_frame(ws::Opcode::Ping, "p");
  std::string last = ws::encode_frame(ws::Opcode::Continuation, "lo");
  p.feed(first + ping + last);
  auto a = p.next();
  ASSERT_TRUE(a);
  EXPECT_EQ(a->op, ws::Opcode::Ping);
  auto b = p.next();
  ASSERT_TRUE(b);
  EXPECT_EQ(b->op, ws::Opcode::Text);
  EXPECT_EQ(b->payload, "hello");

  ws::FrameParser strict(true);
  strict.feed(ws::encode_frame(ws::Opcode::Text, "x"));
  EXPECT_THROW(strict.next(), Error);
  ws::FrameParser big(false);
  big.feed(ws::encode_frame(ws::Opcode::Ping, std::string(200, 'x')));
  EXPECT_THROW(big.next(), Error);
}

TEST(Protocol, AnonymousUntilDoneAndErrorsAsMessages) {
  HostConfig hc{short_layout(12), roster(), 4, {}, nullptr};
  hc.tick.ai_idle_steps = 1;
  ProtocolHost host(hc);
  auto err = host.on_message(R"({"type":"action","action":"up"})");
  ASSERT_EQ(err.size(), 1u);
  EXPECT_EQ(err[0]["code"], "WrongStage");
  EXPECT_EQ(host.on_message("{not json")[0]["code"], "ParseError");

  std::vector<nlohmann::json> all;
  auto put = [&](std::vector<nlohmann::json> v) {
    for (auto& m : v) all.push_back(std::move(m));
  };
  put(host.on_message(R"({"type":"join","participant":"p9"})"));
  EXPECT_EQ(all[0]["type"], "joined");
  EXPECT_EQ(host.on_message(R"({"type":"ranking","order":["A","B","C","D"]})")[0]["code"], "WrongStage");
  EXPECT_EQ(host.on_message(R"({"type":"action","action":"jump"})")[0]["code"], "InvalidArgument");
  int ends = 0;
  while (ends < 4) {
    auto out = host.on_tick();
    for (const auto& m : out)
      if (m["type"] == "gameEnd") ++ends;
    put(out);
  }
  put(host.on_message(R"({"type":"ranking","order":["D","C","B","A"],"comment":"fine"})"));
  EXPECT_EQ(host.on_message(R"({"type":"ranking","order":["D","C","B","A"]})")[0]["code"], "WrongStage");
  while (!host.closed()) put(host.on_tick());
  EXPECT_EQ(host.on_tick().size(), 0u);

  int scheduled = 0;
  for (std::size_t i = 0; i + 1 < all.size(); ++i) {
    std::string text = all[i].dump();
    for (const auto& p : roster()) EXPECT_EQ(text.find(p.id), std::string::npos) << text;
    if (all[i]["type"] == "gameStart" && !all[i]["warmup"].get<bool>()) ++scheduled;
  }
  EXPECT_EQ(scheduled, kScheduledGames);
  EXPECT_EQ(all.back()["type"], "stageChange");
  EXPECT_EQ(all.back()["stage"], "done");
  EXPECT_EQ(all.back()["agents"].size(), 4u);
}

TEST(PlayServer, SyntheticClientSession) {
  auto dir = fresh_dir("hsp_playserver_e2e");
  ServerConfig sc;
  sc.host = HostConfig{short_layout(10), roster(), 21, {}, std::make_shared<SessionStore>(dir)};
  sc.host.tick.human_input_ms = 1;
  PlayServer server(sc);
  int port = server.start();
  ASSERT_GT(port, 0);

  ws::Client client("127.0.0.1", port);
  client.send_json({{"type", "join"}, {"participant", "synthetic"}});
  std::string session;
  int warm_ends = 0, exploit_ends = 0, deltas = 0, last_tick = -1;
  bool ranked = false, done = false;
  Rng keys(5);
  while (!done) {
    auto m = client.receive();
    ASSERT_TRUE(m) << "server went silent";
    const std::string type = (*m)["type"];
    if (type == "joined") session = (*m)["session"];
    if (type == "stateDelta") {
      ++deltas;
      int t = (*m)["tick"];
      EXPECT_TRUE(t == 0 || t == last_tick + 1);
      last_tick = t;
      client.send_json({{"type", "action"}, {"action", std::string(kActionNames[keys.uniform(kNumActions)])}});
    }
    if (type == "gameEnd") {
      ((*m)["warmup"].get<bool>() ? warm_ends : exploit_ends) += 1;
      if (warm_ends == 4 && !ranked) {
        client.send_json({{"type", "ranking"}, {"order", {"C", "A", "D", "B"}}, {"comment", "über gut"}});
        ranked = true;
      }
    }
    if (type == "error") ADD_FAILURE() << m->dump();
    if (type == "stageChange" && (*m)["stage"] == "done") done = true;
  }
  client.send_json({{"type", "heartbeat"}});
  client.close();
  server.stop();

  EXPECT_GE(warm_ends, 4);
  EXPECT_EQ(exploit_ends, kScheduledGames);
  EXPECT_GT(deltas, kScheduledGames * 9);
  SessionStore store(dir);
  auto rankings = store.load_rankings();
  ASSERT_EQ(rankings.size(), 1u);
  EXPECT_EQ(rankings[0].comment, "über gut");
  EXPECT_EQ(rankings[0].slots, (std::vector<std::string>{"C", "A", "D", "B"}));
  int replayed = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir / session)) {
    if (entry.path().extension() != ".traj") continue;
    auto t = parse_trajectory(read_file(entry.path()));
    EXPECT_EQ(format_trajectory(resimulate(t, *sc.host.layout)), read_file(entry.path()));
    ++replayed;
  }
  EXPECT_GE(replayed, 4 + kScheduledGames);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace hsp
