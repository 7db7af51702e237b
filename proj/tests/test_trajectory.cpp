#include <gtest/gtest.h>

#include "hsp/trajectory.hpp"
#include "test_util.hpp"

using namespace hsp;
using namespace hsp::testing;

namespace {

Trajectory random_trajectory(std::shared_ptr<const Layout> L, std::uint64_t seed, int ticks) {
  Rng rng(seed);
  GameState s = reset(L, seed);
  TrajectoryRecorder rec(*L, seed);
  StepInfo info;
  for (int t = 0; t < ticks && !s.done(); ++t) {
    auto a0 = rng.uniform01() < 0.3 ? Action::Interact : static_cast<Action>(rng.uniform(6));
    auto a1 = rng.uniform01() < 0.3 ? Action::Interact : static_cast<Action>(rng.uniform(6));
    std::vector<EventRecord> evs;
    int tick = s.tick;
    step_inplace(s, a0, a1, info, &evs);
    rec.record(tick, a0, a1, info.task_reward, std::move(evs));
  }
  return rec.take();
}

}  // namespace

TEST(Trajectory, FormatParseRoundTrip) {
  auto L = layout("distant_tomato");
  Trajectory t = random_trajectory(L, 11, 400);
  std::string text = format_trajectory(t);
  Trajectory back = parse_trajectory(text);
  EXPECT_EQ(format_trajectory(back), text);
  EXPECT_EQ(back.layout_name, "distant_tomato");
  EXPECT_EQ(back.steps.size(), 400u);
  EXPECT_EQ(back.event_totals(), t.event_totals());
}

TEST(Trajectory, ResimulationIsByteIdentical) {
  for (const auto& name : all_layouts()) {
    auto L = layout(name);
    Trajectory t = random_trajectory(L, 5, L->episode_length);
    std::string text = format_trajectory(t);
    EXPECT_EQ(format_trajectory(resimulate(parse_trajectory(text), *L)), text) << name;
  }
}

TEST(Trajectory, RecordFormat) {
  TrajectoryStep st{3, Action::Up, Action::Interact, 20.0, {EventRecord{1, Event::SoupDelivery, Cell{4, 4}}}};
  EXPECT_EQ(format_step(st), "tick=3 a=up,interact r=20 ev=1:soup_delivery@4,4");
  st.events.clear();
  st.reward = 0;
  EXPECT_EQ(format_step(st), "tick=3 a=up,interact r=0 ev=-");
}

TEST(Trajectory, LayoutMismatchRejected) {
  auto L = layout("distant_tomato");
  Trajectory t = random_trajectory(L, 1, 10);
  try {
    resimulate(t, *layout("many_orders"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidArgument);
  }
}

TEST(Trajectory, MalformedInputs) {
  EXPECT_THROW(parse_trajectory(""), Error);
  EXPECT_THROW(parse_trajectory("layout=x layout_hash=00 seed=1 episode_length=3\ntick=0 a=up r=0 ev=-\nend ticks=1 score=0\n"),
               Error);
  EXPECT_THROW(parse_trajectory("layout=x layout_hash=00 seed=1 episode_length=3\ntick=0 a=up,jump r=0 ev=-\nend ticks=1 score=0\n"),
               Error);
  EXPECT_THROW(parse_trajectory("layout=x layout_hash=00 seed=1 episode_length=3\ntick=0 a=up,up r=0 ev=-\n"), Error);
}

TEST(Trajectory, ShippedFixturesReplay) {
  auto dir = source_dir() / "tests" / "fixtures";
  int n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".traj") continue;
    std::string text = read_file(entry.path());
    Trajectory t = parse_trajectory(text);
    auto L = load_layout(source_dir() / "layouts" / (t.layout_name + ".layout"));
    EXPECT_EQ(format_trajectory(resimulate(t, L)), text) << entry.path();
    ++n;
  }
  EXPECT_GE(n, 1);
}
