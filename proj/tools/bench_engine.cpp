#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "hsp/engine.hpp"

// Single-thread engine throughput with uniformly random joint actions.
int main(int argc, char** argv) {
  std::filesystem::path dir = argc > 1 ? argv[1] : "layouts";
  long long steps = argc > 2 ? std::stoll(argv[2]) : 2000000;
  const char* names[] = {"asymmetric_advantages", "coordination_ring", "counter_circuit", "distant_tomato",
                         "many_orders"};
  hsp::Rng rng(1);
  std::vector<hsp::Action> acts(1 << 16);
  for (auto& a : acts) a = static_cast<hsp::Action>(rng.uniform(hsp::kNumActions));
  for (const char* name : names) {
    auto L = std::make_shared<const hsp::Layout>(hsp::load_layout(dir / (std::string(name) + ".layout")));
    hsp::GameState s = hsp::reset(L, 0);
    hsp::StepInfo info;
    double reward = 0;
    auto t0 = std::chrono::steady_clock::now();
    for (long long i = 0; i < steps; ++i) {
      if (s.done()) s = hsp::reset(L, 0);
      hsp::step_inplace(s, acts[(2 * i) & 0xffff], acts[(2 * i + 1) & 0xffff], info);
      reward += info.task_reward;
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%-22s %12.0f steps/s  (reward %.0f)\n", name, static_cast<double>(steps) / sec, reward);
  }
  return 0;
}
