#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace hsp {

// Error codes for every failure the library reports. Each maps to one of the
// named failure modes of the public operations.
enum class Errc {
  MissingStart,
  NoPot,
  RaggedGrid,
  UnknownChar,
  InvalidLayout,
  SteppedAfterDone,
  DimensionMismatch,
  EmptyCandidateSet,
  NonConvergence,
  EmptyPool,
  KOutOfRange,
  SingletonSet,
  InsufficientCandidates,
  ZeroProbabilityAction,
  MissingAgent,
  UnknownLayout,
  UnknownAgent,
  SessionClosed,
  NotAPermutation,
  WrongStage,
  InvalidArgument,
  ParseError,
  IoError,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::MissingStart: return "MissingStart";
    case Errc::NoPot: return "NoPot";
    case Errc::RaggedGrid: return "RaggedGrid";
    case Errc::UnknownChar: return "UnknownChar";
    case Errc::InvalidLayout: return "InvalidLayout";
    case Errc::SteppedAfterDone: return "SteppedAfterDone";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyCandidateSet: return "EmptyCandidateSet";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::EmptyPool: return "EmptyPool";
    case Errc::KOutOfRange: return "KOutOfRange";
    case Errc::SingletonSet: return "SingletonSet";
    case Errc::InsufficientCandidates: return "InsufficientCandidates";
    case Errc::ZeroProbabilityAction: return "ZeroProbabilityAction";
    case Errc::MissingAgent: return "MissingAgent";
    case Errc::UnknownLayout: return "UnknownLayout";
    case Errc::UnknownAgent: return "UnknownAgent";
    case Errc::SessionClosed: return "SessionClosed";
    case Errc::NotAPermutation: return "NotAPermutation";
    case Errc::WrongStage: return "WrongStage";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// splitmix64 finalizer; used to derive independent seeds for sub-streams.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) {
  return mix64(mix64(seed) ^ mix64(a + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

// Seeded random stream. Value type; copying forks the stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(mix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, n).
  std::size_t uniform(std::size_t n) {
    if (n <= 1) return 0;
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(engine_);
  }

  double uniform01() { return std::generate_canonical<double, 53>(engine_); }

  double normal() {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(engine_);
  }

  // Sample an index from an unnormalized non-negative weight list.
  template <typename Range>
  std::size_t categorical(const Range& weights) {
    double total = 0.0;
    for (auto w : weights) total += static_cast<double>(w);
    double u = uniform01() * total;
    std::size_t i = 0, last = 0;
    for (auto w : weights) {
      if (static_cast<double>(w) > 0.0) last = i;
      u -= static_cast<double>(w);
      if (u < 0.0) return i;
      ++i;
    }
    return last;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a 64-bit, used for content hashes of logs, manifests and parameters.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    auto p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.digest();
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// Worker count: explicit value wins, then HSP_WORKERS, then 1.
inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HSP_WORKERS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

// Run fn(i) for i in [0, n) on up to `workers` threads. Indices are assigned
// in contiguous blocks so results written by index are schedule-independent.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::size_t w = static_cast<std::size_t>(std::max(1, workers));
  w = std::min(w, n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(w);
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      std::size_t begin = n * t / w, end = n * (t + 1) / w;
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Shortest round-trip decimal form of a double.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace hsp
