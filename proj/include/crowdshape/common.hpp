#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crowdshape {

// Error taxonomy shared by every module.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OracleQualityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractViolation(what);
}

// ---------------------------------------------------------------------------
// Actions

enum class Action : std::uint8_t { North = 0, East = 1, South = 2, West = 3, Stay = 4 };

inline constexpr std::size_t kMaxActions = 5;
inline constexpr std::array<Action, kMaxActions> kAllActions = {
    Action::North, Action::East, Action::South, Action::West, Action::Stay};

constexpr std::size_t index_of(Action a) { return static_cast<std::size_t>(a); }

std::string_view to_string(Action a);
Action action_from_string(std::string_view name);
Action action_from_index(std::size_t id);

/// Fixed-capacity map keyed by Action. Keys keep insertion order; callers
/// insert legal actions in ActionId order so iteration order is canonical.
template <typename T>
class ActionMap {
 public:
  ActionMap() = default;

  void insert(Action a, T value) {
    for (std::size_t i = 0; i < size_; ++i) {
      if (keys_[i] == a) {
        values_[i] = value;
        return;
      }
    }
    require(size_ < kMaxActions, "ActionMap capacity exceeded");
    keys_[size_] = a;
    values_[size_] = value;
    ++size_;
  }

  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] bool empty() const { return size_ == 0; }
  [[nodiscard]] Action key(std::size_t i) const { return keys_[i]; }
  [[nodiscard]] const T& value(std::size_t i) const { return values_[i]; }
  T& value(std::size_t i) { return values_[i]; }

  [[nodiscard]] bool contains(Action a) const { return find(a) < size_; }

  [[nodiscard]] std::size_t find(Action a) const {
    for (std::size_t i = 0; i < size_; ++i) {
      if (keys_[i] == a) return i;
    }
    return size_;
  }

  [[nodiscard]] const T& at(Action a) const {
    const auto i = find(a);
    require(i < size_, "action not in support: " + std::string(to_string(a)));
    return values_[i];
  }

  template <typename U>
  [[nodiscard]] bool same_support(const ActionMap<U>& other) const {
    if (size_ != other.size()) return false;
    for (std::size_t i = 0; i < size_; ++i) {
      if (!other.contains(keys_[i])) return false;
    }
    return true;
  }

 private:
  std::array<Action, kMaxActions> keys_{};
  std::array<T, kMaxActions> values_{};
  std::size_t size_ = 0;
};

using ActionDistribution = ActionMap<double>;
using QRow = ActionMap<double>;
using DeltaRow = ActionMap<std::int64_t>;

/// Legal action set in ActionId order.
using ActionSet = ActionMap<bool>;

// ---------------------------------------------------------------------------
// Random streams

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  require(n > 0, "uniform_index over empty range");
  auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` of trial `trial` under `master`:
/// splitmix64(splitmix64(splitmix64(master) ^ trial) ^ stream).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial, std::uint64_t stream) {
  return splitmix64(splitmix64(splitmix64(master) ^ trial) ^ stream);
}

/// Stream tags for derive_seed. Trainer n uses kTrainerStreamBase + n.
inline constexpr std::uint64_t kEnvStream = 1;
inline constexpr std::uint64_t kAgentStream = 2;
inline constexpr std::uint64_t kTrainerStreamBase = 100;

/// 64-bit FNV-1a, used for layout fingerprints in manifests.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Shortest round-trip decimal representation.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace crowdshape
