#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace synthctl {

using Series = std::vector<double>;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Calendar day. Parsed from and printed as ISO-8601 (YYYY-MM-DD).
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days day) : day_(day) {}

  static Date parse(std::string_view iso);

  std::chrono::sys_days sys_days() const { return day_; }
  std::string to_string() const;

  Date operator+(int days) const { return Date(day_ + std::chrono::days(days)); }
  int operator-(const Date& other) const { return static_cast<int>((day_ - other.day_).count()); }
  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days day_{};
};

/// State postal code ("OH") or 5-digit county FIPS code ("39061").
class UnitId {
 public:
  UnitId() = default;
  explicit UnitId(std::string code);

  const std::string& code() const { return code_; }
  bool is_fips() const;

  auto operator<=>(const UnitId&) const = default;

 private:
  std::string code_;
};

std::vector<UnitId> to_unit_ids(const std::vector<std::string>& codes);

/// Half-open, zero-based range of day indices [begin, end).
struct IndexRange {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool operator==(const IndexRange&) const = default;
};

/// Counter-based generator: the same (seed, stream) pair always yields the same
/// sequence, independent of thread or call order.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  double uniform();  // (0, 1)
  double normal();

 private:
  std::uint64_t state_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_string(std::string_view s);

}  // namespace synthctl

template <>
struct std::hash<synthctl::UnitId> {
  std::size_t operator()(const synthctl::UnitId& id) const noexcept {
    return std::hash<std::string>{}(id.code());
  }
};
