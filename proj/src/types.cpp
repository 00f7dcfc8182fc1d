#include "synthctl/types.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "synthctl/error.hpp"

namespace synthctl {

namespace {

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

Date Date::parse(std::string_view iso) {
  int y = 0, m = 0, d = 0;
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' || !parse_int(iso.substr(0, 4), y) ||
      !parse_int(iso.substr(5, 2), m) || !parse_int(iso.substr(8, 2), d)) {
    throw Error(ErrorCode::UnparseableDate, fmt::format("'{}' is not an ISO date", iso));
  }
  std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(static_cast<unsigned>(m)),
                                  std::chrono::day(static_cast<unsigned>(d))};
  if (!ymd.ok()) {
    throw Error(ErrorCode::UnparseableDate, fmt::format("'{}' is not a calendar date", iso));
  }
  return Date(std::chrono::sys_days(ymd));
}

std::string Date::to_string() const {
  std::chrono::year_month_day ymd{day_};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

UnitId::UnitId(std::string code) : code_(std::move(code)) {
  if (code_.empty()) throw Error(ErrorCode::InvalidArgument, "unit identifier is empty");
  bool all_digits = std::all_of(code_.begin(), code_.end(), [](unsigned char c) { return std::isdigit(c); });
  if (all_digits && code_.size() != 5) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("numeric unit '{}' is not a 5-digit FIPS code", code_));
  }
}

bool UnitId::is_fips() const {
  return code_.size() == 5 &&
         std::all_of(code_.begin(), code_.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::vector<UnitId> to_unit_ids(const std::vector<std::string>& codes) {
  std::vector<UnitId> ids;
  ids.reserve(codes.size());
  for (const auto& c : codes) ids.emplace_back(c);
  return ids;
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
}

double SplitMix64::normal() {
  double u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  SplitMix64 g(a ^ (b * 0xD1B54A32D192ED03ULL));
  g.next();
  return g.next();
}

std::uint64_t hash_string(std::string_view s) {
  // FNV-1a; stable across platforms unlike std::hash.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace synthctl
