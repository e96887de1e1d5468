#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace esrl {

using Vec = std::vector<double>;

// Bad configuration or CLI input; rejected before any compute starts.
class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or layout mismatch between data and a spec.
class StructuralError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite or otherwise unusable runtime input.
class InputError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wire-protocol violation between coordinator and worker.
class ProtocolError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void require_finite(std::span<const double> xs, const char* what) {
  if (!all_finite(xs)) throw InputError(std::string(what) + ": non-finite value");
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string u64_hex(std::uint64_t x) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[x & 0xf];
    x >>= 4;
  }
  return s;
}

// Version tag of a parameter vector (hash of its raw byte image).
inline std::string vec_digest(std::span<const double> v) {
  return u64_hex(fnv1a64(v.data(), v.size() * sizeof(double)));
}

// Shortest round-trip decimal text, locale-independent.
inline std::string format_double(double x) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, p);
}

inline double parse_double(std::string_view s) {
  double x{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ValidationError("bad float literal: '" + std::string(s) + "'");
  return x;
}

inline std::int64_t parse_int(std::string_view s) {
  std::int64_t x{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ValidationError("bad integer literal: '" + std::string(s) + "'");
  return x;
}

}  // namespace esrl
