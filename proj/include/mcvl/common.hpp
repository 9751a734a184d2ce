#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mcvl {

/// Malformed or missing input data (files, records, unknown ids).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or other numeric breakdowns during computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape and precondition violations raise std::invalid_argument.

/// 64-bit FNV-1a. Used for config hashes, artifact checksums and as a
/// stable (platform-independent) string-to-seed map.
class Fnv1a {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= kPrime;
    }
    return *this;
  }

  Fnv1a& update(std::span<const std::byte> bytes) {
    for (std::byte b : bytes) {
      state_ ^= static_cast<unsigned char>(b);
      state_ *= kPrime;
    }
    return *this;
  }

  template <typename T>
  Fnv1a& update_pod(const T& value) {
    return update(std::as_bytes(std::span<const T, 1>(&value, 1)));
  }

  [[nodiscard]] std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a(std::string_view bytes) { return Fnv1a{}.update(bytes).digest(); }

/// 16 lowercase hex digits.
std::string to_hex(std::uint64_t value);

/// Checksum of a file's bytes; throws DataError if unreadable.
std::uint64_t file_checksum(const std::string& path);

}  // namespace mcvl
