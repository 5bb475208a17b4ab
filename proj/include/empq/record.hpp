#pragma once

#include <compare>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>

namespace empq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by audits and stage-boundary checks when a structural invariant
/// does not hold.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

enum class RecordKind : std::uint8_t { insert = 0, delete_signal = 1 };

/// The unit stored in blocks. Records are ordered by (value, seq); a delete
/// signal always carries a larger seq than the insert it cancels, so after
/// sorting it directly follows its target.
struct Record {
  std::uint64_t value = 0;
  std::uint64_t seq = 0;
  RecordKind kind = RecordKind::insert;

  bool is_signal() const { return kind == RecordKind::delete_signal; }

  friend bool operator==(const Record&, const Record&) = default;
};

inline bool key_less(const Record& a, const Record& b) {
  return a.value != b.value ? a.value < b.value : a.seq < b.seq;
}

struct KeyLess {
  bool operator()(const Record& a, const Record& b) const { return key_less(a, b); }
};

inline std::ostream& operator<<(std::ostream& os, const Record& r) {
  return os << (r.is_signal() ? "D(" : "I(") << r.value << '@' << r.seq << ')';
}

}  // namespace empq
