#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace empq {

enum class OpKind : std::uint8_t { insert, erase, findmin, deletemin };

struct WorkloadOp {
  OpKind op;
  std::uint64_t value = 0;  // used by insert and erase
  friend bool operator==(const WorkloadOp&, const WorkloadOp&) = default;
};

/// uniform:  n ops, 50% inserts of random keys, 25% deletes of a random live
///           key, 25% findmin.
/// sorted:   n ascending inserts, then n deletemins.
/// reversed: n descending inserts, then n deletemins.
/// heapsort: n random inserts, then n deletemins.
/// churn:    n ops, 50% insert, 40% deletemin, 10% findmin; deletemin and
///           findmin on an empty queue become inserts.
std::vector<WorkloadOp> generate_workload(const std::string& kind, std::uint64_t n,
                                          std::uint64_t seed);

const std::vector<std::string>& workload_kinds();

/// One op per line: `I <v>`, `D <v>`, `F` or `X`.
void write_workload(std::ostream& out, const std::vector<WorkloadOp>& ops);
std::vector<WorkloadOp> read_workload(std::istream& in);

/// First violation of the live-key contract (duplicate live insert or a
/// delete of a key that is not live), as "op <index>: <reason>".
std::optional<std::string> validate_workload(const std::vector<WorkloadOp>& ops);

}  // namespace empq
