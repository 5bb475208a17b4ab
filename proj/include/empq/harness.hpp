#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "empq/io_sim.hpp"
#include "empq/pq.hpp"
#include "empq/sorter.hpp"
#include "empq/workload.hpp"

namespace empq {

struct RunConfig {
  std::size_t block_size = 16;
  std::size_t c = 17;
  std::optional<std::size_t> memory;       // default 8cB
  std::optional<std::size_t> sort_memory;  // default = memory
  std::string sorter = "merge";
  bool check_oracle = false;
  bool check_invariants = false;
  std::size_t deep_audit_every = 0;
  bool enforce_residency = false;
  bool record_flushes = false;
  std::optional<std::vector<std::uint64_t>> force_layers;
  std::ostream* trace_io = nullptr;

  std::size_t memory_records() const { return memory.value_or(8 * c * block_size); }
  std::size_t sort_memory_records() const { return sort_memory.value_or(memory_records()); }
};

struct RunSummary {
  std::array<std::uint64_t, 4> ops{};  // indexed by OpKind
  IoReport io;
  std::uint64_t updates = 0;           // I + D + X
  std::uint64_t peak_live = 0;         // N
  Rational amortized;                  // total I/Os per update
  Rational bound;
  double ratio = 0;
  std::uint64_t rebuild_count = 0;
  std::uint64_t max_rebuilds_in_window = 0;
  std::uint64_t peak_blocks = 0;
};

struct RunResult {
  RunSummary summary;
  /// Output of every F and X; nullopt when the queue was empty.
  std::vector<std::optional<std::uint64_t>> transcript;
  PQStats stats;
};

class OracleMismatch : public Error {
 public:
  OracleMismatch(std::size_t op_index, const std::string& what)
      : Error(what), op_index_(op_index) {}
  std::size_t op_index() const { return op_index_; }

 private:
  std::size_t op_index_;
};

/// An invariant violation together with the structure at the time.
class AuditFailure : public InvariantViolation {
 public:
  AuditFailure(std::size_t op_index, const std::string& what, std::string dump)
      : InvariantViolation(what), op_index_(op_index), dump_(std::move(dump)) {}
  std::size_t op_index() const { return op_index_; }
  const std::string& dump() const { return dump_; }

 private:
  std::size_t op_index_;
  std::string dump_;
};

/// (1/B) * sum_i S(B * ceil(log2^(i)(N/B))), over i while the iterated
/// logarithm exceeds 1 (at least one term).
Rational compute_bound(const Sorter& sorter, std::uint64_t n, std::size_t block_size);

/// Most rebuilds falling in any window [u_r, u_r + max(1, n_r / 8)) that
/// starts at a rebuild r, where n_r is the size that rebuild produced.
std::uint64_t max_rebuilds_per_window(const std::vector<RebuildEvent>& log);

RunResult run_workload(const std::vector<WorkloadOp>& ops, const RunConfig& config);

std::string format_transcript_entry(const std::optional<std::uint64_t>& v);
void write_summary(std::ostream& out, const RunSummary& s);

struct SweepRow {
  std::uint64_t n;
  std::size_t b;
  std::string kind;
  RunSummary summary;
};

std::vector<SweepRow> run_sweep(const std::vector<std::uint64_t>& n_list,
                                const std::vector<std::size_t>& b_list,
                                const std::vector<std::string>& kinds, const RunConfig& base,
                                std::uint64_t seed);

inline constexpr const char* kSweepHeader =
    "n,b,kind,total_ios,amortized,bound,ratio,rebuilds,peak_blocks";
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace empq
