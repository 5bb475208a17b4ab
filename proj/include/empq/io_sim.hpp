#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "empq/record.hpp"

namespace empq {

/// What an I/O was spent on. Every read or write carries exactly one cause.
enum class IoCause : std::uint8_t { sort = 0, flush, rebalance, rebuild, navlist };
inline constexpr std::size_t kIoCauseCount = 5;

std::string_view to_string(IoCause cause);

struct BlockId {
  std::uint64_t id = 0;
  friend auto operator<=>(const BlockId&, const BlockId&) = default;
};

using Block = std::vector<Record>;

struct DeviceConfig {
  std::size_t block_capacity_records = 16;      // B
  std::size_t internal_memory_records = 2176;   // M
  bool enforce_residency = false;

  /// Throws Error when B < 2 or M < 4B.
  void validate() const;
};

struct CauseCounts {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  friend bool operator==(const CauseCounts&, const CauseCounts&) = default;
};

struct IoReport {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::array<CauseCounts, kIoCauseCount> per_cause{};
  std::uint64_t peak_allocated_blocks = 0;
  std::uint64_t peak_resident_records = 0;

  std::uint64_t total() const { return reads + writes; }
  const CauseCounts& operator[](IoCause c) const {
    return per_cause[static_cast<std::size_t>(c)];
  }
  friend bool operator==(const IoReport&, const IoReport&) = default;
};

/// Client-declared in-memory record pools that count against M.
enum class MemoryPool : std::uint8_t { head = 0, memory_buffer, working };

/// Simulated external memory: a store of B-record blocks with exact I/O
/// counting. Every read_block/write_block is one I/O; there is no caching.
///
/// When residency enforcement is on, the device keeps a ledger of records
/// that have been read into internal memory and not yet written back or
/// released, plus the sizes of the client's declared pools. The sum may
/// never exceed M. Reads made while a SortScope is active are charged to a
/// separate ledger bounded by the sorter's own memory budget.
class BlockDevice {
 public:
  explicit BlockDevice(DeviceConfig config);

  BlockDevice(const BlockDevice&) = delete;
  BlockDevice& operator=(const BlockDevice&) = delete;

  const DeviceConfig& config() const { return config_; }
  std::size_t block_capacity() const { return config_.block_capacity_records; }

  BlockId alloc_block();
  void free_block(BlockId id);

  Block read_block(BlockId id, IoCause cause);
  void read_block_into(BlockId id, IoCause cause, Block& out);
  void write_block(BlockId id, std::span<const Record> records, IoCause cause);

  /// Uncounted access for audits and tests.
  std::span<const Record> peek(BlockId id) const;
  bool is_allocated(BlockId id) const;

  std::size_t allocated_blocks() const { return allocated_; }
  IoReport report() const;
  void reset();

  /// Drops `records` from the residency ledger (data read and discarded).
  void release(std::size_t records);
  /// Declares that the client holds no checked-out blocks right now.
  void settle() { ledger_ = 0; }
  void set_pool(MemoryPool pool, std::size_t records);
  std::size_t resident_records() const;

  /// Enables the `R|W <block_id> <cause>` trace. Pass nullptr to disable.
  void set_trace(std::ostream* out) { trace_ = out; }

  /// While alive, I/O residency is charged against `budget` instead of M.
  class SortScope {
   public:
    SortScope(BlockDevice& device, std::size_t budget);
    ~SortScope();
    SortScope(const SortScope&) = delete;
    SortScope& operator=(const SortScope&) = delete;

   private:
    BlockDevice& device_;
    std::size_t saved_budget_;
    std::size_t saved_ledger_;
    bool saved_active_;
  };

 private:
  struct Slot {
    Block data;
    bool live = false;
  };

  Slot& slot(BlockId id, const char* what);
  const Slot& slot(BlockId id, const char* what) const;
  void charge(IoCause cause, bool is_write, BlockId id);
  void check_residency();

  DeviceConfig config_;
  std::vector<Slot> slots_;
  std::vector<std::uint64_t> free_ids_;
  std::size_t allocated_ = 0;
  IoReport report_;
  std::ostream* trace_ = nullptr;

  std::size_t ledger_ = 0;
  std::array<std::size_t, 3> pools_{};
  bool sort_active_ = false;
  std::size_t sort_ledger_ = 0;
  std::size_t sort_budget_ = 0;
};

}  // namespace empq
