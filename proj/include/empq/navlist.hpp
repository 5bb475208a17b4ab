#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "empq/disk_run.hpp"
#include "empq/io_sim.hpp"
#include "empq/sorter.hpp"

namespace empq {

/// One sub-structure as seen from its navigation list: the boundary key
/// (minimum key of the sub-structure) and the block chain of its buffer.
/// For base sets the "buffer" is the base set itself.
struct Representative {
  Record min_key;
  DiskRun chain;

  std::size_t buffered_count() const { return chain.length; }
};

/// Uncounted record stream over an in-memory sorted span.
class SpanSource {
 public:
  explicit SpanSource(std::span<const Record> records) : records_(records) {}
  bool done() const { return pos_ == records_.size(); }
  const Record& peek() const { return records_[pos_]; }
  Record next() { return records_[pos_++]; }

 private:
  std::span<const Record> records_;
  std::size_t pos_ = 0;
};

struct FlushReport {
  std::vector<std::size_t> appended;  // per target
  std::size_t buffer_size = 0;
  std::size_t targets = 0;
  std::uint64_t ios = 0;
};

/// Sorted list of representatives for t sub-structures, stored
/// contiguously on the device at max(1, B/4) representatives per block.
/// The in-memory vector mirrors the stored blocks; every structural change
/// rewrites the affected blocks so the I/O bill matches a disk-resident list.
///
/// Owns its storage blocks and the chains of its representatives.
class NavList {
 public:
  NavList() = default;
  NavList(NavList&& other) noexcept;
  NavList& operator=(NavList&& other) noexcept;
  NavList(const NavList&) = delete;
  NavList& operator=(const NavList&) = delete;
  ~NavList();

  /// Builds a list with empty buffers; `mins` must be strictly increasing.
  static NavList build(BlockDevice& device, std::span<const Record> mins, IoCause cause);
  static NavList from_reps(BlockDevice& device, std::vector<Representative> reps, IoCause cause);

  static std::size_t reps_per_block(std::size_t block_capacity);

  std::size_t size() const { return reps_.size(); }
  bool empty() const { return reps_.empty(); }
  const Representative& rep(std::size_t i) const { return reps_[i]; }
  Representative& rep(std::size_t i) { return reps_[i]; }
  const std::vector<Representative>& reps() const { return reps_; }
  const DiskRun& storage() const { return storage_; }

  /// Reads every storage block.
  void scan(IoCause cause);
  /// Rewrites the block holding representative i.
  void persist_rep(std::size_t i, IoCause cause);
  void set_min(std::size_t i, const Record& min_key, IoCause cause);

  /// Distributes an already sorted stream: keys in [min_i, min_{i+1}) go to
  /// chain i, the tail goes to the last chain.
  template <class Source>
  std::vector<std::size_t> distribute(Source& sorted, IoCause cause);

  /// front = reps [0, k), back = reps [k, t).
  std::pair<NavList, NavList> split(std::size_t k, IoCause cause) &&;

  /// Splits right before the first representative r_k whose prefix of
  /// sub-structure sizes (sizes of r_0..r_{k-1}) exceeds `threshold`.
  std::pair<NavList, NavList> split_at_prefix(std::span<const std::size_t> sizes,
                                              std::size_t threshold, IoCause cause) &&;

  static NavList attach(NavList front, NavList back, IoCause cause);

  /// Moves every chain out, leaving the list with empty buffers.
  std::vector<DiskRun> take_chains();
  /// Moves the representatives out and frees the storage blocks.
  std::vector<Representative> take_reps();

  /// Checks order and that the stored blocks decode to the mirror.
  void audit(const char* where) const;

 private:
  explicit NavList(BlockDevice& device) : device_(&device) {}
  std::size_t per_block() const;
  std::vector<Record> encode_block(std::size_t block_index) const;
  void write_storage_block(std::size_t block_index, IoCause cause);
  void release_all();

  BlockDevice* device_ = nullptr;
  std::vector<Representative> reps_;
  DiskRun storage_;  // blocks only; length counts representatives
};

/// Index k of the first representative whose size prefix exceeds
/// `threshold`, i.e. the smallest k with sizes[0] + ... + sizes[k-1] > threshold.
std::size_t prefix_cut_index(std::span<const std::size_t> sizes, std::size_t threshold);

/// Memory flush form: sorts in memory (no I/O) and distributes.
FlushReport flush_via(BlockDevice& device, std::vector<Record> buffer, NavList& nav,
                      IoCause cause);
/// Disk buffer form: sorts through the black box, then distributes. The
/// buffer's blocks are consumed.
FlushReport flush_via(BlockDevice& device, DiskRun buffer, NavList& nav, Sorter& sorter,
                      IoCause cause);

template <class Source>
std::vector<std::size_t> NavList::distribute(Source& sorted, IoCause cause) {
  std::vector<std::size_t> appended(reps_.size(), 0);
  if (reps_.empty()) {
    if (!sorted.done()) throw Error("key under-runs navigation list");
    return appended;
  }
  scan(IoCause::navlist);
  if (!sorted.done() && key_less(sorted.peek(), reps_.front().min_key))
    throw Error("key under-runs navigation list");

  std::size_t i = 0;
  std::optional<RunWriter> writer;
  std::vector<bool> dirty_blocks(storage_.blocks.size(), false);
  const std::size_t per = per_block();
  while (!sorted.done()) {
    const Record& r = sorted.peek();
    std::size_t j = i;
    while (j + 1 < reps_.size() && !key_less(r, reps_[j + 1].min_key)) ++j;
    if (j != i || !writer) {
      if (writer) writer->finish();
      i = j;
      writer.emplace(*device_, reps_[i].chain, cause);
      dirty_blocks[i / per] = true;
    }
    writer->push(sorted.next());
    ++appended[i];
  }
  if (writer) writer->finish();
  for (std::size_t b = 0; b < dirty_blocks.size(); ++b)
    if (dirty_blocks[b]) write_storage_block(b, IoCause::navlist);
  return appended;
}

}  // namespace empq
