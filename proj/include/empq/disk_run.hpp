#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "empq/io_sim.hpp"

namespace empq {

/// A record sequence stored as a chain of blocks. Only the last block may be
/// non-full, so appends touch at most the final block.
struct DiskRun {
  std::vector<BlockId> blocks;
  std::size_t length = 0;

  bool empty() const { return length == 0; }
};

void free_run(BlockDevice& device, DiskRun& run);

/// Writes `records` into fresh full blocks.
DiskRun write_run(BlockDevice& device, std::span<const Record> records, IoCause cause);

/// Reads every block of `run` (counted) and returns the records in order.
std::vector<Record> read_run(BlockDevice& device, const DiskRun& run, IoCause cause);

/// Uncounted snapshot of a run's records.
std::vector<Record> peek_run(const BlockDevice& device, const DiskRun& run);

/// Streams the records of a sequence of runs block by block. Blocks may be
/// partially filled anywhere; each block read costs one I/O. When
/// `free_consumed` is set, each block is freed once it has been consumed.
class RunReader {
 public:
  RunReader(BlockDevice& device, std::vector<DiskRun> runs, IoCause cause, bool free_consumed);
  RunReader(BlockDevice& device, DiskRun run, IoCause cause, bool free_consumed);
  ~RunReader();

  RunReader(const RunReader&) = delete;
  RunReader& operator=(const RunReader&) = delete;

  bool done() const { return remaining_ == 0; }
  std::size_t remaining() const { return remaining_; }
  const Record& peek();
  Record next();

 private:
  void fill();

  BlockDevice& device_;
  std::vector<BlockId> blocks_;
  std::size_t next_block_ = 0;
  Block buffer_;
  std::size_t pos_ = 0;
  std::size_t remaining_ = 0;
  IoCause cause_;
  bool free_consumed_;
};

/// Appends records to the end of a run. Reads the run's partial last block
/// at most once, and writes each block when it fills or on finish().
class RunWriter {
 public:
  RunWriter(BlockDevice& device, DiskRun& target, IoCause cause);
  ~RunWriter();

  RunWriter(const RunWriter&) = delete;
  RunWriter& operator=(const RunWriter&) = delete;

  void push(const Record& r);
  void finish();
  std::size_t appended() const { return appended_; }

 private:
  void flush_block();

  BlockDevice& device_;
  DiskRun& target_;
  IoCause cause_;
  Block buffer_;
  bool loaded_ = false;
  bool reuse_last_ = false;
  bool finished_ = false;
  std::size_t appended_ = 0;
};

}  // namespace empq
