#include "empq/disk_run.hpp"

#include <exception>

namespace empq {

void free_run(BlockDevice& device, DiskRun& run) {
  for (BlockId id : run.blocks) device.free_block(id);
  run.blocks.clear();
  run.length = 0;
}

DiskRun write_run(BlockDevice& device, std::span<const Record> records, IoCause cause) {
  DiskRun run;
  const std::size_t b = device.block_capacity();
  for (std::size_t i = 0; i < records.size(); i += b) {
    BlockId id = device.alloc_block();
    device.write_block(id, records.subspan(i, std::min(b, records.size() - i)), cause);
    run.blocks.push_back(id);
  }
  run.length = records.size();
  return run;
}

std::vector<Record> read_run(BlockDevice& device, const DiskRun& run, IoCause cause) {
  std::vector<Record> out;
  out.reserve(run.length);
  Block tmp;
  for (BlockId id : run.blocks) {
    device.read_block_into(id, cause, tmp);
    out.insert(out.end(), tmp.begin(), tmp.end());
  }
  device.release(out.size());
  return out;
}

std::vector<Record> peek_run(const BlockDevice& device, const DiskRun& run) {
  std::vector<Record> out;
  out.reserve(run.length);
  for (BlockId id : run.blocks) {
    auto span = device.peek(id);
    out.insert(out.end(), span.begin(), span.end());
  }
  return out;
}

RunReader::RunReader(BlockDevice& device, std::vector<DiskRun> runs, IoCause cause,
                     bool free_consumed)
    : device_(device), cause_(cause), free_consumed_(free_consumed) {
  for (auto& r : runs) {
    blocks_.insert(blocks_.end(), r.blocks.begin(), r.blocks.end());
    remaining_ += r.length;
  }
}

RunReader::RunReader(BlockDevice& device, DiskRun run, IoCause cause, bool free_consumed)
    : RunReader(device, std::vector<DiskRun>{std::move(run)}, cause, free_consumed) {}

RunReader::~RunReader() {
  // Unread blocks still belong to the reader when it owns its input.
  if (!free_consumed_) return;
  if (pos_ < buffer_.size()) device_.release(buffer_.size() - pos_);
  for (std::size_t i = next_block_; i < blocks_.size(); ++i)
    if (device_.is_allocated(blocks_[i])) device_.free_block(blocks_[i]);
}

void RunReader::fill() {
  while (pos_ >= buffer_.size()) {
    if (next_block_ >= blocks_.size()) throw Error("run reader exhausted");
    BlockId id = blocks_[next_block_++];
    device_.read_block_into(id, cause_, buffer_);
    pos_ = 0;
    if (free_consumed_) device_.free_block(id);
  }
}

const Record& RunReader::peek() {
  fill();
  return buffer_[pos_];
}

Record RunReader::next() {
  fill();
  --remaining_;
  return buffer_[pos_++];
}

RunWriter::RunWriter(BlockDevice& device, DiskRun& target, IoCause cause)
    : device_(device), target_(target), cause_(cause) {
  buffer_.reserve(device.block_capacity());
}

RunWriter::~RunWriter() {
  if (finished_ || std::uncaught_exceptions() > 0) return;
  finish();
}

void RunWriter::push(const Record& r) {
  if (!loaded_) {
    loaded_ = true;
    const std::size_t b = device_.block_capacity();
    if (target_.length % b != 0) {
      device_.read_block_into(target_.blocks.back(), cause_, buffer_);
      reuse_last_ = true;
    }
  }
  buffer_.push_back(r);
  ++appended_;
  ++target_.length;
  if (buffer_.size() == device_.block_capacity()) flush_block();
}

void RunWriter::flush_block() {
  BlockId id;
  if (reuse_last_) {
    id = target_.blocks.back();
    reuse_last_ = false;
  } else {
    id = device_.alloc_block();
    target_.blocks.push_back(id);
  }
  device_.write_block(id, buffer_, cause_);
  buffer_.clear();
}

void RunWriter::finish() {
  if (finished_) return;
  finished_ = true;
  if (!buffer_.empty()) flush_block();
}

}  // namespace empq
