#include "empq/io_sim.hpp"

#include <algorithm>
#include <ostream>
#include <string>

namespace empq {

std::string_view to_string(IoCause cause) {
  switch (cause) {
    case IoCause::sort: return "sort";
    case IoCause::flush: return "flush";
    case IoCause::rebalance: return "rebalance";
    case IoCause::rebuild: return "rebuild";
    case IoCause::navlist: return "navlist";
  }
  return "unknown";
}

void DeviceConfig::validate() const {
  if (block_capacity_records < 2) throw Error("block capacity must be at least 2 records");
  if (internal_memory_records < 4 * block_capacity_records)
    throw Error("internal memory must hold at least 4 blocks");
}

BlockDevice::BlockDevice(DeviceConfig config) : config_(config) { config_.validate(); }

BlockDevice::Slot& BlockDevice::slot(BlockId id, const char* what) {
  if (id.id >= slots_.size() || !slots_[id.id].live)
    throw Error(std::string("invalid block id ") + std::to_string(id.id) + " (" + what + ")");
  return slots_[id.id];
}

const BlockDevice::Slot& BlockDevice::slot(BlockId id, const char* what) const {
  if (id.id >= slots_.size() || !slots_[id.id].live)
    throw Error(std::string("invalid block id ") + std::to_string(id.id) + " (" + what + ")");
  return slots_[id.id];
}

BlockId BlockDevice::alloc_block() {
  BlockId id;
  if (!free_ids_.empty()) {
    id.id = free_ids_.back();
    free_ids_.pop_back();
  } else {
    id.id = slots_.size();
    slots_.emplace_back();
    slots_.back().data.reserve(config_.block_capacity_records);
  }
  Slot& s = slots_[id.id];
  s.live = true;
  s.data.clear();
  ++allocated_;
  report_.peak_allocated_blocks =
      std::max<std::uint64_t>(report_.peak_allocated_blocks, allocated_);
  return id;
}

void BlockDevice::free_block(BlockId id) {
  Slot& s = slot(id, "free");
  s.live = false;
  s.data.clear();
  free_ids_.push_back(id.id);
  --allocated_;
}

void BlockDevice::charge(IoCause cause, bool is_write, BlockId id) {
  auto& c = report_.per_cause[static_cast<std::size_t>(cause)];
  if (is_write) {
    ++report_.writes;
    ++c.writes;
  } else {
    ++report_.reads;
    ++c.reads;
  }
  if (trace_) *trace_ << (is_write ? 'W' : 'R') << ' ' << id.id << ' ' << to_string(cause) << '\n';
}

Block BlockDevice::read_block(BlockId id, IoCause cause) {
  Block out;
  read_block_into(id, cause, out);
  return out;
}

void BlockDevice::read_block_into(BlockId id, IoCause cause, Block& out) {
  const Slot& s = slot(id, "read");
  out.assign(s.data.begin(), s.data.end());
  charge(cause, false, id);
  auto& ledger = sort_active_ ? sort_ledger_ : ledger_;
  ledger += out.size();
  try {
    check_residency();
  } catch (...) {
    ledger -= out.size();
    throw;
  }
}

void BlockDevice::write_block(BlockId id, std::span<const Record> records, IoCause cause) {
  if (records.size() > config_.block_capacity_records) throw Error("block overflow");
  Slot& s = slot(id, "write");
  s.data.assign(records.begin(), records.end());
  charge(cause, true, id);
  auto& ledger = sort_active_ ? sort_ledger_ : ledger_;
  ledger -= std::min(ledger, records.size());
}

std::span<const Record> BlockDevice::peek(BlockId id) const { return slot(id, "peek").data; }

bool BlockDevice::is_allocated(BlockId id) const {
  return id.id < slots_.size() && slots_[id.id].live;
}

IoReport BlockDevice::report() const { return report_; }

void BlockDevice::reset() {
  report_ = IoReport{};
  report_.peak_allocated_blocks = allocated_;
  report_.peak_resident_records = resident_records();
}

void BlockDevice::release(std::size_t records) {
  auto& ledger = sort_active_ ? sort_ledger_ : ledger_;
  ledger -= std::min(ledger, records);
}

void BlockDevice::set_pool(MemoryPool pool, std::size_t records) {
  pools_[static_cast<std::size_t>(pool)] = records;
  check_residency();
}

std::size_t BlockDevice::resident_records() const {
  std::size_t total = ledger_;
  for (auto p : pools_) total += p;
  return total;
}

void BlockDevice::check_residency() {
  const std::size_t resident = resident_records();
  report_.peak_resident_records =
      std::max<std::uint64_t>(report_.peak_resident_records, resident);
  if (!config_.enforce_residency) return;
  if (resident > config_.internal_memory_records)
    throw Error("internal memory exceeded: " + std::to_string(resident) + " > " +
                std::to_string(config_.internal_memory_records) + " records");
  if (sort_active_ && sort_ledger_ > sort_budget_)
    throw Error("internal memory exceeded by sorter: " + std::to_string(sort_ledger_) + " > " +
                std::to_string(sort_budget_) + " records");
}

BlockDevice::SortScope::SortScope(BlockDevice& device, std::size_t budget)
    : device_(device),
      saved_budget_(device.sort_budget_),
      saved_ledger_(device.sort_ledger_),
      saved_active_(device.sort_active_) {
  device_.sort_active_ = true;
  device_.sort_budget_ = budget;
  device_.sort_ledger_ = 0;
}

BlockDevice::SortScope::~SortScope() {
  device_.sort_active_ = saved_active_;
  device_.sort_budget_ = saved_budget_;
  device_.sort_ledger_ = saved_ledger_;
}

}  // namespace empq
