#include "empq/navlist.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace empq {
namespace {

constexpr std::uint64_t kNoBlock = std::numeric_limits<std::uint64_t>::max();

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

std::size_t NavList::reps_per_block(std::size_t block_capacity) {
  return std::max<std::size_t>(1, block_capacity / 4);
}

std::size_t NavList::per_block() const { return reps_per_block(device_->block_capacity()); }

NavList::NavList(NavList&& other) noexcept
    : device_(std::exchange(other.device_, nullptr)),
      reps_(std::move(other.reps_)),
      storage_(std::move(other.storage_)) {
  other.reps_.clear();
  other.storage_ = {};
}

NavList& NavList::operator=(NavList&& other) noexcept {
  if (this != &other) {
    release_all();
    device_ = std::exchange(other.device_, nullptr);
    reps_ = std::move(other.reps_);
    storage_ = std::move(other.storage_);
    other.reps_.clear();
    other.storage_ = {};
  }
  return *this;
}

NavList::~NavList() { release_all(); }

void NavList::release_all() {
  if (!device_) return;
  for (auto& r : reps_) free_run(*device_, r.chain);
  free_run(*device_, storage_);
  reps_.clear();
}

std::vector<Record> NavList::encode_block(std::size_t block_index) const {
  // Four record slots per representative: boundary key, buffered count with
  // last block id, last block fill, padding. Devices with B < 4 keep a prefix.
  const std::size_t per = per_block();
  const std::size_t b = device_->block_capacity();
  const std::size_t slots = std::min<std::size_t>(4, b);
  std::vector<Record> out;
  for (std::size_t i = block_index * per; i < std::min(reps_.size(), (block_index + 1) * per); ++i) {
    const auto& r = reps_[i];
    const std::uint64_t last = r.chain.blocks.empty() ? kNoBlock : r.chain.blocks.back().id;
    const Record enc[4] = {
        r.min_key,
        Record{r.chain.length, last, RecordKind::insert},
        Record{r.chain.length % b, r.chain.blocks.size(), RecordKind::insert},
        Record{},
    };
    out.insert(out.end(), enc, enc + slots);
  }
  return out;
}

void NavList::write_storage_block(std::size_t block_index, IoCause cause) {
  device_->write_block(storage_.blocks[block_index], encode_block(block_index), cause);
}

NavList NavList::build(BlockDevice& device, std::span<const Record> mins, IoCause cause) {
  for (std::size_t i = 1; i < mins.size(); ++i)
    if (!key_less(mins[i - 1], mins[i])) throw Error("navigation list mins not strictly increasing");
  std::vector<Representative> reps(mins.size());
  for (std::size_t i = 0; i < mins.size(); ++i) reps[i].min_key = mins[i];
  return from_reps(device, std::move(reps), cause);
}

NavList NavList::from_reps(BlockDevice& device, std::vector<Representative> reps, IoCause cause) {
  NavList nav(device);
  nav.reps_ = std::move(reps);
  for (std::size_t i = 1; i < nav.reps_.size(); ++i)
    if (!key_less(nav.reps_[i - 1].min_key, nav.reps_[i].min_key))
      throw Error("navigation list mins not strictly increasing");
  const std::size_t blocks = ceil_div(nav.reps_.size(), nav.per_block());
  for (std::size_t b = 0; b < blocks; ++b) {
    nav.storage_.blocks.push_back(device.alloc_block());
    nav.write_storage_block(b, cause);
  }
  nav.storage_.length = nav.reps_.size();
  return nav;
}

void NavList::scan(IoCause cause) {
  Block tmp;
  for (BlockId id : storage_.blocks) {
    device_->read_block_into(id, cause, tmp);
    device_->release(tmp.size());
  }
}

void NavList::persist_rep(std::size_t i, IoCause cause) { write_storage_block(i / per_block(), cause); }

void NavList::set_min(std::size_t i, const Record& min_key, IoCause cause) {
  if ((i > 0 && !key_less(reps_[i - 1].min_key, min_key)) ||
      (i + 1 < reps_.size() && !key_less(min_key, reps_[i + 1].min_key)))
    throw Error("navigation list ordering violation");
  reps_[i].min_key = min_key;
  persist_rep(i, cause);
}

std::pair<NavList, NavList> NavList::split(std::size_t k, IoCause cause) && {
  if (k > reps_.size()) throw Error("split index out of range");
  BlockDevice& device = *device_;
  const std::size_t per = per_block();
  NavList front(device);
  NavList back(device);
  back.reps_.assign(std::make_move_iterator(reps_.begin() + k), std::make_move_iterator(reps_.end()));
  reps_.resize(k);
  front.reps_ = std::move(reps_);
  reps_.clear();

  const std::size_t front_blocks = ceil_div(k, per);
  if (k % per == 0) {
    // Block-aligned cut: both halves keep their blocks, only pointers move.
    front.storage_.blocks.assign(storage_.blocks.begin(), storage_.blocks.begin() + front_blocks);
    back.storage_.blocks.assign(storage_.blocks.begin() + front_blocks, storage_.blocks.end());
  } else {
    front.storage_.blocks.assign(storage_.blocks.begin(), storage_.blocks.begin() + front_blocks);
    Block tmp;
    for (std::size_t b = front_blocks - 1; b < storage_.blocks.size(); ++b) {
      device.read_block_into(storage_.blocks[b], cause, tmp);
      device.release(tmp.size());
    }
    for (std::size_t b = front_blocks; b < storage_.blocks.size(); ++b)
      device.free_block(storage_.blocks[b]);
    for (std::size_t b = 0; b < ceil_div(back.reps_.size(), per); ++b) {
      back.storage_.blocks.push_back(device.alloc_block());
      back.write_storage_block(b, cause);
    }
    front.storage_.length = k;
    front.write_storage_block(front_blocks - 1, cause);
  }
  front.storage_.length = front.reps_.size();
  back.storage_.length = back.reps_.size();
  storage_ = {};
  device_ = nullptr;
  return {std::move(front), std::move(back)};
}

std::size_t prefix_cut_index(std::span<const std::size_t> sizes, std::size_t threshold) {
  std::size_t prefix = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    prefix += sizes[k];
    if (prefix > threshold) return k + 1;
  }
  throw Error("split threshold not below total size");
}

std::pair<NavList, NavList> NavList::split_at_prefix(std::span<const std::size_t> sizes,
                                                     std::size_t threshold, IoCause cause) && {
  if (sizes.size() != reps_.size()) throw Error("split sizes do not match navigation list");
  const std::size_t k = prefix_cut_index(sizes, threshold);
  if (k >= reps_.size()) throw Error("cannot split navigation list: second part would be empty");
  return std::move(*this).split(k, cause);
}

NavList NavList::attach(NavList front, NavList back, IoCause cause) {
  if (front.empty()) return back;
  if (back.empty()) return front;
  if (!key_less(front.reps_.back().min_key, back.reps_.front().min_key))
    throw Error("navigation list ordering violation on attach");
  BlockDevice& device = *front.device_;
  const std::size_t per = front.per_block();
  const std::size_t old_front = front.reps_.size();
  for (auto& r : back.reps_) front.reps_.push_back(std::move(r));
  back.reps_.clear();

  if (old_front % per == 0) {
    front.storage_.blocks.insert(front.storage_.blocks.end(), back.storage_.blocks.begin(),
                                 back.storage_.blocks.end());
    back.storage_.blocks.clear();
  } else {
    // Shift the back's representatives into the front's partial block and on.
    Block tmp;
    device.read_block_into(front.storage_.blocks.back(), cause, tmp);
    device.release(tmp.size());
    for (BlockId id : back.storage_.blocks) {
      device.read_block_into(id, cause, tmp);
      device.release(tmp.size());
    }
    free_run(device, back.storage_);
    const std::size_t first_dirty = front.storage_.blocks.size() - 1;
    while (front.storage_.blocks.size() < ceil_div(front.reps_.size(), per))
      front.storage_.blocks.push_back(device.alloc_block());
    for (std::size_t b = first_dirty; b < front.storage_.blocks.size(); ++b)
      front.write_storage_block(b, cause);
  }
  front.storage_.length = front.reps_.size();
  back.storage_ = {};
  return front;
}

std::vector<DiskRun> NavList::take_chains() {
  std::vector<DiskRun> out;
  out.reserve(reps_.size());
  for (auto& r : reps_) out.push_back(std::exchange(r.chain, DiskRun{}));
  return out;
}

std::vector<Representative> NavList::take_reps() {
  std::vector<Representative> out = std::move(reps_);
  reps_.clear();
  if (device_) free_run(*device_, storage_);
  return out;
}

void NavList::audit(const char* where) const {
  for (std::size_t i = 1; i < reps_.size(); ++i)
    if (!key_less(reps_[i - 1].min_key, reps_[i].min_key))
      throw InvariantViolation(std::string(where) + ": navigation list not sorted");
  if (!device_) {
    if (!reps_.empty()) throw InvariantViolation(std::string(where) + ": detached navigation list");
    return;
  }
  const std::size_t per = per_block();
  if (storage_.blocks.size() != ceil_div(reps_.size(), per))
    throw InvariantViolation(std::string(where) + ": navigation storage not contiguous");
  for (std::size_t b = 0; b < storage_.blocks.size(); ++b) {
    auto stored = device_->peek(storage_.blocks[b]);
    auto expect = encode_block(b);
    if (!std::equal(stored.begin(), stored.end(), expect.begin(), expect.end()))
      throw InvariantViolation(std::string(where) + ": navigation storage out of sync");
  }
  const std::size_t cap = device_->block_capacity();
  for (const auto& r : reps_) {
    if (r.chain.blocks.size() != ceil_div(r.chain.length, cap))
      throw InvariantViolation(std::string(where) + ": buffer chain block count mismatch");
    std::size_t n = 0;
    for (std::size_t k = 0; k < r.chain.blocks.size(); ++k) {
      const std::size_t len = device_->peek(r.chain.blocks[k]).size();
      if (k + 1 < r.chain.blocks.size() && len != cap)
        throw InvariantViolation(std::string(where) + ": non-full inner block in buffer chain");
      n += len;
    }
    if (n != r.chain.length)
      throw InvariantViolation(std::string(where) + ": buffered count does not match chain");
  }
}

FlushReport flush_via(BlockDevice& device, std::vector<Record> buffer, NavList& nav,
                      IoCause cause) {
  const std::uint64_t before = device.report().total();
  std::sort(buffer.begin(), buffer.end(), KeyLess{});
  SpanSource src(buffer);
  FlushReport rep;
  rep.buffer_size = buffer.size();
  rep.targets = nav.size();
  rep.appended = nav.distribute(src, cause);
  rep.ios = device.report().total() - before;
  return rep;
}

FlushReport flush_via(BlockDevice& device, DiskRun buffer, NavList& nav, Sorter& sorter,
                      IoCause cause) {
  const std::uint64_t before = device.report().total();
  FlushReport rep;
  rep.buffer_size = buffer.length;
  rep.targets = nav.size();
  if (buffer.length == 0) {
    free_run(device, buffer);
    rep.appended.assign(nav.size(), 0);
    nav.scan(IoCause::navlist);
  } else {
    SortResult sorted = sorter.sort_run(device, std::move(buffer), cause);
    RunReader reader(device, std::move(sorted.run), cause, true);
    rep.appended = nav.distribute(reader, cause);
  }
  rep.ios = device.report().total() - before;
  return rep;
}

}  // namespace empq
