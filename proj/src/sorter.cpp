#include "empq/sorter.hpp"

#include <algorithm>
#include <queue>

namespace empq {
namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

Rational per_key(std::uint64_t ios, std::size_t block, std::uint64_t n) {
  return {ios * block, std::max<std::uint64_t>(n, 1)};
}

void free_all(BlockDevice& device, std::vector<DiskRun>& runs) {
  for (auto& r : runs) free_run(device, r);
}

}  // namespace

std::uint64_t Sorter::predicted_ios(std::uint64_t n, std::size_t block_capacity) const {
  const Rational s = predicted_per_key_cost(n);
  return ceil_div(s.num * ceil_div(n, block_capacity), s.den);
}

MergeSorter::MergeSorter(std::size_t memory_records, std::size_t block_capacity)
    : memory_(memory_records), block_(block_capacity) {
  if (block_ == 0 || memory_ < 3 * block_) throw Error("insufficient sort memory");
}

Rational MergeSorter::predicted_per_key_cost(std::uint64_t n) const {
  if (n == 0) return {0, 1};
  // One run-formation pass plus ceil(log_f(ceil(n / M))) merge passes.
  const std::uint64_t runs = ceil_div(n, memory_);
  std::uint64_t passes = 1;
  for (std::uint64_t reach = 1; reach < runs; reach *= fan_in()) ++passes;
  return {2 * passes, 1};
}

DiskRun MergeSorter::merge_pass(BlockDevice& device, std::vector<DiskRun> runs,
                                std::size_t fan_in, IoCause cause, bool check_sorted) const {
  if (fan_in < 2 || fan_in > this->fan_in())
    throw Error("merge fan-in exceeds sort memory");
  if (runs.size() > fan_in) throw Error("more runs than merge fan-in");

  DiskRun out;
  std::vector<std::unique_ptr<RunReader>> readers;
  readers.reserve(runs.size());
  for (auto& r : runs) {
    if (r.length > 0)
      readers.push_back(std::make_unique<RunReader>(device, std::move(r), cause, true));
    else
      free_run(device, r);
  }

  auto greater = [&](std::size_t a, std::size_t b) {
    return key_less(readers[b]->peek(), readers[a]->peek());
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(greater)> heap(greater);
  for (std::size_t i = 0; i < readers.size(); ++i) heap.push(i);

  RunWriter writer(device, out, cause);
  while (!heap.empty()) {
    std::size_t i = heap.top();
    heap.pop();
    Record r = readers[i]->next();
    if (check_sorted && !readers[i]->done() && key_less(readers[i]->peek(), r))
      throw Error("unsorted input run");
    writer.push(r);
    if (!readers[i]->done()) heap.push(i);
  }
  writer.finish();
  return out;
}

SortResult MergeSorter::sort(BlockDevice& device, std::vector<DiskRun> inputs, IoCause cause) {
  BlockDevice::SortScope scope(device, memory_);
  const std::uint64_t before = device.report().total();
  std::uint64_t n = 0;
  for (auto& r : inputs) n += r.length;

  SortResult result;
  result.stats.keys_sorted = n;
  if (n == 0) {
    free_all(device, inputs);
    result.stats.per_key_block_cost = per_key(0, block_, 0);
    return result;
  }

  // Run formation: fill memory with whole blocks, sort, write out.
  std::vector<DiskRun> runs;
  std::vector<Record> load;
  load.reserve(memory_);
  Block tmp;
  auto emit = [&] {
    std::sort(load.begin(), load.end(), KeyLess{});
    runs.push_back(write_run(device, load, cause));
    load.clear();
  };
  for (auto& input : inputs) {
    for (BlockId id : input.blocks) {
      if (load.size() + device.peek(id).size() > memory_) emit();
      device.read_block_into(id, cause, tmp);
      device.free_block(id);
      load.insert(load.end(), tmp.begin(), tmp.end());
    }
    input.blocks.clear();
    input.length = 0;
  }
  if (!load.empty()) emit();

  const std::size_t f = fan_in();
  while (runs.size() > 1) {
    std::vector<DiskRun> next;
    for (std::size_t i = 0; i < runs.size(); i += f) {
      std::vector<DiskRun> group(std::make_move_iterator(runs.begin() + i),
                                 std::make_move_iterator(runs.begin() + std::min(runs.size(), i + f)));
      if (group.size() == 1)
        next.push_back(std::move(group.front()));
      else
        next.push_back(merge_pass(device, std::move(group), f, cause));
    }
    runs = std::move(next);
  }

  result.run = std::move(runs.front());
  result.stats.ios_used = device.report().total() - before;
  result.stats.per_key_block_cost = per_key(result.stats.ios_used, block_, n);
  return result;
}

SortResult InMemorySorter::sort(BlockDevice& device, std::vector<DiskRun> inputs, IoCause cause) {
  BlockDevice::SortScope scope(device, static_cast<std::size_t>(-1));
  const std::uint64_t before = device.report().total();
  std::vector<Record> all;
  Block tmp;
  for (auto& input : inputs) {
    for (BlockId id : input.blocks) {
      device.read_block_into(id, cause, tmp);
      device.free_block(id);
      all.insert(all.end(), tmp.begin(), tmp.end());
    }
    input.blocks.clear();
    input.length = 0;
  }
  std::sort(all.begin(), all.end(), KeyLess{});
  SortResult result;
  result.run = write_run(device, all, cause);
  result.stats.keys_sorted = all.size();
  result.stats.ios_used = device.report().total() - before;
  result.stats.per_key_block_cost =
      per_key(result.stats.ios_used, device.block_capacity(), all.size());
  return result;
}

std::unique_ptr<Sorter> make_sorter(const std::string& name, std::size_t memory_records,
                                    std::size_t block_capacity) {
  if (name == "merge") return std::make_unique<MergeSorter>(memory_records, block_capacity);
  if (name == "memory") return std::make_unique<InMemorySorter>();
  throw Error("unknown sorter '" + name + "'");
}

}  // namespace empq
