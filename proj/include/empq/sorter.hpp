#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "empq/disk_run.hpp"
#include "empq/io_sim.hpp"

namespace empq {

/// Exact non-negative fraction.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational& a, const Rational& b) {
    return static_cast<unsigned __int128>(a.num) * b.den ==
           static_cast<unsigned __int128>(b.num) * a.den;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return static_cast<unsigned __int128>(a.num) * b.den <
           static_cast<unsigned __int128>(b.num) * a.den;
  }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
};

struct SortStats {
  std::uint64_t keys_sorted = 0;
  std::uint64_t ios_used = 0;
  /// ios_used * B / max(N, 1).
  Rational per_key_block_cost;
};

struct SortResult {
  DiskRun run;
  SortStats stats;
};

/// The sorting black box: any algorithm that sorts N records in N*S(N)/B
/// I/Os with S non-decreasing. Input blocks are consumed (freed); the output
/// is a fresh run ordered by (value, seq).
class Sorter {
 public:
  virtual ~Sorter() = default;

  /// Sorts the concatenation of `inputs`. Blocks of the inputs may be
  /// partially filled.
  virtual SortResult sort(BlockDevice& device, std::vector<DiskRun> inputs,
                          IoCause cause = IoCause::sort) = 0;

  SortResult sort_run(BlockDevice& device, DiskRun run, IoCause cause = IoCause::sort) {
    std::vector<DiskRun> v;
    v.push_back(std::move(run));
    return sort(device, std::move(v), cause);
  }

  /// Predicted per-key block cost S(n).
  virtual Rational predicted_per_key_cost(std::uint64_t n) const = 0;

  /// Predicted I/O count for sorting n packed records: S(n)/2 passes of
  /// ceil(n/B) reads plus ceil(n/B) writes.
  std::uint64_t predicted_ios(std::uint64_t n, std::size_t block_capacity) const;

  virtual std::string name() const = 0;
};

/// Baseline multiway external merge sort: memory-filling run formation,
/// then merge passes of fan-in M_sort/B - 1.
class MergeSorter final : public Sorter {
 public:
  MergeSorter(std::size_t memory_records, std::size_t block_capacity);

  SortResult sort(BlockDevice& device, std::vector<DiskRun> inputs,
                  IoCause cause = IoCause::sort) override;
  Rational predicted_per_key_cost(std::uint64_t n) const override;
  std::string name() const override { return "merge"; }

  /// Merges sorted runs into one; inputs are freed.
  DiskRun merge_pass(BlockDevice& device, std::vector<DiskRun> runs, std::size_t fan_in,
                     IoCause cause = IoCause::sort, bool check_sorted = false) const;

  std::size_t memory_records() const { return memory_; }
  std::size_t fan_in() const { return memory_ / block_ - 1; }

 private:
  std::size_t memory_;
  std::size_t block_;
};

/// Loads everything, sorts in memory and writes it back: one read and one
/// write per block regardless of N. Exists to show the priority queue does
/// not depend on which sorter it is given.
class InMemorySorter final : public Sorter {
 public:
  SortResult sort(BlockDevice& device, std::vector<DiskRun> inputs,
                  IoCause cause = IoCause::sort) override;
  Rational predicted_per_key_cost(std::uint64_t n) const override {
    return {n == 0 ? 0u : 2u, 1};
  }
  std::string name() const override { return "memory"; }
};

std::unique_ptr<Sorter> make_sorter(const std::string& name, std::size_t memory_records,
                                    std::size_t block_capacity);

}  // namespace empq
