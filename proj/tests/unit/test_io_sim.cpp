#include <sstream>

#include "doctest.h"
#include "empq/disk_run.hpp"
#include "helpers.hpp"

using namespace empq;
using testutil::device;
using testutil::recs;

TEST_SUITE("io_sim") {

TEST_CASE("config validation") {
  CHECK_NOTHROW(device(2, 8).validate());
  CHECK_THROWS_AS(device(1, 100).validate(), Error);
  CHECK_THROWS_AS(device(16, 63).validate(), Error);
  CHECK_THROWS_AS(BlockDevice(device(16, 10)), Error);
}

TEST_CASE("fresh ids are 0 then 1") {
  BlockDevice d(device());
  CHECK(d.alloc_block().id == 0);
  CHECK(d.alloc_block().id == 1);
}

TEST_CASE("reallocated ids never alias a live block") {
  BlockDevice d(device());
  auto a = d.alloc_block();
  auto b = d.alloc_block();
  d.free_block(a);
  auto c = d.alloc_block();
  CHECK(c != b);
  CHECK(d.is_allocated(c));
  CHECK(d.is_allocated(b));
}

TEST_CASE("peak allocated blocks after 100 allocs") {
  BlockDevice d(device());
  std::vector<BlockId> ids;
  for (int i = 0; i < 100; ++i) ids.push_back(d.alloc_block());
  for (auto id : ids) d.free_block(id);
  CHECK(d.report().peak_allocated_blocks == 100);
  CHECK(d.allocated_blocks() == 0);
}

TEST_CASE("free bookkeeping") {
  BlockDevice d(device());
  std::vector<BlockId> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(d.alloc_block());
  for (int i = 0; i < 4; ++i) d.free_block(ids[i]);
  CHECK(d.allocated_blocks() == 6);
  CHECK_THROWS_WITH_AS(d.free_block(ids[0]), doctest::Contains("invalid block id"), Error);
  CHECK_THROWS_AS(d.free_block(BlockId{999}), Error);
}

TEST_CASE("write then read round trip") {
  BlockDevice d(device());
  auto id = d.alloc_block();
  const auto data = recs({5, 3, 9});
  d.write_block(id, data, IoCause::flush);
  CHECK(d.read_block(id, IoCause::flush) == data);
  CHECK(d.report().reads == 1);
  CHECK(d.report().writes == 1);
  d.read_block(id, IoCause::flush);
  CHECK(d.report().reads == 2);
}

TEST_CASE("per-cause counters partition the totals") {
  BlockDevice d(device());
  auto id = d.alloc_block();
  d.write_block(id, {}, IoCause::rebuild);
  d.read_block(id, IoCause::flush);
  const auto r = d.report();
  CHECK(r[IoCause::flush].reads == 1);
  CHECK(r[IoCause::flush].writes == 0);
  CHECK(r[IoCause::rebuild].writes == 1);
  CHECK(r[IoCause::sort].reads == 0);
  std::uint64_t reads = 0, writes = 0;
  for (const auto& c : r.per_cause) {
    reads += c.reads;
    writes += c.writes;
  }
  CHECK(reads == r.reads);
  CHECK(writes == r.writes);
}

TEST_CASE("write checks capacity and ids") {
  BlockDevice d(device(4, 16));
  auto id = d.alloc_block();
  CHECK_NOTHROW(d.write_block(id, {}, IoCause::sort));
  CHECK(d.report().writes == 1);
  CHECK_THROWS_WITH_AS(d.write_block(id, recs({1, 2, 3, 4, 5}), IoCause::sort),
                       doctest::Contains("block overflow"), Error);
  CHECK_THROWS_AS(d.write_block(BlockId{77}, {}, IoCause::sort), Error);
  CHECK_THROWS_AS(d.read_block(BlockId{77}, IoCause::sort), Error);
}

TEST_CASE("interleaved reads and writes") {
  BlockDevice d(device());
  auto id = d.alloc_block();
  d.write_block(id, recs({1}), IoCause::sort);
  d.read_block(id, IoCause::sort);
  d.write_block(id, recs({2}), IoCause::sort);
  d.read_block(id, IoCause::sort);
  d.write_block(id, recs({3}), IoCause::sort);
  CHECK(d.report().reads == 2);
  CHECK(d.report().writes == 3);
  CHECK(d.report().total() == 5);
}

TEST_CASE("report and reset") {
  BlockDevice d(device());
  CHECK(d.report() == IoReport{});
  auto id = d.alloc_block();
  d.write_block(id, recs({1}), IoCause::sort);
  CHECK(d.report() == d.report());
  d.reset();
  CHECK(d.report().reads == 0);
  CHECK(d.report().writes == 0);
  CHECK(d.allocated_blocks() == 1);
  CHECK(d.is_allocated(id));
}

TEST_CASE("residency ledger is enforced") {
  BlockDevice d(device(4, 16, true));
  std::vector<BlockId> ids;
  for (int i = 0; i < 5; ++i) {
    ids.push_back(d.alloc_block());
    d.write_block(ids.back(), recs({1, 2, 3, 4}), IoCause::sort);
  }
  for (int i = 0; i < 4; ++i) d.read_block(ids[i], IoCause::sort);
  CHECK(d.resident_records() == 16);
  CHECK_THROWS_WITH_AS(d.read_block(ids[4], IoCause::sort),
                       doctest::Contains("internal memory exceeded"), Error);
  d.release(8);
  CHECK(d.resident_records() == 8);
  d.write_block(ids[0], recs({1, 2, 3, 4}), IoCause::sort);
  CHECK(d.resident_records() == 4);
  d.settle();
  CHECK(d.resident_records() == 0);
  d.set_pool(MemoryPool::head, 12);
  CHECK(d.resident_records() == 12);
  CHECK_THROWS_AS(d.set_pool(MemoryPool::memory_buffer, 5), Error);
}

TEST_CASE("sort scope uses its own budget") {
  BlockDevice d(device(4, 16, true));
  std::vector<BlockId> ids;
  for (int i = 0; i < 8; ++i) {
    ids.push_back(d.alloc_block());
    d.write_block(ids.back(), recs({1, 2, 3, 4}), IoCause::sort);
  }
  d.set_pool(MemoryPool::head, 12);
  {
    BlockDevice::SortScope scope(d, 8);
    d.read_block(ids[0], IoCause::sort);
    d.read_block(ids[1], IoCause::sort);
    CHECK_THROWS_AS(d.read_block(ids[2], IoCause::sort), Error);
  }
  CHECK(d.resident_records() == 12);
}

TEST_CASE("trace format") {
  BlockDevice d(device());
  std::ostringstream os;
  d.set_trace(&os);
  auto id = d.alloc_block();
  d.write_block(id, recs({1}), IoCause::flush);
  d.read_block(id, IoCause::navlist);
  CHECK(os.str() == "W 0 flush\nR 0 navlist\n");
}

TEST_CASE("run reader and writer") {
  BlockDevice d(device(4, 64));
  DiskRun run;
  {
    RunWriter w(d, run, IoCause::flush);
    for (std::uint64_t v = 0; v < 6; ++v) w.push({v, v, RecordKind::insert});
  }
  CHECK(run.length == 6);
  CHECK(run.blocks.size() == 2);
  d.reset();
  {
    // Appending to a partial last block reads it once.
    RunWriter w(d, run, IoCause::flush);
    w.push({6, 6, RecordKind::insert});
    w.push({7, 7, RecordKind::insert});
    w.push({8, 8, RecordKind::insert});
  }
  CHECK(d.report().reads == 1);
  CHECK(d.report().writes == 2);
  CHECK(run.length == 9);
  CHECK(run.blocks.size() == 3);
  const auto all = peek_run(d, run);
  CHECK(testutil::values_of(all) == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8});

  d.reset();
  RunReader r(d, std::move(run), IoCause::sort, true);
  std::vector<std::uint64_t> got;
  while (!r.done()) got.push_back(r.next().value);
  CHECK(got.size() == 9);
  CHECK(d.report().reads == 3);
  CHECK(d.allocated_blocks() == 0);
}

}
