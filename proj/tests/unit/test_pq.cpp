#include <random>
#include <set>

#include "doctest.h"
#include "empq/pq.hpp"
#include "helpers.hpp"

using namespace empq;
using testutil::device;

namespace {

struct Fixture {
  explicit Fixture(PQConfig cfg = {}, std::size_t b = 16, std::size_t m = 0)
      : dev(device(b, m ? m : 8 * cfg.c * b)),
        sorter(dev.config().internal_memory_records, b),
        pq(dev, sorter, with_checks(std::move(cfg))) {}

  static PQConfig with_checks(PQConfig cfg) {
    cfg.check_invariants = true;
    cfg.deep_audit_every = 1;
    return cfg;
  }

  // Inserts the keys and rebuilds so every buffer is empty.
  void load(const std::vector<std::uint64_t>& keys) {
    for (auto k : keys) {
      pq.insert(k);
      live.insert(k);
    }
    pq.global_rebuild();
  }

  void insert(std::uint64_t v) {
    pq.insert(v);
    live.insert(v);
  }
  void erase(std::uint64_t v) {
    pq.erase(v);
    live.erase(v);
  }

  void check_min() {
    if (live.empty())
      CHECK_FALSE(pq.findmin().has_value());
    else
      CHECK(pq.findmin() == *live.begin());
  }

  // Deletes the minimum until empty, checking every answer.
  void drain() {
    while (!live.empty()) {
      REQUIRE(pq.findmin() == *live.begin());
      erase(*live.begin());
    }
    CHECK(pq.empty());
    CHECK_FALSE(pq.findmin().has_value());
  }

  BlockDevice dev;
  MergeSorter sorter;
  PriorityQueue pq;
  std::set<std::uint64_t> live;
};

std::vector<std::uint64_t> spaced(std::size_t n, std::uint64_t start, std::uint64_t step) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(start + i * step);
  return out;
}

PQConfig forced(std::vector<std::uint64_t> plan, std::size_t c = 4) {
  PQConfig cfg;
  cfg.c = c;
  cfg.force_layer_plan = std::move(plan);
  return cfg;
}

}  // namespace

TEST_SUITE("pq_core") {

TEST_CASE("config validation") {
  PQConfig cfg;
  cfg.c = 16;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.force_layer_plan = std::vector<std::uint64_t>{100};
  CHECK_NOTHROW(cfg.validate());
  cfg.force_layer_plan = std::vector<std::uint64_t>{100, 200};
  CHECK_THROWS_AS(cfg.validate(), Error);
  BlockDevice small(device(16, 100));
  MergeSorter s(100, 16);
  CHECK_THROWS_AS(PriorityQueue(small, s, PQConfig{}), Error);
}

TEST_CASE("insert into an empty queue") {
  Fixture f;
  CHECK_FALSE(f.pq.findmin().has_value());
  f.pq.insert(42);
  CHECK(f.pq.findmin() == 42u);
  CHECK(f.dev.report().total() == 0);
}

TEST_CASE("scheduler runs once the memory buffer exceeds cB") {
  Fixture f;
  const std::size_t cb = f.pq.memory_buffer_capacity();
  for (std::size_t i = 0; i < cb; ++i) f.pq.insert(1000 + i);
  CHECK(f.pq.stats().scheduler_runs == 0);
  f.pq.insert(5);
  CHECK(f.pq.stats().scheduler_runs == 1);
  CHECK(f.pq.findmin() == 5u);
}

TEST_CASE("delete basics") {
  Fixture f;
  f.insert(3);
  f.insert(7);
  f.erase(3);
  CHECK(f.pq.findmin() == 7u);
}

TEST_CASE("delete inside the memory buffer cancels without I/O") {
  Fixture f;
  f.load(spaced(2000, 1000, 10));
  f.dev.reset();
  f.insert(5);
  f.insert(6);
  const auto before = f.pq.memory_buffer_size();
  f.erase(5);
  CHECK(f.pq.memory_buffer_size() == before - 1);
  for (const auto& r : f.pq.memory_buffer()) CHECK(r.value != 5);
  CHECK(f.dev.report().total() == 0);
  f.check_min();
}

TEST_CASE("delete of a head key removes it at once") {
  Fixture f;
  f.load(spaced(2000, 1000, 10));
  const auto head_before = f.pq.head_size();
  f.erase(1000);
  CHECK(f.pq.head_size() == head_before - 1);
  CHECK(f.pq.memory_buffer_size() == 0);
  f.check_min();
}

TEST_CASE("delete of a disk key leaves a signal in the memory buffer") {
  Fixture f;
  f.load(spaced(2000, 1000, 10));
  f.erase(1000 + 10 * 1500);
  REQUIRE(f.pq.memory_buffer_size() == 1);
  CHECK(f.pq.memory_buffer().front().is_signal());
  f.check_min();
  f.drain();
}

TEST_CASE("emptying the head triggers a pull") {
  Fixture f;
  f.load(spaced(2000, 1000, 10));
  const auto head = f.pq.head_records();
  for (const auto& r : head) f.erase(r.value);
  CHECK(f.pq.head_size() > 0);
  CHECK(f.pq.stats().head_pulls >= 1);
  f.check_min();
}

TEST_CASE("insert everything then delete everything") {
  Fixture f;
  std::mt19937_64 rng(4);
  std::vector<std::uint64_t> keys;
  std::set<std::uint64_t> uniq;
  while (keys.size() < 20000)
    if (auto v = rng() % 10000000; uniq.insert(v).second) keys.push_back(v);
  for (auto k : keys) f.insert(k);
  std::shuffle(keys.begin(), keys.end(), rng);
  for (auto k : keys) {
    f.erase(k);
    if (f.live.size() % 997 == 0) f.check_min();
  }
  CHECK(f.pq.empty());
  CHECK_FALSE(f.pq.findmin().has_value());
}

TEST_CASE("random inserts then drain in sorted order") {
  Fixture f;
  f.pq.mutable_stats();
  std::mt19937_64 rng(11);
  std::vector<std::uint64_t> keys;
  std::set<std::uint64_t> uniq;
  while (keys.size() < 100000)
    if (auto v = rng(); uniq.insert(v).second) keys.push_back(v);
  for (auto k : keys) f.pq.insert(k);
  std::sort(keys.begin(), keys.end());
  std::vector<std::uint64_t> out;
  while (auto m = f.pq.findmin()) {
    out.push_back(*m);
    f.pq.erase(*m);
  }
  CHECK(out == keys);
}

TEST_CASE("global rebuild of 1000 keys") {
  Fixture f;
  f.load(spaced(1000, 1, 1));
  CHECK(f.pq.rebuild_n() == 1000);
  CHECK(f.pq.current_plan() == std::vector<std::uint64_t>{1000});
  REQUIRE(f.pq.layers().size() == 1);
  const auto& layer = f.pq.layers()[0];
  CHECK(layer.phi == 96);
  CHECK(layer.top == 0);
  REQUIRE(layer.levels.size() == 1);
  CHECK(layer.levels[0].bases.size() == 9);
  CHECK(layer.levels[0].size == 1000 - 96);
  CHECK(f.pq.head_size() == 96);
  CHECK(f.pq.dump() ==
        "memory_buffer size=0 capacity=272\n"
        "head size=96 live=96 capacity=544\n"
        "layer 0 x=1000 phi=96 top=0 buffer=0\n"
        "  level 0 size=904 buffer=0 sets=9\n"
        "    base 0 size=96\n"
        "    base 1 size=96\n"
        "    base 2 size=96\n"
        "    base 3 size=96\n"
        "    base 4 size=96\n"
        "    base 5 size=96\n"
        "    base 6 size=96\n"
        "    base 7 size=96\n"
        "    base 8 size=136\n");
}

TEST_CASE("rebuilding twice gives the same structure") {
  Fixture f;
  f.load(spaced(5000, 7, 3));
  const auto first = f.pq.dump();
  f.pq.global_rebuild();
  CHECK(f.pq.dump() == first);
}

TEST_CASE("matched pairs annihilate at rebuild") {
  Fixture f;
  f.load(spaced(3000, 1, 1));
  for (std::uint64_t v = 1; v <= 3000; ++v) f.erase(v);
  f.pq.global_rebuild();
  CHECK(f.pq.rebuild_n() == 0);
  CHECK(f.pq.layers().empty());
  CHECK(f.pq.current_plan().empty());
  CHECK(f.pq.empty());
  CHECK(f.dev.allocated_blocks() == 0);
}

TEST_CASE("unmatched delete is reported at rebuild") {
  Fixture f;
  f.load(spaced(3000, 1, 1));
  f.pq.erase(999999);
  CHECK_THROWS_WITH_AS(f.pq.global_rebuild(), doctest::Contains("unmatched delete signal for value 999999"),
                       Error);
}

TEST_CASE("head-only queue") {
  Fixture f;
  for (std::uint64_t v = 1; v <= 400; ++v) f.insert(v * 2);
  CHECK(f.pq.layers().empty());
  CHECK(f.pq.head_size() + f.pq.memory_buffer_size() == 400);
  CHECK(f.dev.report().total() == 0);
  f.drain();
}

TEST_CASE("memory flush routing") {
  Fixture f;
  f.load(spaced(5000, 100000, 100));
  const Record boundary = f.pq.layer_nav().rep(0).min_key;
  SUBCASE("large keys go to the layer buffer") {
    for (std::uint64_t v = 0; v < 40; ++v) f.insert(boundary.value + 1 + v);
    f.pq.memory_flush();
    CHECK(f.pq.layer_buffer(0).length == 40);
  }
  SUBCASE("small keys go to the head") {
    const auto head = f.pq.head_size();
    for (std::uint64_t v = 0; v < 40; ++v) f.insert(v);
    f.pq.memory_flush();
    CHECK(f.pq.head_size() == head + 40);
    CHECK(f.pq.layer_buffer(0).length == 0);
  }
  f.pq.deep_audit();
  f.drain();
}

TEST_CASE("memory flush across two layers and the head") {
  Fixture f(forced({4000, 600}));
  f.load(spaced(40000, 1000, 10));
  REQUIRE(f.pq.layers().size() == 3);
  std::mt19937_64 rng(8);
  std::vector<std::uint64_t> batch;
  for (int i = 0; i < 60; ++i) {
    std::uint64_t v;
    do v = rng() % 420000; while (f.live.count(v));
    batch.push_back(v);
    f.insert(v);
  }
  f.pq.memory_flush();
  // Recompute the destination of every key from the boundaries.
  std::size_t to_head = 0;
  std::vector<std::size_t> per_layer(3, 0);
  for (auto v : batch) {
    std::size_t dest = 3;
    for (std::size_t i = 0; i < 3; ++i)
      if (v >= f.pq.layer_nav().rep(2 - i).min_key.value) {
        dest = i;
        break;
      }
    dest == 3 ? ++to_head : ++per_layer[dest];
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(f.pq.layer_buffer(i).length == per_layer[i]);
  std::size_t small = 0;
  for (auto v : batch) small += v < f.pq.layer_nav().rep(0).min_key.value;
  CHECK(small == to_head);
  f.pq.deep_audit();
  f.drain();
}

TEST_CASE("level flush splits an overflowed base set") {
  Fixture f;
  f.load(spaced(1000, 1000, 1000));
  const auto& level = f.pq.layers()[0].levels[0];
  const std::uint64_t lo = level.bases.rep(3).min_key.value;
  const auto sets_before = level.bases.size();
  // 200 keys inside one base set's range push it past 2 * phi.
  for (std::uint64_t k = 0; k < 200; ++k) f.insert(lo + 1 + k);
  f.pq.memory_flush();
  f.pq.layer_flush(0);
  f.pq.level_flush(0, 0);
  CHECK(f.pq.stats().base_splits == 1);
  // 96 + 200 keys become three sets.
  CHECK(f.pq.layers()[0].levels[0].bases.size() == sets_before + 2);
  for (const auto& r : f.pq.layers()[0].levels[0].bases.reps()) {
    CHECK(r.chain.length >= 48);
    CHECK(r.chain.length <= 192);
  }
  f.pq.deep_audit();
  f.drain();
}

TEST_CASE("head push keeps cB keys in the head") {
  Fixture f;
  f.load(spaced(5000, 100000, 100));
  const std::size_t cb = f.pq.memory_buffer_capacity();
  std::uint64_t v = 1;
  while (f.pq.head_size() <= f.pq.head_capacity()) {
    for (std::size_t k = 0; k < cb && f.pq.memory_buffer_size() < cb; ++k) f.insert(v++);
    f.pq.memory_flush();
  }
  const auto min_before = f.pq.findmin();
  f.pq.head_push();
  CHECK(f.pq.head_size() == cb);
  CHECK(f.pq.findmin() == min_before);
  f.pq.deep_audit();
  f.drain();
}

TEST_CASE("level push and pull land in their windows") {
  Fixture f;
  f.load(spaced(1 << 16, 1000, 1000));
  const auto& layer = f.pq.layers()[0];
  REQUIRE(layer.top >= 1);
  const std::uint64_t phi = layer.phi;
  const std::uint64_t lo = layer.levels[0].bases.rep(0).min_key.value;
  // Fill level 0 well past its 6 * phi bound through the flush path.
  std::uint64_t v = lo + 1;
  while (f.pq.layers()[0].levels[0].size <= 6 * phi) {
    for (std::size_t k = 0; k < f.pq.memory_buffer_capacity(); ++k, v += 1) f.insert(v);
    f.pq.memory_flush();
    f.pq.layer_flush(0);
    f.pq.level_flush(0, 0);
  }
  f.pq.level_push(0, 0);
  const auto pushed = f.pq.layers()[0].levels[0].size;
  CHECK(pushed > 4 * phi);
  CHECK(pushed <= 6 * phi);
  f.pq.deep_audit();

  // Deleting minima drains level 0 through head pulls until it underflows
  // and the scheduler pulls from level 1; the pull asserts its window.
  const auto pulls = f.pq.stats().level_pulls;
  for (int i = 0; i < 5000 && f.pq.stats().level_pulls == pulls; ++i) f.erase(*f.live.begin());
  CHECK(f.pq.stats().level_pulls > pulls);
  f.pq.deep_audit();
  f.drain();
}

TEST_CASE("operations reject the wrong level or layer") {
  Fixture f;
  f.load(spaced(5000, 1, 1));
  const auto top = f.pq.layers()[0].top;
  CHECK_THROWS_AS(f.pq.level_push(0, top), Error);
  CHECK_THROWS_AS(f.pq.level_pull(0, top), Error);
  CHECK_THROWS_AS(f.pq.layer_push(0), Error);
  CHECK_THROWS_AS(f.pq.layer_pull(0), Error);
  CHECK_THROWS_AS(f.pq.layer_push(7), Error);
}

TEST_CASE("layer push and pull rebuild the top level to 4 * 8^l * phi") {
  Fixture f(forced({2000}));
  f.load(spaced(20000, 1000, 10));
  REQUIRE(f.pq.layers().size() == 2);
  const auto& low = f.pq.layers()[1];
  const std::uint64_t target = 4 * pow8(low.top) * low.phi;
  SUBCASE("push") {
    f.pq.layer_push(1);
    CHECK(f.pq.layers()[1].levels[low.top].size == target);
    CHECK(f.pq.stats().layer_pushes == 1);
  }
  SUBCASE("pull") {
    f.pq.layer_pull(1);
    CHECK(f.pq.layers()[1].levels[low.top].size == target);
    CHECK(f.pq.stats().max_layer_pull_transfer <= f.pq.stats().max_layer_pull_transfer_bound);
  }
  CHECK(f.pq.layer_nav().rep(1).min_key == f.pq.layers()[0].levels[0].bases.rep(0).min_key);
  f.pq.deep_audit();
  f.drain();
}

TEST_CASE("insert-only workloads never pull") {
  Fixture f;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50000; ++i) f.pq.insert(rng());
  const auto& s = f.pq.stats();
  CHECK(s.head_pulls == 0);
  CHECK(s.level_pulls == 0);
  CHECK(s.layer_pulls == 0);
}

TEST_CASE("identical inputs give identical I/O") {
  auto run = [] {
    Fixture f;
    std::mt19937_64 rng(21);
    for (int i = 0; i < 30000; ++i) {
      if (f.live.empty() || rng() % 3) {
        f.insert(rng());
      } else {
        f.erase(*f.live.begin());
      }
    }
    return std::make_pair(f.dev.report(), f.pq.dump());
  };
  CHECK(run() == run());
}

TEST_CASE("mixed workloads under residency enforcement") {
  for (std::size_t b : {2u, 4u, 16u}) {
    for (bool force : {false, true}) {
      CAPTURE(b);
      CAPTURE(force);
      PQConfig cfg = force ? forced({3000, 500}, 3) : PQConfig{};
      cfg.deep_audit_every = 9;
      BlockDevice dev(device(b, 8 * cfg.c * b, true));
      MergeSorter sorter(dev.config().internal_memory_records, b);
      cfg.check_invariants = true;
      PriorityQueue pq(dev, sorter, cfg);
      std::set<std::uint64_t> live;
      std::mt19937_64 rng(b * 7 + force);
      for (int i = 0; i < 40000; ++i) {
        const auto roll = rng() % 10;
        if (roll < 5 || live.empty()) {
          const auto v = rng() % 1000000007;
          if (live.insert(v).second) pq.insert(v);
        } else if (roll < 7) {
          auto it = live.lower_bound(rng() % 1000000007);
          if (it == live.end()) it = live.begin();
          pq.erase(*it);
          live.erase(it);
        } else {
          REQUIRE(pq.findmin() == *live.begin());
          if (roll < 9) {
            pq.erase(*live.begin());
            live.erase(live.begin());
          }
        }
      }
      CHECK(pq.size() == live.size());
    }
  }
}

TEST_CASE("forced multi-layer plans exercise every rebalance") {
  PQStats total;
  for (auto plan : {std::vector<std::uint64_t>{20000, 2000, 300}, std::vector<std::uint64_t>{3000}}) {
    Fixture f(forced(plan));
    // Descending inserts, then deletions of the minimum.
    for (std::uint64_t v = 200000; v > 0; --v) f.insert(v * 2);
    while (f.live.size() > 1000) {
      REQUIRE(f.pq.findmin() == *f.live.begin());
      f.erase(*f.live.begin());
    }
    f.drain();
    const auto& s = f.pq.stats();
    total.level_pushes += s.level_pushes;
    total.level_pulls += s.level_pulls;
    total.layer_pushes += s.layer_pushes;
    total.layer_pulls += s.layer_pulls;
    total.head_pushes += s.head_pushes;
    total.head_pulls += s.head_pulls;
    CHECK(s.max_layer_pull_transfer <= s.max_layer_pull_transfer_bound);
  }
  CHECK(total.level_pushes > 0);
  CHECK(total.level_pulls > 0);
  CHECK(total.layer_pushes > 0);
  CHECK(total.layer_pulls > 0);
  CHECK(total.head_pushes > 0);
  CHECK(total.head_pulls > 0);
}

}
