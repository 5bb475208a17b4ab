#include "doctest.h"
#include "empq/layer_plan.hpp"
#include "empq/record.hpp"

using namespace empq;

namespace {

// Brute force: the largest l with (1 + sum_{j<=l} 4*8^j) * phi <= x.
std::size_t brute_top(std::uint64_t x, std::uint64_t phi) {
  std::size_t best = 0;
  for (std::size_t l = 0; l < 12; ++l) {
    std::uint64_t sum = 1, p = 1;
    for (std::size_t j = 0; j <= l; ++j, p *= 8) sum += 4 * p;
    if (sum * phi <= x) best = l;
  }
  return best;
}

}  // namespace

TEST_SUITE("layer_plan") {

TEST_CASE("phi") {
  CHECK(ceil_log2_ratio(1000, 16) == 6);
  CHECK(phi_of(1000, 16) == 96);
  CHECK(phi_of(16, 16) == 0);
  CHECK(phi_of(17, 16) == 16);
  CHECK(phi_of(std::uint64_t{1} << 24, 16) == 320);
}

TEST_CASE("plan for n = 2^24 is a single layer") {
  CHECK(compute_layer_plan(std::uint64_t{1} << 24, 16, 17) == std::vector<std::uint64_t>{1u << 24});
}

TEST_CASE("plan is empty when everything fits in the head") {
  CHECK(compute_layer_plan(544, 16, 17).empty());
  CHECK(compute_layer_plan(1, 16, 17).empty());
  CHECK(compute_layer_plan(545, 16, 17) == std::vector<std::uint64_t>{545});
}

TEST_CASE("plan for n = 2^30 B") {
  const std::uint64_t n = (std::uint64_t{1} << 30) * 16;
  CHECK(compute_layer_plan(n, 16, 17) == std::vector<std::uint64_t>{n});
}

TEST_CASE("deeper plans appear once the lower layer dwarfs the head") {
  // B = 2, c = 1: head cB = 2, so x = 2*ceil(log2(x/2)) layers survive while
  // they hold five base sets.
  const std::uint64_t n = std::uint64_t{1} << 40;
  const auto plan = compute_layer_plan(n, 2, 1);
  REQUIRE(plan.size() >= 2);
  CHECK(plan[0] == n);
  CHECK(plan[1] == phi_of(n, 2));
  for (std::size_t i = 1; i < plan.size(); ++i) {
    CHECK(plan[i] == phi_of(plan[i - 1], 2));
    CHECK(plan[i] >= 5 * std::max<std::uint64_t>(phi_of(plan[i], 2), 2));
  }
}

TEST_CASE("top level") {
  CHECK(compute_top_level(5, 1) == 0);
  CHECK(compute_top_level(36, 1) == 0);
  CHECK(compute_top_level(37, 1) == 1);
  CHECK(compute_top_level(52428, 1) == 4);
  CHECK(compute_top_level(1000, 96) == 0);
  CHECK_THROWS_WITH_AS(compute_top_level(4, 1), doctest::Contains("layer too small for levels"), Error);
  for (std::uint64_t x = 5; x < 200000; x = x * 3 / 2 + 7) {
    const auto l = compute_top_level(x, 1);
    CHECK(l == brute_top(x, 1));
    // Bracket on the top level size.
    CHECK(4 * pow8(l) <= x);
    CHECK(x <= 40 * pow8(l));
  }
}

TEST_CASE("format") {
  CHECK(format_plan({}) == "[head]");
  CHECK(format_plan({1000, 96}) == "[1000, 96, head]");
}

}

TEST_SUITE("layer_plan") {

TEST_CASE("rebuild cut of 1000 keys into base sets of 96") {
  const auto sizes = base_set_sizes(1000, 96, MergeRule::at_most_half);
  REQUIRE(sizes.size() == 10);
  for (std::size_t i = 0; i < 9; ++i) CHECK(sizes[i] == 96);
  CHECK(sizes[9] == 136);
}

TEST_CASE("base-set split arithmetic") {
  const std::uint64_t phi = 96;
  CHECK(base_set_sizes(2 * phi + 1, phi, MergeRule::below_half) ==
        std::vector<std::uint64_t>{phi, phi + 1});
  CHECK(base_set_sizes(3 * phi + phi / 4, phi, MergeRule::below_half) ==
        std::vector<std::uint64_t>{phi, phi, phi + phi / 4});
  // A remainder of exactly phi/2 stays separate in a split but merges in a rebuild.
  CHECK(base_set_sizes(phi + phi / 2, phi, MergeRule::below_half) ==
        std::vector<std::uint64_t>{phi, phi / 2});
  CHECK(base_set_sizes(phi + phi / 2, phi, MergeRule::at_most_half) ==
        std::vector<std::uint64_t>{phi + phi / 2});
  CHECK(base_set_sizes(0, phi, MergeRule::below_half).empty());
  CHECK_THROWS_AS(base_set_sizes(10, 0, MergeRule::below_half), Error);
}

TEST_CASE("split pieces stay within the base-set band") {
  for (std::uint64_t phi : {4ull, 7ull, 96ull})
    for (std::uint64_t n = 2 * phi + 1; n < 20 * phi; ++n)
      for (auto rule : {MergeRule::below_half, MergeRule::at_most_half}) {
        const auto sizes = base_set_sizes(n, phi, rule);
        std::uint64_t total = 0;
        for (auto s : sizes) {
          CHECK(2 * s >= phi);
          CHECK(2 * s <= 3 * phi);
          total += s;
        }
        CHECK(total == n);
      }
}

}
