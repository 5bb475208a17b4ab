#include "empq/layer_plan.hpp"

#include <algorithm>

#include "empq/record.hpp"

namespace empq {

std::uint64_t ceil_log2_ratio(std::uint64_t x, std::uint64_t b) {
  std::uint64_t k = 0;
  // Smallest k with b * 2^k >= x.
  while (k < 64 && (static_cast<unsigned __int128>(b) << k) < x) ++k;
  return k;
}

std::uint64_t phi_of(std::uint64_t x, std::size_t block_capacity) {
  return block_capacity * ceil_log2_ratio(x, block_capacity);
}

std::vector<std::uint64_t> compute_layer_plan(std::uint64_t n, std::size_t block_capacity,
                                              std::size_t c) {
  std::vector<std::uint64_t> plan;
  const std::uint64_t head = static_cast<std::uint64_t>(c) * block_capacity;
  if (n <= 2 * head) return plan;
  if (n < 5 * phi_of(n, block_capacity)) return plan;
  plan.push_back(n);
  for (std::uint64_t x = n;;) {
    const std::uint64_t next = phi_of(x, block_capacity);
    if (next <= head) break;
    // A lower layer needs room for five base sets of at least head size.
    if (next < 5 * std::max(phi_of(next, block_capacity), head)) break;
    plan.push_back(next);
    x = next;
  }
  return plan;
}

std::size_t compute_top_level(std::uint64_t x, std::uint64_t phi) {
  if (phi == 0 || x < 5 * phi) throw Error("layer too small for levels");
  std::size_t top = 0;
  unsigned __int128 sum = 1 + 4;  // 1 + 4*8^0
  for (;;) {
    const unsigned __int128 next = sum + 4 * static_cast<unsigned __int128>(pow8(top + 1));
    if (next * phi > x) return top;
    sum = next;
    ++top;
  }
}

bool keep_separate(std::uint64_t remaining, std::uint64_t phi, MergeRule rule) {
  if (remaining <= phi) return false;
  const std::uint64_t r = remaining - phi;
  return rule == MergeRule::at_most_half ? 2 * r > phi : 2 * r >= phi;
}

std::vector<std::uint64_t> base_set_sizes(std::uint64_t n, std::uint64_t phi, MergeRule rule) {
  if (phi == 0) throw Error("base-set size must be positive");
  std::vector<std::uint64_t> out;
  while (n > 0) {
    const std::uint64_t take = keep_separate(n, phi, rule) ? phi : n;
    out.push_back(take);
    n -= take;
  }
  return out;
}

std::string format_plan(const std::vector<std::uint64_t>& plan) {
  std::string s = "[";
  for (auto x : plan) s += std::to_string(x) + ", ";
  return s + "head]";
}

}  // namespace empq
