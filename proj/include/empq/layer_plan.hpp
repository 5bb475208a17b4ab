#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace empq {

/// ceil(log2(x / b)) for x > b, and 0 otherwise.
std::uint64_t ceil_log2_ratio(std::uint64_t x, std::uint64_t b);

/// Lower-layer size of a layer of nominal size x: B * ceil(log2(x / B)).
std::uint64_t phi_of(std::uint64_t x, std::size_t block_capacity);

/// Sizes of the on-disk layers, largest first. The head is implicit and
/// always follows the last entry. Empty when everything fits in the head
/// (n <= 2cB). Layer n is kept when n >= 5 phi(n); a lower candidate x is
/// kept when x >= 5 max(phi(x), cB). Dropped candidates end the plan.
std::vector<std::uint64_t> compute_layer_plan(std::uint64_t n, std::size_t block_capacity,
                                              std::size_t c);

/// Top level index: the largest l with (1 + sum_{j<=l} 4*8^j) * phi <= x.
/// Throws when x < 5 * phi.
std::size_t compute_top_level(std::uint64_t x, std::uint64_t phi);

/// "[n, x1, ..., head]".
std::string format_plan(const std::vector<std::uint64_t>& plan);

enum class MergeRule {
  at_most_half,  // global rebuild: a remainder of at most phi/2 joins its predecessor
  below_half,    // base-set splits and level rebuilds: a remainder below phi/2 joins
};

/// Whether `remaining` records are cut into a piece of phi plus a separate
/// remainder, rather than kept as one final piece.
bool keep_separate(std::uint64_t remaining, std::uint64_t phi, MergeRule rule);

/// Sizes of the base sets cut from n sorted records.
std::vector<std::uint64_t> base_set_sizes(std::uint64_t n, std::uint64_t phi, MergeRule rule);

/// 8^j.
inline std::uint64_t pow8(std::size_t j) { return std::uint64_t{1} << (3 * j); }

}  // namespace empq
