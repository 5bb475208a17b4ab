#pragma once

#include <algorithm>
#include <vector>

#include "empq/io_sim.hpp"
#include "empq/record.hpp"

namespace testutil {

inline std::vector<empq::Record> recs(std::initializer_list<std::uint64_t> values) {
  std::vector<empq::Record> out;
  std::uint64_t seq = 0;
  for (auto v : values) out.push_back({v, ++seq, empq::RecordKind::insert});
  return out;
}

inline std::vector<std::uint64_t> values_of(const std::vector<empq::Record>& rs) {
  std::vector<std::uint64_t> out;
  for (const auto& r : rs) out.push_back(r.value);
  return out;
}

inline empq::DeviceConfig device(std::size_t b = 16, std::size_t m = 2176, bool enforce = false) {
  empq::DeviceConfig c;
  c.block_capacity_records = b;
  c.internal_memory_records = m;
  c.enforce_residency = enforce;
  return c;
}

inline empq::Record key(std::uint64_t v) { return {v, 0, empq::RecordKind::insert}; }

}  // namespace testutil
