#include "empq/workload.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <queue>
#include <random>
#include <sstream>
#include <unordered_set>

#include "empq/record.hpp"

namespace empq {
namespace {

class KeySource {
 public:
  explicit KeySource(std::uint64_t seed) : rng_(seed) {}
  std::uint64_t fresh() {
    for (;;) {
      const std::uint64_t v = rng_();
      if (used_.insert(v).second) return v;
    }
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::unordered_set<std::uint64_t> used_;
};

std::vector<WorkloadOp> insert_then_drain(std::vector<std::uint64_t> keys) {
  std::vector<WorkloadOp> ops;
  ops.reserve(2 * keys.size());
  for (auto v : keys) ops.push_back({OpKind::insert, v});
  for (std::size_t i = 0; i < keys.size(); ++i) ops.push_back({OpKind::deletemin, 0});
  return ops;
}

}  // namespace

const std::vector<std::string>& workload_kinds() {
  static const std::vector<std::string> kinds{"uniform", "sorted", "reversed", "heapsort", "churn"};
  return kinds;
}

std::vector<WorkloadOp> generate_workload(const std::string& kind, std::uint64_t n,
                                          std::uint64_t seed) {
  if (n < 1) throw Error("workload size must be at least 1");
  KeySource keys(seed);
  auto& rng = keys.rng();

  if (kind == "sorted" || kind == "reversed" || kind == "heapsort") {
    std::vector<std::uint64_t> v(n);
    for (auto& x : v) x = keys.fresh();
    if (kind == "sorted") std::sort(v.begin(), v.end());
    if (kind == "reversed") std::sort(v.begin(), v.end(), std::greater<>{});
    return insert_then_drain(std::move(v));
  }

  std::vector<WorkloadOp> ops;
  ops.reserve(n);
  if (kind == "uniform") {
    std::vector<std::uint64_t> live;
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto roll = rng() % 4;
      if (roll < 2 || live.empty()) {
        live.push_back(keys.fresh());
        ops.push_back({OpKind::insert, live.back()});
      } else if (roll == 2) {
        const std::size_t k = rng() % live.size();
        ops.push_back({OpKind::erase, live[k]});
        live[k] = live.back();
        live.pop_back();
      } else {
        ops.push_back({OpKind::findmin, 0});
      }
    }
    return ops;
  }
  if (kind == "churn") {
    std::uint64_t live = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto roll = rng() % 10;
      if (roll < 5 || live == 0) {
        ops.push_back({OpKind::insert, keys.fresh()});
        ++live;
      } else if (roll < 9) {
        ops.push_back({OpKind::deletemin, 0});
        --live;
      } else {
        ops.push_back({OpKind::findmin, 0});
      }
    }
    return ops;
  }
  throw Error("unknown workload kind '" + kind + "'");
}

void write_workload(std::ostream& out, const std::vector<WorkloadOp>& ops) {
  for (const auto& op : ops) {
    switch (op.op) {
      case OpKind::insert: out << "I " << op.value << '\n'; break;
      case OpKind::erase: out << "D " << op.value << '\n'; break;
      case OpKind::findmin: out << "F\n"; break;
      case OpKind::deletemin: out << "X\n"; break;
    }
  }
}

std::vector<WorkloadOp> read_workload(std::istream& in) {
  std::vector<WorkloadOp> ops;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    WorkloadOp op{};
    if (tag == "I" || tag == "D") {
      op.op = tag == "I" ? OpKind::insert : OpKind::erase;
      std::string num;
      if (!(ls >> num) || num.find_first_not_of("0123456789") != std::string::npos)
        throw Error("line " + std::to_string(lineno) + ": expected an unsigned value");
      try {
        std::size_t used = 0;
        op.value = std::stoull(num, &used);
      } catch (const std::exception&) {
        throw Error("line " + std::to_string(lineno) + ": value out of range");
      }
    } else if (tag == "F") {
      op.op = OpKind::findmin;
    } else if (tag == "X") {
      op.op = OpKind::deletemin;
    } else {
      throw Error("line " + std::to_string(lineno) + ": unknown op '" + tag + "'");
    }
    std::string extra;
    if (ls >> extra) throw Error("line " + std::to_string(lineno) + ": trailing input");
    ops.push_back(op);
  }
  return ops;
}

std::optional<std::string> validate_workload(const std::vector<WorkloadOp>& ops) {
  std::unordered_set<std::uint64_t> live;
  std::priority_queue<std::uint64_t, std::vector<std::uint64_t>, std::greater<>> heap;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    auto where = [&](const std::string& why) { return "op " + std::to_string(i) + ": " + why; };
    switch (op.op) {
      case OpKind::insert:
        if (!live.insert(op.value).second) return where("duplicate live key " + std::to_string(op.value));
        heap.push(op.value);
        break;
      case OpKind::erase:
        if (live.erase(op.value) == 0) return where("delete of non-live key " + std::to_string(op.value));
        break;
      case OpKind::findmin:
        break;
      case OpKind::deletemin:
        while (!heap.empty() && !live.count(heap.top())) heap.pop();
        if (!heap.empty()) {
          live.erase(heap.top());
          heap.pop();
        }
        break;
    }
  }
  return std::nullopt;
}

}  // namespace empq
