#include "empq/harness.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>
#include <unordered_set>

namespace empq {
namespace {

Rational add(Rational a, Rational b) {
  const std::uint64_t den = std::lcm(a.den, b.den);
  Rational r{a.num * (den / a.den) + b.num * (den / b.den), den};
  const std::uint64_t g = std::gcd(r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

Rational reduce(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return {0, 1};
  const std::uint64_t g = std::gcd(num, den);
  return g > 1 ? Rational{num / g, den / g} : Rational{num, den};
}

class Oracle {
 public:
  void insert(std::uint64_t v) {
    live_.insert(v);
    heap_.push(v);
  }
  void erase(std::uint64_t v) { live_.erase(v); }
  std::optional<std::uint64_t> min() {
    while (!heap_.empty() && !live_.count(heap_.top())) heap_.pop();
    if (heap_.empty()) return std::nullopt;
    return heap_.top();
  }

 private:
  std::priority_queue<std::uint64_t, std::vector<std::uint64_t>, std::greater<>> heap_;
  std::unordered_set<std::uint64_t> live_;
};

}  // namespace

Rational compute_bound(const Sorter& sorter, std::uint64_t n, std::size_t block_size) {
  Rational sum{0, 1};
  double x = static_cast<double>(n) / static_cast<double>(block_size);
  do {
    const auto term = static_cast<std::uint64_t>(std::ceil(std::max(x, 1.0)));
    sum = add(sum, sorter.predicted_per_key_cost(block_size * term));
    x = std::log2(x);
  } while (x > 1.0);
  return reduce(sum.num, sum.den * block_size);
}

std::uint64_t max_rebuilds_per_window(const std::vector<RebuildEvent>& log) {
  std::uint64_t worst = 0;
  for (std::size_t r = 0; r < log.size(); ++r) {
    const std::uint64_t end = log[r].update_index + std::max<std::uint64_t>(1, log[r].n / 8);
    std::uint64_t count = 0;
    for (std::size_t k = r; k < log.size() && log[k].update_index < end; ++k) ++count;
    worst = std::max(worst, count);
  }
  return worst;
}

std::string format_transcript_entry(const std::optional<std::uint64_t>& v) {
  return v ? std::to_string(*v) : std::string("-");
}

RunResult run_workload(const std::vector<WorkloadOp>& ops, const RunConfig& config) {
  DeviceConfig dc;
  dc.block_capacity_records = config.block_size;
  dc.internal_memory_records = config.memory_records();
  dc.enforce_residency = config.enforce_residency;
  dc.validate();
  BlockDevice device(dc);
  device.set_trace(config.trace_io);
  auto sorter = make_sorter(config.sorter, config.sort_memory_records(), config.block_size);

  PQConfig pc;
  pc.c = config.c;
  pc.force_layer_plan = config.force_layers;
  pc.check_invariants = config.check_invariants;
  pc.deep_audit_every = config.deep_audit_every;
  pc.record_flushes = config.record_flushes;
  PriorityQueue pq(device, *sorter, pc);

  RunResult result;
  RunSummary& s = result.summary;
  Oracle oracle;
  std::uint64_t live = 0;

  auto check = [&](std::size_t i, const std::optional<std::uint64_t>& got) {
    if (!config.check_oracle) return;
    const auto want = oracle.min();
    if (got != want) {
      std::ostringstream os;
      os << "oracle mismatch at op " << i << ": expected " << format_transcript_entry(want)
         << ", got " << format_transcript_entry(got);
      throw OracleMismatch(i, os.str());
    }
  };

  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    ++s.ops[static_cast<std::size_t>(op.op)];
    try {
      switch (op.op) {
        case OpKind::insert:
          pq.insert(op.value);
          if (config.check_oracle) oracle.insert(op.value);
          ++live;
          break;
        case OpKind::erase:
          pq.erase(op.value);
          if (config.check_oracle) oracle.erase(op.value);
          --live;
          break;
        case OpKind::findmin: {
          const auto m = pq.findmin();
          check(i, m);
          result.transcript.push_back(m);
          break;
        }
        case OpKind::deletemin: {
          const auto m = pq.findmin();
          check(i, m);
          result.transcript.push_back(m);
          if (m) {
            pq.erase(*m);
            if (config.check_oracle) oracle.erase(*m);
            --live;
          }
          break;
        }
      }
    } catch (const InvariantViolation& e) {
      throw AuditFailure(i, e.what(), pq.dump());
    }
    s.peak_live = std::max(s.peak_live, live);
  }

  s.io = device.report();
  s.updates = s.ops[0] + s.ops[1] + s.ops[3];
  s.amortized = reduce(s.io.total(), std::max<std::uint64_t>(s.updates, 1));
  s.bound = s.peak_live > 0 ? compute_bound(*sorter, s.peak_live, config.block_size) : Rational{0, 1};
  s.ratio = s.bound.num > 0 ? s.amortized.to_double() / s.bound.to_double() : 0.0;
  s.rebuild_count = pq.stats().rebuilds;
  s.max_rebuilds_in_window = max_rebuilds_per_window(pq.stats().rebuild_log);
  s.peak_blocks = s.io.peak_allocated_blocks;
  result.stats = pq.stats();
  return result;
}

void write_summary(std::ostream& out, const RunSummary& s) {
  out << "ops I=" << s.ops[0] << " D=" << s.ops[1] << " F=" << s.ops[2] << " X=" << s.ops[3] << '\n';
  out << "io reads=" << s.io.reads << " writes=" << s.io.writes << " total=" << s.io.total() << '\n';
  for (std::size_t c = 0; c < kIoCauseCount; ++c)
    out << "io." << to_string(static_cast<IoCause>(c)) << " reads=" << s.io.per_cause[c].reads
        << " writes=" << s.io.per_cause[c].writes << '\n';
  out << std::setprecision(6);
  out << "peak_live " << s.peak_live << '\n';
  out << "amortized " << s.amortized.to_double() << '\n';
  out << "bound " << s.bound.to_double() << '\n';
  out << "ratio " << s.ratio << '\n';
  out << "rebuilds " << s.rebuild_count << " (max " << s.max_rebuilds_in_window
      << " per N/8 window)\n";
  out << "peak_blocks " << s.peak_blocks << '\n';
}

std::vector<SweepRow> run_sweep(const std::vector<std::uint64_t>& n_list,
                                const std::vector<std::size_t>& b_list,
                                const std::vector<std::string>& kinds, const RunConfig& base,
                                std::uint64_t seed) {
  if (n_list.empty() || b_list.empty() || kinds.empty()) throw Error("sweep lists must be nonempty");
  std::vector<SweepRow> rows;
  for (auto n : n_list)
    for (auto b : b_list)
      for (const auto& kind : kinds) {
        RunConfig cfg = base;
        cfg.block_size = b;
        const auto ops = generate_workload(kind, n, seed);
        rows.push_back({n, b, kind, run_workload(ops, cfg).summary});
      }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepHeader << '\n';
  out << std::setprecision(8);
  for (const auto& r : rows)
    out << r.n << ',' << r.b << ',' << r.kind << ',' << r.summary.io.total() << ','
        << r.summary.amortized.to_double() << ',' << r.summary.bound.to_double() << ','
        << r.summary.ratio << ',' << r.summary.rebuild_count << ',' << r.summary.peak_blocks << '\n';
}

}  // namespace empq
