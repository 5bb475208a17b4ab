#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "empq/harness.hpp"
#include "empq/layer_plan.hpp"
#include "empq/pq.hpp"

namespace py = pybind11;
using namespace empq;

namespace {

// Device, sorter and queue with one lifetime.
class Queue {
 public:
  Queue(std::size_t block_size, std::size_t c, std::optional<std::size_t> memory,
        const std::string& sorter, bool check_invariants, bool enforce_residency,
        std::optional<std::vector<std::uint64_t>> force_layers)
      : device_(make_config(block_size, c, memory, enforce_residency)),
        sorter_(make_sorter(sorter, device_.config().internal_memory_records, block_size)) {
    PQConfig pc;
    pc.c = c;
    pc.check_invariants = check_invariants;
    pc.force_layer_plan = std::move(force_layers);
    pq_ = std::make_unique<PriorityQueue>(device_, *sorter_, pc);
  }

  void insert(std::uint64_t v) { pq_->insert(v); }
  void erase(std::uint64_t v) { pq_->erase(v); }
  std::optional<std::uint64_t> findmin() const { return pq_->findmin(); }
  std::optional<std::uint64_t> deletemin() {
    auto m = pq_->findmin();
    if (m) pq_->erase(*m);
    return m;
  }
  std::size_t size() const { return pq_->size(); }
  std::string dump() const { return pq_->dump(); }
  void deep_audit() const { pq_->deep_audit(); }

  py::dict io() const {
    const IoReport r = device_.report();
    py::dict d;
    d["reads"] = r.reads;
    d["writes"] = r.writes;
    d["total"] = r.total();
    for (std::size_t c = 0; c < kIoCauseCount; ++c)
      d[py::str(std::string(to_string(static_cast<IoCause>(c))))] =
          r.per_cause[c].reads + r.per_cause[c].writes;
    d["peak_blocks"] = r.peak_allocated_blocks;
    return d;
  }

 private:
  static DeviceConfig make_config(std::size_t b, std::size_t c, std::optional<std::size_t> m,
                                  bool enforce) {
    DeviceConfig dc;
    dc.block_capacity_records = b;
    dc.internal_memory_records = m.value_or(8 * c * b);
    dc.enforce_residency = enforce;
    return dc;
  }

  BlockDevice device_;
  std::unique_ptr<Sorter> sorter_;
  std::unique_ptr<PriorityQueue> pq_;
};

const char* op_code(OpKind k) {
  switch (k) {
    case OpKind::insert: return "I";
    case OpKind::erase: return "D";
    case OpKind::findmin: return "F";
    case OpKind::deletemin: return "X";
  }
  return "?";
}

OpKind parse_op(const std::string& s) {
  if (s == "I") return OpKind::insert;
  if (s == "D") return OpKind::erase;
  if (s == "F") return OpKind::findmin;
  if (s == "X") return OpKind::deletemin;
  throw Error("unknown op code: " + s);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvariantViolation>(m, "InvariantViolation", error.ptr());

  py::class_<Queue>(m, "Queue")
      .def(py::init<std::size_t, std::size_t, std::optional<std::size_t>, const std::string&, bool,
                    bool, std::optional<std::vector<std::uint64_t>>>(),
           py::arg("block_size") = 16, py::arg("c") = 17, py::arg("memory") = py::none(),
           py::arg("sorter") = "merge", py::arg("check_invariants") = false,
           py::arg("enforce_residency") = false, py::arg("force_layers") = py::none())
      .def("insert", &Queue::insert)
      .def("erase", &Queue::erase)
      .def("findmin", &Queue::findmin)
      .def("deletemin", &Queue::deletemin)
      .def("__len__", &Queue::size)
      .def("dump", &Queue::dump)
      .def("deep_audit", &Queue::deep_audit)
      .def("io", &Queue::io);

  m.def(
      "generate_workload",
      [](const std::string& kind, std::uint64_t n, std::uint64_t seed) {
        std::vector<std::pair<std::string, std::uint64_t>> out;
        for (const auto& op : generate_workload(kind, n, seed)) out.emplace_back(op_code(op.op), op.value);
        return out;
      },
      py::arg("kind"), py::arg("n"), py::arg("seed") = 1);

  m.def(
      "run_workload",
      [](const std::vector<std::pair<std::string, std::uint64_t>>& ops, std::size_t block_size,
         std::size_t c, const std::string& sorter, bool check_oracle) {
        std::vector<WorkloadOp> parsed;
        for (const auto& [code, v] : ops) parsed.push_back({parse_op(code), v});
        RunConfig cfg;
        cfg.block_size = block_size;
        cfg.c = c;
        cfg.sorter = sorter;
        cfg.check_oracle = check_oracle;
        const RunResult r = run_workload(parsed, cfg);
        py::dict d;
        d["transcript"] = r.transcript;
        d["total_ios"] = r.summary.io.total();
        d["updates"] = r.summary.updates;
        d["peak_live"] = r.summary.peak_live;
        d["amortized"] = r.summary.amortized.to_double();
        d["bound"] = r.summary.bound.to_double();
        d["ratio"] = r.summary.ratio;
        d["rebuilds"] = r.summary.rebuild_count;
        d["peak_blocks"] = r.summary.peak_blocks;
        return d;
      },
      py::arg("ops"), py::arg("block_size") = 16, py::arg("c") = 17, py::arg("sorter") = "merge",
      py::arg("check_oracle") = false);

  m.def("layer_plan", &compute_layer_plan, py::arg("n"), py::arg("block_size"), py::arg("c"));
  m.def("phi", &phi_of, py::arg("x"), py::arg("block_size"));
}
