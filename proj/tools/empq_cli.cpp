#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "empq/harness.hpp"
#include "empq/layer_plan.hpp"

namespace {

int log_level() {
  const char* env = std::getenv("EMPQ_LOG");
  return env ? std::atoi(env) : 0;
}

template <class T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size()) throw CLI::ValidationError("bad list entry '" + item + "'");
    out.push_back(static_cast<T>(v));
  }
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"External-memory priority queue harness"};
  app.require_subcommand(1);

  empq::RunConfig cfg;
  std::size_t memory = 0, sort_memory = 0;
  std::string force_layers, trace_path, csv_path, workload_path, out_path;
  std::uint64_t seed = 1;

  auto add_device_flags = [&](CLI::App* sub) {
    sub->add_option("--block-size", cfg.block_size, "records per block")->default_val(16);
    sub->add_option("--memory", memory, "internal memory in records (default 8cB)");
    sub->add_option("--sort-memory", sort_memory, "sorter memory in records (default --memory)");
    sub->add_option("--c", cfg.c, "buffer constant c")->default_val(17);
    sub->add_option("--sorter", cfg.sorter, "merge or memory")->default_val("merge");
    sub->add_flag("--check-oracle", cfg.check_oracle, "compare against an in-memory heap");
    sub->add_flag("--check-invariants", cfg.check_invariants, "audit at stage boundaries");
    sub->add_option("--deep-audit-every", cfg.deep_audit_every, "read all records every n-th scheduler run");
    sub->add_flag("--enforce-residency", cfg.enforce_residency, "fail when internal memory exceeds M");
    sub->add_option("--trace-io", trace_path, "write one line per I/O");
    sub->add_option("--force-layers", force_layers, "comma list of layer sizes (test hook)");
  };

  std::string gen_kind;
  std::uint64_t gen_n = 0;
  auto* gen = app.add_subcommand("generate", "write a workload file");
  gen->add_option("kind", gen_kind, "uniform|sorted|reversed|heapsort|churn")->required();
  gen->add_option("n", gen_n, "size")->required();
  gen->add_option("--seed", seed)->default_val(1);
  gen->add_option("-o,--out", out_path, "output file (default stdout)");

  auto* run = app.add_subcommand("run", "execute a workload");
  run->add_option("--workload", workload_path, "workload file")->required();
  run->add_option("--transcript", out_path, "write the findmin transcript here");
  run->add_option("--seed", seed)->default_val(1);
  add_device_flags(run);

  std::string n_list, b_list = "16", kinds = "churn";
  auto* sweep = app.add_subcommand("sweep", "run a grid of generated workloads");
  sweep->add_option("--n", n_list, "comma list of sizes")->required();
  sweep->add_option("--b", b_list, "comma list of block sizes");
  sweep->add_option("--kinds", kinds, "comma list of workload kinds");
  sweep->add_option("--seed", seed)->default_val(1);
  sweep->add_option("--csv", csv_path, "CSV output (default stdout)");
  add_device_flags(sweep);

  CLI11_PARSE(app, argc, argv);
  const int verbosity = log_level();

  try {
    if (memory) cfg.memory = memory;
    if (sort_memory) cfg.sort_memory = sort_memory;
    if (!force_layers.empty()) cfg.force_layers = parse_list<std::uint64_t>(force_layers);
    std::ofstream trace;
    if (!trace_path.empty()) {
      trace.open(trace_path);
      cfg.trace_io = &trace;
    }

    if (gen->parsed()) {
      const auto ops = empq::generate_workload(gen_kind, gen_n, seed);
      if (out_path.empty()) {
        empq::write_workload(std::cout, ops);
      } else {
        std::ofstream out(out_path);
        empq::write_workload(out, ops);
      }
      return 0;
    }

    if (run->parsed()) {
      std::ifstream in(workload_path);
      if (!in) throw empq::Error("cannot open workload " + workload_path);
      const auto ops = empq::read_workload(in);
      if (verbosity > 0) std::cerr << "running " << ops.size() << " ops\n";
      const auto result = empq::run_workload(ops, cfg);
      if (!out_path.empty()) {
        std::ofstream t(out_path);
        for (const auto& v : result.transcript) t << empq::format_transcript_entry(v) << '\n';
      }
      empq::write_summary(std::cout, result.summary);
      if (verbosity > 1) {
        const auto& st = result.stats;
        std::cerr << "flushes memory=" << st.memory_flushes << " layer=" << st.layer_flushes
                  << " level=" << st.level_flushes << " pushes=" << st.level_pushes
                  << " pulls=" << st.level_pulls << " layer_pushes=" << st.layer_pushes
                  << " layer_pulls=" << st.layer_pulls << '\n';
      }
      return 0;
    }

    if (sweep->parsed()) {
      const auto rows = empq::run_sweep(parse_list<std::uint64_t>(n_list),
                                        parse_list<std::size_t>(b_list), split_words(kinds), cfg, seed);
      if (csv_path.empty()) {
        empq::write_sweep_csv(std::cout, rows);
      } else {
        std::ofstream out(csv_path);
        empq::write_sweep_csv(out, rows);
      }
      return 0;
    }
  } catch (const empq::OracleMismatch& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const empq::AuditFailure& e) {
    std::cerr << "invariant violation at op " << e.op_index() << ": " << e.what() << '\n'
              << e.dump();
    return 3;
  } catch (const empq::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
