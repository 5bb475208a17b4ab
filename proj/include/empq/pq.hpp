#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "empq/io_sim.hpp"
#include "empq/layer_plan.hpp"
#include "empq/navlist.hpp"
#include "empq/record.hpp"
#include "empq/sorter.hpp"

namespace empq {

struct PQConfig {
  std::size_t c = 17;
  /// Test hook: nominal sizes of the on-disk layers below layer N, largest
  /// first. Layer i then uses the next entry as its base-set size.
  std::optional<std::vector<std::uint64_t>> force_layer_plan;
  /// Audit metadata invariants at every stage boundary; violations throw.
  bool check_invariants = false;
  /// With check_invariants, also read every record and check key ranges on
  /// every n-th scheduler run (0 disables).
  std::size_t deep_audit_every = 0;
  /// Keep one FlushSample per flush.
  bool record_flushes = false;

  void validate() const;
};

enum class FlushKind : std::uint8_t { memory, layer, level };

struct FlushSample {
  FlushKind kind;
  std::size_t buffer_size;
  std::size_t targets;
  std::uint64_t ios;
};

struct RebuildEvent {
  std::uint64_t update_index;  // updates seen so far when the rebuild ran
  std::uint64_t n;             // live keys after the rebuild
  std::uint64_t old_n;         // N before the rebuild
};

struct PQStats {
  std::uint64_t scheduler_runs = 0;
  std::uint64_t rebuilds = 0;
  std::uint64_t memory_flushes = 0;
  std::uint64_t layer_flushes = 0;
  std::uint64_t level_flushes = 0;
  std::uint64_t base_splits = 0;
  std::uint64_t level_pushes = 0;
  std::uint64_t level_pulls = 0;
  std::uint64_t layer_pushes = 0;
  std::uint64_t layer_pulls = 0;
  std::uint64_t head_pushes = 0;
  std::uint64_t head_pulls = 0;
  std::uint64_t audits = 0;
  std::uint64_t deep_audits = 0;
  /// Records moved into a top-level buffer by layer pulls, worst case.
  std::uint64_t max_layer_pull_transfer = 0;
  std::uint64_t max_layer_pull_transfer_bound = 0;
  std::vector<RebuildEvent> rebuild_log;
  std::vector<FlushSample> flushes;
};

struct LevelState {
  NavList bases;
  std::size_t size = 0;  // records in base sets, buffer excluded
};

struct LayerState {
  std::uint64_t x = 0;    // nominal size at the last rebuild
  std::uint64_t phi = 0;  // base-set size
  std::size_t top = 0;    // index of the top level
  std::vector<LevelState> levels;
  NavList level_nav;      // chains are the level buffers
};

/// External-memory priority queue built on a sorting black box.
///
/// Layers are stored largest first (layers()[0] is layer N); smaller layers
/// hold smaller keys and the head, kept in internal memory, holds the
/// smallest. Inserts and deletes are buffered in memory; when the buffer
/// exceeds cB records the scheduler runs its flush, push and pull stages.
///
/// Values must be unique among live keys, and delete(v) may only name a live
/// key; a violation surfaces at the next global rebuild.
class PriorityQueue {
 public:
  PriorityQueue(BlockDevice& device, Sorter& sorter, PQConfig config = {});

  PriorityQueue(const PriorityQueue&) = delete;
  PriorityQueue& operator=(const PriorityQueue&) = delete;

  void insert(std::uint64_t value);
  void erase(std::uint64_t value);
  /// Smallest live key. Never performs I/O.
  std::optional<std::uint64_t> findmin() const;

  std::size_t size() const { return live_; }
  bool empty() const { return live_ == 0; }

  // Structure operations. They are driven by the scheduler and exposed for
  // tests; calling them outside their preconditions throws.
  void run_stages();
  void global_rebuild();
  void memory_flush();
  void layer_flush(std::size_t layer);
  void level_flush(std::size_t layer, std::size_t level);
  /// Splits every base set of the level holding more than 2*phi records and
  /// rebuilds the level's navigation list once.
  void rebalance_base_sets(std::size_t layer, std::size_t level);
  void level_push(std::size_t layer, std::size_t level);
  void level_pull(std::size_t layer, std::size_t level);
  void layer_push(std::size_t layer);
  void layer_pull(std::size_t layer);
  void head_push();
  void head_pull();

  enum class Stage { flush, push, pull };
  /// Metadata checks for the invariants that must hold after `stage`.
  void audit(Stage stage) const;
  /// Reads every record (uncounted) and checks key ranges and chains.
  void deep_audit() const;

  /// One node per line: layers, levels, base-set sizes and buffer fills.
  std::string dump() const;

  const PQConfig& config() const { return config_; }
  const PQStats& stats() const { return stats_; }
  PQStats& mutable_stats() { return stats_; }
  const std::vector<LayerState>& layers() const { return layers_; }
  const NavList& layer_nav() const { return layer_nav_; }
  std::uint64_t rebuild_n() const { return n_; }
  std::uint64_t updates_since_rebuild() const { return updates_since_rebuild_; }
  std::size_t head_size() const { return head_.size(); }
  std::size_t memory_buffer_size() const { return membuf_.size(); }
  std::vector<Record> head_records() const { return {head_.begin(), head_.end()}; }
  const std::vector<Record>& memory_buffer() const { return membuf_; }
  std::vector<std::uint64_t> current_plan() const;

  std::size_t head_capacity() const { return 2 * config_.c * block_; }
  std::size_t memory_buffer_capacity() const { return config_.c * block_; }

  const DiskRun& layer_buffer(std::size_t layer) const;
  const DiskRun& level_buffer(std::size_t layer, std::size_t level) const;
  std::uint64_t level_lower_bound(std::size_t layer, std::size_t level) const;
  std::uint64_t level_upper_bound(std::size_t layer, std::size_t level) const;
  bool level_overflowed(std::size_t layer, std::size_t level) const;
  bool level_underflowed(std::size_t layer, std::size_t level) const;

 private:
  struct LoEntry {
    int order;  // -1 for the head, else position from the bottom layer
    std::size_t level;
    friend auto operator<=>(const LoEntry&, const LoEntry&) = default;
  };
  struct QoEntry {
    std::size_t layer;
    std::optional<std::size_t> level;  // nullopt for the layer buffer
  };

  std::size_t nav_index(std::size_t layer) const { return layers_.size() - 1 - layer; }
  DiskRun& layer_buffer_mut(std::size_t layer);
  DiskRun& level_buffer_mut(std::size_t layer, std::size_t level);
  Record layer_boundary(std::size_t layer) const;
  std::optional<Record> upper_boundary(std::size_t layer, std::size_t level) const;
  std::uint64_t disk_records() const;
  LoEntry lo_entry(std::size_t layer, std::size_t level) const;

  void head_insert(const Record& r);
  bool cancel_buffered_signal(std::uint64_t value);
  void sync_pools();
  void after_structural_op();
  void flush_stage();
  void push_stage();
  void pull_stage();
  void rebalance_underflows();
  bool rebuild_due() const;
  void joint_level_rebuild(std::size_t layer, bool push);
  void check_pull_no_overflow(std::size_t layer, std::size_t level, const char* where);
  void stage_audit(Stage stage);
  void note_flush(FlushKind kind, const FlushReport& rep);
  std::uint64_t layer_phi(std::size_t i, std::uint64_t x) const;
  template <class Source>
  void build_structure(Source& src, std::uint64_t n);
  template <class Source>
  void build_layer(std::size_t i, Source& src, std::uint64_t n);

  BlockDevice& device_;
  Sorter& sorter_;
  PQConfig config_;
  std::size_t block_;

  std::vector<Record> membuf_;
  std::set<std::uint64_t> membuf_live_;
  std::set<std::uint64_t> membuf_signals_;
  std::set<Record, KeyLess> head_;
  std::size_t head_live_ = 0;

  std::vector<LayerState> layers_;
  NavList layer_nav_;  // ascending by boundary: rep k is layer size()-1-k
  std::vector<std::uint64_t> plan_;
  std::vector<std::size_t> shape_;  // level count per layer since rebuild

  std::uint64_t n_ = 0;
  std::uint64_t updates_since_rebuild_ = 0;
  std::uint64_t updates_total_ = 0;
  std::uint64_t seq_ = 0;
  std::size_t live_ = 0;

  std::deque<QoEntry> qo_;
  std::set<LoEntry> lo_;
  bool in_pull_stage_ = false;
  bool rebuilt_in_stage_ = false;

  PQStats stats_;
};

}  // namespace empq
