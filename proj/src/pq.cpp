#include "empq/pq.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace empq {
namespace {

/// Merges an in-memory sorted span with a sorted disk stream.
template <class A, class B>
class MergedSource {
 public:
  MergedSource(A& a, B& b) : a_(a), b_(b) {}
  bool done() const { return a_.done() && b_.done(); }
  const Record& peek() { return pick_a() ? a_.peek() : b_.peek(); }
  Record next() { return pick_a() ? a_.next() : b_.next(); }

 private:
  bool pick_a() {
    if (a_.done()) return false;
    if (b_.done()) return true;
    return key_less(a_.peek(), b_.peek());
  }
  A& a_;
  B& b_;
};

/// Cuts the next `planned` records of a sorted stream into base sets of
/// `phi` records (the last one absorbing a small remainder). A cut never
/// separates two records with the same value, so an insert and its delete
/// signal always stay together. Returns the number of records consumed,
/// which can exceed `planned` by such ties.
template <class Source>
std::size_t build_pieces(BlockDevice& device, Source& src, std::size_t planned, std::size_t phi,
                         MergeRule rule, std::optional<Record> first_min, IoCause cause,
                         std::vector<Representative>& out) {
  std::size_t consumed = 0;
  bool first = true;
  while (consumed < planned && !src.done()) {
    const std::size_t take = keep_separate(planned - consumed, phi, rule) ? phi : planned - consumed;
    Representative rep;
    rep.min_key = (first && first_min) ? *first_min : src.peek();
    first = false;
    std::size_t n = 0;
    {
      RunWriter w(device, rep.chain, cause);
      Record last;
      while (n < take && !src.done()) {
        last = src.next();
        w.push(last);
        ++n;
      }
      auto extend_ties = [&] {
        while (!src.done() && src.peek().value == last.value) {
          w.push(src.next());
          ++n;
        }
      };
      extend_ties();
      // Ties can leave a remainder too small to stand alone; keep it here.
      const std::size_t left = planned - std::min(planned, consumed + n);
      if (left > 0 && !keep_separate(phi + left, phi, rule)) {
        for (std::size_t k = 0; k < left && !src.done(); ++k) {
          last = src.next();
          w.push(last);
          ++n;
        }
        extend_ties();
      }
      w.finish();
    }
    consumed += n;
    out.push_back(std::move(rep));
  }
  return consumed;
}

template <class Below, class Above>
void partition_run(BlockDevice& device, DiskRun chain, const Record& pivot, IoCause cause,
                   Below&& below, Above&& above) {
  if (chain.length == 0) {
    free_run(device, chain);
    return;
  }
  RunReader reader(device, std::move(chain), cause, true);
  while (!reader.done()) {
    Record r = reader.next();
    if (key_less(r, pivot))
      below(r);
    else
      above(r);
  }
}

/// Drops matched (insert, delete signal) pairs from a sorted stream.
/// `dropped` is told about each discarded pair.
template <class Source, class Emit, class Drop>
void annihilate(Source& src, Emit&& emit, Drop&& dropped) {
  std::optional<Record> pending;
  while (!src.done()) {
    Record r = src.next();
    if (r.is_signal()) {
      if (pending && pending->value == r.value) {
        pending.reset();
        dropped();
        continue;
      }
      throw Error("unmatched delete signal for value " + std::to_string(r.value));
    }
    if (pending) emit(*pending);
    pending = r;
  }
  if (pending) emit(*pending);
}

std::size_t total_length(const NavList& nav) {
  std::size_t n = 0;
  for (const auto& r : nav.reps()) n += r.chain.length;
  return n;
}

std::vector<std::size_t> chain_sizes(const NavList& nav) {
  std::vector<std::size_t> out;
  out.reserve(nav.size());
  for (const auto& r : nav.reps()) out.push_back(r.chain.length);
  return out;
}

const char* stage_name(PriorityQueue::Stage s) {
  switch (s) {
    case PriorityQueue::Stage::flush: return "flush stage";
    case PriorityQueue::Stage::push: return "push stage";
    case PriorityQueue::Stage::pull: return "pull stage";
  }
  return "stage";
}

}  // namespace

void PQConfig::validate() const {
  if (c < 1) throw Error("c must be positive");
  if (!force_layer_plan && c < 17) throw Error("c must be at least 17");
  if (force_layer_plan) {
    const auto& p = *force_layer_plan;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] >= p[i - 1]) throw Error("forced layer plan must be strictly decreasing");
  }
}

PriorityQueue::PriorityQueue(BlockDevice& device, Sorter& sorter, PQConfig config)
    : device_(device), sorter_(sorter), config_(std::move(config)), block_(device.block_capacity()) {
  config_.validate();
  const std::size_t needed = 3 * config_.c * block_ + 4 * block_;
  if (device_.config().internal_memory_records < needed)
    throw Error("internal memory too small for head, memory buffer and working blocks");
}

// ---------------------------------------------------------------- accessors

DiskRun& PriorityQueue::layer_buffer_mut(std::size_t layer) {
  return layer_nav_.rep(nav_index(layer)).chain;
}

DiskRun& PriorityQueue::level_buffer_mut(std::size_t layer, std::size_t level) {
  return layers_[layer].level_nav.rep(level).chain;
}

const DiskRun& PriorityQueue::layer_buffer(std::size_t layer) const {
  return layer_nav_.rep(nav_index(layer)).chain;
}

const DiskRun& PriorityQueue::level_buffer(std::size_t layer, std::size_t level) const {
  return layers_[layer].level_nav.rep(level).chain;
}

Record PriorityQueue::layer_boundary(std::size_t layer) const {
  return layer_nav_.rep(nav_index(layer)).min_key;
}

std::optional<Record> PriorityQueue::upper_boundary(std::size_t layer, std::size_t level) const {
  const auto& X = layers_[layer];
  if (level < X.top) return X.level_nav.rep(level + 1).min_key;
  if (layer > 0) return layer_boundary(layer - 1);
  return std::nullopt;
}

std::uint64_t PriorityQueue::level_lower_bound(std::size_t layer, std::size_t level) const {
  return 2 * pow8(level) * layers_[layer].phi;
}

std::uint64_t PriorityQueue::level_upper_bound(std::size_t layer, std::size_t level) const {
  const auto& X = layers_[layer];
  return (level < X.top ? 6 : 40) * pow8(level) * X.phi;
}

bool PriorityQueue::level_overflowed(std::size_t layer, std::size_t level) const {
  return layers_[layer].levels[level].size > level_upper_bound(layer, level);
}

bool PriorityQueue::level_underflowed(std::size_t layer, std::size_t level) const {
  return layers_[layer].levels[level].size < level_lower_bound(layer, level);
}

std::uint64_t PriorityQueue::disk_records() const {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    n += layer_buffer(i).length;
    for (std::size_t j = 0; j < layers_[i].levels.size(); ++j)
      n += layers_[i].levels[j].size + level_buffer(i, j).length;
  }
  return n;
}

PriorityQueue::LoEntry PriorityQueue::lo_entry(std::size_t layer, std::size_t level) const {
  return {static_cast<int>(nav_index(layer)), level};
}

std::vector<std::uint64_t> PriorityQueue::current_plan() const { return plan_; }

// ------------------------------------------------------------ public updates

void PriorityQueue::sync_pools() {
  device_.set_pool(MemoryPool::head, head_.size());
  device_.set_pool(MemoryPool::memory_buffer, membuf_.size());
}

void PriorityQueue::after_structural_op() {
  device_.settle();
  sync_pools();
}

void PriorityQueue::insert(std::uint64_t value) {
  ++updates_since_rebuild_;
  ++updates_total_;
  ++live_;
  membuf_.push_back(Record{value, ++seq_, RecordKind::insert});
  membuf_live_.insert(value);
  sync_pools();
  if (membuf_.size() > memory_buffer_capacity()) run_stages();
}

void PriorityQueue::erase(std::uint64_t value) {
  ++updates_since_rebuild_;
  ++updates_total_;
  if (live_ > 0) --live_;

  if (membuf_live_.erase(value) > 0) {
    for (auto it = membuf_.rbegin(); it != membuf_.rend(); ++it) {
      if (it->value == value && !it->is_signal()) {
        membuf_.erase(std::next(it).base());
        break;
      }
    }
    sync_pools();
    return;
  }

  for (auto it = head_.lower_bound(Record{value, 0, RecordKind::insert});
       it != head_.end() && it->value == value; ++it) {
    if (!it->is_signal()) {
      head_.erase(it);
      --head_live_;
      sync_pools();
      if (head_live_ == 0 && !layers_.empty() && disk_records() > 0) {
        pull_stage();
        stage_audit(Stage::pull);
      }
      return;
    }
  }

  membuf_.push_back(Record{value, ++seq_, RecordKind::delete_signal});
  membuf_signals_.insert(value);
  sync_pools();
  if (membuf_.size() > memory_buffer_capacity()) run_stages();
}

std::optional<std::uint64_t> PriorityQueue::findmin() const {
  std::optional<std::uint64_t> best;
  for (const auto& r : head_) {
    if (!r.is_signal()) {
      best = r.value;
      break;
    }
  }
  if (!membuf_live_.empty() && (!best || *membuf_live_.begin() < *best)) best = *membuf_live_.begin();
  return best;
}

bool PriorityQueue::cancel_buffered_signal(std::uint64_t value) {
  if (membuf_signals_.erase(value) == 0) return false;
  for (auto it = membuf_.begin(); it != membuf_.end(); ++it) {
    if (it->value == value && it->is_signal()) {
      membuf_.erase(it);
      break;
    }
  }
  return true;
}

void PriorityQueue::head_insert(const Record& r) {
  // A key reaching the head meets a delete signal still waiting in memory.
  if (!r.is_signal() && cancel_buffered_signal(r.value)) return;
  auto it = head_.lower_bound(Record{r.value, 0, RecordKind::insert});
  for (; it != head_.end() && it->value == r.value; ++it) {
    if (r.is_signal() && !it->is_signal() && it->seq < r.seq) {
      head_.erase(it);
      --head_live_;
      return;
    }
    if (!r.is_signal() && it->is_signal() && it->seq > r.seq) {
      head_.erase(it);
      return;
    }
  }
  head_.insert(r);
  if (!r.is_signal()) ++head_live_;
}

// --------------------------------------------------------------- scheduler

bool PriorityQueue::rebuild_due() const {
  return updates_since_rebuild_ >= std::max<std::uint64_t>(1, n_ / 8);
}

void PriorityQueue::run_stages() {
  ++stats_.scheduler_runs;
  if (layers_.empty() || rebuild_due()) {
    global_rebuild();
    stage_audit(Stage::push);
    pull_stage();
    stage_audit(Stage::pull);
    return;
  }
  flush_stage();
  stage_audit(Stage::flush);
  push_stage();
  stage_audit(Stage::push);
  pull_stage();
  stage_audit(Stage::pull);
}

void PriorityQueue::flush_stage() {
  qo_.clear();
  lo_.clear();
  memory_flush();
  while (!qo_.empty()) {
    const QoEntry e = qo_.front();
    qo_.pop_front();
    if (!e.level) {
      if (2 * layer_buffer(e.layer).length > layers_[e.layer].phi) layer_flush(e.layer);
    } else if (level_buffer(e.layer, *e.level).length > pow8(*e.level) * block_) {
      level_flush(e.layer, *e.level);
      if (level_overflowed(e.layer, *e.level)) lo_.insert(lo_entry(e.layer, *e.level));
    }
  }
}

void PriorityQueue::push_stage() {
  while (!lo_.empty()) {
    const LoEntry e = *lo_.begin();
    lo_.erase(lo_.begin());
    if (e.order < 0) {
      if (head_.size() <= head_capacity()) continue;
      head_push();
      if (layers_.empty()) continue;
      const std::size_t low = layers_.size() - 1;
      if (level_overflowed(low, 0)) lo_.insert(lo_entry(low, 0));
      continue;
    }
    const std::size_t i = layers_.size() - 1 - static_cast<std::size_t>(e.order);
    const std::size_t j = e.level;
    if (!level_overflowed(i, j)) continue;
    if (j < layers_[i].top) {
      level_push(i, j);
      if (level_overflowed(i, j + 1)) lo_.insert(lo_entry(i, j + 1));
    } else if (i == 0) {
      global_rebuild();
      lo_.clear();
      return;
    } else {
      layer_push(i);
      const std::size_t u = i - 1;
      if (level_buffer(u, 0).length > block_) level_flush(u, 0);
      if (level_overflowed(u, 0)) lo_.insert(lo_entry(u, 0));
    }
  }
}

void PriorityQueue::pull_stage() {
  in_pull_stage_ = true;
  while (head_live_ == 0 && !layers_.empty() && disk_records() > 0) {
    head_pull();
    rebalance_underflows();
  }
  in_pull_stage_ = false;
}

void PriorityQueue::rebalance_underflows() {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const std::size_t i = layers_.size() - 1 - k;
    for (std::size_t j = 0; j <= layers_[i].top; ++j) {
      if (!level_underflowed(i, j)) continue;
      if (j < layers_[i].top) {
        level_pull(i, j);
      } else if (i > 0) {
        layer_pull(i);
      } else {
        global_rebuild();
        return;
      }
    }
  }
}

void PriorityQueue::check_pull_no_overflow(std::size_t layer, std::size_t level, const char* where) {
  if (!in_pull_stage_ || !level_overflowed(layer, level)) return;
  throw InvariantViolation(std::string("level overflow during pull stage after ") + where +
                           " (layer " + std::to_string(layer) + ", level " +
                           std::to_string(level) + ")");
}

void PriorityQueue::note_flush(FlushKind kind, const FlushReport& rep) {
  if (config_.record_flushes)
    stats_.flushes.push_back(FlushSample{kind, rep.buffer_size, rep.targets, rep.ios});
}

// ------------------------------------------------------------------ flushes

void PriorityQueue::memory_flush() {
  if (layers_.empty()) throw Error("memory flush requires at least one layer");
  ++stats_.memory_flushes;
  std::vector<Record> records = std::move(membuf_);
  membuf_.clear();
  membuf_live_.clear();
  membuf_signals_.clear();
  std::sort(records.begin(), records.end(), KeyLess{});

  const Record boundary = layer_boundary(layers_.size() - 1);
  auto split = std::lower_bound(records.begin(), records.end(), boundary, KeyLess{});
  for (auto it = records.begin(); it != split; ++it) head_insert(*it);
  std::vector<Record> rest(split, records.end());
  FlushReport rep = flush_via(device_, std::move(rest), layer_nav_, IoCause::flush);
  note_flush(FlushKind::memory, rep);
  after_structural_op();

  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const std::size_t i = layers_.size() - 1 - k;
    if (2 * layer_buffer(i).length > layers_[i].phi) qo_.push_back({i, std::nullopt});
  }
  if (head_.size() > head_capacity()) lo_.insert(LoEntry{-1, 0});
}

void PriorityQueue::layer_flush(std::size_t layer) {
  ++stats_.layer_flushes;
  auto& X = layers_[layer];
  DiskRun buffer = std::exchange(layer_buffer_mut(layer), DiskRun{});
  layer_nav_.persist_rep(nav_index(layer), IoCause::navlist);
  FlushReport rep = flush_via(device_, std::move(buffer), X.level_nav, sorter_, IoCause::flush);
  note_flush(FlushKind::layer, rep);
  after_structural_op();
  for (std::size_t j = 0; j <= X.top; ++j)
    if (level_buffer(layer, j).length > pow8(j) * block_) qo_.push_back({layer, j});
}

void PriorityQueue::level_flush(std::size_t layer, std::size_t level) {
  ++stats_.level_flushes;
  auto& X = layers_[layer];
  DiskRun buffer = std::exchange(level_buffer_mut(layer, level), DiskRun{});
  X.level_nav.persist_rep(level, IoCause::navlist);
  FlushReport rep =
      flush_via(device_, std::move(buffer), X.levels[level].bases, sorter_, IoCause::flush);
  note_flush(FlushKind::level, rep);
  X.levels[level].size += rep.buffer_size;
  rebalance_base_sets(layer, level);
  after_structural_op();
  check_pull_no_overflow(layer, level, "level flush");
}

void PriorityQueue::rebalance_base_sets(std::size_t layer, std::size_t level) {
  auto& X = layers_[layer];
  auto& lvl = X.levels[level];
  const std::size_t phi = X.phi;
  bool any = false;
  for (const auto& r : lvl.bases.reps()) any = any || r.chain.length > 2 * phi;
  if (!any) return;

  std::vector<Representative> reps = lvl.bases.take_reps();
  std::vector<Representative> out;
  out.reserve(reps.size() + 4);
  for (auto& rep : reps) {
    if (rep.chain.length <= 2 * phi) {
      out.push_back(std::move(rep));
      continue;
    }
    ++stats_.base_splits;
    const std::size_t n = rep.chain.length;
    SortResult sorted = sorter_.sort_run(device_, std::exchange(rep.chain, DiskRun{}), IoCause::rebalance);
    RunReader reader(device_, std::move(sorted.run), IoCause::rebalance, true);
    build_pieces(device_, reader, n, phi, MergeRule::below_half, rep.min_key, IoCause::rebalance, out);
  }
  // New representatives are collected first and the list is rebuilt once;
  // the rewrite is billed to the enclosing level flush.
  lvl.bases = NavList::from_reps(device_, std::move(out), IoCause::flush);
}

// ---------------------------------------------------------------- rebalance

void PriorityQueue::level_push(std::size_t layer, std::size_t level) {
  auto& X = layers_[layer];
  if (level >= X.top) throw Error("level push on the top level; use a layer push");
  ++stats_.level_pushes;
  const std::size_t j = level;
  const std::uint64_t threshold = 4 * pow8(j) * X.phi;
  const auto sizes = chain_sizes(X.levels[j].bases);
  auto [front, back] = std::move(X.levels[j].bases).split_at_prefix(sizes, threshold, IoCause::navlist);
  const std::size_t moved = total_length(back);
  const Record new_boundary = back.rep(0).min_key;
  X.levels[j].bases = std::move(front);
  X.levels[j].size -= moved;
  X.levels[j + 1].bases = NavList::attach(std::move(back), std::move(X.levels[j + 1].bases), IoCause::navlist);
  X.levels[j + 1].size += moved;
  X.level_nav.set_min(j + 1, new_boundary, IoCause::navlist);

  if (config_.check_invariants &&
      (X.levels[j].size <= threshold || X.levels[j].size > threshold + 2 * X.phi))
    throw InvariantViolation("level push left level " + std::to_string(j) + " at size " +
                             std::to_string(X.levels[j].size));

  DiskRun keep;
  {
    RunWriter low(device_, keep, IoCause::rebalance);
    RunWriter high(device_, level_buffer_mut(layer, j + 1), IoCause::rebalance);
    partition_run(device_, std::exchange(level_buffer_mut(layer, j), DiskRun{}), new_boundary,
                  IoCause::rebalance, [&](const Record& r) { low.push(r); },
                  [&](const Record& r) { high.push(r); });
    low.finish();
    high.finish();
  }
  level_buffer_mut(layer, j) = std::move(keep);
  X.level_nav.persist_rep(j, IoCause::navlist);
  X.level_nav.persist_rep(j + 1, IoCause::navlist);
  after_structural_op();

  if (level_buffer(layer, j + 1).length > pow8(j + 1) * block_) level_flush(layer, j + 1);
}

void PriorityQueue::level_pull(std::size_t layer, std::size_t level) {
  auto& X = layers_[layer];
  if (level >= X.top) throw Error("level pull on the top level; use a layer pull");
  const std::size_t j = level;
  const std::uint64_t target = 4 * pow8(j) * X.phi;
  if (X.levels[j].size >= target) return;
  ++stats_.level_pulls;
  const std::uint64_t deficit = target - X.levels[j].size;

  auto& up = X.levels[j + 1];
  const auto sizes = chain_sizes(up.bases);
  const std::size_t total = total_length(up.bases);
  // Largest prefix of level j+1 whose size fits in the deficit.
  std::size_t k = deficit >= total ? sizes.size() : prefix_cut_index(sizes, deficit) - 1;
  if (k == 0 || k >= sizes.size())
    throw InvariantViolation("level pull supply shortfall at layer " + std::to_string(layer) +
                             ", level " + std::to_string(j + 1));

  auto [front, back] = std::move(up.bases).split(k, IoCause::navlist);
  const std::size_t moved = total_length(front);
  X.levels[j].bases = NavList::attach(std::move(X.levels[j].bases), std::move(front), IoCause::navlist);
  X.levels[j].size += moved;
  up.bases = std::move(back);
  up.size -= moved;
  const Record new_boundary = up.bases.rep(0).min_key;
  X.level_nav.set_min(j + 1, new_boundary, IoCause::navlist);
  if (config_.check_invariants && X.levels[j].size + 2 * X.phi < target)
    throw InvariantViolation("level pull left level " + std::to_string(j) + " at size " +
                             std::to_string(X.levels[j].size));

  DiskRun keep;
  {
    RunWriter low(device_, level_buffer_mut(layer, j), IoCause::rebalance);
    RunWriter high(device_, keep, IoCause::rebalance);
    partition_run(device_, std::exchange(level_buffer_mut(layer, j + 1), DiskRun{}), new_boundary,
                  IoCause::rebalance, [&](const Record& r) { low.push(r); },
                  [&](const Record& r) { high.push(r); });
    low.finish();
    high.finish();
  }
  level_buffer_mut(layer, j + 1) = std::move(keep);
  X.level_nav.persist_rep(j, IoCause::navlist);
  X.level_nav.persist_rep(j + 1, IoCause::navlist);
  after_structural_op();

  if (level_buffer(layer, j).length > pow8(j) * block_) level_flush(layer, j);
  check_pull_no_overflow(layer, j, "level pull");
}

void PriorityQueue::joint_level_rebuild(std::size_t layer, bool push) {
  const std::size_t u = layer - 1;
  auto& X = layers_[layer];
  auto& U = layers_[u];
  const std::size_t l = X.top;
  const Record top_boundary = X.level_nav.rep(l).min_key;

  std::vector<DiskRun> chains = X.levels[l].bases.take_chains();
  for (auto& c : U.levels[0].bases.take_chains()) chains.push_back(std::move(c));
  X.levels[l].bases = NavList{};
  U.levels[0].bases = NavList{};
  std::size_t total = 0;
  for (const auto& c : chains) total += c.length;

  SortResult sorted = sorter_.sort(device_, std::move(chains), IoCause::rebalance);
  RunReader reader(device_, std::move(sorted.run), IoCause::rebalance, true);
  std::vector<Representative> low, high;
  const std::size_t want = 4 * pow8(l) * X.phi;
  const std::size_t got = build_pieces(device_, reader, want, X.phi, MergeRule::below_half,
                                       top_boundary, IoCause::rebalance, low);
  if (got < want || got >= total)
    throw InvariantViolation("layer " + std::string(push ? "push" : "pull") +
                             " supply shortfall at layer " + std::to_string(layer));
  const std::size_t rest = build_pieces(device_, reader, total - got, U.phi, MergeRule::below_half,
                                        std::nullopt, IoCause::rebalance, high);
  const Record new_boundary = high.front().min_key;
  X.levels[l].bases = NavList::from_reps(device_, std::move(low), IoCause::rebalance);
  X.levels[l].size = got;
  U.levels[0].bases = NavList::from_reps(device_, std::move(high), IoCause::rebalance);
  U.levels[0].size = rest;
  U.level_nav.set_min(0, new_boundary, IoCause::navlist);
  layer_nav_.set_min(nav_index(u), new_boundary, IoCause::navlist);

  if (push) {
    // Keys at or above the new boundary now belong to the upper layer.
    RunWriter up(device_, level_buffer_mut(u, 0), IoCause::rebalance);
    for (DiskRun* src : {&layer_buffer_mut(layer), &level_buffer_mut(layer, l)}) {
      DiskRun keep;
      {
        RunWriter stay(device_, keep, IoCause::rebalance);
        partition_run(device_, std::exchange(*src, DiskRun{}), new_boundary, IoCause::rebalance,
                      [&](const Record& r) { stay.push(r); }, [&](const Record& r) { up.push(r); });
        stay.finish();
      }
      *src = std::move(keep);
    }
    up.finish();
  } else {
    std::uint64_t moved = 0;
    RunWriter down(device_, level_buffer_mut(layer, l), IoCause::rebalance);
    for (DiskRun* src : {&layer_buffer_mut(u), &level_buffer_mut(u, 0)}) {
      DiskRun keep;
      {
        RunWriter stay(device_, keep, IoCause::rebalance);
        partition_run(device_, std::exchange(*src, DiskRun{}), new_boundary, IoCause::rebalance,
                      [&](const Record& r) {
                        down.push(r);
                        ++moved;
                      },
                      [&](const Record& r) { stay.push(r); });
        stay.finish();
      }
      *src = std::move(keep);
    }
    down.finish();
    stats_.max_layer_pull_transfer = std::max(stats_.max_layer_pull_transfer, moved);
    stats_.max_layer_pull_transfer_bound =
        std::max<std::uint64_t>(stats_.max_layer_pull_transfer_bound, U.phi / 2 + 8 * block_);
  }
  layer_nav_.persist_rep(nav_index(layer), IoCause::navlist);
  layer_nav_.persist_rep(nav_index(u), IoCause::navlist);
  X.level_nav.persist_rep(l, IoCause::navlist);
  U.level_nav.persist_rep(0, IoCause::navlist);
  after_structural_op();
}

void PriorityQueue::layer_push(std::size_t layer) {
  if (layer >= layers_.size()) throw Error("no such layer");
  if (layer == 0) throw Error("layer N overflow is handled by a global rebuild");
  ++stats_.layer_pushes;
  joint_level_rebuild(layer, true);
}

void PriorityQueue::layer_pull(std::size_t layer) {
  if (layer >= layers_.size()) throw Error("no such layer");
  if (layer == 0) throw Error("layer N underflow is handled by a global rebuild");
  ++stats_.layer_pulls;
  joint_level_rebuild(layer, false);
  const std::size_t l = layers_[layer].top;
  if (level_buffer(layer, l).length > pow8(l) * block_) level_flush(layer, l);
  check_pull_no_overflow(layer, l, "layer pull");
}

void PriorityQueue::head_push() {
  if (layers_.empty()) {
    global_rebuild();
    return;
  }
  ++stats_.head_pushes;
  const std::size_t i = layers_.size() - 1;
  auto& X = layers_[i];
  std::vector<Record> held(head_.begin(), head_.end());
  head_.clear();
  head_live_ = 0;

  std::vector<DiskRun> chains = X.levels[0].bases.take_chains();
  X.levels[0].bases = NavList{};
  const std::size_t total = held.size() + X.levels[0].size;
  SortResult sorted = sorter_.sort(device_, std::move(chains), IoCause::rebalance);
  RunReader reader(device_, std::move(sorted.run), IoCause::rebalance, true);
  SpanSource mem(held);
  MergedSource<SpanSource, RunReader> src(mem, reader);

  std::size_t taken = 0;
  Record last;
  while (!src.done() && (taken < memory_buffer_capacity() || src.peek().value == last.value)) {
    last = src.next();
    head_insert(last);
    ++taken;
  }
  std::vector<Representative> high;
  const std::size_t rest = build_pieces(device_, src, total - taken, X.phi, MergeRule::below_half,
                                        std::nullopt, IoCause::rebalance, high);
  const Record new_boundary = high.front().min_key;
  X.levels[0].bases = NavList::from_reps(device_, std::move(high), IoCause::rebalance);
  X.levels[0].size = rest;
  X.level_nav.set_min(0, new_boundary, IoCause::navlist);
  layer_nav_.set_min(nav_index(i), new_boundary, IoCause::navlist);
  after_structural_op();
}

void PriorityQueue::head_pull() {
  if (layers_.empty()) return;
  const std::size_t i = layers_.size() - 1;
  auto& X = layers_[i];
  const std::size_t s = X.levels[0].size;
  if (s < 2) {
    global_rebuild();
    return;
  }
  ++stats_.head_pulls;
  // The head takes cB keys, but never more than half of the level so the
  // level keeps a boundary even when its base sets are smaller than cB.
  const std::size_t quota = std::min<std::size_t>(memory_buffer_capacity(), s / 2);

  std::vector<Record> held(head_.begin(), head_.end());
  head_.clear();
  head_live_ = 0;
  std::vector<DiskRun> chains = X.levels[0].bases.take_chains();
  X.levels[0].bases = NavList{};
  const std::size_t total = held.size() + s;
  SortResult sorted = sorter_.sort(device_, std::move(chains), IoCause::rebalance);
  RunReader reader(device_, std::move(sorted.run), IoCause::rebalance, true);
  SpanSource mem(held);
  MergedSource<SpanSource, RunReader> src(mem, reader);

  std::size_t taken = 0;
  Record last;
  while (!src.done() && (taken < quota || src.peek().value == last.value)) {
    last = src.next();
    head_insert(last);
    ++taken;
  }
  if (taken >= total) throw InvariantViolation("head pull emptied level 0");
  std::vector<Representative> high;
  const std::size_t rest = build_pieces(device_, src, total - taken, X.phi, MergeRule::below_half,
                                        std::nullopt, IoCause::rebalance, high);
  const Record new_boundary = high.front().min_key;
  X.levels[0].bases = NavList::from_reps(device_, std::move(high), IoCause::rebalance);
  X.levels[0].size = rest;
  X.level_nav.set_min(0, new_boundary, IoCause::navlist);
  layer_nav_.set_min(nav_index(i), new_boundary, IoCause::navlist);

  for (DiskRun* chain : {&layer_buffer_mut(i), &level_buffer_mut(i, 0)}) {
    DiskRun keep;
    {
      RunWriter stay(device_, keep, IoCause::rebalance);
      partition_run(device_, std::exchange(*chain, DiskRun{}), new_boundary, IoCause::rebalance,
                    [&](const Record& r) { head_insert(r); }, [&](const Record& r) { stay.push(r); });
      stay.finish();
    }
    *chain = std::move(keep);
  }
  layer_nav_.persist_rep(nav_index(i), IoCause::navlist);
  X.level_nav.persist_rep(0, IoCause::navlist);
  after_structural_op();
  if (in_pull_stage_ && head_.size() > head_capacity())
    throw InvariantViolation("head overflow during pull stage");
}

// ---------------------------------------------------------- global rebuild

void PriorityQueue::global_rebuild() {
  ++stats_.rebuilds;
  const std::uint64_t old_n = n_;

  std::vector<Record> memory(head_.begin(), head_.end());
  memory.insert(memory.end(), membuf_.begin(), membuf_.end());
  head_.clear();
  head_live_ = 0;
  membuf_.clear();
  membuf_live_.clear();
  membuf_signals_.clear();

  std::vector<DiskRun> chains = layer_nav_.take_chains();
  for (auto& X : layers_) {
    for (auto& c : X.level_nav.take_chains()) chains.push_back(std::move(c));
    for (auto& lvl : X.levels)
      for (auto& c : lvl.bases.take_chains()) chains.push_back(std::move(c));
  }
  layers_.clear();
  layer_nav_ = NavList{};
  qo_.clear();
  std::size_t on_disk = 0;
  for (const auto& c : chains) on_disk += c.length;
  std::erase_if(chains, [&](DiskRun& c) {
    if (c.length > 0) return false;
    free_run(device_, c);
    return true;
  });

  std::sort(memory.begin(), memory.end(), KeyLess{});
  if (on_disk == 0) {
    std::vector<Record> live;
    live.reserve(memory.size());
    SpanSource src(memory);
    annihilate(src, [&](const Record& r) { live.push_back(r); }, [] {});
    n_ = live.size();
    SpanSource build_src(live);
    build_structure(build_src, n_);
  } else {
    if (!memory.empty()) chains.push_back(write_run(device_, memory, IoCause::rebuild));
    memory.clear();
    sync_pools();
    SortResult sorted = sorter_.sort(device_, std::move(chains), IoCause::rebuild);
    DiskRun compact;
    {
      RunReader reader(device_, std::move(sorted.run), IoCause::rebuild, true);
      RunWriter writer(device_, compact, IoCause::rebuild);
      annihilate(reader, [&](const Record& r) { writer.push(r); }, [&] { device_.release(2); });
      writer.finish();
    }
    n_ = compact.length;
    RunReader src(device_, std::move(compact), IoCause::rebuild, true);
    build_structure(src, n_);
  }
  live_ = n_;
  updates_since_rebuild_ = 0;
  stats_.rebuild_log.push_back(RebuildEvent{updates_total_, n_, old_n});
  after_structural_op();
}

std::uint64_t PriorityQueue::layer_phi(std::size_t i, std::uint64_t x) const {
  if (i + 1 < plan_.size()) return plan_[i + 1];
  // The lowest layer's first base set goes to the head.
  const std::uint64_t phi = std::clamp<std::uint64_t>(phi_of(x, block_), block_, memory_buffer_capacity());
  return std::max<std::uint64_t>(1, std::min(phi, x / 5));
}

template <class Source>
void PriorityQueue::build_structure(Source& src, std::uint64_t n) {
  if (config_.force_layer_plan && n > 2 * config_.c * block_) {
    plan_ = {n};
    for (auto x : *config_.force_layer_plan)
      if (x < plan_.back()) plan_.push_back(x);
    // Entries that leave a layer unable to hold level 0 are dropped.
    for (std::size_t i = 0; i < plan_.size();) {
      if (plan_[i] >= 5 * layer_phi(i, plan_[i])) {
        ++i;
      } else if (i + 1 < plan_.size()) {
        plan_.erase(plan_.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      } else {
        plan_.erase(plan_.begin() + static_cast<std::ptrdiff_t>(i), plan_.end());
      }
    }
  } else {
    plan_ = compute_layer_plan(n, block_, config_.c);
  }
  layers_.clear();
  layers_.resize(plan_.size());
  build_layer(0, src, n);

  shape_.clear();
  if (!layers_.empty()) {
    std::vector<Record> mins;
    for (std::size_t k = 0; k < layers_.size(); ++k)
      mins.push_back(layers_[layers_.size() - 1 - k].level_nav.rep(0).min_key);
    layer_nav_ = NavList::build(device_, mins, IoCause::rebuild);
  }
  for (const auto& X : layers_) shape_.push_back(X.levels.size());
}

template <class Source>
void PriorityQueue::build_layer(std::size_t i, Source& src, std::uint64_t n) {
  if (i == layers_.size()) {
    for (std::uint64_t k = 0; k < n; ++k) head_insert(src.next());
    device_.release(n);
    sync_pools();
    return;
  }
  auto& X = layers_[i];
  X.x = n;
  X.phi = layer_phi(i, n);
  X.top = compute_top_level(n, X.phi);
  const auto sizes = base_set_sizes(n, X.phi, MergeRule::at_most_half);
  // The smallest keys build the lower layers.
  build_layer(i + 1, src, sizes.front());

  std::size_t next_piece = 1;
  X.levels.resize(X.top + 1);
  std::vector<Record> level_mins;
  for (std::size_t j = 0; j <= X.top; ++j) {
    const std::size_t count = j < X.top ? 4 * pow8(j) : sizes.size() - next_piece;
    if (next_piece + count > sizes.size() || count == 0)
      throw Error("layer of " + std::to_string(n) + " keys cannot fill its levels");
    std::vector<Representative> reps;
    std::size_t level_size = 0;
    for (std::size_t p = 0; p < count; ++p, ++next_piece) {
      Representative rep;
      rep.min_key = src.peek();
      {
        RunWriter w(device_, rep.chain, IoCause::rebuild);
        for (std::size_t r = 0; r < sizes[next_piece]; ++r) w.push(src.next());
        w.finish();
      }
      level_size += rep.chain.length;
      reps.push_back(std::move(rep));
    }
    level_mins.push_back(reps.front().min_key);
    X.levels[j].bases = NavList::from_reps(device_, std::move(reps), IoCause::rebuild);
    X.levels[j].size = level_size;
  }
  X.level_nav = NavList::build(device_, level_mins, IoCause::rebuild);
}

// ------------------------------------------------------------------ audits

void PriorityQueue::stage_audit(Stage stage) {
  if (!config_.check_invariants) return;
  ++stats_.audits;
  audit(stage);
  if (stage == Stage::pull && config_.deep_audit_every > 0 &&
      stats_.scheduler_runs % config_.deep_audit_every == 0) {
    ++stats_.deep_audits;
    deep_audit();
  }
}

void PriorityQueue::audit(Stage stage) const {
  const std::string where = stage_name(stage);
  auto fail = [&](const std::string& msg) { throw InvariantViolation(where + ": " + msg); };

  if (membuf_.size() > memory_buffer_capacity()) fail("memory buffer over capacity");
  if (stage != Stage::flush && head_.size() > head_capacity())
    fail("head holds " + std::to_string(head_.size()) + " > 2cB records");
  if (layers_.size() != shape_.size()) fail("layer count changed since the last rebuild");
  if (layer_nav_.size() != layers_.size()) fail("layer navigation list size mismatch");
  if (stage == Stage::pull && head_live_ == 0 && !layers_.empty() && disk_records() > 0)
    fail("head empty after pull stage");

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& X = layers_[i];
    const std::string at = "layer " + std::to_string(i);
    if (X.levels.size() != shape_[i]) fail(at + ": level count changed since the last rebuild");
    if (X.level_nav.size() != X.levels.size()) fail(at + ": level navigation list size mismatch");
    if (!config_.force_layer_plan) {
      const std::uint64_t unit = pow8(X.top) * X.phi;
      if (4 * unit > X.x || X.x > 40 * unit) fail(at + ": top level outside its size bracket");
    }
    if (2 * layer_buffer(i).length > X.phi) fail(at + ": layer buffer over phi/2");
    if (!(layer_nav_.rep(nav_index(i)).min_key == X.level_nav.rep(0).min_key))
      fail(at + ": layer boundary differs from level 0 boundary");
    if (i > 0 && !key_less(layer_boundary(i), layer_boundary(i - 1)))
      fail(at + ": layer boundaries out of order");

    for (std::size_t j = 0; j < X.levels.size(); ++j) {
      const auto& lvl = X.levels[j];
      const std::string lat = at + " level " + std::to_string(j);
      if (lvl.bases.empty()) fail(lat + ": no base sets");
      if (!(X.level_nav.rep(j).min_key == lvl.bases.rep(0).min_key))
        fail(lat + ": level boundary differs from its first base set");
      if (total_length(lvl.bases) != lvl.size) fail(lat + ": size does not match base sets");
      if (level_buffer(i, j).length > pow8(j) * block_) fail(lat + ": level buffer over 8^j*B");
      for (const auto& r : lvl.bases.reps()) {
        if (r.chain.length > 2 * X.phi) fail(lat + ": base set over 2*phi");
        if (2 * r.chain.length < X.phi) fail(lat + ": base set under phi/2");
      }
      if (lvl.size < level_lower_bound(i, j))
        fail(lat + ": size " + std::to_string(lvl.size) + " under " +
             std::to_string(level_lower_bound(i, j)));
      if (stage != Stage::flush && lvl.size > level_upper_bound(i, j))
        fail(lat + ": size " + std::to_string(lvl.size) + " over " +
             std::to_string(level_upper_bound(i, j)));
    }
  }
}

void PriorityQueue::deep_audit() const {
  auto fail = [](const std::string& msg) { throw InvariantViolation("deep audit: " + msg); };
  auto check_range = [&](const DiskRun& run, const Record& lo, const std::optional<Record>& hi,
                         const std::string& what) {
    for (const Record& r : peek_run(device_, run)) {
      if (key_less(r, lo)) fail(what + " holds a key below its lower boundary");
      if (hi && !key_less(r, *hi)) fail(what + " holds a key at or above its upper boundary");
    }
  };

  layer_nav_.audit("layer navigation list");
  if (!layers_.empty()) {
    const Record low = layer_boundary(layers_.size() - 1);
    for (const auto& r : head_)
      if (!key_less(r, low)) fail("head holds a key at or above the lowest layer boundary");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& X = layers_[i];
    const std::string at = "layer " + std::to_string(i);
    const std::optional<Record> hi = i > 0 ? std::optional<Record>(layer_boundary(i - 1)) : std::nullopt;
    X.level_nav.audit((at + " level navigation list").c_str());
    check_range(layer_buffer(i), layer_boundary(i), hi, at + " buffer");
    for (std::size_t j = 0; j < X.levels.size(); ++j) {
      const auto& bases = X.levels[j].bases;
      const std::string lat = at + " level " + std::to_string(j);
      bases.audit((lat + " base navigation list").c_str());
      const std::optional<Record> next = upper_boundary(i, j);
      check_range(level_buffer(i, j), X.level_nav.rep(j).min_key, next, lat + " buffer");
      for (std::size_t k = 0; k < bases.size(); ++k) {
        const std::optional<Record> bound =
            k + 1 < bases.size() ? std::optional<Record>(bases.rep(k + 1).min_key) : next;
        check_range(bases.rep(k).chain, bases.rep(k).min_key, bound,
                    lat + " base set " + std::to_string(k));
      }
    }
  }
}

std::string PriorityQueue::dump() const {
  std::ostringstream os;
  os << "memory_buffer size=" << membuf_.size() << " capacity=" << memory_buffer_capacity() << '\n';
  os << "head size=" << head_.size() << " live=" << head_live_ << " capacity=" << head_capacity() << '\n';
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& X = layers_[i];
    os << "layer " << i << " x=" << X.x << " phi=" << X.phi << " top=" << X.top
       << " buffer=" << layer_buffer(i).length << '\n';
    for (std::size_t j = 0; j < X.levels.size(); ++j) {
      const auto& lvl = X.levels[j];
      os << "  level " << j << " size=" << lvl.size << " buffer=" << level_buffer(i, j).length
         << " sets=" << lvl.bases.size() << '\n';
      for (std::size_t k = 0; k < lvl.bases.size(); ++k)
        os << "    base " << k << " size=" << lvl.bases.rep(k).chain.length << '\n';
    }
  }
  return os.str();
}

}  // namespace empq
