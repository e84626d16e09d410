#include "asyflexa/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

namespace asyflexa {

SchedulerKind scheduler_kind_from_string(const std::string& s) {
  if (s == "cyclic") return SchedulerKind::kCyclic;
  if (s == "random_sequential") return SchedulerKind::kRandomSequential;
  if (s == "random_parallel") return SchedulerKind::kRandomParallel;
  if (s == "shared_uniform") return SchedulerKind::kSharedUniform;
  if (s == "partitioned_shuffle") return SchedulerKind::kPartitionedShuffle;
  throw StructuralError("unknown scheduler kind: " + s);
}

std::string to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::kCyclic: return "cyclic";
    case SchedulerKind::kRandomSequential: return "random_sequential";
    case SchedulerKind::kRandomParallel: return "random_parallel";
    case SchedulerKind::kSharedUniform: return "shared_uniform";
    case SchedulerKind::kPartitionedShuffle: return "partitioned_shuffle";
  }
  return "?";
}

void SchedulerConfig::finalize() {
  if (blocks < 1) throw StructuralError("scheduler: blocks must be >= 1");
  if (workers < 1) throw StructuralError("scheduler: workers must be >= 1");
  if (window < 1) throw StructuralError("scheduler: window T must be >= 1");
  const bool partitioned = kind == SchedulerKind::kRandomParallel ||
                           kind == SchedulerKind::kPartitionedShuffle;
  if (partitioned) {
    workers = std::min(workers, blocks);
    if (partitions.empty()) {
      partitions.resize(workers);
      for (int b = 0; b < blocks; ++b)
        partitions[b % workers].push_back(b);
    }
    std::vector<int> seen(blocks, 0);
    for (const auto& p : partitions)
      for (int b : p) {
        if (b < 0 || b >= blocks)
          throw StructuralError("scheduler: partition block out of range");
        seen[b] += 1;
      }
    for (int c : seen)
      if (c != 1)
        throw StructuralError("scheduler: partitions must cover each block once");
    workers = static_cast<int>(partitions.size());
  }
  if (weights.empty()) weights.assign(blocks, 1.0);
  if (static_cast<int>(weights.size()) != blocks)
    throw StructuralError("scheduler: weights size mismatch");
  double wmin = weights[0], wsum = 0.0;
  for (double w : weights) {
    if (w <= 0.0) throw StructuralError("scheduler: weights must be positive");
    wmin = std::min(wmin, w);
    wsum += w;
  }
  // Default (T, p_min) declarations per kind, phrased as windowed update
  // frequencies so the empirical C2 check is meaningful: cyclic hits every
  // block once per N; the shuffle kinds hit each block at least once per
  // 2 |I_c| C; the randomized kinds average wmin/wsum per step.
  if (p_min <= 0.0) {
    switch (kind) {
      case SchedulerKind::kCyclic:
        window = std::max(window, blocks);
        p_min = 1.0 / static_cast<double>(blocks);
        break;
      case SchedulerKind::kPartitionedShuffle: {
        std::size_t pmax = 1;
        for (const auto& p : partitions) pmax = std::max(pmax, p.size());
        window = std::max<int>(window, 2 * static_cast<int>(pmax) * workers);
        p_min = 1.0 / static_cast<double>(window);
        break;
      }
      default:
        window = std::max(window, blocks);
        p_min = wmin / wsum;
        break;
    }
  }
  if (p_min <= 0.0 || p_min > 1.0)
    throw StructuralError("scheduler: p_min must lie in (0, 1]");
  if (!delay_law.block_cost.empty() &&
      static_cast<int>(delay_law.block_cost.size()) != blocks)
    throw StructuralError("scheduler: delay-law cost size mismatch");
}

namespace {

std::uint32_t draw_delay(const DelayLaw& law, std::uint32_t delta, int block,
                         Rng& rng) {
  if (delta == 0) return 0;
  switch (law.kind) {
    case DelayLawKind::kConstant:
      return delta;
    case DelayLawKind::kUniform:
      return static_cast<std::uint32_t>(rng.below(delta + 1));
    case DelayLawKind::kGeometric: {
      // truncated geometric: P(d) ~ (1-p)^d
      const double p = std::min(std::max(law.param, 1e-6), 1.0 - 1e-12);
      std::uint32_t d = 0;
      while (d < delta && rng.uniform01() > p) ++d;
      return d;
    }
    case DelayLawKind::kCostProportional: {
      // expensive blocks carry proportionally larger staleness
      double cmax = 0.0;
      for (double c : law.block_cost) cmax = std::max(cmax, c);
      const double frac =
          cmax > 0.0 ? law.block_cost[block] / cmax : 1.0;
      const std::uint32_t cap =
          static_cast<std::uint32_t>(std::ceil(frac * delta));
      return static_cast<std::uint32_t>(rng.below(cap + 1));
    }
  }
  return 0;
}

class CyclicScheduler final : public Scheduler {
 public:
  explicit CyclicScheduler(SchedulerConfig cfg) : Scheduler(std::move(cfg)) {}
  std::optional<ScheduleEvent> next() override {
    ScheduleEvent e;
    e.k = k_;
    e.i = static_cast<int>(k_ % cfg_.blocks);
    e.d.assign(cfg_.blocks, 0);
    ++k_;
    return e;
  }

 private:
  std::uint64_t k_ = 0;
};

class RandomSequentialScheduler final : public Scheduler {
 public:
  explicit RandomSequentialScheduler(SchedulerConfig cfg)
      : Scheduler(std::move(cfg)), rng_(cfg_.seed) {}
  std::optional<ScheduleEvent> next() override {
    ScheduleEvent e;
    e.k = k_++;
    e.i = static_cast<int>(rng_.weighted(cfg_.weights));
    e.d.assign(cfg_.blocks, 0);
    return e;
  }

 private:
  std::uint64_t k_ = 0;
  Rng rng_;
};

// C cores, one draw per core per round; every update in a round reads the
// round-start iterate: event t of a round carries delay t outside the
// updating core's own partition (the staircase 0(c), 1(c), ..., (C-1)(c)).
class RandomParallelScheduler final : public Scheduler {
 public:
  explicit RandomParallelScheduler(SchedulerConfig cfg)
      : Scheduler(std::move(cfg)), rng_(cfg_.seed) {
    owner_.assign(cfg_.blocks, 0);
    for (std::size_t c = 0; c < cfg_.partitions.size(); ++c)
      for (int b : cfg_.partitions[c]) owner_[b] = static_cast<int>(c);
  }
  std::optional<ScheduleEvent> next() override {
    const std::uint32_t r = static_cast<std::uint32_t>(k_ % cfg_.workers);
    ScheduleEvent e;
    e.k = k_++;
    e.i = static_cast<int>(rng_.weighted(cfg_.weights));
    const int c = owner_[e.i];
    e.d.assign(cfg_.blocks, r);
    for (int b : cfg_.partitions[c]) e.d[b] = 0;
    return e;
  }

 private:
  std::uint64_t k_ = 0;
  Rng rng_;
  std::vector<int> owner_;
};

class SharedUniformScheduler final : public Scheduler {
 public:
  explicit SharedUniformScheduler(SchedulerConfig cfg)
      : Scheduler(std::move(cfg)), rng_(cfg_.seed) {}
  std::optional<ScheduleEvent> next() override {
    ScheduleEvent e;
    e.k = k_++;
    e.i = static_cast<int>(rng_.weighted(cfg_.weights));
    e.d.resize(cfg_.blocks);
    for (int b = 0; b < cfg_.blocks; ++b)
      e.d[b] = draw_delay(cfg_.delay_law, cfg_.delta, b, rng_);
    e.d[e.i] = 0;
    return e;
  }

 private:
  std::uint64_t k_ = 0;
  Rng rng_;
};

// Without-replacement scheme: each worker shuffles its own partition every
// epoch and walks it cyclically; workers take turns round-robin. Own blocks
// are always fresh; foreign blocks carry delay-law staleness.
class PartitionedShuffleScheduler final : public Scheduler {
 public:
  explicit PartitionedShuffleScheduler(SchedulerConfig cfg)
      : Scheduler(std::move(cfg)) {
    for (std::size_t c = 0; c < cfg_.partitions.size(); ++c) {
      workers_.push_back(
          {cfg_.partitions[c], 0, Rng::stream(cfg_.seed, c + 1)});
      workers_.back().rng.shuffle(workers_.back().order);
    }
    delay_rng_ = std::make_unique<Rng>(Rng::stream(cfg_.seed, 0));
  }
  std::optional<ScheduleEvent> next() override {
    const int c = static_cast<int>(k_ % workers_.size());
    auto& w = workers_[c];
    if (w.cursor == w.order.size()) {  // epoch boundary for this worker
      w.rng.shuffle(w.order);
      w.cursor = 0;
    }
    ScheduleEvent e;
    e.k = k_++;
    e.i = w.order[w.cursor++];
    e.d.resize(cfg_.blocks);
    for (int b = 0; b < cfg_.blocks; ++b)
      e.d[b] = draw_delay(cfg_.delay_law, cfg_.delta, b, *delay_rng_);
    for (int b : cfg_.partitions[c]) e.d[b] = 0;
    return e;
  }

 private:
  struct Worker {
    std::vector<int> order;
    std::size_t cursor;
    Rng rng;
  };
  std::uint64_t k_ = 0;
  std::vector<Worker> workers_;
  std::unique_ptr<Rng> delay_rng_;
};

class ReplayScheduler final : public Scheduler {
 public:
  ReplayScheduler(std::vector<ScheduleEvent> events, SchedulerConfig cfg)
      : Scheduler(std::move(cfg)), events_(std::move(events)) {}
  std::optional<ScheduleEvent> next() override {
    if (pos_ == events_.size()) return std::nullopt;
    return events_[pos_++];
  }

 private:
  std::vector<ScheduleEvent> events_;
  std::size_t pos_ = 0;
};

}  // namespace

std::unique_ptr<Scheduler> make_scheduler(SchedulerConfig cfg) {
  cfg.finalize();
  switch (cfg.kind) {
    case SchedulerKind::kCyclic:
      return std::make_unique<CyclicScheduler>(std::move(cfg));
    case SchedulerKind::kRandomSequential:
      return std::make_unique<RandomSequentialScheduler>(std::move(cfg));
    case SchedulerKind::kRandomParallel:
      return std::make_unique<RandomParallelScheduler>(std::move(cfg));
    case SchedulerKind::kSharedUniform:
      return std::make_unique<SharedUniformScheduler>(std::move(cfg));
    case SchedulerKind::kPartitionedShuffle:
      return std::make_unique<PartitionedShuffleScheduler>(std::move(cfg));
  }
  throw StructuralError("make_scheduler: invalid kind");
}

std::unique_ptr<Scheduler> replay(std::vector<ScheduleEvent> events,
                                  SchedulerConfig cfg) {
  if (cfg.blocks == 1 && !events.empty())
    cfg.blocks = static_cast<int>(events.front().d.size());
  return std::make_unique<ReplayScheduler>(std::move(events), std::move(cfg));
}

ValidationReport validate_trace(const std::vector<ScheduleEvent>& events,
                                const SchedulerConfig& cfg) {
  if (events.empty())
    throw StructuralError("validate_trace: empty event sequence");
  const int N = cfg.blocks;
  ValidationReport rep;
  rep.min_window_frequency.assign(N, 1.0);

  for (const auto& e : events) {
    if (e.i < 0 || e.i >= N)
      throw StructuralError("validate_trace: block index out of range");
    if (static_cast<int>(e.d.size()) != N)
      throw StructuralError("validate_trace: delay vector length mismatch");
    const std::uint32_t m = e.max_delay();
    rep.max_delay = std::max(rep.max_delay, m);
    if (m > cfg.delta) rep.c1_violations += 1;
    if (e.d[e.i] != 0) rep.c3_violations += 1;
  }

  // Sliding windows of length T: per-block update frequency.
  const std::size_t T =
      std::min<std::size_t>(std::max(cfg.window, 1), events.size());
  std::vector<std::uint64_t> below(N, 0);
  std::vector<int> count(N, 0);
  std::size_t windows = 0;
  for (std::size_t t = 0; t < events.size(); ++t) {
    count[events[t].i] += 1;
    if (t + 1 >= T) {
      if (t + 1 > T) count[events[t + 1 - T - 1].i] -= 1;
      windows += 1;
      for (int b = 0; b < N; ++b) {
        const double freq = static_cast<double>(count[b]) / T;
        rep.min_window_frequency[b] =
            std::min(rep.min_window_frequency[b], freq);
        if (freq + 1e-12 < cfg.p_min) below[b] += 1;
      }
    }
  }
  for (int b = 0; b < N; ++b)
    if (windows > 0 && below[b] > windows / 2) rep.flagged_blocks.push_back(b);

  rep.pass = rep.c1_violations == 0 && rep.c3_violations == 0;
  return rep;
}

void write_events_csv(const std::string& path,
                      const std::vector<ScheduleEvent>& events) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw StructuralError("cannot open " + path);
  const int N = events.empty() ? 0 : static_cast<int>(events.front().d.size());
  std::fputs("k,i", f);
  for (int b = 1; b <= N; ++b) std::fprintf(f, ",d_%d", b);
  std::fputc('\n', f);
  for (const auto& e : events) {
    std::fprintf(f, "%llu,%d", static_cast<unsigned long long>(e.k), e.i);
    for (auto v : e.d) std::fprintf(f, ",%u", v);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

std::vector<ScheduleEvent> read_events_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open " + path);
  std::vector<ScheduleEvent> events;
  std::string line;
  if (!std::getline(in, line))
    throw StructuralError("events csv: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    ScheduleEvent e;
    if (!std::getline(ss, cell, ',')) continue;
    e.k = std::stoull(cell);
    if (!std::getline(ss, cell, ','))
      throw StructuralError("events csv: short row");
    e.i = std::stoi(cell);
    while (std::getline(ss, cell, ','))
      e.d.push_back(static_cast<std::uint32_t>(std::stoul(cell)));
    events.push_back(std::move(e));
  }
  return events;
}

}  // namespace asyflexa
