#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "asyflexa/common.hpp"

namespace asyflexa {

/// One realization (i^k, d^k) of the index-delay process.
struct ScheduleEvent {
  std::uint64_t k = 0;
  int i = 0;                   // updated block, 0-based
  std::vector<std::uint32_t> d;  // per-block delays, length N

  std::uint32_t max_delay() const {
    std::uint32_t m = 0;
    for (auto v : d) m = std::max(m, v);
    return m;
  }
};

enum class SchedulerKind {
  kCyclic,
  kRandomSequential,
  kRandomParallel,
  kSharedUniform,
  kPartitionedShuffle,
};

SchedulerKind scheduler_kind_from_string(const std::string& s);
std::string to_string(SchedulerKind k);

enum class DelayLawKind { kConstant, kUniform, kGeometric, kCostProportional };

struct DelayLaw {
  DelayLawKind kind = DelayLawKind::kUniform;
  double param = 0.5;              // geometric success probability
  std::vector<double> block_cost;  // for cost-proportional
};

struct SchedulerConfig {
  SchedulerKind kind = SchedulerKind::kCyclic;
  int blocks = 1;          // N
  std::uint32_t delta = 0; // max delay bound (C1)
  int workers = 1;         // C, for the partitioned kinds
  std::vector<std::vector<int>> partitions;  // I_1..I_C; default contiguous
  std::uint64_t seed = 0;
  std::vector<double> weights;  // block-selection weights; default uniform
  DelayLaw delay_law;
  // Declared update-frequency window and floor, carried into reports.
  int window = 1;       // T
  double p_min = 0.0;   // 0 = derive a default from the kind

  void finalize();  // fills partition/weight/p_min defaults, validates
};

class Scheduler {
 public:
  virtual ~Scheduler() = default;
  /// Next event, or nullopt when a finite trace is exhausted.
  virtual std::optional<ScheduleEvent> next() = 0;
  const SchedulerConfig& config() const { return cfg_; }

 protected:
  explicit Scheduler(SchedulerConfig cfg) : cfg_(std::move(cfg)) {}
  SchedulerConfig cfg_;
};

std::unique_ptr<Scheduler> make_scheduler(SchedulerConfig cfg);

/// Scheduler that replays a recorded event sequence verbatim.
std::unique_ptr<Scheduler> replay(std::vector<ScheduleEvent> events,
                                  SchedulerConfig cfg = {});

struct ValidationReport {
  std::uint32_t max_delay = 0;
  std::uint64_t c1_violations = 0;  // delays above cfg.delta
  std::uint64_t c3_violations = 0;  // d_{i^k} != 0
  // Empirical C2 check over sliding windows of length T.
  std::vector<double> min_window_frequency;  // per block
  std::vector<int> flagged_blocks;  // persistently under p_min
  bool pass = false;
};

ValidationReport validate_trace(const std::vector<ScheduleEvent>& events,
                                const SchedulerConfig& cfg);

// Trace file: CSV with header k,i,d_1..d_N.
void write_events_csv(const std::string& path,
                      const std::vector<ScheduleEvent>& events);
std::vector<ScheduleEvent> read_events_csv(const std::string& path);

}  // namespace asyflexa
