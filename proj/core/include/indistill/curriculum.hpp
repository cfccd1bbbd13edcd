#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace indistill {

// Layer-wise epoch allocation. Sub-task i < L gets a + i*b epochs, the final
// sub-task gets the remainder; sub-task i owns epochs offsets[i]+1 ..
// offsets[i]+epochs[i] (1-based, contiguous, covering 1..E).
struct CurriculumSchedule {
  long a = 0;
  long b = 0;
  long total_epochs = 0;
  std::vector<long> epochs;   // e_1..e_L
  std::vector<long> offsets;  // r_1..r_L

  std::size_t subtasks() const noexcept { return epochs.size(); }
  // Inclusive 1-based epoch range of sub-task i (1-based).
  std::pair<long, long> epoch_range(std::size_t subtask) const;
};

CurriculumSchedule build_schedule(long a, long b, long total_epochs, std::size_t subtasks);

// Smallest E for which build_schedule(a, b, E, L) is feasible.
long minimum_epochs(long a, long b, std::size_t subtasks);

// The unique 1-based sub-task whose epoch range contains `epoch`.
std::size_t active_subtask(const CurriculumSchedule& schedule, long epoch);

enum class SchedulerMode { kCurriculum, kWeightDecay, kNone };

std::string to_string(SchedulerMode mode);
SchedulerMode parse_scheduler_mode(const std::string& name);

struct LossSelector {
  enum class Kind { kLayerMse, kTask };
  Kind kind = Kind::kTask;
  std::size_t layer = 0;          // feature layer for kLayerMse
  bool with_cross_entropy = false;  // classification mode, task phase only

  std::string label() const;  // "mse1", "mse2", ..., "task"
  bool operator==(const LossSelector&) const = default;
};

// Sub-task i < L trains layer i against its pruned teacher map; i == L is the
// final task loss.
LossSelector loss_for_subtask(std::size_t subtask, std::size_t subtasks,
                              bool classification = false);

// Per-epoch weight applied to the intermediate losses in the weight-decay
// comparison mode.
inline constexpr double kWeightDecayFactor = 0.9;

}  // namespace indistill
