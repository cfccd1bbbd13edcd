#include "indistill/curriculum.hpp"

#include <algorithm>

#include "indistill/error.hpp"

namespace indistill {

std::pair<long, long> CurriculumSchedule::epoch_range(std::size_t subtask) const {
  if (subtask == 0 || subtask > epochs.size()) {
    throw ParameterError("sub-task " + std::to_string(subtask) + " outside 1.." +
                         std::to_string(epochs.size()));
  }
  const long r = offsets[subtask - 1];
  return {r + 1, r + epochs[subtask - 1]};
}

long minimum_epochs(long a, long b, std::size_t subtasks) {
  long head = 0;
  for (std::size_t i = 1; i < subtasks; ++i) head += a + static_cast<long>(i) * b;
  return head + 1;
}

CurriculumSchedule build_schedule(long a, long b, long total_epochs, std::size_t subtasks) {
  if (a < 0 || b < 0) throw ParameterError("curriculum: a and b must be non-negative");
  if (total_epochs < 1) throw ParameterError("curriculum: total epochs must be >= 1");
  if (subtasks < 1) throw ParameterError("curriculum: need at least one sub-task");
  const long minimum = minimum_epochs(a, b, subtasks);
  if (total_epochs < minimum) {
    throw InfeasibleScheduleError(
        "curriculum a=" + std::to_string(a) + ", b=" + std::to_string(b) + " over " +
            std::to_string(subtasks) + " sub-tasks needs at least E=" + std::to_string(minimum) +
            " epochs, got " + std::to_string(total_epochs),
        minimum);
  }
  CurriculumSchedule s{a, b, total_epochs, {}, {}};
  long used = 0;
  for (std::size_t i = 1; i <= subtasks; ++i) {
    const long e = i < subtasks ? a + static_cast<long>(i) * b : total_epochs - used;
    s.offsets.push_back(used);
    s.epochs.push_back(e);
    used += e;
  }
  return s;
}

std::size_t active_subtask(const CurriculumSchedule& schedule, long epoch) {
  if (epoch < 1 || epoch > schedule.total_epochs) {
    throw ParameterError("epoch " + std::to_string(epoch) + " outside 1.." +
                         std::to_string(schedule.total_epochs));
  }
  // offsets are ascending; find the last r_i < epoch
  const auto it = std::lower_bound(schedule.offsets.begin(), schedule.offsets.end(), epoch);
  std::size_t i = static_cast<std::size_t>(it - schedule.offsets.begin());
  // zero-length cells (a = b = 0) share an offset; the epoch belongs to the last of them
  return i;
}

std::string to_string(SchedulerMode mode) {
  switch (mode) {
    case SchedulerMode::kCurriculum: return "curriculum";
    case SchedulerMode::kWeightDecay: return "weight-decay";
    case SchedulerMode::kNone: return "none";
  }
  return "none";
}

SchedulerMode parse_scheduler_mode(const std::string& name) {
  if (name == "curriculum") return SchedulerMode::kCurriculum;
  if (name == "weight-decay") return SchedulerMode::kWeightDecay;
  if (name == "none") return SchedulerMode::kNone;
  throw ConfigError("unknown scheduler '" + name + "' (expected curriculum, weight-decay or none)");
}

std::string LossSelector::label() const {
  return kind == Kind::kTask ? "task" : "mse" + std::to_string(layer);
}

LossSelector loss_for_subtask(std::size_t subtask, std::size_t subtasks, bool classification) {
  if (subtask == 0 || subtask > subtasks) {
    throw ParameterError("sub-task " + std::to_string(subtask) + " outside 1.." +
                         std::to_string(subtasks));
  }
  if (subtask < subtasks) return {LossSelector::Kind::kLayerMse, subtask, false};
  return {LossSelector::Kind::kTask, subtask, classification};
}

}  // namespace indistill
