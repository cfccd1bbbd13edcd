#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "indistill/curriculum.hpp"
#include "indistill/data.hpp"
#include "indistill/models.hpp"
#include "indistill/optim.hpp"
#include "indistill/prune.hpp"

namespace indistill {

// indistill: pruned-teacher MSE per layer + task loss.
// mse-hint:  same, but targets are the leading n_g teacher channels (no pruning).
// pkt / okd: single task loss on the penultimate features / logits.
// none:      cross-entropy only.
enum class Method { kInDistill, kOkd, kPkt, kMseHint, kNone };
enum class TaskLoss { kPkt, kOkd };
enum class TaskMode { kRetrieval, kClassification };

std::string to_string(Method m);
std::string to_string(TaskLoss t);
std::string to_string(TaskMode m);
Method parse_method(const std::string& name);
TaskLoss parse_task_loss(const std::string& name);
TaskMode parse_task_mode(const std::string& name);

struct DistillConfig {
  Method method = Method::kInDistill;
  SchedulerMode scheduler = SchedulerMode::kCurriculum;
  TaskLoss task_loss = TaskLoss::kPkt;
  TaskMode mode = TaskMode::kRetrieval;
  long a = 2;
  long b = 1;
  double q = 0.5;
  double temperature = 4.0;
  long epochs = 70;
  // The last final_lr_epochs epochs run at final_lr.
  long final_lr_epochs = 10;
  double lr = 1e-3;
  double final_lr = 1e-4;
  OptimizerConfig optimizer;
  std::size_t batch_size = 128;
  std::size_t accumulation_steps = 1;
  std::uint64_t seed = 0;
  bool horizontal_flip = false;
  double decay_factor = kWeightDecayFactor;

  double lr_at(long epoch) const;
  // Range checks that need no model; throws ConfigError.
  void validate() const;
  // Canonical "key=value" lines, sorted by key.
  std::string canonical() const;
  std::string hash() const;  // 16 hex digits of FNV-1a over canonical()

  bool operator==(const DistillConfig&) const = default;
};

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

struct EpochRecord {
  long epoch = 0;
  std::size_t subtask = 0;
  std::string loss_kind;  // mse<l>, task, ce, mse-all, ...
  double loss = 0.0;      // mean over the epoch's batches
  double lr = 0.0;
  std::string metric_name;
  double metric_value = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct RunMetrics {
  std::vector<EpochRecord> records;

  std::vector<std::string> loss_kinds() const;
  std::string to_csv() const;  // epoch,subtask,loss_kind,loss,lr,metric_name,metric_value
  void write_csv(const std::filesystem::path& path) const;
  bool operator==(const RunMetrics&) const = default;
};

struct TrainResult {
  Model model;
  RunMetrics metrics;
  OptimizerState<float> optimizer;
};

struct TrainHooks {
  // Called after every epoch with the model in its current state.
  std::function<void(long epoch, const Model& model)> on_epoch_end;
};

// Cross-entropy training of a fresh model built from `spec` with config.seed.
TrainResult train_supervised(const ModelSpec& spec, const Dataset& data, const DistillConfig& config,
                             const TrainHooks& hooks = {});

// Auxiliary with widths n_g / (1 - q), trained from the frozen teacher with
// cross-entropy + temperature KL.
TrainResult build_and_distill_auxiliary(const Model& teacher, const ModelSpec& student_spec,
                                        double q, const Dataset& data, const DistillConfig& config,
                                        const TrainHooks& hooks = {});

// Distills `source` (teacher or auxiliary, frozen) into a student built from
// `student_spec`, or into `student` when given.
TrainResult distill_student(const Model& source, const ModelSpec& student_spec, const Dataset& data,
                            const DistillConfig& config, const TrainHooks& hooks = {});
TrainResult distill_student(const Model& source, Model student, const Dataset& data,
                            const DistillConfig& config, const TrainHooks& hooks = {});

// Channel selections that map source feature layers 1..L-1 onto the student,
// per the configured method; empty for methods without intermediate losses.
// Throws AlignmentError if a selected map cannot match the student's shape.
std::vector<ChannelSelection> alignment_for(const Model& source, const ModelSpec& student_spec,
                                            const DistillConfig& config);

// Seeds derived from config.seed for model init and batch order.
std::uint64_t init_seed(std::uint64_t seed);
std::uint64_t shuffle_seed(std::uint64_t seed);

}  // namespace indistill
