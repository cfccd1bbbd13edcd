#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "indistill/data.hpp"
#include "indistill/models.hpp"
#include "indistill/train.hpp"

namespace indistill::cli {

// Everything one command needs, read from an INI-style file:
//
//   seed = 0          teacher and auxiliary; students use [run] seeds
//   output_dir = runs
//   [data]      dataset, data_root, train_subset, test_subset, synthetic_*
//   [model]     student, depth, teacher
//   [train]     epochs, final_lr_epochs, lr, final_lr, batch_size,
//               accumulation_steps, optimizer, momentum, weight_decay,
//               horizontal_flip
//   [distill]   method, scheduler, task_loss, mode, a, b, q, kd_temperature,
//               decay_factor, use_auxiliary
//   [teacher]   epochs          (defaults to [train] epochs)
//   [auxiliary] epochs
//   [eval]      k
//   [run]       seeds = 0,1,2   (defaults to seed)
struct ExperimentConfig {
  DistillConfig distill;
  long teacher_epochs = -1;
  long aux_epochs = -1;

  std::string dataset = "fashion-mnist";
  std::string data_root;
  std::size_t train_subset = 0;  // 0 keeps the whole split
  std::size_t test_subset = 0;
  std::size_t synthetic_train = 512;
  std::size_t synthetic_test = 256;
  std::size_t synthetic_classes = 10;

  std::string student = "cnn-s";
  std::size_t depth = 3;
  std::string teacher = "wide";  // cnn-a | wide | cnn-s
  bool use_auxiliary = true;

  std::filesystem::path output_dir = "runs";
  std::vector<std::uint64_t> seeds{0};
  std::size_t k = 100;

  std::string canonical() const;
  std::string hash() const;
  DistillConfig teacher_config() const;
  DistillConfig aux_config() const;
};

// Parses and (unless told otherwise) fully validates; throws ConfigError
// naming the offending key. Skip validation only to apply overrides first.
ExperimentConfig parse_experiment(const std::string& text, bool validate = true);
ExperimentConfig load_experiment(const std::filesystem::path& path, bool validate = true);
// Re-run after command-line overrides.
void validate_experiment(const ExperimentConfig& cfg);

InputShape input_shape_for(const std::string& dataset);
std::size_t classes_for(const ExperimentConfig& cfg);
ModelSpec student_spec(const ExperimentConfig& cfg);
ModelSpec teacher_spec(const ExperimentConfig& cfg);

// Train/test splits per the [data] section, normalized with train statistics.
DatasetPair load_data(const ExperimentConfig& cfg);

}  // namespace indistill::cli
