#include "indistill/train.hpp"

#include <cmath>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "indistill/losses.hpp"
#include "indistill/random.hpp"

namespace indistill {

std::string to_string(Method m) {
  switch (m) {
    case Method::kInDistill: return "indistill";
    case Method::kOkd: return "okd";
    case Method::kPkt: return "pkt";
    case Method::kMseHint: return "mse-hint";
    case Method::kNone: return "none";
  }
  return "none";
}

std::string to_string(TaskLoss t) { return t == TaskLoss::kPkt ? "pkt" : "okd"; }
std::string to_string(TaskMode m) { return m == TaskMode::kRetrieval ? "retrieval" : "classification"; }

Method parse_method(const std::string& name) {
  for (Method m : {Method::kInDistill, Method::kOkd, Method::kPkt, Method::kMseHint, Method::kNone})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown method '" + name + "' (expected indistill, okd, pkt, mse-hint or none)");
}

TaskLoss parse_task_loss(const std::string& name) {
  if (name == "pkt") return TaskLoss::kPkt;
  if (name == "okd") return TaskLoss::kOkd;
  if (name == "crd") throw ConfigError("task loss 'crd' is not available in this build (use pkt or okd)");
  throw ConfigError("unknown task loss '" + name + "' (expected pkt or okd)");
}

TaskMode parse_task_mode(const std::string& name) {
  if (name == "retrieval") return TaskMode::kRetrieval;
  if (name == "classification") return TaskMode::kClassification;
  throw ConfigError("unknown mode '" + name + "' (expected retrieval or classification)");
}

double DistillConfig::lr_at(long epoch) const {
  return epoch > epochs - final_lr_epochs ? final_lr : lr;
}

void DistillConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (final_lr_epochs < 0) throw ConfigError("final_lr_epochs must be >= 0");
  if (!(lr > 0) || !(final_lr > 0)) throw ConfigError("learning rates must be positive");
  if (!(q >= 0.0 && q < 1.0)) throw ConfigError("pruning rate q must lie in [0, 1)");
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  if (a < 0 || b < 0) throw ConfigError("curriculum a and b must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (accumulation_steps == 0) throw ConfigError("accumulation_steps must be >= 1");
  if (!(decay_factor > 0 && decay_factor <= 1)) throw ConfigError("decay_factor must lie in (0, 1]");
}

std::string DistillConfig::canonical() const {
  std::map<std::string, std::string> kv;
  auto num = [](double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
  };
  kv["a"] = std::to_string(a);
  kv["accumulation_steps"] = std::to_string(accumulation_steps);
  kv["b"] = std::to_string(b);
  kv["batch_size"] = std::to_string(batch_size);
  kv["decay_factor"] = num(decay_factor);
  kv["epochs"] = std::to_string(epochs);
  kv["final_lr"] = num(final_lr);
  kv["final_lr_epochs"] = std::to_string(final_lr_epochs);
  kv["horizontal_flip"] = horizontal_flip ? "true" : "false";
  kv["kd_temperature"] = num(temperature);
  kv["lr"] = num(lr);
  kv["method"] = to_string(method);
  kv["mode"] = to_string(mode);
  kv["optimizer"] = to_string(optimizer.kind);
  kv["optimizer.beta1"] = num(optimizer.beta1);
  kv["optimizer.beta2"] = num(optimizer.beta2);
  kv["optimizer.eps"] = num(optimizer.eps);
  kv["optimizer.momentum"] = num(optimizer.momentum);
  kv["optimizer.weight_decay"] = num(optimizer.weight_decay);
  kv["q"] = num(q);
  kv["scheduler"] = to_string(scheduler);
  kv["seed"] = std::to_string(seed);
  kv["task_loss"] = to_string(task_loss);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string DistillConfig::hash() const { return hex64(fnv1a(canonical())); }

std::vector<std::string> RunMetrics::loss_kinds() const {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.loss_kind);
  return out;
}

std::string RunMetrics::to_csv() const {
  std::ostringstream s;
  s << "epoch,subtask,loss_kind,loss,lr,metric_name,metric_value\n";
  s << std::setprecision(9);
  for (const auto& r : records) {
    s << r.epoch << ',' << r.subtask << ',' << r.loss_kind << ',' << r.loss << ',' << r.lr << ','
      << r.metric_name << ',';
    if (!r.metric_name.empty()) s << r.metric_value;
    s << '\n';
  }
  return s.str();
}

void RunMetrics::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_csv();
}

std::uint64_t init_seed(std::uint64_t seed) { return mix_seed(seed, 0x696e6974); }
std::uint64_t shuffle_seed(std::uint64_t seed) { return mix_seed(seed, 0x73687566); }

namespace {

// What one epoch optimizes.
struct EpochPlan {
  std::size_t subtask = 0;
  std::size_t depth = 0;  // layers run and trained; 0 = whole network
  std::string label;
  double hint_weight = 1.0;
};

// Builds the loss of one batch on the student's tape; `metric` receives the
// batch's summed metric contribution.
using BatchLoss = std::function<Var<float>(Tape<float>&, Model& student, const Batch& batch,
                                           const EpochPlan& plan, double& metric)>;

struct LoopSpec {
  std::function<EpochPlan(long epoch)> plan;
  BatchLoss loss;
  std::string metric_name;
  // drop Adam/momentum state when the sub-task changes; hint and task losses
  // differ by orders of magnitude and stale second moments stall the next phase
  bool fresh_state_per_subtask = false;
};

// Per-op buffers are a few MB; glibc would mmap and unmap each one, paying
// page faults on every batch. Keep them on the heap instead.
void keep_buffers_on_heap() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 512 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

TrainResult run_loop(Model student, const Dataset& data, const DistillConfig& config,
                     const LoopSpec& spec, const TrainHooks& hooks) {
  keep_buffers_on_heap();
  TrainResult result{std::move(student), {}, {}};
  Model& model = result.model;
  auto& params = model.parameters();
  result.optimizer.ensure(params);
  GradientAccumulator acc(config.accumulation_steps);
  const std::uint64_t order_seed = shuffle_seed(config.seed);

  std::size_t current = 0;
  for (long epoch = 1; epoch <= config.epochs; ++epoch) {
    const EpochPlan plan = spec.plan(epoch);
    if (spec.fresh_state_per_subtask && epoch > 1 && plan.subtask != current) {
      result.optimizer = {};
      result.optimizer.ensure(params);
    }
    current = plan.subtask;
    const double lr = config.lr_at(epoch);
    const std::size_t owned = plan.depth == 0 ? params.size() : model.parameters_through(plan.depth);
    auto active = std::make_unique<bool[]>(params.size());
    for (std::size_t i = 0; i < owned; ++i) active[i] = true;
    const std::span<const bool> mask(active.get(), params.size());

    for (auto& p : params) p.zero_grad();
    acc.reset();
    double loss_sum = 0.0, metric_sum = 0.0;
    std::size_t seen = 0;
    const auto order = batches(data.size(), config.batch_size, order_seed, static_cast<std::size_t>(epoch));
    std::size_t batch_no = 0;
    for (const auto& idx : order) {
      Batch batch = gather(data, idx, {config.horizontal_flip, mix_seed(order_seed, epoch * 1000003 + batch_no)});
      Tape<float> tape;
      double metric = 0.0;
      Var<float> loss = spec.loss(tape, model, batch, plan, metric);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss (" + std::to_string(value) + ") at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch_no + 1));
      }
      tape.backward(loss);
      loss_sum += value * static_cast<double>(idx.size());
      metric_sum += metric;
      seen += idx.size();
      ++batch_no;
      const bool last = batch_no == order.size();
      if (acc.push() || last) {
        const float inv = 1.0f / static_cast<float>(acc.pending());
        if (acc.pending() > 1)
          for (std::size_t i = 0; i < owned; ++i)
            for (auto& g : params[i].grad.data()) g *= inv;
        optimizer_step(std::span(params), result.optimizer, config.optimizer, lr, mask);
        for (auto& p : params) p.zero_grad();
        acc.reset();
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.subtask = plan.subtask;
    rec.loss_kind = plan.label;
    rec.loss = loss_sum / static_cast<double>(seen);
    rec.lr = lr;
    if (!spec.metric_name.empty()) {
      rec.metric_name = spec.metric_name;
      rec.metric_value = metric_sum / static_cast<double>(seen);
    }
    result.metrics.records.push_back(rec);
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
  }
  return result;
}

std::size_t correct_count(const Tensor<float>& logits, std::span<const int> labels) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (logits[i * c + k] > logits[i * c + best]) best = k;
    hits += static_cast<int>(best) == labels[i];
  }
  return hits;
}

void check_data(const Dataset& data, const ModelSpec& spec) {
  if (data.size() == 0) throw DataError("empty training set");
  if (data.channels() != spec.input.channels || data.height() != spec.input.height ||
      data.width() != spec.input.width) {
    throw DataError("dataset images are " + to_string(Shape{data.channels(), data.height(), data.width()}) +
                    " but the model expects " +
                    to_string(Shape{spec.input.channels, spec.input.height, spec.input.width}));
  }
  if (data.num_classes > spec.num_classes) {
    throw ConfigError("dataset has " + std::to_string(data.num_classes) + " classes, model outputs " +
                      std::to_string(spec.num_classes));
  }
}

EpochPlan whole_network(long) { return {1, 0, "ce"}; }

}  // namespace

TrainResult train_supervised(const ModelSpec& spec, const Dataset& data, const DistillConfig& config,
                             const TrainHooks& hooks) {
  config.validate();
  validate(spec);
  check_data(data, spec);
  LoopSpec loop;
  loop.plan = whole_network;
  loop.metric_name = "train_accuracy";
  loop.loss = [](Tape<float>& tape, Model& m, const Batch& batch, const EpochPlan&, double& metric) {
    auto out = m.forward(tape, batch.images,
                         {.mode = BatchNormMode::kTrain, .trainable_layers = m.spec().layers.size()});
    metric = static_cast<double>(correct_count(out.logits.value(), batch.labels));
    return cross_entropy(out.logits, std::span<const int>(batch.labels));
  };
  return run_loop(build_model(spec, init_seed(config.seed)), data, config, loop, hooks);
}

TrainResult build_and_distill_auxiliary(const Model& teacher, const ModelSpec& student_spec,
                                        double q, const Dataset& data, const DistillConfig& config,
                                        const TrainHooks& hooks) {
  config.validate();
  ModelSpec aux_spec = make_auxiliary(student_spec, q);
  if (aux_spec.num_classes != teacher.spec().num_classes) {
    throw ConfigError("teacher and auxiliary disagree on the class count");
  }
  check_data(data, aux_spec);
  auto frozen = std::make_shared<Model>(teacher);
  const float temperature = static_cast<float>(config.temperature);
  LoopSpec loop;
  loop.plan = [](long) { return EpochPlan{1, 0, "ce+kl"}; };
  loop.metric_name = "train_accuracy";
  loop.loss = [frozen, temperature](Tape<float>& tape, Model& m, const Batch& batch, const EpochPlan&,
                                    double& metric) {
    Tensor<float> t_logits = predict_logits(*frozen, batch.images);
    auto out = m.forward(tape, batch.images,
                         {.mode = BatchNormMode::kTrain, .trainable_layers = m.spec().layers.size()});
    metric = static_cast<double>(correct_count(out.logits.value(), batch.labels));
    return add(cross_entropy(out.logits, std::span<const int>(batch.labels)),
               kl_distill_loss(t_logits, out.logits, temperature));
  };
  return run_loop(build_model(aux_spec, init_seed(config.seed)), data, config, loop, hooks);
}

std::vector<ChannelSelection> alignment_for(const Model& source, const ModelSpec& student_spec,
                                            const DistillConfig& config) {
  if (config.method != Method::kInDistill && config.method != Method::kMseHint) return {};
  const ModelSpec& ss = source.spec();
  const std::size_t L = student_spec.feature_layers();
  if (ss.feature_layers() != L) {
    throw AlignmentError("source has " + std::to_string(ss.feature_layers()) +
                         " feature layers, student has " + std::to_string(L) +
                         "; layer-wise transfer needs equal depth");
  }
  std::vector<ChannelSelection> sels;
  for (std::size_t l = 1; l < L; ++l) {
    const Shape t = feature_shape(ss, l), s = feature_shape(student_spec, l);
    ChannelSelection sel;
    if (config.method == Method::kInDistill) {
      const std::size_t n = t[0];
      std::size_t p = 0;
      try {
        p = pruned_count(n, config.q);
      } catch (const ConfigError& e) {
        throw AlignmentError(std::string("layer ") + std::to_string(l) + ": " + e.what());
      }
      sel = prune(source.filter_bank(l), p, l);
    } else {
      if (t[0] < s[0]) {
        throw AlignmentError("layer " + std::to_string(l) + ": source has fewer channels (" +
                             std::to_string(t[0]) + ") than the student (" + std::to_string(s[0]) + ")");
      }
      sel = leading_channels(t[0], s[0], l);
    }
    Shape aligned = t;
    aligned[0] = sel.kept.size();
    if (aligned != s) {
      throw AlignmentError("layer " + std::to_string(l) + ": selected teacher map " + to_string(aligned) +
                           " does not match student map " + to_string(s) + " (q = " +
                           std::to_string(config.q) + ")");
    }
    sels.push_back(std::move(sel));
  }
  return sels;
}

TrainResult distill_student(const Model& source, const ModelSpec& student_spec, const Dataset& data,
                            const DistillConfig& config, const TrainHooks& hooks) {
  config.validate();
  validate(student_spec);
  return distill_student(source, build_model(student_spec, init_seed(config.seed)), data, config, hooks);
}

TrainResult distill_student(const Model& source, Model student, const Dataset& data,
                            const DistillConfig& config, const TrainHooks& hooks) {
  config.validate();
  const ModelSpec& spec = student.spec();
  check_data(data, spec);
  if (source.spec().num_classes != spec.num_classes &&
      (config.method == Method::kOkd || config.task_loss == TaskLoss::kOkd)) {
    throw ConfigError("logit distillation needs equal class counts");
  }
  const std::size_t L = spec.feature_layers();
  const auto sels = std::make_shared<std::vector<ChannelSelection>>(alignment_for(source, spec, config));
  const bool layered = !sels->empty();

  std::optional<CurriculumSchedule> schedule;
  if (layered && config.scheduler == SchedulerMode::kCurriculum) {
    if (config.epochs > 0) schedule = build_schedule(config.a, config.b, config.epochs, L);
  }
  // the curriculum's last sub-task is the task loss alone
  const bool joint_hints = layered && config.scheduler != SchedulerMode::kCurriculum;

  const Method method = config.method;
  const bool task_is_kl = method == Method::kOkd ||
                          ((method == Method::kInDistill || method == Method::kMseHint) &&
                           config.task_loss == TaskLoss::kOkd);
  const bool ce = config.mode == TaskMode::kClassification || method == Method::kNone;
  const std::string task_label = method == Method::kNone ? "ce" : "task";

  LoopSpec loop;
  const SchedulerMode sched = layered ? config.scheduler : SchedulerMode::kNone;
  const double decay = config.decay_factor;
  loop.plan = [schedule, L, sched, layered, task_label, decay](long epoch) {
    if (schedule) {
      const std::size_t i = active_subtask(*schedule, epoch);
      const LossSelector s = loss_for_subtask(i, L);
      if (s.kind == LossSelector::Kind::kLayerMse) return EpochPlan{i, i, s.label()};
      return EpochPlan{i, 0, task_label};
    }
    if (!layered) return EpochPlan{L, 0, task_label};
    if (sched == SchedulerMode::kWeightDecay) {
      return EpochPlan{L, 0, "mse-decay+task", std::pow(decay, static_cast<double>(epoch - 1))};
    }
    return EpochPlan{L, 0, "mse-all+task"};
  };

  loop.fresh_state_per_subtask = schedule.has_value();

  auto frozen = std::make_shared<Model>(source);
  const float temperature = static_cast<float>(config.temperature);
  loop.loss = [=](Tape<float>& tape, Model& m, const Batch& batch, const EpochPlan& plan,
                  double&) -> Var<float> {
    Tape<float> t_tape;
    const std::size_t depth = plan.depth;
    auto t_out = frozen->forward(t_tape, batch.images, {.mode = BatchNormMode::kEval, .stop_after = depth});
    auto s_out = m.forward(tape, batch.images,
                           {.mode = BatchNormMode::kTrain,
                            .trainable_layers = depth == 0 ? m.spec().layers.size() : depth,
                            .stop_after = depth});
    auto mse_at = [&](std::size_t l) {
      return mse_feature_loss(select_channels(t_out.features.at(l).value(), (*sels)[l - 1]),
                              s_out.features.at(l));
    };
    if (depth != 0) return mse_at(depth);

    std::optional<Var<float>> total;
    auto accumulate = [&](Var<float> v) { total = total ? add(*total, v) : v; };
    if (joint_hints) {
      Var<float> hints = mse_at(1);
      for (std::size_t l = 2; l < L; ++l) hints = add(hints, mse_at(l));
      if (plan.hint_weight != 1.0) hints = scale(hints, static_cast<float>(plan.hint_weight));
      accumulate(hints);
    }
    if (method != Method::kNone) {
      if (task_is_kl) {
        accumulate(kl_distill_loss(t_out.logits.value(), s_out.logits, temperature));
      } else {
        const std::size_t tl = frozen->spec().feature_layers();
        accumulate(pkt_loss(t_out.features.at(tl).value(), s_out.features.at(L)));
      }
    }
    if (ce) accumulate(cross_entropy(s_out.logits, std::span<const int>(batch.labels)));
    return *total;
  };
  return run_loop(std::move(student), data, config, loop, hooks);
}

}  // namespace indistill
