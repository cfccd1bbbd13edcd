#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "indistill/metrics.hpp"
#include "indistill/train.hpp"

namespace indistill {
namespace {

constexpr InputShape kSmall{1, 12, 12};

DistillConfig quick(long epochs, std::size_t batch = 16) {
  DistillConfig c;
  c.epochs = epochs;
  c.final_lr_epochs = 0;
  c.batch_size = batch;
  c.seed = 11;
  return c;
}

bool same_parameters(const Model& a, const Model& b) {
  if (a.parameters().size() != b.parameters().size()) return false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    if (!(a.parameters()[i].value == b.parameters()[i].value)) return false;
  for (std::size_t i = 0; i < a.running_stats().size(); ++i)
    if (!(a.running_stats()[i].mean == b.running_stats()[i].mean) ||
        !(a.running_stats()[i].var == b.running_stats()[i].var))
      return false;
  return true;
}

// Wide-ish frozen source for the distillation tests: auxiliary of the small
// student, briefly trained so its filters are not all alike.
struct Fixture {
  Dataset data = synthetic_blobs(64, 4, 1, 12, 12, 3);
  ModelSpec student = student_cnn(kSmall, 4, 3);
  Model aux = train_supervised(make_auxiliary(student, 0.5), data, quick(2)).model;
};

TEST(TrainSupervised, SeparatesBlobs) {
  Dataset d = synthetic_blobs(200, 2, 1, 12, 12, 1);
  auto r = train_supervised(student_cnn(kSmall, 2, 2), d, quick(5));
  EXPECT_GT(accuracy(r.model, d), 0.9);
  ASSERT_EQ(r.metrics.records.size(), 5u);
  EXPECT_EQ(r.metrics.records[0].metric_name, "train_accuracy");
}

TEST(TrainSupervised, ZeroEpochsReturnsInitialModel) {
  Dataset d = synthetic_blobs(20, 2, 1, 12, 12, 1);
  const ModelSpec spec = student_cnn(kSmall, 2, 2);
  auto r = train_supervised(spec, d, quick(0));
  EXPECT_TRUE(same_parameters(r.model, build_model(spec, init_seed(11))));
  EXPECT_TRUE(r.metrics.records.empty());
}

TEST(TrainSupervised, Deterministic) {
  Dataset d = synthetic_blobs(40, 2, 1, 12, 12, 1);
  auto a = train_supervised(student_cnn(kSmall, 2, 2), d, quick(2));
  auto b = train_supervised(student_cnn(kSmall, 2, 2), d, quick(2));
  EXPECT_TRUE(same_parameters(a.model, b.model));
  EXPECT_EQ(a.metrics, b.metrics);
}

TEST(TrainSupervised, NonFiniteLossRaises) {
  Dataset d = synthetic_blobs(20, 2, 1, 12, 12, 1);
  d.images[5] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(train_supervised(student_cnn(kSmall, 2, 2), d, quick(1)), NumericError);
}

TEST(TrainSupervised, LearningRateSchedule) {
  DistillConfig c;
  c.epochs = 70;
  EXPECT_EQ(c.lr_at(60), 1e-3);
  EXPECT_EQ(c.lr_at(61), 1e-4);
  EXPECT_EQ(c.lr_at(70), 1e-4);
}

// Linear softmax classifier: accumulation of n micro-batches of b equals one
// batch of n*b because every loss is a batch mean and the model has no
// batch-coupled layers.
TEST(Accumulation, MatchesLargeBatch) {
  ModelSpec spec;
  spec.input = {1, 2, 2};
  spec.num_classes = 3;
  LayerSpec out{LayerKind::kDense, 3};
  out.activation = false;
  spec.layers = {out};
  Dataset d = synthetic_blobs(32, 3, 1, 2, 2, 9);

  for (auto kind : {OptimizerKind::kSgdMomentum, OptimizerKind::kAdam}) {
    DistillConfig small = quick(3, 2), large = quick(3, 8);
    small.accumulation_steps = 4;
    small.optimizer.kind = large.optimizer.kind = kind;
    small.lr = large.lr = 0.05;
    std::vector<Model> traj_small, traj_large;
    auto rs = train_supervised(spec, d, small, {[&](long, const Model& m) { traj_small.push_back(m); }});
    auto rl = train_supervised(spec, d, large, {[&](long, const Model& m) { traj_large.push_back(m); }});
    ASSERT_EQ(traj_small.size(), 3u);
    for (std::size_t e = 0; e < 3; ++e)
      for (std::size_t p = 0; p < rs.model.parameters().size(); ++p) {
        const auto& a = traj_small[e].parameters()[p].value;
        const auto& b = traj_large[e].parameters()[p].value;
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-6);
      }
    // 16 micro-batches per epoch -> 4 steps per epoch
    EXPECT_EQ(rs.optimizer.steps[0], 12);
    EXPECT_EQ(rl.optimizer.steps[0], 12);
  }
}

TEST(Accumulation, SingleStepIsPlainStepping) {
  Dataset d = synthetic_blobs(32, 2, 1, 12, 12, 2);
  DistillConfig a = quick(1, 8), b = quick(1, 8);
  b.accumulation_steps = 1;
  auto ra = train_supervised(student_cnn(kSmall, 2, 2), d, a);
  auto rb = train_supervised(student_cnn(kSmall, 2, 2), d, b);
  EXPECT_TRUE(same_parameters(ra.model, rb.model));
  EXPECT_EQ(ra.optimizer.steps[0], 4);
}

TEST(Auxiliary, WidthsAndFailFast) {
  Dataset d = synthetic_blobs(32, 4, 1, 12, 12, 5);
  Model teacher = build_model(scaled_cnn(student_cnn(kSmall, 4, 3), 4, ModelRole::kTeacher), 1);
  auto r = build_and_distill_auxiliary(teacher, student_cnn(kSmall, 4, 3), 0.5, d, quick(1));
  std::vector<std::size_t> widths;
  for (std::size_t l = 1; l <= 4; ++l) widths.push_back(r.model.spec().layers[l - 1].width);
  EXPECT_EQ(widths, (std::vector<std::size_t>{16, 32, 64, 128}));
  EXPECT_EQ(r.metrics.records[0].loss_kind, "ce+kl");

  int epochs_run = 0;
  ModelSpec odd = tiny_cnn(std::vector<std::size_t>{9, 18}, 18, kSmall, 4, ModelRole::kStudent);
  EXPECT_THROW(build_and_distill_auxiliary(teacher, odd, 1.0 / 3.0, d, quick(3),
                                           {[&](long, const Model&) { ++epochs_run; }}),
               ConfigError);
  EXPECT_EQ(epochs_run, 0);
}

TEST(Auxiliary, ApproachesTeacher) {
  Dataset d = synthetic_blobs(120, 3, 1, 12, 12, 8);
  const ModelSpec spec = student_cnn(kSmall, 3, 2);
  Model teacher = train_supervised(spec, d, quick(8)).model;
  DistillConfig c = quick(12);
  c.temperature = 1.0;
  auto aux = build_and_distill_auxiliary(teacher, spec, 0.0, d, c);
  EXPECT_GE(accuracy(aux.model, d), accuracy(teacher, d) - 0.05);
}

TEST(Distill, CurriculumLossSequence) {
  Fixture f;
  Dataset tiny = take(f.data, 16);
  DistillConfig c = quick(70, 16);
  auto r = distill_student(f.aux, f.student, tiny, c);
  std::vector<std::string> expect;
  expect.insert(expect.end(), 3, "mse1");
  expect.insert(expect.end(), 4, "mse2");
  expect.insert(expect.end(), 5, "mse3");
  expect.insert(expect.end(), 58, "task");
  EXPECT_EQ(r.metrics.loss_kinds(), expect);
  EXPECT_EQ(r.metrics.records[7].subtask, 3u);
  EXPECT_NE(r.metrics.to_csv().find("epoch,subtask,loss_kind,loss,lr,metric_name,metric_value\n1,1,mse1,"),
            std::string::npos);
}

TEST(Distill, PktBaselineIsSingleTask) {
  Fixture f;
  DistillConfig c = quick(3);
  c.method = Method::kPkt;
  c.scheduler = SchedulerMode::kNone;
  auto r = distill_student(f.aux, f.student, f.data, c);
  EXPECT_EQ(r.metrics.loss_kinds(), (std::vector<std::string>(3, "task")));
  for (const auto& rec : r.metrics.records) EXPECT_GE(rec.loss, 0.0);
}

// With empty curriculum windows every epoch is the final sub-task, which must
// be the task loss alone, so the run matches the plain PKT baseline exactly.
TEST(Distill, CurriculumTaskPhaseCarriesNoHints) {
  Fixture f;
  DistillConfig c = quick(3);
  c.a = 0;
  c.b = 0;
  auto cur = distill_student(f.aux, f.student, f.data, c);
  c.method = Method::kPkt;
  auto pkt = distill_student(f.aux, f.student, f.data, c);
  ASSERT_EQ(cur.metrics.loss_kinds(), (std::vector<std::string>(3, "task")));
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_EQ(cur.metrics.records[i].loss, pkt.metrics.records[i].loss);
  EXPECT_TRUE(same_parameters(cur.model, pkt.model));
}

// Each sub-task starts from fresh optimizer moments, so after the run every
// parameter has only the task phase's steps on record.
TEST(Distill, CurriculumRestartsOptimizerPerSubtask) {
  Fixture f;
  DistillConfig c = quick(6);
  c.a = 1;
  c.b = 0;
  const auto sched = build_schedule(c.a, c.b, c.epochs, f.student.feature_layers());
  const long task_epochs = sched.epochs.back();
  ASSERT_LT(task_epochs, c.epochs);
  auto r = distill_student(f.aux, f.student, f.data, c);
  for (long s : r.optimizer.steps) EXPECT_EQ(s, task_epochs * 4);

  c.method = Method::kPkt;
  auto pkt = distill_student(f.aux, f.student, f.data, c);
  for (long s : pkt.optimizer.steps) EXPECT_EQ(s, c.epochs * 4);
}

TEST(Distill, SchedulerVariantsAndMethods) {
  Fixture f;
  DistillConfig c = quick(2);
  c.scheduler = SchedulerMode::kNone;
  EXPECT_EQ(distill_student(f.aux, f.student, f.data, c).metrics.loss_kinds()[0], "mse-all+task");
  c.scheduler = SchedulerMode::kWeightDecay;
  EXPECT_EQ(distill_student(f.aux, f.student, f.data, c).metrics.loss_kinds()[1], "mse-decay+task");
  c.method = Method::kMseHint;
  c.scheduler = SchedulerMode::kCurriculum;
  c.epochs = 13;
  EXPECT_EQ(distill_student(f.aux, f.student, f.data, c).metrics.loss_kinds()[0], "mse1");
  c.method = Method::kOkd;
  EXPECT_EQ(distill_student(f.aux, f.student, f.data, c).metrics.loss_kinds()[0], "task");
  c.method = Method::kNone;
  EXPECT_EQ(distill_student(f.aux, f.student, f.data, c).metrics.loss_kinds()[0], "ce");
  c.method = Method::kInDistill;
  c.task_loss = TaskLoss::kOkd;
  c.mode = TaskMode::kClassification;
  EXPECT_NO_THROW(distill_student(f.aux, f.student, f.data, c));
}

TEST(Distill, FrozenSourceUntouched) {
  Fixture f;
  const Model before = f.aux;
  distill_student(f.aux, f.student, f.data, quick(13));
  EXPECT_TRUE(same_parameters(before, f.aux));
}

TEST(Distill, LayerFreezingDuringPhases) {
  Fixture f;
  DistillConfig c = quick(13);
  const auto schedule = build_schedule(c.a, c.b, c.epochs, 4);
  std::vector<Model> snapshots;
  Model init = build_model(f.student, init_seed(c.seed));
  distill_student(f.aux, f.student, f.data, c, {[&](long, const Model& m) { snapshots.push_back(m); }});
  for (long e = 1; e <= c.epochs; ++e) {
    const std::size_t i = active_subtask(schedule, e);
    if (i == 4) break;
    const Model& prev = e == 1 ? init : snapshots[static_cast<std::size_t>(e - 2)];
    const Model& now = snapshots[static_cast<std::size_t>(e - 1)];
    const std::size_t first_frozen = now.parameters_through(i);
    for (std::size_t p = 0; p < now.parameters().size(); ++p) {
      const bool same = now.parameters()[p].value == prev.parameters()[p].value;
      if (p >= first_frozen) {
        EXPECT_TRUE(same) << "epoch " << e << " param " << now.parameters()[p].name;
      } else if (p == now.layer(i).weight) {
        EXPECT_FALSE(same) << "epoch " << e << " layer " << i << " did not train";
      }
    }
    for (std::size_t l = i + 1; l <= 3; ++l) {
      const auto st = now.layer(l).stats;
      EXPECT_EQ(now.running_stats()[st].mean, prev.running_stats()[st].mean);
    }
  }
}

TEST(Distill, Deterministic) {
  Fixture f;
  auto a = distill_student(f.aux, f.student, f.data, quick(13));
  auto b = distill_student(f.aux, f.student, f.data, quick(13));
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_TRUE(same_parameters(a.model, b.model));
}

TEST(Distill, ConfigurationErrors) {
  Fixture f;
  DistillConfig c = quick(5);
  EXPECT_THROW(distill_student(f.aux, f.student, f.data, c), InfeasibleScheduleError);
  c.epochs = 20;
  c.q = 0.75;
  EXPECT_THROW(distill_student(f.aux, f.student, f.data, c), AlignmentError);
  c.q = 0.5;
  Model shallow = build_model(student_cnn(kSmall, 4, 2), 1);
  EXPECT_THROW(distill_student(shallow, f.student, f.data, c), AlignmentError);
  EXPECT_THROW(parse_task_loss("crd"), ConfigError);
  EXPECT_THROW(parse_method("fitnets"), ConfigError);
}

// Without batchnorm, a student whose filters are exactly the kept channels of
// the source reproduces the pruned maps, so the hint losses start (and stay) at 0.
TEST(Distill, ChannelSubsetStudentStartsAtZero) {
  auto strip = [](ModelSpec s) {
    for (auto& l : s.layers) l.batchnorm = false;
    return s;
  };
  Dataset d = synthetic_blobs(32, 4, 1, 12, 12, 6);
  const ModelSpec student_spec = strip(student_cnn(kSmall, 4, 3));
  Model source = build_model(make_auxiliary(student_spec, 0.5), 4);
  DistillConfig c = quick(13);

  // zero the source weights reading from channels the previous layer drops;
  // layer by layer, since zeroing changes that layer's own scores
  auto sels = alignment_for(source, student_spec, c);
  for (std::size_t l = 2; l <= 3; ++l) {
    sels = alignment_for(source, student_spec, c);
    auto& w = source.parameters()[source.layer(l).weight].value;
    const std::size_t ci = w.dim(0), co = w.dim(1), kk = w.dim(2) * w.dim(3);
    const auto& kept_in = sels[l - 2].kept;
    for (std::size_t j = 0; j < ci; ++j) {
      if (std::find(kept_in.begin(), kept_in.end(), j) != kept_in.end()) continue;
      for (std::size_t q = 0; q < co * kk; ++q) w[j * co * kk + q] = 0.0f;
    }
  }
  sels = alignment_for(source, student_spec, c);

  Model student = build_model(student_spec, 9);
  for (std::size_t l = 1; l <= 3; ++l) {
    const auto& sw = source.parameters()[source.layer(l).weight].value;
    const auto& sb = source.parameters()[source.layer(l).bias].value;
    auto& tw = student.parameters()[student.layer(l).weight].value;
    auto& tb = student.parameters()[student.layer(l).bias].value;
    const std::size_t ci = tw.dim(0), co = tw.dim(1), kk = tw.dim(2) * tw.dim(3);
    const std::size_t src_co = sw.dim(1);
    for (std::size_t j = 0; j < ci; ++j) {
      const std::size_t sj = l == 1 ? j : sels[l - 2].kept[j];
      for (std::size_t o = 0; o < co; ++o) {
        const std::size_t so = sels[l - 1].kept[o];
        for (std::size_t q = 0; q < kk; ++q) tw[(j * co + o) * kk + q] = sw[(sj * src_co + so) * kk + q];
      }
    }
    for (std::size_t o = 0; o < co; ++o) tb[o] = sb[sels[l - 1].kept[o]];
  }
  auto r = distill_student(source, student, d, c);
  for (const auto& rec : r.metrics.records) {
    if (rec.loss_kind == "task") break;
    EXPECT_LT(rec.loss, 1e-8) << rec.loss_kind << " epoch " << rec.epoch;
  }
}

TEST(Config, CanonicalHashStable) {
  DistillConfig a, b;
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 1;
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_NE(a.canonical().find("method=indistill\n"), std::string::npos);
}

}  // namespace
}  // namespace indistill
