#include "indistill_cli/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "indistill/checkpoint.hpp"
#include "indistill/curriculum.hpp"
#include "indistill/error.hpp"
#include "indistill/metrics.hpp"
#include "indistill/prune.hpp"
#include "indistill_cli/experiment.hpp"

#ifndef INDISTILL_VERSION
#define INDISTILL_VERSION "0.0.0"
#endif
#ifndef INDISTILL_GIT
#define INDISTILL_GIT "unknown"
#endif

namespace indistill::cli {

namespace fs = std::filesystem;

std::string version_string() { return std::string(INDISTILL_VERSION) + "+" + INDISTILL_GIT; }

namespace {

// ---- ledger ------------------------------------------------------------

constexpr const char* kLedgerHeader =
    "command,config_hash,seed,version,dataset,method,scheduler,task_loss,a,b,q,epochs,status,"
    "map,precision_at_k,k,accuracy,mi_divergence,parameters,latency_ms,checkpoint,note";

struct LedgerRow {
  std::string command;
  const ExperimentConfig* cfg = nullptr;
  std::string status = "ok";
  std::optional<EvalReport> report;
  std::string checkpoint;
  std::string note;
};

std::string csv_field(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n') ch = ';';
  return s;
}

void append_ledger(const fs::path& path, const LedgerRow& row) {
  const ExperimentConfig& c = *row.cfg;
  const DistillConfig& d = c.distill;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  if (!f) throw DataError("cannot append to ledger " + path.string());
  if (fresh) f << kLedgerHeader << "\n";
  f << std::setprecision(8);
  f << row.command << ',' << c.hash() << ',' << d.seed << ',' << version_string() << ',' << c.dataset << ','
    << to_string(d.method) << ',' << to_string(d.scheduler) << ',' << to_string(d.task_loss) << ',' << d.a
    << ',' << d.b << ',' << d.q << ',' << d.epochs << ',' << row.status << ',';
  if (row.report) {
    const EvalReport& r = *row.report;
    f << r.map << ',' << r.precision_at_k << ',' << r.k << ',' << r.accuracy << ',';
    if (r.mi_divergence) f << *r.mi_divergence;
    f << ',' << r.parameters << ',' << r.latency_ms << ',';
  } else {
    f << ",,,,,,,";
  }
  f << csv_field(row.checkpoint) << ',' << csv_field(row.note) << "\n";
}

// ---- checkpoints -----------------------------------------------------------

std::string join(const std::vector<float>& v) {
  std::ostringstream s;
  s << std::setprecision(9);
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? " " : "") << v[i];
  return s.str();
}

std::map<std::string, std::string> run_metadata(const ExperimentConfig& cfg, const Dataset& train,
                                                const std::string& role) {
  return {
      {"role", role},
      {"dataset", cfg.dataset},
      {"train_subset", std::to_string(cfg.train_subset)},
      {"test_subset", std::to_string(cfg.test_subset)},
      {"synthetic", std::to_string(cfg.synthetic_train) + "/" + std::to_string(cfg.synthetic_test) + "/" +
                        std::to_string(cfg.synthetic_classes)},
      {"norm_mean", join(train.norm.mean)},
      {"norm_std", join(train.norm.stddev)},
      {"augmentation", cfg.distill.horizontal_flip ? "horizontal-flip" : "none"},
      {"method", to_string(cfg.distill.method)},
      {"scheduler", to_string(cfg.distill.scheduler)},
      {"version", version_string()},
  };
}

void save(const fs::path& path, const TrainResult& r, const ExperimentConfig& cfg, const DistillConfig& run,
          const Dataset& train, const std::string& role) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  Checkpoint c;
  c.model = r.model;
  c.optimizer = r.optimizer;
  c.optimizer_kind = to_string(run.optimizer.kind);
  c.epoch = run.epochs;
  c.seed = run.seed;
  c.config_hash = cfg.hash();
  c.metadata = run_metadata(cfg, train, role);
  save_checkpoint(path, c);
  fs::path csv = path;
  csv.replace_extension(".metrics.csv");
  r.metrics.write_csv(csv);
}

Model load_matching(const fs::path& path, const ModelSpec& expected, const std::string& what) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.model.spec() == expected)) {
    throw ConfigError(what + " checkpoint " + path.string() + " does not match the configured architecture");
  }
  return std::move(c.model);
}

// Experiment settings recovered from a checkpoint's metadata, for evaluate
// without a config file.
ExperimentConfig config_from_metadata(const Checkpoint& c) {
  ExperimentConfig cfg;
  auto get = [&](const char* key) -> std::string {
    auto it = c.metadata.find(key);
    return it == c.metadata.end() ? "" : it->second;
  };
  if (!get("dataset").empty()) cfg.dataset = get("dataset");
  if (!get("train_subset").empty()) cfg.train_subset = std::stoul(get("train_subset"));
  if (!get("test_subset").empty()) cfg.test_subset = std::stoul(get("test_subset"));
  const std::string syn = get("synthetic");
  if (!syn.empty()) {
    char sep;
    std::istringstream s(syn);
    s >> cfg.synthetic_train >> sep >> cfg.synthetic_test >> sep >> cfg.synthetic_classes;
  }
  return cfg;
}

// ---- pipeline pieces -------------------------------------------------------

TrainHooks progress(std::ostream& err, const std::string& tag, long epochs) {
  TrainHooks h;
  h.on_epoch_end = [&err, tag, epochs](long epoch, const Model&) {
    err << "[" << tag << "] epoch " << epoch << "/" << epochs << "\n" << std::flush;
  };
  return h;
}

void print_last(std::ostream& out, const std::string& tag, const RunMetrics& m) {
  if (m.records.empty()) return;
  const EpochRecord& r = m.records.back();
  out << tag << ": epoch=" << r.epoch << " loss_kind=" << r.loss_kind << " loss=" << r.loss;
  if (!r.metric_name.empty()) out << " " << r.metric_name << "=" << r.metric_value;
  out << "\n";
}

struct Sources {
  std::optional<Model> teacher;
  std::optional<Model> aux;
};

struct Paths {
  std::string teacher;
  std::string aux;
};

Model obtain_teacher(const ExperimentConfig& cfg, const DatasetPair& data, const std::string& path,
                     std::ostream& out, std::ostream& err) {
  const ModelSpec spec = teacher_spec(cfg);
  if (!path.empty()) return load_matching(path, spec, "teacher");
  DistillConfig tc = cfg.teacher_config();
  TrainResult r = train_supervised(spec, data.train, tc, progress(err, "teacher", tc.epochs));
  print_last(out, "teacher", r.metrics);
  save(cfg.output_dir / ("teacher-s" + std::to_string(tc.seed) + ".ckpt"), r, cfg, tc, data.train, "teacher");
  return std::move(r.model);
}

Model obtain_aux(const ExperimentConfig& cfg, const Model& teacher, const DatasetPair& data,
                 const std::string& path, std::ostream& out, std::ostream& err) {
  const ModelSpec student = student_spec(cfg);
  if (!path.empty()) return load_matching(path, make_auxiliary(student, cfg.distill.q), "auxiliary");
  DistillConfig ac = cfg.aux_config();
  TrainResult r =
      build_and_distill_auxiliary(teacher, student, ac.q, data.train, ac, progress(err, "auxiliary", ac.epochs));
  print_last(out, "auxiliary", r.metrics);
  save(cfg.output_dir / ("aux-s" + std::to_string(ac.seed) + ".ckpt"), r, cfg, ac, data.train, "auxiliary");
  return std::move(r.model);
}

bool needs_teacher(const ExperimentConfig& cfg) { return cfg.distill.method != Method::kNone; }

// Teacher and auxiliary are shared by every student seed and grid point.
Sources prepare_sources(const ExperimentConfig& cfg, const DatasetPair& data, const Paths& paths,
                        std::ostream& out, std::ostream& err) {
  Sources s;
  if (!needs_teacher(cfg)) return s;
  if (cfg.use_auxiliary && !paths.aux.empty()) {
    s.aux = load_matching(paths.aux, make_auxiliary(student_spec(cfg), cfg.distill.q), "auxiliary");
    if (!paths.teacher.empty()) s.teacher = load_matching(paths.teacher, teacher_spec(cfg), "teacher");
    return s;
  }
  s.teacher = obtain_teacher(cfg, data, paths.teacher, out, err);
  if (cfg.use_auxiliary) s.aux = obtain_aux(cfg, *s.teacher, data, "", out, err);
  return s;
}

std::string student_name(const ExperimentConfig& cfg, const std::string& prefix) {
  const DistillConfig& d = cfg.distill;
  return prefix + to_string(d.method) + "-" + to_string(d.scheduler) + "-a" + std::to_string(d.a) + "-b" +
         std::to_string(d.b) + "-s" + std::to_string(d.seed) + ".ckpt";
}

// One student run: distill, save, evaluate, append to the ledger.
void distill_one(const std::string& command, const ExperimentConfig& cfg, const DatasetPair& data,
                 Sources& sources, const fs::path& out_path, std::ostream& out, std::ostream& err) {
  const DistillConfig& d = cfg.distill;
  const ModelSpec spec = student_spec(cfg);
  const std::string tag = "student s" + std::to_string(d.seed);
  TrainResult r;
  Model* source = nullptr;
  if (d.method == Method::kNone) {
    r = train_supervised(spec, data.train, d, progress(err, tag, d.epochs));
  } else {
    source = sources.aux ? &*sources.aux : &*sources.teacher;
    r = distill_student(*source, spec, data.train, d, progress(err, tag, d.epochs));
  }
  print_last(out, tag, r.metrics);
  save(out_path, r, cfg, d, data.train, "student");

  EvalReport report = evaluate_all(r.model, source, data.test, cfg.k);
  out << report.to_key_value();
  append_ledger(cfg.output_dir / "ledger.csv", {command, &cfg, "ok", report, out_path.string(), ""});
}

// ---- grid parsing ----------------------------------------------------------

// "a=1,2,b=0,1" -> {a: [1, 2], b: [0, 1]}
std::map<std::string, std::vector<long>> parse_grid(const std::string& text) {
  std::map<std::string, std::vector<long>> grid;
  std::string key;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto eq = tok.find('=');
    std::string value = tok;
    if (eq != std::string::npos) {
      key = tok.substr(0, eq);
      value = tok.substr(eq + 1);
      if (key != "a" && key != "b") throw ConfigError("grid key '" + key + "' is not a or b");
      if (grid.count(key)) throw ConfigError("grid key '" + key + "' given twice");
      grid[key];
    }
    if (key.empty()) throw ConfigError("grid must start with a= or b=");
    try {
      std::size_t used = 0;
      const long v = std::stol(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      grid[key].push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("grid value '" + value + "' is not an integer");
    }
  }
  if (grid.empty()) throw ConfigError("empty grid");
  return grid;
}

// ---- commands --------------------------------------------------------------

struct Options {
  std::string config;
  std::string checkpoint;
  std::string method;
  std::string scheduler;
  std::optional<std::uint64_t> seed;
  std::string teacher;
  std::string aux;
  std::string out;
  std::string dataset;
  std::string data_root;
  std::string append;
  std::string grid;
  std::size_t k = 100;
  bool k_given = false;
  long a = 2, b = 1, epochs = 70;
  std::size_t layers = 4;
  double rate = 0.5;
};

ExperimentConfig configured(const Options& o) {
  ExperimentConfig cfg = load_experiment(o.config, false);
  if (!o.method.empty()) cfg.distill.method = parse_method(o.method);
  if (!o.scheduler.empty()) cfg.distill.scheduler = parse_scheduler_mode(o.scheduler);
  if (o.seed) {
    cfg.distill.seed = *o.seed;
    cfg.seeds = {*o.seed};
  }
  if (o.k_given) cfg.k = o.k;
  validate_experiment(cfg);
  return cfg;
}

int cmd_train_teacher(const Options& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = configured(o);
  const DatasetPair data = load_data(cfg);
  DistillConfig tc = cfg.teacher_config();
  TrainResult r = train_supervised(teacher_spec(cfg), data.train, tc, progress(err, "teacher", tc.epochs));
  const fs::path path = o.out.empty() ? cfg.output_dir / ("teacher-s" + std::to_string(tc.seed) + ".ckpt")
                                      : fs::path(o.out);
  save(path, r, cfg, tc, data.train, "teacher");
  print_last(out, "teacher", r.metrics);
  out << "test_accuracy=" << accuracy(r.model, data.test) << "\ncheckpoint=" << path.string() << "\n";
  return kOk;
}

int cmd_distill_aux(const Options& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = configured(o);
  if (o.teacher.empty()) throw ConfigError("distill-aux needs --teacher");
  const DatasetPair data = load_data(cfg);
  Model teacher = load_matching(o.teacher, teacher_spec(cfg), "teacher");
  DistillConfig ac = cfg.aux_config();
  TrainResult r = build_and_distill_auxiliary(teacher, student_spec(cfg), ac.q, data.train, ac,
                                              progress(err, "auxiliary", ac.epochs));
  const fs::path path =
      o.out.empty() ? cfg.output_dir / ("aux-s" + std::to_string(ac.seed) + ".ckpt") : fs::path(o.out);
  save(path, r, cfg, ac, data.train, "auxiliary");
  print_last(out, "auxiliary", r.metrics);
  out << "test_accuracy=" << accuracy(r.model, data.test) << "\ncheckpoint=" << path.string() << "\n";
  return kOk;
}

int cmd_distill(const Options& o, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = configured(o);
  if (!o.out.empty() && cfg.seeds.size() > 1) throw ConfigError("--out needs a single seed (use --seed)");
  const DatasetPair data = load_data(cfg);
  Sources sources = prepare_sources(cfg, data, {o.teacher, o.aux}, out, err);
  for (std::uint64_t seed : cfg.seeds) {
    ExperimentConfig run = cfg;
    run.distill.seed = seed;
    const fs::path path = o.out.empty() ? cfg.output_dir / student_name(run, "student-") : fs::path(o.out);
    distill_one("distill", run, data, sources, path, out, err);
  }
  return kOk;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = configured(o);
  auto grid = parse_grid(o.grid);
  const std::vector<long> as = grid.count("a") ? grid["a"] : std::vector<long>{cfg.distill.a};
  const std::vector<long> bs = grid.count("b") ? grid["b"] : std::vector<long>{cfg.distill.b};
  const std::size_t layers = student_spec(cfg).feature_layers();
  const fs::path ledger = cfg.output_dir / "ledger.csv";

  // feasibility is checked for every point before any training
  std::vector<std::pair<long, long>> feasible;
  for (long a : as) {
    for (long b : bs) {
      if (a < 0 || b < 0) throw ConfigError("grid values must be non-negative");
      const long need = minimum_epochs(a, b, layers);
      if (need > cfg.distill.epochs) {
        ExperimentConfig row = cfg;
        row.distill.a = a;
        row.distill.b = b;
        err << "warning: skipping a=" << a << " b=" << b << ": needs at least " << need << " epochs\n";
        append_ledger(ledger, {"sweep", &row, "skipped", std::nullopt, "",
                               "infeasible: needs at least " + std::to_string(need) + " epochs"});
        continue;
      }
      feasible.emplace_back(a, b);
    }
  }
  if (feasible.empty()) return kOk;

  const DatasetPair data = load_data(cfg);
  Sources sources = prepare_sources(cfg, data, {o.teacher, o.aux}, out, err);
  for (auto [a, b] : feasible) {
    for (std::uint64_t seed : cfg.seeds) {
      ExperimentConfig run = cfg;
      run.distill.a = a;
      run.distill.b = b;
      run.distill.seed = seed;
      out << "# a=" << a << " b=" << b << " seed=" << seed << "\n";
      distill_one("sweep", run, data, sources, cfg.output_dir / student_name(run, "sweep-"), out, err);
    }
  }
  return kOk;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream&) {
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  ExperimentConfig cfg = o.config.empty() ? config_from_metadata(ckpt) : load_experiment(o.config);
  if (!o.dataset.empty()) cfg.dataset = o.dataset;
  if (!o.data_root.empty()) cfg.data_root = o.data_root;
  if (o.k_given || o.config.empty()) cfg.k = o.k;
  if (cfg.k == 0) throw ConfigError("--k must be >= 1");
  input_shape_for(cfg.dataset);
  std::optional<Model> teacher;
  if (!o.teacher.empty()) teacher = load_checkpoint(o.teacher).model;
  const DatasetPair data = load_data(cfg);

  EvalReport report = evaluate_all(ckpt.model, teacher ? &*teacher : nullptr, data.test, cfg.k);
  out << "checkpoint=" << o.checkpoint << "\n" << report.to_key_value();
  fs::path csv = o.append.empty() ? fs::path(o.checkpoint).parent_path() / "evaluations.csv" : fs::path(o.append);
  const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
  std::ofstream f(csv, std::ios::app);
  if (!f) throw DataError("cannot append to " + csv.string());
  if (fresh) f << "checkpoint,config_hash,seed,version," << EvalReport::csv_header() << "\n";
  f << csv_field(o.checkpoint) << ',' << ckpt.config_hash << ',' << ckpt.seed << ',' << version_string() << ','
    << report.csv_row() << "\n";
  return kOk;
}

int cmd_schedule(const Options& o, std::ostream& out) {
  const CurriculumSchedule s = build_schedule(o.a, o.b, o.epochs, o.layers);
  out << "subtask,epochs,first_epoch,last_epoch,loss_kind\n";
  for (std::size_t i = 1; i <= s.subtasks(); ++i) {
    const auto [first, last] = s.epoch_range(i);
    out << i << ',' << s.epochs[i - 1] << ',' << first << ',' << last << ','
        << loss_for_subtask(i, s.subtasks(), false).label() << "\n";
  }
  return kOk;
}

int cmd_prune_report(const Options& o, std::ostream& out) {
  const Checkpoint c = load_checkpoint(o.checkpoint);
  const std::vector<ChannelSelection> sel = prune_model(c.model, o.rate);
  out << "layer,channel,score,kept\n" << std::setprecision(9);
  for (const ChannelSelection& s : sel) {
    std::vector<bool> kept(s.original_channels(), false);
    for (std::size_t k : s.kept) kept[k] = true;
    for (std::size_t ch = 0; ch < s.original_channels(); ++ch) {
      out << s.layer_index << ',' << ch << ',' << s.scores[ch] << ',' << (kept[ch] ? 1 : 0) << "\n";
    }
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Curriculum channel-pruned knowledge distillation", "indistill"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("config", o.config, "experiment config (INI)")->required()->check(CLI::ExistingFile);
    c->add_option("--seed", o.seed, "override the seed");
    c->add_option("--out", o.out, "checkpoint path");
  };
  auto* teacher = app.add_subcommand("train-teacher", "train the teacher with cross-entropy");
  common(teacher);
  auto* aux = app.add_subcommand("distill-aux", "distill the auxiliary from a teacher checkpoint");
  common(aux);
  aux->add_option("--teacher", o.teacher, "teacher checkpoint")->required();

  auto* distill = app.add_subcommand("distill", "teacher -> auxiliary -> student, then evaluate");
  common(distill);
  for (auto* c : {distill}) {
    c->add_option("--method", o.method, "indistill | okd | pkt | mse-hint | none");
    c->add_option("--scheduler", o.scheduler, "curriculum | weight-decay | none");
    c->add_option("--teacher", o.teacher, "reuse a teacher checkpoint");
    c->add_option("--aux", o.aux, "reuse an auxiliary checkpoint");
  }

  auto* evaluate = app.add_subcommand("evaluate", "retrieval / accuracy / L_MI report for a checkpoint");
  evaluate->add_option("checkpoint", o.checkpoint)->required();
  evaluate->add_option("--config", o.config, "experiment config; defaults come from checkpoint metadata");
  evaluate->add_option("--dataset", o.dataset);
  evaluate->add_option("--data-root", o.data_root);
  evaluate->add_option("--k", o.k, "precision cut-off")->default_val(100)->each([&](const std::string&) {
    o.k_given = true;
  });
  evaluate->add_option("--teacher", o.teacher, "teacher checkpoint for L_MI");
  evaluate->add_option("--append", o.append, "CSV to append the report to");

  auto* schedule = app.add_subcommand("schedule", "print the curriculum table as CSV");
  schedule->add_option("--a", o.a)->default_val(2);
  schedule->add_option("--b", o.b)->default_val(1);
  schedule->add_option("--epochs", o.epochs)->default_val(70);
  schedule->add_option("--layers", o.layers)->default_val(4);

  auto* prune = app.add_subcommand("prune-report", "per-channel L1 scores of a checkpoint as CSV");
  prune->add_option("checkpoint", o.checkpoint)->required();
  prune->add_option("--rate", o.rate, "pruning rate q")->default_val(0.5);

  auto* sweep = app.add_subcommand("sweep", "distill once per (a, b) grid point");
  common(sweep);
  sweep->add_option("--grid", o.grid, "e.g. a=1,2,3,b=0,1")->required();
  sweep->add_option("--teacher", o.teacher, "reuse a teacher checkpoint");
  sweep->add_option("--aux", o.aux, "reuse an auxiliary checkpoint");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kConfigFailure;
  }

  try {
    if (teacher->parsed()) return cmd_train_teacher(o, out, err);
    if (aux->parsed()) return cmd_distill_aux(o, out, err);
    if (distill->parsed()) return cmd_distill(o, out, err);
    if (sweep->parsed()) return cmd_sweep(o, out, err);
    if (evaluate->parsed()) return cmd_evaluate(o, out, err);
    if (schedule->parsed()) return cmd_schedule(o, out);
    if (prune->parsed()) return cmd_prune_report(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace indistill::cli
