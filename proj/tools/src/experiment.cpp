#include "indistill_cli/experiment.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace indistill::cli {

namespace {

namespace pt = boost::property_tree;

// Reads typed values out of the tree and remembers which keys were consumed,
// so unknown keys can be reported.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::string str(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    return v ? trim(*v) : fallback;
  }

  long integer(const std::string& key, long fallback) {
    const std::string s = str(key, "");
    if (s.empty()) return fallback;
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad(key, s, "an integer");
    return v;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const long v = integer(key, static_cast<long>(fallback));
    if (v < 0) bad(key, std::to_string(v), "a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  double real(const std::string& key, double fallback) {
    const std::string s = str(key, "");
    if (s.empty()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) bad(key, s, "a number");
      return v;
    } catch (const std::logic_error&) {
      bad(key, s, "a number");
    }
    return fallback;
  }

  bool flag(const std::string& key, bool fallback) {
    const std::string s = str(key, "");
    if (s.empty()) return fallback;
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    bad(key, s, "true or false");
    return fallback;
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) {
        if (!used_.count(section)) throw ConfigError("unknown config key '" + section + "'");
        continue;
      }
      for (const auto& [key, value] : body) {
        const std::string full = section + "." + key;
        if (!used_.count(full)) throw ConfigError("unknown config key '" + full + "'");
      }
    }
  }

  [[noreturn]] static void bad(const std::string& key, const std::string& value, const char* want) {
    throw ConfigError("config key '" + key + "' = '" + value + "' is not " + want);
  }

 private:
  static std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }

  const pt::ptree& tree_;
  std::set<std::string> used_;
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    if (b == std::string::npos) continue;
    item = item.substr(b, item.find_last_not_of(' ') - b + 1);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) Reader::bad("run.seeds", text, "a list of integers");
    seeds.push_back(v);
  }
  if (seeds.empty()) Reader::bad("run.seeds", text, "a non-empty list of integers");
  return seeds;
}

}  // namespace

ExperimentConfig parse_experiment(const std::string& text, bool validate) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  Reader r(tree);
  ExperimentConfig c;
  DistillConfig& d = c.distill;

  d.seed = static_cast<std::uint64_t>(r.count("seed", 0));
  c.output_dir = r.str("output_dir", c.output_dir.string());

  c.dataset = r.str("data.dataset", c.dataset);
  c.data_root = r.str("data.data_root", "");
  c.train_subset = r.count("data.train_subset", 0);
  c.test_subset = r.count("data.test_subset", 0);
  c.synthetic_train = r.count("data.synthetic_train", c.synthetic_train);
  c.synthetic_test = r.count("data.synthetic_test", c.synthetic_test);
  c.synthetic_classes = r.count("data.synthetic_classes", c.synthetic_classes);

  c.student = r.str("model.student", c.student);
  c.depth = r.count("model.depth", c.depth);
  c.teacher = r.str("model.teacher", c.teacher);

  d.epochs = r.integer("train.epochs", d.epochs);
  d.final_lr_epochs = r.integer("train.final_lr_epochs", d.final_lr_epochs);
  d.lr = r.real("train.lr", d.lr);
  d.final_lr = r.real("train.final_lr", d.final_lr);
  d.batch_size = r.count("train.batch_size", d.batch_size);
  d.accumulation_steps = r.count("train.accumulation_steps", d.accumulation_steps);
  d.optimizer.kind = parse_optimizer(r.str("train.optimizer", to_string(d.optimizer.kind)));
  d.optimizer.momentum = r.real("train.momentum", d.optimizer.momentum);
  d.optimizer.weight_decay = r.real("train.weight_decay", d.optimizer.weight_decay);
  d.horizontal_flip = r.flag("train.horizontal_flip", d.horizontal_flip);

  d.method = parse_method(r.str("distill.method", to_string(d.method)));
  d.scheduler = parse_scheduler_mode(r.str("distill.scheduler", to_string(d.scheduler)));
  d.task_loss = parse_task_loss(r.str("distill.task_loss", to_string(d.task_loss)));
  d.mode = parse_task_mode(r.str("distill.mode", to_string(d.mode)));
  d.a = r.integer("distill.a", d.a);
  d.b = r.integer("distill.b", d.b);
  d.q = r.real("distill.q", d.q);
  d.temperature = r.real("distill.kd_temperature", d.temperature);
  d.decay_factor = r.real("distill.decay_factor", d.decay_factor);
  c.use_auxiliary = r.flag("distill.use_auxiliary", c.use_auxiliary);

  c.teacher_epochs = r.integer("teacher.epochs", -1);
  c.aux_epochs = r.integer("auxiliary.epochs", -1);
  c.k = r.count("eval.k", c.k);
  const std::string seeds = r.str("run.seeds", "");
  c.seeds = seeds.empty() ? std::vector<std::uint64_t>{d.seed} : parse_seeds(seeds);
  r.reject_unknown();
  if (validate) validate_experiment(c);
  return c;
}

void validate_experiment(const ExperimentConfig& c) {
  const DistillConfig& d = c.distill;
  d.validate();
  if (c.seeds.empty()) throw ConfigError("run.seeds must name at least one seed");
  if (c.k == 0) throw ConfigError("eval.k must be >= 1");
  if (c.dataset == "synthetic" && (c.synthetic_train < 2 || c.synthetic_test < 2 || c.synthetic_classes < 2)) {
    throw ConfigError("synthetic data needs at least 2 train/test samples and 2 classes");
  }
  input_shape_for(c.dataset);
  const ModelSpec s = student_spec(c);
  const ModelSpec t = teacher_spec(c);
  if (c.use_auxiliary || d.method == Method::kInDistill) make_auxiliary(s, d.q);
  if (d.method == Method::kInDistill || d.method == Method::kMseHint) {
    if (d.scheduler == SchedulerMode::kCurriculum && d.epochs > 0) build_schedule(d.a, d.b, d.epochs, s.feature_layers());
    if (!c.use_auxiliary && t.feature_layers() != s.feature_layers()) {
      throw AlignmentError("teacher and student depths differ; enable distill.use_auxiliary");
    }
  }
}

ExperimentConfig load_experiment(const std::filesystem::path& path, bool validate) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str(), validate);
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream s;
  s << distill.canonical() << "data.dataset=" << dataset << "\n"
    << "data.synthetic=" << synthetic_train << "/" << synthetic_test << "/" << synthetic_classes << "\n"
    << "data.test_subset=" << test_subset << "\n"
    << "data.train_subset=" << train_subset << "\n"
    << "model.depth=" << depth << "\nmodel.student=" << student << "\nmodel.teacher=" << teacher << "\n"
    << "teacher.epochs=" << teacher_epochs << "\nauxiliary.epochs=" << aux_epochs << "\n"
    << "distill.use_auxiliary=" << use_auxiliary << "\n";
  return s.str();
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a(canonical())); }

DistillConfig ExperimentConfig::teacher_config() const {
  DistillConfig t = distill;
  if (teacher_epochs >= 0) t.epochs = teacher_epochs;
  return t;
}

DistillConfig ExperimentConfig::aux_config() const {
  DistillConfig a = distill;
  if (aux_epochs >= 0) a.epochs = aux_epochs;
  return a;
}

InputShape input_shape_for(const std::string& dataset) {
  if (dataset == "fashion-mnist" || dataset == "mnist" || dataset == "synthetic") return {1, 28, 28};
  if (dataset == "cifar10") return {3, 32, 32};
  throw ConfigError("unknown dataset '" + dataset + "' (expected fashion-mnist, cifar10 or synthetic)");
}

std::size_t classes_for(const ExperimentConfig& cfg) {
  return cfg.dataset == "synthetic" ? cfg.synthetic_classes : 10;
}

ModelSpec student_spec(const ExperimentConfig& cfg) {
  if (cfg.student != "cnn-s") throw ConfigError("unknown student '" + cfg.student + "' (expected cnn-s)");
  return student_cnn(input_shape_for(cfg.dataset), classes_for(cfg), cfg.depth);
}

ModelSpec teacher_spec(const ExperimentConfig& cfg) {
  const ModelSpec s = student_spec(cfg);
  if (cfg.teacher == "wide") return scaled_cnn(s, 4, ModelRole::kTeacher);
  if (cfg.teacher == "cnn-a") return scaled_cnn(s, 2, ModelRole::kTeacher);
  if (cfg.teacher == "cnn-s") return scaled_cnn(s, 1, ModelRole::kTeacher);
  throw ConfigError("unknown teacher '" + cfg.teacher + "' (expected wide, cnn-a or cnn-s)");
}

DatasetPair load_data(const ExperimentConfig& cfg) {
  DatasetPair p;
  if (cfg.dataset == "synthetic") {
    const InputShape in = input_shape_for(cfg.dataset);
    Dataset all = synthetic_blobs(cfg.synthetic_train + cfg.synthetic_test, cfg.synthetic_classes, in.channels,
                                  in.height, in.width, 0x5eed);
    p.train = take(all, cfg.synthetic_train);
    p.test = take(all, cfg.synthetic_test, cfg.synthetic_train);
    p.train.split = "train";
    p.test.split = "test";
    const ChannelNorm norm = compute_channel_norm(p.train);
    normalize(p.train, norm);
    normalize(p.test, norm);
  } else {
    p = load_named(cfg.dataset, data_root(cfg.data_root));
  }
  if (cfg.train_subset > 0 && cfg.train_subset < p.train.size()) p.train = take(p.train, cfg.train_subset);
  if (cfg.test_subset > 0 && cfg.test_subset < p.test.size()) p.test = take(p.test, cfg.test_subset);
  return p;
}

}  // namespace indistill::cli
