#include "indistill/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "indistill/train.hpp"

namespace indistill {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'I', 'D', 'S', 'T'};

json spec_to_json(const ModelSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    layers.push_back({{"kind", to_string(l.kind)}, {"width", l.width}, {"kernel", l.kernel},
                      {"padding", l.padding}, {"stride", l.stride}, {"batchnorm", l.batchnorm},
                      {"activation", l.activation}, {"pool", l.pool}});
  }
  return {{"layers", layers},
          {"num_classes", spec.num_classes},
          {"role", to_string(spec.role)},
          {"input", {spec.input.channels, spec.input.height, spec.input.width}}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  for (const auto& l : j.at("layers")) {
    LayerSpec s;
    const std::string kind = l.at("kind").get<std::string>();
    if (kind != "conv" && kind != "dense") throw CheckpointError("unknown layer kind '" + kind + "'");
    s.kind = kind == "conv" ? LayerKind::kConv : LayerKind::kDense;
    s.width = l.at("width").get<std::size_t>();
    s.kernel = l.at("kernel").get<std::size_t>();
    s.padding = l.at("padding").get<std::size_t>();
    s.stride = l.at("stride").get<std::size_t>();
    s.batchnorm = l.at("batchnorm").get<bool>();
    s.activation = l.at("activation").get<bool>();
    s.pool = l.at("pool").get<bool>();
    spec.layers.push_back(s);
  }
  spec.num_classes = j.at("num_classes").get<std::size_t>();
  spec.role = parse_model_role(j.at("role").get<std::string>());
  const auto in = j.at("input").get<std::vector<std::size_t>>();
  if (in.size() != 3) throw CheckpointError("input shape must have 3 extents");
  spec.input = {in[0], in[1], in[2]};
  return spec;
}

struct BlobWriter {
  std::string payload;
  json entries = json::array();

  void add(const std::string& name, const Tensor<float>& t) {
    const std::size_t bytes = t.size() * sizeof(float);
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}, {"bytes", bytes}});
    payload.append(reinterpret_cast<const char*>(t.data().data()), bytes);
  }
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  BlobWriter w;
  for (const auto& p : m.parameters()) w.add(p.name, p.value);
  for (std::size_t i = 0; i < m.running_stats().size(); ++i) {
    w.add("stats" + std::to_string(i) + ".mean", m.running_stats()[i].mean);
    w.add("stats" + std::to_string(i) + ".var", m.running_stats()[i].var);
  }
  const auto& opt = ckpt.optimizer;
  for (std::size_t i = 0; i < opt.first.size(); ++i) w.add("opt.first." + std::to_string(i), opt.first[i]);
  for (std::size_t i = 0; i < opt.second.size(); ++i) w.add("opt.second." + std::to_string(i), opt.second[i]);

  json header = {{"format", "indistill-checkpoint"},
                 {"dtype", "float32"},
                 {"spec", spec_to_json(m.spec())},
                 {"tensors", w.entries},
                 {"parameters", m.parameters().size()},
                 {"running_stats", m.running_stats().size()},
                 {"optimizer", {{"kind", ckpt.optimizer_kind}, {"tensors", opt.first.size()}, {"steps", opt.steps}}},
                 {"epoch", ckpt.epoch},
                 {"seed", ckpt.seed},
                 {"config_hash", ckpt.config_hash},
                 {"metadata", ckpt.metadata},
                 {"payload_bytes", w.payload.size()},
                 {"payload_fnv1a", hex64(fnv1a(w.payload))}};
  const std::string text = header.dump();

  std::string out(kMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t length = text.size();
  out.append(reinterpret_cast<const char*>(&version), 4);
  out.append(reinterpret_cast<const char*>(&length), 8);
  out += text;
  out += w.payload;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint (bad magic or truncated preamble)");
  }
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&length, bytes.data() + 8, 8);
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + ", this build reads version " +
                                 std::to_string(kCheckpointVersion));
  }
  if (length > bytes.size() - 16) throw CheckpointError("checkpoint truncated inside the header");
  json h;
  try {
    h = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(length));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  const std::string payload = bytes.substr(16 + length);
  try {
    if (h.at("dtype").get<std::string>() != "float32") throw CheckpointError("unsupported dtype");
    if (payload.size() != h.at("payload_bytes").get<std::size_t>()) {
      throw CheckpointError("checkpoint payload is " + std::to_string(payload.size()) + " bytes, header says " +
                            std::to_string(h.at("payload_bytes").get<std::size_t>()) + " (truncated file?)");
    }
    if (hex64(fnv1a(payload)) != h.at("payload_fnv1a").get<std::string>()) {
      throw CheckpointError("checkpoint payload checksum mismatch");
    }
    Checkpoint c;
    c.model = Model(spec_from_json(h.at("spec")), 0);
    const auto& entries = h.at("tensors");
    std::size_t next = 0;
    auto read_into = [&](Tensor<float>& t) {
      if (next >= entries.size()) throw CheckpointError("checkpoint lists too few tensors");
      const auto& e = entries[next++];
      const Shape shape = e.at("shape").get<Shape>();
      const std::size_t offset = e.at("offset").get<std::size_t>(), n = e.at("bytes").get<std::size_t>();
      if (n != numel(shape) * sizeof(float) || offset + n > payload.size()) {
        throw CheckpointError("tensor '" + e.at("name").get<std::string>() + "' has inconsistent extents");
      }
      if (!t.empty() && t.shape() != shape) {
        throw CheckpointError("tensor '" + e.at("name").get<std::string>() + "' shape " + to_string(shape) +
                              " does not match the model (" + to_string(t.shape()) + ")");
      }
      t = Tensor<float>(shape);
      std::memcpy(t.data().data(), payload.data() + offset, n);
    };
    if (h.at("parameters").get<std::size_t>() != c.model.parameters().size() ||
        h.at("running_stats").get<std::size_t>() != c.model.running_stats().size()) {
      throw CheckpointError("checkpoint tensor counts do not match its model spec");
    }
    for (auto& p : c.model.parameters()) {
      read_into(p.value);
      p.grad = Tensor<float>(p.value.shape());
    }
    for (auto& s : c.model.running_stats()) {
      read_into(s.mean);
      read_into(s.var);
    }
    const auto& opt = h.at("optimizer");
    const std::size_t n_opt = opt.at("tensors").get<std::size_t>();
    c.optimizer.first.resize(n_opt);
    c.optimizer.second.resize(n_opt);
    for (auto& t : c.optimizer.first) read_into(t);
    for (auto& t : c.optimizer.second) read_into(t);
    c.optimizer.steps = opt.at("steps").get<std::vector<long>>();
    if (c.optimizer.steps.size() != n_opt) throw CheckpointError("optimizer step counts do not match");
    if (next != entries.size()) throw CheckpointError("checkpoint lists unexpected extra tensors");
    c.optimizer_kind = opt.at("kind").get<std::string>();
    c.epoch = h.at("epoch").get<long>();
    c.seed = h.at("seed").get<std::uint64_t>();
    c.config_hash = h.at("config_hash").get<std::string>();
    c.metadata = h.at("metadata").get<std::map<std::string, std::string>>();
    return c;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint holds an invalid model: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return decode_checkpoint(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

}  // namespace indistill
