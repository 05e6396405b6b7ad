#include "hcan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hcan {

using json = nlohmann::json;

namespace {

constexpr char kMagic[5] = {'H', 'C', 'A', 'N', '1'};
constexpr int kVersion = 1;

json config_to_json(const TrainConfig& c) {
  return json{
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"dropout", c.dropout},
      {"lstm_layers", c.lstm_layers},
      {"ece_heads", c.ece_heads},
      {"ia_heads", c.ia_heads},
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"epsilon", c.epsilon},
      {"epochs", c.epochs},
      {"patience", c.patience},
      {"seed", c.seed},
      {"grad_clip_norm", c.grad_clip_norm},
      {"precision", c.precision},
      {"no_ece", c.no_ece},
      {"no_eae", c.no_eae},
      {"no_kl", c.no_kl},
      {"no_adv", c.no_adv},
      {"fgv_norm", c.fgv_norm == FgvNorm::kGlobal ? "global" : "per_utterance"},
      {"distance_mode", c.distance_mode == DistanceMode::kIndex ? "index" : "turn_taking"},
      {"scale_ia_logits", c.scale_ia_logits},
  };
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.lstm_layers = j.at("lstm_layers").get<int>();
  c.ece_heads = j.at("ece_heads").get<int>();
  c.ia_heads = j.at("ia_heads").get<int>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.patience = j.at("patience").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  c.precision = j.at("precision").get<int>();
  c.no_ece = j.at("no_ece").get<bool>();
  c.no_eae = j.at("no_eae").get<bool>();
  c.no_kl = j.at("no_kl").get<bool>();
  c.no_adv = j.at("no_adv").get<bool>();
  c.fgv_norm = j.at("fgv_norm") == "global" ? FgvNorm::kGlobal : FgvNorm::kPerUtterance;
  c.distance_mode =
      j.at("distance_mode") == "index" ? DistanceMode::kIndex : DistanceMode::kTurnTaking;
  c.scale_ia_logits = j.at("scale_ia_logits").get<bool>();
  return c;
}

void append_floats(std::vector<float>& blob, const std::vector<double>& values) {
  for (double x : values) blob.push_back(static_cast<float>(x));
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainerState& state) {
  // const_cast: params() is non-const only because it hands out mutable
  // pointers; we only read here.
  auto& model = const_cast<HcanModel&>(state.model);
  std::vector<Param*> params = model.params();
  if (!state.best_values.empty() && state.best_values.size() != params.size())
    throw UsageError("save_checkpoint: best snapshot size mismatch");

  json tensors = json::array();
  std::vector<float> blob;
  auto emit = [&](const std::string& name, const std::vector<int>& shape,
                  const std::vector<double>& values) {
    tensors.push_back(json{{"name", name}, {"shape", shape}, {"offset", blob.size()}});
    append_floats(blob, values);
  };
  for (Param* p : params) emit("param/" + p->name, p->shape, p->value);
  for (Param* p : params) emit("adam_m/" + p->name, p->shape, p->m);
  for (Param* p : params) emit("adam_v/" + p->name, p->shape, p->v);
  for (std::size_t i = 0; i < state.best_values.size(); ++i)
    emit("best/" + params[i]->name, params[i]->shape, state.best_values[i]);

  std::ostringstream rng_text;
  rng_text << state.rng;

  json manifest{
      {"version", kVersion},
      {"config", config_to_json(state.config)},
      {"label_set", state.label_set},
      {"feature_dim", state.model.cfg.feature_dim},
      {"num_labels", state.model.cfg.num_labels},
      {"tensors", tensors},
      {"blob_floats", blob.size()},
      {"adam_step", state.adam_step},
      {"rng", rng_text.str()},
      {"epoch", state.epoch},
      {"best_f1", state.best_f1},
      {"best_epoch", state.best_epoch},
      {"epochs_since_improvement", state.epochs_since_improvement},
      {"has_best", !state.best_values.empty()},
  };
  std::string manifest_str = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  std::uint64_t len = manifest_str.size();
  unsigned char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(len_bytes), 8);
  out.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));
  for (float f : blob) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!out) throw DataError("write failed for checkpoint: " + path);
}

TrainerState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
    throw DataError(path + ": not an HCAN1 checkpoint (bad magic)");
  unsigned char len_bytes[8];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 8))
    throw DataError(path + ": truncated header");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(len_bytes[i]) << (8 * i);
  std::string manifest_str(len, '\0');
  if (!in.read(manifest_str.data(), static_cast<std::streamsize>(len)))
    throw DataError(path + ": truncated manifest");

  json manifest;
  try {
    manifest = json::parse(manifest_str);
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed manifest: " + e.what());
  }
  if (manifest.at("version").get<int>() != kVersion)
    throw DataError(path + ": unsupported checkpoint version " +
                    std::to_string(manifest.at("version").get<int>()));

  std::uint64_t blob_floats = manifest.at("blob_floats").get<std::uint64_t>();
  std::vector<float> blob(blob_floats);
  for (std::uint64_t i = 0; i < blob_floats; ++i) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw DataError(path + ": truncated blob (expected " + std::to_string(blob_floats) +
                      " floats)");
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(b[k]) << (8 * k);
    std::memcpy(&blob[i], &bits, 4);
  }

  TrainerState state;
  state.config = config_from_json(manifest.at("config"));
  state.config.validate();
  state.label_set = manifest.at("label_set").get<std::vector<std::string>>();
  int feature_dim = manifest.at("feature_dim").get<int>();
  int num_labels = manifest.at("num_labels").get<int>();
  state.model.init(state.config.model_config(feature_dim, num_labels), state.config.seed);
  state.adam_step = manifest.at("adam_step").get<long>();
  state.epoch = manifest.at("epoch").get<int>();
  state.best_f1 = manifest.at("best_f1").get<double>();
  state.best_epoch = manifest.at("best_epoch").get<int>();
  state.epochs_since_improvement = manifest.at("epochs_since_improvement").get<int>();
  std::istringstream rng_text(manifest.at("rng").get<std::string>());
  rng_text >> state.rng;
  if (!rng_text) throw DataError(path + ": malformed rng state");

  std::vector<Param*> params = state.model.params();
  bool has_best = manifest.at("has_best").get<bool>();
  std::size_t expected = params.size() * (has_best ? 4u : 3u);
  const json& tensors = manifest.at("tensors");
  if (tensors.size() != expected)
    throw DataError(path + ": manifest lists " + std::to_string(tensors.size()) +
                    " tensors, expected " + std::to_string(expected));

  auto read_into = [&](const json& entry, const std::string& want_name,
                       const std::vector<int>& want_shape, std::vector<double>& dst) {
    std::string name = entry.at("name").get<std::string>();
    auto shape = entry.at("shape").get<std::vector<int>>();
    std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    if (name != want_name || shape != want_shape)
      throw DataError(path + ": tensor mismatch, got " + name + ", expected " + want_name);
    std::size_t count = 1;
    for (int s : shape) count *= static_cast<std::size_t>(s);
    if (offset + count > blob.size())
      throw DataError(path + ": tensor " + name + " extends past blob end");
    dst.resize(count);
    for (std::size_t i = 0; i < count; ++i) dst[i] = static_cast<double>(blob[offset + i]);
  };

  std::size_t t = 0;
  for (Param* p : params) read_into(tensors[t++], "param/" + p->name, p->shape, p->value);
  for (Param* p : params) read_into(tensors[t++], "adam_m/" + p->name, p->shape, p->m);
  for (Param* p : params) read_into(tensors[t++], "adam_v/" + p->name, p->shape, p->v);
  if (has_best) {
    state.best_values.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      read_into(tensors[t++], "best/" + params[i]->name, params[i]->shape,
                state.best_values[i]);
  }
  return state;
}

}  // namespace hcan
