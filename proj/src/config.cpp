#include "hcan/config.hpp"

#include <fstream>
#include <sstream>

namespace hcan {

RunConfig::RunConfig() {
  values_ = {
      // training
      {"learning_rate", "0.01"},
      {"batch_size", "32"},
      {"dropout", "0.2"},
      {"lstm_layers", "1"},
      {"ece_heads", "8"},
      {"ia_heads", "4"},
      {"alpha", "0.2"},
      {"beta", "0.05"},
      {"epsilon", "0.1"},
      {"epochs", "30"},
      {"patience", "10"},
      {"seed", "0"},
      {"grad_clip_norm", "5.0"},
      {"precision", "32"},
      {"no_ece", "false"},
      {"no_eae", "false"},
      {"no_kl", "false"},
      {"no_adv", "false"},
      {"fgv_norm", "global"},
      {"distance_mode", "index"},
      {"scale_ia_logits", "true"},
      // synthetic corpus
      {"num_emotions", "3"},
      {"num_speakers", "2"},
      {"feature_dim", "16"},
      {"train_conversations", "200"},
      {"val_conversations", "50"},
      {"test_conversations", "50"},
      {"min_length", "4"},
      {"max_length", "12"},
      {"cluster_separation", "3.0"},
      {"speaker_offset_scale", "1.0"},
      {"stickiness", "0.8"},
  };
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  it->second = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    std::size_t last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      std::size_t a = s.find_first_not_of(" \t");
      std::size_t b = s.find_last_not_of(" \t");
      s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    };
    strip(key);
    strip(value);
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

int RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

std::uint64_t RunConfig::get_uint64(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    std::uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.learning_rate = get_double("learning_rate");
  c.batch_size = get_int("batch_size");
  c.dropout = get_double("dropout");
  c.lstm_layers = get_int("lstm_layers");
  c.ece_heads = get_int("ece_heads");
  c.ia_heads = get_int("ia_heads");
  c.alpha = get_double("alpha");
  c.beta = get_double("beta");
  c.epsilon = get_double("epsilon");
  c.epochs = get_int("epochs");
  c.patience = get_int("patience");
  c.seed = get_uint64("seed");
  c.grad_clip_norm = get_double("grad_clip_norm");
  c.precision = get_int("precision");
  c.no_ece = get_bool("no_ece");
  c.no_eae = get_bool("no_eae");
  c.no_kl = get_bool("no_kl");
  c.no_adv = get_bool("no_adv");
  const std::string& fgv = get("fgv_norm");
  if (fgv == "global")
    c.fgv_norm = FgvNorm::kGlobal;
  else if (fgv == "per_utterance")
    c.fgv_norm = FgvNorm::kPerUtterance;
  else
    throw ConfigError("fgv_norm: expected global|per_utterance, got '" + fgv + "'");
  const std::string& dist = get("distance_mode");
  if (dist == "index")
    c.distance_mode = DistanceMode::kIndex;
  else if (dist == "turn_taking")
    c.distance_mode = DistanceMode::kTurnTaking;
  else
    throw ConfigError("distance_mode: expected index|turn_taking, got '" + dist + "'");
  c.scale_ia_logits = get_bool("scale_ia_logits");
  c.validate();
  return c;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.num_emotions = get_int("num_emotions");
  s.num_speakers = get_int("num_speakers");
  s.feature_dim = get_int("feature_dim");
  s.train_conversations = get_int("train_conversations");
  s.val_conversations = get_int("val_conversations");
  s.test_conversations = get_int("test_conversations");
  s.min_length = get_int("min_length");
  s.max_length = get_int("max_length");
  s.cluster_separation = get_double("cluster_separation");
  s.speaker_offset_scale = get_double("speaker_offset_scale");
  s.stickiness = get_double("stickiness");
  s.seed = get_uint64("seed");
  s.validate();
  return s;
}

}  // namespace hcan
