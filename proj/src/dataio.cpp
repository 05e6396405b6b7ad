#include "hcan/dataio.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace hcan {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::vector<int> Conversation::speakers() const {
  std::vector<int> out;
  out.reserve(utterances.size());
  for (const Utterance& u : utterances) out.push_back(u.speaker_id);
  return out;
}

bool Conversation::fully_labeled() const {
  for (const Utterance& u : utterances)
    if (!u.label.has_value()) return false;
  return true;
}

const std::vector<Conversation>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw UsageError("unknown split name: " + name);
}

std::vector<Conversation>& Corpus::split(const std::string& name) {
  return const_cast<std::vector<Conversation>&>(
      static_cast<const Corpus*>(this)->split(name));
}

void SyntheticSpec::validate() const {
  if (num_emotions < 1 || num_speakers < 1 || feature_dim < 1)
    throw ConfigError("synthetic spec: counts must be positive");
  if (train_conversations < 1 || val_conversations < 0 || test_conversations < 0)
    throw ConfigError("synthetic spec: conversation counts invalid");
  if (min_length < 1 || max_length < min_length)
    throw ConfigError("synthetic spec: length range invalid");
  if (stickiness < 0.0 || stickiness > 1.0)
    throw ConfigError("synthetic spec: stickiness must be in [0,1]");
  if (cluster_separation < 0.0 || speaker_offset_scale < 0.0)
    throw ConfigError("synthetic spec: scales must be non-negative");
}

namespace {

const char* kFormat = "hcan-corpus-v1";

void validate_conversation(const Conversation& conv, int feature_dim, int num_labels) {
  if (conv.utterances.empty())
    throw DataError("conversation " + conv.id + ": empty");
  for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
    const Utterance& u = conv.utterances[i];
    if (u.speaker_id < 0)
      throw DataError("conversation " + conv.id + ": negative speaker id at utterance " +
                      std::to_string(i));
    if (static_cast<int>(u.features.size()) != feature_dim)
      throw DataError("conversation " + conv.id + ": feature length " +
                      std::to_string(u.features.size()) + " != feature_dim " +
                      std::to_string(feature_dim) + " at utterance " + std::to_string(i));
    if (u.label && (*u.label < 0 || *u.label >= num_labels))
      throw DataError("conversation " + conv.id + ": label " + std::to_string(*u.label) +
                      " out of range [0," + std::to_string(num_labels) + ") at utterance " +
                      std::to_string(i));
  }
}

json header_json(const std::string& split_name, const Corpus& corpus) {
  return json{{"format", kFormat},
              {"feature_dim", corpus.feature_dim},
              {"labels", corpus.label_set},
              {"split", split_name}};
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; hand-rolled so output is identical across standard libraries.
class Gaussian {
 public:
  explicit Gaussian(std::mt19937_64& rng) : rng_(rng) {}
  double operator()() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double u1 = uniform01(rng_);
    double u2 = uniform01(rng_);
    while (u1 <= 0.0) u1 = uniform01(rng_);
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64& rng_;
  double spare_ = 0.0;
  bool have_ = false;
};

}  // namespace

void validate_corpus(const Corpus& corpus) {
  if (corpus.feature_dim < 1) throw DataError("corpus: feature_dim must be positive");
  if (corpus.label_set.empty()) throw DataError("corpus: empty label set");
  for (const char* name : {"train", "val", "test"})
    for (const Conversation& conv : corpus.split(name))
      validate_conversation(conv, corpus.feature_dim, corpus.num_labels());
}

SplitFile load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file, missing header");

  SplitFile out;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path + ":1: malformed header: " + e.what());
  }
  if (!header.contains("format") || header["format"] != kFormat)
    throw DataError(path + ":1: missing or unsupported format (expected " +
                    std::string(kFormat) + ")");
  for (const char* key : {"feature_dim", "labels", "split"})
    if (!header.contains(key))
      throw DataError(path + ":1: header missing field '" + key + "'");
  out.feature_dim = header["feature_dim"].get<int>();
  out.label_set = header["labels"].get<std::vector<std::string>>();
  out.split_name = header["split"].get<std::string>();
  if (out.split_name != "train" && out.split_name != "val" && out.split_name != "test")
    throw DataError(path + ":1: split must be train|val|test, got '" + out.split_name + "'");

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    for (const char* key : {"id", "speakers", "labels", "features"})
      if (!rec.contains(key))
        throw DataError(path + ":" + std::to_string(lineno) + ": record missing field '" +
                        key + "'");
    Conversation conv;
    conv.id = rec["id"].get<std::string>();
    auto speakers = rec["speakers"].get<std::vector<int>>();
    auto features = rec["features"].get<std::vector<std::vector<double>>>();
    std::vector<int> labels;
    bool has_labels = !rec["labels"].is_null();
    if (has_labels) labels = rec["labels"].get<std::vector<int>>();

    if (features.size() != speakers.size() || (has_labels && labels.size() != speakers.size()))
      throw DataError(path + ":" + std::to_string(lineno) + ": conversation " + conv.id +
                      ": speakers/labels/features lengths disagree (" +
                      std::to_string(speakers.size()) + "/" +
                      (has_labels ? std::to_string(labels.size()) : "null") + "/" +
                      std::to_string(features.size()) + ")");
    for (std::size_t i = 0; i < speakers.size(); ++i) {
      Utterance u;
      u.speaker_id = speakers[i];
      u.features.reserve(features[i].size());
      for (double x : features[i]) u.features.push_back(static_cast<float>(x));
      if (has_labels) u.label = labels[i];
      conv.utterances.push_back(std::move(u));
    }
    validate_conversation(conv, out.feature_dim, static_cast<int>(out.label_set.size()));
    out.conversations.push_back(std::move(conv));
  }
  return out;
}

void write_split(const std::string& path, const std::string& split_name,
                 const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path);
  out << header_json(split_name, corpus).dump() << "\n";
  for (const Conversation& conv : corpus.split(split_name)) {
    json features = json::array();
    json speakers = json::array();
    json labels = json::array();
    bool has_labels = true;
    for (const Utterance& u : conv.utterances) {
      speakers.push_back(u.speaker_id);
      json row = json::array();
      for (float x : u.features) row.push_back(static_cast<double>(x));
      features.push_back(std::move(row));
      if (u.label)
        labels.push_back(*u.label);
      else
        has_labels = false;
    }
    json rec{{"id", conv.id},
             {"speakers", speakers},
             {"labels", has_labels ? labels : json()},
             {"features", features}};
    out << rec.dump() << "\n";
  }
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  bool any = false;
  for (const char* name : {"train", "val", "test"}) {
    fs::path p = fs::path(dir) / (std::string(name) + ".jsonl");
    if (!fs::exists(p)) continue;
    SplitFile sf = load_split(p.string());
    if (sf.split_name != name)
      throw DataError(p.string() + ": header split '" + sf.split_name +
                      "' does not match file name");
    if (!any) {
      corpus.feature_dim = sf.feature_dim;
      corpus.label_set = sf.label_set;
    } else if (sf.feature_dim != corpus.feature_dim || sf.label_set != corpus.label_set) {
      throw DataError(p.string() + ": header disagrees with other splits");
    }
    corpus.split(name) = std::move(sf.conversations);
    any = true;
  }
  if (!any) throw DataError("no corpus split files (train/val/test.jsonl) found in " + dir);
  validate_corpus(corpus);
  return corpus;
}

void write_corpus(const std::string& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  for (const char* name : {"train", "val", "test"})
    write_split((fs::path(dir) / (std::string(name) + ".jsonl")).string(), name, corpus);
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  stats.label_histogram.assign(corpus.label_set.size(), 0);
  for (const char* name : {"train", "val", "test"}) {
    SplitStats ss;
    for (const Conversation& conv : corpus.split(name)) {
      ++ss.dialogues;
      ss.utterances += conv.length();
      std::set<int> speakers;
      for (const Utterance& u : conv.utterances) {
        speakers.insert(u.speaker_id);
        if (u.label) ++stats.label_histogram[static_cast<std::size_t>(*u.label)];
      }
      ++stats.speaker_count_distribution[static_cast<int>(speakers.size())];
    }
    stats.total_utterances += ss.utterances;
    stats.splits[name] = ss;
  }
  return stats;
}

Corpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Gaussian gauss(rng);

  Corpus corpus;
  corpus.feature_dim = spec.feature_dim;
  for (int e = 0; e < spec.num_emotions; ++e)
    corpus.label_set.push_back("emotion_" + std::to_string(e));

  // Fixed per-corpus structure: emotion cluster centers on random unit
  // directions, plus a per-speaker offset (the speaker confound the
  // adversarial loss is meant to counteract).
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(spec.num_emotions));
  for (auto& c : centers) {
    c.resize(static_cast<std::size_t>(spec.feature_dim));
    double norm = 0.0;
    for (double& x : c) {
      x = gauss();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (double& x : c) x = x / norm * spec.cluster_separation;
  }
  std::vector<std::vector<double>> offsets(static_cast<std::size_t>(spec.num_speakers));
  for (auto& o : offsets) {
    o.resize(static_cast<std::size_t>(spec.feature_dim));
    for (double& x : o) x = gauss() * spec.speaker_offset_scale;
  }

  auto make_split = [&](const char* name, int count) {
    auto& convs = corpus.split(name);
    for (int k = 0; k < count; ++k) {
      Conversation conv;
      conv.id = std::string(name) + "_" + std::to_string(k);
      int len = spec.min_length +
                static_cast<int>(rng() % static_cast<std::uint64_t>(
                                     spec.max_length - spec.min_length + 1));
      int emotion = static_cast<int>(rng() % static_cast<std::uint64_t>(spec.num_emotions));
      for (int i = 0; i < len; ++i) {
        if (i > 0) {
          // Sticky Markov chain: stay with prob stickiness, else switch
          // uniformly to one of the other emotions.
          if (uniform01(rng) >= spec.stickiness && spec.num_emotions > 1) {
            int jump = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(
                                                spec.num_emotions - 1));
            emotion = (emotion + jump) % spec.num_emotions;
          }
        }
        Utterance u;
        u.speaker_id = static_cast<int>(rng() % static_cast<std::uint64_t>(spec.num_speakers));
        u.label = emotion;
        u.features.resize(static_cast<std::size_t>(spec.feature_dim));
        for (int d = 0; d < spec.feature_dim; ++d) {
          double x = centers[static_cast<std::size_t>(emotion)][static_cast<std::size_t>(d)] +
                     offsets[static_cast<std::size_t>(u.speaker_id)][static_cast<std::size_t>(d)] +
                     gauss();
          u.features[static_cast<std::size_t>(d)] = static_cast<float>(x);
        }
        conv.utterances.push_back(std::move(u));
      }
      convs.push_back(std::move(conv));
    }
  };
  make_split("train", spec.train_conversations);
  make_split("val", spec.val_conversations);
  make_split("test", spec.test_conversations);
  validate_corpus(corpus);
  return corpus;
}

}  // namespace hcan
