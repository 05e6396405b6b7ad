#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hcan/errors.hpp"

namespace hcan {

struct Utterance {
  int speaker_id = 0;
  std::vector<float> features;   // stored 32-bit; math promotes to double
  std::optional<int> label;
};

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;

  int length() const { return static_cast<int>(utterances.size()); }
  std::vector<int> speakers() const;
  bool fully_labeled() const;
};

struct Corpus {
  std::vector<std::string> label_set;
  int feature_dim = 0;
  std::vector<Conversation> train, val, test;

  const std::vector<Conversation>& split(const std::string& name) const;
  std::vector<Conversation>& split(const std::string& name);
  int num_labels() const { return static_cast<int>(label_set.size()); }
};

struct SyntheticSpec {
  int num_emotions = 3;
  int num_speakers = 2;
  int feature_dim = 16;
  int train_conversations = 200;
  int val_conversations = 50;
  int test_conversations = 50;
  int min_length = 4;
  int max_length = 12;
  double cluster_separation = 3.0;
  double speaker_offset_scale = 1.0;
  double stickiness = 0.8;       // emotion-chain stay probability
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitStats {
  int dialogues = 0;
  int utterances = 0;
};

struct CorpusStats {
  std::map<std::string, SplitStats> splits;           // train/val/test
  std::vector<long> label_histogram;                  // over all splits
  std::map<int, int> speaker_count_distribution;      // #speakers -> #conversations
  int total_utterances = 0;
};

// One corpus file holds one split: a header line then one JSON object per
// conversation (see write_split for the exact schema).
struct SplitFile {
  std::string split_name;        // "train" | "val" | "test"
  std::vector<std::string> label_set;
  int feature_dim = 0;
  std::vector<Conversation> conversations;
};

SplitFile load_split(const std::string& path);
void write_split(const std::string& path, const std::string& split_name,
                 const Corpus& corpus);

// Loads train.jsonl/val.jsonl/test.jsonl from a directory (missing split
// files yield empty splits; at least one must exist and headers must agree).
Corpus load_corpus(const std::string& dir);
void write_corpus(const std::string& dir, const Corpus& corpus);

CorpusStats corpus_stats(const Corpus& corpus);

Corpus generate_synthetic(const SyntheticSpec& spec);

// Validates every invariant; throws DataError naming the first violation.
void validate_corpus(const Corpus& corpus);

}  // namespace hcan
