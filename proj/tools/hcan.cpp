#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "hcan/checkpoint.hpp"
#include "hcan/config.hpp"
#include "hcan/dataio.hpp"
#include "hcan/gradcheck.hpp"
#include "hcan/metrics.hpp"
#include "hcan/trainer.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json stats_json(const hcan::CorpusStats& stats, const hcan::Corpus& corpus) {
  json splits;
  for (const auto& [name, ss] : stats.splits)
    splits[name] = {{"dialogues", ss.dialogues}, {"utterances", ss.utterances}};
  json speaker_dist;
  for (const auto& [count, convs] : stats.speaker_count_distribution)
    speaker_dist[std::to_string(count)] = convs;
  return json{{"format", "hcan-stats-v1"},
              {"classes", corpus.label_set.size()},
              {"labels", corpus.label_set},
              {"feature_dim", corpus.feature_dim},
              {"splits", splits},
              {"label_histogram", stats.label_histogram},
              {"speaker_count_distribution", speaker_dist},
              {"total_utterances", stats.total_utterances}};
}

json metrics_json(const hcan::Metrics& m, const std::vector<std::string>& labels) {
  return json{{"format", "hcan-metrics-v1"},
              {"weighted_f1", m.weighted_f1},
              {"accuracy", m.accuracy},
              {"labels", labels},
              {"per_class_f1", m.per_class_f1},
              {"support", m.support},
              {"confusion_matrix", m.confusion},
              {"total_utterances", m.total}};
}

void apply_overrides(hcan::RunConfig& config, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw hcan::UsageError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

void print_effective_config(const hcan::RunConfig& config) {
  json j;
  for (const auto& [k, v] : config.entries()) j[k] = v;
  std::cout << "effective config: " << j.dump() << "\n";
}

hcan::Corpus load_data_path(const std::string& path) {
  if (fs::is_directory(path)) return hcan::load_corpus(path);
  hcan::SplitFile sf = hcan::load_split(path);
  hcan::Corpus corpus;
  corpus.label_set = sf.label_set;
  corpus.feature_dim = sf.feature_dim;
  corpus.split(sf.split_name) = std::move(sf.conversations);
  hcan::validate_corpus(corpus);
  return corpus;
}

// All conversations of a single-split file, whatever the split name.
std::vector<hcan::Conversation>& only_split(hcan::Corpus& corpus) {
  for (const char* name : {"train", "val", "test"})
    if (!corpus.split(name).empty()) return corpus.split(name);
  return corpus.test;
}

void check_compatibility(const hcan::TrainerState& state, const hcan::Corpus& corpus) {
  if (corpus.feature_dim != state.model.cfg.feature_dim)
    throw hcan::DataError("checkpoint/corpus mismatch: feature_dim " +
                          std::to_string(state.model.cfg.feature_dim) + " vs " +
                          std::to_string(corpus.feature_dim));
  if (corpus.label_set != state.label_set)
    throw hcan::DataError("checkpoint/corpus mismatch: label sets differ");
}

int env_threads() {
  const char* env = std::getenv("HCAN_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n > 0 ? n : 1;
}

struct SeedResult {
  std::uint64_t seed = 0;
  double test_f1 = 0.0;
};

int cmd_generate(const std::string& spec_path, const std::string& out_dir,
                 const std::vector<std::string>& sets) {
  hcan::RunConfig config;
  if (!spec_path.empty()) config.load_file(spec_path);
  apply_overrides(config, sets);
  print_effective_config(config);
  hcan::Corpus corpus = hcan::generate_synthetic(config.synthetic_spec());
  hcan::write_corpus(out_dir, corpus);
  std::cout << stats_json(hcan::corpus_stats(corpus), corpus).dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_path, const std::string& resume_path,
              std::uint64_t seed, bool seed_given, int seeds, int epochs_flag,
              const std::string& ablate, const std::vector<std::string>& sets) {
  hcan::RunConfig config;
  if (!config_path.empty()) config.load_file(config_path);
  apply_overrides(config, sets);
  if (seed_given) config.set("seed", std::to_string(seed));
  if (epochs_flag >= 0) config.set("epochs", std::to_string(epochs_flag));
  print_effective_config(config);

  hcan::Corpus corpus = hcan::load_corpus(data_dir);

  if (!ablate.empty()) {
    std::vector<std::string> variants;
    std::stringstream ss(ablate);
    std::string item;
    while (std::getline(ss, item, ',')) variants.push_back(item);
    hcan::TrainConfig base = config.train_config();
    std::vector<std::uint64_t> run_seeds;
    for (int i = 0; i < std::max(1, seeds); ++i) run_seeds.push_back(base.seed + static_cast<std::uint64_t>(i));
    auto rows = hcan::run_ablation(corpus, base, variants, run_seeds);
    for (const auto& row : rows) {
      std::cout << row.label << ": mean weighted F1 " << row.mean_f1
                << " +- " << row.std_f1 << " over " << row.test_f1.size() << " seeds (";
      for (std::size_t i = 0; i < row.test_f1.size(); ++i)
        std::cout << (i ? ", " : "") << row.test_f1[i];
      std::cout << ")\n";
    }
    return 0;
  }

  if (seeds > 1) {
    hcan::TrainConfig base = config.train_config();
    std::vector<SeedResult> results(static_cast<std::size_t>(seeds));
    int workers = std::min(seeds, env_threads());
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    auto run_one = [&]() {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= seeds) break;
        hcan::TrainConfig cfg = base;
        cfg.seed = base.seed + static_cast<std::uint64_t>(i);
        hcan::TrainerState state = hcan::init_trainer(corpus, cfg);
        hcan::train(state, corpus);
        state.apply_best();
        hcan::Metrics m = hcan::evaluate(state.model, corpus.test);
        results[static_cast<std::size_t>(i)] = {cfg.seed, m.weighted_f1};
      }
    };
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_one);
    for (auto& t : pool) t.join();
    double sum = 0.0;
    for (const auto& r : results) {
      std::cout << "seed " << r.seed << ": test weighted F1 " << r.test_f1 << "\n";
      sum += r.test_f1;
    }
    double mean = sum / seeds;
    double var = 0.0;
    for (const auto& r : results) var += (r.test_f1 - mean) * (r.test_f1 - mean);
    double stddev = seeds > 1 ? std::sqrt(var / (seeds - 1)) : 0.0;
    std::cout << "mean test weighted F1 " << mean << " +- " << stddev
              << " over " << seeds << " seeds\n";
    return 0;
  }

  hcan::TrainerState state;
  if (!resume_path.empty()) {
    state = hcan::load_checkpoint(resume_path);
    if (epochs_flag >= 0) state.config.epochs = epochs_flag;
    check_compatibility(state, corpus);
    std::cout << "resumed from epoch " << state.epoch << "\n";
  } else {
    state = hcan::init_trainer(corpus, config.train_config());
  }
  hcan::TrainResult result = hcan::train(state, corpus);
  for (const auto& e : result.history)
    std::cout << "epoch " << e.epoch << ": train loss " << e.train_loss
              << ", val weighted F1 " << e.val.weighted_f1 << "\n";
  if (!out_path.empty()) {
    hcan::save_checkpoint(out_path, state);
    std::cout << "checkpoint written to " << out_path << "\n";
  }
  if (!corpus.test.empty()) {
    hcan::TrainerState best = state;
    best.apply_best();
    hcan::Metrics m = hcan::evaluate(best.model, corpus.test);
    std::cout << "test weighted F1 " << m.weighted_f1 << " (best val epoch "
              << state.best_epoch << ")\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path) {
  hcan::TrainerState state = hcan::load_checkpoint(ckpt_path);
  state.apply_best();
  hcan::Corpus corpus = load_data_path(data_path);
  check_compatibility(state, corpus);
  std::vector<hcan::Conversation>& convs = only_split(corpus);
  hcan::Metrics m = hcan::evaluate(state.model, convs);
  std::cout << metrics_json(m, state.label_set).dump(2) << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& data_path,
                const std::string& out_path) {
  hcan::TrainerState state = hcan::load_checkpoint(ckpt_path);
  state.apply_best();
  hcan::Corpus corpus = load_data_path(data_path);
  check_compatibility(state, corpus);

  json conversations = json::array();
  for (const hcan::Conversation& conv : only_split(corpus)) {
    hcan::HcanModel::Prediction pred = state.model.predict(conv);
    conversations.push_back(json{{"id", conv.id},
                                 {"predicted", pred.labels},
                                 {"y_hat", pred.y_hat}});
  }
  json doc{{"format", "hcan-predictions-v1"},
           {"labels", state.label_set},
           {"conversations", conversations}};
  std::ofstream out(out_path);
  if (!out) throw hcan::DataError("cannot write predictions: " + out_path);
  out << doc.dump(2) << "\n";
  std::cout << "predictions written to " << out_path << "\n";
  return 0;
}

int cmd_inspect(const std::string& ckpt_path, const std::string& data_path,
                const std::string& conv_id, const std::string& out_path) {
  hcan::TrainerState state = hcan::load_checkpoint(ckpt_path);
  state.apply_best();
  hcan::Corpus corpus = load_data_path(data_path);
  check_compatibility(state, corpus);

  const hcan::Conversation* target = nullptr;
  for (const char* name : {"train", "val", "test"})
    for (const hcan::Conversation& conv : corpus.split(name))
      if (conv.id == conv_id) target = &conv;
  if (!target) throw hcan::DataError("unknown conversation id: " + conv_id);

  hcan::HcanModel::Prediction pred = state.model.predict(*target);
  json utterances = json::array();
  for (int i = 0; i < target->length(); ++i) {
    json attribution = json::object();
    if (!state.model.cfg.no_eae && i < static_cast<int>(pred.trace.rows.size())) {
      const auto& row = pred.trace.rows[static_cast<std::size_t>(i)];
      std::vector<int> intra(row.intra.begin(), row.intra.end());
      attribution = json{{"mixed_weights", row.mixed_weights},
                         {"intra", intra},
                         {"gaussian", row.gaussian}};
    }
    const auto& utt = target->utterances[static_cast<std::size_t>(i)];
    utterances.push_back(json{{"index", i},
                              {"speaker", utt.speaker_id},
                              {"label", utt.label ? json(*utt.label) : json()},
                              {"predicted", pred.labels[static_cast<std::size_t>(i)]},
                              {"d_tmp", pred.d_tmp[static_cast<std::size_t>(i)]},
                              {"d_src", pred.d_src[static_cast<std::size_t>(i)]},
                              {"y_hat", pred.y_hat[static_cast<std::size_t>(i)]},
                              {"attribution", attribution}});
  }
  json doc{{"format", "hcan-inspect-v1"},
           {"conversation", conv_id},
           {"labels", state.label_set},
           {"utterances", utterances}};
  std::ofstream out(out_path);
  if (!out) throw hcan::DataError("cannot write inspection report: " + out_path);
  out << doc.dump(2) << "\n";
  std::cout << "inspection report written to " << out_path << "\n";
  return 0;
}

int cmd_stats(const std::string& data_path) {
  hcan::Corpus corpus = load_data_path(data_path);
  std::cout << stats_json(hcan::corpus_stats(corpus), corpus).dump(2) << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& size) {
  auto start = std::chrono::steady_clock::now();
  auto entries = hcan::run_gradcheck(size == "full");
  bool all_pass = true;
  for (const auto& e : entries) {
    std::cout << e.name << ": max rel err " << e.max_rel_err << " (threshold "
              << e.threshold << ") " << (e.pass ? "PASS" : "FAIL") << "\n";
    all_pass = all_pass && e.pass;
  }
  auto secs = std::chrono::duration_cast<std::chrono::duration<double>>(
                  std::chrono::steady_clock::now() - start)
                  .count();
  std::cout << "gradcheck " << (all_pass ? "passed" : "FAILED") << " in " << secs << " s\n";
  return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HCAN: conversational emotion recognition trainer"};
  app.require_subcommand(1);

  std::string spec_path, config_path, data_path, out_path, ckpt_path, resume_path;
  std::string conv_id, ablate, size = "small";
  std::uint64_t seed = 0;
  int seeds = 1, epochs_flag = -1;
  std::vector<std::string> sets;

  auto* gen = app.add_subcommand("generate-data", "Generate a synthetic corpus");
  gen->add_option("--spec", spec_path, "Synthetic spec file (key=value)");
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--set", sets, "Override config key=value");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "Config file (key=value)");
  train->add_option("--data", data_path, "Corpus directory")->required();
  train->add_option("--out", out_path, "Checkpoint output path");
  train->add_option("--resume", resume_path, "Resume from checkpoint");
  auto* seed_opt = train->add_option("--seed", seed, "Training seed");
  train->add_option("--seeds", seeds, "Number of seeded runs (prints mean +- std)");
  train->add_option("--epochs", epochs_flag, "Override epoch target");
  train->add_option("--ablate", ablate, "Comma list of no_ece,no_eae,no_kl,no_adv");
  train->add_option("--set", sets, "Override config key=value");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on a labeled split");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  eval->add_option("--data", data_path, "Split file or corpus directory")->required();

  auto* predict = app.add_subcommand("predict", "Write per-utterance predictions");
  predict->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  predict->add_option("--data", data_path, "Split file or corpus directory")->required();
  predict->add_option("--out", out_path, "Output JSON path")->required();

  auto* inspect = app.add_subcommand("inspect", "Dump attention/distribution trace");
  inspect->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  inspect->add_option("--data", data_path, "Split file or corpus directory")->required();
  inspect->add_option("--conversation", conv_id, "Conversation id")->required();
  inspect->add_option("--out", out_path, "Output JSON path")->required();

  auto* stats = app.add_subcommand("stats", "Print corpus statistics");
  stats->add_option("--data", data_path, "Split file or corpus directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference verification");
  gradcheck->add_option("--size", size, "small|full")->check(CLI::IsMember({"small", "full"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(spec_path, out_path, sets);
    if (train->parsed())
      return cmd_train(config_path, data_path, out_path, resume_path, seed,
                       seed_opt->count() > 0, seeds, epochs_flag, ablate, sets);
    if (eval->parsed()) return cmd_evaluate(ckpt_path, data_path);
    if (predict->parsed()) return cmd_predict(ckpt_path, data_path, out_path);
    if (inspect->parsed()) return cmd_inspect(ckpt_path, data_path, conv_id, out_path);
    if (stats->parsed()) return cmd_stats(data_path);
    if (gradcheck->parsed()) return cmd_gradcheck(size);
  } catch (const hcan::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case hcan::ErrorKind::Usage:
      case hcan::ErrorKind::Config:
        return 1;
      case hcan::ErrorKind::Data:
        return 2;
      case hcan::ErrorKind::Numeric:
        return 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
