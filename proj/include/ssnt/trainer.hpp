#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ssnt/checkpoint.hpp"
#include "ssnt/corpus.hpp"

namespace ssnt {

struct TrainConfig {
  ModelRole role = ModelRole::kDirect;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  double dropout = 0.2;
  std::size_t embed = 128;
  std::size_t hidden = 256;
  std::size_t layers = 1;
  bool bidirectional = false;
  std::uint64_t seed = 42;
  std::size_t patience = 5;
  double clip_norm = 5.0;
  PreprocessRules rules;

  // train_src / dev_src hold task inputs x and train_tgt / dev_tgt task
  // outputs y, whatever the role: the channel model reads y and writes x,
  // the LM uses the *_tgt files only.
  std::string train_src, train_tgt, dev_src, dev_tgt;
  // Loaded when the file exists, otherwise built from training data and
  // written there.
  std::string src_vocab, tgt_vocab;
  std::string output;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
};

// Role defaults: transduction 0.001 / hidden 256 / 1 layer, LM 0.0001 /
// hidden 1024 / 2 layers.
TrainConfig default_config(ModelRole role);

// Flat key=value text with '#' comments. Keys may repeat only as a
// comma-separated value, which marks a sweep.
std::map<std::string, std::string> read_config(const std::string& path);
std::map<std::string, std::string> parse_config_text(const std::string& text);

// One config per point of the Cartesian product over swept keys (hidden,
// embed, layers, dropout, learning_rate, batch_size). Keys vary in
// alphabetical order, the first slowest; values in the order listed.
std::vector<TrainConfig> expand_config(const std::map<std::string, std::string>& raw);

// Examples as the model sees them: for the channel role the source side of
// each pair is y and the target side x.
struct TrainingData {
  Vocabulary input_vocab;
  Vocabulary output_vocab;
  std::vector<ParallelPair> train;
  std::vector<ParallelPair> dev;
  std::vector<TokenSequence> lm_train;
  std::vector<TokenSequence> lm_dev;
};

// Reads the corpus files named in `config`. Without dev files the training
// set doubles as the dev set.
TrainingData load_training_data(const TrainConfig& config);

struct TrainResult {
  ModelBundle bundle;  // parameters of the best dev epoch
  bool diverged = false;
  std::string diagnostic;
  double best_dev_nll = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train_model(const TrainConfig& config, const TrainingData& data,
                        const EpochCallback& on_epoch = {});

// Trains every sweep point and keeps the one with the lowest best dev NLL
// (earlier point on ties).
TrainResult train_sweep(const std::vector<TrainConfig>& configs, const TrainingData& data,
                        const EpochCallback& on_epoch = {});

// Mean per-example NLL with dropout off.
double mean_nll(const ModelBundle& bundle, const std::vector<ParallelPair>& pairs,
                const std::vector<TokenSequence>& sequences);

}  // namespace ssnt
