#include "ssnt/trainer.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "ssnt/error.hpp"
#include "ssnt/graph.hpp"
#include "ssnt/nn.hpp"

namespace ssnt {

namespace {

const std::set<std::string> kSweepKeys = {"hidden", "embed", "layers", "dropout", "learning_rate",
                                          "batch_size"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(trim(part));
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "' needs a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config key '" + key + "' needs a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' needs true or false, got '" + v + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void apply(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "role") c.role = parse_role(v);
  else if (key == "epochs") c.epochs = to_size(key, v);
  else if (key == "batch_size") c.batch_size = to_size(key, v);
  else if (key == "learning_rate") c.learning_rate = to_double(key, v);
  else if (key == "dropout") c.dropout = to_double(key, v);
  else if (key == "embed") c.embed = to_size(key, v);
  else if (key == "hidden") c.hidden = to_size(key, v);
  else if (key == "layers") c.layers = to_size(key, v);
  else if (key == "bidirectional") c.bidirectional = to_bool(key, v);
  else if (key == "seed") c.seed = to_size(key, v);
  else if (key == "patience") c.patience = to_size(key, v);
  else if (key == "clip_norm") c.clip_norm = to_double(key, v);
  else if (key == "lowercase") c.rules.lowercase = to_bool(key, v);
  else if (key == "digits_to_hash") c.rules.digit_to_hash = to_bool(key, v);
  else if (key == "min_count") c.rules.min_count = to_size(key, v);
  else if (key == "max_src_len") c.rules.max_src_len = to_size(key, v);
  else if (key == "max_tgt_len") c.rules.max_tgt_len = to_size(key, v);
  else if (key == "train_src") c.train_src = v;
  else if (key == "train_tgt") c.train_tgt = v;
  else if (key == "dev_src") c.dev_src = v;
  else if (key == "dev_tgt") c.dev_tgt = v;
  else if (key == "src_vocab") c.src_vocab = v;
  else if (key == "tgt_vocab") c.tgt_vocab = v;
  else if (key == "output") c.output = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

Vocabulary vocab_for(const std::string& path, const std::vector<std::vector<std::string>>& streams,
                     std::size_t min_count) {
  if (!path.empty() && std::filesystem::exists(path)) return Vocabulary::load(path);
  Vocabulary v = build_vocab(streams, min_count);
  if (!path.empty()) v.save(path);
  return v;
}

std::vector<ParallelPair> orient(const ParallelText& text, const Vocabulary& src, const Vocabulary& tgt,
                                 ModelRole role) {
  std::vector<ParallelPair> out;
  for (std::size_t k = 0; k < text.size(); ++k) {
    if (role == ModelRole::kChannel) {
      out.push_back({encode(text.target[k], tgt, Role::kInput), encode(text.source[k], src, Role::kOutput)});
    } else {
      out.push_back({encode(text.source[k], src, Role::kInput), encode(text.target[k], tgt, Role::kOutput)});
    }
  }
  return out;
}

double example_nll(const ModelBundle& b, const ParallelPair* pair, const TokenSequence* seq) {
  if (b.ssnt) return -b.ssnt->forward_chart(pair->source.ids, pair->target.ids).corner();
  return -b.lm->sequence_log_prob(seq->ids);
}

}  // namespace

TrainConfig default_config(ModelRole role) {
  TrainConfig c;
  c.role = role;
  if (role == ModelRole::kLm) {
    c.learning_rate = 0.0001;
    c.hidden = 1024;
    c.layers = 2;
  }
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (hidden < 1 || embed < 1) throw ConfigError("hidden and embed must be positive");
  if (layers < 1) throw ConfigError("layers must be at least 1");
  if (role != ModelRole::kLm && layers != 1) {
    throw ConfigError("transduction models have a single LSTM layer per side");
  }
  if (role == ModelRole::kChannel && bidirectional) {
    throw ConfigError("the channel model needs a unidirectional encoder");
  }
  if (role == ModelRole::kLm && bidirectional) throw ConfigError("bidirectional applies to direct models");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (rules.min_count < 1) throw ConfigError("min_count must be at least 1");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["role"] = role_name(role);
  m["epochs"] = std::to_string(epochs);
  m["batch_size"] = std::to_string(batch_size);
  m["learning_rate"] = format_double(learning_rate);
  m["dropout"] = format_double(dropout);
  m["embed"] = std::to_string(embed);
  m["hidden"] = std::to_string(hidden);
  m["layers"] = std::to_string(layers);
  m["bidirectional"] = bidirectional ? "true" : "false";
  m["seed"] = std::to_string(seed);
  m["patience"] = std::to_string(patience);
  m["clip_norm"] = format_double(clip_norm);
  m["lowercase"] = rules.lowercase ? "true" : "false";
  m["digits_to_hash"] = rules.digit_to_hash ? "true" : "false";
  m["min_count"] = std::to_string(rules.min_count);
  if (rules.max_src_len) m["max_src_len"] = std::to_string(*rules.max_src_len);
  if (rules.max_tgt_len) m["max_tgt_len"] = std::to_string(*rules.max_tgt_len);
  return m;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + " is not key=value: '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + " has an empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError("config key '" + key + "' given twice; list sweep values with commas");
    }
  }
  return out;
}

std::map<std::string, std::string> read_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config '" + path + "'");
  }
  return parse_config_text(text);
}

std::vector<TrainConfig> expand_config(const std::map<std::string, std::string>& raw) {
  ModelRole role = ModelRole::kDirect;
  if (auto it = raw.find("role"); it != raw.end()) role = parse_role(it->second);
  std::vector<TrainConfig> configs = {default_config(role)};
  for (const auto& [key, value] : raw) {
    const auto values = split_list(value);
    if (values.size() > 1 && !kSweepKeys.contains(key)) {
      throw ConfigError("config key '" + key + "' cannot be swept");
    }
    std::vector<TrainConfig> next;
    for (const TrainConfig& base : configs) {
      for (const auto& v : values) {
        TrainConfig c = base;
        apply(c, key, v);
        next.push_back(std::move(c));
      }
    }
    configs = std::move(next);
  }
  for (const auto& c : configs) c.validate();
  return configs;
}

TrainingData load_training_data(const TrainConfig& config) {
  TrainingData d;
  if (config.train_tgt.empty()) throw ConfigError("config lacks train_tgt");
  const bool has_dev = !config.dev_tgt.empty();
  if (config.role == ModelRole::kLm) {
    auto train = load_text(config.train_tgt, config.rules);
    d.output_vocab = vocab_for(config.tgt_vocab, train, config.rules.min_count);
    d.input_vocab = d.output_vocab;
    for (const auto& t : train) d.lm_train.push_back(encode(t, d.output_vocab, Role::kOutput));
    if (has_dev) {
      for (const auto& t : load_text(config.dev_tgt, config.rules)) {
        d.lm_dev.push_back(encode(t, d.output_vocab, Role::kOutput));
      }
    } else {
      d.lm_dev = d.lm_train;
    }
    if (d.lm_train.empty()) throw DataError("no usable training sequences in " + config.train_tgt);
    return d;
  }
  if (config.train_src.empty()) throw ConfigError("config lacks train_src");
  const ParallelText train = load_parallel(config.train_src, config.train_tgt, config.rules);
  if (train.size() == 0) throw DataError("no usable training pairs in " + config.train_src);
  const Vocabulary src = vocab_for(config.src_vocab, train.source, config.rules.min_count);
  const Vocabulary tgt = vocab_for(config.tgt_vocab, train.target, config.rules.min_count);
  d.input_vocab = config.role == ModelRole::kChannel ? tgt : src;
  d.output_vocab = config.role == ModelRole::kChannel ? src : tgt;
  d.train = orient(train, src, tgt, config.role);
  if (has_dev) {
    if (config.dev_src.empty()) throw ConfigError("dev_tgt given without dev_src");
    d.dev = orient(load_parallel(config.dev_src, config.dev_tgt, config.rules), src, tgt, config.role);
  } else {
    d.dev = d.train;
  }
  return d;
}

double mean_nll(const ModelBundle& bundle, const std::vector<ParallelPair>& pairs,
                const std::vector<TokenSequence>& sequences) {
  const std::size_t n = bundle.ssnt ? pairs.size() : sequences.size();
  if (n == 0) throw DataError("cannot average NLL over an empty set");
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    total += example_nll(bundle, bundle.ssnt ? &pairs[k] : nullptr,
                         bundle.ssnt ? nullptr : &sequences[k]);
  }
  return total / static_cast<double>(n);
}

TrainResult train_model(const TrainConfig& config, const TrainingData& data,
                        const EpochCallback& on_epoch) {
  config.validate();
  Rng rng(config.seed);
  TrainResult result;
  ModelBundle& b = result.bundle;
  b.role = config.role;
  b.input_vocab = data.input_vocab;
  b.output_vocab = data.output_vocab;
  b.config = config.to_map();
  if (config.role == ModelRole::kLm) {
    if (data.lm_train.empty()) throw DataError("LM training needs sequences");
    b.lm = std::make_unique<LanguageModel>(
        LmConfig{data.output_vocab.size(), config.embed, config.hidden, config.layers}, rng);
  } else {
    if (data.train.empty()) throw DataError("training needs pairs");
    b.ssnt = std::make_unique<SsntModel>(
        SsntConfig{data.input_vocab.size(), data.output_vocab.size(), config.embed, config.hidden,
                   config.bidirectional},
        rng);
  }
  ParameterSet& params = b.params();
  Adam adam(params, AdamConfig{config.learning_rate});
  const DropoutSpec drop{config.dropout, &rng, true};

  std::vector<Tensor> best = params.snapshot();
  double best_dev = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs && !result.diverged; ++epoch) {
    std::vector<Batch> batches = b.lm ? make_batches(data.lm_train, config.batch_size, rng, true)
                                      : make_batches(data.train, config.batch_size, rng, true);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      double value = 0.0;
      try {
        Graph g;
        std::vector<NodeId> losses;
        for (std::size_t k = 0; k < batch.size(); ++k) {
          losses.push_back(b.lm ? b.lm->nll(g, batch.target_row(k), drop)
                                : b.ssnt->sequence_nll(g, batch.source_row(k), batch.target_row(k), drop));
        }
        const NodeId loss = g.scale(g.sum(losses), 1.0 / static_cast<double>(batch.size()));
        value = g.scalar_value(loss);
        g.backward(loss);
        clip_gradient_norm(params, config.clip_norm);
      } catch (const NumericError& e) {
        result.diverged = true;
        result.diagnostic = std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(bi + 1) + "; keeping the last good parameters";
        params.zero_gradients();
        break;
      }
      adam.step();
      epoch_loss += value * static_cast<double>(batch.size());
      seen += batch.size();
    }
    if (result.diverged) break;

    EpochRecord rec{epoch, epoch_loss / static_cast<double>(seen), std::numeric_limits<double>::quiet_NaN()};
    try {
      rec.dev_nll = mean_nll(b, data.dev, data.lm_dev);
    } catch (const NumericError&) {
    }
    b.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (!std::isfinite(rec.dev_nll)) {
      result.diverged = true;
      result.diagnostic = "non-finite dev NLL at epoch " + std::to_string(epoch);
      break;
    }
    if (rec.dev_nll < best_dev) {
      best_dev = rec.dev_nll;
      best = params.snapshot();
      b.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  params.restore(best);
  if (b.best_epoch == 0) best_dev = mean_nll(b, data.dev, data.lm_dev);
  result.best_dev_nll = best_dev;
  return result;
}

TrainResult train_sweep(const std::vector<TrainConfig>& configs, const TrainingData& data,
                        const EpochCallback& on_epoch) {
  if (configs.empty()) throw ConfigError("empty sweep");
  TrainResult best;
  bool have = false;
  for (const TrainConfig& c : configs) {
    TrainResult r = train_model(c, data, on_epoch);
    const bool better = (best.diverged && !r.diverged) ||
                        (best.diverged == r.diverged && r.best_dev_nll < best.best_dev_nll);
    if (!have || better) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

}  // namespace ssnt
