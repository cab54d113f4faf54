#include "ssnt/ssnt.h"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <cstdio>
#include <cstring>
#include <new>
#include <string>

#include "ssnt/checkpoint.hpp"
#include "ssnt/decoder.hpp"
#include "ssnt/error.hpp"
#include "ssnt/eval.hpp"
#include "ssnt/trainer.hpp"

struct ssnt_model {
  ssnt::ModelBundle bundle;
  ssnt::PreprocessRules rules;
};

struct ssnt_decoder {
  const ssnt_model* direct = nullptr;
  const ssnt_model* channel = nullptr;
  const ssnt_model* lm = nullptr;
  ssnt::Lambda lambda;
  ssnt::DecodeConfig config;
  std::size_t workers = 1;

  ssnt::DecoderModels models() const {
    return {direct->bundle.ssnt.get(), channel ? channel->bundle.ssnt.get() : nullptr,
            lm ? lm->bundle.lm.get() : nullptr};
  }
};

namespace {

thread_local std::string g_last_error;

ssnt_status fail(ssnt_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

template <typename F>
ssnt_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const ssnt::ConfigError& e) {
    return fail(SSNT_ERR_CONFIG, e.what());
  } catch (const ssnt::DataError& e) {
    return fail(SSNT_ERR_DATA, e.what());
  } catch (const ssnt::IoError& e) {
    return fail(SSNT_ERR_IO, e.what());
  } catch (const ssnt::LoadError& e) {
    return fail(SSNT_ERR_LOAD, e.what());
  } catch (const ssnt::VocabularyMismatch& e) {
    return fail(SSNT_ERR_VOCAB_MISMATCH, e.what());
  } catch (const ssnt::NumericError& e) {
    return fail(SSNT_ERR_NUMERIC, e.what());
  } catch (const ssnt::Error& e) {
    return fail(SSNT_ERR_INTERNAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SSNT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SSNT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SSNT_ERR_INTERNAL, "unknown failure");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ssnt::PreprocessRules rules_from(const std::map<std::string, std::string>& config) {
  ssnt::PreprocessRules r;
  auto flag = [&](const char* key) {
    auto it = config.find(key);
    return it != config.end() && it->second == "true";
  };
  r.lowercase = flag("lowercase");
  r.digit_to_hash = flag("digits_to_hash");
  return r;
}

std::string format_score(double v) {
  if (v == ssnt::kNegInf) return "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (k > 0) out += ' ';
    out += tokens[k];
  }
  return out;
}

void check_role(const ssnt_model* m, ssnt::ModelRole want, const char* what) {
  if (m->bundle.role != want) {
    throw ssnt::ConfigError(std::string(what) + " checkpoint has role '" +
                            ssnt::role_name(m->bundle.role) + "', expected '" +
                            ssnt::role_name(want) + "'");
  }
}

void check_same_vocab(const ssnt::Vocabulary& a, const char* a_name, const ssnt::Vocabulary& b,
                      const char* b_name) {
  if (!(a == b)) {
    throw ssnt::VocabularyMismatch(std::string(a_name) + " vocabulary (" + std::to_string(a.size()) +
                                   " entries) differs from " + b_name + " vocabulary (" +
                                   std::to_string(b.size()) + " entries)");
  }
}

std::vector<ssnt::TokenId> encode_line(const std::string& line, const ssnt_model& m,
                                       const ssnt::Vocabulary& vocab, ssnt::Role role) {
  return ssnt::encode(ssnt::preprocess(line, m.rules), vocab, role).ids;
}

std::vector<std::string> decode_lines(ssnt_decoder& d, const std::vector<std::string>& lines,
                                      std::size_t* truncated) {
  const ssnt_model& direct = *d.direct;
  std::vector<std::vector<ssnt::TokenId>> inputs;
  std::vector<std::size_t> where;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    auto ids = encode_line(lines[k], direct, direct.bundle.input_vocab, ssnt::Role::kInput);
    if (ids.empty()) continue;
    inputs.push_back(std::move(ids));
    where.push_back(k);
  }
  auto results = ssnt::decode_all(inputs, d.models(), d.lambda, d.config, d.workers);
  std::vector<std::string> out(lines.size());
  std::size_t cut = 0;
  for (std::size_t k = 0; k < results.size(); ++k) {
    if (!results[k].terminal) ++cut;
    out[where[k]] = join(ssnt::decode_ids({results[k].tokens, ssnt::Role::kOutput},
                                          direct.bundle.output_vocab));
  }
  if (truncated != nullptr) *truncated = cut;
  return out;
}

void write_lines_or_stdout(const char* path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  if (path == nullptr || *path == '\0') {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
  } else {
    ssnt::write_file_atomic(path, text);
  }
}

bool set(const char* s) { return s != nullptr && *s != '\0'; }

}  // namespace

extern "C" {

const char* ssnt_version(void) { return "1.0.0"; }

const char* ssnt_status_name(ssnt_status status) {
  switch (status) {
    case SSNT_OK: return "ok";
    case SSNT_ERR_ARGUMENT: return "invalid argument";
    case SSNT_ERR_CONFIG: return "configuration error";
    case SSNT_ERR_DATA: return "data error";
    case SSNT_ERR_IO: return "i/o error";
    case SSNT_ERR_LOAD: return "checkpoint load error";
    case SSNT_ERR_VOCAB_MISMATCH: return "vocabulary mismatch";
    case SSNT_ERR_NUMERIC: return "numeric error";
    case SSNT_ERR_DIVERGED: return "training diverged";
    case SSNT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* ssnt_last_error(void) { return g_last_error.c_str(); }

void ssnt_string_free(char* s) { std::free(s); }

void ssnt_train_overrides_init(ssnt_train_overrides* o) {
  if (o == nullptr) return;
  *o = ssnt_train_overrides{nullptr, nullptr, nullptr, nullptr, -1};
}

ssnt_status ssnt_train(ssnt_role role, const char* config_path, const ssnt_train_overrides* overrides,
                       const char* output_path, ssnt_log_fn log, void* user) {
  return guarded([&]() -> ssnt_status {
    if (!set(output_path)) return fail(SSNT_ERR_ARGUMENT, "no output checkpoint path");
    std::map<std::string, std::string> raw;
    if (set(config_path)) raw = ssnt::read_config(config_path);
    const ssnt::ModelRole r = role == SSNT_ROLE_DIRECT    ? ssnt::ModelRole::kDirect
                              : role == SSNT_ROLE_CHANNEL ? ssnt::ModelRole::kChannel
                                                          : ssnt::ModelRole::kLm;
    if (auto it = raw.find("role"); it != raw.end() && ssnt::parse_role(it->second) != r) {
      throw ssnt::ConfigError("config role '" + it->second + "' contradicts requested role '" +
                              ssnt::role_name(r) + "'");
    }
    raw["role"] = ssnt::role_name(r);
    if (overrides != nullptr) {
      if (set(overrides->train_src)) raw["train_src"] = overrides->train_src;
      if (set(overrides->train_tgt)) raw["train_tgt"] = overrides->train_tgt;
      if (set(overrides->dev_src)) raw["dev_src"] = overrides->dev_src;
      if (set(overrides->dev_tgt)) raw["dev_tgt"] = overrides->dev_tgt;
      if (overrides->seed >= 0) raw["seed"] = std::to_string(overrides->seed);
    }
    const auto configs = ssnt::expand_config(raw);
    const auto data = ssnt::load_training_data(configs.front());
    auto say = [&](const std::string& m) {
      if (log != nullptr) log(m.c_str(), user);
    };
    if (data.dev.empty() && data.lm_dev.empty()) say("no usable dev examples");
    if (configs.front().dev_tgt.empty()) say("no dev set given; selecting on training NLL");
    say("training " + ssnt::role_name(r) + " model on " +
        std::to_string(r == ssnt::ModelRole::kLm ? data.lm_train.size() : data.train.size()) +
        " examples, " + std::to_string(configs.size()) + " sweep point(s)");
    std::size_t point = 0;
    ssnt::TrainResult best;
    bool have = false;
    for (const auto& c : configs) {
      ++point;
      auto result = ssnt::train_model(c, data, [&](const ssnt::EpochRecord& e) {
        say("point " + std::to_string(point) + " epoch " + std::to_string(e.epoch) + " train_loss " +
            format_score(e.train_loss) + " dev_nll " + format_score(e.dev_nll));
      });
      if (result.diverged) say("point " + std::to_string(point) + ": " + result.diagnostic);
      const bool better = (best.diverged && !result.diverged) ||
                          (best.diverged == result.diverged && result.best_dev_nll < best.best_dev_nll);
      if (!have || better) {
        best = std::move(result);
        have = true;
      }
    }
    ssnt::save_checkpoint(best.bundle, output_path);
    say("best dev_nll " + format_score(best.best_dev_nll) + " at epoch " +
        std::to_string(best.bundle.best_epoch) + "; wrote " + output_path);
    if (best.diverged) return fail(SSNT_ERR_DIVERGED, best.diagnostic);
    return SSNT_OK;
  });
}

ssnt_status ssnt_model_load(const char* path, ssnt_model** out) {
  return guarded([&]() -> ssnt_status {
    if (out == nullptr || !set(path)) return fail(SSNT_ERR_ARGUMENT, "model path and output required");
    *out = nullptr;
    auto m = std::make_unique<ssnt_model>();
    m->bundle = ssnt::load_checkpoint(path);
    m->rules = rules_from(m->bundle.config);
    *out = m.release();
    return SSNT_OK;
  });
}

void ssnt_model_free(ssnt_model* model) { delete model; }

ssnt_status ssnt_model_role(const ssnt_model* model, ssnt_role* out) {
  if (model == nullptr || out == nullptr) return fail(SSNT_ERR_ARGUMENT, "null argument");
  switch (model->bundle.role) {
    case ssnt::ModelRole::kDirect: *out = SSNT_ROLE_DIRECT; break;
    case ssnt::ModelRole::kChannel: *out = SSNT_ROLE_CHANNEL; break;
    case ssnt::ModelRole::kLm: *out = SSNT_ROLE_LM; break;
  }
  return SSNT_OK;
}

ssnt_status ssnt_model_vocab_sizes(const ssnt_model* model, size_t* input_size, size_t* output_size) {
  if (model == nullptr) return fail(SSNT_ERR_ARGUMENT, "null model");
  if (input_size != nullptr) *input_size = model->bundle.input_vocab.size();
  if (output_size != nullptr) *output_size = model->bundle.output_vocab.size();
  return SSNT_OK;
}

ssnt_status ssnt_score_file(const ssnt_model* model, const char* src_path, const char* tgt_path,
                            const char* out_path) {
  return guarded([&]() -> ssnt_status {
    if (model == nullptr || !set(src_path)) return fail(SSNT_ERR_ARGUMENT, "model and source required");
    const ssnt::ModelBundle& b = model->bundle;
    const auto src = ssnt::read_lines(src_path);
    std::vector<std::string> out;
    if (b.role == ssnt::ModelRole::kLm) {
      for (const auto& line : src) {
        auto y = encode_line(line, *model, b.output_vocab, ssnt::Role::kOutput);
        out.push_back(format_score(b.lm->sequence_log_prob(y)));
      }
    } else {
      if (!set(tgt_path)) return fail(SSNT_ERR_ARGUMENT, "transduction scoring needs --tgt");
      const auto tgt = ssnt::read_lines(tgt_path);
      if (src.size() != tgt.size()) {
        throw ssnt::DataError("source has " + std::to_string(src.size()) + " lines, target has " +
                              std::to_string(tgt.size()));
      }
      const bool channel = b.role == ssnt::ModelRole::kChannel;
      for (std::size_t k = 0; k < src.size(); ++k) {
        const std::string& in = channel ? tgt[k] : src[k];
        const std::string& outside = channel ? src[k] : tgt[k];
        auto x = encode_line(in, *model, b.input_vocab, ssnt::Role::kInput);
        auto y = encode_line(outside, *model, b.output_vocab, ssnt::Role::kOutput);
        if (x.empty()) {
          throw ssnt::DataError("line " + std::to_string(k + 1) + " has an empty model input");
        }
        out.push_back(format_score(b.ssnt->forward_chart(x, y).corner()));
      }
    }
    write_lines_or_stdout(out_path, out);
    return SSNT_OK;
  });
}

void ssnt_decode_options_init(ssnt_decode_options* o) {
  if (o == nullptr) return;
  const ssnt::Lambda l;
  const ssnt::DecodeConfig c;
  *o = ssnt_decode_options{{l.direct, l.channel, l.lm, l.length}, c.k1, c.k2, c.jmax, 1};
}

ssnt_status ssnt_decoder_create(const ssnt_model* direct, const ssnt_model* channel,
                                const ssnt_model* lm, const ssnt_decode_options* options,
                                ssnt_decoder** out) {
  return guarded([&]() -> ssnt_status {
    if (direct == nullptr || out == nullptr) return fail(SSNT_ERR_ARGUMENT, "a direct model is required");
    *out = nullptr;
    check_role(direct, ssnt::ModelRole::kDirect, "direct");
    if (channel != nullptr) {
      check_role(channel, ssnt::ModelRole::kChannel, "channel");
      check_same_vocab(channel->bundle.input_vocab, "channel input", direct->bundle.output_vocab,
                       "direct output");
      check_same_vocab(channel->bundle.output_vocab, "channel output", direct->bundle.input_vocab,
                       "direct input");
    }
    if (lm != nullptr) {
      check_role(lm, ssnt::ModelRole::kLm, "lm");
      check_same_vocab(lm->bundle.output_vocab, "LM", direct->bundle.output_vocab, "direct output");
    }
    ssnt_decode_options o;
    ssnt_decode_options_init(&o);
    if (options != nullptr) o = *options;
    auto d = std::make_unique<ssnt_decoder>();
    d->direct = direct;
    d->channel = channel;
    d->lm = lm;
    d->lambda = {o.lambda[0], o.lambda[1], o.lambda[2], o.lambda[3]};
    for (double v : o.lambda) {
      if (!std::isfinite(v)) throw ssnt::ConfigError("lambda components must be finite");
    }
    d->config = {o.k1, o.k2, o.jmax};
    d->config.validate();
    d->workers = o.workers == 0 ? 1 : o.workers;
    *out = d.release();
    return SSNT_OK;
  });
}

void ssnt_decoder_free(ssnt_decoder* decoder) { delete decoder; }

ssnt_status ssnt_decoder_set_lambda(ssnt_decoder* decoder, const double lambda[4]) {
  if (decoder == nullptr || lambda == nullptr) return fail(SSNT_ERR_ARGUMENT, "null argument");
  for (int k = 0; k < 4; ++k) {
    if (!std::isfinite(lambda[k])) return fail(SSNT_ERR_CONFIG, "lambda components must be finite");
  }
  decoder->lambda = {lambda[0], lambda[1], lambda[2], lambda[3]};
  return SSNT_OK;
}

ssnt_status ssnt_decode_line(ssnt_decoder* decoder, const char* line, char** out) {
  return guarded([&]() -> ssnt_status {
    if (decoder == nullptr || line == nullptr || out == nullptr) {
      return fail(SSNT_ERR_ARGUMENT, "null argument");
    }
    *out = copy_string(decode_lines(*decoder, {line}, nullptr).front());
    return SSNT_OK;
  });
}

ssnt_status ssnt_decode_file(ssnt_decoder* decoder, const char* input_path, const char* output_path,
                             size_t* truncated) {
  return guarded([&]() -> ssnt_status {
    if (decoder == nullptr || !set(input_path) || !set(output_path)) {
      return fail(SSNT_ERR_ARGUMENT, "decoder, input and output paths are required");
    }
    write_lines_or_stdout(output_path, decode_lines(*decoder, ssnt::read_lines(input_path), truncated));
    return SSNT_OK;
  });
}

ssnt_status ssnt_grid_search(ssnt_decoder* decoder, const char* grid_path, const char* dev_src_path,
                             const char* dev_ref_path, const char* metric, double best_lambda[4],
                             char** report) {
  return guarded([&]() -> ssnt_status {
    if (decoder == nullptr || !set(grid_path) || !set(dev_src_path) || !set(dev_ref_path) ||
        best_lambda == nullptr) {
      return fail(SSNT_ERR_ARGUMENT, "decoder, grid, dev source and dev reference are required");
    }
    ssnt::DevMetric dev_metric = ssnt::DevMetric::kExactMatch;
    if (set(metric)) {
      const ssnt::Metric m = ssnt::parse_metric(metric);
      if (m == ssnt::Metric::kRougeL) dev_metric = ssnt::DevMetric::kRougeL;
      else if (m != ssnt::Metric::kExact) throw ssnt::ConfigError("grid search uses exact or rougeL");
    }
    std::vector<ssnt::Lambda> grid;
    for (std::string line : ssnt::read_lines(grid_path)) {
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      grid.push_back(ssnt::parse_lambda(line));
    }
    const ssnt_model& direct = *decoder->direct;
    const auto src = ssnt::read_lines(dev_src_path);
    const auto ref = ssnt::read_lines(dev_ref_path);
    if (src.size() != ref.size()) {
      throw ssnt::DataError("dev source has " + std::to_string(src.size()) +
                            " lines, dev reference has " + std::to_string(ref.size()));
    }
    std::vector<std::vector<ssnt::TokenId>> inputs;
    std::vector<std::vector<std::string>> refs;
    for (std::size_t k = 0; k < src.size(); ++k) {
      auto ids = encode_line(src[k], direct, direct.bundle.input_vocab, ssnt::Role::kInput);
      if (ids.empty()) continue;
      inputs.push_back(std::move(ids));
      refs.push_back(ssnt::preprocess(ref[k], direct.rules));
    }
    auto result = ssnt::grid_search_lambda(inputs, refs, direct.bundle.output_vocab, decoder->models(),
                                           grid, decoder->config, dev_metric, decoder->workers);
    best_lambda[0] = result.best.direct;
    best_lambda[1] = result.best.channel;
    best_lambda[2] = result.best.lm;
    best_lambda[3] = result.best.length;
    if (report != nullptr) {
      std::string text;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        text += ssnt::format_lambda(grid[g]) + "\t" + format_score(result.scores[g]) + "\n";
      }
      *report = copy_string(text);
    }
    return SSNT_OK;
  });
}

ssnt_status ssnt_eval_files(const char* metric, const char* pred_path, const char* ref_path,
                            char** report) {
  return guarded([&]() -> ssnt_status {
    if (!set(metric) || !set(pred_path) || !set(ref_path) || report == nullptr) {
      return fail(SSNT_ERR_ARGUMENT, "metric, prediction and reference paths are required");
    }
    *report = copy_string(ssnt::score_files(ssnt::parse_metric(metric), pred_path, ref_path).to_tsv());
    return SSNT_OK;
  });
}

}  // extern "C"
