#include <cstdio>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssnt/ssnt.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

struct ModelDeleter {
  void operator()(ssnt_model* m) const { ssnt_model_free(m); }
};
struct DecoderDeleter {
  void operator()(ssnt_decoder* d) const { ssnt_decoder_free(d); }
};
struct StringDeleter {
  void operator()(char* s) const { ssnt_string_free(s); }
};
using ModelPtr = std::unique_ptr<ssnt_model, ModelDeleter>;
using DecoderPtr = std::unique_ptr<ssnt_decoder, DecoderDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

int exit_for(ssnt_status s) {
  switch (s) {
    case SSNT_OK: return kExitOk;
    case SSNT_ERR_NUMERIC:
    case SSNT_ERR_DIVERGED:
    case SSNT_ERR_INTERNAL: return kExitInternal;
    default: return kExitUser;
  }
}

int report(ssnt_status s) {
  if (s != SSNT_OK) std::fprintf(stderr, "error: %s: %s\n", ssnt_status_name(s), ssnt_last_error());
  return exit_for(s);
}

void log_line(const char* message, void*) { std::fprintf(stderr, "%s\n", message); }

bool parse_lambda(const std::string& text, double out[4]) {
  std::stringstream ss(text);
  std::string part;
  int n = 0;
  while (std::getline(ss, part, ',')) {
    if (n == 4) return false;
    try {
      std::size_t used = 0;
      out[n] = std::stod(part, &used);
      if (used != part.size()) return false;
    } catch (const std::exception&) {
      return false;
    }
    ++n;
  }
  return n == 4;
}

struct Models {
  ModelPtr direct, channel, lm;
};

ssnt_status load_models(const std::string& direct, const std::string& channel, const std::string& lm,
                        Models& out) {
  auto load = [](const std::string& path, ModelPtr& into) {
    if (path.empty()) return SSNT_OK;
    ssnt_model* m = nullptr;
    ssnt_status s = ssnt_model_load(path.c_str(), &m);
    into.reset(m);
    return s;
  };
  ssnt_status s = load(direct, out.direct);
  if (s == SSNT_OK) s = load(channel, out.channel);
  if (s == SSNT_OK) s = load(lm, out.lm);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segment to segment neural transduction with noisy channel decoding", "ssnt"};
  app.require_subcommand(1);
  app.fallthrough();
  std::int64_t seed = 42;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a direct, channel or language model");
  std::string role, config, src, tgt, text, dev_src, dev_tgt, dev_text, out;
  train->add_option("--role", role, "direct | channel | lm")
      ->required()
      ->check(CLI::IsMember({"direct", "channel", "lm"}));
  train->add_option("--config", config, "key=value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--src", src, "Training inputs x, one per line");
  train->add_option("--tgt", tgt, "Training outputs y, one per line");
  train->add_option("--text", text, "LM training text");
  train->add_option("--dev-src", dev_src, "Dev inputs x");
  train->add_option("--dev-tgt", dev_tgt, "Dev outputs y");
  train->add_option("--dev-text", dev_text, "LM dev text");
  train->add_option("--out", out, "Checkpoint to write")->required();

  // decode
  auto* decode = app.add_subcommand("decode", "Decode an input file");
  std::string input, direct, channel, lm, lambda_text = "1,1,1,0";
  std::size_t k1 = 20, k2 = 10, jmax = 0, workers = 1;
  decode->add_option("--input", input, "Inputs, one per line")->required()->check(CLI::ExistingFile);
  decode->add_option("--direct", direct, "Direct model checkpoint")->required()->check(CLI::ExistingFile);
  decode->add_option("--channel", channel, "Channel model checkpoint")->check(CLI::ExistingFile);
  decode->add_option("--lm", lm, "Language model checkpoint")->check(CLI::ExistingFile);
  decode->add_option("--lambda", lambda_text, "direct,channel,lm,length weights")->capture_default_str();
  decode->add_option("--k1", k1, "Proposals per cell")->capture_default_str()->check(CLI::PositiveNumber);
  decode->add_option("--k2", k2, "Beam per cell")->capture_default_str()->check(CLI::PositiveNumber);
  decode->add_option("--jmax", jmax, "Maximum output length (0: min(2|x|+5, 64))");
  decode->add_option("--workers", workers, "Decoding threads")->capture_default_str()->check(CLI::PositiveNumber);
  decode->add_option("--out", out, "Output file")->required();

  // score
  auto* score = app.add_subcommand("score", "Print per-line log-probabilities");
  std::string mode, ckpt, score_out;
  score->add_option("--mode", mode, "direct | channel | lm")
      ->required()
      ->check(CLI::IsMember({"direct", "channel", "lm"}));
  score->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  score->add_option("--src", src, "Inputs x (LM: sentences)")->required()->check(CLI::ExistingFile);
  score->add_option("--tgt", tgt, "Outputs y")->check(CLI::ExistingFile);
  score->add_option("--out", score_out, "Write scores here instead of stdout");

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  std::string metric, pred, ref;
  eval->add_option("--metric", metric, "exact | rouge1 | rouge2 | rougeL")
      ->required()
      ->check(CLI::IsMember({"exact", "rouge1", "rouge2", "rougeL"}));
  eval->add_option("--pred", pred, "Predictions")->required()->check(CLI::ExistingFile);
  eval->add_option("--ref", ref, "References")->required()->check(CLI::ExistingFile);

  // grid-search
  auto* grid = app.add_subcommand("grid-search", "Pick decoding weights on a dev set");
  std::string grid_path, dev_ref, grid_metric = "exact", grid_out;
  grid->add_option("--grid", grid_path, "One l1,l2,l3,l4 per line")->required()->check(CLI::ExistingFile);
  grid->add_option("--dev-src", dev_src, "Dev inputs")->required()->check(CLI::ExistingFile);
  grid->add_option("--dev-ref", dev_ref, "Dev references")->required()->check(CLI::ExistingFile);
  grid->add_option("--direct", direct, "Direct model checkpoint")->required()->check(CLI::ExistingFile);
  grid->add_option("--channel", channel, "Channel model checkpoint")->check(CLI::ExistingFile);
  grid->add_option("--lm", lm, "Language model checkpoint")->check(CLI::ExistingFile);
  grid->add_option("--metric", grid_metric, "exact | rougeL")
      ->capture_default_str()
      ->check(CLI::IsMember({"exact", "rougeL"}));
  grid->add_option("--k1", k1, "Proposals per cell")->capture_default_str()->check(CLI::PositiveNumber);
  grid->add_option("--k2", k2, "Beam per cell")->capture_default_str()->check(CLI::PositiveNumber);
  grid->add_option("--jmax", jmax, "Maximum output length (0: min(2|x|+5, 64))");
  grid->add_option("--workers", workers, "Decoding threads")->capture_default_str()->check(CLI::PositiveNumber);
  grid->add_option("--out", grid_out, "Also write the best lambda here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::printf("%s", app.help().c_str());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::printf("%s", app.help("", CLI::AppFormatMode::All).c_str());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n\n", e.what());
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::fprintf(stderr, "%s", sub->help().c_str());
    return kExitUser;
  }

  if (*train) {
    const bool is_lm = role == "lm";
    if (is_lm && (!src.empty() || !tgt.empty())) {
      std::fprintf(stderr, "error: --role lm takes --text, not --src/--tgt\n");
      return kExitUser;
    }
    if (!is_lm && !text.empty()) {
      std::fprintf(stderr, "error: --text is for --role lm; use --src and --tgt\n");
      return kExitUser;
    }
    ssnt_train_overrides o;
    ssnt_train_overrides_init(&o);
    o.train_src = src.c_str();
    o.train_tgt = is_lm ? text.c_str() : tgt.c_str();
    o.dev_src = dev_src.c_str();
    o.dev_tgt = is_lm ? dev_text.c_str() : dev_tgt.c_str();
    o.seed = seed;
    const ssnt_role r = role == "direct" ? SSNT_ROLE_DIRECT : role == "channel" ? SSNT_ROLE_CHANNEL : SSNT_ROLE_LM;
    return report(ssnt_train(r, config.c_str(), &o, out.c_str(), log_line, nullptr));
  }

  if (*decode || *grid) {
    ssnt_decode_options opts;
    ssnt_decode_options_init(&opts);
    if (*decode && !parse_lambda(lambda_text, opts.lambda)) {
      std::fprintf(stderr, "error: --lambda needs four comma-separated numbers, got '%s'\n",
                   lambda_text.c_str());
      return kExitUser;
    }
    opts.k1 = k1;
    opts.k2 = k2;
    opts.jmax = jmax;
    opts.workers = workers;
    Models models;
    if (ssnt_status s = load_models(direct, channel, lm, models); s != SSNT_OK) return report(s);
    ssnt_decoder* raw = nullptr;
    if (ssnt_status s = ssnt_decoder_create(models.direct.get(), models.channel.get(), models.lm.get(),
                                            &opts, &raw);
        s != SSNT_OK) {
      return report(s);
    }
    DecoderPtr dec(raw);
    if (*decode) {
      std::size_t truncated = 0;
      ssnt_status s = ssnt_decode_file(dec.get(), input.c_str(), out.c_str(), &truncated);
      if (s == SSNT_OK && truncated > 0) {
        std::fprintf(stderr, "warning: %zu input(s) reached the length limit without EOS\n", truncated);
      }
      return report(s);
    }
    double best[4];
    char* text_report = nullptr;
    ssnt_status s = ssnt_grid_search(dec.get(), grid_path.c_str(), dev_src.c_str(), dev_ref.c_str(),
                                     grid_metric.c_str(), best, &text_report);
    StringPtr owned(text_report);
    if (s != SSNT_OK) return report(s);
    std::fprintf(stderr, "%s", owned.get());
    char line[256];
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", best[0], best[1], best[2], best[3]);
    std::fputs(line, stdout);
    if (!grid_out.empty()) {
      std::FILE* f = std::fopen((grid_out + ".tmp").c_str(), "wb");
      if (f == nullptr || std::fputs(line, f) < 0 || std::fclose(f) != 0 ||
          std::rename((grid_out + ".tmp").c_str(), grid_out.c_str()) != 0) {
        std::fprintf(stderr, "error: cannot write '%s'\n", grid_out.c_str());
        return kExitUser;
      }
    }
    return kExitOk;
  }

  if (*score) {
    ModelPtr model;
    ssnt_model* raw = nullptr;
    if (ssnt_status s = ssnt_model_load(ckpt.c_str(), &raw); s != SSNT_OK) return report(s);
    model.reset(raw);
    ssnt_role r;
    ssnt_model_role(model.get(), &r);
    const ssnt_role want = mode == "direct" ? SSNT_ROLE_DIRECT : mode == "channel" ? SSNT_ROLE_CHANNEL : SSNT_ROLE_LM;
    if (r != want) {
      std::fprintf(stderr, "error: checkpoint '%s' does not hold a %s model\n", ckpt.c_str(), mode.c_str());
      return kExitUser;
    }
    if (want != SSNT_ROLE_LM && tgt.empty()) {
      std::fprintf(stderr, "error: --tgt is required for --mode %s\n", mode.c_str());
      return kExitUser;
    }
    return report(ssnt_score_file(model.get(), src.c_str(), tgt.empty() ? nullptr : tgt.c_str(),
                                  score_out.empty() ? nullptr : score_out.c_str()));
  }

  if (*eval) {
    char* text_report = nullptr;
    ssnt_status s = ssnt_eval_files(metric.c_str(), pred.c_str(), ref.c_str(), &text_report);
    StringPtr owned(text_report);
    if (s != SSNT_OK) return report(s);
    std::fputs(owned.get(), stdout);
    return kExitOk;
  }
  return kExitUser;
}
