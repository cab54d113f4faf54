#include "ssnt/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "ssnt/error.hpp"
#include "ssnt/eval.hpp"

namespace ssnt {

// Per-hypothesis caches, filled on first use. The direct decoder state and
// LM state are those after consuming `token`; the channel column is the one
// after reading it.
struct HypothesisState {
  std::shared_ptr<HypothesisState> parent;
  TokenId token = kStart;
  std::size_t position = 1;
  std::optional<LstmState> decoder;
  std::optional<LmState> lm;
  ChannelScorer::ColumnPtr channel;
  std::map<TokenId, ChannelScorer::ColumnPtr> channel_children;
};

namespace {

const LstmState& decoder_state(const SsntModel& model, HypothesisState& h) {
  if (!h.decoder) {
    if (!h.parent) throw InvariantError("root hypothesis lacks a decoder state");
    h.decoder = model.decoder_step(decoder_state(model, *h.parent), h.token);
  }
  return *h.decoder;
}

const LmState& lm_state(const LanguageModel& lm, HypothesisState& h) {
  if (!h.lm) {
    if (!h.parent) throw InvariantError("root hypothesis lacks an LM state");
    h.lm = lm.advance(lm_state(lm, *h.parent), h.token);
  }
  return *h.lm;
}

ChannelScorer::ColumnPtr channel_child(const ChannelScorer& scorer, HypothesisState& h, TokenId y) {
  auto it = h.channel_children.find(y);
  if (it != h.channel_children.end()) return it->second;
  auto col = scorer.extend(h.channel, y);
  h.channel_children.emplace(y, col);
  return col;
}

struct Candidate {
  double direct = kNegInf;
  double score = kNegInf;
  double channel = 0.0;
  double lm = 0.0;
  TokenId token = kPad;
  std::size_t pred_position = 0;
  std::size_t pred_slot = 0;
  const BeamEntry* pred = nullptr;
  ChannelScorer::ColumnPtr channel_column;
};

bool tie_break(const Candidate& a, const Candidate& b) {
  if (a.token != b.token) return a.token < b.token;
  if (a.pred_position != b.pred_position) return a.pred_position < b.pred_position;
  return a.pred_slot < b.pred_slot;
}

bool better_direct(const Candidate& a, const Candidate& b) {
  if (a.direct != b.direct) return a.direct > b.direct;
  return tie_break(a, b);
}

bool better_combined(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return tie_break(a, b);
}

void keep_top(std::vector<Candidate>& c, std::size_t k,
              bool (*better)(const Candidate&, const Candidate&)) {
  const std::size_t keep = std::min(k, c.size());
  std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(keep), c.end(), better);
  c.resize(keep);
}

std::vector<TokenId> candidate_tokens(std::size_t vocab) {
  std::vector<TokenId> out;
  for (std::size_t y = 0; y < vocab; ++y) {
    const auto t = static_cast<TokenId>(y);
    if (t != kPad && t != kStart) out.push_back(t);
  }
  return out;
}

void check_vocabularies(const DecoderModels& m) {
  if (m.direct == nullptr) throw ContractError("decoding needs a direct model");
  const SsntConfig& d = m.direct->config();
  if (d.bidirectional && m.channel != nullptr && m.channel->config().bidirectional) {
    throw ConfigError("the channel model must use a unidirectional encoder");
  }
  if (m.channel != nullptr) {
    const SsntConfig& c = m.channel->config();
    if (c.bidirectional) throw ConfigError("the channel model must use a unidirectional encoder");
    if (c.input_vocab != d.output_vocab) {
      throw VocabularyMismatch("channel input vocabulary has " + std::to_string(c.input_vocab) +
                               " entries, direct output vocabulary has " +
                               std::to_string(d.output_vocab));
    }
    if (c.output_vocab != d.input_vocab) {
      throw VocabularyMismatch("channel output vocabulary has " + std::to_string(c.output_vocab) +
                               " entries, direct input vocabulary has " +
                               std::to_string(d.input_vocab));
    }
  }
  if (m.lm != nullptr && m.lm->vocab_size() != d.output_vocab) {
    throw VocabularyMismatch("LM vocabulary has " + std::to_string(m.lm->vocab_size()) +
                             " entries, direct output vocabulary has " +
                             std::to_string(d.output_vocab));
  }
}

void check_input(std::span<const TokenId> x, const SsntModel& direct) {
  if (x.empty()) throw DataError("cannot decode an empty input");
  for (TokenId t : x) {
    if (t < 0 || static_cast<std::size_t>(t) >= direct.config().input_vocab) {
      throw DataError("input token id " + std::to_string(t) + " outside vocabulary of size " +
                      std::to_string(direct.config().input_vocab));
    }
  }
}

// Best entry at i = I: terminal entries first, then by score, smaller j,
// smaller slot.
void select_final(DecodeResult& r) {
  const BeamChart& chart = r.chart;
  const std::size_t I = chart.input_length();
  for (int pass = 0; pass < 2; ++pass) {
    const bool want_terminal = pass == 0;
    bool found = false;
    double best = kNegInf;
    std::size_t best_j = 0, best_slot = 0;
    for (std::size_t j = 1; j <= chart.jmax(); ++j) {
      const auto& cell = chart.cell(I, j);
      for (std::size_t s = 0; s < cell.size(); ++s) {
        if (cell[s].terminal != want_terminal) continue;
        if (!found || cell[s].score > best) {
          found = true;
          best = cell[s].score;
          best_j = j;
          best_slot = s;
        }
      }
    }
    if (!found) continue;
    r.terminal = want_terminal;
    r.score = best;
    r.end_column = best_j;
    r.end_slot = best_slot;
    r.tokens = backtrace(chart, I, best_j, best_slot);
    if (!r.tokens.empty() && r.tokens.back() == kEos) r.tokens.pop_back();
    return;
  }
}

}  // namespace

Lambda parse_lambda(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (part.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("bad lambda component '" + part + "' in '" + text + "'");
    }
  }
  if (v.size() != 4) throw ConfigError("lambda needs four comma-separated values: '" + text + "'");
  for (double x : v) {
    if (!std::isfinite(x)) throw ConfigError("lambda components must be finite: '" + text + "'");
  }
  return {v[0], v[1], v[2], v[3]};
}

std::string format_lambda(const Lambda& l) {
  std::ostringstream os;
  os.precision(17);
  os << l.direct << ',' << l.channel << ',' << l.lm << ',' << l.length;
  return os.str();
}

void DecodeConfig::validate() const {
  if (k1 < 1) throw ConfigError("K1 must be at least 1");
  if (k2 < 1) throw ConfigError("K2 must be at least 1");
  if (k2 > k1) throw ConfigError("K2 must not exceed K1");
}

std::size_t default_jmax(std::size_t input_length) {
  return std::min<std::size_t>(2 * input_length + 5, 64);
}

double combined_objective(double direct_lp, double channel_lp, double lm_lp, std::size_t length,
                          const Lambda& lambda) {
  double total = 0.0;
  const double terms[3][2] = {
      {lambda.direct, direct_lp}, {lambda.channel, channel_lp}, {lambda.lm, lm_lp}};
  for (const auto& [w, v] : terms) {
    if (w == 0.0) continue;
    if (v == kNegInf) return kNegInf;
    total += w * v;
  }
  if (lambda.length != 0.0) total += lambda.length * static_cast<double>(length);
  return total;
}

Lambda effective_lambda(const DecoderModels& models, Lambda lambda) {
  if (models.channel == nullptr) lambda.channel = 0.0;
  if (models.lm == nullptr) lambda.lm = 0.0;
  return lambda;
}

BeamChart::BeamChart(std::size_t input_length, std::size_t jmax)
    : input_length_(input_length), jmax_(jmax), cells_((input_length + 1) * (jmax + 1)) {}

std::vector<BeamEntry>& BeamChart::cell(std::size_t i, std::size_t j) {
  if (i < 1 || i > input_length_ || j < 1 || j > jmax_) {
    throw InvariantError("beam cell (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") outside the chart");
  }
  return cells_[i * (jmax_ + 1) + j];
}

const std::vector<BeamEntry>& BeamChart::cell(std::size_t i, std::size_t j) const {
  return const_cast<BeamChart*>(this)->cell(i, j);
}

namespace {

template <typename Visit>
void walk_back(const BeamChart& chart, std::size_t i, std::size_t j, std::size_t slot, Visit visit) {
  while (true) {
    const auto& cell = chart.cell(i, j);
    if (slot >= cell.size()) throw InvariantError("backpointer to an empty beam slot");
    const BeamEntry& e = cell[slot];
    visit(e, i);
    if (j == 1) {
      if (e.bp_position != 0) throw InvariantError("column 1 entry with a backpointer");
      return;
    }
    if (e.bp_position < 1 || e.bp_position > i) throw InvariantError("backpointer breaks monotonicity");
    i = e.bp_position;
    slot = e.bp_slot;
    --j;
  }
}

}  // namespace

std::vector<TokenId> backtrace(const BeamChart& chart, std::size_t i, std::size_t j,
                               std::size_t slot) {
  std::vector<TokenId> out;
  walk_back(chart, i, j, slot, [&](const BeamEntry& e, std::size_t) { out.push_back(e.token); });
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> backtrace_alignment(const BeamChart& chart, std::size_t i, std::size_t j,
                                             std::size_t slot) {
  std::vector<std::size_t> out;
  walk_back(chart, i, j, slot, [&](const BeamEntry&, std::size_t pos) { out.push_back(pos); });
  std::reverse(out.begin(), out.end());
  return out;
}

DecodeResult noisy_channel_decode(std::span<const TokenId> x, const DecoderModels& models,
                                  const Lambda& lambda, const DecodeConfig& config) {
  config.validate();
  check_vocabularies(models);
  const SsntModel& direct = *models.direct;
  check_input(x, direct);
  const Lambda lam = effective_lambda(models, lambda);
  const bool use_channel = lam.channel != 0.0;
  const bool use_lm = lam.lm != 0.0;

  const std::size_t I = x.size();
  const std::size_t J = config.jmax == 0 ? default_jmax(I) : config.jmax;
  DecodeResult r;
  r.chart = BeamChart(I, J);

  const InputEncoding input = direct.encode_and_project(x);
  std::optional<ChannelScorer> scorer;
  if (use_channel) scorer.emplace(*models.channel, x);
  const std::vector<TokenId> tokens = candidate_tokens(direct.config().output_vocab);

  auto root_state = std::make_shared<HypothesisState>();
  root_state->decoder = direct.decoder_start();
  if (use_lm) root_state->lm = models.lm->start();
  if (use_channel) root_state->channel = scorer->root();
  BeamEntry root;
  root.state = root_state;

  for (std::size_t j = 1; j <= J; ++j) {
    struct Pred {
      const BeamEntry* entry;
      std::size_t position;  // 0 for the root
      std::size_t slot;
      ExtensionTable table;
    };
    std::vector<Pred> preds;
    auto expand = [&](const BeamEntry& e, std::size_t position, std::size_t slot) {
      HypothesisState& st = *e.state;
      OutputProjection sp = direct.project_output(decoder_state(direct, st).h);
      preds.push_back({&e, position, slot, extension_table(direct, input, sp, st.position)});
      ++r.stats.expansions;
    };
    if (j == 1) {
      expand(root, 0, 0);
    } else {
      for (std::size_t k = 1; k <= I; ++k) {
        const auto& cell = r.chart.cell(k, j - 1);
        for (std::size_t s = 0; s < cell.size(); ++s) {
          if (!cell[s].terminal) expand(cell[s], k, s);
        }
      }
    }
    if (preds.empty()) break;

    for (std::size_t i = 1; i <= I; ++i) {
      std::vector<Candidate> cands;
      for (const Pred& p : preds) {
        const std::size_t from = p.entry->state->position;
        if (from > i) continue;
        const double base = p.entry->direct_lp + p.table.log_transition[i];
        for (TokenId y : tokens) {
          if (y == kEos && i < I) continue;
          ++r.stats.direct_scores;
          Candidate c;
          c.direct = base + p.table.log_word[i][static_cast<std::size_t>(y)];
          if (c.direct < kLogFloor) c.direct = kNegInf;
          c.token = y;
          c.pred_position = p.position;
          c.pred_slot = p.slot;
          c.pred = p.entry;
          if (c.direct != kNegInf || lam.direct == 0.0) cands.push_back(std::move(c));
        }
      }
      keep_top(cands, config.k1, better_direct);

      for (Candidate& c : cands) {
        ++r.stats.rescored;
        HypothesisState& ps = *c.pred->state;
        if (use_channel) {
          if (c.token == kEos) {
            c.channel = scorer->exact_score(ps.channel);
          } else {
            c.channel_column = channel_child(*scorer, ps, c.token);
            c.channel = scorer->prefix_score(c.channel_column, i);
          }
        }
        if (use_lm) {
          c.lm = c.pred->lm_lp +
                 lm_state(*models.lm, ps).next_log_probs[static_cast<std::size_t>(c.token)];
        }
        c.score = combined_objective(c.direct, c.channel, c.lm, j, lam);
      }
      std::erase_if(cands, [](const Candidate& c) { return c.score == kNegInf; });
      keep_top(cands, config.k2, better_combined);

      auto& cell = r.chart.cell(i, j);
      for (Candidate& c : cands) {
        BeamEntry e;
        e.score = c.score;
        e.direct_lp = c.direct;
        e.channel_lp = c.channel;
        e.lm_lp = c.lm;
        e.token = c.token;
        e.bp_position = c.pred_position;
        e.bp_slot = c.pred_slot;
        e.terminal = c.token == kEos;
        auto st = std::make_shared<HypothesisState>();
        st->parent = c.pred->state;
        st->token = c.token;
        st->position = i;
        st->channel = c.channel_column;
        e.state = std::move(st);
        cell.push_back(std::move(e));
      }
    }
  }
  select_final(r);
  return r;
}

DecodeResult direct_beam_search(std::span<const TokenId> x, const SsntModel& direct,
                                std::size_t beam, std::size_t jmax) {
  if (beam < 1) throw ConfigError("beam size must be at least 1");
  check_input(x, direct);
  const std::size_t I = x.size();
  const std::size_t J = jmax == 0 ? default_jmax(I) : jmax;
  DecodeResult r;
  r.chart = BeamChart(I, J);
  const InputEncoding input = direct.encode_and_project(x);
  const std::vector<TokenId> tokens = candidate_tokens(direct.config().output_vocab);

  struct Item {
    double score;
    TokenId token;
    std::size_t pred_position;
    std::size_t pred_slot;
    std::shared_ptr<HypothesisState> pred;
  };
  auto better = [](const Item& a, const Item& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.token != b.token) return a.token < b.token;
    if (a.pred_position != b.pred_position) return a.pred_position < b.pred_position;
    return a.pred_slot < b.pred_slot;
  };

  auto root = std::make_shared<HypothesisState>();
  root->decoder = direct.decoder_start();

  for (std::size_t j = 1; j <= J; ++j) {
    struct Source {
      std::shared_ptr<HypothesisState> state;
      double score;
      std::size_t position;
      std::size_t slot;
      ExtensionTable table;
    };
    std::vector<Source> sources;
    auto add_source = [&](const std::shared_ptr<HypothesisState>& st, double score,
                          std::size_t position, std::size_t slot) {
      OutputProjection sp = direct.project_output(decoder_state(direct, *st).h);
      sources.push_back({st, score, position, slot, extension_table(direct, input, sp, st->position)});
      ++r.stats.expansions;
    };
    if (j == 1) {
      add_source(root, 0.0, 0, 0);
    } else {
      for (std::size_t k = 1; k <= I; ++k) {
        const auto& cell = r.chart.cell(k, j - 1);
        for (std::size_t s = 0; s < cell.size(); ++s) {
          if (!cell[s].terminal) add_source(cell[s].state, cell[s].direct_lp, k, s);
        }
      }
    }
    if (sources.empty()) break;

    for (std::size_t i = 1; i <= I; ++i) {
      std::vector<Item> items;
      for (const Source& src : sources) {
        if (src.state->position > i) continue;
        for (TokenId y : tokens) {
          if (y == kEos && i < I) continue;
          ++r.stats.direct_scores;
          double s = src.score + src.table.log_transition[i] +
                     src.table.log_word[i][static_cast<std::size_t>(y)];
          if (s < kLogFloor) continue;
          items.push_back({s, y, src.position, src.slot, src.state});
        }
      }
      const std::size_t keep = std::min(beam, items.size());
      std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(keep),
                        items.end(), better);
      items.resize(keep);
      auto& cell = r.chart.cell(i, j);
      for (Item& it : items) {
        BeamEntry e;
        e.score = it.score;
        e.direct_lp = it.score;
        e.token = it.token;
        e.bp_position = it.pred_position;
        e.bp_slot = it.pred_slot;
        e.terminal = it.token == kEos;
        auto st = std::make_shared<HypothesisState>();
        st->parent = std::move(it.pred);
        st->token = it.token;
        st->position = i;
        e.state = std::move(st);
        cell.push_back(std::move(e));
      }
    }
  }
  select_final(r);
  return r;
}

std::vector<DecodeResult> decode_all(const std::vector<std::vector<TokenId>>& inputs,
                                     const DecoderModels& models, const Lambda& lambda,
                                     const DecodeConfig& config, std::size_t workers) {
  std::vector<DecodeResult> out(inputs.size());
  auto run = [&](std::size_t w, std::size_t stride) {
    for (std::size_t k = w; k < inputs.size(); k += stride) {
      out[k] = noisy_channel_decode(inputs[k], models, lambda, config);
      out[k].chart = BeamChart();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, inputs.size()));
  if (workers == 1) {
    run(0, 1);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        run(w, workers);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

GridSearchResult grid_search_lambda(const std::vector<std::vector<TokenId>>& dev_inputs,
                                    const std::vector<std::vector<std::string>>& dev_refs,
                                    const Vocabulary& output_vocab, const DecoderModels& models,
                                    const std::vector<Lambda>& grid, const DecodeConfig& config,
                                    DevMetric metric, std::size_t workers) {
  if (dev_inputs.empty()) throw DataError("grid search needs a non-empty dev set");
  if (grid.empty()) throw ConfigError("grid search needs at least one lambda");
  if (dev_inputs.size() != dev_refs.size()) {
    throw DataError("dev inputs (" + std::to_string(dev_inputs.size()) + ") and references (" +
                    std::to_string(dev_refs.size()) + ") differ in count");
  }
  GridSearchResult result;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    auto decoded = decode_all(dev_inputs, models, grid[g], config, workers);
    std::vector<Tokens> preds;
    for (const auto& d : decoded) preds.push_back(decode_ids({d.tokens, Role::kOutput}, output_vocab));
    const ScoreReport rep =
        score(metric == DevMetric::kExactMatch ? Metric::kExact : Metric::kRougeL, preds, dev_refs);
    result.scores.push_back(rep.value);
    if (g == 0 || rep.value > result.best_score) {
      result.best_score = rep.value;
      result.best = grid[g];
    }
  }
  return result;
}

}  // namespace ssnt
