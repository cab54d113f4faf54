#include "ssnt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include "ssnt/error.hpp"

namespace ssnt {

Vocabulary::Vocabulary()
    : Vocabulary(std::vector<std::string>{std::string(kPadToken), std::string(kStartToken),
                                          std::string(kEosToken), std::string(kUnkToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const std::string_view reserved[] = {kPadToken, kStartToken, kEosToken, kUnkToken};
  if (tokens_.size() < kReservedCount) throw DataError("vocabulary lacks reserved entries");
  for (std::size_t k = 0; k < kReservedCount; ++k) {
    if (tokens_[k] != reserved[k]) {
      throw DataError("vocabulary entry " + std::to_string(k) + " must be " +
                      std::string(reserved[k]) + ", found " + tokens_[k]);
    }
  }
  for (std::size_t k = 0; k < tokens_.size(); ++k) {
    if (tokens_[k].empty()) throw DataError("empty token in vocabulary at id " + std::to_string(k));
    if (!index_.emplace(tokens_[k], static_cast<TokenId>(k)).second) {
      throw DataError("duplicate vocabulary token: " + tokens_[k]);
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path);
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing vocabulary " + path);
}

Vocabulary Vocabulary::load(const std::string& path) { return Vocabulary(read_lines(path)); }

std::vector<std::string> preprocess(std::string_view line, const PreprocessRules& rules) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : line) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f') {
      flush();
      continue;
    }
    if (rules.lowercase && ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    if (rules.digit_to_hash && ch >= '0' && ch <= '9') ch = '#';
    cur.push_back(ch);
  }
  flush();
  return out;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& streams,
                       std::size_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : streams) {
    for (const auto& t : s) ++counts[t];
  }
  Vocabulary reserved;
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count && !reserved.contains(tok)) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved.tokens();
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

TokenSequence encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                     Role role) {
  TokenSequence seq;
  seq.role = role;
  seq.ids.reserve(tokens.size() + 1);
  for (const auto& t : tokens) seq.ids.push_back(vocab.id(t));
  if (role == Role::kOutput) seq.ids.push_back(kEos);
  return seq;
}

std::vector<std::string> decode_ids(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (TokenId id : seq.ids) {
    const std::string& tok = vocab.token(id);
    if (id == kPad || id == kStart || id == kEos) continue;
    out.push_back(tok);
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

ParallelText load_parallel(const std::string& src_path, const std::string& tgt_path,
                           const PreprocessRules& rules) {
  auto src = read_lines(src_path);
  auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw DataError("parallel files differ in length: " + src_path + " has " +
                    std::to_string(src.size()) + " lines, " + tgt_path + " has " +
                    std::to_string(tgt.size()));
  }
  ParallelText text;
  for (std::size_t k = 0; k < src.size(); ++k) {
    auto s = preprocess(src[k], rules);
    auto t = preprocess(tgt[k], rules);
    const bool too_long = (rules.max_src_len && s.size() > *rules.max_src_len) ||
                          (rules.max_tgt_len && t.size() > *rules.max_tgt_len);
    if (s.empty() || t.empty() || too_long) {
      ++text.dropped;
      continue;
    }
    text.source.push_back(std::move(s));
    text.target.push_back(std::move(t));
  }
  return text;
}

std::vector<std::vector<std::string>> load_text(const std::string& path,
                                                const PreprocessRules& rules) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : read_lines(path)) {
    auto t = preprocess(line, rules);
    if (t.empty() || (rules.max_tgt_len && t.size() > *rules.max_tgt_len)) continue;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<ParallelPair> encode_parallel(const ParallelText& text, const Vocabulary& src_vocab,
                                          const Vocabulary& tgt_vocab) {
  std::vector<ParallelPair> pairs;
  pairs.reserve(text.size());
  for (std::size_t k = 0; k < text.size(); ++k) {
    pairs.push_back({encode(text.source[k], src_vocab, Role::kInput),
                     encode(text.target[k], tgt_vocab, Role::kOutput)});
  }
  return pairs;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng, bool shuffle) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) rng.shuffle(order);
  return order;
}

void pad_rows(std::vector<std::vector<TokenId>>& rows, std::vector<std::size_t>& lengths) {
  std::size_t longest = 0;
  for (const auto& r : rows) longest = std::max(longest, r.size());
  lengths.clear();
  for (auto& r : rows) {
    lengths.push_back(r.size());
    r.resize(longest, kPad);
  }
}

}  // namespace

std::vector<Batch> make_batches(const std::vector<ParallelPair>& data, std::size_t batch_size,
                                Rng& rng, bool shuffle) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  auto order = epoch_order(data.size(), rng, shuffle);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
      b.indices.push_back(order[k]);
      b.source.push_back(data[order[k]].source.ids);
      b.target.push_back(data[order[k]].target.ids);
    }
    pad_rows(b.source, b.source_lengths);
    pad_rows(b.target, b.target_lengths);
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<TokenSequence>& data, std::size_t batch_size,
                                Rng& rng, bool shuffle) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  auto order = epoch_order(data.size(), rng, shuffle);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
      b.indices.push_back(order[k]);
      b.target.push_back(data[order[k]].ids);
    }
    pad_rows(b.target, b.target_lengths);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace ssnt
