#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ssnt/tensor.hpp"

namespace ssnt {

using TokenId = int;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kStart = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kReservedCount = 4;

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kStartToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kUnkToken = "<unk>";

enum class Role { kInput, kOutput };

class Vocabulary {
 public:
  // Only the four reserved entries.
  Vocabulary();
  // `tokens` must start with the reserved entries in id order.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  Role role = Role::kInput;

  std::size_t size() const { return ids.size(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

struct ParallelPair {
  TokenSequence source;
  TokenSequence target;
};

struct PreprocessRules {
  bool lowercase = false;
  bool digit_to_hash = false;
  std::size_t min_count = 1;
  // Limits count content tokens only; EOS is not included.
  std::optional<std::size_t> max_src_len;
  std::optional<std::size_t> max_tgt_len;
};

// Whitespace tokenisation followed by the enabled rewrites. Lowercasing is
// ASCII-only; other bytes pass through untouched.
std::vector<std::string> preprocess(std::string_view line, const PreprocessRules& rules);

// Tokens with count >= min_count, ids assigned by descending count then
// lexicographic order after the reserved entries.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& streams,
                       std::size_t min_count);

TokenSequence encode(const std::vector<std::string>& tokens, const Vocabulary& vocab, Role role);
// Drops PAD, START and EOS. Throws DataError for ids outside the vocabulary.
std::vector<std::string> decode_ids(const TokenSequence& seq, const Vocabulary& vocab);

struct ParallelText {
  std::vector<std::vector<std::string>> source;
  std::vector<std::vector<std::string>> target;
  std::size_t dropped = 0;

  std::size_t size() const { return source.size(); }
};

std::vector<std::string> read_lines(const std::string& path);
// Line k of each file forms pair k. Pairs with an empty side or over the
// length limits are dropped and counted.
ParallelText load_parallel(const std::string& src_path, const std::string& tgt_path,
                           const PreprocessRules& rules);
std::vector<std::vector<std::string>> load_text(const std::string& path,
                                                const PreprocessRules& rules);

std::vector<ParallelPair> encode_parallel(const ParallelText& text, const Vocabulary& src_vocab,
                                          const Vocabulary& tgt_vocab);

// A mini-batch padded to its longest member. `source` is empty for unpaired
// (target-only) data.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<std::vector<TokenId>> source;
  std::vector<std::vector<TokenId>> target;
  std::vector<std::size_t> source_lengths;
  std::vector<std::size_t> target_lengths;

  std::size_t size() const { return indices.size(); }
  std::span<const TokenId> source_row(std::size_t k) const {
    return std::span<const TokenId>(source[k]).first(source_lengths[k]);
  }
  std::span<const TokenId> target_row(std::size_t k) const {
    return std::span<const TokenId>(target[k]).first(target_lengths[k]);
  }
};

// One epoch of batches covering every example once, in order or shuffled by
// `rng`. The last batch may be short.
std::vector<Batch> make_batches(const std::vector<ParallelPair>& data, std::size_t batch_size,
                                Rng& rng, bool shuffle);
std::vector<Batch> make_batches(const std::vector<TokenSequence>& data, std::size_t batch_size,
                                Rng& rng, bool shuffle);

}  // namespace ssnt
