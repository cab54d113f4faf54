#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ssnt/corpus.hpp"
#include "ssnt/lm.hpp"
#include "ssnt/ssnt_model.hpp"

namespace ssnt {

enum class ModelRole { kDirect, kChannel, kLm };

std::string role_name(ModelRole role);
ModelRole parse_role(std::string_view name);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_nll = 0.0;  // mean per-example NLL on the dev set

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

// A trained model with everything needed to use it: the network, the
// vocabularies it reads and writes, and its training record. For the LM
// both vocabularies are the same.
struct ModelBundle {
  ModelRole role = ModelRole::kDirect;
  Vocabulary input_vocab;
  Vocabulary output_vocab;
  std::map<std::string, std::string> config;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::unique_ptr<SsntModel> ssnt;
  std::unique_ptr<LanguageModel> lm;

  ParameterSet& params();
  const ParameterSet& params() const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "SSNTCKPT", u32 version, u64 manifest length, JSON manifest, then the
// tensors as little-endian doubles in manifest order.
std::string serialize_checkpoint(const ModelBundle& bundle);
ModelBundle parse_checkpoint(std::string_view bytes, const std::string& origin = "<memory>");

void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

// Writes through a temporary sibling and renames, so readers never see a
// partial file.
void write_file_atomic(const std::string& path, std::string_view bytes);
std::string read_file(const std::string& path);

}  // namespace ssnt
