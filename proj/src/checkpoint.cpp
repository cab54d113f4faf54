#include "ssnt/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ssnt/error.hpp"

namespace ssnt {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'S', 'N', 'T', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

std::uint64_t get_le(std::string_view bytes, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int k = 0; k < width; ++k) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + k])) << (8 * k);
  }
  return v;
}

// JSON has no encoding for non-finite numbers, so they travel as strings.
json number_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
  }
  throw LoadError("checkpoint manifest holds a malformed number: " + j.dump());
}

json model_dims(const ModelBundle& b) {
  json d;
  if (b.ssnt) {
    const SsntConfig& c = b.ssnt->config();
    d["input_vocab"] = c.input_vocab;
    d["output_vocab"] = c.output_vocab;
    d["embed"] = c.embed;
    d["hidden"] = c.hidden;
    d["bidirectional"] = c.bidirectional;
  } else {
    const LmConfig& c = b.lm->config();
    d["vocab"] = c.vocab;
    d["embed"] = c.embed;
    d["hidden"] = c.hidden;
    d["layers"] = c.layers;
  }
  return d;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw LoadError(std::string("checkpoint manifest lacks '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw LoadError(std::string("checkpoint manifest field '") + key + "' malformed: " + e.what());
  }
}

}  // namespace

std::string role_name(ModelRole role) {
  switch (role) {
    case ModelRole::kDirect: return "direct";
    case ModelRole::kChannel: return "channel";
    case ModelRole::kLm: return "lm";
  }
  return "unknown";
}

ModelRole parse_role(std::string_view name) {
  if (name == "direct") return ModelRole::kDirect;
  if (name == "channel") return ModelRole::kChannel;
  if (name == "lm") return ModelRole::kLm;
  throw ConfigError("unknown role '" + std::string(name) + "' (direct, channel, lm)");
}

ParameterSet& ModelBundle::params() {
  if (ssnt) return ssnt->params();
  if (lm) return lm->params();
  throw ContractError("model bundle holds no model");
}

const ParameterSet& ModelBundle::params() const {
  return const_cast<ModelBundle*>(this)->params();
}

std::string serialize_checkpoint(const ModelBundle& b) {
  const ParameterSet& params = b.params();
  json m;
  m["kind"] = b.ssnt ? "ssnt" : "lm";
  m["role"] = role_name(b.role);
  m["dims"] = model_dims(b);
  m["input_vocab"] = b.input_vocab.tokens();
  m["output_vocab"] = b.output_vocab.tokens();
  m["config"] = b.config;
  json hist = json::array();
  for (const EpochRecord& r : b.history) {
    hist.push_back({{"epoch", r.epoch},
                    {"train_loss", number_to_json(r.train_loss)},
                    {"dev_nll", number_to_json(r.dev_nll)}});
  }
  m["history"] = hist;
  m["best_epoch"] = b.best_epoch;
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = params[k];
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += 8 * p.value.size();
  }
  m["tensors"] = tensors;
  m["payload_bytes"] = offset;

  const std::string manifest = m.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u64(out, manifest.size());
  out += manifest;
  out.reserve(out.size() + offset);
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (double v : params[k].value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ModelBundle parse_checkpoint(std::string_view bytes, const std::string& origin) {
  const std::size_t header = sizeof kMagic + 4 + 8;
  if (bytes.size() < header) {
    throw LoadError(origin + ": truncated checkpoint header: expected at least " +
                    std::to_string(header) + " bytes, found " + std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw LoadError(origin + ": not a checkpoint (bad magic)");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (version != kCheckpointVersion) {
    throw LoadError(origin + ": unsupported checkpoint version " + std::to_string(version) +
                    " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t manifest_len = get_le(bytes, 12, 8);
  if (manifest_len > bytes.size() - header) {
    throw LoadError(origin + ": truncated manifest: expected " +
                    std::to_string(header + manifest_len) + " bytes, found " +
                    std::to_string(bytes.size()));
  }
  json m;
  try {
    m = json::parse(bytes.substr(header, manifest_len));
  } catch (const json::exception& e) {
    throw LoadError(origin + ": manifest is not valid JSON: " + e.what());
  }

  ModelBundle b;
  const auto kind = field<std::string>(m, "kind");
  b.role = parse_role(field<std::string>(m, "role"));
  try {
    b.input_vocab = Vocabulary(field<std::vector<std::string>>(m, "input_vocab"));
    b.output_vocab = Vocabulary(field<std::vector<std::string>>(m, "output_vocab"));
  } catch (const DataError& e) {
    throw LoadError(origin + ": bad embedded vocabulary: " + e.what());
  }
  b.config = field<std::map<std::string, std::string>>(m, "config");
  for (const json& r : field<json>(m, "history")) {
    b.history.push_back({field<std::size_t>(r, "epoch"), number_from_json(field<json>(r, "train_loss")),
                         number_from_json(field<json>(r, "dev_nll"))});
  }
  b.best_epoch = field<std::size_t>(m, "best_epoch");

  const json dims = field<json>(m, "dims");
  try {
    if (kind == "ssnt") {
      if (b.role == ModelRole::kLm) throw LoadError("ssnt checkpoint with role lm");
      SsntConfig c;
      c.input_vocab = field<std::size_t>(dims, "input_vocab");
      c.output_vocab = field<std::size_t>(dims, "output_vocab");
      c.embed = field<std::size_t>(dims, "embed");
      c.hidden = field<std::size_t>(dims, "hidden");
      c.bidirectional = field<bool>(dims, "bidirectional");
      if (c.input_vocab != b.input_vocab.size() || c.output_vocab != b.output_vocab.size()) {
        throw LoadError("vocabulary sizes disagree with model dimensions");
      }
      b.ssnt = std::make_unique<SsntModel>(c);
    } else if (kind == "lm") {
      if (b.role != ModelRole::kLm) throw LoadError("lm checkpoint with a transduction role");
      LmConfig c;
      c.vocab = field<std::size_t>(dims, "vocab");
      c.embed = field<std::size_t>(dims, "embed");
      c.hidden = field<std::size_t>(dims, "hidden");
      c.layers = field<std::size_t>(dims, "layers");
      if (c.vocab != b.output_vocab.size()) {
        throw LoadError("vocabulary size disagrees with model dimensions");
      }
      b.lm = std::make_unique<LanguageModel>(c);
    } else {
      throw LoadError("unknown model kind '" + kind + "'");
    }
  } catch (const LoadError& e) {
    throw LoadError(origin + ": " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(origin + ": invalid model dimensions: " + e.what());
  }

  ParameterSet& params = b.params();
  const json tensors = field<json>(m, "tensors");
  if (tensors.size() != params.size()) {
    throw LoadError(origin + ": manifest lists " + std::to_string(tensors.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  }
  std::uint64_t expected_payload = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = params[k];
    const auto name = field<std::string>(tensors[k], "name");
    const auto shape = field<std::vector<std::size_t>>(tensors[k], "shape");
    const auto offset = field<std::uint64_t>(tensors[k], "offset");
    if (name != p.name) {
      throw LoadError(origin + ": tensor " + std::to_string(k) + " is '" + name + "', expected '" +
                      p.name + "'");
    }
    if (shape != p.value.shape()) {
      throw LoadError(origin + ": tensor '" + name + "' has the wrong shape");
    }
    if (offset != expected_payload) {
      throw LoadError(origin + ": tensor '" + name + "' at an unexpected offset");
    }
    expected_payload += 8 * p.value.size();
  }
  const std::uint64_t expected_total = header + manifest_len + expected_payload;
  if (bytes.size() != expected_total) {
    throw LoadError(origin + ": checkpoint size mismatch: expected " +
                    std::to_string(expected_total) + " bytes, found " +
                    std::to_string(bytes.size()));
  }
  std::size_t at = header + manifest_len;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (double& v : params[k].value.data()) {
      v = std::bit_cast<double>(get_le(bytes, at, 8));
      at += 8;
    }
  }
  return b;
}

void write_file_atomic(const std::string& path, std::string_view bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move '" + tmp + "' to '" + path + "'");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
  write_file_atomic(path, serialize_checkpoint(bundle));
}

ModelBundle load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file(path), path);
}

}  // namespace ssnt
