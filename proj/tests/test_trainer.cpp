#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ssnt/error.hpp"
#include "ssnt/trainer.hpp"
#include "test_support.hpp"

namespace ssnt {
namespace {

namespace fs = std::filesystem;

TEST(TrainConfig, Defaults) {
  TrainConfig d = default_config(ModelRole::kDirect);
  EXPECT_EQ(d.learning_rate, 0.001);
  EXPECT_EQ(d.dropout, 0.2);
  EXPECT_EQ(d.batch_size, 32u);
  EXPECT_EQ(d.hidden, 256u);
  EXPECT_EQ(d.layers, 1u);
  EXPECT_EQ(d.patience, 5u);
  TrainConfig lm = default_config(ModelRole::kLm);
  EXPECT_EQ(lm.learning_rate, 0.0001);
  EXPECT_EQ(lm.hidden, 1024u);
  EXPECT_EQ(lm.layers, 2u);
  EXPECT_EQ(default_config(ModelRole::kChannel).role, ModelRole::kChannel);
}

TEST(TrainConfig, Validation) {
  auto bad = [](auto edit) {
    TrainConfig c;
    edit(c);
    return c;
  };
  EXPECT_THROW(bad([](TrainConfig& c) { c.learning_rate = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](TrainConfig& c) { c.dropout = 1.0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](TrainConfig& c) { c.dropout = -0.1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](TrainConfig& c) { c.epochs = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](TrainConfig& c) {
                 c.role = ModelRole::kChannel;
                 c.bidirectional = true;
               }).validate(),
               ConfigError);
  EXPECT_NO_THROW(bad([](TrainConfig& c) { c.dropout = 0.0; }).validate());
}

TEST(ConfigText, ParsesCommentsAndRejectsDuplicates) {
  auto m = parse_config_text("# header\nrole = lm\n\nepochs=3  # trailing\nlearning_rate=0.01\n");
  EXPECT_EQ(m.at("role"), "lm");
  EXPECT_EQ(m.at("epochs"), "3");
  EXPECT_EQ(m.at("learning_rate"), "0.01");
  EXPECT_THROW(parse_config_text("epochs=3\nepochs=4\n"), ConfigError);
  EXPECT_THROW(parse_config_text("no equals sign\n"), ConfigError);
  EXPECT_THROW(parse_config_text("=3\n"), ConfigError);
  EXPECT_THROW(read_config("/nonexistent/ssnt.cfg"), ConfigError);
}

TEST(ConfigText, SweepsExpandOverSortedKeys) {
  auto configs = expand_config(parse_config_text("role=channel\nhidden=8,16\ndropout=0,0.5,0.25\nseed=3\n"));
  ASSERT_EQ(configs.size(), 6u);
  const std::vector<std::pair<double, std::size_t>> expected = {{0, 8},   {0, 16},   {0.5, 8},
                                                                {0.5, 16}, {0.25, 8}, {0.25, 16}};
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(configs[k].dropout, expected[k].first);
    EXPECT_EQ(configs[k].hidden, expected[k].second);
  }
  for (const auto& c : configs) {
    EXPECT_EQ(c.role, ModelRole::kChannel);
    EXPECT_EQ(c.seed, 3u);
  }
  EXPECT_THROW(expand_config(parse_config_text("seed=1,2\n")), ConfigError);
  EXPECT_THROW(expand_config(parse_config_text("colour=blue\n")), ConfigError);
  EXPECT_THROW(expand_config(parse_config_text("epochs=many\n")), ConfigError);
  EXPECT_EQ(expand_config(parse_config_text("role=lm\n"))[0].hidden, 1024u);
}

TEST(ConfigText, MapRoundTrip) {
  TrainConfig c = default_config(ModelRole::kChannel);
  c.hidden = 12;
  c.learning_rate = 0.0123;
  c.rules.max_src_len = 50;
  auto back = expand_config(c.to_map());
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].to_map(), c.to_map());
}

// A reversible toy corpus: the output is the input reversed.
struct Corpus {
  Vocabulary in, out;
  std::vector<ParallelPair> pairs;
};

Corpus reversal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::string>> xs;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::string> x(2 + rng.below(3));
    for (auto& w : x) w = std::string(1, static_cast<char>('a' + rng.below(5)));
    xs.push_back(x);
  }
  Corpus c;
  c.in = build_vocab(xs, 1);
  c.out = c.in;
  for (const auto& x : xs) {
    std::vector<std::string> y(x.rbegin(), x.rend());
    c.pairs.push_back({encode(x, c.in, Role::kInput), encode(y, c.out, Role::kOutput)});
  }
  return c;
}

TrainingData data_for(const Corpus& c) { return {c.in, c.out, c.pairs, c.pairs, {}, {}}; }

TrainConfig small(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.hidden = 8;
  t.embed = 4;
  t.learning_rate = 0.01;
  t.seed = 11;
  return t;
}

TEST(Training, SameSeedSameBytes) {
  Corpus c = reversal(40, 1);
  TrainResult a = train_model(small(2), data_for(c));
  TrainResult b = train_model(small(2), data_for(c));
  EXPECT_EQ(serialize_checkpoint(a.bundle), serialize_checkpoint(b.bundle));
  TrainConfig other = small(2);
  other.seed = 12;
  EXPECT_NE(serialize_checkpoint(train_model(other, data_for(c)).bundle), serialize_checkpoint(a.bundle));
}

TEST(Training, LossFallsOverFirstEpochsWithDefaults) {
  Corpus c = reversal(50, 2);
  TrainConfig t = default_config(ModelRole::kDirect);
  t.epochs = 5;
  TrainResult r = train_model(t, data_for(c));
  ASSERT_EQ(r.bundle.history.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) {
    EXPECT_LT(r.bundle.history[e].train_loss, r.bundle.history[e - 1].train_loss) << "epoch " << e + 1;
  }
}

TEST(Training, KeepsTheBestDevEpoch) {
  Corpus c = reversal(60, 3);
  Corpus dev = reversal(20, 4);
  TrainingData d = data_for(c);
  for (const auto& p : dev.pairs) {
    std::vector<std::string> x = decode_ids(p.source, dev.in), y = decode_ids(p.target, dev.out);
    d.dev.push_back({encode(x, c.in, Role::kInput), encode(y, c.out, Role::kOutput)});
  }
  TrainConfig t = small(12);
  t.learning_rate = 0.05;
  t.patience = 100;
  std::vector<EpochRecord> seen;
  TrainResult r = train_model(t, d, [&](const EpochRecord& e) { seen.push_back(e); });
  EXPECT_EQ(seen, r.bundle.history);
  ASSERT_GE(r.bundle.best_epoch, 1u);
  for (const auto& e : r.bundle.history) EXPECT_LE(r.best_dev_nll, e.dev_nll);
  EXPECT_EQ(r.best_dev_nll, r.bundle.history[r.bundle.best_epoch - 1].dev_nll);
  EXPECT_EQ(mean_nll(r.bundle, d.dev, {}), r.best_dev_nll);
}

TEST(Training, PatienceStopsEarly) {
  Corpus c = reversal(30, 5);
  TrainConfig t = small(50);
  t.learning_rate = 0.3;
  t.patience = 1;
  TrainResult r = train_model(t, data_for(c));
  EXPECT_LT(r.bundle.history.size(), 50u);
  EXPECT_EQ(r.bundle.history.size(), r.bundle.best_epoch + 1);
}

TEST(Training, MeanNllAveragesLonePairs) {
  Corpus c = reversal(10, 6);
  TrainResult r = train_model(small(1), data_for(c));
  double total = 0.0;
  for (const auto& p : c.pairs) {
    Graph g;
    total += g.scalar_value(r.bundle.ssnt->sequence_nll(g, p.source.ids, p.target.ids));
  }
  EXPECT_NEAR(mean_nll(r.bundle, c.pairs, {}), total / 10.0, 1e-9);
  EXPECT_THROW(mean_nll(r.bundle, {}, {}), DataError);
}

TEST(Training, DivergenceKeepsLastGoodParameters) {
  Corpus c = reversal(40, 7);
  TrainConfig t = small(3);
  t.learning_rate = 1e300;
  t.batch_size = 8;
  TrainResult r = train_model(t, data_for(c));
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.diagnostic.empty());
  for (std::size_t k = 0; k < r.bundle.params().size(); ++k) {
    for (double v : r.bundle.params()[k].value.data()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Training, LanguageModelRole) {
  Corpus c = reversal(30, 8);
  TrainingData d;
  d.input_vocab = d.output_vocab = c.out;
  for (const auto& p : c.pairs) d.lm_train.push_back(p.target);
  d.lm_dev = d.lm_train;
  TrainConfig t = small(3);
  t.role = ModelRole::kLm;
  t.layers = 2;
  TrainResult r = train_model(t, d);
  ASSERT_TRUE(r.bundle.lm);
  EXPECT_FALSE(r.bundle.ssnt);
  EXPECT_LT(r.bundle.history.back().dev_nll, r.bundle.history.front().dev_nll);
  EXPECT_THROW(train_model(t, data_for(c)), DataError);
}

TEST(Training, SweepKeepsLowestDevNll) {
  Corpus c = reversal(30, 9);
  std::vector<TrainConfig> configs = {small(2), small(2)};
  configs[0].learning_rate = 1e-6;
  TrainResult best = train_sweep(configs, data_for(c));
  TrainResult low = train_model(configs[0], data_for(c));
  TrainResult high = train_model(configs[1], data_for(c));
  EXPECT_EQ(best.best_dev_nll, std::min(low.best_dev_nll, high.best_dev_nll));
  EXPECT_THROW(train_sweep({}, data_for(c)), ConfigError);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("ssnt_ckpt_" + std::string(::testing::UnitTest::GetInstance()
                                                                         ->current_test_info()
                                                                         ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsByteIdenticalAndScoresMatch) {
  Corpus c = reversal(20, 10);
  TrainResult r = train_model(small(2), data_for(c));
  save_checkpoint(r.bundle, path("a.ckpt"));
  ModelBundle loaded = load_checkpoint(path("a.ckpt"));
  save_checkpoint(loaded, path("b.ckpt"));
  EXPECT_EQ(read_file(path("a.ckpt")), read_file(path("b.ckpt")));
  EXPECT_EQ(loaded.history, r.bundle.history);
  EXPECT_EQ(loaded.best_epoch, r.bundle.best_epoch);
  EXPECT_EQ(loaded.config, r.bundle.config);
  EXPECT_EQ(loaded.input_vocab, r.bundle.input_vocab);
  for (const auto& p : c.pairs) {
    EXPECT_EQ(loaded.ssnt->forward_chart(p.source.ids, p.target.ids).corner(),
              r.bundle.ssnt->forward_chart(p.source.ids, p.target.ids).corner());
  }
  EXPECT_EQ(read_file(path("a.ckpt")).substr(0, 8), "SSNTCKPT");
}

TEST_F(CheckpointTest, LanguageModelRoundTrip) {
  Rng rng(3);
  ModelBundle b;
  b.role = ModelRole::kLm;
  b.input_vocab = b.output_vocab = build_vocab({{"p", "q"}}, 1);
  b.lm = std::make_unique<LanguageModel>(LmConfig{b.output_vocab.size(), 3, 5, 2}, rng);
  b.history = {{1, 2.5, std::numeric_limits<double>::quiet_NaN()}};
  const std::string bytes = serialize_checkpoint(b);
  ModelBundle back = parse_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_TRUE(std::isnan(back.history[0].dev_nll));
  std::vector<TokenId> y = {4, 5, kEos};
  EXPECT_EQ(back.lm->sequence_log_prob(y), b.lm->sequence_log_prob(y));
}

TEST_F(CheckpointTest, LoadErrorsAreDescriptive) {
  Corpus c = reversal(10, 11);
  TrainResult r = train_model(small(1), data_for(c));
  const std::string bytes = serialize_checkpoint(r.bundle);
  auto message = [](std::string_view b) {
    try {
      parse_checkpoint(b);
    } catch (const LoadError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };

  const std::string truncated = message(std::string_view(bytes).substr(0, bytes.size() - 5));
  EXPECT_NE(truncated.find(std::to_string(bytes.size())), std::string::npos) << truncated;
  EXPECT_NE(truncated.find(std::to_string(bytes.size() - 5)), std::string::npos) << truncated;
  EXPECT_NE(message(bytes + "x").find("size mismatch"), std::string::npos);
  EXPECT_NE(message(bytes.substr(0, 10)).find("truncated"), std::string::npos);

  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_NE(message(magic).find("magic"), std::string::npos);

  std::string version = bytes;
  version[8] = 2;
  EXPECT_NE(message(version).find("version"), std::string::npos);

  std::string shape = bytes;
  std::size_t at = shape.find("\"shape\":[") + 9;
  shape[at] = shape[at] == '1' ? '2' : '1';
  EXPECT_NE(message(shape).find("wrong shape"), std::string::npos) << message(shape);

  EXPECT_THROW(load_checkpoint(path("missing.ckpt")), IoError);
  std::ofstream(path("junk.ckpt")) << "junk";
  EXPECT_THROW(load_checkpoint(path("junk.ckpt")), LoadError);
}

TEST_F(CheckpointTest, AtomicWriteLeavesNoTemporaries) {
  write_file_atomic(path("f.bin"), "abc");
  write_file_atomic(path("f.bin"), "defg");
  EXPECT_EQ(read_file(path("f.bin")), "defg");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir_)) ++files;
  EXPECT_EQ(files, 1u);
}

TEST_F(CheckpointTest, LoadsFromConfiguredFiles) {
  std::ofstream(path("t.src")) << "a b\nb c\nc a b\n";
  std::ofstream(path("t.tgt")) << "b a\nc b\nb a c\n";
  TrainConfig t = small(1);
  t.train_src = path("t.src");
  t.train_tgt = path("t.tgt");
  t.src_vocab = path("src.vocab");
  t.tgt_vocab = path("tgt.vocab");
  TrainingData d = load_training_data(t);
  EXPECT_EQ(d.train.size(), 3u);
  EXPECT_EQ(d.dev.size(), 3u);
  EXPECT_TRUE(fs::exists(t.src_vocab));
  EXPECT_EQ(Vocabulary::load(t.src_vocab), d.input_vocab);

  t.role = ModelRole::kChannel;
  TrainingData ch = load_training_data(t);
  EXPECT_EQ(ch.train[0].source.ids, d.train[0].target.ids.size() == 3
                                        ? std::vector<TokenId>(d.train[0].target.ids.begin(),
                                                               d.train[0].target.ids.end() - 1)
                                        : ch.train[0].source.ids);
  EXPECT_EQ(ch.train[0].target.ids.back(), kEos);

  t.role = ModelRole::kLm;
  TrainingData lm = load_training_data(t);
  EXPECT_EQ(lm.lm_train.size(), 3u);
  EXPECT_TRUE(lm.train.empty());
}

}  // namespace
}  // namespace ssnt
