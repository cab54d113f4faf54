#include "toy_experiment.hpp"

#include "ssnt/eval.hpp"
#include "ssnt/trainer.hpp"

namespace ssnt::testing {

ToySplits make_splits(const ToySetup& setup) {
  ToyTask task({12, 3, 8, 4, 3, setup.task_seed});
  Rng rng(1000 + setup.task_seed);
  ToySplits s;
  s.train = task.sample_pairs(setup.pairs, rng);
  s.dev = task.sample_pairs(setup.held_out, rng);
  s.test = task.sample_pairs(setup.held_out, rng);
  s.lm_text = task.sample_outputs(setup.lm_sentences, rng);
  s.input_vocab = build_vocab(s.train.source, 1);
  s.output_vocab = build_vocab(s.train.target, 1);
  return s;
}

namespace {

std::vector<ParallelPair> examples(ModelRole role, const ParallelText& t, const ToySplits& s) {
  std::vector<ParallelPair> out;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (role == ModelRole::kChannel) {
      out.push_back({encode(t.target[k], s.output_vocab, Role::kInput),
                     encode(t.source[k], s.input_vocab, Role::kOutput)});
    } else {
      out.push_back({encode(t.source[k], s.input_vocab, Role::kInput),
                     encode(t.target[k], s.output_vocab, Role::kOutput)});
    }
  }
  return out;
}

}  // namespace

ModelBundle train_toy(ModelRole role, const ToySetup& setup, const ToySplits& s) {
  TrainConfig c = default_config(role);
  c.embed = setup.embed;
  c.dropout = 0.0;
  c.learning_rate = setup.learning_rate;
  c.seed = 7 + setup.task_seed;
  TrainingData d;
  if (role == ModelRole::kLm) {
    c.hidden = setup.lm_hidden;
    c.epochs = setup.lm_epochs;
    d.input_vocab = d.output_vocab = s.output_vocab;
    for (const auto& y : s.lm_text) d.lm_train.push_back(encode(y, s.output_vocab, Role::kOutput));
    for (const auto& y : s.dev.target) d.lm_dev.push_back(encode(y, s.output_vocab, Role::kOutput));
  } else {
    c.hidden = setup.hidden;
    const bool channel = role == ModelRole::kChannel;
    c.epochs = channel ? setup.channel_epochs : setup.epochs;
    d.input_vocab = channel ? s.output_vocab : s.input_vocab;
    d.output_vocab = channel ? s.input_vocab : s.output_vocab;
    d.train = examples(role, s.train, s);
    d.dev = examples(role, s.dev, s);
  }
  return std::move(train_model(c, d).bundle);
}

ToyModels train_all(const ToySetup& setup, const ToySplits& s) {
  return {train_toy(ModelRole::kDirect, setup, s), train_toy(ModelRole::kChannel, setup, s),
          train_toy(ModelRole::kLm, setup, s)};
}

std::vector<std::vector<TokenId>> encoded_inputs(const ParallelText& t, const Vocabulary& v) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& x : t.source) out.push_back(encode(x, v, Role::kInput).ids);
  return out;
}

ToyScore evaluate(const ToyModels& m, const ToySplits& s, const ParallelText& part, const Lambda& l,
                  const DecodeConfig& c) {
  ToyScore r;
  for (const DecodeResult& d : decode_all(encoded_inputs(part, s.input_vocab), m.view(), l, c)) {
    r.outputs.push_back(decode_ids({d.tokens, Role::kOutput}, s.output_vocab));
    r.scores.push_back(d.score);
  }
  r.exact = exact_match(r.outputs, part.target).value;
  return r;
}

std::vector<Lambda> channel_grid() { return {{0, 1, 1, 0}, {0, 1, 1, 0.5}}; }

std::vector<Lambda> combination_grid() {
  std::vector<Lambda> g = {{1, 0, 0, 0}};
  for (const Lambda& l : channel_grid()) g.push_back(l);
  g.push_back({1, 1, 1, 0});
  g.push_back({1, 1, 1, 0.5});
  return g;
}

}  // namespace ssnt::testing
