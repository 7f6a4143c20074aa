// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cantus/error.hpp"
#include "cantus/io.hpp"

namespace cantus {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

template <typename T>
bool parse_unsigned(const std::string& text, T& out) {
  long long v = 0;
  if (!parse_int(text, v) || v < 0) return false;
  out = static_cast<T>(v);
  return true;
}

bool parse_bool(const std::string& text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
  } else if (text == "false" || text == "0") {
    out = false;
  } else {
    return false;
  }
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1 || total_steps < 1 || warmup_steps < 1) {
    throw ValidationError("train config: batch_size, total_steps and warmup_steps must be >= 1");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_epsilon > 0.0)) {
    throw ValidationError("train config: invalid Adam hyperparameters");
  }
  if (!(lr_scale > 0.0) || !(grad_clip >= 0.0)) {
    throw ValidationError("train config: lr_scale must be > 0 and grad_clip >= 0");
  }
  loss_weights.validate();
  model.validate();
}

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 8;
  c.total_steps = 2000;
  c.warmup_steps = 200;
  c.model = ModelConfig::tiny();
  return c;
}

std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& c) {
  auto u = [](std::size_t v) { return std::to_string(v); };
  const ModelConfig& m = c.model;
  const LossWeights& w = c.loss_weights;
  return {
      {"model.hidden_dim", u(m.hidden_dim)},
      {"model.encoder_blocks", u(m.encoder_blocks)},
      {"model.decoder_blocks", u(m.decoder_blocks)},
      {"model.attention_heads", u(m.attention_heads)},
      {"model.conv_kernel_size", u(m.conv_kernel_size)},
      {"model.conv_filter_dim", u(m.conv_filter_dim)},
      {"model.duration_filter_dim", u(m.duration_filter_dim)},
      {"model.phoneme_vocab_size", u(m.phoneme_vocab_size)},
      {"model.pitch_vocab_size", u(m.pitch_vocab_size)},
      {"model.max_note_frames", u(m.max_note_frames)},
      {"model.output_dim", u(m.output_dim)},
      {"model.dropout", format_double(m.dropout)},
      {"model.positional_encoding", m.positional_encoding ? "true" : "false"},
      {"train.batch_size", u(c.batch_size)},
      {"train.total_steps", u(c.total_steps)},
      {"train.warmup_steps", u(c.warmup_steps)},
      {"train.adam_beta1", format_double(c.adam_beta1)},
      {"train.adam_beta2", format_double(c.adam_beta2)},
      {"train.adam_epsilon", format_double(c.adam_epsilon)},
      {"train.lr_scale", format_double(c.lr_scale)},
      {"train.grad_clip", format_double(c.grad_clip)},
      {"train.seed", std::to_string(c.seed)},
      {"loss.w_pd", format_double(w.phoneme_duration)},
      {"loss.w_sd", format_double(w.syllable_duration)},
      {"loss.w_m", format_double(w.mgc)},
      {"loss.w_b", format_double(w.bap)},
      {"loss.w_f", format_double(w.logf0)},
      {"loss.w_u", format_double(w.vuv)},
  };
}

bool apply_key_value(TrainConfig& c, const std::string& key, const std::string& value) {
  ModelConfig& m = c.model;
  LossWeights& w = c.loss_weights;
  std::size_t* sizes = nullptr;
  double* reals = nullptr;
  if (key == "model.hidden_dim") sizes = &m.hidden_dim;
  else if (key == "model.encoder_blocks") sizes = &m.encoder_blocks;
  else if (key == "model.decoder_blocks") sizes = &m.decoder_blocks;
  else if (key == "model.attention_heads") sizes = &m.attention_heads;
  else if (key == "model.conv_kernel_size") sizes = &m.conv_kernel_size;
  else if (key == "model.conv_filter_dim") sizes = &m.conv_filter_dim;
  else if (key == "model.duration_filter_dim") sizes = &m.duration_filter_dim;
  else if (key == "model.phoneme_vocab_size") sizes = &m.phoneme_vocab_size;
  else if (key == "model.pitch_vocab_size") sizes = &m.pitch_vocab_size;
  else if (key == "model.max_note_frames") sizes = &m.max_note_frames;
  else if (key == "model.output_dim") sizes = &m.output_dim;
  else if (key == "model.dropout") reals = &m.dropout;
  else if (key == "train.batch_size") sizes = &c.batch_size;
  else if (key == "train.total_steps") sizes = &c.total_steps;
  else if (key == "train.warmup_steps") sizes = &c.warmup_steps;
  else if (key == "train.adam_beta1") reals = &c.adam_beta1;
  else if (key == "train.adam_beta2") reals = &c.adam_beta2;
  else if (key == "train.adam_epsilon") reals = &c.adam_epsilon;
  else if (key == "train.lr_scale") reals = &c.lr_scale;
  else if (key == "train.grad_clip") reals = &c.grad_clip;
  else if (key == "loss.w_pd") reals = &w.phoneme_duration;
  else if (key == "loss.w_sd") reals = &w.syllable_duration;
  else if (key == "loss.w_m") reals = &w.mgc;
  else if (key == "loss.w_b") reals = &w.bap;
  else if (key == "loss.w_f") reals = &w.logf0;
  else if (key == "loss.w_u") reals = &w.vuv;

  if (sizes) {
    if (!parse_unsigned(value, *sizes)) throw ValidationError(key + ": expected a non-negative integer");
    return true;
  }
  if (reals) {
    if (!parse_double(value, *reals)) throw ValidationError(key + ": expected a number");
    return true;
  }
  if (key == "model.positional_encoding") {
    if (!parse_bool(value, m.positional_encoding)) throw ValidationError(key + ": expected true/false");
    return true;
  }
  if (key == "train.seed") {
    if (!parse_unsigned(value, c.seed)) throw ValidationError(key + ": expected a non-negative integer");
    return true;
  }
  return false;
}

double lr_schedule(std::size_t step, std::size_t hidden_dim, std::size_t warmup_steps) {
  if (step < 1) throw std::invalid_argument("lr_schedule: step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return std::pow(static_cast<double>(hidden_dim), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

void validate_corpus(const std::vector<Utterance>& corpus, const ModelConfig& model) {
  if (corpus.empty()) throw ValidationError("corpus is empty");
  std::string problems;
  for (const Utterance& u : corpus) {
    try {
      u.tokens.validate();
      u.features.validate();
      if (!u.tokens.gt_durations) throw ValidationError("no ground-truth durations");
      const int total = u.tokens.total_gt_frames();
      if (static_cast<std::size_t>(total) != u.features.frames()) {
        throw ValidationError("durations sum to " + std::to_string(total) + " but features have " +
                              std::to_string(u.features.frames()) + " frames");
      }
      for (std::size_t i = 0; i < u.tokens.size(); ++i) {
        if (static_cast<std::size_t>(u.tokens.phoneme_ids[i]) >= model.phoneme_vocab_size ||
            static_cast<std::size_t>(u.tokens.pitch_ids[i]) >= model.pitch_vocab_size) {
          throw ValidationError("token " + std::to_string(i) + " outside model vocabulary");
        }
      }
    } catch (const ValidationError& e) {
      problems += "\n  " + u.name + ": " + e.what();
    }
  }
  if (!problems.empty()) throw ValidationError("corpus validation failed:" + problems);
}

std::string format_loss_record(const LossRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g",
                r.step, r.lr, r.loss.total, r.loss.phoneme_duration, r.loss.syllable_duration,
                r.loss.mgc, r.loss.bap, r.loss.logf0, r.loss.vuv);
  return buf;
}

TrainState initial_state(const TrainConfig& config, const std::vector<Utterance>& corpus,
                         std::vector<std::string> vocab) {
  config.validate();
  validate_corpus(corpus, config.model);
  TrainState state;
  state.config = config;
  state.vocab = std::move(vocab);
  state.params = ModelParameters::init(config.model, config.seed);

  // Output biases start at the corpus means.
  std::vector<double> channel_sum(kAcousticDim, 0.0);
  double frames = 0.0, voiced = 0.0, log_dur = 0.0, tokens = 0.0;
  for (const Utterance& u : corpus) {
    const auto& f = u.features;
    for (std::size_t t = 0; t < f.frames(); ++t) {
      for (std::size_t j = 0; j < kMgcDim; ++j) channel_sum[kMgcOffset + j] += f.mgc[t * kMgcDim + j];
      for (std::size_t j = 0; j < kBapDim; ++j) channel_sum[kBapOffset + j] += f.bap[t * kBapDim + j];
      voiced += f.vuv[t];
    }
    frames += static_cast<double>(f.frames());
    for (int d : *u.tokens.gt_durations) log_dur += std::log(d + 1.0);
    tokens += static_cast<double>(u.tokens.size());
  }
  Tensor& bias = state.params.output.bias.mutable_value();
  for (std::size_t j = 0; j < kMgcDim + kBapDim; ++j) bias[j] = channel_sum[j] / frames;
  const double p = std::clamp(voiced / frames, 0.01, 0.99);
  bias[kVuvChannel] = std::log(p / (1.0 - p));
  state.params.duration_predictor.projection.bias.mutable_value()[0] = log_dur / tokens;

  for (const auto& [name, var] : state.params.named()) {
    state.moments.first.emplace_back(var.shape(), 0.0);
    state.moments.second.emplace_back(var.shape(), 0.0);
  }
  return state;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t batch_size,
                                       std::size_t corpus_size) {
  std::vector<std::size_t> out;
  std::vector<std::size_t> order;
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  for (std::size_t j = 0; j < batch_size; ++j) {
    const std::size_t position = (step - 1) * batch_size + j;
    const std::size_t epoch = position / corpus_size;
    if (epoch != cached_epoch) {
      order.resize(corpus_size);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(seed, kShuffleStream, epoch));
      for (std::size_t i = corpus_size; i > 1; --i) {
        std::swap(order[i - 1], order[rng() % i]);
      }
      cached_epoch = epoch;
    }
    out.push_back(order[position % corpus_size]);
  }
  return out;
}

Trainer::Trainer(TrainState state, const std::vector<Utterance>& corpus)
    : state_(std::move(state)), corpus_(corpus) {
  state_.params = state_.params.clone();
  state_.config.validate();
  validate_corpus(corpus_, state_.config.model);
  const auto named = state_.params.named();
  if (state_.moments.first.size() != named.size() || state_.moments.second.size() != named.size()) {
    throw ValidationError("trainer: optimizer state does not match the parameters");
  }
}

LossRecord Trainer::step() {
  const TrainConfig& cfg = state_.config;
  const std::size_t step = static_cast<std::size_t>(state_.step) + 1;
  const auto members = batch_indices(cfg.seed, step, cfg.batch_size, corpus_.size());
  std::vector<const PhonemeTokenSequence*> seqs;
  std::vector<const AcousticFeatureSequence*> feats;
  for (std::size_t i : members) {
    seqs.push_back(&corpus_[i].tokens);
    feats.push_back(&corpus_[i].features);
  }

  ForwardContext ctx;
  ctx.training = true;
  ctx.rng.seed(derive_seed(cfg.seed, kDropoutStream, step));
  Predictions pred = forward_train(seqs, state_.params, cfg.model, ctx);
  TrainTargets targets = build_targets(seqs, feats, pred);
  LossTerms loss = total_loss(pred, targets, cfg.loss_weights);

  LossRecord record;
  record.step = step;
  record.loss = loss.values();
  if (!std::isfinite(record.loss.total)) throw TrainingError(step, "non-finite loss");

  state_.params.zero_grad();
  backward(loss.total);

  auto named = state_.params.named();
  std::vector<Tensor> grads;
  grads.reserve(named.size());
  double norm_sq = 0.0;
  for (auto& [name, var] : named) {
    grads.push_back(var.grad());
    for (double g : grads.back().data()) norm_sq += g * g;
  }
  if (!std::isfinite(norm_sq)) throw TrainingError(step, "non-finite gradient");
  const double norm = std::sqrt(norm_sq);
  const double clip = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;

  record.lr = cfg.lr_scale * lr_schedule(step, cfg.model.hidden_dim, cfg.warmup_steps);
  const double bias1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
  for (std::size_t p = 0; p < named.size(); ++p) {
    Tensor& value = named[p].second.mutable_value();
    Tensor& m = state_.moments.first[p];
    Tensor& v = state_.moments.second[p];
    const Tensor& g = grads[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gi;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
      const double mhat = m[i] / bias1;
      const double vhat = v[i] / bias2;
      value[i] -= record.lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
  }
  state_.params.zero_grad();
  state_.step = step;
  return record;
}

TrainState train(TrainState state, const std::vector<Utterance>& corpus, const LossSink& sink) {
  Trainer trainer(std::move(state), corpus);
  while (!trainer.done()) {
    LossRecord record = trainer.step();
    if (sink) sink(record);
  }
  return trainer.state();
}

std::vector<int> predict_token_durations(const PhonemeTokenSequence& tokens,
                                         const ModelParameters& params, const ModelConfig& config) {
  ForwardContext ctx;
  const PhonemeTokenSequence* seqs[] = {&tokens};
  TokenBatch tb = TokenBatch::build(seqs, config);
  Var hidden = encode(tb, params, config, ctx);
  Var log_dur = predict_durations(hidden, tb, params.duration_predictor, config, ctx);
  std::vector<int> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back(decode_duration(log_dur.value()[i]));
  return out;
}

}  // namespace cantus
