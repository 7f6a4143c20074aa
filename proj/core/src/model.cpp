// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/model.hpp"

#include <algorithm>
#include <cmath>

#include "cantus/error.hpp"
#include "cantus/ops.hpp"

namespace cantus {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("model config: " + msg); };
  if (hidden_dim == 0 || attention_heads == 0) fail("hidden_dim and attention_heads must be positive");
  if (hidden_dim % attention_heads != 0) fail("hidden_dim must be divisible by attention_heads");
  if (conv_kernel_size == 0 || conv_kernel_size % 2 == 0) fail("conv_kernel_size must be odd");
  if (conv_filter_dim == 0 || duration_filter_dim == 0) fail("filter dims must be positive");
  if (output_dim != kAcousticDim) fail("output_dim must be 60 + 5 + 1 + 1");
  if (phoneme_vocab_size < 2 || pitch_vocab_size < 1 || max_note_frames < 1) {
    fail("vocabulary sizes must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.hidden_dim = 16;
  c.encoder_blocks = 1;
  c.decoder_blocks = 1;
  c.attention_heads = 2;
  c.conv_kernel_size = 3;
  c.conv_filter_dim = 32;
  c.duration_filter_dim = 16;
  c.max_note_frames = 128;
  c.dropout = 0.0;
  return c;
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor uniform(Shape shape, double limit) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = (2.0 * next() - 1.0) * limit;
    return t;
  }

  // Glorot-uniform limit for a [fan_in, fan_out] map.
  Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out) {
    return uniform(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  }

 private:
  double next() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 rng_;
};

LinearWeights make_linear(Initializer& init, std::size_t in, std::size_t out) {
  return {Var::parameter(init.glorot({in, out}, in, out)), Var::parameter(Tensor({out}, 0.0))};
}

ConvWeights make_conv(Initializer& init, std::size_t kernel, std::size_t in, std::size_t out) {
  return {Var::parameter(init.glorot({kernel, in, out}, kernel * in, kernel * out)),
          Var::parameter(Tensor({out}, 0.0))};
}

NormWeights make_norm(std::size_t dim) {
  return {Var::parameter(Tensor({dim}, 1.0)), Var::parameter(Tensor({dim}, 0.0))};
}

FftBlockWeights make_block(Initializer& init, const ModelConfig& c) {
  FftBlockWeights w;
  w.query = make_linear(init, c.hidden_dim, c.hidden_dim);
  w.key = make_linear(init, c.hidden_dim, c.hidden_dim);
  w.value = make_linear(init, c.hidden_dim, c.hidden_dim);
  w.output = make_linear(init, c.hidden_dim, c.hidden_dim);
  w.attention_norm = make_norm(c.hidden_dim);
  w.conv1 = make_conv(init, c.conv_kernel_size, c.hidden_dim, c.conv_filter_dim);
  w.conv2 = make_conv(init, c.conv_kernel_size, c.conv_filter_dim, c.hidden_dim);
  w.ffn_norm = make_norm(c.hidden_dim);
  return w;
}

void name_block(std::vector<NamedParameter>& out, const std::string& prefix,
                const FftBlockWeights& w) {
  auto lin = [&](const std::string& n, const LinearWeights& l) {
    out.emplace_back(prefix + n + ".weight", l.weight);
    out.emplace_back(prefix + n + ".bias", l.bias);
  };
  lin("attention.query", w.query);
  lin("attention.key", w.key);
  lin("attention.value", w.value);
  lin("attention.output", w.output);
  out.emplace_back(prefix + "attention_norm.gain", w.attention_norm.gain);
  out.emplace_back(prefix + "attention_norm.bias", w.attention_norm.bias);
  out.emplace_back(prefix + "conv1.weight", w.conv1.weight);
  out.emplace_back(prefix + "conv1.bias", w.conv1.bias);
  out.emplace_back(prefix + "conv2.weight", w.conv2.weight);
  out.emplace_back(prefix + "conv2.bias", w.conv2.bias);
  out.emplace_back(prefix + "ffn_norm.gain", w.ffn_norm.gain);
  out.emplace_back(prefix + "ffn_norm.bias", w.ffn_norm.bias);
}

Var linear(const Var& x, const LinearWeights& w) {
  return ops::add_bias(ops::matmul(x, w.weight), w.bias);
}

}  // namespace

ModelParameters ModelParameters::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer init(seed);
  const std::size_t d = config.hidden_dim;
  const double emb_limit = std::sqrt(3.0 / static_cast<double>(d));
  ModelParameters p;
  p.phoneme_embedding = Var::parameter(init.uniform({config.phoneme_vocab_size, d}, emb_limit));
  p.pitch_embedding = Var::parameter(init.uniform({config.pitch_vocab_size, d}, emb_limit));
  p.duration_embedding = Var::parameter(init.uniform({config.max_note_frames + 1, d}, emb_limit));
  for (std::size_t i = 0; i < config.encoder_blocks; ++i) p.encoder.push_back(make_block(init, config));
  auto& dp = p.duration_predictor;
  dp.conv1 = make_conv(init, config.conv_kernel_size, d, config.duration_filter_dim);
  dp.norm1 = make_norm(config.duration_filter_dim);
  dp.conv2 = make_conv(init, config.conv_kernel_size, config.duration_filter_dim,
                       config.duration_filter_dim);
  dp.norm2 = make_norm(config.duration_filter_dim);
  dp.projection = make_linear(init, config.duration_filter_dim, 1);
  for (std::size_t i = 0; i < config.decoder_blocks; ++i) p.decoder.push_back(make_block(init, config));
  p.output = make_linear(init, d, config.output_dim);
  return p;
}

std::vector<NamedParameter> ModelParameters::named() const {
  std::vector<NamedParameter> out;
  out.emplace_back("embedding.phoneme", phoneme_embedding);
  out.emplace_back("embedding.pitch", pitch_embedding);
  out.emplace_back("embedding.duration", duration_embedding);
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    name_block(out, "encoder." + std::to_string(i) + ".", encoder[i]);
  }
  const auto& dp = duration_predictor;
  out.emplace_back("duration.conv1.weight", dp.conv1.weight);
  out.emplace_back("duration.conv1.bias", dp.conv1.bias);
  out.emplace_back("duration.norm1.gain", dp.norm1.gain);
  out.emplace_back("duration.norm1.bias", dp.norm1.bias);
  out.emplace_back("duration.conv2.weight", dp.conv2.weight);
  out.emplace_back("duration.conv2.bias", dp.conv2.bias);
  out.emplace_back("duration.norm2.gain", dp.norm2.gain);
  out.emplace_back("duration.norm2.bias", dp.norm2.bias);
  out.emplace_back("duration.projection.weight", dp.projection.weight);
  out.emplace_back("duration.projection.bias", dp.projection.bias);
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    name_block(out, "decoder." + std::to_string(i) + ".", decoder[i]);
  }
  out.emplace_back("output.weight", output.weight);
  out.emplace_back("output.bias", output.bias);
  return out;
}

ModelParameters ModelParameters::clone() const {
  ModelParameters copy = *this;
  // Rebind every handle in `copy` to a fresh node.
  std::vector<Var*> slots;
  slots.push_back(&copy.phoneme_embedding);
  slots.push_back(&copy.pitch_embedding);
  slots.push_back(&copy.duration_embedding);
  auto block_slots = [&](FftBlockWeights& w) {
    for (Var* v : {&w.query.weight, &w.query.bias, &w.key.weight, &w.key.bias, &w.value.weight,
                   &w.value.bias, &w.output.weight, &w.output.bias, &w.attention_norm.gain,
                   &w.attention_norm.bias, &w.conv1.weight, &w.conv1.bias, &w.conv2.weight,
                   &w.conv2.bias, &w.ffn_norm.gain, &w.ffn_norm.bias}) {
      slots.push_back(v);
    }
  };
  for (auto& b : copy.encoder) block_slots(b);
  auto& dp = copy.duration_predictor;
  for (Var* v : {&dp.conv1.weight, &dp.conv1.bias, &dp.norm1.gain, &dp.norm1.bias,
                 &dp.conv2.weight, &dp.conv2.bias, &dp.norm2.gain, &dp.norm2.bias,
                 &dp.projection.weight, &dp.projection.bias}) {
    slots.push_back(v);
  }
  for (auto& b : copy.decoder) block_slots(b);
  slots.push_back(&copy.output.weight);
  slots.push_back(&copy.output.bias);
  if (slots.size() != named().size()) throw Error("clone: parameter enumeration mismatch");
  for (Var* slot : slots) *slot = Var::parameter(slot->value());
  return copy;
}

void ModelParameters::zero_grad() {
  for (auto& [name, var] : named()) var.zero_grad();
}

void zero_logf0_residual(ModelParameters& params) {
  Tensor& w = params.output.weight.mutable_value();
  const std::size_t out = w.dim(1);
  for (std::size_t r = 0; r < w.dim(0); ++r) w[r * out + kLogF0ResidualChannel] = 0.0;
  params.output.bias.mutable_value()[kLogF0ResidualChannel] = 0.0;
}

TokenBatch TokenBatch::build(std::span<const PhonemeTokenSequence* const> sequences,
                             const ModelConfig& config) {
  if (sequences.empty()) throw ValidationError("token batch: no sequences");
  TokenBatch tb;
  tb.batch = sequences.size();
  for (const auto* seq : sequences) {
    seq->validate();
    tb.lengths.push_back(seq->size());
    tb.max_tokens = std::max(tb.max_tokens, seq->size());
  }
  const std::size_t rows = tb.batch * tb.max_tokens;
  tb.phoneme_ids.assign(rows, kPaddingPhonemeId);
  tb.pitch_ids.assign(rows, 0);
  tb.duration_buckets.assign(rows, 0);
  tb.row_mask.assign(rows, 0.0);
  for (std::size_t b = 0; b < tb.batch; ++b) {
    const auto& seq = *sequences[b];
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const std::size_t r = b * tb.max_tokens + i;
      const int ph = seq.phoneme_ids[i], pitch = seq.pitch_ids[i];
      if (ph < 0 || static_cast<std::size_t>(ph) >= config.phoneme_vocab_size) {
        throw ValidationError("phoneme id " + std::to_string(ph) + " outside vocabulary of " +
                              std::to_string(config.phoneme_vocab_size));
      }
      if (pitch < 0 || static_cast<std::size_t>(pitch) >= config.pitch_vocab_size) {
        throw ValidationError("pitch id " + std::to_string(pitch) + " outside vocabulary of " +
                              std::to_string(config.pitch_vocab_size));
      }
      tb.phoneme_ids[r] = ph;
      tb.pitch_ids[r] = pitch;
      tb.duration_buckets[r] = std::min<std::int64_t>(seq.note_frame_counts[i],
                                                      static_cast<std::int64_t>(config.max_note_frames));
      tb.row_mask[r] = 1.0;
    }
  }
  return tb;
}

FrameBatch FrameBatch::build(const TokenBatch& tokens,
                             std::span<const PhonemeTokenSequence* const> sequences,
                             std::span<const std::vector<int>> durations) {
  if (sequences.size() != tokens.batch || durations.size() != tokens.batch) {
    throw ValidationError("frame batch: batch size mismatch");
  }
  FrameBatch fb;
  fb.batch = tokens.batch;
  for (std::size_t b = 0; b < fb.batch; ++b) {
    if (durations[b].size() != sequences[b]->size()) {
      throw ValidationError("frame batch: duration count differs from token count");
    }
    std::size_t total = 0;
    for (int d : durations[b]) {
      if (d < 1) throw ValidationError("frame batch: duration < 1");
      total += static_cast<std::size_t>(d);
    }
    fb.lengths.push_back(total);
    fb.max_frames = std::max(fb.max_frames, total);
  }
  const std::size_t rows = fb.batch * fb.max_frames;
  fb.source_row.assign(rows, -1);
  fb.row_mask.assign(rows, 0.0);
  fb.note_logf0.assign(rows, 0.0);
  fb.note_mask.assign(rows, 0.0);
  for (std::size_t b = 0; b < fb.batch; ++b) {
    const auto& seq = *sequences[b];
    std::size_t t = b * fb.max_frames;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const int pitch = seq.pitch_ids[i];
      const double lf0 = pitch > 0 ? std::log(midi_to_hz(pitch)) : 0.0;
      for (int k = 0; k < durations[b][i]; ++k, ++t) {
        fb.source_row[t] = static_cast<std::int64_t>(b * tokens.max_tokens + i);
        fb.row_mask[t] = 1.0;
        fb.note_logf0[t] = lf0;
        fb.note_mask[t] = pitch > 0 ? 1.0 : 0.0;
      }
    }
  }
  return fb;
}

Tensor positional_encoding(std::size_t length, std::size_t dim) {
  Tensor pe({length, dim});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

namespace {

// Adds the per-position encoding to every sequence of x [B, L, d].
Var add_positions(const Var& x) {
  const std::size_t batch = x.value().dim(0), len = x.value().dim(1), d = x.value().dim(2);
  const Tensor pe = positional_encoding(len, d);
  Tensor tiled({batch, len, d});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(pe.data().begin(), pe.data().end(), tiled.data().begin() + b * len * d);
  }
  return ops::add(x, Var::constant(std::move(tiled)));
}

}  // namespace

Var fft_block(const Var& x, const FftBlockWeights& w, std::span<const std::size_t> lengths,
              std::span<const double> row_mask, const ModelConfig& config, ForwardContext& ctx,
              Tensor* attention_probs) {
  const double rate = config.dropout;
  Var attended = ops::attention(linear(x, w.query), linear(x, w.key), linear(x, w.value),
                                config.attention_heads, lengths, attention_probs);
  attended = ops::dropout(linear(attended, w.output), rate, ctx.training, ctx.rng);
  Var h = ops::layer_norm(ops::add(x, attended), w.attention_norm.gain, w.attention_norm.bias);
  h = ops::mask_rows(h, row_mask);

  Var inner = ops::relu(ops::conv1d(h, w.conv1.weight, w.conv1.bias));
  inner = ops::mask_rows(inner, row_mask);
  inner = ops::conv1d(inner, w.conv2.weight, w.conv2.bias);
  inner = ops::dropout(inner, rate, ctx.training, ctx.rng);
  Var out = ops::layer_norm(ops::add(h, inner), w.ffn_norm.gain, w.ffn_norm.bias);
  return ops::mask_rows(out, row_mask);
}

Var encode(const TokenBatch& tokens, const ModelParameters& params, const ModelConfig& config,
           ForwardContext& ctx) {
  const Shape ids_shape{tokens.batch, tokens.max_tokens};
  Var x = ops::add(ops::embedding(params.phoneme_embedding, tokens.phoneme_ids, ids_shape),
                   ops::embedding(params.pitch_embedding, tokens.pitch_ids, ids_shape));
  x = ops::add(x, ops::embedding(params.duration_embedding, tokens.duration_buckets, ids_shape));
  if (config.positional_encoding) x = add_positions(x);
  x = ops::mask_rows(x, tokens.row_mask);
  for (const auto& block : params.encoder) {
    x = fft_block(x, block, tokens.lengths, tokens.row_mask, config, ctx);
  }
  return x;
}

Var predict_durations(const Var& hidden, const TokenBatch& tokens,
                      const DurationPredictorWeights& w, const ModelConfig& config,
                      ForwardContext& ctx) {
  Var h = ops::relu(ops::conv1d(hidden, w.conv1.weight, w.conv1.bias));
  h = ops::layer_norm(h, w.norm1.gain, w.norm1.bias);
  h = ops::dropout(h, config.dropout, ctx.training, ctx.rng);
  h = ops::mask_rows(h, tokens.row_mask);
  h = ops::relu(ops::conv1d(h, w.conv2.weight, w.conv2.bias));
  h = ops::layer_norm(h, w.norm2.gain, w.norm2.bias);
  h = ops::dropout(h, config.dropout, ctx.training, ctx.rng);
  Var out = linear(h, w.projection);
  return ops::reshape(out, {tokens.batch, tokens.max_tokens});
}

int decode_duration(double log_value) {
  const double frames = std::round(std::exp(log_value) - 1.0);
  if (!(frames >= 1.0)) return 1;  // also catches NaN
  if (frames > 1e6) return 1000000;
  return static_cast<int>(frames);
}

Var length_regulate(const Var& hidden, std::span<const int> durations) {
  if (hidden.value().rank() != 2 || hidden.value().dim(0) != durations.size()) {
    throw ShapeError("length_regulate: hidden " + shape_string(hidden.shape()) + " with " +
                     std::to_string(durations.size()) + " durations");
  }
  std::vector<std::int64_t> index;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 1) {
      throw ValidationError("length_regulate: duration " + std::to_string(durations[i]) +
                            " at row " + std::to_string(i) + " is < 1");
    }
    index.insert(index.end(), static_cast<std::size_t>(durations[i]), static_cast<std::int64_t>(i));
  }
  return ops::gather_rows(hidden, index, {index.size()});
}

Var length_regulate(const Var& hidden, const FrameBatch& frames) {
  return ops::gather_rows(hidden, frames.source_row, {frames.batch, frames.max_frames});
}

DecoderOutput decode(const Var& expanded, const FrameBatch& frames, const ModelParameters& params,
                     const ModelConfig& config, ForwardContext& ctx) {
  const Shape& s = expanded.shape();
  if (s.size() != 3 || s[0] != frames.batch || s[1] != frames.max_frames) {
    throw ShapeError("decode: expanded " + shape_string(s) + " does not match " +
                     std::to_string(frames.batch) + " x " + std::to_string(frames.max_frames) +
                     " frames");
  }
  Var x = expanded;
  if (config.positional_encoding) x = add_positions(x);
  x = ops::mask_rows(x, frames.row_mask);
  for (const auto& block : params.decoder) {
    x = fft_block(x, block, frames.lengths, frames.row_mask, config, ctx);
  }
  Var projected = linear(x, params.output);
  const std::size_t widths[] = {kMgcDim, kBapDim, 1, 1};
  auto parts = ops::split_last(projected, widths);
  const Shape frame_shape{frames.batch, frames.max_frames};

  DecoderOutput out;
  out.mgc = parts[0];
  out.bap = parts[1];
  Var residual = ops::mask_rows(parts[2], frames.note_mask);
  Tensor note(Shape{frames.batch, frames.max_frames, 1}, frames.note_logf0);
  out.logf0 = ops::reshape(ops::add(residual, Var::constant(std::move(note))), frame_shape);
  out.vuv_logit = ops::reshape(parts[3], frame_shape);
  out.vuv = ops::sigmoid(out.vuv_logit);
  return out;
}

DecoderOutput decode(const Var& expanded, std::span<const double> frame_note_logf0,
                     std::span<const double> frame_note_mask, const ModelParameters& params,
                     const ModelConfig& config, ForwardContext& ctx) {
  const Shape& s = expanded.shape();
  if (s.size() != 2 || frame_note_logf0.size() != s[0] || frame_note_mask.size() != s[0]) {
    throw ShapeError("decode: expanded " + shape_string(s) + " with " +
                     std::to_string(frame_note_logf0.size()) + " note logF0 values and " +
                     std::to_string(frame_note_mask.size()) + " mask values");
  }
  FrameBatch fb;
  fb.batch = 1;
  fb.max_frames = s[0];
  fb.lengths = {s[0]};
  fb.row_mask.assign(s[0], 1.0);
  fb.note_logf0.assign(frame_note_logf0.begin(), frame_note_logf0.end());
  fb.note_mask.assign(frame_note_mask.begin(), frame_note_mask.end());
  for (std::size_t t = 0; t < s[0]; ++t) {
    if (fb.note_mask[t] == 0.0) fb.note_logf0[t] = 0.0;
  }
  return decode(ops::reshape(expanded, {1, s[0], s[1]}), fb, params, config, ctx);
}

Predictions forward_train(std::span<const PhonemeTokenSequence* const> sequences,
                          const ModelParameters& params, const ModelConfig& config,
                          ForwardContext& ctx) {
  Predictions p;
  p.tokens = TokenBatch::build(sequences, config);
  std::vector<std::vector<int>> durations;
  for (const auto* seq : sequences) {
    if (!seq->gt_durations) throw ValidationError("forward_train: sequence lacks durations");
    durations.push_back(*seq->gt_durations);
  }
  p.frames = FrameBatch::build(p.tokens, sequences, durations);
  p.hidden = encode(p.tokens, params, config, ctx);
  p.log_durations = predict_durations(p.hidden, p.tokens, params.duration_predictor, config, ctx);
  p.expanded = length_regulate(p.hidden, p.frames);
  p.output = decode(p.expanded, p.frames, params, config, ctx);
  return p;
}

AcousticFeatureSequence to_features(const DecoderOutput& output, std::size_t b,
                                    std::size_t frames) {
  const std::size_t max_frames = output.logf0.value().dim(1);
  if (frames > max_frames) throw ShapeError("to_features: too many frames requested");
  AcousticFeatureSequence f(frames);
  const std::size_t base = b * max_frames;
  std::copy_n(output.mgc.value().data().begin() + base * kMgcDim, frames * kMgcDim, f.mgc.begin());
  std::copy_n(output.bap.value().data().begin() + base * kBapDim, frames * kBapDim, f.bap.begin());
  std::copy_n(output.logf0.value().data().begin() + base, frames, f.logf0.begin());
  std::copy_n(output.vuv.value().data().begin() + base, frames, f.vuv.begin());
  return f;
}

Synthesis synthesize(const PhonemeTokenSequence& tokens, const ModelParameters& params,
                     const ModelConfig& config, const std::vector<int>* forced_durations) {
  ForwardContext ctx;  // inference: dropout off
  const PhonemeTokenSequence* seqs[] = {&tokens};
  TokenBatch tb = TokenBatch::build(seqs, config);
  Var hidden = encode(tb, params, config, ctx);
  Var log_dur = predict_durations(hidden, tb, params.duration_predictor, config, ctx);
  Synthesis out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.durations.push_back(decode_duration(log_dur.value()[i]));
  }
  std::vector<int> used = forced_durations ? *forced_durations : out.durations;
  FrameBatch fb = FrameBatch::build(tb, seqs, std::span(&used, 1));
  Var expanded = length_regulate(hidden, fb);
  DecoderOutput dec = decode(expanded, fb, params, config, ctx);
  out.features = to_features(dec, 0, fb.max_frames);
  out.expanded = expanded.value().reshaped({fb.max_frames, config.hidden_dim});
  return out;
}

}  // namespace cantus
