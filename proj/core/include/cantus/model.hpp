// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cantus/autodiff.hpp"
#include "cantus/features.hpp"
#include "cantus/tokens.hpp"

namespace cantus {

struct ModelConfig {
  std::size_t hidden_dim = 384;
  std::size_t encoder_blocks = 6;
  std::size_t decoder_blocks = 6;
  std::size_t attention_heads = 2;
  std::size_t conv_kernel_size = 3;
  std::size_t conv_filter_dim = 1536;
  std::size_t duration_filter_dim = 256;
  std::size_t phoneme_vocab_size = 72;
  std::size_t pitch_vocab_size = 128;
  std::size_t max_note_frames = 512;
  std::size_t output_dim = kAcousticDim;
  double dropout = 0.1;
  bool positional_encoding = true;

  void validate() const;

  // Small network for fast training runs and tests.
  static ModelConfig tiny();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LinearWeights {
  Var weight;  // [in, out]
  Var bias;    // [out]
};

struct ConvWeights {
  Var weight;  // [kernel, in, out]
  Var bias;    // [out]
};

struct NormWeights {
  Var gain;
  Var bias;
};

struct FftBlockWeights {
  LinearWeights query, key, value, output;
  NormWeights attention_norm;
  ConvWeights conv1, conv2;
  NormWeights ffn_norm;
};

struct DurationPredictorWeights {
  ConvWeights conv1;
  NormWeights norm1;
  ConvWeights conv2;
  NormWeights norm2;
  LinearWeights projection;  // [filter, 1]
};

using NamedParameter = std::pair<std::string, Var>;

struct ModelParameters {
  Var phoneme_embedding;   // [phoneme_vocab, hidden]
  Var pitch_embedding;     // [pitch_vocab, hidden]
  Var duration_embedding;  // [max_note_frames + 1, hidden]
  std::vector<FftBlockWeights> encoder;
  DurationPredictorWeights duration_predictor;
  std::vector<FftBlockWeights> decoder;
  LinearWeights output;    // [hidden, 67]

  static ModelParameters init(const ModelConfig& config, std::uint64_t seed);

  /// Every tensor with a stable dotted name, in a fixed order.
  std::vector<NamedParameter> named() const;
  /// Deep copy with fresh parameter nodes.
  ModelParameters clone() const;
  void zero_grad();
};

// Channel layout of the output projection.
inline constexpr std::size_t kMgcOffset = 0;
inline constexpr std::size_t kBapOffset = kMgcDim;
inline constexpr std::size_t kLogF0ResidualChannel = kMgcDim + kBapDim;
inline constexpr std::size_t kVuvChannel = kLogF0ResidualChannel + 1;

/// Zeroes the output weights and bias feeding the logF0 residual channel.
void zero_logf0_residual(ModelParameters& params);

struct ForwardContext {
  bool training = false;
  std::mt19937_64 rng{0};
};

/// Padded phoneme-level batch. Row b*max_tokens + i is token i of sequence b.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t max_tokens = 0;
  std::vector<std::size_t> lengths;
  std::vector<std::int64_t> phoneme_ids;
  std::vector<std::int64_t> pitch_ids;
  std::vector<std::int64_t> duration_buckets;
  std::vector<double> row_mask;  // 1 on real tokens, 0 on padding

  static TokenBatch build(std::span<const PhonemeTokenSequence* const> sequences,
                          const ModelConfig& config);
};

/// Padded frame-level alignment derived from per-token durations.
struct FrameBatch {
  std::size_t batch = 0;
  std::size_t max_frames = 0;
  std::vector<std::size_t> lengths;
  std::vector<std::int64_t> source_row;  // token row feeding each frame, -1 on padding
  std::vector<double> row_mask;          // 1 on real frames
  std::vector<double> note_logf0;        // ln(note Hz), 0 on rests and padding
  std::vector<double> note_mask;         // 1 on real non-rest frames

  static FrameBatch build(const TokenBatch& tokens,
                          std::span<const PhonemeTokenSequence* const> sequences,
                          std::span<const std::vector<int>> durations);
};

/// Fixed sinusoidal encoding, [length, dim].
Tensor positional_encoding(std::size_t length, std::size_t dim);

/// Post-norm FFT block: LN(x + SelfAttention(x)), then
/// LN(h + Conv(ReLU(Conv(h)))). Padding rows (row_mask 0) are zeroed
/// before each convolution and on output.
Var fft_block(const Var& x, const FftBlockWeights& weights, std::span<const std::size_t> lengths,
              std::span<const double> row_mask, const ModelConfig& config, ForwardContext& ctx,
              Tensor* attention_probs = nullptr);

/// Phoneme + pitch + note-duration embeddings plus positions through the encoder stack.
/// Returns [B, N, hidden].
Var encode(const TokenBatch& tokens, const ModelParameters& params, const ModelConfig& config,
           ForwardContext& ctx);

/// Per-token log(frames + 1) predictions, [B, N].
Var predict_durations(const Var& hidden, const TokenBatch& tokens,
                      const DurationPredictorWeights& weights, const ModelConfig& config,
                      ForwardContext& ctx);

/// max(1, round(exp(v) - 1)).
int decode_duration(double log_value);

/// Repeats row i of hidden [N, d] durations[i] times. Throws on a duration < 1.
Var length_regulate(const Var& hidden, std::span<const int> durations);
/// Batched form: hidden [B, N, d] -> [B, T, d] following frames.source_row.
Var length_regulate(const Var& hidden, const FrameBatch& frames);

struct DecoderOutput {
  Var mgc;        // [B, T, 60]
  Var bap;        // [B, T, 5]
  Var logf0;      // [B, T]
  Var vuv_logit;  // [B, T]
  Var vuv;        // [B, T]
};

/// Decoder stack, output projection and the residual logF0 connection:
/// logf0 = note_logf0 + residual on non-rest frames, 0 elsewhere.
DecoderOutput decode(const Var& expanded, const FrameBatch& frames, const ModelParameters& params,
                     const ModelConfig& config, ForwardContext& ctx);

/// Single-sequence decode for an already expanded [T, hidden] input.
DecoderOutput decode(const Var& expanded, std::span<const double> frame_note_logf0,
                     std::span<const double> frame_note_mask, const ModelParameters& params,
                     const ModelConfig& config, ForwardContext& ctx);

struct Predictions {
  TokenBatch tokens;
  FrameBatch frames;
  Var hidden;         // encoder output
  Var log_durations;  // [B, N]
  Var expanded;       // decoder input before positional encoding
  DecoderOutput output;
};

/// Training-mode forward pass; length regulation follows the ground-truth
/// durations of each sequence.
Predictions forward_train(std::span<const PhonemeTokenSequence* const> sequences,
                          const ModelParameters& params, const ModelConfig& config,
                          ForwardContext& ctx);

struct Synthesis {
  std::vector<int> durations;
  AcousticFeatureSequence features;
  Tensor expanded;  // [T, hidden]
};

/// Inference. When forced_durations is given it drives the length regulator;
/// otherwise the predicted durations do. `durations` always reports the
/// predictor's decoded output.
Synthesis synthesize(const PhonemeTokenSequence& tokens, const ModelParameters& params,
                     const ModelConfig& config, const std::vector<int>* forced_durations = nullptr);

/// Extracts sequence b of a decoder output as plain features (vuv is a probability).
AcousticFeatureSequence to_features(const DecoderOutput& output, std::size_t b,
                                    std::size_t frames);

}  // namespace cantus
