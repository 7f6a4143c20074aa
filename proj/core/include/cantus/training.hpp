// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cantus/features.hpp"
#include "cantus/losses.hpp"
#include "cantus/model.hpp"
#include "cantus/tokens.hpp"

namespace cantus {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t total_steps = 40000;
  std::size_t warmup_steps = 4000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_epsilon = 1e-9;
  double lr_scale = 1.0;
  double grad_clip = 1.0;  // global-norm clip; 0 disables
  std::uint64_t seed = 1;
  LossWeights loss_weights;
  ModelConfig model;

  void validate() const;

  // Full-size settings (40k steps, warmup 4000, batch 32).
  static TrainConfig paper();
  // Desk-scale settings: 2000 steps, warmup 200, batch 8, tiny model.
  static TrainConfig desk();

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Flat `section.key = value` view of a TrainConfig, in a fixed key order.
std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& config);
/// Sets one key; returns false if the key is not a TrainConfig key.
/// Throws ValidationError on an unparsable value.
bool apply_key_value(TrainConfig& config, const std::string& key, const std::string& value);

/// hidden^-0.5 * min(step^-0.5, step * warmup^-1.5)
double lr_schedule(std::size_t step, std::size_t hidden_dim, std::size_t warmup_steps);

struct Utterance {
  std::string name;
  PhonemeTokenSequence tokens;  // with ground-truth durations
  AcousticFeatureSequence features;
};

/// Checks every utterance and throws one ValidationError listing all failures.
void validate_corpus(const std::vector<Utterance>& corpus, const ModelConfig& model);

struct AdamMoments {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
};

struct TrainState {
  std::uint64_t step = 0;
  TrainConfig config;
  std::vector<std::string> vocab;
  ModelParameters params;
  AdamMoments moments;
};

struct LossRecord {
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

/// step, lr, total, L_pd, L_sd, L_m, L_b, L_f, L_u separated by tabs.
std::string format_loss_record(const LossRecord& record);

/// Thrown when a step produces a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Fresh state: parameters seeded from config.seed, output biases set from
/// corpus means so optimization starts near the data.
TrainState initial_state(const TrainConfig& config, const std::vector<Utterance>& corpus,
                         std::vector<std::string> vocab = {});

/// Mini-batch members for a step. Batches walk a per-epoch shuffle of the
/// corpus and wrap when batch_size exceeds its size.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t batch_size,
                                       std::size_t corpus_size);

/// Owns a deep copy of the parameters it is given. `corpus` must outlive it.
class Trainer {
 public:
  Trainer(TrainState state, const std::vector<Utterance>& corpus);

  /// One Adam update; returns the loss measured before the update.
  LossRecord step();
  bool done() const { return state_.step >= state_.config.total_steps; }

  const TrainState& state() const { return state_; }

 private:
  TrainState state_;
  const std::vector<Utterance>& corpus_;
};

using LossSink = std::function<void(const LossRecord&)>;

/// Runs from state.step + 1 through config.total_steps.
TrainState train(TrainState state, const std::vector<Utterance>& corpus,
                 const LossSink& sink = {});

/// Per-sequence free-running duration prediction (decoded frames).
std::vector<int> predict_token_durations(const PhonemeTokenSequence& tokens,
                                         const ModelParameters& params, const ModelConfig& config);

}  // namespace cantus
