// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "cantus/oracle.hpp"
#include "cantus/training.hpp"
#include "support.hpp"

namespace cantus::test {

/// In-memory oracle corpus of short random scores.
inline std::vector<Utterance> small_corpus(std::size_t n, std::uint64_t seed, int max_notes = 4) {
  Gen g(seed);
  const PhonemeLexicon lex = PhonemeLexicon::demo();
  std::vector<Utterance> out;
  while (out.size() < n) {
    MusicalScore s = g.score(lex, max_notes);
    s.tempo_bpm = 120.0 + 60.0 * g.uniform(0.0, 1.0);
    for (NoteEvent& ev : s.events) {
      ev.beat_length = std::clamp(ev.beat_length, 0.25, 1.0);
      if (!ev.is_rest()) ev.midi_pitch = g.integer(55, 79);
    }
    const OracleOutput sung = oracle_sing(s, lex, OracleConfig{});
    out.push_back({"utt" + std::to_string(out.size()), sung.tokens, sung.features});
  }
  return out;
}

inline TrainConfig small_train_config() {
  TrainConfig c = TrainConfig::desk();
  c.model.hidden_dim = 8;
  c.model.conv_filter_dim = 12;
  c.model.duration_filter_dim = 6;
  c.model.max_note_frames = 128;
  c.batch_size = 2;
  c.warmup_steps = 20;
  c.total_steps = 10;
  c.seed = 3;
  return c;
}

}  // namespace cantus::test
