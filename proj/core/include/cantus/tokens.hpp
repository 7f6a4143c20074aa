// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cantus/lexicon.hpp"
#include "cantus/score.hpp"

namespace cantus {

using Span = std::pair<std::size_t, std::size_t>;  // [begin, end)

/// Phoneme-level model input: one row per phoneme carrying the phoneme id and
/// the pitch id and frame count of the note it belongs to.
struct PhonemeTokenSequence {
  std::vector<int> phoneme_ids;
  std::vector<int> pitch_ids;
  std::vector<int> note_frame_counts;
  std::vector<Span> syllable_spans;
  // Index of the note each token was produced from. Tokens of one note are contiguous.
  std::vector<std::size_t> note_index;
  std::optional<std::vector<int>> gt_durations;

  std::size_t size() const { return phoneme_ids.size(); }
  void validate() const;
  int total_gt_frames() const;
  friend bool operator==(const PhonemeTokenSequence&, const PhonemeTokenSequence&) = default;
};

/// Expands a score into phoneme tokens. A melisma's later notes each
/// contribute one repeat of the syllable's final vowel; rests become one
/// silence token with pitch 0.
PhonemeTokenSequence score_to_tokens(const MusicalScore& score, const PhonemeLexicon& lexicon,
                                     double frame_shift_s = kFrameShiftSeconds);

/// Per-syllable ground-truth frame totals. Requires gt_durations.
std::vector<int> syllable_frame_totals(const PhonemeTokenSequence& tokens);

// Tab-separated sidecar: phoneme, phoneme_id, pitch_id, note_frames, note, syllable, duration.
std::string serialize_tokens(const PhonemeTokenSequence& tokens, const PhonemeLexicon& lexicon);
PhonemeTokenSequence parse_tokens(std::string_view text);

}  // namespace cantus
