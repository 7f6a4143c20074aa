// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cantus {

inline constexpr std::string_view kRestMarker = "-";
inline constexpr double kFrameShiftSeconds = 0.015;

struct NoteEvent {
  std::string syllable;  // kRestMarker for rests
  int midi_pitch = 0;    // 0 iff rest
  double beat_length = 1.0;
  bool continues_syllable = false;  // melisma: same syllable as the previous note

  bool is_rest() const { return syllable == kRestMarker; }
  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

struct MusicalScore {
  double tempo_bpm = 120.0;
  std::vector<NoteEvent> events;

  // Throws ValidationError on the first broken invariant.
  void validate() const;
  friend bool operator==(const MusicalScore&, const MusicalScore&) = default;
};

/// Parses the line-oriented score format:
///
///   # comment
///   tempo 120
///   la 69 1.0
///   la 71 0.5 ~      <- melisma continuation of "la"
///   - 0 1.0          <- rest
///
/// Throws ParseError carrying the offending line number.
MusicalScore parse_score(std::string_view text);
MusicalScore load_score(const std::string& path);

/// Inverse of parse_score. Numbers use shortest round-trip formatting.
std::string serialize_score(const MusicalScore& score);

/// Equal-tempered frequency, A4 = MIDI 69 = 440 Hz. Throws std::domain_error
/// for pitch 0 (rest) or anything outside [1, 127].
double midi_to_hz(int midi_pitch);

/// max(1, round_half_up(beats * 60 / tempo / frame_shift)).
int beats_to_frames(double beat_length, double tempo_bpm,
                    double frame_shift_s = kFrameShiftSeconds);

}  // namespace cantus
