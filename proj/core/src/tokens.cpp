// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/tokens.hpp"

#include "cantus/error.hpp"
#include "cantus/io.hpp"

namespace cantus {

void PhonemeTokenSequence::validate() const {
  const std::size_t n = phoneme_ids.size();
  if (n == 0) throw ValidationError("token sequence is empty");
  if (pitch_ids.size() != n || note_frame_counts.size() != n || note_index.size() != n) {
    throw ValidationError("token sequence: parallel lists differ in length");
  }
  if (gt_durations && gt_durations->size() != n) {
    throw ValidationError("token sequence: duration list length differs");
  }
  std::size_t expect = 0;
  for (const Span& span : syllable_spans) {
    if (span.first != expect || span.second <= span.first) {
      throw ValidationError("token sequence: syllable spans are not a contiguous partition");
    }
    expect = span.second;
  }
  if (expect != n) throw ValidationError("token sequence: syllable spans do not cover all tokens");
  for (std::size_t i = 0; i < n; ++i) {
    if (note_frame_counts[i] < 1) throw ValidationError("token sequence: note frame count < 1");
    if ((pitch_ids[i] == 0) != (phoneme_ids[i] == kSilencePhonemeId)) {
      throw ValidationError("token sequence: pitch 0 must coincide with the silence phoneme");
    }
    if (gt_durations && (*gt_durations)[i] < 1) {
      throw ValidationError("token sequence: duration < 1 at token " + std::to_string(i));
    }
    if (i && note_index[i] != note_index[i - 1] && note_index[i] != note_index[i - 1] + 1) {
      throw ValidationError("token sequence: note indices are not contiguous");
    }
  }
}

int PhonemeTokenSequence::total_gt_frames() const {
  if (!gt_durations) throw ValidationError("token sequence has no durations");
  int total = 0;
  for (int d : *gt_durations) total += d;
  return total;
}

PhonemeTokenSequence score_to_tokens(const MusicalScore& score, const PhonemeLexicon& lexicon,
                                     double frame_shift_s) {
  score.validate();
  PhonemeTokenSequence out;
  auto push = [&](int phoneme, int pitch, int frames, std::size_t note) {
    out.phoneme_ids.push_back(phoneme);
    out.pitch_ids.push_back(pitch);
    out.note_frame_counts.push_back(frames);
    out.note_index.push_back(note);
  };
  for (std::size_t n = 0; n < score.events.size(); ++n) {
    const NoteEvent& ev = score.events[n];
    const int frames = beats_to_frames(ev.beat_length, score.tempo_bpm, frame_shift_s);
    const std::size_t start = out.size();
    if (ev.is_rest()) {
      push(kSilencePhonemeId, 0, frames, n);
      out.syllable_spans.emplace_back(start, out.size());
      continue;
    }
    const auto& phonemes = lexicon.phonemes(ev.syllable);
    if (ev.continues_syllable) {
      // One repeat of the syllable's final vowel carries the new pitch.
      std::string extension = phonemes.back();
      for (auto it = phonemes.rbegin(); it != phonemes.rend(); ++it) {
        if (is_vowel_phoneme(*it)) {
          extension = *it;
          break;
        }
      }
      push(lexicon.phoneme_id(extension), ev.midi_pitch, frames, n);
      out.syllable_spans.back().second = out.size();
      continue;
    }
    for (const std::string& ph : phonemes) push(lexicon.phoneme_id(ph), ev.midi_pitch, frames, n);
    out.syllable_spans.emplace_back(start, out.size());
  }
  return out;
}

std::vector<int> syllable_frame_totals(const PhonemeTokenSequence& tokens) {
  if (!tokens.gt_durations) throw ValidationError("token sequence has no durations");
  std::vector<int> totals;
  totals.reserve(tokens.syllable_spans.size());
  for (const auto& [begin, end] : tokens.syllable_spans) {
    int total = 0;
    for (std::size_t i = begin; i < end; ++i) total += (*tokens.gt_durations)[i];
    totals.push_back(total);
  }
  return totals;
}

std::string serialize_tokens(const PhonemeTokenSequence& tokens, const PhonemeLexicon& lexicon) {
  std::string out = "# phoneme\tphoneme_id\tpitch_id\tnote_frames\tnote\tsyllable\tduration\n";
  std::size_t syllable = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    while (tokens.syllable_spans[syllable].second <= i) ++syllable;
    out += lexicon.phoneme_name(tokens.phoneme_ids[i]);
    for (long long v : {static_cast<long long>(tokens.phoneme_ids[i]),
                        static_cast<long long>(tokens.pitch_ids[i]),
                        static_cast<long long>(tokens.note_frame_counts[i]),
                        static_cast<long long>(tokens.note_index[i]),
                        static_cast<long long>(syllable),
                        static_cast<long long>(tokens.gt_durations ? (*tokens.gt_durations)[i] : -1)}) {
      out += '\t';
      out += std::to_string(v);
    }
    out += '\n';
  }
  return out;
}

PhonemeTokenSequence parse_tokens(std::string_view text) {
  PhonemeTokenSequence out;
  std::vector<int> durations;
  bool any_duration = false, missing_duration = false;
  long long current_syllable = -1;
  std::size_t line_no = 0;
  for (std::string_view raw : split_char(text, '\n')) {
    ++line_no;
    if (trim(raw).empty() || raw.front() == '#') continue;
    const auto fields = split_char(raw, '\t');
    if (fields.size() != 7) throw ParseError(line_no, "token sidecar needs 7 fields");
    long long v[6];
    for (int f = 0; f < 6; ++f) {
      if (!parse_int(trim(fields[f + 1]), v[f])) throw ParseError(line_no, "non-integer field");
    }
    out.phoneme_ids.push_back(static_cast<int>(v[0]));
    out.pitch_ids.push_back(static_cast<int>(v[1]));
    out.note_frame_counts.push_back(static_cast<int>(v[2]));
    out.note_index.push_back(static_cast<std::size_t>(v[3]));
    if (v[4] == current_syllable) {
      out.syllable_spans.back().second = out.size();
    } else if (v[4] == current_syllable + 1) {
      out.syllable_spans.emplace_back(out.size() - 1, out.size());
      current_syllable = v[4];
    } else {
      throw ParseError(line_no, "syllable indices must be consecutive");
    }
    if (v[5] < 0) {
      missing_duration = true;
    } else {
      any_duration = true;
    }
    durations.push_back(static_cast<int>(v[5]));
  }
  if (any_duration && missing_duration) throw ParseError("token sidecar: partial durations");
  if (any_duration) out.gt_durations = std::move(durations);
  try {
    out.validate();
  } catch (const ValidationError& e) {
    throw ParseError(std::string("token sidecar: ") + e.what());
  }
  return out;
}

}  // namespace cantus
