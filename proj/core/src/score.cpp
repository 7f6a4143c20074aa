// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/score.hpp"

#include <cmath>
#include <stdexcept>

#include "cantus/error.hpp"
#include "cantus/io.hpp"

namespace cantus {
namespace {

// Returns an empty string when the event is consistent with its predecessor.
std::string check_event(const NoteEvent& ev, const NoteEvent* prev) {
  if (!(ev.beat_length > 0.0) || !std::isfinite(ev.beat_length)) {
    return "beat length must be positive";
  }
  if (ev.midi_pitch < 0 || ev.midi_pitch > 127) return "midi pitch must be in [0, 127]";
  if (ev.is_rest() && ev.midi_pitch != 0) return "rest must have pitch 0";
  if (!ev.is_rest() && ev.midi_pitch == 0) return "pitch 0 is reserved for rests";
  if (ev.syllable.empty()) return "empty syllable";
  if (ev.continues_syllable) {
    if (prev == nullptr) return "continuation on first note: no syllable to continue";
    if (ev.is_rest()) return "a rest cannot continue a syllable";
    if (prev->is_rest()) return "continuation after a rest: no syllable to continue";
    if (prev->syllable != ev.syllable) {
      return "continuation syllable '" + ev.syllable + "' differs from previous '" +
             prev->syllable + "'";
    }
  }
  return {};
}

}  // namespace

void MusicalScore::validate() const {
  if (!(tempo_bpm > 0.0) || !std::isfinite(tempo_bpm)) {
    throw ValidationError("tempo must be positive");
  }
  if (events.empty()) throw ValidationError("score has no notes");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::string problem = check_event(events[i], i ? &events[i - 1] : nullptr);
    if (!problem.empty()) {
      throw ValidationError("note " + std::to_string(i + 1) + ": " + problem);
    }
  }
}

MusicalScore parse_score(std::string_view text) {
  MusicalScore score;
  bool have_tempo = false;
  std::size_t line_no = 0;
  for (std::string_view raw : split_char(text, '\n')) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) {
      raw = raw.substr(0, hash);
    }
    const auto fields = split_whitespace(raw);
    if (fields.empty()) continue;

    if (!have_tempo) {
      if (fields[0] != "tempo") throw ParseError(line_no, "expected 'tempo <bpm>' first");
      if (fields.size() != 2) throw ParseError(line_no, "malformed tempo line");
      double bpm = 0.0;
      if (!parse_double(fields[1], bpm)) throw ParseError(line_no, "tempo is not a number");
      if (!(bpm > 0.0) || !std::isfinite(bpm)) {
        throw ParseError(line_no, "tempo must be positive");
      }
      score.tempo_bpm = bpm;
      have_tempo = true;
      continue;
    }

    if (fields.size() < 3) throw ParseError(line_no, "malformed note line");
    if (fields.size() > 4) {
      throw ParseError(line_no, "unknown field '" + std::string(fields[4]) + "'");
    }
    NoteEvent ev;
    ev.syllable = std::string(fields[0]);
    long long pitch = 0;
    if (!parse_int(fields[1], pitch)) throw ParseError(line_no, "pitch is not an integer");
    if (pitch < 0 || pitch > 127) throw ParseError(line_no, "midi pitch must be in [0, 127]");
    ev.midi_pitch = static_cast<int>(pitch);
    if (!parse_double(fields[2], ev.beat_length)) {
      throw ParseError(line_no, "beat length is not a number");
    }
    if (fields.size() == 4) {
      if (fields[3] != "~") {
        throw ParseError(line_no, "unknown field '" + std::string(fields[3]) + "'");
      }
      ev.continues_syllable = true;
    }
    const std::string problem =
        check_event(ev, score.events.empty() ? nullptr : &score.events.back());
    if (!problem.empty()) throw ParseError(line_no, problem);
    score.events.push_back(std::move(ev));
  }
  if (!have_tempo) throw ParseError(line_no, "missing tempo line");
  if (score.events.empty()) throw ParseError(line_no, "score has no notes");
  return score;
}

MusicalScore load_score(const std::string& path) {
  try {
    return parse_score(read_file(path));
  } catch (const ParseError& e) {
    throw e.prefixed(path);
  }
}

std::string serialize_score(const MusicalScore& score) {
  std::string out = "tempo " + format_double(score.tempo_bpm) + "\n";
  for (const NoteEvent& ev : score.events) {
    out += ev.syllable;
    out += ' ';
    out += std::to_string(ev.midi_pitch);
    out += ' ';
    out += format_double(ev.beat_length);
    if (ev.continues_syllable) out += " ~";
    out += '\n';
  }
  return out;
}

double midi_to_hz(int midi_pitch) {
  if (midi_pitch < 1 || midi_pitch > 127) {
    throw std::domain_error("midi_to_hz: pitch " + std::to_string(midi_pitch) +
                            " has no frequency (rests must be handled by the caller)");
  }
  return 440.0 * std::exp2((midi_pitch - 69) / 12.0);
}

int beats_to_frames(double beat_length, double tempo_bpm, double frame_shift_s) {
  if (!(beat_length > 0.0) || !(tempo_bpm > 0.0) || !(frame_shift_s > 0.0)) {
    throw std::invalid_argument("beats_to_frames: arguments must be positive");
  }
  const double frames = beat_length * 60.0 / tempo_bpm / frame_shift_s;
  const double rounded = std::floor(frames + 0.5);
  return rounded < 1.0 ? 1 : static_cast<int>(rounded);
}

}  // namespace cantus
