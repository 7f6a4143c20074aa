// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "cantus/error.hpp"
#include "cantus/io.hpp"

namespace cantus {
namespace {

namespace fs = std::filesystem;

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001B3ull;
  return h;
}

// Portable draws; std distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return splitmix64(state_); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

 private:
  std::uint64_t state_;
};

constexpr double kTempos[] = {80.0, 100.0, 120.0, 140.0};
constexpr double kBeats[] = {0.25, 0.5, 1.0, 2.0};
constexpr int kMinPitch = 55, kMaxPitch = 79;
constexpr std::size_t kMinNotes = 5, kMaxNotes = 30;
constexpr double kRestProbability = 0.1;
constexpr double kMelismaProbability = 0.1;

std::string song_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "song_%04zu", i);
  return buf;
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).string();
}

}  // namespace

void OracleConfig::validate() const {
  if (!(consonant_fraction > 0.0 && consonant_fraction < 1.0)) {
    throw ValidationError("oracle: consonant_fraction must lie in (0, 1)");
  }
  if (transition_frames < 0) throw ValidationError("oracle: transition_frames must be >= 0");
  if (!(vibrato_depth_log >= 0.0) || !(vibrato_rate_hz >= 0.0)) {
    throw ValidationError("oracle: vibrato depth and rate must be >= 0");
  }
  for (const auto& [name, t] : templates) {
    if (t.size() != kMgcDim) throw ValidationError("oracle: template for '" + name + "' is not 60-d");
  }
}

std::vector<double> OracleConfig::mgc_template(const std::string& phoneme) const {
  if (auto it = templates.find(phoneme); it != templates.end()) return it->second;
  std::uint64_t state = seed ^ fnv1a(phoneme);
  Rng rng(splitmix64(state));
  std::vector<double> t(kMgcDim);
  for (double& v : t) v = rng.uniform() - 0.5;
  return t;
}

bool OracleConfig::is_voiced(const std::string& phoneme) const {
  if (phoneme == kSilencePhoneme || phoneme == kPaddingPhoneme) return false;
  return is_vowel_phoneme(phoneme) || voiced_consonants.count(phoneme) != 0;
}

std::vector<int> split_note_frames(int frames, const std::vector<bool>& is_vowel,
                                   double consonant_fraction) {
  const int n = static_cast<int>(is_vowel.size());
  if (n == 0) throw ValidationError("split_note_frames: note has no phonemes");
  if (frames < n) {
    throw ValidationError("split_note_frames: " + std::to_string(frames) + " frames cannot cover " +
                          std::to_string(n) + " phonemes");
  }
  const int vowels = static_cast<int>(std::count(is_vowel.begin(), is_vowel.end(), true));
  const int consonants = n - vowels;
  int consonant_total = 0;
  if (vowels == 0) {
    consonant_total = frames;
  } else if (consonants > 0) {
    consonant_total = static_cast<int>(std::floor(consonant_fraction * frames + 0.5));
    consonant_total = std::clamp(consonant_total, consonants, frames - vowels);
  }
  const int vowel_total = frames - consonant_total;
  std::vector<int> out(n);
  int c_seen = 0, v_seen = 0;
  for (int i = 0; i < n; ++i) {
    const bool v = is_vowel[i];
    const int count = v ? vowels : consonants;
    const int total = v ? vowel_total : consonant_total;
    int& seen = v ? v_seen : c_seen;
    out[i] = total / count + (seen < total % count ? 1 : 0);
    ++seen;
  }
  return out;
}

OracleOutput oracle_sing(const MusicalScore& score, const PhonemeLexicon& lexicon,
                         const OracleConfig& config) {
  config.validate();
  OracleOutput out;
  out.tokens = score_to_tokens(score, lexicon);
  PhonemeTokenSequence& tok = out.tokens;

  std::vector<int> durations(tok.size());
  for (std::size_t begin = 0; begin < tok.size();) {
    std::size_t end = begin;
    while (end < tok.size() && tok.note_index[end] == tok.note_index[begin]) ++end;
    std::vector<bool> vowel;
    for (std::size_t i = begin; i < end; ++i) {
      const std::string& name = lexicon.phoneme_name(tok.phoneme_ids[i]);
      vowel.push_back(tok.phoneme_ids[i] == kSilencePhonemeId || is_vowel_phoneme(name));
    }
    const auto split = split_note_frames(tok.note_frame_counts[begin], vowel, config.consonant_fraction);
    std::copy(split.begin(), split.end(), durations.begin() + static_cast<std::ptrdiff_t>(begin));
    begin = end;
  }
  tok.gt_durations = durations;

  std::size_t total = 0;
  for (int d : durations) total += static_cast<std::size_t>(d);
  AcousticFeatureSequence& f = out.features;
  f = AcousticFeatureSequence(total);

  std::map<int, std::vector<double>> templates;
  auto template_of = [&](int id) -> const std::vector<double>& {
    auto it = templates.find(id);
    if (it == templates.end()) {
      it = templates.emplace(id, config.mgc_template(lexicon.phoneme_name(id))).first;
    }
    return it->second;
  };

  const double omega = 2.0 * std::numbers::pi * config.vibrato_rate_hz * f.frame_shift_s;
  std::size_t t = 0;
  std::size_t note_onset = 0;
  for (std::size_t i = 0; i < tok.size(); ++i) {
    if (i == 0 || tok.note_index[i] != tok.note_index[i - 1]) note_onset = t;
    const int id = tok.phoneme_ids[i];
    const std::string& name = lexicon.phoneme_name(id);
    const bool rest = tok.pitch_ids[i] == 0;
    const bool voiced = !rest && config.is_voiced(name);
    const double note_logf0 = rest ? 0.0 : std::log(midi_to_hz(tok.pitch_ids[i]));
    const auto& cur = template_of(id);
    const std::vector<double>* prev = i > 0 ? &template_of(tok.phoneme_ids[i - 1]) : nullptr;
    for (int k = 0; k < durations[i]; ++k, ++t) {
      double* mgc = f.mgc.data() + t * kMgcDim;
      if (prev && k < config.transition_frames) {
        const double alpha = (k + 1.0) / (config.transition_frames + 1.0);
        for (std::size_t d = 0; d < kMgcDim; ++d) mgc[d] = (1.0 - alpha) * (*prev)[d] + alpha * cur[d];
      } else {
        std::copy(cur.begin(), cur.end(), mgc);
      }
      std::fill_n(f.bap.begin() + static_cast<std::ptrdiff_t>(t * kBapDim), kBapDim,
                  voiced ? -60.0 : 0.0);
      f.vuv[t] = voiced ? 1.0 : 0.0;
      f.logf0[t] = voiced ? note_logf0 + config.vibrato_depth_log *
                                             std::sin(omega * static_cast<double>(t - note_onset))
                          : 0.0;
    }
  }
  return out;
}

std::vector<ManifestEntry> CorpusManifest::split(const std::string& tag) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (tag.empty() || e.split == tag) out.push_back(e);
  }
  return out;
}

std::string serialize_manifest(const CorpusManifest& manifest) {
  std::string out = "# score\tfeatures\tsplit\ttokens\n";
  if (!manifest.lexicon_path.empty()) out += "# lexicon " + manifest.lexicon_path + "\n";
  for (const auto& e : manifest.entries) {
    out += e.score_path + "\t" + e.features_path + "\t" + e.split;
    if (!e.tokens_path.empty()) out += "\t" + e.tokens_path;
    out += "\n";
  }
  return out;
}

CorpusManifest parse_manifest(std::string_view text, const std::string& base_dir) {
  CorpusManifest m;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view kLex = "# lexicon ";
      if (line.substr(0, kLex.size()) == kLex) {
        m.lexicon_path = resolve(base_dir, std::string(trim(line.substr(kLex.size()))));
      }
      continue;
    }
    const auto fields = split_char(line, '\t');
    if (fields.size() < 3 || fields.size() > 4) {
      throw ParseError(line_no, "manifest: expected 3 or 4 tab-separated fields");
    }
    ManifestEntry e;
    e.score_path = resolve(base_dir, std::string(trim(fields[0])));
    e.features_path = resolve(base_dir, std::string(trim(fields[1])));
    e.split = std::string(trim(fields[2]));
    if (fields.size() == 4) e.tokens_path = resolve(base_dir, std::string(trim(fields[3])));
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      throw ParseError(line_no, "manifest: split must be train, val or test, got '" + e.split + "'");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

CorpusManifest load_manifest(const std::string& path) {
  const std::string base = fs::path(path).parent_path().string();
  CorpusManifest m = parse_manifest(read_file(path), base);
  std::string missing;
  for (const auto& e : m.entries) {
    for (const std::string* p : {&e.score_path, &e.features_path, &e.tokens_path}) {
      if (!p->empty() && !fs::exists(*p)) missing += "\n  " + *p;
    }
  }
  if (!missing.empty()) throw IoError("manifest " + path + " references missing files:" + missing);
  return m;
}

MusicalScore random_score(std::uint64_t seed, const PhonemeLexicon& lexicon) {
  const auto syllables = lexicon.syllables();
  if (syllables.empty()) throw ValidationError("random_score: empty lexicon");
  Rng rng(seed);
  MusicalScore score;
  score.tempo_bpm = kTempos[rng.below(std::size(kTempos))];
  const std::size_t notes = kMinNotes + rng.below(kMaxNotes - kMinNotes + 1);
  for (std::size_t n = 0; n < notes; ++n) {
    NoteEvent ev;
    ev.beat_length = kBeats[rng.below(std::size(kBeats))];
    const double u = rng.uniform();
    const bool prev_sung = !score.events.empty() && !score.events.back().is_rest();
    if (n > 0 && u < kRestProbability) {
      ev.syllable = std::string(kRestMarker);
      ev.midi_pitch = 0;
    } else {
      ev.midi_pitch = kMinPitch + static_cast<int>(rng.below(kMaxPitch - kMinPitch + 1));
      if (prev_sung && u < kRestProbability + kMelismaProbability) {
        ev.syllable = score.events.back().syllable;
        ev.continues_syllable = true;
      } else {
        ev.syllable = syllables[rng.below(syllables.size())];
      }
    }
    score.events.push_back(std::move(ev));
  }
  return score;
}

CorpusManifest generate_corpus(std::size_t n_songs, std::uint64_t seed, const OracleConfig& config,
                               const std::string& out_dir) {
  if (n_songs == 0) throw ValidationError("generate_corpus: n_songs must be >= 1");
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError("cannot create corpus directory " + out_dir + ": " + ec.message());
  }
  const PhonemeLexicon lexicon = PhonemeLexicon::demo();
  const fs::path root(out_dir);
  write_file_atomic((root / "lexicon.txt").string(), lexicon.serialize());

  CorpusManifest manifest;
  manifest.lexicon_path = "lexicon.txt";
  const std::size_t n_train = n_songs * 9 / 10;
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < n_songs; ++i) {
    const MusicalScore score = random_score(splitmix64(state), lexicon);
    const OracleOutput sung = oracle_sing(score, lexicon, config);
    const std::string name = song_name(i);
    ManifestEntry e{name + ".score", name + ".feat", i < n_train ? "train" : "test",
                    name + ".tokens.tsv"};
    write_file_atomic((root / e.score_path).string(), serialize_score(score));
    write_file_atomic((root / e.features_path).string(), encode_features(sung.features));
    write_file_atomic((root / e.tokens_path).string(), serialize_tokens(sung.tokens, lexicon));
    manifest.entries.push_back(std::move(e));
  }
  const std::string text = serialize_manifest(manifest);
  write_file_atomic((root / "manifest.tsv").string(), text);
  return parse_manifest(text, out_dir);
}

std::vector<Utterance> load_corpus(const CorpusManifest& manifest, const PhonemeLexicon& lexicon,
                                   const std::string& split, const OracleConfig& config) {
  std::vector<Utterance> out;
  for (const ManifestEntry& e : manifest.split(split)) {
    Utterance u;
    u.name = fs::path(e.score_path).stem().string();
    if (!e.tokens_path.empty()) {
      u.tokens = parse_tokens(read_file(e.tokens_path));
    } else {
      u.tokens = oracle_sing(load_score(e.score_path), lexicon, config).tokens;
    }
    u.features = load_features(e.features_path);
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace cantus
