// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cantus/features.hpp"
#include "cantus/lexicon.hpp"
#include "cantus/score.hpp"
#include "cantus/tokens.hpp"
#include "cantus/training.hpp"

namespace cantus {

/// Deterministic synthetic singer.
struct OracleConfig {
  std::uint64_t seed = 1;
  double vibrato_rate_hz = 5.5;
  double vibrato_depth_log = 0.03;
  int transition_frames = 3;
  double consonant_fraction = 0.25;
  std::set<std::string> voiced_consonants = {"l", "m", "n", "r", "w", "y"};
  // Explicit MGC templates; phonemes not listed get a seeded U[-0.5, 0.5] vector.
  std::map<std::string, std::vector<double>> templates;

  void validate() const;
  std::vector<double> mgc_template(const std::string& phoneme) const;
  bool is_voiced(const std::string& phoneme) const;

  friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

struct OracleOutput {
  PhonemeTokenSequence tokens;  // with gt durations
  AcousticFeatureSequence features;
};

/// Splits one note's frames over its phonemes: non-vowels share
/// round(consonant_fraction * frames), vowels share the rest, and every
/// phoneme keeps at least one frame. Equal shares, remainder to the earliest.
std::vector<int> split_note_frames(int frames, const std::vector<bool>& is_vowel,
                                   double consonant_fraction);

OracleOutput oracle_sing(const MusicalScore& score, const PhonemeLexicon& lexicon,
                         const OracleConfig& config);

struct ManifestEntry {
  std::string score_path;
  std::string features_path;
  std::string split;        // train, val or test
  std::string tokens_path;  // may be empty
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::string lexicon_path;  // may be empty

  std::vector<ManifestEntry> split(const std::string& tag) const;
  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

/// Tab-separated: `score<TAB>features<TAB>split[<TAB>tokens]`, plus an optional
/// `# lexicon <path>` line. Relative paths are resolved against the manifest's
/// directory on load.
std::string serialize_manifest(const CorpusManifest& manifest);
CorpusManifest parse_manifest(std::string_view text, const std::string& base_dir = "");
CorpusManifest load_manifest(const std::string& path);

/// Random score drawn from the generator's distribution.
MusicalScore random_score(std::uint64_t seed, const PhonemeLexicon& lexicon);

/// Writes n_songs scores, feature files, token sidecars, lexicon.txt and
/// manifest.tsv under `out_dir`; the first floor(0.9 n) songs are "train",
/// the rest "test". Throws IoError when the directory is unwritable.
CorpusManifest generate_corpus(std::size_t n_songs, std::uint64_t seed, const OracleConfig& config,
                               const std::string& out_dir);

/// Loads the entries of one split (all entries if `split` is empty).
/// Tokens come from the sidecar when present, otherwise from the score
/// with durations re-derived by the oracle split rule.
std::vector<Utterance> load_corpus(const CorpusManifest& manifest, const PhonemeLexicon& lexicon,
                                   const std::string& split = "",
                                   const OracleConfig& config = {});

}  // namespace cantus
