// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cantus {

inline constexpr std::string_view kPaddingPhoneme = "<pad>";
inline constexpr std::string_view kSilencePhoneme = "sil";
inline constexpr int kPaddingPhonemeId = 0;
inline constexpr int kSilencePhonemeId = 1;
inline constexpr std::size_t kMaxPhonemeVocab = 72;

/// Syllable-to-phoneme dictionary plus the phoneme vocabulary it induces.
/// Vocabulary order: <pad>, sil, then phonemes in first-appearance order.
class PhonemeLexicon {
 public:
  PhonemeLexicon() = default;

  /// Parses `<syllable>\t<ph1> <ph2> ...` lines. '#' starts a comment.
  static PhonemeLexicon parse(std::string_view text);
  static PhonemeLexicon load(const std::string& path);
  /// Small pinyin-style lexicon used by the demos and tests.
  static PhonemeLexicon demo();

  void add(const std::string& syllable, const std::vector<std::string>& phonemes);

  bool contains(const std::string& syllable) const { return entries_.count(syllable) != 0; }
  // Throws LookupError naming the syllable when absent.
  const std::vector<std::string>& phonemes(const std::string& syllable) const;
  int phoneme_id(std::string_view phoneme) const;
  const std::string& phoneme_name(int id) const { return vocab_.at(static_cast<std::size_t>(id)); }

  const std::vector<std::string>& vocab() const { return vocab_; }
  std::vector<std::string> syllables() const;
  std::string serialize() const;

 private:
  void ensure_reserved();

  std::map<std::string, std::vector<std::string>> entries_;
  std::vector<std::string> entry_order_;
  std::vector<std::string> vocab_;
  std::map<std::string, int, std::less<>> ids_;
};

/// Vowels (syllable nuclei) are phonemes whose name starts with a, e, i, o, u or v.
bool is_vowel_phoneme(std::string_view phoneme);

}  // namespace cantus
