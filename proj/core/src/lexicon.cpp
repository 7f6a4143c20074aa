// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/lexicon.hpp"

#include "cantus/error.hpp"
#include "cantus/io.hpp"
#include "cantus/score.hpp"

namespace cantus {

bool is_vowel_phoneme(std::string_view phoneme) {
  if (phoneme.empty()) return false;
  switch (phoneme.front()) {
    case 'a': case 'e': case 'i': case 'o': case 'u': case 'v':
      return true;
    default:
      return false;
  }
}

void PhonemeLexicon::ensure_reserved() {
  if (!vocab_.empty()) return;
  for (std::string_view name : {kPaddingPhoneme, kSilencePhoneme}) {
    ids_.emplace(std::string(name), static_cast<int>(vocab_.size()));
    vocab_.emplace_back(name);
  }
}

void PhonemeLexicon::add(const std::string& syllable, const std::vector<std::string>& phonemes) {
  ensure_reserved();
  if (syllable.empty() || syllable == kRestMarker) {
    throw ValidationError("lexicon: invalid syllable '" + syllable + "'");
  }
  if (phonemes.empty()) throw ValidationError("lexicon: '" + syllable + "' has no phonemes");
  if (entries_.count(syllable)) throw ValidationError("lexicon: duplicate syllable '" + syllable + "'");
  for (const std::string& ph : phonemes) {
    if (ph == kPaddingPhoneme) throw ValidationError("lexicon: '<pad>' is reserved");
    if (ids_.count(ph)) continue;
    if (vocab_.size() >= kMaxPhonemeVocab) {
      throw ValidationError("lexicon: phoneme vocabulary exceeds " +
                            std::to_string(kMaxPhonemeVocab));
    }
    ids_.emplace(ph, static_cast<int>(vocab_.size()));
    vocab_.push_back(ph);
  }
  entries_.emplace(syllable, phonemes);
  entry_order_.push_back(syllable);
}

PhonemeLexicon PhonemeLexicon::parse(std::string_view text) {
  PhonemeLexicon lex;
  lex.ensure_reserved();
  std::size_t line_no = 0;
  for (std::string_view raw : split_char(text, '\n')) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    if (trim(raw).empty()) continue;
    const auto tab = raw.find('\t');
    if (tab == std::string_view::npos) throw ParseError(line_no, "lexicon entry needs a TAB");
    const std::string syllable(trim(raw.substr(0, tab)));
    std::vector<std::string> phonemes;
    for (std::string_view ph : split_whitespace(raw.substr(tab + 1))) phonemes.emplace_back(ph);
    try {
      lex.add(syllable, phonemes);
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return lex;
}

PhonemeLexicon PhonemeLexicon::load(const std::string& path) {
  try {
    return parse(read_file(path));
  } catch (const ParseError& e) {
    throw e.prefixed(path);
  }
}

PhonemeLexicon PhonemeLexicon::demo() {
  static constexpr std::string_view kDemo =
      "la\tl a\n"
      "li\tl i\n"
      "lu\tl u\n"
      "ma\tm a\n"
      "mei\tm ei\n"
      "ni\tn i\n"
      "na\tn a\n"
      "nan\tn an\n"
      "hao\th ao\n"
      "hai\th ai\n"
      "wo\tw o\n"
      "ai\tai\n"
      "ni3\tn i\n"
      "de\td e\n"
      "di\td i\n"
      "tian\tt i an\n"
      "kong\tk ong\n"
      "xin\tx in\n"
      "xiang\tx i ang\n"
      "yue\ty ve\n"
      "liang\tl i ang\n"
      "feng\tf eng\n"
      "hua\th u a\n"
      "xue\tx ve\n"
      "qing\tq ing\n"
      "chang\tch ang\n"
      "ge\tg e\n"
      "sheng\tsh eng\n"
      "zhong\tzh ong\n"
      "shi\tsh ir\n"
      "ren\tr en\n"
      "bu\tb u\n"
      "pa\tp a\n"
      "guang\tg u ang\n"
      "meng\tm eng\n"
      "you\ty ou\n"
      "er\ter\n"
      "jia\tj i a\n"
      "zai\tz ai\n"
      "cong\tc ong\n";
  return parse(kDemo);
}

const std::vector<std::string>& PhonemeLexicon::phonemes(const std::string& syllable) const {
  auto it = entries_.find(syllable);
  if (it == entries_.end()) throw LookupError("unknown syllable '" + syllable + "'");
  return it->second;
}

int PhonemeLexicon::phoneme_id(std::string_view phoneme) const {
  auto it = ids_.find(phoneme);
  if (it == ids_.end()) throw LookupError("unknown phoneme '" + std::string(phoneme) + "'");
  return it->second;
}

std::vector<std::string> PhonemeLexicon::syllables() const { return entry_order_; }

std::string PhonemeLexicon::serialize() const {
  std::string out;
  for (const std::string& syl : entry_order_) {
    out += syl;
    out += '\t';
    const auto& phs = entries_.at(syl);
    for (std::size_t i = 0; i < phs.size(); ++i) {
      if (i) out += ' ';
      out += phs[i];
    }
    out += '\n';
  }
  return out;
}

}  // namespace cantus
