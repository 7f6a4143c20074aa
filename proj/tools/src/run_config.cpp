// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "run_config.hpp"

#include "cantus/error.hpp"
#include "cantus/io.hpp"

namespace cantus::cli {
namespace {

double to_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  if (!parse_double(value, v)) throw ValidationError(key + ": not a number: '" + value + "'");
  return v;
}

long long to_int(const std::string& key, const std::string& value) {
  long long v = 0;
  if (!parse_int(value, v)) throw ValidationError(key + ": not an integer: '" + value + "'");
  return v;
}

std::string join_set(const std::set<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> to_key_values(const RunConfig& c) {
  auto kv = cantus::to_key_values(c.train);
  kv.emplace_back("oracle.seed", std::to_string(c.oracle.seed));
  kv.emplace_back("oracle.vibrato_rate_hz", format_double(c.oracle.vibrato_rate_hz));
  kv.emplace_back("oracle.vibrato_depth_log", format_double(c.oracle.vibrato_depth_log));
  kv.emplace_back("oracle.transition_frames", std::to_string(c.oracle.transition_frames));
  kv.emplace_back("oracle.consonant_fraction", format_double(c.oracle.consonant_fraction));
  kv.emplace_back("oracle.voiced_consonants", join_set(c.oracle.voiced_consonants));
  kv.emplace_back("paths.manifest", c.manifest);
  kv.emplace_back("paths.run_dir", c.run_dir);
  kv.emplace_back("paths.lexicon", c.lexicon);
  return kv;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (auto& [k, v] : to_key_values(RunConfig{})) keys.push_back(k);
  return keys;
}

void apply_key_value(RunConfig& c, const std::string& key, const std::string& value) {
  if (cantus::apply_key_value(c.train, key, value)) return;
  if (key == "oracle.seed") {
    const long long v = to_int(key, value);
    if (v < 0) throw ValidationError(key + ": must be >= 0");
    c.oracle.seed = static_cast<std::uint64_t>(v);
  } else if (key == "oracle.vibrato_rate_hz") {
    c.oracle.vibrato_rate_hz = to_real(key, value);
  } else if (key == "oracle.vibrato_depth_log") {
    c.oracle.vibrato_depth_log = to_real(key, value);
  } else if (key == "oracle.transition_frames") {
    c.oracle.transition_frames = static_cast<int>(to_int(key, value));
  } else if (key == "oracle.consonant_fraction") {
    c.oracle.consonant_fraction = to_real(key, value);
  } else if (key == "oracle.voiced_consonants") {
    c.oracle.voiced_consonants.clear();
    for (auto item : split_char(value, ',')) {
      if (!trim(item).empty()) c.oracle.voiced_consonants.emplace(trim(item));
    }
  } else if (key == "paths.manifest") {
    c.manifest = value;
  } else if (key == "paths.run_dir") {
    c.run_dir = value;
  } else if (key == "paths.lexicon") {
    c.lexicon = value;
  } else {
    throw ValidationError("unknown config key '" + key + "'");
  }
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    try {
      apply_key_value(base, std::string(trim(line.substr(0, eq))),
                      std::string(trim(line.substr(eq + 1))));
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return base;
}

std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : to_key_values(config)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace cantus::cli
