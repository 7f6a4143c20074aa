// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/features.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "cantus/error.hpp"
#include "cantus/io.hpp"

namespace cantus {
namespace {

constexpr std::string_view kMagic = "CNTSFEAT";
constexpr std::uint32_t kVersion = 1;

}  // namespace

void AcousticFeatureSequence::validate() const {
  const std::size_t t = frames();
  if (t == 0) throw ValidationError("feature sequence has no frames");
  if (mgc.size() != t * kMgcDim || bap.size() != t * kBapDim || vuv.size() != t) {
    throw ValidationError("feature sequence: block sizes disagree with T=" + std::to_string(t));
  }
}

std::string encode_features(const AcousticFeatureSequence& features) {
  features.validate();
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kVersion);
  const std::size_t t = features.frames();
  w.u64(t);
  auto block = [&](std::string_view name, const std::vector<double>& values, std::size_t cols) {
    w.string(name);
    w.u64(t);
    w.u64(cols);
    w.f64s(values);
  };
  block("mgc", features.mgc, kMgcDim);
  block("bap", features.bap, kBapDim);
  block("logf0", features.logf0, 1);
  block("vuv", features.vuv, 1);
  return w.buffer();
}

AcousticFeatureSequence decode_features(std::string_view bytes) {
  detail::ByteReader r(bytes, "feature file");
  if (r.bytes(kMagic.size()) != kMagic) throw IoError("feature file: bad magic");
  if (const auto version = r.u32(); version != kVersion) {
    throw IoError("feature file: unsupported version " + std::to_string(version));
  }
  const std::uint64_t t = r.u64();
  if (t == 0 || t > (1u << 26)) throw IoError("feature file: implausible frame count");
  AcousticFeatureSequence out(static_cast<std::size_t>(t));
  auto block = [&](std::string_view name, std::vector<double>& values, std::size_t cols) {
    if (r.string(64) != name) throw IoError("feature file: expected block '" + std::string(name) + "'");
    if (r.u64() != t || r.u64() != cols) {
      throw IoError("feature file: block '" + std::string(name) + "' has wrong dimensions");
    }
    values = r.f64s(static_cast<std::size_t>(t) * cols);
  };
  block("mgc", out.mgc, kMgcDim);
  block("bap", out.bap, kBapDim);
  block("logf0", out.logf0, 1);
  block("vuv", out.vuv, 1);
  if (!r.at_end()) throw IoError("feature file: trailing bytes");
  return out;
}

void save_features(const std::string& path, const AcousticFeatureSequence& features) {
  write_file_atomic(path, encode_features(features));
}

AcousticFeatureSequence load_features(const std::string& path) {
  try {
    return decode_features(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace cantus
