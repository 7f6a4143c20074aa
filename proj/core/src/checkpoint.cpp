// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cantus/checkpoint.hpp"

#include <map>

#include "binary_io.hpp"
#include "cantus/error.hpp"
#include "cantus/io.hpp"

namespace cantus {
namespace {

constexpr std::string_view kMagic = "CNTSCKPT";
constexpr std::uint32_t kVersion = 1;

void write_tensor(detail::ByteWriter& w, const std::string& name, const Tensor& t) {
  w.string(name);
  w.u64(t.rank());
  for (std::size_t d : t.shape()) w.u64(d);
  w.f64s(t.data());
}

std::string join_vocab(const std::vector<std::string>& vocab) {
  std::string out;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (i) out += ' ';
    out += vocab[i];
  }
  return out;
}

}  // namespace

std::string encode_checkpoint(const TrainState& state) {
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u64(state.step);
  std::string meta;
  for (const auto& [key, value] : to_key_values(state.config)) meta += key + " = " + value + "\n";
  meta += "vocab = " + join_vocab(state.vocab) + "\n";
  w.string(meta);

  const auto named = state.params.named();
  w.u64(named.size() * 3);
  for (const auto& [name, var] : named) write_tensor(w, name, var.value());
  for (std::size_t i = 0; i < named.size(); ++i) {
    write_tensor(w, "adam.m." + named[i].first, state.moments.first.at(i));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    write_tensor(w, "adam.v." + named[i].first, state.moments.second.at(i));
  }
  return w.buffer();
}

TrainState decode_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.bytes(kMagic.size()) != kMagic) throw IoError("checkpoint: bad magic");
  if (const auto version = r.u32(); version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  TrainState state;
  state.step = r.u64();
  const std::string meta = r.string();
  for (std::string_view line : split_char(meta, '\n')) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw IoError("checkpoint: malformed meta line");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key == "vocab") {
      for (std::string_view ph : split_whitespace(value)) state.vocab.emplace_back(ph);
    } else if (!apply_key_value(state.config, key, value)) {
      throw IoError("checkpoint: unknown meta key '" + key + "'");
    }
  }
  state.config.validate();

  std::map<std::string, Tensor> tensors;
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.string(4096);
    const std::uint64_t rank = r.u64();
    if (rank > 8) throw IoError("checkpoint: tensor '" + name + "' has implausible rank");
    Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.u64()));
    std::vector<double> values = r.f64s(shape_size(shape));
    if (!tensors.emplace(name, Tensor(shape, std::move(values))).second) {
      throw IoError("checkpoint: duplicate tensor '" + name + "'");
    }
  }
  if (!r.at_end()) throw IoError("checkpoint: trailing bytes");

  state.params = ModelParameters::init(state.config.model, 0);
  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw IoError("checkpoint: tensor '" + name + "' has shape " +
                    shape_string(it->second.shape()) + ", expected " + shape_string(shape));
    }
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
  };
  for (auto& [name, var] : state.params.named()) {
    var.mutable_value() = take(name, var.shape());
  }
  for (auto& [name, var] : state.params.named()) {
    state.moments.first.push_back(take("adam.m." + name, var.shape()));
  }
  for (auto& [name, var] : state.params.named()) {
    state.moments.second.push_back(take("adam.v." + name, var.shape()));
  }
  if (!tensors.empty()) throw IoError("checkpoint: unexpected tensor '" + tensors.begin()->first + "'");
  return state;
}

void save_checkpoint(const std::string& path, const TrainState& state) {
  write_file_atomic(path, encode_checkpoint(state));
}

TrainState load_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace cantus
