// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "cantus/autodiff.hpp"

namespace cantus::ops {

// Elementwise arithmetic. Operands must have identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double offset);

// x[..., n] + bias[n]. The only broadcast the library supports.
Var add_bias(const Var& x, const Var& bias);

// x[..., k] @ w[k, n] -> [..., n]
Var matmul(const Var& x, const Var& w);

// Rows of a [V, d] table selected by ids; output shape is ids_shape + {d}.
Var embedding(const Var& table, std::span<const std::int64_t> ids, const Shape& ids_shape);

// Rows of x viewed as [rows, d]. Index -1 yields a zero row. Output [index.size(), d]
// reshaped to out_shape + {d}.
Var gather_rows(const Var& x, std::span<const std::int64_t> index, const Shape& out_shape);

// Same-length 1-D convolution over axis 1 of x[B, L, Cin] with symmetric zero
// padding. weight[K, Cin, Cout] with odd K, bias[Cout].
Var conv1d(const Var& x, const Var& weight, const Var& bias);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var log(const Var& x);
Var exp(const Var& x);
Var abs(const Var& x);  // subgradient 0 at 0

Var softmax(const Var& x);  // over the last axis

inline constexpr double kLayerNormEpsilon = 1e-10;
Var layer_norm(const Var& x, const Var& gain, const Var& bias,
               double epsilon = kLayerNormEpsilon);

// Inverted dropout. Identity when !training or rate == 0.
Var dropout(const Var& x, double rate, bool training, std::mt19937_64& rng);

// Multi-head scaled dot-product attention over q, k, v of shape [B, L, H*dh].
// lengths[b] marks the valid prefix of sequence b; keys past it are masked
// and query rows past it produce zeros. When probs is non-null it receives
// the attention weights as [B, H, L, L] (zero outside the valid block).
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads,
              std::span<const std::size_t> lengths, Tensor* probs = nullptr);

Var concat_last(const std::vector<Var>& parts);
std::vector<Var> split_last(const Var& x, std::span<const std::size_t> widths);

Var reshape(const Var& x, Shape shape);

// Multiplies each last-axis vector r of x by row_scale[r].
Var mask_rows(const Var& x, std::span<const double> row_scale);

Var sum(const Var& x);
Var mean(const Var& x);
// Mean over elements with mask != 0; 0 (with zero gradient) if none selected.
// Unselected elements are never read, so their values cannot affect the result.
Var masked_mean(const Var& x, std::span<const std::uint8_t> mask);

// Sums over flat index ranges [begin, end) of x. Output shape {spans.size()}.
Var segment_sum(const Var& x, std::span<const std::pair<std::size_t, std::size_t>> spans);

// Numerically stable elementwise binary cross-entropy of sigmoid(logits)
// against targets in [0, 1].
Var bce_with_logits(const Var& logits, const Tensor& targets);

}  // namespace cantus::ops
