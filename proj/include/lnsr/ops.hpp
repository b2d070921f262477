#pragma once

// Differentiable primitives. Matrices are 2-D [rows x cols]; "row vector"
// arguments accept either [n] or [1 x n].

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lnsr/tensor.hpp"

namespace lnsr {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a[m x n] + bias broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);

Tensor gelu(const Tensor& x);  // exact erf form
Tensor tanh(const Tensor& x);

/// Softmax over the last axis of a matrix (or over a vector). When
/// `key_mask` is non-empty, columns with mask 0 get probability 0.
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> key_mask = {});

inline constexpr double kLayerNormEps = 1e-5;
/// Row-wise (x - mean) / sqrt(var + eps) * gain + bias.
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = kLayerNormEps);

/// Gathers rows of `table` [V x d]; ids >= V raise IndexError.
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor squared_norm(const Tensor& x);

/// Columns [begin, begin+count) of a matrix.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Multiplies row i by mask[i].
Tensor mask_rows(const Tensor& x, std::span<const double> mask);
/// Mean of the rows whose mask is nonzero; result is [1 x cols].
Tensor mean_rows_masked(const Tensor& x, std::span<const std::uint8_t> mask);

/// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

/// -log softmax(logits)[label]; logits is [C] or [1 x C].
Tensor cross_entropy(const Tensor& logits, std::size_t label);
/// Mean of squared differences against a constant target.
Tensor mse(const Tensor& pred, std::span<const double> target);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace lnsr
