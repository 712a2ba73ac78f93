#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "genex/rng.hpp"
#include "genex/tensor.hpp"

namespace genex {

using TokenId = std::int32_t;

// Boolean rows x cols attention mask; true = the column may be attended.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool allowed = true)
      : rows_(rows), cols_(cols), bits_(rows * cols, allowed ? 1 : 0) {}

  static Mask causal(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool allowed(std::size_t row, std::size_t col) const { return bits_[row * cols_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool allowed) {
    bits_[row * cols_ + col] = allowed ? 1 : 0;
  }
  std::size_t allowed_in_row(std::size_t row) const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const Mask&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

// All ops below treat a tensor as rows() x cols(), the last axis being the
// feature axis. Outputs are recorded in the graph when grad mode is on and
// any input requires a gradient.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a[r x c] + bias[c] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);

// Softmax over the allowed columns of each row. Disallowed outputs are exactly
// zero and their logits are never read. Throws NumericError on a row with no
// allowed column.
Tensor masked_softmax(const Tensor& logits, const Mask& allowed);
Tensor log_softmax(const Tensor& logits);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Rows of table[V x d] selected by ids; gradient scatter-adds into the table.
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);

// Inverted dropout. Identity (the same handle) when !train or p == 0.
Tensor dropout(const Tensor& x, double p, bool train, Rng& rng);

// Mean over positions of -sum_v t_v log p_v with
// t = (1 - eps) onehot(gold) + eps / V.
Tensor cross_entropy_smoothed(const Tensor& log_probs, std::span<const TokenId> gold,
                              double eps);

}  // namespace genex
