#include "genex/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "genex/errors.hpp"

namespace genex {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

Tensor make_result(Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  const bool track =
      grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                    [](const NodePtr& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

std::vector<double> transposed(const double* a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

}  // namespace

Mask Mask::causal(std::size_t n) {
  Mask m(n, n, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
  return m;
}

std::size_t Mask::allowed_in_row(std::size_t row) const {
  std::size_t count = 0;
  for (std::size_t j = 0; j < cols_; ++j) count += bits_[row * cols_ + j];
  return count;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), ix(m), ix(n)).noalias() =
      ConstMap(a.data().data(), ix(m), ix(k)) * ConstMap(b.data().data(), ix(k), ix(n));
  return make_result({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    const NodePtr& pa = self.parents[0];
    const NodePtr& pb = self.parents[1];
    const double* g = self.grad.data();
    if (pa->requires_grad) {
      // dA = dC * B^T
      MutMap(pa->ensure_grad(), ix(m), ix(k)).noalias() +=
          ConstMap(g, ix(m), ix(n)) * ConstMap(pb->value.data(), ix(k), ix(n)).transpose();
    }
    if (pb->requires_grad) {
      // dB = A^T * dC
      MutMap(pb->ensure_grad(), ix(k), ix(n)).noalias() +=
          ConstMap(pa->value.data(), ix(m), ix(k)).transpose() * ConstMap(g, ix(m), ix(n));
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  return make_result({c, r}, transposed(a.data().data(), r, c), {a.node()}, [r, c](Node& self) {
    double* ga = self.parents[0]->ensure_grad();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (const auto& p : self.parents) {
      if (!p->requires_grad) continue;
      double* gp = p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) gp[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    const NodePtr& pa = self.parents[0];
    const NodePtr& pb = self.parents[1];
    const std::size_t n = self.grad.size();
    if (pa->requires_grad) {
      double* ga = pa->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      double* gb = pb->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) gb[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a.node()}, [factor](Node& self) {
    double* ga = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += factor * self.grad[i];
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (bias.numel() != cols) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bv = bias.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bv[j];
  return make_result(a.shape(), std::move(out), {a.node(), bias.node()},
                     [rows, cols](Node& self) {
                       const NodePtr& pa = self.parents[0];
                       const NodePtr& pb = self.parents[1];
                       if (pa->requires_grad) {
                         double* ga = pa->ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
                       }
                       if (pb->requires_grad) {
                         double* gb = pb->ensure_grad();
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < cols; ++j)
                             gb[j] += self.grad[i * cols + j];
                       }
                     });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(a.shape(), std::move(out), {a.node()}, [](Node& self) {
    const NodePtr& pa = self.parents[0];
    double* ga = pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (pa->value[i] > 0.0) ga[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({1}, {total}, {a.node()}, [](Node& self) {
    const NodePtr& pa = self.parents[0];
    double* ga = pa->ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < pa->value.size(); ++i) ga[i] += g;
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    rows += p.rows();
    parents.push_back(p.node());
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result({rows, cols}, std::move(out), std::move(parents), [](Node& self) {
    std::size_t offset = 0;
    for (const auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        double* gp = p->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    cols += p.cols();
    widths.push_back(p.cols());
    parents.push_back(p.node());
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    const auto v = p.data();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(v.data() + i * w, w, out.data() + i * cols + offset);
    offset += w;
  }
  return make_result({rows, cols}, std::move(out), std::move(parents),
                     [rows, cols, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         const auto& p = self.parents[k];
                         const std::size_t w = widths[k];
                         if (p->requires_grad) {
                           double* gp = p->ensure_grad();
                           for (std::size_t i = 0; i < rows; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               gp[i * w + j] += self.grad[i * cols + off + j];
                         }
                         off += w;
                       }
                     });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (count == 0 || start + count > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(a.shape()));
  }
  std::vector<double> out(rows * count);
  const auto v = a.data();
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(v.data() + i * cols + start, count, out.data() + i * count);
  return make_result({rows, count}, std::move(out), {a.node()},
                     [rows, cols, start, count](Node& self) {
                       double* ga = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < count; ++j)
                           ga[i * cols + start + j] += self.grad[i * count + j];
                     });
}

Tensor masked_softmax(const Tensor& logits, const Mask& allowed) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (allowed.rows() != rows || allowed.cols() != cols) {
    throw DimensionError("masked_softmax: mask " + std::to_string(allowed.rows()) + "x" +
                         std::to_string(allowed.cols()) + " does not match logits " +
                         shape_str(logits.shape()));
  }
  const auto x = logits.data();
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) {
      if (allowed.allowed(i, j)) {
        mx = std::max(mx, x[i * cols + j]);
        any = true;
      }
    }
    if (!any) throw NumericError("empty attention row " + std::to_string(i));
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (allowed.allowed(i, j)) {
        const double e = std::exp(x[i * cols + j] - mx);
        out[i * cols + j] = e;
        total += e;
      }
    }
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] /= total;
  }
  return make_result(logits.shape(), std::move(out), {logits.node()},
                     [rows, cols, allowed](Node& self) {
                       double* gx = self.parents[0]->ensure_grad();
                       const double* y = self.value.data();
                       const double* g = self.grad.data();
                       for (std::size_t i = 0; i < rows; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) dot += y[i * cols + j] * g[i * cols + j];
                         for (std::size_t j = 0; j < cols; ++j) {
                           if (allowed.allowed(i, j))
                             gx[i * cols + j] += y[i * cols + j] * (g[i * cols + j] - dot);
                         }
                       }
                     });
}

Tensor log_softmax(const Tensor& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  const auto x = logits.data();
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = x.data() + i * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(xr[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xr[j] - lse;
  }
  return make_result(logits.shape(), std::move(out), {logits.node()}, [rows, cols](Node& self) {
    double* gx = self.parents[0]->ensure_grad();
    const double* y = self.value.data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < rows; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gsum += g[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        gx[i * cols + j] += g[i * cols + j] - std::exp(y[i * cols + j]) * gsum;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t rows = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " do not match " + shape_str(x.shape()));
  }
  const auto xv = x.data(), gv = gain.data(), bv = bias.data();
  std::vector<double> out(rows * d);
  std::vector<double> xhat(rows * d);
  std::vector<double> inv_std(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = xv.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mean) * is;
      xhat[i * d + j] = h;
      out[i * d + j] = gv[j] * h + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const NodePtr& px = self.parents[0];
        const NodePtr& pg = self.parents[1];
        const NodePtr& pb = self.parents[2];
        const double* g = self.grad.data();
        if (pg->requires_grad) {
          double* gg = pg->ensure_grad();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
        }
        if (pb->requires_grad) {
          double* gb = pb->ensure_grad();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
        }
        if (px->requires_grad) {
          double* gx = px->ensure_grad();
          const double* gain_v = pg->value.data();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < rows; ++i) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[i * d + j] * gain_v[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[i * d + j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[i * d + j] * gain_v[j];
              gx[i * d + j] += inv_std[i] * (dh - mean_dh - xhat[i * d + j] * mean_dh_h);
            }
          }
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
  require_rank2(table, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  std::vector<double> out(ids.size() * d);
  const auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<TokenId> saved(ids.begin(), ids.end());
  return make_result({ids.size(), d}, std::move(out), {table.node()},
                     [d, saved = std::move(saved)](Node& self) {
                       double* gt = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < saved.size(); ++i) {
                         double* row = gt + static_cast<std::size_t>(saved[i]) * d;
                         for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
                       }
                     });
}

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw UsageError("dropout probability must be < 1");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factors(x.numel());
  for (auto& f : factors) f = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factors[i];
  return make_result(x.shape(), std::move(out), {x.node()},
                     [factors = std::move(factors)](Node& self) {
                       double* gx = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < factors.size(); ++i)
                         gx[i] += factors[i] * self.grad[i];
                     });
}

Tensor cross_entropy_smoothed(const Tensor& log_probs, std::span<const TokenId> gold,
                              double eps) {
  const std::size_t steps = log_probs.rows(), vocab = log_probs.cols();
  if (gold.size() != steps) {
    throw DimensionError("cross_entropy_smoothed: " + std::to_string(gold.size()) +
                         " gold ids for " + shape_str(log_probs.shape()));
  }
  for (auto id : gold) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("cross_entropy_smoothed: gold id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
  }
  const double off = eps / static_cast<double>(vocab);
  const double on = 1.0 - eps + off;
  const auto lp = log_probs.data();
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double* row = lp.data() + t * vocab;
    double row_sum = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) row_sum += row[v];
    const double g = row[static_cast<std::size_t>(gold[t])];
    total += -(off * (row_sum - g) + on * g);
  }
  const double inv_steps = 1.0 / static_cast<double>(steps);
  std::vector<TokenId> saved(gold.begin(), gold.end());
  return make_result({1}, {total * inv_steps}, {log_probs.node()},
                     [steps, vocab, off, on, inv_steps, saved = std::move(saved)](Node& self) {
                       double* gl = self.parents[0]->ensure_grad();
                       const double g = self.grad[0] * inv_steps;
                       for (std::size_t t = 0; t < steps; ++t) {
                         double* row = gl + t * vocab;
                         for (std::size_t v = 0; v < vocab; ++v) row[v] -= g * off;
                         row[static_cast<std::size_t>(saved[t])] -= g * (on - off);
                       }
                     });
}

}  // namespace genex
