#include "lnsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lnsr/errors.hpp"

namespace lnsr {

namespace {

using detail::Node;

// Gradient buffer of parent i, or nullptr when that parent is constant.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

struct MatView {
  std::size_t rows;
  std::size_t cols;
};

MatView as_matrix(const Tensor& t, bool vector_is_column) {
  const auto& s = t.shape();
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 1) return vector_is_column ? MatView{s[0], 1} : MatView{1, s[0]};
  throw ShapeError("expected a vector or matrix, got " + shape_str(s));
}

std::size_t row_vector_len(const Tensor& t) {
  const auto& s = t.shape();
  if (s.size() == 1) return s[0];
  if (s.size() == 2 && s[0] == 1) return s[1];
  throw ShapeError("expected a row vector, got " + shape_str(s));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n], with optional transposes expressed by strides.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n, bool ta, bool tb) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      if (tb) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      } else {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto am = as_matrix(a, false);
  const auto bm = as_matrix(b, true);
  if (am.cols != bm.rows) {
    throw ShapeError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = am.rows, k = am.cols, n = bm.cols;
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n, false, false);
  Shape shape;
  if (a.ndim() == 2) shape.push_back(m);
  if (b.ndim() == 2) shape.push_back(n);
  if (shape.empty()) shape.push_back(1);
  return make_result(std::move(shape), std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* dc = self.grad.data();
    const double* av = self.parents[0]->data.data();
    const double* bv = self.parents[1]->data.data();
    if (auto* ga = parent_grad(self, 0)) gemm_acc(dc, bv, ga->data(), m, n, k, false, true);
    if (auto* gb = parent_grad(self, 1)) gemm_acc(av, dc, gb->data(), k, m, n, true, false);
  });
}

Tensor transpose(const Tensor& a) {
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto d = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = d[i * c + j];
  return make_result({c, r}, std::move(out), {a}, [r, c](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(self, p))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->data;
    const auto& bv = self.parents[1]->data;
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  const auto m = a.rows(), n = a.cols();
  if (row_vector_len(bias) != n) {
    throw ShapeError("add_row: bias " + shape_str(bias.shape()) + " does not fit " +
                     shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bd[j];
  return make_result(a.shape(), std::move(out), {a, bias}, [m, n](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
  });
}

Tensor gelu(const Tensor& x) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * xd[i] * (1.0 + std::erf(xd[i] / std::numbers::sqrt2));
  }
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    const auto& xv = self.parents[0]->data;
    auto* g = parent_grad(self, 0);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      (*g)[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor tanh(const Tensor& x) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xd[i]);
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double y = self.data[i];
      (*g)[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> key_mask) {
  const auto mv = as_matrix(x, false);
  const auto m = mv.rows, n = mv.cols;
  if (!key_mask.empty() && key_mask.size() != n) {
    throw ShapeError("softmax_rows: mask length " + std::to_string(key_mask.size()) +
                     " vs " + std::to_string(n) + " columns");
  }
  auto keep = [&](std::size_t j) { return key_mask.empty() || key_mask[j] != 0; };
  if (!key_mask.empty() && std::none_of(key_mask.begin(), key_mask.end(), [](auto v) { return v; })) {
    throw ShapeError("softmax_rows: every column is masked");
  }
  auto xd = x.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (keep(j)) mx = std::max(mx, xd[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep(j)) continue;
      out[i * n + j] = std::exp(xd[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_result(x.shape(), std::move(out), {x}, [m, n](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.data.data() + i * n;
      const double* dy = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto mv = as_matrix(x, false);
  const auto m = mv.rows, n = mv.cols;
  if (row_vector_len(gain) != n || row_vector_len(bias) != n) {
    throw ShapeError("layer_norm_rows: gain/bias do not match " + shape_str(x.shape()));
  }
  auto xd = x.data(), gd = gain.data(), bd = bias.data();
  std::vector<double> xhat(m * n), inv(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xd[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = xd[i * n + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xd[i * n + j] - mu) * inv[i];
      out[i * n + j] = xhat[i * n + j] * gd[j] + bd[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     [m, n, xhat = std::move(xhat), inv = std::move(inv)](Node& self) {
                       const auto& gv = self.parents[1]->data;
                       auto* gx = parent_grad(self, 0);
                       auto* gg = parent_grad(self, 1);
                       auto* gb = parent_grad(self, 2);
                       const double nn = static_cast<double>(n);
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* dy = self.grad.data() + i * n;
                         const double* xh = xhat.data() + i * n;
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dxh = dy[j] * gv[j];
                           s1 += dxh;
                           s2 += dxh * xh[j];
                           if (gg) (*gg)[j] += dy[j] * xh[j];
                           if (gb) (*gb)[j] += dy[j];
                         }
                         if (gx) {
                           for (std::size_t j = 0; j < n; ++j) {
                             const double dxh = dy[j] * gv[j];
                             (*gx)[i * n + j] += inv[i] / nn * (nn * dxh - s1 - xh[j] * s2);
                           }
                         }
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  const auto v = table.rows(), d = table.cols();
  if (ids.empty()) throw ShapeError("embedding: empty id sequence");
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  std::vector<double> out(idv.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] >= v) {
      throw IndexError("embedding: id " + std::to_string(idv[i]) + " outside vocabulary of " +
                       std::to_string(v));
    }
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(idv[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const auto count = idv.size();
  return make_result({count, d}, std::move(out), {table}, [d, idv = std::move(idv)](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) (*g)[idv[i] * d + j] += self.grad[i * d + j];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {x}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    for (auto& v : *g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  return scale(sum(x), 1.0 / n);
}

Tensor squared_norm(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return make_result({1}, {s}, {x}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    const auto& xv = self.parents[0]->data;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += 2.0 * xv[i] * self.grad[0];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  const auto m = x.rows(), n = x.cols();
  if (count == 0 || begin + count > n) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_str(x.shape()));
  }
  auto xd = x.data();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xd[i * n + begin + j];
  return make_result({m, count}, std::move(out), {x}, [m, n, begin, count](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) (*g)[i * n + begin + j] += self.grad[i * count + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const auto m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t off = 0;
  for (const auto& p : parts) {
    auto pd = p.data();
    const auto w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + off + j] = pd[i * w + j];
    off += w;
  }
  return make_result({m, n}, std::move(out), parts, [m, n, widths = std::move(widths)](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      const auto w = widths[p];
      if (auto* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) (*g)[i * w + j] += self.grad[i * n + off + j];
      }
      off += w;
    }
  });
}

Tensor mask_rows(const Tensor& x, std::span<const double> mask) {
  const auto m = x.rows(), n = x.cols();
  if (mask.size() != m) throw ShapeError("mask_rows: mask length differs from row count");
  std::vector<double> mk(mask.begin(), mask.end());
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= mk[i];
  return make_result(x.shape(), std::move(out), {x}, [m, n, mk = std::move(mk)](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += mk[i] * self.grad[i * n + j];
  });
}

Tensor mean_rows_masked(const Tensor& x, std::span<const std::uint8_t> mask) {
  const auto m = x.rows(), n = x.cols();
  if (mask.size() != m) throw ShapeError("mean_rows_masked: mask length differs from row count");
  std::vector<std::uint8_t> mk(mask.begin(), mask.end());
  const auto count = static_cast<std::size_t>(std::count_if(mk.begin(), mk.end(), [](auto v) { return v != 0; }));
  if (count == 0) throw ShapeError("mean_rows_masked: empty reduction (all rows masked)");
  const double w = 1.0 / static_cast<double>(count);
  auto xd = x.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (!mk[i]) continue;
    for (std::size_t j = 0; j < n; ++j) out[j] += xd[i * n + j];
  }
  for (auto& v : out) v *= w;
  return make_result({1, n}, std::move(out), {x}, [m, n, w, mk = std::move(mk)](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      if (!mk[i]) continue;
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += w * self.grad[j];
    }
  });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  std::vector<double> mk(x.numel());
  for (auto& v : mk) v = keep(rng) ? s : 0.0;
  auto xd = x.data();
  std::vector<double> out(mk.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mk[i];
  return make_result(x.shape(), std::move(out), {x}, [mk = std::move(mk)](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += mk[i] * self.grad[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  const auto c = row_vector_len(logits);
  if (label >= c) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " outside " +
                     std::to_string(c) + " classes");
  }
  auto z = logits.data();
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> probs(c);
  for (std::size_t j = 0; j < c; ++j) probs[j] = std::exp(z[j] - lse);
  return make_result({1}, {lse - z[label]}, {logits}, [label, probs = std::move(probs)](Node& self) {
    auto* g = parent_grad(self, 0);
    for (std::size_t j = 0; j < probs.size(); ++j) {
      (*g)[j] += self.grad[0] * (probs[j] - (j == label ? 1.0 : 0.0));
    }
  });
}

Tensor mse(const Tensor& pred, std::span<const double> target) {
  if (target.size() != pred.numel()) throw ShapeError("mse: target size differs from prediction");
  std::vector<double> t(target.begin(), target.end());
  auto pd = pred.data();
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += (pd[i] - t[i]) * (pd[i] - t[i]);
  const double n = static_cast<double>(t.size());
  return make_result({1}, {s / n}, {pred}, [n, t = std::move(t)](Node& self) {
    auto* g = parent_grad(self, 0);
    const auto& pv = self.parents[0]->data;
    for (std::size_t i = 0; i < t.size(); ++i) (*g)[i] += self.grad[0] * 2.0 * (pv[i] - t[i]) / n;
  });
}

}  // namespace lnsr
