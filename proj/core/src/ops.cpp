#include "indistill/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "indistill/gemm.hpp"

namespace indistill {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

template <typename Real>
void accumulate(Tensor<Real>& dst, const Tensor<Real>& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename Real>
void check_temperature(Real t) {
  if (!(t > Real(0)) || !std::isfinite(static_cast<double>(t))) {
    throw ParameterError("temperature must be positive and finite, got " + std::to_string(t));
  }
}

}  // namespace

template <typename Real>
Var<Real> conv2d(const Var<Real>& input, const Var<Real>& kernel, const Var<Real>& bias,
                 Conv2dOptions options) {
  const Tensor<Real>& x = input.value();
  const Tensor<Real>& w = kernel.value();
  const Tensor<Real>& b = bias.value();
  require(x.rank() == 4, "conv2d: input must be [N, C, H, W], got " + to_string(x.shape()));
  require(w.rank() == 4, "conv2d: kernel must be [c_in, c_out, k, k], got " + to_string(w.shape()));
  require(w.dim(2) == w.dim(3), "conv2d: kernel axes 2 and 3 must be equal, got " +
                                    to_string(w.shape()));
  require(x.dim(1) == w.dim(0), "conv2d: axis 1 (channels) of input is " +
                                    std::to_string(x.dim(1)) + " but kernel expects " +
                                    std::to_string(w.dim(0)));
  require(b.shape() == Shape{w.dim(1)},
          "conv2d: bias must be [" + std::to_string(w.dim(1)) + "], got " + to_string(b.shape()));
  if (options.stride == 0) throw ParameterError("conv2d: stride must be >= 1");

  const std::size_t n_batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t c_out = w.dim(1), k = w.dim(2);
  const std::size_t s = options.stride, pad = options.padding;
  require(h + 2 * pad >= k, "conv2d: axis 2 (height) " + std::to_string(h) + " with padding " +
                                std::to_string(pad) + " is smaller than kernel " +
                                std::to_string(k));
  require(wd + 2 * pad >= k, "conv2d: axis 3 (width) " + std::to_string(wd) + " with padding " +
                                 std::to_string(pad) + " is smaller than kernel " +
                                 std::to_string(k));
  const std::size_t h_out = (h + 2 * pad - k) / s + 1;
  const std::size_t w_out = (wd + 2 * pad - k) / s + 1;
  const std::size_t plane = h_out * w_out;
  const std::size_t patch = c_in * k * k;
  const std::size_t cols = n_batch * plane;

  // Kernel as a [c_out, c_in*k*k] matrix.
  std::vector<Real> wmat(c_out * patch);
  for (std::size_t ci = 0; ci < c_in; ++ci)
    for (std::size_t co = 0; co < c_out; ++co)
      for (std::size_t q = 0; q < k * k; ++q)
        wmat[co * patch + ci * k * k + q] = w[(ci * c_out + co) * k * k + q];

  // im2col: [c_in*k*k, N*plane]
  std::vector<Real> col(patch * cols, Real(0));
  const auto xd = x.data();
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    for (std::size_t kh = 0; kh < k; ++kh) {
      for (std::size_t kw = 0; kw < k; ++kw) {
        Real* row = col.data() + ((ci * k + kh) * k + kw) * cols;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const Real* src = xd.data() + (n * c_in + ci) * h * wd;
          for (std::size_t oh = 0; oh < h_out; ++oh) {
            const long ih = static_cast<long>(oh * s + kh) - static_cast<long>(pad);
            if (ih < 0 || ih >= static_cast<long>(h)) continue;
            Real* dst = row + n * plane + oh * w_out;
            for (std::size_t ow = 0; ow < w_out; ++ow) {
              const long iw = static_cast<long>(ow * s + kw) - static_cast<long>(pad);
              if (iw >= 0 && iw < static_cast<long>(wd)) dst[ow] = src[ih * wd + iw];
            }
          }
        }
      }
    }
  }

  std::vector<Real> out_mat(c_out * cols, Real(0));
  gemm_accumulate(c_out, cols, patch, wmat.data(), patch, col.data(), cols, out_mat.data(), cols);

  Tensor<Real> y(Shape{n_batch, c_out, h_out, w_out});
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t co = 0; co < c_out; ++co) {
      const Real* src = out_mat.data() + co * cols + n * plane;
      Real* dst = y.data().data() + (n * c_out + co) * plane;
      const Real bias_v = b[co];
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + bias_v;
    }

  const std::size_t in_id = input.id(), k_id = kernel.id(), b_id = bias.id();
  return input.tape().record(
      std::move(y), {in_id, k_id, b_id},
      [=, col = std::move(col), wmat = std::move(wmat)](Tape<Real>& tape, std::size_t self) {
        const Tensor<Real>& dy = tape.grad(self);
        std::vector<Real> dy_mat(c_out * cols);
        for (std::size_t n = 0; n < n_batch; ++n)
          for (std::size_t co = 0; co < c_out; ++co)
            std::copy_n(dy.data().data() + (n * c_out + co) * plane, plane,
                        dy_mat.data() + co * cols + n * plane);

        if (tape.requires_grad(b_id)) {
          auto db = tape.grad(b_id).data();
          for (std::size_t co = 0; co < c_out; ++co) {
            Real acc = 0;
            const Real* r = dy_mat.data() + co * cols;
            for (std::size_t j = 0; j < cols; ++j) acc += r[j];
            db[co] += acc;
          }
        }
        if (tape.requires_grad(k_id)) {
          std::vector<Real> col_t(cols * patch);
          transpose(patch, cols, col.data(), col_t.data());
          std::vector<Real> dw_mat(c_out * patch, Real(0));
          gemm_accumulate(c_out, patch, cols, dy_mat.data(), cols, col_t.data(), patch,
                          dw_mat.data(), patch);
          auto dw = tape.grad(k_id).data();
          for (std::size_t ci = 0; ci < c_in; ++ci)
            for (std::size_t co = 0; co < c_out; ++co)
              for (std::size_t q = 0; q < k * k; ++q)
                dw[(ci * c_out + co) * k * k + q] += dw_mat[co * patch + ci * k * k + q];
        }
        if (tape.requires_grad(in_id)) {
          std::vector<Real> wmat_t(patch * c_out);
          transpose(c_out, patch, wmat.data(), wmat_t.data());
          std::vector<Real> dcol(patch * cols, Real(0));
          gemm_accumulate(patch, cols, c_out, wmat_t.data(), c_out, dy_mat.data(), cols,
                          dcol.data(), cols);
          auto dx = tape.grad(in_id).data();
          for (std::size_t ci = 0; ci < c_in; ++ci)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                const Real* row = dcol.data() + ((ci * k + kh) * k + kw) * cols;
                for (std::size_t n = 0; n < n_batch; ++n) {
                  Real* dst = dx.data() + (n * c_in + ci) * h * wd;
                  for (std::size_t oh = 0; oh < h_out; ++oh) {
                    const long ih = static_cast<long>(oh * s + kh) - static_cast<long>(pad);
                    if (ih < 0 || ih >= static_cast<long>(h)) continue;
                    const Real* src = row + n * plane + oh * w_out;
                    for (std::size_t ow = 0; ow < w_out; ++ow) {
                      const long iw = static_cast<long>(ow * s + kw) - static_cast<long>(pad);
                      if (iw >= 0 && iw < static_cast<long>(wd)) dst[ih * wd + iw] += src[ow];
                    }
                  }
                }
              }
        }
      });
}

template <typename Real>
Var<Real> batchnorm2d(const Var<Real>& input, const Var<Real>& gamma, const Var<Real>& beta,
                      RunningStats<Real>& stats, BatchNormMode mode, BatchNormOptions options) {
  const Tensor<Real>& x = input.value();
  require(x.rank() == 4, "batchnorm2d: input must be [N, C, H, W], got " + to_string(x.shape()));
  const std::size_t n_batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  const Shape per_channel{channels};
  require(gamma.shape() == per_channel && beta.shape() == per_channel &&
              stats.mean.shape() == per_channel && stats.var.shape() == per_channel,
          "batchnorm2d: channel-count mismatch, input has " + std::to_string(channels) +
              " channels");
  const Real eps = static_cast<Real>(options.eps);
  const Real momentum = static_cast<Real>(options.momentum);
  const std::size_t count = n_batch * plane;
  const auto xd = x.data();
  const auto g = gamma.value().data();
  const auto bt = beta.value().data();

  std::vector<Real> inv_std(channels);
  Tensor<Real> xhat(x.shape());
  Tensor<Real> y(x.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    Real mean, var;
    if (mode == BatchNormMode::kTrain) {
      Real acc = 0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const Real* p = xd.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      mean = acc / static_cast<Real>(count);
      Real sq = 0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const Real* p = xd.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / static_cast<Real>(count);
      const Real unbiased = count > 1 ? sq / static_cast<Real>(count - 1) : var;
      stats.mean[c] = (Real(1) - momentum) * stats.mean[c] + momentum * mean;
      stats.var[c] = (Real(1) - momentum) * stats.var[c] + momentum * unbiased;
    } else {
      mean = stats.mean[c];
      var = stats.var[c];
    }
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[c] = is;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const Real xh = (xd[off + i] - mean) * is;
        xhat[off + i] = xh;
        y[off + i] = g[c] * xh + bt[c];
      }
    }
  }

  const std::size_t in_id = input.id(), g_id = gamma.id(), b_id = beta.id();
  const bool train = mode == BatchNormMode::kTrain;
  return input.tape().record(
      std::move(y), {in_id, g_id, b_id},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Real>& tape,
                                                                std::size_t self) {
        const auto dy = tape.grad(self).data();
        const auto gv = tape.value(g_id).data();
        const bool need_x = tape.requires_grad(in_id);
        for (std::size_t c = 0; c < channels; ++c) {
          Real sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t n = 0; n < n_batch; ++n) {
            const std::size_t off = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += dy[off + i] * xhat[off + i];
            }
          }
          if (tape.requires_grad(g_id)) tape.grad(g_id)[c] += sum_dy_xhat;
          if (tape.requires_grad(b_id)) tape.grad(b_id)[c] += sum_dy;
          if (!need_x) continue;
          auto dx = tape.grad(in_id).data();
          const Real m = static_cast<Real>(count);
          for (std::size_t n = 0; n < n_batch; ++n) {
            const std::size_t off = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              if (train) {
                dx[off + i] += gv[c] * inv_std[c] / m *
                               (m * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
              } else {
                dx[off + i] += dy[off + i] * gv[c] * inv_std[c];
              }
            }
          }
        }
      });
}

template <typename Real>
Var<Real> dense(const Var<Real>& input, const Var<Real>& weight, const Var<Real>& bias) {
  const Tensor<Real>& x = input.value();
  const Tensor<Real>& w = weight.value();
  const Tensor<Real>& b = bias.value();
  require(x.rank() == 1 || x.rank() == 2,
          "dense: input must be [n] or [N, n], got " + to_string(x.shape()));
  require(w.rank() == 2, "dense: weight must be [n, m], got " + to_string(w.shape()));
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t n_in = x.shape().back();
  require(n_in == w.dim(0), "dense: input features (last axis) " + std::to_string(n_in) +
                                " do not match weight axis 0 " + std::to_string(w.dim(0)));
  const std::size_t n_out = w.dim(1);
  require(b.shape() == Shape{n_out},
          "dense: bias must be [" + std::to_string(n_out) + "], got " + to_string(b.shape()));

  Shape out_shape = x.rank() == 2 ? Shape{rows, n_out} : Shape{n_out};
  Tensor<Real> y(out_shape);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(b.data().data(), n_out, y.data().data() + r * n_out);
  gemm_accumulate(rows, n_out, n_in, x.data().data(), n_in, w.data().data(), n_out,
                  y.data().data(), n_out);

  const std::size_t in_id = input.id(), w_id = weight.id(), b_id = bias.id();
  return input.tape().record(
      std::move(y), {in_id, w_id, b_id}, [=](Tape<Real>& tape, std::size_t self) {
        const Real* dy = tape.grad(self).data().data();
        if (tape.requires_grad(b_id)) {
          auto db = tape.grad(b_id).data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n_out; ++j) db[j] += dy[r * n_out + j];
        }
        if (tape.requires_grad(w_id)) {
          const Real* xv = tape.value(in_id).data().data();
          std::vector<Real> x_t(n_in * rows);
          transpose(rows, n_in, xv, x_t.data());
          gemm_accumulate(n_in, n_out, rows, x_t.data(), rows, dy, n_out,
                          tape.grad(w_id).data().data(), n_out);
        }
        if (tape.requires_grad(in_id)) {
          const Real* wv = tape.value(w_id).data().data();
          std::vector<Real> w_t(n_out * n_in);
          transpose(n_in, n_out, wv, w_t.data());
          gemm_accumulate(rows, n_in, n_out, dy, n_out, w_t.data(), n_in,
                          tape.grad(in_id).data().data(), n_in);
        }
      });
}

template <typename Real>
Var<Real> relu(const Var<Real>& input) {
  const Tensor<Real>& x = input.value();
  Tensor<Real> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] < Real(0) ? Real(0) : x[i];  // NaN passes through
  const std::size_t in_id = input.id();
  return input.tape().record(std::move(y), {in_id}, [in_id](Tape<Real>& tape, std::size_t self) {
    const auto& xv = tape.value(in_id);
    const auto& dy = tape.grad(self);
    auto dx = tape.grad(in_id).data();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (xv[i] > Real(0)) dx[i] += dy[i];
  });
}

template <typename Real>
Var<Real> maxpool2d(const Var<Real>& input, std::size_t window, std::size_t stride) {
  const Tensor<Real>& x = input.value();
  require(x.rank() == 4, "maxpool2d: input must be [N, C, H, W], got " + to_string(x.shape()));
  if (window == 0 || stride == 0) throw ParameterError("maxpool2d: window and stride must be >= 1");
  const std::size_t n_batch = x.dim(0), channels = x.dim(1), h = x.dim(2), wd = x.dim(3);
  require(h >= window, "maxpool2d: axis 2 (height) " + std::to_string(h) +
                           " is smaller than window " + std::to_string(window));
  require(wd >= window, "maxpool2d: axis 3 (width) " + std::to_string(wd) +
                            " is smaller than window " + std::to_string(window));
  const std::size_t h_out = (h - window) / stride + 1, w_out = (wd - window) / stride + 1;
  Tensor<Real> y(Shape{n_batch, channels, h_out, w_out});
  std::vector<std::size_t> argmax(y.size());
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < n_batch * channels; ++nc) {
    const std::size_t base = nc * h * wd;
    for (std::size_t oh = 0; oh < h_out; ++oh)
      for (std::size_t ow = 0; ow < w_out; ++ow, ++o) {
        std::size_t best = base + oh * stride * wd + ow * stride;
        Real best_v = x[best];
        for (std::size_t kh = 0; kh < window; ++kh)
          for (std::size_t kw = 0; kw < window; ++kw) {
            const std::size_t idx = base + (oh * stride + kh) * wd + ow * stride + kw;
            if (x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
        y[o] = best_v;
        argmax[o] = best;
      }
  }
  const std::size_t in_id = input.id();
  return input.tape().record(
      std::move(y), {in_id},
      [in_id, argmax = std::move(argmax)](Tape<Real>& tape, std::size_t self) {
        const auto& dy = tape.grad(self);
        auto dx = tape.grad(in_id).data();
        for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
      });
}

template <typename Real>
Var<Real> flatten(const Var<Real>& input) {
  const Tensor<Real>& x = input.value();
  require(x.rank() >= 1, "flatten: scalar input");
  const std::size_t rows = x.dim(0);
  Tensor<Real> y = x.reshaped(Shape{rows, x.size() / rows});
  const std::size_t in_id = input.id();
  return input.tape().record(std::move(y), {in_id}, [in_id](Tape<Real>& tape, std::size_t self) {
    accumulate(tape.grad(in_id), tape.grad(self));
  });
}

namespace {

// Row-wise log-softmax of x / t along the last axis.
template <typename Real>
Tensor<Real> log_softmax_rows(const Tensor<Real>& x, Real t) {
  require(x.rank() >= 1, "softmax: scalar input");
  const std::size_t classes = x.shape().back();
  const std::size_t rows = x.size() / classes;
  Tensor<Real> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = x.data().data() + r * classes;
    Real* out = y.data().data() + r * classes;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < classes; ++j) mx = std::max(mx, in[j]);
    Real acc = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      out[j] = (in[j] - mx) / t;
      acc += std::exp(out[j]);
    }
    const Real lse = std::log(acc);
    for (std::size_t j = 0; j < classes; ++j) out[j] -= lse;
  }
  return y;
}

}  // namespace

template <typename Real>
Tensor<Real> softmax_with_temperature(const Tensor<Real>& logits, Real temperature) {
  check_temperature(temperature);
  const std::size_t classes = logits.shape().empty() ? 0 : logits.shape().back();
  require(classes > 0, "softmax: scalar input");
  const std::size_t rows = logits.size() / classes;
  Tensor<Real> y(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = logits.data().data() + r * classes;
    Real* out = y.data().data() + r * classes;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < classes; ++j) mx = std::max(mx, in[j]);
    Real acc = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      out[j] = std::exp((in[j] - mx) / temperature);
      acc += out[j];
    }
    for (std::size_t j = 0; j < classes; ++j) out[j] /= acc;
  }
  return y;
}

template <typename Real>
Var<Real> softmax(const Var<Real>& logits, Real temperature) {
  Tensor<Real> y = softmax_with_temperature(logits.value(), temperature);
  const std::size_t in_id = logits.id();
  const std::size_t classes = y.shape().back();
  return logits.tape().record(
      std::move(y), {in_id}, [=](Tape<Real>& tape, std::size_t self) {
        const auto& p = tape.value(self);
        const auto& dy = tape.grad(self);
        auto dx = tape.grad(in_id).data();
        for (std::size_t r = 0; r < p.size() / classes; ++r) {
          const std::size_t off = r * classes;
          Real dot = 0;
          for (std::size_t j = 0; j < classes; ++j) dot += dy[off + j] * p[off + j];
          for (std::size_t j = 0; j < classes; ++j)
            dx[off + j] += p[off + j] * (dy[off + j] - dot) / temperature;
        }
      });
}

template <typename Real>
Var<Real> log_softmax(const Var<Real>& logits, Real temperature) {
  check_temperature(temperature);
  Tensor<Real> y = log_softmax_rows(logits.value(), temperature);
  const std::size_t in_id = logits.id();
  const std::size_t classes = y.shape().back();
  return logits.tape().record(
      std::move(y), {in_id}, [=](Tape<Real>& tape, std::size_t self) {
        const auto& ls = tape.value(self);
        const auto& dy = tape.grad(self);
        auto dx = tape.grad(in_id).data();
        for (std::size_t r = 0; r < ls.size() / classes; ++r) {
          const std::size_t off = r * classes;
          Real total = 0;
          for (std::size_t j = 0; j < classes; ++j) total += dy[off + j];
          for (std::size_t j = 0; j < classes; ++j)
            dx[off + j] += (dy[off + j] - std::exp(ls[off + j]) * total) / temperature;
        }
      });
}

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  require(a.shape() == b.shape(),
          "add: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  Tensor<Real> y = a.value();
  accumulate(y, b.value());
  const std::size_t a_id = a.id(), b_id = b.id();
  return a.tape().record(std::move(y), {a_id, b_id}, [=](Tape<Real>& tape, std::size_t self) {
    if (tape.requires_grad(a_id)) accumulate(tape.grad(a_id), tape.grad(self));
    if (tape.requires_grad(b_id)) accumulate(tape.grad(b_id), tape.grad(self));
  });
}

template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  require(a.shape() == b.shape(),
          "mul: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  Tensor<Real> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  const std::size_t a_id = a.id(), b_id = b.id();
  return a.tape().record(std::move(y), {a_id, b_id}, [=](Tape<Real>& tape, std::size_t self) {
    const auto& dy = tape.grad(self);
    if (tape.requires_grad(a_id)) {
      auto da = tape.grad(a_id).data();
      const auto& bv = tape.value(b_id);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (tape.requires_grad(b_id)) {
      auto db = tape.grad(b_id).data();
      const auto& av = tape.value(a_id);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

template <typename Real>
Var<Real> scale(const Var<Real>& a, Real factor) {
  Tensor<Real> y = a.value();
  for (auto& v : y.data()) v *= factor;
  const std::size_t a_id = a.id();
  return a.tape().record(std::move(y), {a_id}, [=](Tape<Real>& tape, std::size_t self) {
    const auto& dy = tape.grad(self);
    auto da = tape.grad(a_id).data();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * factor;
  });
}

template <typename Real>
Var<Real> sum(const Var<Real>& a) {
  Real acc = 0;
  for (auto v : a.value().data()) acc += v;
  const std::size_t a_id = a.id();
  return a.tape().record(Tensor<Real>::scalar(acc), {a_id},
                         [=](Tape<Real>& tape, std::size_t self) {
                           const Real g = tape.grad(self)[0];
                           for (auto& d : tape.grad(a_id).data()) d += g;
                         });
}

template <typename Real>
Var<Real> weighted_sum(const Var<Real>& a, const Tensor<Real>& weights) {
  require(a.shape() == weights.shape(), "weighted_sum: shapes " + to_string(a.shape()) + " and " +
                                            to_string(weights.shape()) + " differ");
  Real acc = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += a.value()[i] * weights[i];
  const std::size_t a_id = a.id();
  return a.tape().record(Tensor<Real>::scalar(acc), {a_id},
                         [=](Tape<Real>& tape, std::size_t self) {
                           const Real g = tape.grad(self)[0];
                           auto da = tape.grad(a_id).data();
                           for (std::size_t i = 0; i < da.size(); ++i) da[i] += g * weights[i];
                         });
}

#define INDISTILL_INSTANTIATE_OPS(R)                                                        \
  template Var<R> conv2d(const Var<R>&, const Var<R>&, const Var<R>&, Conv2dOptions);       \
  template Var<R> batchnorm2d(const Var<R>&, const Var<R>&, const Var<R>&, RunningStats<R>&, \
                              BatchNormMode, BatchNormOptions);                             \
  template Var<R> dense(const Var<R>&, const Var<R>&, const Var<R>&);                       \
  template Var<R> relu(const Var<R>&);                                                      \
  template Var<R> maxpool2d(const Var<R>&, std::size_t, std::size_t);                       \
  template Var<R> flatten(const Var<R>&);                                                   \
  template Var<R> softmax(const Var<R>&, R);                                                \
  template Var<R> log_softmax(const Var<R>&, R);                                            \
  template Var<R> add(const Var<R>&, const Var<R>&);                                        \
  template Var<R> mul(const Var<R>&, const Var<R>&);                                        \
  template Var<R> scale(const Var<R>&, R);                                                  \
  template Var<R> sum(const Var<R>&);                                                       \
  template Var<R> weighted_sum(const Var<R>&, const Tensor<R>&);                            \
  template Tensor<R> softmax_with_temperature(const Tensor<R>&, R);

INDISTILL_INSTANTIATE_OPS(float)
INDISTILL_INSTANTIATE_OPS(double)

#undef INDISTILL_INSTANTIATE_OPS

}  // namespace indistill
