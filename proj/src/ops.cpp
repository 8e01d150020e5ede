#include "edgeshield/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace edgeshield {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
using Tape = GradientTape<T>;

template <typename T>
void check_finite(const BasicTensor<T>& t, const char* op) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* what) {
  require(t.rank() == rank, std::string(what) + " must have rank " + std::to_string(rank) +
                                ", got shape " + shape_string(t.shape()));
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel_h, kernel_w;
  std::size_t stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h * out_w; }
};

// col is patch() x positions(), row index c*kh*kw + ki*kw + kj.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        T* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const T* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  require(stride >= 1, "conv2d stride must be positive");
  const std::size_t batch = input.dim(0);
  const std::size_t out_channels = weight.dim(0);
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), weight.dim(2), weight.dim(3),
                 stride, padding, 0, 0};
  require(weight.dim(1) == g.channels,
          "conv2d channel mismatch: input " + shape_string(input.shape()) + ", weight " +
              shape_string(weight.shape()));
  require(bias.size() == out_channels, "conv2d bias length must equal output channels");
  require(g.kernel_h >= 1 && g.kernel_w >= 1, "conv2d kernel must be non-empty");
  require(g.height + 2 * padding >= g.kernel_h && g.width + 2 * padding >= g.kernel_w,
          "conv2d output extent would be non-positive");
  g.out_h = (g.height + 2 * padding - g.kernel_h) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel_w) / stride + 1;

  const std::size_t patch = g.patch();
  const std::size_t positions = g.positions();
  const std::size_t image_size = g.channels * g.height * g.width;
  const std::size_t out_image = out_channels * positions;

  BasicTensor<T> out(Shape{batch, out_channels, g.out_h, g.out_w});
  const bool keep_cols = Tape<T>::active() != nullptr &&
                         (input.tracked() || weight.tracked() || bias.tracked());
  auto cols = std::make_shared<AlignedBuffer<T>>((keep_cols ? batch : 1) * patch * positions);

  ConstMatMap<T> w(weight.data().data(), out_channels, patch);
  for (std::size_t n = 0; n < batch; ++n) {
    T* col = cols->data() + (keep_cols ? n : 0) * patch * positions;
    im2col(input.data().data() + n * image_size, g, col);
    MatMap<T> y(out.data().data() + n * out_image, out_channels, positions);
    y.noalias() = w * ConstMatMap<T>(col, patch, positions);
    for (std::size_t o = 0; o < out_channels; ++o) y.row(o).array() += bias[o];
  }
  check_finite(out, "conv2d");

  if (keep_cols) {
    Tape<T>::record(
        {&input, &weight, &bias}, out,
        [g, weight, cols, batch, out_channels, patch, positions, image_size, out_image](
            std::span<const T> grad_out, std::span<std::span<T>> grads) {
          ConstMatMap<T> w(weight.data().data(), out_channels, patch);
          AlignedBuffer<T> dcol(grads[0].empty() ? 0 : patch * positions);
          for (std::size_t n = 0; n < batch; ++n) {
            ConstMatMap<T> gy(grad_out.data() + n * out_image, out_channels, positions);
            ConstMatMap<T> col(cols->data() + n * patch * positions, patch, positions);
            if (!grads[1].empty()) {
              MatMap<T> dw(grads[1].data(), out_channels, patch);
              dw.noalias() += gy * col.transpose();
            }
            if (!grads[2].empty()) {
              VecMap<T> db(grads[2].data(), out_channels);
              db += gy.rowwise().sum();
            }
            if (!grads[0].empty()) {
              MatMap<T> dc(dcol.data(), patch, positions);
              dc.noalias() = w.transpose() * gy;
              col2im_add(dcol.data(), g, grads[0].data() + n * image_size);
            }
          }
        });
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride) {
  require_rank(input, 4, "maxpool2d input");
  require(window >= 1 && stride >= 1, "maxpool2d window and stride must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(window <= h && window <= w, "maxpool2d window " + std::to_string(window) +
                                          " larger than input " + shape_string(input.shape()));
  const std::size_t oh = (h - window) / stride + 1;
  const std::size_t ow = (w - window) / stride + 1;
  BasicTensor<T> out(Shape{n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const T* x = input.data().data();
  T* y = out.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * stride * w + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = base + (oy * stride + ky) * w + ox * stride + kx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  check_finite(out, "maxpool2d");
  Tape<T>::record({&input}, out, [argmax](std::span<const T> g, std::span<std::span<T>> grads) {
    if (grads[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) grads[0][(*argmax)[i]] += g[i];
  });
  return out;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weight, 2, "dense weight");
  const std::size_t n = input.dim(0), f = input.dim(1), u = weight.dim(1);
  require(weight.dim(0) == f, "dense inner dimension mismatch: input " +
                                  shape_string(input.shape()) + ", weight " +
                                  shape_string(weight.shape()));
  require(bias.size() == u, "dense bias length must equal output units");
  BasicTensor<T> out(Shape{n, u});
  MatMap<T> y(out.data().data(), n, u);
  y.noalias() = ConstMatMap<T>(input.data().data(), n, f) * ConstMatMap<T>(weight.data().data(), f, u);
  for (std::size_t r = 0; r < n; ++r) {
    y.row(r) += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), u);
  }
  check_finite(out, "dense");
  Tape<T>::record({&input, &weight, &bias}, out,
                  [input, weight, n, f, u](std::span<const T> g, std::span<std::span<T>> grads) {
                    ConstMatMap<T> gy(g.data(), n, u);
                    if (!grads[0].empty()) {
                      MatMap<T>(grads[0].data(), n, f).noalias() +=
                          gy * ConstMatMap<T>(weight.data().data(), f, u).transpose();
                    }
                    if (!grads[1].empty()) {
                      MatMap<T>(grads[1].data(), f, u).noalias() +=
                          ConstMatMap<T>(input.data().data(), n, f).transpose() * gy;
                    }
                    if (!grads[2].empty()) {
                      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grads[2].data(), u) +=
                          gy.colwise().sum();
                    }
                  });
  return out;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  check_finite(out, "relu");
  Tape<T>::record({&input}, out, [input](std::span<const T> g, std::span<std::span<T>> grads) {
    if (grads[0].empty()) return;
    auto x = input.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > T(0)) grads[0][i] += g[i];
    }
  });
  return out;
}

template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormState<T>& state, Mode mode) {
  require_rank(input, 4, "batchnorm2d input");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  require(gamma.size() == c && beta.size() == c, "batchnorm2d gamma/beta length must equal channels");
  require(state.running_mean.size() == c && state.running_var.size() == c,
          "batchnorm2d running statistics length must equal channels");
  const std::size_t count = n * hw;
  if (mode == Mode::train) {
    require(count >= 2, "batchnorm2d needs at least two values per channel in train mode");
  }

  auto x = input.data();
  // Per-channel normalized values and inverse standard deviations, kept for backward.
  auto xhat = std::make_shared<std::vector<T>>(input.size());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  BasicTensor<T> out(input.shape());
  auto y = out.data();

  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == Mode::train) {
      double acc = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      }
      mean = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / static_cast<double>(count);
      state.running_mean[ch] = static_cast<T>(kBatchNormMomentum * state.running_mean[ch] +
                                              (1.0 - kBatchNormMomentum) * mean);
      state.running_var[ch] = static_cast<T>(kBatchNormMomentum * state.running_var[ch] +
                                             (1.0 - kBatchNormMomentum) * var);
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const double istd = 1.0 / std::sqrt(var + kBatchNormEpsilon);
    (*inv_std)[ch] = static_cast<T>(istd);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = static_cast<T>((x[off + i] - mean) * istd);
        (*xhat)[off + i] = xh;
        y[off + i] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  check_finite(out, "batchnorm2d");

  Tape<T>::record(
      {&input, &gamma, &beta}, out,
      [xhat, inv_std, gamma, n, c, hw, count, mode](std::span<const T> g,
                                                   std::span<std::span<T>> grads) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g += g[off + i];
              sum_gx += static_cast<double>(g[off + i]) * (*xhat)[off + i];
            }
          }
          if (!grads[1].empty()) grads[1][ch] += static_cast<T>(sum_gx);
          if (!grads[2].empty()) grads[2][ch] += static_cast<T>(sum_g);
          if (grads[0].empty()) continue;
          const double scale = static_cast<double>(gamma[ch]) * (*inv_std)[ch];
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              double d;
              if (mode == Mode::train) {
                const double m = static_cast<double>(count);
                d = scale * (g[off + i] - sum_g / m - (*xhat)[off + i] * sum_gx / m);
              } else {
                d = scale * g[off + i];
              }
              grads[0][off + i] += static_cast<T>(d);
            }
          }
        }
      });
  return out;
}

namespace {

template <typename T>
void check_one_hot(const BasicTensor<T>& onehot) {
  const std::size_t n = onehot.dim(0), k = onehot.dim(1);
  for (std::size_t r = 0; r < n; ++r) {
    int ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T v = onehot[r * k + j];
      if (v == T(1)) {
        ++ones;
      } else if (v != T(0)) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw ShapeError("row " + std::to_string(r) + " is not a valid one-hot vector");
  }
}

// Numerically stable softmax of one row, in double.
template <typename T>
void softmax_row(const T* logits, std::size_t k, double* out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    out[j] = std::exp(static_cast<double>(logits[j]) - mx);
    total += out[j];
  }
  for (std::size_t j = 0; j < k; ++j) out[j] /= total;
}

}  // namespace

template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& onehot) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  require(onehot.shape() == logits.shape(), "softmax_cross_entropy label shape " +
                                                shape_string(onehot.shape()) +
                                                " does not match logits " +
                                                shape_string(logits.shape()));
  check_one_hot(onehot);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  require(n >= 1 && k >= 1, "softmax_cross_entropy needs a non-empty batch");

  auto probs = std::make_shared<std::vector<double>>(n * k);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double* p = probs->data() + r * k;
    softmax_row(logits.data().data() + r * k, k, p);
    for (std::size_t j = 0; j < k; ++j) {
      if (onehot[r * k + j] == T(1)) loss -= std::log(std::max(p[j], kLogFloor));
    }
  }
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(loss / static_cast<double>(n)));
  check_finite(out, "softmax_cross_entropy");

  Tape<T>::record({&logits, &onehot}, out,
                  [probs, onehot, n, k](std::span<const T> g, std::span<std::span<T>> grads) {
                    if (grads[0].empty()) return;
                    const double scale = static_cast<double>(g[0]) / static_cast<double>(n);
                    for (std::size_t i = 0; i < n * k; ++i) {
                      grads[0][i] += static_cast<T>(scale * ((*probs)[i] - onehot[i]));
                    }
                  });
  return out;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits, 2, "softmax logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  BasicTensor<T> out(logits.shape());
  std::vector<double> row(k);
  for (std::size_t r = 0; r < n; ++r) {
    softmax_row(logits.data().data() + r * k, k, row.data());
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = static_cast<T>(row[j]);
  }
  check_finite(out, "softmax");
  return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require(a.shape() == b.shape(), "add shape mismatch: " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  check_finite(out, "add");
  Tape<T>::record({&a, &b}, out, [](std::span<const T> g, std::span<std::span<T>> grads) {
    for (auto& dst : grads) {
      if (dst.empty()) continue;
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
  return out;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require(a.shape() == b.shape(), "mul shape mismatch: " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  check_finite(out, "mul");
  Tape<T>::record({&a, &b}, out, [a, b](std::span<const T> g, std::span<std::span<T>> grads) {
    if (!grads[0].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * b[i];
    }
    if (!grads[1].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) grads[1][i] += g[i] * a[i];
    }
  });
  return out;
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
  double acc = 0.0;
  for (T v : input.data()) acc += v;
  BasicTensor<T> out = BasicTensor<T>::scalar(static_cast<T>(acc));
  check_finite(out, "sum");
  Tape<T>::record({&input}, out, [](std::span<const T> g, std::span<std::span<T>> grads) {
    if (grads[0].empty()) return;
    for (auto& d : grads[0]) d += g[0];
  });
  return out;
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape) {
  require(shape_numel(shape) == input.size(), "reshape from " + shape_string(input.shape()) +
                                                  " to " + shape_string(shape) +
                                                  " changes the element count");
  BasicTensor<T> out = input.reshaped(std::move(shape));
  Tape<T>::record({&input}, out, [](std::span<const T> g, std::span<std::span<T>> grads) {
    if (grads[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
  });
  return out;
}

template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& input) {
  require(input.rank() >= 2, "flatten needs a batch axis");
  return reshape(input, Shape{input.dim(0), input.size() / input.dim(0)});
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
  require_rank(input, 4, "global_avg_pool input");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  BasicTensor<T> out(Shape{n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += input[p * hw + i];
    out[p] = static_cast<T>(acc / static_cast<double>(hw));
  }
  check_finite(out, "global_avg_pool");
  Tape<T>::record({&input}, out, [n, c, hw](std::span<const T> g, std::span<std::span<T>> grads) {
    if (grads[0].empty()) return;
    for (std::size_t p = 0; p < n * c; ++p) {
      const T share = g[p] / static_cast<T>(hw);
      for (std::size_t i = 0; i < hw; ++i) grads[0][p * hw + i] += share;
    }
  });
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts) {
  require(!parts.empty(), "concat_channels needs at least one input");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 4, "concat_channels input");
    require(p.dim(0) == n && p.dim(2) == h && p.dim(3) == w,
            "concat_channels inputs must agree on batch and spatial extents");
    channels.push_back(p.dim(1));
    total += p.dim(1);
  }
  const std::size_t hw = h * w;
  BasicTensor<T> out(Shape{n, total, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const T* src = parts[k].data().data() + b * channels[k] * hw;
      std::copy(src, src + channels[k] * hw, out.data().data() + (b * total + offset) * hw);
      offset += channels[k];
    }
  }
  std::vector<const BasicTensor<T>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  Tape<T>::record(inputs, out,
                  [channels, n, total, hw](std::span<const T> g, std::span<std::span<T>> grads) {
                    for (std::size_t b = 0; b < n; ++b) {
                      std::size_t offset = 0;
                      for (std::size_t k = 0; k < channels.size(); ++k) {
                        if (!grads[k].empty()) {
                          const T* src = g.data() + (b * total + offset) * hw;
                          T* dst = grads[k].data() + b * channels[k] * hw;
                          for (std::size_t i = 0; i < channels[k] * hw; ++i) dst[i] += src[i];
                        }
                        offset += channels[k];
                      }
                    }
                  });
  return out;
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& input, double rate, Rng& rng, Mode mode) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
  if (mode == Mode::infer || rate == 0.0) return reshape(input, input.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(input.size());
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    (*mask)[i] = rng.bernoulli(rate) ? T(0) : keep_scale;
    out[i] = input[i] * (*mask)[i];
  }
  Tape<T>::record({&input}, out, [mask](std::span<const T> g, std::span<std::span<T>> grads) {
    if (grads[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * (*mask)[i];
  });
  return out;
}

template <typename T>
BasicTensor<T> one_hot(const std::vector<int>& labels, std::size_t classes) {
  BasicTensor<T> out(Shape{labels.size(), classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw ShapeError("label " + std::to_string(labels[r]) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    out[r * classes + static_cast<std::size_t>(labels[r])] = T(1);
  }
  return out;
}

#define EDGESHIELD_INSTANTIATE_OPS(T)                                                           \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                 const BasicTensor<T>&, std::size_t, std::size_t);              \
  template BasicTensor<T> maxpool2d(const BasicTensor<T>&, std::size_t, std::size_t);           \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                const BasicTensor<T>&);                                         \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                          \
  template BasicTensor<T> batchnorm2d(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                      const BasicTensor<T>&, BatchNormState<T>&, Mode);         \
  template BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                       \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                           \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                \
  template BasicTensor<T> flatten(const BasicTensor<T>&);                                       \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                               \
  template BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>&);                  \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, Rng&, Mode);                   \
  template BasicTensor<T> one_hot(const std::vector<int>&, std::size_t);

EDGESHIELD_INSTANTIATE_OPS(float)
EDGESHIELD_INSTANTIATE_OPS(double)

}  // namespace edgeshield
