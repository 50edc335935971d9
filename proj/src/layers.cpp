#include "gridcaps/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include <Eigen/Dense>

namespace gridcaps {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <class T>
using MapRow = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

}  // namespace

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

template <class T>
void init_gaussian(Tensor<T>& t, Rng& rng, double std) {
  std::normal_distribution<double> d(0.0, std);
  for (auto& v : t.data) v = static_cast<T>(d(rng));
}

// ---- Conv2D

template <class T>
Conv2D<T>::Conv2D(std::string name, int c_in, int c_out, int kh, int kw, int sh, int sw, Rng& rng)
    : c_in_(c_in), c_out_(c_out), kh_(kh), kw_(kw), sh_(sh), sw_(sw),
      kernel_(name + ".kernel", {kh, kw, c_in, c_out}), bias_(name + ".bias", {c_out}) {
  if (c_in <= 0 || c_out <= 0 || kh <= 0 || kw <= 0 || sh <= 0 || sw <= 0) {
    throw StructuralError(name + ": conv sizes must be positive");
  }
  init_gaussian(kernel_.value, rng, std::sqrt(2.0 / (kh * kw * c_in)));
}

template <class T>
std::pair<int, int> Conv2D<T>::output_hw(int h, int w) const {
  const int ho = h >= kh_ ? (h - kh_) / sh_ + 1 : 0;
  const int wo = w >= kw_ ? (w - kw_) / sw_ + 1 : 0;
  if (ho <= 0 || wo <= 0) {
    throw StructuralError("conv2d: input " + std::to_string(h) + "x" + std::to_string(w) +
                          " too small for kernel " + std::to_string(kh_) + "x" + std::to_string(kw_));
  }
  return {ho, wo};
}

template <class T>
Tensor<T> Conv2D<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  if (x.rank() != 4 || x.dim(3) != c_in_) {
    throw StructuralError("conv2d: expected NHWC input with " + std::to_string(c_in_) +
                          " channels, got " + shape_string(x.shape));
  }
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::tie(ho_, wo_) = output_hw(h, w);
  in_shape_ = x.shape;
  const std::size_t k = static_cast<std::size_t>(kh_ * kw_ * c_in_);
  const std::size_t rows = static_cast<std::size_t>(n) * ho_ * wo_;
  const std::size_t chunk = static_cast<std::size_t>(kw_ * c_in_);
  cols_.resize(rows * k);
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < ho_; ++i) {
      for (int j = 0; j < wo_; ++j) {
        T* dst = cols_.data() + ((static_cast<std::size_t>(b) * ho_ + i) * wo_ + j) * k;
        for (int r = 0; r < kh_; ++r) {
          const T* src = x.ptr() + ((static_cast<std::size_t>(b) * h + i * sh_ + r) * w + j * sw_) * c_in_;
          std::memcpy(dst + r * chunk, src, chunk * sizeof(T));
        }
      }
    }
  }
  Tensor<T> y({n, ho_, wo_, c_out_});
  MapMat<T> ym(y.ptr(), static_cast<Eigen::Index>(rows), c_out_);
  ym.noalias() = CMapMat<T>(cols_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k)) *
                 CMapMat<T>(kernel_.value.ptr(), static_cast<Eigen::Index>(k), c_out_);
  ym.rowwise() += MapRow<T>(bias_.value.ptr(), c_out_);
  return y;
}

template <class T>
Tensor<T> Conv2D<T>::backward(const Tensor<T>& gy) {
  const int n = in_shape_[0], h = in_shape_[1], w = in_shape_[2];
  const auto k = static_cast<Eigen::Index>(kh_ * kw_ * c_in_);
  const auto rows = static_cast<Eigen::Index>(n) * ho_ * wo_;
  if (gy.size() != static_cast<std::size_t>(rows * c_out_)) throw StructuralError("conv2d: bad grad shape");
  CMapMat<T> g(gy.ptr(), rows, c_out_);
  CMapMat<T> cols(cols_.data(), rows, k);
  MapMat<T>(kernel_.grad.ptr(), k, c_out_).noalias() += cols.transpose() * g;
  MapRow<T>(bias_.grad.ptr(), c_out_) += g.colwise().sum();

  RowMat<T> dcols = g * CMapMat<T>(kernel_.value.ptr(), k, c_out_).transpose();
  Tensor<T> gx(in_shape_);
  const std::size_t chunk = static_cast<std::size_t>(kw_ * c_in_);
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < ho_; ++i) {
      for (int j = 0; j < wo_; ++j) {
        const T* src = dcols.data() + ((static_cast<std::size_t>(b) * ho_ + i) * wo_ + j) * k;
        for (int r = 0; r < kh_; ++r) {
          T* dst = gx.ptr() + ((static_cast<std::size_t>(b) * h + i * sh_ + r) * w + j * sw_) * c_in_;
          const T* s = src + r * chunk;
          for (std::size_t e = 0; e < chunk; ++e) dst[e] += s[e];
        }
      }
    }
  }
  return gx;
}

// ---- Dense

template <class T>
Dense<T>::Dense(std::string name, int n_in, int n_out, Rng& rng)
    : n_in_(n_in), n_out_(n_out), weight_(name + ".weight", {n_in, n_out}), bias_(name + ".bias", {n_out}) {
  if (n_in <= 0 || n_out <= 0) throw StructuralError(name + ": dense sizes must be positive");
  init_gaussian(weight_.value, rng, std::sqrt(2.0 / n_in));
}

template <class T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  if (x.rank() < 1 || x.stride0() != static_cast<std::size_t>(n_in_)) {
    throw StructuralError("dense: expected " + std::to_string(n_in_) + " inputs per item, got " +
                          shape_string(x.shape));
  }
  x_ = x;
  const int n = x.dim(0);
  Tensor<T> y({n, n_out_});
  MapMat<T> ym(y.ptr(), n, n_out_);
  ym.noalias() = CMapMat<T>(x.ptr(), n, n_in_) * CMapMat<T>(weight_.value.ptr(), n_in_, n_out_);
  ym.rowwise() += MapRow<T>(bias_.value.ptr(), n_out_);
  return y;
}

template <class T>
Tensor<T> Dense<T>::backward(const Tensor<T>& gy) {
  const int n = x_.dim(0);
  if (gy.size() != static_cast<std::size_t>(n) * n_out_) throw StructuralError("dense: bad grad shape");
  CMapMat<T> g(gy.ptr(), n, n_out_);
  CMapMat<T> x(x_.ptr(), n, n_in_);
  MapMat<T>(weight_.grad.ptr(), n_in_, n_out_).noalias() += x.transpose() * g;
  MapRow<T>(bias_.grad.ptr(), n_out_) += g.colwise().sum();
  Tensor<T> gx(x_.shape);
  MapMat<T>(gx.ptr(), n, n_in_).noalias() = g * CMapMat<T>(weight_.value.ptr(), n_in_, n_out_).transpose();
  return gx;
}

// ---- ReLU

template <class T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  y_ = x;
  for (auto& v : y_.data) v = v > T(0) ? v : T(0);
  return y_;
}

template <class T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& gy) {
  Tensor<T> gx = gy;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    if (!(y_.data[i] > T(0))) gx.data[i] = T(0);
  }
  return gx;
}

// ---- Dropout

template <class T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw RangeError("dropout rate must be in [0, 1)");
}

template <class T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, const ForwardContext& ctx) {
  active_ = ctx.training && rate_ > 0.0;
  if (!active_) return x;
  if (!ctx.rng) throw StructuralError("dropout: training forward needs an RNG");
  const T keep = static_cast<T>(1.0 / (1.0 - rate_));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  mask_.resize(x.size());
  Tensor<T> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask_[i] = u(*ctx.rng) < rate_ ? T(0) : keep;
    y.data[i] *= mask_[i];
  }
  return y;
}

template <class T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& gy) {
  if (!active_) return gy;
  Tensor<T> gx = gy;
  for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] *= mask_[i];
  return gx;
}

// ---- MaxPool2D

template <class T>
MaxPool2D<T>::MaxPool2D(int ph, int pw) : ph_(ph), pw_(pw) {
  if (ph <= 0 || pw <= 0) throw StructuralError("maxpool: window must be positive");
}

template <class T>
Tensor<T> MaxPool2D<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  if (x.rank() != 4) throw StructuralError("maxpool: expected NHWC input, got " + shape_string(x.shape));
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int ho = h / ph_, wo = w / pw_;
  if (ho <= 0 || wo <= 0) throw StructuralError("maxpool: input smaller than the window");
  in_shape_ = x.shape;
  Tensor<T> y({n, ho, wo, c});
  argmax_.resize(y.size());
  std::size_t o = 0;
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        for (int ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = 0;
          T bv = T(0);
          bool first = true;
          for (int r = 0; r < ph_; ++r) {
            for (int s = 0; s < pw_; ++s) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(b) * h + i * ph_ + r) * w + j * pw_ + s) * c + ch;
              if (first || x.data[idx] > bv) {
                bv = x.data[idx];
                best = idx;
                first = false;
              }
            }
          }
          y.data[o] = bv;
          argmax_[o] = best;
        }
      }
    }
  }
  return y;
}

template <class T>
Tensor<T> MaxPool2D<T>::backward(const Tensor<T>& gy) {
  Tensor<T> gx(in_shape_);
  for (std::size_t o = 0; o < gy.size(); ++o) gx.data[argmax_[o]] += gy.data[o];
  return gx;
}

// ---- Flatten

template <class T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x, const ForwardContext&) {
  in_shape_ = x.shape;
  return x.reshaped({x.dim(0), static_cast<int>(x.stride0())});
}

template <class T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& gy) {
  return gy.reshaped(in_shape_);
}

// ---- Sequential

template <class T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, const ForwardContext& ctx) {
  Tensor<T> h = x;
  for (auto& l : layers_) h = l->forward(h, ctx);
  return h;
}

template <class T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& gy) {
  Tensor<T> g = gy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <class T>
std::vector<Param<T>*> Sequential<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& l : layers_) {
    for (auto* p : l->params()) out.push_back(p);
  }
  return out;
}

// ---- softmax / cross-entropy

template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw StructuralError("softmax: expected [N, Q]");
  const int n = logits.dim(0), q = logits.dim(1);
  Tensor<T> p(logits.shape);
  for (int b = 0; b < n; ++b) {
    const T* z = logits.ptr() + static_cast<std::size_t>(b) * q;
    T* out = p.ptr() + static_cast<std::size_t>(b) * q;
    const T m = *std::max_element(z, z + q);
    double s = 0.0;
    for (int k = 0; k < q; ++k) s += std::exp(static_cast<double>(z[k] - m));
    for (int k = 0; k < q; ++k) out[k] = static_cast<T>(std::exp(static_cast<double>(z[k] - m)) / s);
  }
  return p;
}

template <class T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels, Tensor<T>* grad) {
  const int n = logits.dim(0), q = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(n)) throw StructuralError("cross-entropy: label count mismatch");
  double loss = 0.0;
  if (grad) *grad = Tensor<T>(logits.shape);
  for (int b = 0; b < n; ++b) {
    const T* z = logits.ptr() + static_cast<std::size_t>(b) * q;
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= q) throw RangeError("cross-entropy: label out of range");
    const double m = static_cast<double>(*std::max_element(z, z + q));
    double s = 0.0;
    for (int k = 0; k < q; ++k) s += std::exp(static_cast<double>(z[k]) - m);
    const double lse = m + std::log(s);
    loss += lse - static_cast<double>(z[y]);
    if (grad) {
      T* g = grad->ptr() + static_cast<std::size_t>(b) * q;
      for (int k = 0; k < q; ++k) {
        const double p = std::exp(static_cast<double>(z[k]) - lse);
        g[k] = static_cast<T>((p - (k == y ? 1.0 : 0.0)) / n);
      }
    }
  }
  return loss / n;
}

std::size_t param_count(const std::vector<Param<float>*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

#define GRIDCAPS_INSTANTIATE(T)                                                          \
  template void init_gaussian<T>(Tensor<T>&, Rng&, double);                              \
  template class Conv2D<T>;                                                              \
  template class Dense<T>;                                                               \
  template class ReLU<T>;                                                                \
  template class Dropout<T>;                                                             \
  template class MaxPool2D<T>;                                                           \
  template class Flatten<T>;                                                             \
  template class Sequential<T>;                                                          \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                       \
  template double softmax_cross_entropy<T>(const Tensor<T>&, const std::vector<int>&, Tensor<T>*);

GRIDCAPS_INSTANTIATE(float)
GRIDCAPS_INSTANTIATE(double)

#undef GRIDCAPS_INSTANTIATE

}  // namespace gridcaps
