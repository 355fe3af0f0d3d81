#pragma once

#include "neurostage/model/params.hpp"

#include <cmath>
#include <string>

namespace neurostage {

// Layers hold parameter ids only; activations needed by backward are returned
// to the caller in small cache structs, so forward passes stay pure.

/// y = x W^T + b, W is (out x in).
struct Linear {
  ParamId weight = 0;
  ParamId bias = 0;
  Index in = 0;
  Index out = 0;

  template <class S>
  static Linear make(ParamSet<S>& ps, const std::string& path, Index in, Index out) {
    Linear l;
    l.in = in;
    l.out = out;
    l.weight = ps.add(path + ".weight", out, in);
    l.bias = ps.add(path + ".bias", 1, out);
    return l;
  }

  template <class S>
  void init(ParamSet<S>& ps, Rng& rng) const {
    init_uniform_fan_in(ps[weight], in, rng);
    init_uniform_fan_in(ps[bias], in, rng);
  }

  template <class S>
  Mat<S> forward(const ParamSet<S>& ps, const Mat<S>& x) const {
    require(x.cols() == in, "linear expects ", in, " input features, got ", x.cols());
    Mat<S> y = x * ps[weight].transpose();
    y.rowwise() += ps[bias].row(0);
    return y;
  }

  template <class S>
  Mat<S> backward(const ParamSet<S>& ps, const Mat<S>& x, const Mat<S>& dy, Grads<S>& g) const {
    g[weight].noalias() += dy.transpose() * x;
    g[bias].row(0) += dy.colwise().sum();
    return dy * ps[weight];
  }

  std::size_t param_count() const { return static_cast<std::size_t>(in * out + out); }
  std::size_t macs() const { return static_cast<std::size_t>(in * out); }
};

/// Per-row normalization over the feature axis with learnable gain and bias.
struct LayerNorm {
  ParamId gain = 0;
  ParamId bias = 0;
  Index dim = 0;
  double eps = 1e-5;

  template <class S>
  struct Cache {
    Mat<S> xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> rstd;
  };

  template <class S>
  static LayerNorm make(ParamSet<S>& ps, const std::string& path, Index dim, double eps) {
    LayerNorm n;
    n.dim = dim;
    n.eps = eps;
    n.gain = ps.add(path + ".weight", 1, dim);
    n.bias = ps.add(path + ".bias", 1, dim);
    return n;
  }

  template <class S>
  void init(ParamSet<S>& ps) const {
    ps[gain].setOnes();
    ps[bias].setZero();
  }

  template <class S>
  Mat<S> forward(const ParamSet<S>& ps, const Mat<S>& x, Cache<S>& c) const {
    require(x.cols() == dim, "layer norm expects ", dim, " features, got ", x.cols());
    const Index n = x.rows();
    c.xhat.resize(n, dim);
    c.rstd.resize(n);
    for (Index r = 0; r < n; ++r) {
      const S mu = x.row(r).mean();
      const S var = (x.row(r).array() - mu).square().mean();
      const S rstd = S(1) / std::sqrt(var + static_cast<S>(eps));
      c.rstd(r) = rstd;
      c.xhat.row(r) = (x.row(r).array() - mu) * rstd;
    }
    Mat<S> y = c.xhat.array().rowwise() * ps[gain].row(0).array();
    y.rowwise() += ps[bias].row(0);
    return y;
  }

  template <class S>
  Mat<S> backward(const ParamSet<S>& ps, const Cache<S>& c, const Mat<S>& dy, Grads<S>& g) const {
    g[gain].row(0) += (dy.array() * c.xhat.array()).matrix().colwise().sum();
    g[bias].row(0) += dy.colwise().sum();
    Mat<S> dxhat = dy.array().rowwise() * ps[gain].row(0).array();
    Mat<S> dx(dy.rows(), dim);
    for (Index r = 0; r < dy.rows(); ++r) {
      const S m1 = dxhat.row(r).mean();
      const S m2 = (dxhat.row(r).array() * c.xhat.row(r).array()).mean();
      dx.row(r) = c.rstd(r) * (dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2);
    }
    return dx;
  }

  std::size_t param_count() const { return static_cast<std::size_t>(2 * dim); }
};

// Exact (erf) GELU.
template <class S>
Mat<S> gelu(const Mat<S>& x) {
  return x.unaryExpr([](S v) {
    return static_cast<S>(0.5) * v * (S(1) + std::erf(v / static_cast<S>(std::sqrt(2.0))));
  });
}

template <class S>
Mat<S> gelu_backward(const Mat<S>& x, const Mat<S>& dy) {
  const S inv_sqrt2 = static_cast<S>(1.0 / std::sqrt(2.0));
  const S inv_sqrt2pi = static_cast<S>(1.0 / std::sqrt(2.0 * 3.14159265358979323846));
  Mat<S> d = x.unaryExpr([&](S v) {
    const S cdf = static_cast<S>(0.5) * (S(1) + std::erf(v * inv_sqrt2));
    const S pdf = inv_sqrt2pi * std::exp(static_cast<S>(-0.5) * v * v);
    return cdf + v * pdf;
  });
  return dy.cwiseProduct(d);
}

template <class S>
Mat<S> relu(const Mat<S>& x) {
  return x.cwiseMax(S(0));
}

template <class S>
Mat<S> relu_backward(const Mat<S>& x, const Mat<S>& dy) {
  return (x.array() > S(0)).select(dy, S(0));
}

// Row-wise softmax with max subtraction.
template <class S>
Mat<S> softmax_rows(const Mat<S>& x) {
  Mat<S> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const S m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

template <class S>
Mat<S> softmax_rows_backward(const Mat<S>& y, const Mat<S>& dy) {
  Mat<S> dx(y.rows(), y.cols());
  for (Index r = 0; r < y.rows(); ++r) {
    const S dot = y.row(r).dot(dy.row(r));
    dx.row(r) = y.row(r).array() * (dy.row(r).array() - dot);
  }
  return dx;
}

/// Inverted dropout mask (entries 0 or 1/(1-p)) drawn from a seeded stream.
template <class S>
Mat<S> dropout_mask(Index rows, Index cols, double p, std::uint64_t seed) {
  Mat<S> m(rows, cols);
  Rng rng(seed);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform() < p ? S(0) : keep_scale;
  return m;
}

template <class S>
Mat<S> l2_normalize_rows(const Mat<S>& x, const char* what = "embedding") {
  Mat<S> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const S n = x.row(r).norm();
    if (!(n > S(0)) || !std::isfinite(n))
      throw NumericError(detail::concat("cannot L2-normalize row ", r, " of ", what,
                                        ": norm is ", n));
    y.row(r) = x.row(r) / n;
  }
  return y;
}

// Gradient through y = x / |x| given the normalized rows y and the norms.
template <class S>
Mat<S> l2_normalize_rows_backward(const Mat<S>& x, const Mat<S>& y, const Mat<S>& dy) {
  Mat<S> dx(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const S n = x.row(r).norm();
    const S proj = y.row(r).dot(dy.row(r));
    dx.row(r) = (dy.row(r) - proj * y.row(r)) / n;
  }
  return dx;
}

}  // namespace neurostage
