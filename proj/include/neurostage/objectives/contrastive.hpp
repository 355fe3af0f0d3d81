#pragma once

#include "neurostage/model/layers.hpp"

#include <cmath>

namespace neurostage {

/// lambda = softplus(rho), evaluated without overflow for large |rho|.
inline double softplus(double rho) {
  return rho > 0 ? rho + std::log1p(std::exp(-rho)) : std::log1p(std::exp(rho));
}
inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// S_ij = softplus(rho) * cos(x_i, y_j). Rows are L2-normalized internally; a
/// zero row raises NumericError naming it.
template <class S>
Mat<S> similarity_matrix(const Mat<S>& x, const Mat<S>& y, double rho) {
  require<ArgumentError>(x.rows() >= 1 && x.rows() == y.rows(), "similarity needs equal, non-empty batches (",
                         x.rows(), " vs ", y.rows(), ")");
  require(x.cols() == y.cols(), "embedding widths differ: ", x.cols(), " vs ", y.cols());
  const Mat<S> xn = l2_normalize_rows(x, "X");
  const Mat<S> yn = l2_normalize_rows(y, "Y");
  return static_cast<S>(softplus(rho)) * (xn * yn.transpose());
}

template <class S>
struct ClipLossResult {
  double loss = 0.0;
  Mat<S> dx;  // filled when gradients are requested
  Mat<S> dy;
  double drho = 0.0;
};

/// Symmetric temperature-scaled contrastive loss over a paired batch:
/// 0.5 * (CE over rows of S + CE over columns of S), positives on the
/// diagonal. Softmax uses per-row (per-column) max subtraction.
template <class S>
ClipLossResult<S> clip_loss(const Mat<S>& x, const Mat<S>& y, double rho, bool want_grad = false) {
  require<ArgumentError>(x.rows() >= 1, "contrastive loss needs a non-empty batch");
  require<ArgumentError>(x.rows() == y.rows(), "contrastive loss needs paired batches (",
                         x.rows(), " vs ", y.rows(), ")");
  require(x.cols() == y.cols(), "embedding widths differ: ", x.cols(), " vs ", y.cols());
  const Index b = x.rows();
  const Mat<S> xn = l2_normalize_rows(x, "X");
  const Mat<S> yn = l2_normalize_rows(y, "Y");
  const Mat<S> cos = xn * yn.transpose();
  const S lambda = static_cast<S>(softplus(rho));
  const Mat<S> s = lambda * cos;

  Mat<S> prow(b, b), pcol(b, b);
  double lxy = 0.0, lyx = 0.0;
  for (Index i = 0; i < b; ++i) {
    const S m = s.row(i).maxCoeff();
    const S lse = m + std::log((s.row(i).array() - m).exp().sum());
    lxy += static_cast<double>(lse - s(i, i));
    prow.row(i) = (s.row(i).array() - lse).exp();
  }
  for (Index j = 0; j < b; ++j) {
    const S m = s.col(j).maxCoeff();
    const S lse = m + std::log((s.col(j).array() - m).exp().sum());
    lyx += static_cast<double>(lse - s(j, j));
    pcol.col(j) = (s.col(j).array() - lse).exp();
  }
  ClipLossResult<S> r;
  r.loss = 0.5 * (lxy + lyx) / static_cast<double>(b);
  if (!want_grad) return r;

  Mat<S> ds = (prow + pcol) - Mat<S>::Identity(b, b) * S(2);
  ds *= static_cast<S>(0.5 / static_cast<double>(b));
  r.drho = static_cast<double>((ds.array() * cos.array()).sum()) * sigmoid(rho);
  const Mat<S> dxn = lambda * ds * yn;
  const Mat<S> dyn = lambda * ds.transpose() * xn;
  r.dx = l2_normalize_rows_backward(x, xn, dxn);
  r.dy = l2_normalize_rows_backward(y, yn, dyn);
  return r;
}

}  // namespace neurostage
