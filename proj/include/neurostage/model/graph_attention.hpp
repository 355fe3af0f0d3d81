#pragma once

#include "neurostage/model/config.hpp"
#include "neurostage/model/layers.hpp"

#include <string>
#include <vector>

namespace neurostage {

/// Single-head additive graph attention over a fully connected directed graph
/// without self-loops (every ordered pair i != j is an edge j -> i).
///
///   h_i    = W x_i
///   e_ij   = LeakyReLU(a_dst . h_i + a_src . h_j)          j != i
///   alpha  = softmax_j(e_ij)  over the in-neighbourhood of i
///   out_i  = sum_j alpha_ij h_j + bias
///
/// A graph with a single node has no edges; its output is the bias.
struct GraphAttention {
  ParamId weight = 0;
  ParamId att_src = 0;
  ParamId att_dst = 0;
  ParamId bias = 0;
  Index features = 0;
  double negative_slope = 0.2;

  template <class S>
  struct Cache {
    Mat<S> x;      // N x F input
    Mat<S> h;      // N x F projected
    Mat<S> alpha;  // N x N, zero diagonal
    Mat<S> score;  // N x N pre-activation
  };

  template <class S>
  static GraphAttention make(ParamSet<S>& ps, const std::string& path, Index features,
                             double slope) {
    GraphAttention g;
    g.features = features;
    g.negative_slope = slope;
    g.weight = ps.add(path + ".weight", features, features);
    g.att_src = ps.add(path + ".att_src", 1, features);
    g.att_dst = ps.add(path + ".att_dst", 1, features);
    g.bias = ps.add(path + ".bias", 1, features);
    return g;
  }

  template <class S>
  void init(ParamSet<S>& ps, Rng& rng) const {
    init_uniform_fan_in(ps[weight], features, rng);
    init_uniform_fan_in(ps[att_src], features, rng);
    init_uniform_fan_in(ps[att_dst], features, rng);
    ps[bias].setZero();
  }

  template <class S>
  Mat<S> forward(const ParamSet<S>& ps, const Mat<S>& x, Cache<S>& c) const {
    require(x.cols() == features, "graph attention expects node features of width ", features,
            ", got ", x.cols());
    const Index n = x.rows();
    c.x = x;
    c.h.noalias() = x * ps[weight].transpose();
    const Eigen::Matrix<S, Eigen::Dynamic, 1> src = c.h * ps[att_src].row(0).transpose();
    const Eigen::Matrix<S, Eigen::Dynamic, 1> dst = c.h * ps[att_dst].row(0).transpose();
    const S slope = static_cast<S>(negative_slope);
    c.score.resize(n, n);
    c.alpha.setZero(n, n);
    for (Index i = 0; i < n; ++i) {
      if (n == 1) break;
      S mx = -std::numeric_limits<S>::infinity();
      for (Index j = 0; j < n; ++j) {
        const S z = dst(i) + src(j);
        c.score(i, j) = z;
        if (j == i) continue;
        const S e = z > S(0) ? z : slope * z;
        c.alpha(i, j) = e;
        mx = std::max(mx, e);
      }
      S sum = 0;
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const S v = std::exp(c.alpha(i, j) - mx);
        c.alpha(i, j) = v;
        sum += v;
      }
      for (Index j = 0; j < n; ++j)
        if (j != i) c.alpha(i, j) /= sum;
    }
    if (n == 1) c.score.setZero();
    Mat<S> out = c.alpha * c.h;
    out.rowwise() += ps[bias].row(0);
    return out;
  }

  template <class S>
  Mat<S> backward(const ParamSet<S>& ps, const Cache<S>& c, const Mat<S>& dout,
                  Grads<S>& g) const {
    const Index n = c.x.rows();
    const S slope = static_cast<S>(negative_slope);
    g[bias].row(0) += dout.colwise().sum();

    Mat<S> dh = c.alpha.transpose() * dout;
    const Mat<S> dalpha = dout * c.h.transpose();

    Eigen::Matrix<S, Eigen::Dynamic, 1> ddst = Eigen::Matrix<S, Eigen::Dynamic, 1>::Zero(n);
    Eigen::Matrix<S, Eigen::Dynamic, 1> dsrc = Eigen::Matrix<S, Eigen::Dynamic, 1>::Zero(n);
    for (Index i = 0; i < n; ++i) {
      S dot = 0;
      for (Index j = 0; j < n; ++j)
        if (j != i) dot += c.alpha(i, j) * dalpha(i, j);
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const S de = c.alpha(i, j) * (dalpha(i, j) - dot);
        const S dz = c.score(i, j) > S(0) ? de : slope * de;
        ddst(i) += dz;
        dsrc(j) += dz;
      }
    }
    g[att_dst].row(0) += ddst.transpose() * c.h;
    g[att_src].row(0) += dsrc.transpose() * c.h;
    dh.noalias() += ddst * ps[att_dst].row(0);
    dh.noalias() += dsrc * ps[att_src].row(0);

    g[weight].noalias() += dh.transpose() * c.x;
    return dh * ps[weight];
  }

  std::size_t param_count() const { return static_cast<std::size_t>(features * features + 3 * features); }

  // Multiply-accumulates for one graph of n nodes: node projection, the two
  // attention score dot products per node, and weighted aggregation over the
  // n(n-1) directed edges.
  std::size_t macs(Index n) const {
    const auto f = static_cast<std::size_t>(features);
    const auto nn = static_cast<std::size_t>(n);
    return nn * f * f + 2 * nn * f + nn * (nn - 1) * f;
  }
};

/// Channel-view and temporal-view graph attention over a (C x T) signal.
/// `update` returns the residual increment Delta(u); a complete residual block
/// is u + Delta(u).
struct SpatioTemporalBlock {
  GraphAttention channel;   // nodes = channels, features = T
  GraphAttention temporal;  // nodes = time steps, features = C
  Index channels = 0;
  Index timesteps = 0;
  GatOrder order = GatOrder::channel_first;

  template <class S>
  struct SampleCache {
    typename GraphAttention::Cache<S> ch;
    typename GraphAttention::Cache<S> tm;
  };
  template <class S>
  using Cache = std::vector<SampleCache<S>>;

  template <class S>
  static SpatioTemporalBlock make(ParamSet<S>& ps, const std::string& path, Index channels,
                                  Index timesteps, GatOrder order, double slope) {
    SpatioTemporalBlock b;
    b.channels = channels;
    b.timesteps = timesteps;
    b.order = order;
    b.channel = GraphAttention::make(ps, path + ".channel", timesteps, slope);
    b.temporal = GraphAttention::make(ps, path + ".temporal", channels, slope);
    return b;
  }

  template <class S>
  void init(ParamSet<S>& ps, Rng& rng) const {
    channel.init(ps, rng);
    temporal.init(ps, rng);
  }

  // u: B x (C*T), channel-major rows.
  template <class S>
  Mat<S> update(const ParamSet<S>& ps, const Mat<S>& u, Cache<S>& cache) const {
    require(u.cols() == channels * timesteps, "spatiotemporal block expects ", channels, " x ",
            timesteps, " per sample, got ", u.cols(), " values");
    const Index batch = u.rows();
    cache.assign(static_cast<std::size_t>(batch), {});
    Mat<S> delta(batch, channels * timesteps);
    for (Index b = 0; b < batch; ++b) {
      auto& sc = cache[static_cast<std::size_t>(b)];
      const Mat<S> x = Eigen::Map<const Mat<S>>(u.row(b).data(), channels, timesteps);
      Mat<S> d;
      switch (order) {
        case GatOrder::channel_first: {
          const Mat<S> g1 = channel.forward(ps, x, sc.ch);
          const Mat<S> y = x + g1;
          const Mat<S> g2 = temporal.forward(ps, Mat<S>(y.transpose()), sc.tm).transpose();
          d = g1 + g2;
          break;
        }
        case GatOrder::temporal_first: {
          const Mat<S> g1 = temporal.forward(ps, Mat<S>(x.transpose()), sc.tm).transpose();
          const Mat<S> y = x + g1;
          const Mat<S> g2 = channel.forward(ps, y, sc.ch);
          d = g1 + g2;
          break;
        }
        case GatOrder::parallel_sum: {
          const Mat<S> g1 = channel.forward(ps, x, sc.ch);
          const Mat<S> g2 = temporal.forward(ps, Mat<S>(x.transpose()), sc.tm).transpose();
          d = g1 + g2;
          break;
        }
      }
      delta.row(b) = Eigen::Map<const RowVec<S>>(d.data(), channels * timesteps);
    }
    return delta;
  }

  template <class S>
  Mat<S> update_backward(const ParamSet<S>& ps, const Cache<S>& cache, const Mat<S>& ddelta,
                         Grads<S>& g) const {
    const Index batch = ddelta.rows();
    Mat<S> du(batch, channels * timesteps);
    for (Index b = 0; b < batch; ++b) {
      const auto& sc = cache[static_cast<std::size_t>(b)];
      const Mat<S> dd = Eigen::Map<const Mat<S>>(ddelta.row(b).data(), channels, timesteps);
      Mat<S> dx;
      switch (order) {
        case GatOrder::channel_first: {
          const Mat<S> dy = temporal.backward(ps, sc.tm, Mat<S>(dd.transpose()), g).transpose();
          const Mat<S> dg1 = dd + dy;
          dx = dy + channel.backward(ps, sc.ch, dg1, g);
          break;
        }
        case GatOrder::temporal_first: {
          const Mat<S> dy = channel.backward(ps, sc.ch, dd, g);
          const Mat<S> dg1 = dd + dy;
          dx = dy + Mat<S>(temporal.backward(ps, sc.tm, Mat<S>(dg1.transpose()), g).transpose());
          break;
        }
        case GatOrder::parallel_sum: {
          dx = channel.backward(ps, sc.ch, dd, g) +
               Mat<S>(temporal.backward(ps, sc.tm, Mat<S>(dd.transpose()), g).transpose());
          break;
        }
      }
      du.row(b) = Eigen::Map<const RowVec<S>>(dx.data(), channels * timesteps);
    }
    return du;
  }

  /// Full residual block x + Delta(x). Rejects non-finite input with the
  /// offending (sample, channel, time) index.
  template <class S>
  Mat<S> forward(const ParamSet<S>& ps, const Mat<S>& x) const {
    for (Index b = 0; b < x.rows(); ++b)
      for (Index k = 0; k < x.cols(); ++k)
        if (!std::isfinite(x(b, k)))
          throw NumericError(detail::concat("non-finite input to spatiotemporal block at sample ",
                                            b, ", channel ", k / timesteps, ", time ",
                                            k % timesteps));
    Cache<S> cache;
    return x + update(ps, x, cache);
  }

  std::size_t param_count() const { return channel.param_count() + temporal.param_count(); }
  std::size_t macs() const { return channel.macs(channels) + temporal.macs(timesteps); }
};

/// Linear(T -> hidden) + ReLU + Linear(hidden -> T) + Softmax, evaluated on a
/// constant all-ones probe so the result is one length-T weight vector per
/// parameter set, shared across samples and channels.
struct TemporalWeighter {
  Linear fc1;
  Linear fc2;
  Index timesteps = 0;
  Index scale = 1;

  template <class S>
  struct Cache {
    Mat<S> probe;
    Mat<S> hidden;
    Mat<S> act;
    Mat<S> softmax;  // before scaling
  };

  template <class S>
  static TemporalWeighter make(ParamSet<S>& ps, const std::string& path, Index timesteps,
                               Index hidden, Index scale) {
    TemporalWeighter w;
    w.timesteps = timesteps;
    w.scale = scale;
    w.fc1 = Linear::make(ps, path + ".fc1", timesteps, hidden);
    w.fc2 = Linear::make(ps, path + ".fc2", hidden, timesteps);
    return w;
  }

  template <class S>
  void init(ParamSet<S>& ps, Rng& rng) const {
    fc1.init(ps, rng);
    fc2.init(ps, rng);
  }

  template <class S>
  RowVec<S> forward(const ParamSet<S>& ps, Cache<S>& c) const {
    c.probe = Mat<S>::Ones(1, timesteps);
    c.hidden = fc1.forward(ps, c.probe);
    c.act = relu(c.hidden);
    c.softmax = softmax_rows(fc2.forward(ps, c.act));
    return c.softmax.row(0) * static_cast<S>(scale);
  }

  template <class S>
  RowVec<S> forward(const ParamSet<S>& ps) const {
    Cache<S> c;
    return forward(ps, c);
  }

  template <class S>
  void backward(const ParamSet<S>& ps, const Cache<S>& c, const RowVec<S>& dw, Grads<S>& g) const {
    const Mat<S> dsoft = Mat<S>(dw) * static_cast<S>(scale);
    const Mat<S> dz = softmax_rows_backward(c.softmax, dsoft);
    const Mat<S> dact = fc2.backward(ps, c.act, dz, g);
    fc1.backward(ps, c.probe, relu_backward(c.hidden, dact), g);
  }

  std::size_t param_count() const { return fc1.param_count() + fc2.param_count(); }
  std::size_t macs() const { return fc1.macs() + fc2.macs(); }
};

// u = x * (1 + w_t), broadcast over batch and channels.
template <class S>
Mat<S> temporal_reweight(const Mat<S>& x, const RowVec<S>& w, Index channels) {
  const Index t = w.size();
  require(x.cols() == channels * t, "temporal reweighting: ", x.cols(), " values is not ",
          channels, " x ", t);
  Mat<S> u(x.rows(), x.cols());
  for (Index b = 0; b < x.rows(); ++b)
    for (Index c = 0; c < channels; ++c)
      for (Index k = 0; k < t; ++k) u(b, c * t + k) = x(b, c * t + k) * w(k) + x(b, c * t + k);
  return u;
}

// Returns dx; accumulates dw.
template <class S>
Mat<S> temporal_reweight_backward(const Mat<S>& x, const RowVec<S>& w, Index channels,
                                  const Mat<S>& du, RowVec<S>& dw) {
  const Index t = w.size();
  Mat<S> dx(x.rows(), x.cols());
  for (Index b = 0; b < x.rows(); ++b)
    for (Index c = 0; c < channels; ++c)
      for (Index k = 0; k < t; ++k) {
        const Index i = c * t + k;
        dx(b, i) = du(b, i) * (w(k) + S(1));
        dw(k) += du(b, i) * x(b, i);
      }
  return dx;
}

}  // namespace neurostage
