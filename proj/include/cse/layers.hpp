#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cse/params.hpp"
#include "cse/rng.hpp"
#include "cse/tensor.hpp"

namespace cse {

enum class Mode { train, eval };

namespace kernels {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// y = xW + b with x:[in], W:[in,out], b:[out].
inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 1 || w.rank() != 2 || b.rank() != 1 || x.extent(0) != w.extent(0) ||
      w.extent(1) != b.extent(0)) {
    throw std::invalid_argument("dense: shapes do not conform, x=" + x.shape_str() + " w=" +
                                w.shape_str() + " b=" + b.shape_str());
  }
  const int in = w.extent(0), out = w.extent(1);
  Tensor y({out});
  for (int o = 0; o < out; ++o) y(o) = b(o);
  for (int i = 0; i < in; ++i) {
    const double xi = x(i);
    const double* wrow = w.data() + static_cast<size_t>(i) * out;
    for (int o = 0; o < out; ++o) y(o) += xi * wrow[o];
  }
  ensure_finite(y, "dense_forward");
  return y;
}

/// Zero-padded "same" convolution along time. x:[T,Cin], k:[width,Cin,Cout], b:[Cout].
inline Tensor conv1d_same(const Tensor& x, const Tensor& k, const Tensor& b) {
  if (x.rank() != 2 || k.rank() != 3 || b.rank() != 1) {
    throw std::invalid_argument("conv1d_same: expected x:[T,Cin] k:[w,Cin,Cout] b:[Cout]");
  }
  const int width = k.extent(0);
  if (width % 2 == 0) throw std::invalid_argument("conv1d_same: kernel width must be odd, got " + std::to_string(width));
  if (x.extent(1) != k.extent(1) || k.extent(2) != b.extent(0)) {
    throw std::invalid_argument("conv1d_same: shapes do not conform, x=" + x.shape_str() + " k=" + k.shape_str());
  }
  const int T = x.extent(0), cin = x.extent(1), cout = k.extent(2);
  const int half = width / 2;
  Tensor y({T, cout});
  for (int t = 0; t < T; ++t) {
    for (int o = 0; o < cout; ++o) y(t, o) = b(o);
    for (int dt = 0; dt < width; ++dt) {
      const int src = t + dt - half;
      if (src < 0 || src >= T) continue;
      for (int c = 0; c < cin; ++c) {
        const double xv = x(src, c);
        const double* krow = k.data() + (static_cast<size_t>(dt) * cin + c) * cout;
        double* yrow = y.data() + static_cast<size_t>(t) * cout;
        for (int o = 0; o < cout; ++o) yrow[o] += xv * krow[o];
      }
    }
  }
  ensure_finite(y, "conv1d_same");
  return y;
}

/// 1x1 convolution over a [T,K] grid: x:[T,K,Cin], w:[Cin,Cout], b:[Cout].
inline Tensor point_conv(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 3 || w.rank() != 2 || x.extent(2) != w.extent(0) || w.extent(1) != b.extent(0)) {
    throw std::invalid_argument("point_conv: shapes do not conform, x=" + x.shape_str() + " w=" + w.shape_str());
  }
  const int T = x.extent(0), K = x.extent(1), cin = x.extent(2), cout = w.extent(1);
  Tensor y({T, K, cout});
  for (int t = 0; t < T; ++t) {
    for (int kk = 0; kk < K; ++kk) {
      double* yrow = y.data() + (static_cast<size_t>(t) * K + kk) * cout;
      for (int o = 0; o < cout; ++o) yrow[o] = b(o);
      const double* xrow = x.data() + (static_cast<size_t>(t) * K + kk) * cin;
      for (int c = 0; c < cin; ++c) {
        const double xv = xrow[c];
        const double* wrow = w.data() + static_cast<size_t>(c) * cout;
        for (int o = 0; o < cout; ++o) yrow[o] += xv * wrow[o];
      }
    }
  }
  ensure_finite(y, "point_conv");
  return y;
}

/// Per-frame keypoint mixing: y[t,k,c] = sum_k' a(k,k') x[t,k',c].
inline Tensor graph_aggregate(const Tensor& x, const Tensor& a) {
  if (x.rank() != 3 || a.rank() != 2 || a.extent(0) != a.extent(1) || x.extent(1) != a.extent(0)) {
    throw std::invalid_argument("graph_aggregate: keypoint count mismatch, x=" + x.shape_str() +
                                " a=" + a.shape_str());
  }
  const int T = x.extent(0), K = x.extent(1), C = x.extent(2);
  Tensor y({T, K, C});
  for (int t = 0; t < T; ++t) {
    const double* xt = x.data() + static_cast<size_t>(t) * K * C;
    double* yt = y.data() + static_cast<size_t>(t) * K * C;
    for (int kk = 0; kk < K; ++kk) {
      const double* arow = a.data() + static_cast<size_t>(kk) * K;
      double* yrow = yt + static_cast<size_t>(kk) * C;
      for (int c = 0; c < C; ++c) yrow[c] = 0.0;
      for (int k2 = 0; k2 < K; ++k2) {
        const double av = arow[k2];
        if (av == 0.0) continue;
        const double* xrow = xt + static_cast<size_t>(k2) * C;
        for (int c = 0; c < C; ++c) yrow[c] += av * xrow[c];
      }
    }
  }
  ensure_finite(y, "graph_aggregate");
  return y;
}

/// Graph convolution: adjacency mixing followed by a temporal "same" conv
/// shared across keypoints. x:[T,K,Cin] -> [T,K,Cout].
inline Tensor graph_conv(const Tensor& x, const Tensor& a_norm, const Tensor& k, const Tensor& b) {
  const Tensor agg = graph_aggregate(x, a_norm);
  const int T = agg.extent(0), K = agg.extent(1), cin = agg.extent(2);
  const int width = k.extent(0), cout = k.extent(2);
  if (width % 2 == 0) throw std::invalid_argument("graph_conv: kernel width must be odd");
  if (k.extent(1) != cin || b.extent(0) != cout) {
    throw std::invalid_argument("graph_conv: kernel shape " + k.shape_str() + " does not match input");
  }
  const int half = width / 2;
  Tensor y({T, K, cout});
  for (int t = 0; t < T; ++t) {
    for (int kk = 0; kk < K; ++kk) {
      double* yrow = y.data() + (static_cast<size_t>(t) * K + kk) * cout;
      for (int o = 0; o < cout; ++o) yrow[o] = b(o);
      for (int dt = 0; dt < width; ++dt) {
        const int src = t + dt - half;
        if (src < 0 || src >= T) continue;
        const double* xrow = agg.data() + (static_cast<size_t>(src) * K + kk) * cin;
        for (int c = 0; c < cin; ++c) {
          const double xv = xrow[c];
          const double* krow = k.data() + (static_cast<size_t>(dt) * cin + c) * cout;
          for (int o = 0; o < cout; ++o) yrow[o] += xv * krow[o];
        }
      }
    }
  }
  ensure_finite(y, "graph_conv");
  return y;
}

/// Inverted dropout; eval mode is the identity.
inline Tensor dropout_apply(const Tensor& x, double rate, Mode mode, Rng* rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  if (rng == nullptr) throw std::invalid_argument("dropout: train mode requires an rng");
  Tensor y = x;
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : y.values()) v = rng->uniform() < rate ? 0.0 : v * scale;
  return y;
}

}  // namespace kernels

// Small BLAS-ish helpers used by the recurrent layer; W stored [rows, cols].
namespace detail {

inline void matvec_acc(const Tensor& w, const double* x, double* y) {
  const int rows = w.extent(0), cols = w.extent(1);
  for (int r = 0; r < rows; ++r) {
    const double* wrow = w.data() + static_cast<size_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += wrow[c] * x[c];
    y[r] += acc;
  }
}

inline void matvec_transpose_acc(const Tensor& w, const double* g, double* y) {
  const int rows = w.extent(0), cols = w.extent(1);
  for (int r = 0; r < rows; ++r) {
    const double gv = g[r];
    if (gv == 0.0) continue;
    const double* wrow = w.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) y[c] += gv * wrow[c];
  }
}

inline void outer_acc(Tensor& gw, const double* g, const double* x) {
  const int rows = gw.extent(0), cols = gw.extent(1);
  for (int r = 0; r < rows; ++r) {
    const double gv = g[r];
    double* grow = gw.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) grow[c] += gv * x[c];
  }
}

}  // namespace detail

/// Fully connected layer on a single vector.
struct DenseLayer {
  std::string name;
  int in = 0, out = 0;
  size_t w = 0, b = 0;
  Tensor x_cache;

  void build(ParamSet& ps, const std::string& n, int in_, int out_) {
    name = n;
    in = in_;
    out = out_;
    w = ps.add(n + ".w", {in, out});
    b = ps.add(n + ".b", {out});
  }

  void init(ParamSet& ps, Rng& rng) {
    const double bound = std::sqrt(1.0 / in);
    ps.init_uniform(w, bound, rng);
    ps.init_uniform(b, bound, rng);
  }

  Tensor forward(const ParamSet& ps, const Tensor& x) {
    x_cache = x;
    return kernels::dense_forward(x, ps.value(w), ps.value(b));
  }

  Tensor backward(ParamSet& ps, const Tensor& gy) {
    const Tensor& wv = ps.value(w);
    Tensor& gw = ps.grad(w);
    Tensor& gb = ps.grad(b);
    for (int o = 0; o < out; ++o) gb(o) += gy(o);
    Tensor gx({in});
    for (int i = 0; i < in; ++i) {
      const double xi = x_cache(i);
      const double* wrow = wv.data() + static_cast<size_t>(i) * out;
      double* gwrow = gw.data() + static_cast<size_t>(i) * out;
      double acc = 0.0;
      for (int o = 0; o < out; ++o) {
        gwrow[o] += xi * gy(o);
        acc += wrow[o] * gy(o);
      }
      gx(i) = acc;
    }
    return gx;
  }
};

/// Temporal "same" convolution, x:[T,Cin] -> [T,Cout].
struct Conv1dLayer {
  std::string name;
  int width = 0, cin = 0, cout = 0;
  size_t k = 0, b = 0;
  Tensor x_cache;

  void build(ParamSet& ps, const std::string& n, int width_, int cin_, int cout_) {
    if (width_ % 2 == 0) throw std::invalid_argument(n + ": conv width must be odd for same padding");
    name = n;
    width = width_;
    cin = cin_;
    cout = cout_;
    k = ps.add(n + ".k", {width, cin, cout});
    b = ps.add(n + ".b", {cout});
  }

  void init(ParamSet& ps, Rng& rng) {
    const double bound = std::sqrt(1.0 / (width * cin));
    ps.init_uniform(k, bound, rng);
    ps.init_uniform(b, bound, rng);
  }

  Tensor forward(const ParamSet& ps, const Tensor& x) {
    x_cache = x;
    return kernels::conv1d_same(x, ps.value(k), ps.value(b));
  }

  Tensor backward(ParamSet& ps, const Tensor& gy) {
    const int T = x_cache.extent(0);
    const int half = width / 2;
    const Tensor& kv = ps.value(k);
    Tensor& gk = ps.grad(k);
    Tensor& gb = ps.grad(b);
    Tensor gx({T, cin});
    for (int t = 0; t < T; ++t) {
      const double* gyrow = gy.data() + static_cast<size_t>(t) * cout;
      for (int o = 0; o < cout; ++o) gb(o) += gyrow[o];
      for (int dt = 0; dt < width; ++dt) {
        const int src = t + dt - half;
        if (src < 0 || src >= T) continue;
        const double* xrow = x_cache.data() + static_cast<size_t>(src) * cin;
        double* gxrow = gx.data() + static_cast<size_t>(src) * cin;
        for (int c = 0; c < cin; ++c) {
          const double* krow = kv.data() + (static_cast<size_t>(dt) * cin + c) * cout;
          double* gkrow = gk.data() + (static_cast<size_t>(dt) * cin + c) * cout;
          double acc = 0.0;
          for (int o = 0; o < cout; ++o) {
            gkrow[o] += xrow[c] * gyrow[o];
            acc += krow[o] * gyrow[o];
          }
          gxrow[c] += acc;
        }
      }
    }
    return gx;
  }
};

/// 1x1 channel map on a [T,K,Cin] grid (the skip-connection adapter).
struct PointConvLayer {
  std::string name;
  int cin = 0, cout = 0;
  size_t w = 0, b = 0;
  Tensor x_cache;

  void build(ParamSet& ps, const std::string& n, int cin_, int cout_) {
    name = n;
    cin = cin_;
    cout = cout_;
    w = ps.add(n + ".w", {cin, cout});
    b = ps.add(n + ".b", {cout});
  }

  void init(ParamSet& ps, Rng& rng) {
    const double bound = std::sqrt(1.0 / cin);
    ps.init_uniform(w, bound, rng);
    ps.init_uniform(b, bound, rng);
  }

  Tensor forward(const ParamSet& ps, const Tensor& x) {
    x_cache = x;
    return kernels::point_conv(x, ps.value(w), ps.value(b));
  }

  Tensor backward(ParamSet& ps, const Tensor& gy) {
    const int T = x_cache.extent(0), K = x_cache.extent(1);
    const Tensor& wv = ps.value(w);
    Tensor& gw = ps.grad(w);
    Tensor& gb = ps.grad(b);
    Tensor gx({T, K, cin});
    for (int t = 0; t < T; ++t) {
      for (int kk = 0; kk < K; ++kk) {
        const double* gyrow = gy.data() + (static_cast<size_t>(t) * K + kk) * cout;
        const double* xrow = x_cache.data() + (static_cast<size_t>(t) * K + kk) * cin;
        double* gxrow = gx.data() + (static_cast<size_t>(t) * K + kk) * cin;
        for (int o = 0; o < cout; ++o) gb(o) += gyrow[o];
        for (int c = 0; c < cin; ++c) {
          const double* wrow = wv.data() + static_cast<size_t>(c) * cout;
          double* gwrow = gw.data() + static_cast<size_t>(c) * cout;
          double acc = 0.0;
          for (int o = 0; o < cout; ++o) {
            gwrow[o] += xrow[c] * gyrow[o];
            acc += wrow[o] * gyrow[o];
          }
          gxrow[c] = acc;
        }
      }
    }
    return gx;
  }
};

/// Adjacency mixing + temporal conv shared across keypoints. The adjacency is
/// a constant, not a parameter.
struct GraphConvLayer {
  std::string name;
  Tensor a_norm;
  Conv1dLayer conv;  // applied per keypoint with shared weights
  int K = 0;
  Tensor agg_cache;

  void build(ParamSet& ps, const std::string& n, const Tensor& a, int width, int cin, int cout) {
    name = n;
    a_norm = a;
    K = a.extent(0);
    conv.build(ps, n + ".conv", width, cin, cout);
  }

  void init(ParamSet& ps, Rng& rng) { conv.init(ps, rng); }

  Tensor forward(const ParamSet& ps, const Tensor& x) {
    agg_cache = kernels::graph_aggregate(x, a_norm);
    Tensor y = kernels::graph_conv(x, a_norm, ps.value(conv.k), ps.value(conv.b));
    return y;
  }

  Tensor backward(ParamSet& ps, const Tensor& gy) {
    const int T = agg_cache.extent(0), cin = conv.cin, cout = conv.cout;
    const int width = conv.width, half = width / 2;
    const Tensor& kv = ps.value(conv.k);
    Tensor& gk = ps.grad(conv.k);
    Tensor& gb = ps.grad(conv.b);
    Tensor gagg({T, K, cin});
    for (int t = 0; t < T; ++t) {
      for (int kk = 0; kk < K; ++kk) {
        const double* gyrow = gy.data() + (static_cast<size_t>(t) * K + kk) * cout;
        for (int o = 0; o < cout; ++o) gb(o) += gyrow[o];
        for (int dt = 0; dt < width; ++dt) {
          const int src = t + dt - half;
          if (src < 0 || src >= T) continue;
          const double* arow = agg_cache.data() + (static_cast<size_t>(src) * K + kk) * cin;
          double* garow = gagg.data() + (static_cast<size_t>(src) * K + kk) * cin;
          for (int c = 0; c < cin; ++c) {
            const double* krow = kv.data() + (static_cast<size_t>(dt) * cin + c) * cout;
            double* gkrow = gk.data() + (static_cast<size_t>(dt) * cin + c) * cout;
            double acc = 0.0;
            for (int o = 0; o < cout; ++o) {
              gkrow[o] += arow[c] * gyrow[o];
              acc += krow[o] * gyrow[o];
            }
            garow[c] += acc;
          }
        }
      }
    }
    // aggregation transpose; a_norm is symmetric but apply a^T for generality
    const int C = cin;
    Tensor gx({T, K, C});
    for (int t = 0; t < T; ++t) {
      const double* gt = gagg.data() + static_cast<size_t>(t) * K * C;
      double* gxt = gx.data() + static_cast<size_t>(t) * K * C;
      for (int kk = 0; kk < K; ++kk) {
        const double* grow = gt + static_cast<size_t>(kk) * C;
        const double* arow = a_norm.data() + static_cast<size_t>(kk) * K;
        for (int k2 = 0; k2 < K; ++k2) {
          const double av = arow[k2];
          if (av == 0.0) continue;
          double* gxrow = gxt + static_cast<size_t>(k2) * C;
          for (int c = 0; c < C; ++c) gxrow[c] += av * grow[c];
        }
      }
    }
    return gx;
  }
};

struct ReluLayer {
  Tensor x_cache;

  Tensor forward(const Tensor& x) {
    x_cache = x;
    Tensor y = x;
    for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    return y;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx = gy;
    for (size_t i = 0; i < gx.size(); ++i) {
      if (x_cache[i] <= 0.0) gx[i] = 0.0;
    }
    return gx;
  }
};

struct DropoutLayer {
  double rate = 0.0;
  Tensor mask;
  bool masked = false;

  explicit DropoutLayer(double r = 0.0) : rate(r) {
    if (r < 0.0 || r >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
  }

  Tensor forward(const Tensor& x, Mode mode, Rng* rng) {
    if (mode == Mode::eval || rate == 0.0) {
      masked = false;
      return x;
    }
    if (rng == nullptr) throw std::invalid_argument("dropout: train mode requires an rng");
    mask = Tensor(x.shape());
    const double scale = 1.0 / (1.0 - rate);
    Tensor y = x;
    for (size_t i = 0; i < y.size(); ++i) {
      const double m = rng->uniform() < rate ? 0.0 : scale;
      mask[i] = m;
      y[i] *= m;
    }
    masked = true;
    return y;
  }

  Tensor backward(const Tensor& gy) {
    if (!masked) return gy;
    Tensor gx = gy;
    for (size_t i = 0; i < gx.size(); ++i) gx[i] *= mask[i];
    return gx;
  }
};

/// Single-layer GRU. Two bias vectors per gate (input side b*, hidden side
/// c*); the reset gate scales the hidden-side candidate projection before the
/// tanh. Weights stored [hidden, in] / [hidden, hidden].
struct GruLayer {
  std::string name;
  int in = 0, hidden = 0;
  bool return_all = false;
  size_t wz = 0, wr = 0, wn = 0, uz = 0, ur = 0, un = 0;
  size_t bz = 0, br = 0, bn = 0, cz = 0, cr = 0, cn = 0;

  // per-step caches, shaped on first forward
  Tensor x_cache, h_all, z_c, r_c, n_c, u_c;

  void build(ParamSet& ps, const std::string& n, int in_, int hidden_, bool return_all_) {
    name = n;
    in = in_;
    hidden = hidden_;
    return_all = return_all_;
    wz = ps.add(n + ".wz", {hidden, in});
    wr = ps.add(n + ".wr", {hidden, in});
    wn = ps.add(n + ".wn", {hidden, in});
    uz = ps.add(n + ".uz", {hidden, hidden});
    ur = ps.add(n + ".ur", {hidden, hidden});
    un = ps.add(n + ".un", {hidden, hidden});
    bz = ps.add(n + ".bz", {hidden});
    br = ps.add(n + ".br", {hidden});
    bn = ps.add(n + ".bn", {hidden});
    cz = ps.add(n + ".cz", {hidden});
    cr = ps.add(n + ".cr", {hidden});
    cn = ps.add(n + ".cn", {hidden});
  }

  void init(ParamSet& ps, Rng& rng) {
    const double bound = std::sqrt(1.0 / (in + hidden));
    for (size_t idx : {wz, wr, wn, uz, ur, un, bz, br, bn, cz, cr, cn}) {
      ps.init_uniform(idx, bound, rng);
    }
  }

  /// x:[T,in]; returns [T,hidden] when return_all, else [hidden] (h_T).
  Tensor forward(const ParamSet& ps, const Tensor& x, const Tensor* h0 = nullptr) {
    if (x.rank() != 2 || x.extent(1) != in) {
      throw std::invalid_argument(name + ": expected input [T," + std::to_string(in) + "], got " + x.shape_str());
    }
    const int T = x.extent(0);
    x_cache = x;
    h_all = Tensor({T + 1, hidden});
    z_c = Tensor({T, hidden});
    r_c = Tensor({T, hidden});
    n_c = Tensor({T, hidden});
    u_c = Tensor({T, hidden});
    if (h0 != nullptr) {
      if (h0->rank() != 1 || h0->extent(0) != hidden) {
        throw std::invalid_argument(name + ": h0 shape " + h0->shape_str() + " != [" + std::to_string(hidden) + "]");
      }
      ensure_finite(*h0, name + ".h0");
      for (int j = 0; j < hidden; ++j) h_all(0, j) = (*h0)(j);
    }
    std::vector<double> az(hidden), ar(hidden), an(hidden);
    for (int t = 0; t < T; ++t) {
      const double* xt = x.data() + static_cast<size_t>(t) * in;
      const double* hprev = h_all.data() + static_cast<size_t>(t) * hidden;
      double* u = u_c.data() + static_cast<size_t>(t) * hidden;
      for (int j = 0; j < hidden; ++j) {
        az[j] = ps.value(bz)(j) + ps.value(cz)(j);
        ar[j] = ps.value(br)(j) + ps.value(cr)(j);
        an[j] = ps.value(bn)(j);
        u[j] = ps.value(cn)(j);
      }
      detail::matvec_acc(ps.value(wz), xt, az.data());
      detail::matvec_acc(ps.value(uz), hprev, az.data());
      detail::matvec_acc(ps.value(wr), xt, ar.data());
      detail::matvec_acc(ps.value(ur), hprev, ar.data());
      detail::matvec_acc(ps.value(wn), xt, an.data());
      detail::matvec_acc(ps.value(un), hprev, u);
      double* zrow = z_c.data() + static_cast<size_t>(t) * hidden;
      double* rrow = r_c.data() + static_cast<size_t>(t) * hidden;
      double* nrow = n_c.data() + static_cast<size_t>(t) * hidden;
      double* hrow = h_all.data() + static_cast<size_t>(t + 1) * hidden;
      for (int j = 0; j < hidden; ++j) {
        const double z = kernels::sigmoid(az[j]);
        const double r = kernels::sigmoid(ar[j]);
        const double nn = std::tanh(an[j] + r * u[j]);
        zrow[j] = z;
        rrow[j] = r;
        nrow[j] = nn;
        hrow[j] = (1.0 - z) * nn + z * hprev[j];
      }
    }
    Tensor y;
    if (return_all) {
      y = Tensor({T, hidden});
      for (int t = 0; t < T; ++t) {
        for (int j = 0; j < hidden; ++j) y(t, j) = h_all(t + 1, j);
      }
    } else {
      y = Tensor({hidden});
      for (int j = 0; j < hidden; ++j) y(j) = h_all(T, j);
    }
    ensure_finite(y, name);
    return y;
  }

  /// gy:[T,hidden] when return_all, else [hidden]; returns gx:[T,in].
  Tensor backward(ParamSet& ps, const Tensor& gy) {
    const int T = x_cache.extent(0);
    Tensor gx({T, in});
    std::vector<double> gh(hidden, 0.0), gh_prev(hidden), gaz(hidden), gar(hidden), gan(hidden), gu(hidden);
    for (int t = T - 1; t >= 0; --t) {
      const double* xt = x_cache.data() + static_cast<size_t>(t) * in;
      const double* hprev = h_all.data() + static_cast<size_t>(t) * hidden;
      const double* zrow = z_c.data() + static_cast<size_t>(t) * hidden;
      const double* rrow = r_c.data() + static_cast<size_t>(t) * hidden;
      const double* nrow = n_c.data() + static_cast<size_t>(t) * hidden;
      const double* urow = u_c.data() + static_cast<size_t>(t) * hidden;
      if (return_all) {
        const double* gyrow = gy.data() + static_cast<size_t>(t) * hidden;
        for (int j = 0; j < hidden; ++j) gh[j] += gyrow[j];
      } else if (t == T - 1) {
        for (int j = 0; j < hidden; ++j) gh[j] += gy(j);
      }
      for (int j = 0; j < hidden; ++j) {
        const double z = zrow[j], r = rrow[j], nn = nrow[j];
        gaz[j] = gh[j] * (hprev[j] - nn) * z * (1.0 - z);
        const double gn = gh[j] * (1.0 - z);
        gan[j] = gn * (1.0 - nn * nn);
        gu[j] = gan[j] * r;
        gar[j] = gan[j] * urow[j] * r * (1.0 - r);
        gh_prev[j] = gh[j] * z;
      }
      for (int j = 0; j < hidden; ++j) {
        ps.grad(bz)(j) += gaz[j];
        ps.grad(cz)(j) += gaz[j];
        ps.grad(br)(j) += gar[j];
        ps.grad(cr)(j) += gar[j];
        ps.grad(bn)(j) += gan[j];
        ps.grad(cn)(j) += gu[j];
      }
      detail::outer_acc(ps.grad(wz), gaz.data(), xt);
      detail::outer_acc(ps.grad(wr), gar.data(), xt);
      detail::outer_acc(ps.grad(wn), gan.data(), xt);
      detail::outer_acc(ps.grad(uz), gaz.data(), hprev);
      detail::outer_acc(ps.grad(ur), gar.data(), hprev);
      detail::outer_acc(ps.grad(un), gu.data(), hprev);
      detail::matvec_transpose_acc(ps.value(uz), gaz.data(), gh_prev.data());
      detail::matvec_transpose_acc(ps.value(ur), gar.data(), gh_prev.data());
      detail::matvec_transpose_acc(ps.value(un), gu.data(), gh_prev.data());
      double* gxrow = gx.data() + static_cast<size_t>(t) * in;
      detail::matvec_transpose_acc(ps.value(wz), gaz.data(), gxrow);
      detail::matvec_transpose_acc(ps.value(wr), gar.data(), gxrow);
      detail::matvec_transpose_acc(ps.value(wn), gan.data(), gxrow);
      gh.swap(gh_prev);
      std::fill(gh_prev.begin(), gh_prev.end(), 0.0);
    }
    return gx;
  }
};

namespace kernels {

/// Borrowed GRU weights for the functional entry point.
struct GruWeights {
  const Tensor *wz, *wr, *wn, *uz, *ur, *un, *bz, *br, *bn, *cz, *cr, *cn;
};

/// Functional GRU over a sequence; wraps GruLayer so there is exactly one
/// implementation of the recurrence.
inline Tensor gru_sequence(const Tensor& x, const Tensor& h0, const GruWeights& w, bool return_all) {
  if (x.rank() != 2) throw std::invalid_argument("gru_sequence: expected x:[T,in]");
  const int in = x.extent(1);
  const int hidden = w.wz->extent(0);
  ParamSet ps;
  GruLayer layer;
  layer.build(ps, "gru", in, hidden, return_all);
  const Tensor* src[] = {w.wz, w.wr, w.wn, w.uz, w.ur, w.un, w.bz, w.br, w.bn, w.cz, w.cr, w.cn};
  const size_t dst[] = {layer.wz, layer.wr, layer.wn, layer.uz, layer.ur,
                        layer.un, layer.bz, layer.br, layer.bn, layer.cz,
                        layer.cr, layer.cn};
  for (int i = 0; i < 12; ++i) {
    ensure_same_shape(*src[i], ps.value(dst[i]), "gru_sequence weights");
    ps.value(dst[i]) = *src[i];
  }
  return layer.forward(ps, x, &h0);
}

}  // namespace kernels

}  // namespace cse
