#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "vlaos/common.hpp"
#include "vlaos/nn/tensor.hpp"

namespace vlaos::nn {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using EMap = Eigen::Map<EMat<T>>;
template <class T>
using ECMap = Eigen::Map<const EMat<T>>;

template <class T>
ECMap<T> mat(const Tensor<T>& t) {
  return ECMap<T>(t.ptr(), t.rows(), t.cols());
}
template <class T>
EMap<T> mat(Tensor<T>& t) {
  return EMap<T>(t.ptr(), t.rows(), t.cols());
}

template <class T>
class Graph;

// Value handle into a Graph. Cheap to copy; invalid when default-constructed.
template <class T>
struct Var {
  Graph<T>* g = nullptr;
  int id = -1;
  bool valid() const { return g != nullptr && id >= 0; }
  const Tensor<T>& val() const { return g->value(id); }
  int rows() const { return val().rows(); }
  int cols() const { return val().cols(); }
};

// Define-by-run reverse-mode tape. One Graph is built per forward pass;
// parameters live outside the graph (leaf nodes view external storage) so
// several graphs can share one parameter set read-only.
template <class T>
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> input(Tensor<T> value) {
    nodes_.push_back(Node{});
    Node& n = nodes_.back();
    n.owned = std::move(value);
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  // Parameter leaf viewing external storage. Repeated calls with the same
  // pid return the same node so weight sharing accumulates gradients.
  Var<T> param(const Tensor<T>* external, int pid) {
    auto it = param_nodes_.find(pid);
    if (it != param_nodes_.end()) return Var<T>{this, it->second};
    nodes_.push_back(Node{});
    Node& n = nodes_.back();
    n.external = external;
    n.needs_grad = grad_enabled_;
    n.pid = pid;
    int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_[pid] = id;
    return Var<T>{this, id};
  }

  const Tensor<T>& value(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }
  Tensor<T>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) {
      n.grad.shape = value(id).shape;
      n.grad.data.assign(value(id).data.size(), T(0));
    }
    return n.grad;
  }
  bool has_grad(int id) const { return !nodes_[id].grad.data.empty(); }

  // ---- ops ----

  Var<T> add(Var<T> a, Var<T> b) {
    check_same_shape(a, b, "add");
    Tensor<T> out = a.val();
    const Tensor<T>& bv = b.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return make(std::move(out), {a.id, b.id}, [](Graph& g, int self, const std::vector<int>& p) {
      accumulate(g, p[0], g.grad(self));
      accumulate(g, p[1], g.grad(self));
    });
  }

  // x (n,m) + bias row (m)
  Var<T> add_bias(Var<T> x, Var<T> bias) {
    Tensor<T> out = x.val();
    const Tensor<T>& bv = bias.val();
    int n = out.rows(), m = out.cols();
    if (bv.numel() != m) throw NumericError("add_bias: width mismatch");
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < m; ++c) out.at(r, c) += bv[c];
    return make(std::move(out), {x.id, bias.id},
                [n, m](Graph& g, int self, const std::vector<int>& p) {
                  const Tensor<T>& go = g.grad(self);
                  accumulate(g, p[0], go);
                  if (g.needs(p[1])) {
                    Tensor<T>& gb = g.grad(p[1]);
                    for (int r = 0; r < n; ++r)
                      for (int c = 0; c < m; ++c) gb[c] += go.at(r, c);
                  }
                });
  }

  Var<T> mul(Var<T> a, Var<T> b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out = a.val();
    const Tensor<T>& bv = b.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return make(std::move(out), {a.id, b.id}, [](Graph& g, int self, const std::vector<int>& p) {
      const Tensor<T>& go = g.grad(self);
      const Tensor<T>& av = g.value(p[0]);
      const Tensor<T>& bv2 = g.value(p[1]);
      if (g.needs(p[0])) {
        Tensor<T>& ga = g.grad(p[0]);
        for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * bv2[i];
      }
      if (g.needs(p[1])) {
        Tensor<T>& gb = g.grad(p[1]);
        for (int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * av[i];
      }
    });
  }

  Var<T> scale(Var<T> a, T s) {
    Tensor<T> out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make(std::move(out), {a.id}, [s](Graph& g, int self, const std::vector<int>& p) {
      if (!g.needs(p[0])) return;
      const Tensor<T>& go = g.grad(self);
      Tensor<T>& ga = g.grad(p[0]);
      for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * s;
    });
  }

  // a (n,k) x b (k,m) -> (n,m)
  Var<T> matmul(Var<T> a, Var<T> b) {
    const Tensor<T>& av = a.val();
    const Tensor<T>& bv = b.val();
    if (av.cols() != bv.rows()) throw NumericError("matmul: inner dim mismatch");
    Tensor<T> out({av.rows(), bv.cols()});
    mat(out).noalias() = mat(av) * mat(bv);
    return make(std::move(out), {a.id, b.id}, [](Graph& g, int self, const std::vector<int>& p) {
      const Tensor<T>& go = g.grad(self);
      const Tensor<T>& av2 = g.value(p[0]);
      const Tensor<T>& bv2 = g.value(p[1]);
      if (g.needs(p[0])) mat(g.grad(p[0])).noalias() += mat(go) * mat(bv2).transpose();
      if (g.needs(p[1])) mat(g.grad(p[1])).noalias() += mat(av2).transpose() * mat(go);
    });
  }

  // x (n,k) x w^T with w (m,k) -> (n,m); the linear-layer workhorse.
  Var<T> matmul_nt(Var<T> x, Var<T> w) {
    const Tensor<T>& xv = x.val();
    const Tensor<T>& wv = w.val();
    if (xv.cols() != wv.cols()) throw NumericError("matmul_nt: inner dim mismatch");
    Tensor<T> out({xv.rows(), wv.rows()});
    mat(out).noalias() = mat(xv) * mat(wv).transpose();
    return make(std::move(out), {x.id, w.id}, [](Graph& g, int self, const std::vector<int>& p) {
      const Tensor<T>& go = g.grad(self);
      const Tensor<T>& xv2 = g.value(p[0]);
      const Tensor<T>& wv2 = g.value(p[1]);
      if (g.needs(p[0])) mat(g.grad(p[0])).noalias() += mat(go) * mat(wv2);
      if (g.needs(p[1])) mat(g.grad(p[1])).noalias() += mat(go).transpose() * mat(xv2);
    });
  }

  Var<T> linear(Var<T> x, Var<T> w, Var<T> b) { return add_bias(matmul_nt(x, w), b); }

  Var<T> slice_rows(Var<T> x, int r0, int r1) {
    const Tensor<T>& xv = x.val();
    int m = xv.cols();
    Tensor<T> out({r1 - r0, m});
    std::copy(xv.ptr() + static_cast<size_t>(r0) * m, xv.ptr() + static_cast<size_t>(r1) * m,
              out.ptr());
    return make(std::move(out), {x.id}, [r0, m](Graph& g, int self, const std::vector<int>& p) {
      if (!g.needs(p[0])) return;
      const Tensor<T>& go = g.grad(self);
      Tensor<T>& gx = g.grad(p[0]);
      T* dst = gx.ptr() + static_cast<size_t>(r0) * m;
      for (int64_t i = 0; i < go.numel(); ++i) dst[i] += go[i];
    });
  }

  Var<T> concat_rows(const std::vector<Var<T>>& xs) {
    int m = xs.at(0).val().cols();
    int n = 0;
    for (const auto& x : xs) n += x.val().rows();
    Tensor<T> out({n, m});
    T* dst = out.ptr();
    std::vector<int> parents;
    std::vector<int> sizes;
    for (const auto& x : xs) {
      const Tensor<T>& xv = x.val();
      if (xv.cols() != m) throw NumericError("concat_rows: width mismatch");
      std::copy(xv.ptr(), xv.ptr() + xv.numel(), dst);
      dst += xv.numel();
      parents.push_back(x.id);
      sizes.push_back(static_cast<int>(xv.numel()));
    }
    return make(std::move(out), parents,
                [sizes](Graph& g, int self, const std::vector<int>& p) {
                  const Tensor<T>& go = g.grad(self);
                  int64_t off = 0;
                  for (size_t i = 0; i < p.size(); ++i) {
                    if (g.needs(p[i])) {
                      Tensor<T>& gp = g.grad(p[i]);
                      for (int j = 0; j < sizes[i]; ++j) gp[j] += go[off + j];
                    }
                    off += sizes[i];
                  }
                });
  }

  // Row-wise layer norm with affine parameters gamma/beta of width m.
  Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
    const Tensor<T>& xv = x.val();
    int n = xv.rows(), m = xv.cols();
    Tensor<T> out({n, m});
    auto stats = std::make_shared<Tensor<T>>(Tensor<T>({n, 2}));  // mean, inv_std
    const Tensor<T>& gv = gamma.val();
    const Tensor<T>& bv = beta.val();
    for (int r = 0; r < n; ++r) {
      T mean = 0;
      for (int c = 0; c < m; ++c) mean += xv.at(r, c);
      mean /= m;
      T var = 0;
      for (int c = 0; c < m; ++c) {
        T d = xv.at(r, c) - mean;
        var += d * d;
      }
      var /= m;
      T inv = T(1) / std::sqrt(var + eps);
      stats->at(r, 0) = mean;
      stats->at(r, 1) = inv;
      for (int c = 0; c < m; ++c) out.at(r, c) = (xv.at(r, c) - mean) * inv * gv[c] + bv[c];
    }
    return make(std::move(out), {x.id, gamma.id, beta.id},
                [stats, n, m](Graph& g, int self, const std::vector<int>& p) {
                  const Tensor<T>& go = g.grad(self);
                  const Tensor<T>& xv2 = g.value(p[0]);
                  const Tensor<T>& gv2 = g.value(p[1]);
                  for (int r = 0; r < n; ++r) {
                    T mean = stats->at(r, 0), inv = stats->at(r, 1);
                    // dL/dxhat, plus reductions for the row
                    T sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (int c = 0; c < m; ++c) {
                      T xhat = (xv2.at(r, c) - mean) * inv;
                      T dxhat = go.at(r, c) * gv2[c];
                      sum_dxhat += dxhat;
                      sum_dxhat_xhat += dxhat * xhat;
                    }
                    if (g.needs(p[0])) {
                      Tensor<T>& gx = g.grad(p[0]);
                      for (int c = 0; c < m; ++c) {
                        T xhat = (xv2.at(r, c) - mean) * inv;
                        T dxhat = go.at(r, c) * gv2[c];
                        gx.at(r, c) +=
                            inv * (dxhat - sum_dxhat / m - xhat * sum_dxhat_xhat / m);
                      }
                    }
                    if (g.needs(p[1])) {
                      Tensor<T>& gg = g.grad(p[1]);
                      for (int c = 0; c < m; ++c)
                        gg[c] += go.at(r, c) * (xv2.at(r, c) - mean) * inv;
                    }
                    if (g.needs(p[2])) {
                      Tensor<T>& gb = g.grad(p[2]);
                      for (int c = 0; c < m; ++c) gb[c] += go.at(r, c);
                    }
                  }
                });
  }

  // Exact GELU: x * Phi(x).
  Var<T> gelu(Var<T> x) {
    const Tensor<T>& xv = x.val();
    Tensor<T> out = xv;
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (int64_t i = 0; i < out.numel(); ++i) {
      double v = static_cast<double>(xv[i]);
      out[i] = static_cast<T>(v * 0.5 * (1.0 + std::erf(v * inv_sqrt2)));
    }
    return make(std::move(out), {x.id}, [](Graph& g, int self, const std::vector<int>& p) {
      if (!g.needs(p[0])) return;
      const Tensor<T>& go = g.grad(self);
      const Tensor<T>& xv2 = g.value(p[0]);
      Tensor<T>& gx = g.grad(p[0]);
      constexpr double inv_sqrt2 = 0.7071067811865475244;
      constexpr double inv_sqrt2pi = 0.3989422804014326779;
      for (int64_t i = 0; i < go.numel(); ++i) {
        double v = static_cast<double>(xv2[i]);
        double phi = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += go[i] * static_cast<T>(phi + v * pdf);
      }
    });
  }

  // Multi-head scaled-dot attention with a boolean permission mask.
  // q (nq,d), k (nk,d), v (nk,d); mask row-major nq*nk, nonzero = allowed.
  Var<T> attention(Var<T> q, Var<T> k, Var<T> v,
                   std::shared_ptr<const std::vector<uint8_t>> mask, int n_heads) {
    const Tensor<T>& qv = q.val();
    const Tensor<T>& kv = k.val();
    const Tensor<T>& vv = v.val();
    int nq = qv.rows(), nk = kv.rows(), d = qv.cols();
    if (kv.cols() != d || vv.cols() != d || vv.rows() != nk)
      throw NumericError("attention: shape mismatch");
    if (d % n_heads != 0) throw NumericError("attention: dim not divisible by heads");
    if (mask && static_cast<int64_t>(mask->size()) != static_cast<int64_t>(nq) * nk)
      throw NumericError("attention: mask size mismatch");
    int dh = d / n_heads;
    T scl = T(1) / std::sqrt(static_cast<T>(dh));

    Tensor<T> out({nq, d});
    // probs saved for backward: n_heads blocks of (nq, nk)
    auto probs = std::make_shared<Tensor<T>>(Tensor<T>({n_heads * nq, nk}));
    for (int h = 0; h < n_heads; ++h) {
      auto Qh = mat(qv).middleCols(h * dh, dh);
      auto Kh = mat(kv).middleCols(h * dh, dh);
      auto Vh = mat(vv).middleCols(h * dh, dh);
      EMat<T> S = (Qh * Kh.transpose()) * scl;
      for (int r = 0; r < nq; ++r) {
        T mx = -std::numeric_limits<T>::infinity();
        for (int c = 0; c < nk; ++c) {
          if (mask && !(*mask)[static_cast<size_t>(r) * nk + c]) continue;
          mx = std::max(mx, S(r, c));
        }
        T z = 0;
        for (int c = 0; c < nk; ++c) {
          bool ok = !mask || (*mask)[static_cast<size_t>(r) * nk + c];
          T e = ok ? std::exp(S(r, c) - mx) : T(0);
          probs->at(h * nq + r, c) = e;
          z += e;
        }
        if (z <= T(0)) throw NumericError("attention: fully masked query row");
        for (int c = 0; c < nk; ++c) probs->at(h * nq + r, c) /= z;
      }
      auto Ph = mat(*probs).middleRows(h * nq, nq);
      mat(out).middleCols(h * dh, dh).noalias() = Ph * Vh;
    }
    return make(std::move(out), {q.id, k.id, v.id},
                [probs, n_heads, nq, nk, dh, scl](Graph& g, int self,
                                                  const std::vector<int>& p) {
                  const Tensor<T>& go = g.grad(self);
                  const Tensor<T>& qv2 = g.value(p[0]);
                  const Tensor<T>& kv2 = g.value(p[1]);
                  const Tensor<T>& vv2 = g.value(p[2]);
                  bool nq_ = g.needs(p[0]), nk_ = g.needs(p[1]), nv_ = g.needs(p[2]);
                  if (!nq_ && !nk_ && !nv_) return;
                  for (int h = 0; h < n_heads; ++h) {
                    auto Ph = mat(*probs).middleRows(h * nq, nq);
                    auto dOh = mat(go).middleCols(h * dh, dh);
                    auto Vh = mat(vv2).middleCols(h * dh, dh);
                    if (nv_) {
                      mat(g.grad(p[2])).middleCols(h * dh, dh).noalias() +=
                          Ph.transpose() * dOh;
                    }
                    if (nq_ || nk_) {
                      EMat<T> dP = dOh * Vh.transpose();           // (nq, nk)
                      EMat<T> dS(nq, nk);
                      for (int r = 0; r < nq; ++r) {
                        T dot = 0;
                        for (int c = 0; c < nk; ++c) dot += dP(r, c) * Ph(r, c);
                        for (int c = 0; c < nk; ++c)
                          dS(r, c) = Ph(r, c) * (dP(r, c) - dot);
                      }
                      auto Qh = mat(qv2).middleCols(h * dh, dh);
                      auto Kh = mat(kv2).middleCols(h * dh, dh);
                      if (nq_)
                        mat(g.grad(p[0])).middleCols(h * dh, dh).noalias() +=
                            dS * Kh * scl;
                      if (nk_)
                        mat(g.grad(p[1])).middleCols(h * dh, dh).noalias() +=
                            dS.transpose() * Qh * scl;
                    }
                  }
                });
  }

  // Row gather from an embedding table.
  Var<T> embed(Var<T> table, std::vector<int> ids) {
    const Tensor<T>& tv = table.val();
    int m = tv.cols();
    Tensor<T> out({static_cast<int>(ids.size()), m});
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= tv.rows()) throw NumericError("embed: id out of range");
      std::copy(tv.ptr() + static_cast<size_t>(ids[i]) * m,
                tv.ptr() + static_cast<size_t>(ids[i] + 1) * m,
                out.ptr() + i * m);
    }
    auto ids_p = std::make_shared<std::vector<int>>(std::move(ids));
    return make(std::move(out), {table.id},
                [ids_p, m](Graph& g, int self, const std::vector<int>& p) {
                  if (!g.needs(p[0])) return;
                  const Tensor<T>& go = g.grad(self);
                  Tensor<T>& gt = g.grad(p[0]);
                  for (size_t i = 0; i < ids_p->size(); ++i) {
                    T* dst = gt.ptr() + static_cast<size_t>((*ids_p)[i]) * m;
                    const T* src = go.ptr() + i * m;
                    for (int c = 0; c < m; ++c) dst[c] += src[c];
                  }
                });
  }

  // Mean cross-entropy of row-wise softmax against integer targets.
  Var<T> cross_entropy_mean(Var<T> logits, std::vector<int> targets) {
    const Tensor<T>& lv = logits.val();
    int n = lv.rows(), m = lv.cols();
    if (static_cast<int>(targets.size()) != n)
      throw NumericError("cross_entropy_mean: target count mismatch");
    auto probs = std::make_shared<Tensor<T>>(Tensor<T>({n, m}));
    T loss = 0;
    for (int r = 0; r < n; ++r) {
      T mx = lv.at(r, 0);
      for (int c = 1; c < m; ++c) mx = std::max(mx, lv.at(r, c));
      T z = 0;
      for (int c = 0; c < m; ++c) {
        T e = std::exp(lv.at(r, c) - mx);
        probs->at(r, c) = e;
        z += e;
      }
      for (int c = 0; c < m; ++c) probs->at(r, c) /= z;
      int t = targets[r];
      if (t < 0 || t >= m) throw NumericError("cross_entropy_mean: target out of range");
      loss -= std::log(std::max(probs->at(r, t), std::numeric_limits<T>::min()));
    }
    loss /= n;
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    return make(Tensor<T>::scalar(loss), {logits.id},
                [probs, tg, n, m](Graph& g, int self, const std::vector<int>& p) {
                  if (!g.needs(p[0])) return;
                  T go = g.grad(self)[0];
                  Tensor<T>& gl = g.grad(p[0]);
                  for (int r = 0; r < n; ++r)
                    for (int c = 0; c < m; ++c) {
                      T d = probs->at(r, c) - (c == (*tg)[r] ? T(1) : T(0));
                      gl.at(r, c) += go * d / n;
                    }
                });
  }

  // Mean binary cross-entropy with logits against {0,1} bit targets.
  Var<T> bce_logits_mean(Var<T> logits, std::shared_ptr<const Tensor<T>> bits) {
    const Tensor<T>& lv = logits.val();
    if (bits->numel() != lv.numel()) throw NumericError("bce_logits_mean: shape mismatch");
    int64_t n = lv.numel();
    T loss = 0;
    for (int64_t i = 0; i < n; ++i) {
      T x = lv[i], b = (*bits)[i];
      // max(x,0) - x*b + log(1 + exp(-|x|)), numerically stable
      loss += std::max(x, T(0)) - x * b + std::log1p(std::exp(-std::fabs(x)));
    }
    loss /= static_cast<T>(n);
    return make(Tensor<T>::scalar(loss), {logits.id},
                [bits, n](Graph& g, int self, const std::vector<int>& p) {
                  if (!g.needs(p[0])) return;
                  T go = g.grad(self)[0];
                  const Tensor<T>& lv2 = g.value(p[0]);
                  Tensor<T>& gl = g.grad(p[0]);
                  for (int64_t i = 0; i < n; ++i) {
                    T x = lv2[i];
                    T sig = T(1) / (T(1) + std::exp(-x));
                    gl[i] += go * (sig - (*bits)[i]) / static_cast<T>(n);
                  }
                });
  }

  // Mean absolute error over entries where mask is nonzero.
  Var<T> l1_masked(Var<T> pred, std::shared_ptr<const Tensor<T>> target,
                   std::shared_ptr<const std::vector<uint8_t>> mask) {
    const Tensor<T>& pv = pred.val();
    if (target->numel() != pv.numel()) throw NumericError("l1_masked: shape mismatch");
    int64_t n = pv.numel();
    int64_t valid = 0;
    T loss = 0;
    for (int64_t i = 0; i < n; ++i) {
      if (mask && !(*mask)[i]) continue;
      loss += std::fabs(pv[i] - (*target)[i]);
      ++valid;
    }
    if (valid == 0) throw NumericError("l1_masked: empty mask");
    loss /= static_cast<T>(valid);
    return make(Tensor<T>::scalar(loss), {pred.id},
                [target, mask, n, valid](Graph& g, int self, const std::vector<int>& p) {
                  if (!g.needs(p[0])) return;
                  T go = g.grad(self)[0];
                  const Tensor<T>& pv2 = g.value(p[0]);
                  Tensor<T>& gp = g.grad(p[0]);
                  for (int64_t i = 0; i < n; ++i) {
                    if (mask && !(*mask)[i]) continue;
                    T d = pv2[i] - (*target)[i];
                    gp[i] += go * (d > 0 ? T(1) : (d < 0 ? T(-1) : T(0))) /
                             static_cast<T>(valid);
                  }
                });
  }

  // Mean squared error over entries where mask is nonzero.
  Var<T> mse_masked(Var<T> pred, std::shared_ptr<const Tensor<T>> target,
                    std::shared_ptr<const std::vector<uint8_t>> mask) {
    const Tensor<T>& pv = pred.val();
    if (target->numel() != pv.numel()) throw NumericError("mse_masked: shape mismatch");
    int64_t n = pv.numel();
    int64_t valid = 0;
    T loss = 0;
    for (int64_t i = 0; i < n; ++i) {
      if (mask && !(*mask)[i]) continue;
      T d = pv[i] - (*target)[i];
      loss += d * d;
      ++valid;
    }
    if (valid == 0) throw NumericError("mse_masked: empty mask");
    loss /= static_cast<T>(valid);
    return make(Tensor<T>::scalar(loss), {pred.id},
                [target, mask, n, valid](Graph& g, int self, const std::vector<int>& p) {
                  if (!g.needs(p[0])) return;
                  T go = g.grad(self)[0];
                  const Tensor<T>& pv2 = g.value(p[0]);
                  Tensor<T>& gp = g.grad(p[0]);
                  for (int64_t i = 0; i < n; ++i) {
                    if (mask && !(*mask)[i]) continue;
                    gp[i] += go * T(2) * (pv2[i] - (*target)[i]) / static_cast<T>(valid);
                  }
                });
  }

  // Weighted sum of scalar losses: sum_i coefs[i] * terms[i].
  Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& coefs) {
    T total = 0;
    std::vector<int> parents;
    for (size_t i = 0; i < terms.size(); ++i) {
      total += coefs[i] * terms[i].val()[0];
      parents.push_back(terms[i].id);
    }
    auto cs = std::make_shared<std::vector<T>>(coefs);
    return make(Tensor<T>::scalar(total), parents,
                [cs](Graph& g, int self, const std::vector<int>& p) {
                  T go = g.grad(self)[0];
                  for (size_t i = 0; i < p.size(); ++i)
                    if (g.needs(p[i])) g.grad(p[i])[0] += go * (*cs)[i];
                });
  }

  // Average of row groups of size `group`: (n, d) -> (n/group, d).
  Var<T> mean_pool_rows(Var<T> x, int group) {
    const Tensor<T>& xv = x.val();
    int n = xv.rows(), m = xv.cols();
    if (n % group != 0) throw NumericError("mean_pool_rows: group mismatch");
    int no = n / group;
    Tensor<T> out({no, m});
    for (int r = 0; r < no; ++r)
      for (int j = 0; j < group; ++j)
        for (int c = 0; c < m; ++c) out.at(r, c) += xv.at(r * group + j, c) / group;
    return make(std::move(out), {x.id},
                [group, no, m](Graph& g, int self, const std::vector<int>& p) {
                  if (!g.needs(p[0])) return;
                  const Tensor<T>& go = g.grad(self);
                  Tensor<T>& gx = g.grad(p[0]);
                  for (int r = 0; r < no; ++r)
                    for (int j = 0; j < group; ++j)
                      for (int c = 0; c < m; ++c)
                        gx.at(r * group + j, c) += go.at(r, c) / group;
                });
  }

  // Value copy that blocks gradient flow.
  Var<T> detach(Var<T> x) { return input(x.val()); }

  void backward(Var<T> loss) {
    if (!grad_enabled_) throw NumericError("backward: graph built without gradients");
    if (loss.val().numel() != 1) throw NumericError("backward: loss must be scalar");
    // Mark nodes reachable from the loss.
    std::vector<uint8_t> reach(nodes_.size(), 0);
    std::vector<int> stack{loss.id};
    reach[loss.id] = 1;
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      for (int p : nodes_[id].parents)
        if (!reach[p]) {
          reach[p] = 1;
          stack.push_back(p);
        }
    }
    grad(loss.id)[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
      if (!reach[id] || !nodes_[id].back || !has_grad(id)) continue;
      nodes_[id].back(*this, id, nodes_[id].parents);
    }
  }

  // Iterate parameter leaves that received gradient.
  template <class Fn>
  void for_each_param_grad(Fn&& fn) {
    for (auto& [pid, id] : param_nodes_)
      if (has_grad(id)) fn(pid, nodes_[id].grad);
  }

  bool needs(int id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    std::vector<int> parents;
    std::function<void(Graph&, int, const std::vector<int>&)> back;
    bool needs_grad = false;
    int pid = -1;
  };

  static void accumulate(Graph& g, int id, const Tensor<T>& delta) {
    if (!g.needs(id)) return;
    Tensor<T>& gt = g.grad(id);
    for (int64_t i = 0; i < delta.numel(); ++i) gt[i] += delta[i];
  }

  Var<T> make(Tensor<T> out, std::vector<int> parents,
              std::function<void(Graph&, int, const std::vector<int>&)> back) {
    nodes_.push_back(Node{});
    Node& n = nodes_.back();
    n.owned = std::move(out);
    n.parents = std::move(parents);
    bool needs = false;
    if (grad_enabled_) {
      for (int p : n.parents) needs = needs || nodes_[p].needs_grad;
    }
    n.needs_grad = needs;
    if (needs) n.back = std::move(back);
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  void check_same_shape(Var<T> a, Var<T> b, const char* op) {
    if (a.val().shape != b.val().shape)
      throw NumericError(std::string(op) + ": shape mismatch");
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<int, int> param_nodes_;
};

}  // namespace vlaos::nn
