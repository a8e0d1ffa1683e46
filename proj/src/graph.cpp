// Copyright 2026 The disco-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "disco/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace disco {

namespace {

constexpr double kLayerNormEps = 1e-5;

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
}

// C (+)= op(A) * op(B). C must be pre-shaped [m x n].
void matmul_into(Tensor& c, const Tensor& a, const Tensor& b, bool ta, bool tb, bool accumulate) {
  const int m = ta ? a.cols() : a.rows();
  const int ka = ta ? a.rows() : a.cols();
  const int kb = tb ? b.cols() : b.rows();
  const int n = tb ? b.rows() : b.cols();
  if (ka != kb) {
    throw ShapeError("matmul: inner extents differ: " + a.shape_str() + (ta ? "^T" : "") + " * " +
                     b.shape_str() + (tb ? "^T" : ""));
  }
  if (!accumulate) std::fill(c.values().begin(), c.values().end(), 0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const int lda = a.cols();
  const int ldb = b.cols();
  if (!ta && !tb) {
    for (int i = 0; i < m; ++i) {
      double* crow = pc + static_cast<std::size_t>(i) * n;
      const double* arow = pa + static_cast<std::size_t>(i) * lda;
      for (int l = 0; l < ka; ++l) {
        const double av = arow[l];
        const double* brow = pb + static_cast<std::size_t>(l) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (int i = 0; i < m; ++i) {
      const double* arow = pa + static_cast<std::size_t>(i) * lda;
      double* crow = pc + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* brow = pb + static_cast<std::size_t>(j) * ldb;
        double s = 0.0;
        for (int l = 0; l < ka; ++l) s += arow[l] * brow[l];
        crow[j] += s;
      }
    }
  } else if (ta && !tb) {
    for (int l = 0; l < ka; ++l) {
      const double* arow = pa + static_cast<std::size_t>(l) * lda;
      const double* brow = pb + static_cast<std::size_t>(l) * ldb;
      for (int i = 0; i < m; ++i) {
        const double av = arow[i];
        double* crow = pc + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double* crow = pc + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* brow = pb + static_cast<std::size_t>(j) * ldb;
        double s = 0.0;
        for (int l = 0; l < ka; ++l) s += pa[static_cast<std::size_t>(l) * lda + i] * brow[l];
        crow[j] += s;
      }
    }
  }
}

void softmax_row_masked(const double* scores, const std::uint8_t* vis, int cols, double* out) {
  double mx = -1e300;
  bool any = false;
  for (int j = 0; j < cols; ++j) {
    if (vis[j]) {
      any = true;
      mx = std::max(mx, scores[j]);
    }
  }
  if (!any) {
    std::fill(out, out + cols, 0.0);
    return;
  }
  double z = 0.0;
  for (int j = 0; j < cols; ++j) {
    if (vis[j]) {
      out[j] = std::exp(scores[j] - mx);
      z += out[j];
    } else {
      out[j] = 0.0;
    }
  }
  const double inv = 1.0 / z;
  for (int j = 0; j < cols; ++j) out[j] *= inv;
}

// ds = p .* (dp - sum(p .* dp)) per row; masked entries have p == 0 already.
void softmax_backward_row(const double* p, const double* dp, int cols, double* ds_accum) {
  double dot = 0.0;
  for (int j = 0; j < cols; ++j) dot += p[j] * dp[j];
  for (int j = 0; j < cols; ++j) ds_accum[j] += p[j] * (dp[j] - dot);
}

}  // namespace

Graph::Value Graph::push(Node n) {
  if (check_finite_ && !n.external_const && !n.out.all_finite()) {
    throw NumericError(std::string("non-finite values produced by op '") + n.op + "'");
  }
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

void Graph::check(Value v, const char* op) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw ValidationError(std::string(op) + ": value does not belong to this graph");
  }
}

Tensor& Graph::grad_buf(int id) {
  Node& n = node(id);
  if (n.out_grad.size() == 0) {
    n.out_grad = Tensor(out_of(id).shape());
  }
  return n.out_grad;
}

Graph::Value Graph::param(Tensor& t) {
  t.ensure_grad();
  Node n;
  n.out = t;  // copy; isolates the pass from later parameter updates
  n.external = &t;
  n.requires_grad = true;
  n.op = "param";
  n.backward_fn = [](Graph& g, int id) {
    Node& self = g.node(id);
    const std::vector<double>& og = self.out_grad.values();
    std::vector<double>& eg = self.external->grad();
    for (std::size_t i = 0; i < og.size(); ++i) eg[i] += og[i];
  };
  return push(std::move(n));
}

Graph::Value Graph::input(Tensor t) {
  Node n;
  n.out = std::move(t);
  n.op = "input";
  return push(std::move(n));
}

Graph::Value Graph::cref(const Tensor& t) {
  Node n;
  n.external_const = &t;
  n.op = "cref";
  return push(std::move(n));
}

Graph::Value Graph::matmul(Value a, Value b, bool trans_a, bool trans_b) {
  check(a, "matmul");
  check(b, "matmul");
  const Tensor& ta = out_of(a.id);
  const Tensor& tb = out_of(b.id);
  require_rank2(ta, "matmul");
  require_rank2(tb, "matmul");
  const int m = trans_a ? ta.cols() : ta.rows();
  const int n = trans_b ? tb.rows() : tb.cols();
  Node nd;
  nd.out = Tensor({m, n});
  matmul_into(nd.out, ta, tb, trans_a, trans_b, false);
  nd.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
  nd.op = "matmul";
  const int ia = a.id, ib = b.id;
  nd.backward_fn = [ia, ib, trans_a, trans_b](Graph& g, int id) {
    const Tensor& gc = g.node(id).out_grad;
    const Tensor& av = g.out_of(ia);
    const Tensor& bv = g.out_of(ib);
    if (g.node(ia).requires_grad) {
      Tensor& ga = g.grad_buf(ia);
      if (!trans_a) {
        matmul_into(ga, gc, bv, false, !trans_b, true);
      } else {
        matmul_into(ga, bv, gc, trans_b, true, true);
      }
    }
    if (g.node(ib).requires_grad) {
      Tensor& gb = g.grad_buf(ib);
      if (!trans_b) {
        matmul_into(gb, av, gc, !trans_a, false, true);
      } else {
        matmul_into(gb, gc, av, true, trans_a, true);
      }
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::add(Value a, Value b) {
  check(a, "add");
  check(b, "add");
  const Tensor& ta = out_of(a.id);
  const Tensor& tb = out_of(b.id);
  if (!ta.same_shape(tb)) throw ShapeError("add: shapes differ: " + ta.shape_str() + " vs " + tb.shape_str());
  Node nd;
  nd.out = ta;
  for (std::int64_t i = 0; i < tb.size(); ++i) nd.out.at(static_cast<int>(i)) += tb.at(static_cast<int>(i));
  nd.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
  nd.op = "add";
  const int ia = a.id, ib = b.id;
  nd.backward_fn = [ia, ib](Graph& g, int id) {
    const std::vector<double>& gc = g.node(id).out_grad.values();
    for (int p : {ia, ib}) {
      if (!g.node(p).requires_grad) continue;
      std::vector<double>& gp = g.grad_buf(p).values();
      for (std::size_t i = 0; i < gc.size(); ++i) gp[i] += gc[i];
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::add_bias(Value x, Value bias) {
  check(x, "add_bias");
  check(bias, "add_bias");
  const Tensor& tx = out_of(x.id);
  const Tensor& tb = out_of(bias.id);
  require_rank2(tx, "add_bias");
  if (tb.size() != tx.cols()) throw ShapeError("add_bias: bias size must equal column count");
  Node nd;
  nd.out = tx;
  const int r = tx.rows(), c = tx.cols();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) nd.out.at(i, j) += tb.at(j);
  }
  nd.requires_grad = node(x.id).requires_grad || node(bias.id).requires_grad;
  nd.op = "add_bias";
  const int ix = x.id, ib = bias.id;
  nd.backward_fn = [ix, ib, r, c](Graph& g, int id) {
    const Tensor& gc = g.node(id).out_grad;
    if (g.node(ix).requires_grad) {
      std::vector<double>& gx = g.grad_buf(ix).values();
      const std::vector<double>& gv = gc.values();
      for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i];
    }
    if (g.node(ib).requires_grad) {
      std::vector<double>& gb = g.grad_buf(ib).values();
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) gb[static_cast<std::size_t>(j)] += gc.at(i, j);
      }
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::scale(Value x, double c) {
  check(x, "scale");
  Node nd;
  nd.out = out_of(x.id);
  for (double& v : nd.out.values()) v *= c;
  nd.requires_grad = node(x.id).requires_grad;
  nd.op = "scale";
  const int ix = x.id;
  nd.backward_fn = [ix, c](Graph& g, int id) {
    if (!g.node(ix).requires_grad) return;
    const std::vector<double>& gc = g.node(id).out_grad.values();
    std::vector<double>& gx = g.grad_buf(ix).values();
    for (std::size_t i = 0; i < gc.size(); ++i) gx[i] += c * gc[i];
  };
  return push(std::move(nd));
}

Graph::Value Graph::mul(Value a, Value b) {
  check(a, "mul");
  check(b, "mul");
  const Tensor& ta = out_of(a.id);
  const Tensor& tb = out_of(b.id);
  if (!ta.same_shape(tb)) throw ShapeError("mul: shapes differ");
  Node nd;
  nd.out = ta;
  for (std::int64_t i = 0; i < tb.size(); ++i) nd.out.at(static_cast<int>(i)) *= tb.at(static_cast<int>(i));
  nd.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
  nd.op = "mul";
  const int ia = a.id, ib = b.id;
  nd.backward_fn = [ia, ib](Graph& g, int id) {
    const std::vector<double>& gc = g.node(id).out_grad.values();
    const std::vector<double>& av = g.out_of(ia).values();
    const std::vector<double>& bv = g.out_of(ib).values();
    if (g.node(ia).requires_grad) {
      std::vector<double>& ga = g.grad_buf(ia).values();
      for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * bv[i];
    }
    if (g.node(ib).requires_grad) {
      std::vector<double>& gb = g.grad_buf(ib).values();
      for (std::size_t i = 0; i < gc.size(); ++i) gb[i] += gc[i] * av[i];
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::relu(Value x) {
  check(x, "relu");
  Node nd;
  nd.out = out_of(x.id);
  for (double& v : nd.out.values()) v = v > 0.0 ? v : 0.0;
  nd.requires_grad = node(x.id).requires_grad;
  nd.op = "relu";
  const int ix = x.id;
  nd.backward_fn = [ix](Graph& g, int id) {
    if (!g.node(ix).requires_grad) return;
    const std::vector<double>& gc = g.node(id).out_grad.values();
    const std::vector<double>& xv = g.out_of(ix).values();
    std::vector<double>& gx = g.grad_buf(ix).values();
    for (std::size_t i = 0; i < gc.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += gc[i];
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::layer_norm(Value x, Value gain, Value bias) {
  check(x, "layer_norm");
  check(gain, "layer_norm");
  check(bias, "layer_norm");
  const Tensor& tx = out_of(x.id);
  if (tx.rank() < 1) throw ShapeError("layer_norm: rank >= 1 required");
  const int d = tx.dim(tx.rank() - 1);
  const int rows = static_cast<int>(tx.size() / d);
  const Tensor& tg = out_of(gain.id);
  const Tensor& tb = out_of(bias.id);
  if (tg.size() != d || tb.size() != d) throw ShapeError("layer_norm: gain/bias must have last-extent size");

  Node nd;
  nd.out = Tensor(tx.shape());
  Tensor xhat(tx.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  const double* px = tx.data();
  double* po = nd.out.data();
  double* ph = xhat.data();
  for (int r = 0; r < rows; ++r) {
    const double* row = px + static_cast<std::size_t>(r) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double t = row[j] - mu;
      var += t * t;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[static_cast<std::size_t>(r)] = inv;
    for (int j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * inv;
      ph[static_cast<std::size_t>(r) * d + j] = h;
      po[static_cast<std::size_t>(r) * d + j] = tg.at(j) * h + tb.at(j);
    }
  }
  nd.requires_grad =
      node(x.id).requires_grad || node(gain.id).requires_grad || node(bias.id).requires_grad;
  nd.op = "layer_norm";
  const int ix = x.id, ig = gain.id, ib = bias.id;
  nd.backward_fn = [ix, ig, ib, rows, d, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Graph& g, int id) {
    const Tensor& gc = g.node(id).out_grad;
    const Tensor& tg = g.out_of(ig);
    const double* pgc = gc.data();
    const double* ph = xhat.data();
    if (g.node(ig).requires_grad) {
      std::vector<double>& gg = g.grad_buf(ig).values();
      for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < d; ++j) {
          gg[static_cast<std::size_t>(j)] +=
              pgc[static_cast<std::size_t>(r) * d + j] * ph[static_cast<std::size_t>(r) * d + j];
        }
      }
    }
    if (g.node(ib).requires_grad) {
      std::vector<double>& gb = g.grad_buf(ib).values();
      for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < d; ++j) gb[static_cast<std::size_t>(j)] += pgc[static_cast<std::size_t>(r) * d + j];
      }
    }
    if (g.node(ix).requires_grad) {
      double* gx = g.grad_buf(ix).data();
      for (int r = 0; r < rows; ++r) {
        const double* grow = pgc + static_cast<std::size_t>(r) * d;
        const double* hrow = ph + static_cast<std::size_t>(r) * d;
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
          const double dh = grow[j] * tg.at(j);
          m1 += dh;
          m2 += dh * hrow[j];
        }
        m1 /= d;
        m2 /= d;
        const double inv = inv_std[static_cast<std::size_t>(r)];
        double* gxr = gx + static_cast<std::size_t>(r) * d;
        for (int j = 0; j < d; ++j) {
          const double dh = grow[j] * tg.at(j);
          gxr[j] += inv * (dh - m1 - hrow[j] * m2);
        }
      }
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::masked_softmax(Value scores, const BoolMatrix& visible) {
  check(scores, "masked_softmax");
  const Tensor& ts = out_of(scores.id);
  require_rank2(ts, "masked_softmax");
  if (ts.rows() != visible.rows || ts.cols() != visible.cols) {
    throw ShapeError("masked_softmax: mask extents must match scores");
  }
  const int r = ts.rows(), c = ts.cols();
  Node nd;
  nd.out = Tensor({r, c});
  for (int i = 0; i < r; ++i) {
    softmax_row_masked(ts.data() + static_cast<std::size_t>(i) * c,
                       visible.v.data() + static_cast<std::size_t>(i) * c, c,
                       nd.out.data() + static_cast<std::size_t>(i) * c);
  }
  nd.requires_grad = node(scores.id).requires_grad;
  nd.op = "masked_softmax";
  const int is = scores.id;
  nd.backward_fn = [is, r, c](Graph& g, int id) {
    if (!g.node(is).requires_grad) return;
    const Tensor& p = g.node(id).out;
    const Tensor& gc = g.node(id).out_grad;
    Tensor& gs = g.grad_buf(is);
    for (int i = 0; i < r; ++i) {
      softmax_backward_row(p.data() + static_cast<std::size_t>(i) * c,
                           gc.data() + static_cast<std::size_t>(i) * c, c,
                           gs.data() + static_cast<std::size_t>(i) * c);
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::attention(Value q, Value k, Value v, const BoolMatrix& visible, int num_heads) {
  check(q, "attention");
  check(k, "attention");
  check(v, "attention");
  const Tensor& tq = out_of(q.id);
  const Tensor& tk = out_of(k.id);
  const Tensor& tv = out_of(v.id);
  require_rank2(tq, "attention");
  require_rank2(tk, "attention");
  require_rank2(tv, "attention");
  const int d = tq.cols();
  if (tk.cols() != d || tv.cols() != d) throw ShapeError("attention: q/k/v widths differ");
  if (tk.rows() != tv.rows()) throw ShapeError("attention: k/v row counts differ");
  if (num_heads < 1 || d % num_heads != 0) throw ShapeError("attention: head count must divide width");
  const int nq = tq.rows(), nk = tk.rows();
  if (visible.rows != nq || visible.cols != nk) throw ShapeError("attention: mask extents must match");
  const int dh = d / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Node nd;
  nd.out = Tensor({nq, d});
  // probs[h] is the post-softmax weight matrix of head h; cached for backward.
  std::vector<Tensor> probs;
  probs.reserve(static_cast<std::size_t>(num_heads));
  std::vector<double> srow(static_cast<std::size_t>(nk));
  for (int h = 0; h < num_heads; ++h) {
    const int h0 = h * dh;
    Tensor p({nq, nk});
    for (int i = 0; i < nq; ++i) {
      const double* qrow = tq.data() + static_cast<std::size_t>(i) * d + h0;
      for (int j = 0; j < nk; ++j) {
        if (!visible.at(i, j)) {
          srow[static_cast<std::size_t>(j)] = 0.0;
          continue;
        }
        const double* krow = tk.data() + static_cast<std::size_t>(j) * d + h0;
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += qrow[c] * krow[c];
        srow[static_cast<std::size_t>(j)] = s * inv_sqrt;
      }
      softmax_row_masked(srow.data(), visible.v.data() + static_cast<std::size_t>(i) * nk, nk,
                         p.data() + static_cast<std::size_t>(i) * nk);
    }
    // ctx rows into the head's column block
    for (int i = 0; i < nq; ++i) {
      double* orow = nd.out.data() + static_cast<std::size_t>(i) * d + h0;
      const double* prow = p.data() + static_cast<std::size_t>(i) * nk;
      for (int j = 0; j < nk; ++j) {
        const double pij = prow[j];
        if (pij == 0.0) continue;
        const double* vrow = tv.data() + static_cast<std::size_t>(j) * d + h0;
        for (int c = 0; c < dh; ++c) orow[c] += pij * vrow[c];
      }
    }
    probs.push_back(std::move(p));
  }
  nd.requires_grad =
      node(q.id).requires_grad || node(k.id).requires_grad || node(v.id).requires_grad;
  nd.op = "attention";
  const int iq = q.id, ik = k.id, iv = v.id;
  nd.backward_fn = [iq, ik, iv, num_heads, dh, d, nq, nk, inv_sqrt,
                    probs = std::move(probs)](Graph& g, int id) {
    const Tensor& gout = g.node(id).out_grad;
    const Tensor& tq = g.out_of(iq);
    const Tensor& tk = g.out_of(ik);
    const Tensor& tv = g.out_of(iv);
    const bool need_q = g.node(iq).requires_grad;
    const bool need_k = g.node(ik).requires_grad;
    const bool need_v = g.node(iv).requires_grad;
    Tensor dp({nq, nk});
    Tensor ds({nq, nk});
    for (int h = 0; h < num_heads; ++h) {
      const int h0 = h * dh;
      const Tensor& p = probs[static_cast<std::size_t>(h)];
      // dp = dctx * V_h^T ; dV_h += P^T * dctx
      std::fill(dp.values().begin(), dp.values().end(), 0.0);
      for (int i = 0; i < nq; ++i) {
        const double* grow = gout.data() + static_cast<std::size_t>(i) * d + h0;
        double* dprow = dp.data() + static_cast<std::size_t>(i) * nk;
        for (int j = 0; j < nk; ++j) {
          const double* vrow = tv.data() + static_cast<std::size_t>(j) * d + h0;
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += grow[c] * vrow[c];
          dprow[j] = s;
        }
      }
      if (need_v) {
        Tensor& gv = g.grad_buf(iv);
        for (int i = 0; i < nq; ++i) {
          const double* prow = p.data() + static_cast<std::size_t>(i) * nk;
          const double* grow = gout.data() + static_cast<std::size_t>(i) * d + h0;
          for (int j = 0; j < nk; ++j) {
            const double pij = prow[j];
            if (pij == 0.0) continue;
            double* gvrow = gv.data() + static_cast<std::size_t>(j) * d + h0;
            for (int c = 0; c < dh; ++c) gvrow[c] += pij * grow[c];
          }
        }
      }
      if (!need_q && !need_k) continue;
      std::fill(ds.values().begin(), ds.values().end(), 0.0);
      for (int i = 0; i < nq; ++i) {
        softmax_backward_row(p.data() + static_cast<std::size_t>(i) * nk,
                             dp.data() + static_cast<std::size_t>(i) * nk, nk,
                             ds.data() + static_cast<std::size_t>(i) * nk);
      }
      if (need_q) {
        Tensor& gq = g.grad_buf(iq);
        for (int i = 0; i < nq; ++i) {
          double* gqrow = gq.data() + static_cast<std::size_t>(i) * d + h0;
          const double* dsrow = ds.data() + static_cast<std::size_t>(i) * nk;
          for (int j = 0; j < nk; ++j) {
            const double w = dsrow[j] * inv_sqrt;
            if (w == 0.0) continue;
            const double* krow = tk.data() + static_cast<std::size_t>(j) * d + h0;
            for (int c = 0; c < dh; ++c) gqrow[c] += w * krow[c];
          }
        }
      }
      if (need_k) {
        Tensor& gk = g.grad_buf(ik);
        for (int i = 0; i < nq; ++i) {
          const double* qrow = tq.data() + static_cast<std::size_t>(i) * d + h0;
          const double* dsrow = ds.data() + static_cast<std::size_t>(i) * nk;
          for (int j = 0; j < nk; ++j) {
            const double w = dsrow[j] * inv_sqrt;
            if (w == 0.0) continue;
            double* gkrow = gk.data() + static_cast<std::size_t>(j) * d + h0;
            for (int c = 0; c < dh; ++c) gkrow[c] += w * qrow[c];
          }
        }
      }
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::embedding(Value table, std::span<const int> ids) {
  check(table, "embedding");
  const Tensor& tt = out_of(table.id);
  require_rank2(tt, "embedding");
  const int v = tt.rows(), d = tt.cols();
  for (int idx : ids) {
    if (idx < 0 || idx >= v) {
      throw IndexError("embedding: id " + std::to_string(idx) + " out of range [0, " + std::to_string(v) + ")");
    }
  }
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw ShapeError("embedding: empty id list");
  Node nd;
  nd.out = Tensor({n, d});
  for (int i = 0; i < n; ++i) {
    std::memcpy(nd.out.data() + static_cast<std::size_t>(i) * d,
                tt.data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d,
                sizeof(double) * static_cast<std::size_t>(d));
  }
  nd.requires_grad = node(table.id).requires_grad;
  nd.op = "embedding";
  const int it = table.id;
  nd.backward_fn = [it, d, ids = std::vector<int>(ids.begin(), ids.end())](Graph& g, int id) {
    if (!g.node(it).requires_grad) return;
    const Tensor& gc = g.node(id).out_grad;
    Tensor& gt = g.grad_buf(it);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* trow = gt.data() + static_cast<std::size_t>(ids[i]) * d;
      const double* grow = gc.data() + i * static_cast<std::size_t>(d);
      for (int c = 0; c < d; ++c) trow[c] += grow[c];
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::slice_rows(Value x, int begin, int count) {
  check(x, "slice_rows");
  const Tensor& tx = out_of(x.id);
  require_rank2(tx, "slice_rows");
  if (begin < 0 || count < 1 || begin + count > tx.rows()) {
    throw ShapeError("slice_rows: range out of bounds");
  }
  const int c = tx.cols();
  Node nd;
  nd.out = Tensor({count, c});
  std::memcpy(nd.out.data(), tx.data() + static_cast<std::size_t>(begin) * c,
              sizeof(double) * static_cast<std::size_t>(count) * c);
  nd.requires_grad = node(x.id).requires_grad;
  nd.op = "slice_rows";
  const int ix = x.id;
  nd.backward_fn = [ix, begin, count, c](Graph& g, int id) {
    if (!g.node(ix).requires_grad) return;
    const Tensor& gc = g.node(id).out_grad;
    Tensor& gx = g.grad_buf(ix);
    for (int i = 0; i < count; ++i) {
      double* dst = gx.data() + static_cast<std::size_t>(begin + i) * c;
      const double* src = gc.data() + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j) dst[j] += src[j];
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::dropout(Value x, double rate, RngStream& rng) {
  check(x, "dropout");
  if (rate < 0.0 || rate >= 1.0) throw ValidationError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const Tensor& tx = out_of(x.id);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> gate(static_cast<std::size_t>(tx.size()));
  Node nd;
  nd.out = Tensor(tx.shape());
  for (std::int64_t i = 0; i < tx.size(); ++i) {
    const double m = rng.next_real() >= rate ? keep_scale : 0.0;
    gate[static_cast<std::size_t>(i)] = m;
    nd.out.at(static_cast<int>(i)) = tx.at(static_cast<int>(i)) * m;
  }
  nd.requires_grad = node(x.id).requires_grad;
  nd.op = "dropout";
  const int ix = x.id;
  nd.backward_fn = [ix, gate = std::move(gate)](Graph& g, int id) {
    if (!g.node(ix).requires_grad) return;
    const std::vector<double>& gc = g.node(id).out_grad.values();
    std::vector<double>& gx = g.grad_buf(ix).values();
    for (std::size_t i = 0; i < gc.size(); ++i) gx[i] += gc[i] * gate[i];
  };
  return push(std::move(nd));
}

Graph::Value Graph::cross_entropy_smoothed(Value logits, std::span<const int> targets, double eps,
                                           const std::vector<double>* row_weights) {
  check(logits, "cross_entropy_smoothed");
  if (eps < 0.0 || eps >= 1.0) throw ValidationError("cross_entropy_smoothed: epsilon must lie in [0, 1)");
  const Tensor& tl = out_of(logits.id);
  require_rank2(tl, "cross_entropy_smoothed");
  const int n = tl.rows(), v = tl.cols();
  if (static_cast<int>(targets.size()) != n) {
    throw ShapeError("cross_entropy_smoothed: one target per row required");
  }
  for (int t : targets) {
    if (t < 0 || t >= v) throw IndexError("cross_entropy_smoothed: target id " + std::to_string(t) + " out of range");
  }
  if (row_weights && static_cast<int>(row_weights->size()) != n) {
    throw ShapeError("cross_entropy_smoothed: one weight per row required");
  }
  double wsum = 0.0;
  for (int r = 0; r < n; ++r) wsum += row_weights ? (*row_weights)[static_cast<std::size_t>(r)] : 1.0;
  if (wsum <= 0.0) throw ValidationError("cross_entropy_smoothed: total row weight must be positive");

  Tensor probs({n, v});
  std::vector<double> wnorm(static_cast<std::size_t>(n));
  double loss = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* row = tl.data() + static_cast<std::size_t>(r) * v;
    double mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double logz = std::log(z) + mx;
    double mean_nll = 0.0;
    for (int j = 0; j < v; ++j) {
      const double lp = row[j] - logz;
      probs.at(r, j) = std::exp(lp);
      mean_nll -= lp;
    }
    mean_nll /= v;
    const double nll_t = logz - row[targets[static_cast<std::size_t>(r)]];
    const double w = (row_weights ? (*row_weights)[static_cast<std::size_t>(r)] : 1.0) / wsum;
    wnorm[static_cast<std::size_t>(r)] = w;
    loss += w * ((1.0 - eps) * nll_t + eps * mean_nll);
  }

  Node nd;
  nd.out = Tensor::scalar(loss);
  nd.requires_grad = node(logits.id).requires_grad;
  nd.op = "cross_entropy_smoothed";
  const int il = logits.id;
  nd.backward_fn = [il, n, v, eps, probs = std::move(probs), wnorm = std::move(wnorm),
                    tg = std::vector<int>(targets.begin(), targets.end())](Graph& g, int id) {
    if (!g.node(il).requires_grad) return;
    const double gs = g.node(id).out_grad.at(0);
    Tensor& gl = g.grad_buf(il);
    const double smooth = eps / v;
    for (int r = 0; r < n; ++r) {
      const double w = wnorm[static_cast<std::size_t>(r)] * gs;
      if (w == 0.0) continue;
      double* grow = gl.data() + static_cast<std::size_t>(r) * v;
      const double* prow = probs.data() + static_cast<std::size_t>(r) * v;
      for (int j = 0; j < v; ++j) grow[j] += w * (prow[j] - smooth);
      grow[tg[static_cast<std::size_t>(r)]] -= w * (1.0 - eps);
    }
  };
  return push(std::move(nd));
}

Graph::Value Graph::sum(Value x) {
  check(x, "sum");
  const Tensor& tx = out_of(x.id);
  Node nd;
  nd.out = Tensor::scalar(pairwise_sum(tx.values()));
  nd.requires_grad = node(x.id).requires_grad;
  nd.op = "sum";
  const int ix = x.id;
  nd.backward_fn = [ix](Graph& g, int id) {
    if (!g.node(ix).requires_grad) return;
    const double gs = g.node(id).out_grad.at(0);
    std::vector<double>& gx = g.grad_buf(ix).values();
    for (double& v : gx) v += gs;
  };
  return push(std::move(nd));
}

Graph::Value Graph::mean(Value x) {
  check(x, "mean");
  const double inv = 1.0 / static_cast<double>(out_of(x.id).size());
  return scale(sum(x), inv);
}

Graph::Value Graph::combine_scalars(std::span<const Value> vals, std::span<const double> weights) {
  if (vals.size() != weights.size() || vals.empty()) {
    throw ValidationError("combine_scalars: need matching, non-empty value/weight lists");
  }
  double total = 0.0;
  bool needs = false;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    check(vals[i], "combine_scalars");
    const Tensor& t = out_of(vals[i].id);
    if (t.size() != 1) throw ShapeError("combine_scalars: inputs must be scalars");
    total += weights[i] * t.at(0);
    needs = needs || node(vals[i].id).requires_grad;
  }
  Node nd;
  nd.out = Tensor::scalar(total);
  nd.requires_grad = needs;
  nd.op = "combine_scalars";
  std::vector<int> pids(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) pids[i] = vals[i].id;
  nd.backward_fn = [pids = std::move(pids),
                    ws = std::vector<double>(weights.begin(), weights.end())](Graph& g, int id) {
    const double gs = g.node(id).out_grad.at(0);
    for (std::size_t i = 0; i < pids.size(); ++i) {
      if (!g.node(pids[i]).requires_grad) continue;
      g.grad_buf(pids[i]).at(0) += gs * ws[i];
    }
  };
  return push(std::move(nd));
}

void Graph::backward(Value loss) {
  check(loss, "backward");
  if (out_of(loss.id).size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + out_of(loss.id).shape_str());
  }
  // Internal node grads start fresh each call; only external parameter
  // buffers accumulate across calls.
  for (Node& n : nodes_) {
    if (n.out_grad.size() != 0) {
      std::fill(n.out_grad.values().begin(), n.out_grad.values().end(), 0.0);
    }
  }
  grad_buf(loss.id).at(0) = 1.0;
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad || !n.backward_fn) continue;
    if (n.out_grad.size() == 0) continue;  // no downstream contribution
    n.backward_fn(*this, id);
  }
}

Tensor log_softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("log_softmax_rows: rank-2 tensor required");
  const int n = logits.rows(), v = logits.cols();
  Tensor out({n, v});
  for (int r = 0; r < n; ++r) {
    const double* row = logits.data() + static_cast<std::size_t>(r) * v;
    double mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double logz = std::log(z) + mx;
    for (int j = 0; j < v; ++j) out.at(r, j) = row[j] - logz;
  }
  return out;
}

GradCheckReport grad_check(const std::function<double(bool)>& eval,
                           std::span<Tensor* const> params, double step, int max_coords,
                           RngStream* rng, double denom_floor) {
  if (step <= 0.0) throw ValidationError("grad_check: step must be positive");
  for (Tensor* p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  eval(true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.push_back(p->grad());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = *params[pi];
    std::vector<int> coords;
    const int n = static_cast<int>(t.size());
    if (max_coords > 0 && rng && n > max_coords) {
      coords = rng->sample_without_replacement(n, max_coords);
    } else {
      coords.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    }
    for (int c : coords) {
      const double orig = t.at(c);
      t.at(c) = orig + step;
      const double fp = eval(false);
      t.at(c) = orig - step;
      const double fm = eval(false);
      t.at(c) = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[pi][static_cast<std::size_t>(c)];
      const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace disco
