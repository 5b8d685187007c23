#include "mccws/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mccws/errors.hpp"

namespace mccws {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) +
                     " vs " + shape_string(b));
  }
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

namespace kernels {

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  Real* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    Real* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = pa[i * k + p];
      if (av == 0) continue;
      const Real* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  Real* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* brow = pb + j * k;
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      po[i * n + j] += acc;
    }
  }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  Real* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* brow = pb + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = pa[i * k + p];
      if (av == 0) continue;
      Real* orow = po + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace kernels

const Tensor* Gradients::find(const Parameter& p) const {
  const auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor Gradients::get(const Parameter& p) const {
  if (const Tensor* g = find(p)) return *g;
  return Tensor(p.value.rows(), p.value.cols());
}

void Gradients::accumulate(const Parameter& p, const Tensor& g) {
  auto [it, inserted] = grads_.try_emplace(&p, g);
  if (!inserted) add_into(it->second, g);
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id_ >= nodes_.size()) {
    throw std::out_of_range("variable does not belong to this tape");
  }
  return nodes_[v.id_];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  if (!backward_done_) throw std::logic_error("grad() before backward()");
  return node(v).grad;
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(fn));
}

Var Tape::push(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_grad_) {
    for (Var in : inputs) {
      if (node(in).requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

Var Tape::param(const Parameter& p) {
  if (const auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var(it->second);
  }
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = record_grad_;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(nodes_.size() - 1);
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols() != vb.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(va) +
                     " . " + shape_string(vb));
  }
  Tensor out(va.rows(), vb.cols());
  kernels::gemm_nn(va, vb, out);
  const std::size_t ia = a.id_, ib = b.id_;
  return push(std::move(out), {a, b}, [ia, ib](std::vector<Node>& n, std::size_t self) {
    const Tensor& g = n[self].grad;
    if (n[ia].requires_grad) kernels::gemm_nt(g, n[ib].value, n[ia].grad);
    if (n[ib].requires_grad) kernels::gemm_tn(n[ia].value, g, n[ib].grad);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols() != vb.cols()) {
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_string(va) +
                     " . " + shape_string(vb) + "^T");
  }
  Tensor out(va.rows(), vb.rows());
  kernels::gemm_nt(va, vb, out);
  const std::size_t ia = a.id_, ib = b.id_;
  return push(std::move(out), {a, b}, [ia, ib](std::vector<Node>& n, std::size_t self) {
    const Tensor& g = n[self].grad;
    if (n[ia].requires_grad) kernels::gemm_nn(g, n[ib].value, n[ia].grad);
    if (n[ib].requires_grad) kernels::gemm_tn(g, n[ia].value, n[ib].grad);
  });
}

Var Tape::linear(Var x, Var weight, Var bias) {
  return add_row(matmul_nt(x, weight), bias);
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Tensor out = value(a);
  add_into(out, value(b));
  const std::size_t ia = a.id_, ib = b.id_;
  return push(std::move(out), {a, b}, [ia, ib](std::vector<Node>& n, std::size_t self) {
    if (n[ia].requires_grad) add_into(n[ia].grad, n[self].grad);
    if (n[ib].requires_grad) add_into(n[ib].grad, n[self].grad);
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Tensor out = value(a);
  auto o = out.data();
  auto vb = value(b).data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= vb[i];
  const std::size_t ia = a.id_, ib = b.id_;
  return push(std::move(out), {a, b}, [ia, ib](std::vector<Node>& n, std::size_t self) {
    if (n[ia].requires_grad) add_into(n[ia].grad, n[self].grad);
    if (n[ib].requires_grad) {
      auto d = n[ib].grad.data();
      auto g = n[self].grad.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Tensor out = value(a);
  auto o = out.data();
  auto vb = value(b).data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= vb[i];
  const std::size_t ia = a.id_, ib = b.id_;
  return push(std::move(out), {a, b}, [ia, ib](std::vector<Node>& n, std::size_t self) {
    auto g = n[self].grad.data();
    if (n[ia].requires_grad) {
      auto d = n[ia].grad.data();
      auto v = n[ib].value.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * v[i];
    }
    if (n[ib].requires_grad) {
      auto d = n[ib].grad.data();
      auto v = n[ia].value.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * v[i];
    }
  });
}

Var Tape::add_row(Var x, Var row) {
  const Tensor& vx = value(x);
  const Tensor& vr = value(row);
  if (vr.rows() != 1 || vr.cols() != vx.cols()) {
    throw ShapeError("add_row: " + shape_string(vr) + " cannot broadcast over " +
                     shape_string(vx));
  }
  Tensor out = vx;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += vr[c];
  }
  const std::size_t ix = x.id_, ir = row.id_;
  return push(std::move(out), {x, row}, [ix, ir](std::vector<Node>& n, std::size_t self) {
    const Tensor& g = n[self].grad;
    if (n[ix].requires_grad) add_into(n[ix].grad, g);
    if (n[ir].requires_grad) {
      Tensor& d = n[ir].grad;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto gr = g.row(r);
        for (std::size_t c = 0; c < gr.size(); ++c) d[c] += gr[c];
      }
    }
  });
}

Var Tape::scale(Var x, Real factor) {
  Tensor out = value(x);
  for (Real& v : out.data()) v *= factor;
  const std::size_t ix = x.id_;
  return push(std::move(out), {x}, [ix, factor](std::vector<Node>& n, std::size_t self) {
    auto d = n[ix].grad.data();
    auto g = n[self].grad.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
  });
}

Var Tape::one_minus(Var x) {
  Tensor out = value(x);
  for (Real& v : out.data()) v = 1 - v;
  const std::size_t ix = x.id_;
  return push(std::move(out), {x}, [ix](std::vector<Node>& n, std::size_t self) {
    auto d = n[ix].grad.data();
    auto g = n[self].grad.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
  });
}

Var Tape::sum(Var x) {
  Real total = 0;
  for (Real v : value(x).data()) total += v;
  const std::size_t ix = x.id_;
  return push(Tensor(1, 1, total), {x}, [ix](std::vector<Node>& n, std::size_t self) {
    const Real g = n[self].grad[0];
    for (Real& d : n[ix].grad.data()) d += g;
  });
}

Var Tape::tanh(Var x) {
  Tensor out = value(x);
  for (Real& v : out.data()) v = std::tanh(v);
  const std::size_t ix = x.id_;
  return push(std::move(out), {x}, [ix](std::vector<Node>& n, std::size_t self) {
    auto d = n[ix].grad.data();
    auto g = n[self].grad.data();
    auto y = n[self].value.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (1 - y[i] * y[i]);
  });
}

Var Tape::sigmoid(Var x) {
  Tensor out = value(x);
  for (Real& v : out.data()) {
    v = v >= 0 ? 1 / (1 + std::exp(-v)) : std::exp(v) / (1 + std::exp(v));
  }
  const std::size_t ix = x.id_;
  return push(std::move(out), {x}, [ix](std::vector<Node>& n, std::size_t self) {
    auto d = n[ix].grad.data();
    auto g = n[self].grad.data();
    auto y = n[self].value.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i] * (1 - y[i]);
  });
}

Var Tape::gelu(Var x) {
  constexpr Real kInvSqrt2 = 1 / std::numbers::sqrt2_v<Real>;
  constexpr Real kInvSqrt2Pi = std::numbers::inv_sqrtpi_v<Real> * kInvSqrt2;
  Tensor out = value(x);
  for (Real& v : out.data()) v = Real(0.5) * v * (1 + std::erf(v * kInvSqrt2));
  const std::size_t ix = x.id_;
  return push(std::move(out), {x}, [ix](std::vector<Node>& n, std::size_t self) {
    auto d = n[ix].grad.data();
    auto g = n[self].grad.data();
    auto in = n[ix].value.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Real v = in[i];
      const Real cdf = Real(0.5) * (1 + std::erf(v * kInvSqrt2));
      const Real pdf = kInvSqrt2Pi * std::exp(Real(-0.5) * v * v);
      d[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var Tape::softmax(Var x, std::size_t valid_cols) {
  const Tensor& vx = value(x);
  const std::size_t valid = std::min(valid_cols, vx.cols());
  if (valid == 0 && vx.cols() > 0) throw std::invalid_argument("softmax: no valid columns");
  Tensor out(vx.rows(), vx.cols());
  for (std::size_t r = 0; r < vx.rows(); ++r) {
    auto in = vx.row(r);
    auto o = out.row(r);
    Real mx = in[0];
    for (std::size_t c = 1; c < valid; ++c) mx = std::max(mx, in[c]);
    Real total = 0;
    for (std::size_t c = 0; c < valid; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < valid; ++c) o[c] /= total;
  }
  const std::size_t ix = x.id_;
  return push(std::move(out), {x}, [ix](std::vector<Node>& n, std::size_t self) {
    const Tensor& y = n[self].value;
    const Tensor& g = n[self].grad;
    Tensor& d = n[ix].grad;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      auto dr = d.row(r);
      Real dot = 0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      for (std::size_t c = 0; c < yr.size(); ++c) dr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, Real eps) {
  const Tensor& vx = value(x);
  const Tensor& vg = value(gain);
  const Tensor& vb = value(bias);
  const std::size_t d = vx.cols();
  if (d == 0) throw ShapeError("layer_norm: zero-width rows");
  if (vg.rows() != 1 || vg.cols() != d || !vg.same_shape(vb)) {
    throw ShapeError("layer_norm: affine shape " + shape_string(vg) +
                     " does not match width " + std::to_string(d));
  }
  Tensor normalized(vx.rows(), d);
  std::vector<Real> inv_std(vx.rows());
  Tensor out(vx.rows(), d);
  for (std::size_t r = 0; r < vx.rows(); ++r) {
    auto in = vx.row(r);
    Real mean = 0;
    for (Real v : in) mean += v;
    mean /= static_cast<Real>(d);
    Real var = 0;
    for (Real v : in) var += (v - mean) * (v - mean);
    var /= static_cast<Real>(d);
    const Real is = 1 / std::sqrt(var + eps);
    inv_std[r] = is;
    auto xh = normalized.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      xh[c] = (in[c] - mean) * is;
      o[c] = xh[c] * vg[c] + vb[c];
    }
  }
  const std::size_t ix = x.id_, ig = gain.id_, ib = bias.id_;
  return push(std::move(out), {x, gain, bias},
              [ix, ig, ib, normalized = std::move(normalized),
               inv_std = std::move(inv_std)](std::vector<Node>& n, std::size_t self) {
                const Tensor& g = n[self].grad;
                const Tensor& gain_v = n[ig].value;
                const std::size_t d = g.cols();
                std::vector<Real> dxhat(d);
                for (std::size_t r = 0; r < g.rows(); ++r) {
                  auto gr = g.row(r);
                  auto xh = normalized.row(r);
                  if (n[ig].requires_grad) {
                    for (std::size_t c = 0; c < d; ++c) n[ig].grad[c] += gr[c] * xh[c];
                  }
                  if (n[ib].requires_grad) {
                    for (std::size_t c = 0; c < d; ++c) n[ib].grad[c] += gr[c];
                  }
                  if (!n[ix].requires_grad) continue;
                  Real mean_dxhat = 0, mean_dxhat_xhat = 0;
                  for (std::size_t c = 0; c < d; ++c) {
                    dxhat[c] = gr[c] * gain_v[c];
                    mean_dxhat += dxhat[c];
                    mean_dxhat_xhat += dxhat[c] * xh[c];
                  }
                  mean_dxhat /= static_cast<Real>(d);
                  mean_dxhat_xhat /= static_cast<Real>(d);
                  auto dx = n[ix].grad.row(r);
                  for (std::size_t c = 0; c < d; ++c) {
                    dx[c] += inv_std[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
                  }
                }
              });
}

Var Tape::dropout(Var x, Real p, bool training, Rng& rng) {
  if (!(p >= 0 && p < 1)) {
    throw std::invalid_argument("dropout probability must be in [0, 1), got " +
                                std::to_string(p));
  }
  if (!training || p == 0) return x;
  const Tensor& vx = value(x);
  const Real keep_scale = 1 / (1 - p);
  std::vector<Real> mask(vx.size());
  for (Real& m : mask) m = rng.bernoulli(p) ? Real(0) : keep_scale;
  Tensor out = vx;
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mask[i];
  const std::size_t ix = x.id_;
  return push(std::move(out), {x},
              [ix, mask = std::move(mask)](std::vector<Node>& n, std::size_t self) {
                auto d = n[ix].grad.data();
                auto g = n[self].grad.data();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * mask[i];
              });
}

Var Tape::embedding(Var table, std::span<const int> ids) {
  const Tensor& vt = value(table);
  const std::size_t width = vt.cols();
  Tensor out(ids.size(), width);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vt.rows()) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[t]) +
                              " outside table of " + std::to_string(vt.rows()) +
                              " rows");
    }
    auto src = vt.row(static_cast<std::size_t>(ids[t]));
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  const std::size_t it = table.id_;
  return push(std::move(out), {table},
              [it, ids = std::vector<int>(ids.begin(), ids.end())](
                  std::vector<Node>& n, std::size_t self) {
                const Tensor& g = n[self].grad;
                Tensor& d = n[it].grad;
                for (std::size_t t = 0; t < ids.size(); ++t) {
                  auto dst = d.row(static_cast<std::size_t>(ids[t]));
                  auto src = g.row(t);
                  for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                }
              });
}

Var Tape::cross_entropy(Var logits, std::span<const int> targets,
                        std::span<const std::uint8_t> mask, Reduction reduction) {
  const Tensor& vl = value(logits);
  const std::size_t rows = vl.rows(), k = vl.cols();
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(rows) + " rows");
  }
  if (!mask.empty() && mask.size() != rows) {
    throw ShapeError("cross_entropy: mask length differs from row count");
  }
  Tensor probs(rows, k);
  std::vector<std::uint8_t> active(rows, 1);
  std::size_t count = 0;
  Real total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask.empty() && mask[r] == 0) {
      active[r] = 0;
      continue;
    }
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= k) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[r]) +
                              " outside " + std::to_string(k) + " classes");
    }
    auto in = vl.row(r);
    Real mx = in[0];
    for (Real v : in) mx = std::max(mx, v);
    Real z = 0;
    for (Real v : in) z += std::exp(v - mx);
    const Real log_z = mx + std::log(z);
    total += log_z - in[static_cast<std::size_t>(targets[r])];
    auto p = probs.row(r);
    for (std::size_t c = 0; c < k; ++c) p[c] = std::exp(in[c] - log_z);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: every position is masked");
  const Real factor = reduction == Reduction::Mean ? Real(1) / static_cast<Real>(count) : Real(1);
  const std::size_t il = logits.id_;
  return push(Tensor(1, 1, total * factor), {logits},
              [il, factor, probs = std::move(probs), active = std::move(active),
               tg = std::vector<int>(targets.begin(), targets.end())](
                  std::vector<Node>& n, std::size_t self) {
                const Real g = n[self].grad[0] * factor;
                Tensor& d = n[il].grad;
                for (std::size_t r = 0; r < active.size(); ++r) {
                  if (!active[r]) continue;
                  auto dr = d.row(r);
                  auto p = probs.row(r);
                  for (std::size_t c = 0; c < dr.size(); ++c) dr[c] += g * p[c];
                  dr[static_cast<std::size_t>(tg[r])] -= g;
                }
              });
}

Var Tape::slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& vx = value(x);
  if (begin > end || end > vx.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + shape_string(vx));
  }
  const std::size_t width = vx.cols();
  auto src = vx.data().subspan(begin * width, (end - begin) * width);
  Tensor out(end - begin, width, std::vector<Real>(src.begin(), src.end()));
  const std::size_t ix = x.id_;
  return push(std::move(out), {x}, [ix, begin, width](std::vector<Node>& n, std::size_t self) {
    auto g = n[self].grad.data();
    auto d = n[ix].grad.data().subspan(begin * width, g.size());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Var Tape::slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& vx = value(x);
  if (begin > end || end > vx.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + shape_string(vx));
  }
  Tensor out(vx.rows(), end - begin);
  for (std::size_t r = 0; r < vx.rows(); ++r) {
    auto src = vx.row(r).subspan(begin, end - begin);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const std::size_t ix = x.id_;
  return push(std::move(out), {x}, [ix, begin](std::vector<Node>& n, std::size_t self) {
    const Tensor& g = n[self].grad;
    Tensor& d = n[ix].grad;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      auto dr = d.row(r).subspan(begin, gr.size());
      for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += gr[c];
    }
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t width = 0;
  std::vector<std::size_t> ids, offsets;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ShapeError("concat_cols: row counts differ");
    ids.push_back(p.id_);
    offsets.push_back(width);
    width += value(p).cols();
  }
  Tensor out(rows, width);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = value(parts[i]);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offsets[i]));
    }
  }
  return push(std::move(out), parts,
              [ids = std::move(ids), offsets = std::move(offsets)](std::vector<Node>& n,
                                                                   std::size_t self) {
                const Tensor& g = n[self].grad;
                for (std::size_t i = 0; i < ids.size(); ++i) {
                  Node& in = n[ids[i]];
                  if (!in.requires_grad) continue;
                  const std::size_t w = in.value.cols();
                  for (std::size_t r = 0; r < g.rows(); ++r) {
                    auto gr = g.row(r).subspan(offsets[i], w);
                    auto dr = in.grad.row(r);
                    for (std::size_t c = 0; c < w; ++c) dr[c] += gr[c];
                  }
                }
              });
}

Gradients Tape::backward(Var loss) {
  if (!record_grad_) throw std::logic_error("backward() on a tape that does not record gradients");
  if (backward_done_) throw std::logic_error("backward() called twice on one tape");
  const Tensor& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(lv));
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor(n.value.rows(), n.value.cols());
  }
  backward_done_ = true;
  Gradients out;
  Node& root = nodes_[loss.id_];
  if (!root.requires_grad) return out;
  root.grad[0] = 1;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.backward) n.backward(nodes_, i);
  }
  for (const Node& n : nodes_) {
    if (n.param != nullptr && n.requires_grad) out.accumulate(*n.param, n.grad);
  }
  return out;
}

}  // namespace mccws
