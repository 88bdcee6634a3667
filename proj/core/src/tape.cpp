#include "flowi2i/tape.hpp"

#include <cmath>

#include "flowi2i/errors.hpp"

namespace flowi2i {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)

}  // namespace

Var Tape::push(Matrix value, std::function<void()> back, std::vector<Matrix> saved) {
  Node n;
  n.value = std::move(value);
  if (track_) {
    n.backward = std::move(back);
    n.saved = std::move(saved);
  }
  nodes_.push_back(std::move(n));
  return Var(next_id() - 1);
}

Matrix& Tape::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = val(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

Var Tape::input(Matrix value) { return push(std::move(value)); }

Var Tape::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(it->second);
  Node n;
  n.external = &p.value;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = next_id() - 1;
  param_ids_.emplace(&p, id);
  return Var(id);
}

const Matrix& Tape::value(Var v) const { return val(v.id()); }

const Matrix& Tape::grad(Var v) const {
  static const Matrix empty;
  const Node& n = nodes_[v.id()];
  return n.grad.size() ? n.grad : empty;
}

Var Tape::matmul(Var a, Var b) {
  require(val(a.id()).cols() == val(b.id()).rows(), "matmul: inner dimensions differ");
  Matrix out = val(a.id()) * val(b.id());
  const int o = next_id();
  return push(std::move(out), [this, a, b, o] {
    const Matrix& g = nodes_[o].grad;
    accumulate(a.id(), g * val(b.id()).transpose());
    accumulate(b.id(), val(a.id()).transpose() * g);
  });
}

Var Tape::linear(Var x, Var weight, Var bias) {
  const Matrix& xv = val(x.id());
  const Matrix& w = val(weight.id());
  const Matrix& b = val(bias.id());
  require(xv.cols() == w.rows(), "linear: input width does not match weight rows");
  require(b.rows() == 1 && b.cols() == w.cols(), "linear: bias must be 1 x out");
  Matrix out(xv.rows(), w.cols());
  out.noalias() = xv * w;
  out.rowwise() += b.row(0);
  const int o = next_id();
  return push(std::move(out), [this, x, weight, bias, o] {
    const Matrix& g = nodes_[o].grad;
    accumulate(x.id(), g * val(weight.id()).transpose());
    accumulate(weight.id(), val(x.id()).transpose() * g);
    accumulate(bias.id(), g.colwise().sum());
  });
}

Var Tape::add(Var a, Var b) {
  require(val(a.id()).rows() == val(b.id()).rows() && val(a.id()).cols() == val(b.id()).cols(),
          "add: shape mismatch");
  Matrix out = val(a.id()) + val(b.id());
  const int o = next_id();
  return push(std::move(out), [this, a, b, o] {
    const Matrix& g = nodes_[o].grad;
    accumulate(a.id(), g);
    accumulate(b.id(), g);
  });
}

Var Tape::add_broadcast(Var x, Var row) {
  const Matrix& r = val(row.id());
  require(r.rows() == 1 && r.cols() == val(x.id()).cols(), "add_broadcast: row shape mismatch");
  Matrix out = val(x.id());
  out.rowwise() += r.row(0);
  const int o = next_id();
  return push(std::move(out), [this, x, row, o] {
    const Matrix& g = nodes_[o].grad;
    accumulate(x.id(), g);
    accumulate(row.id(), g.colwise().sum());
  });
}

Var Tape::modulate(Var x, Var shift, Var scale) {
  const Matrix& xv = val(x.id());
  const Matrix& sh = val(shift.id());
  const Matrix& sc = val(scale.id());
  require(sh.rows() == 1 && sc.rows() == 1 && sh.cols() == xv.cols() && sc.cols() == xv.cols(),
          "modulate: shift/scale must be 1 x D");
  Matrix out = xv;
  const Eigen::RowVectorXf factor = (sc.row(0).array() + 1.0f).matrix();
  out.array().rowwise() *= factor.array();
  out.rowwise() += sh.row(0);
  const int o = next_id();
  return push(std::move(out), [this, x, shift, scale, o] {
    const Matrix& g = nodes_[o].grad;
    const Matrix& xv = val(x.id());
    const Eigen::RowVectorXf factor = (val(scale.id()).row(0).array() + 1.0f).matrix();
    Matrix gx = g;
    gx.array().rowwise() *= factor.array();
    accumulate(x.id(), gx);
    accumulate(scale.id(), (g.array() * xv.array()).matrix().colwise().sum());
    accumulate(shift.id(), g.colwise().sum());
  });
}

Var Tape::gated_residual(Var h, Var gate, Var y) {
  const Matrix& hv = val(h.id());
  const Matrix& gv = val(gate.id());
  const Matrix& yv = val(y.id());
  require(hv.rows() == yv.rows() && hv.cols() == yv.cols(), "gated_residual: shape mismatch");
  require(gv.rows() == 1 && gv.cols() == hv.cols(), "gated_residual: gate must be 1 x D");
  Matrix out = yv;
  out.array().rowwise() *= gv.row(0).array();
  out += hv;
  const int o = next_id();
  return push(std::move(out), [this, h, gate, y, o] {
    const Matrix& g = nodes_[o].grad;
    accumulate(h.id(), g);
    Matrix gy = g;
    gy.array().rowwise() *= val(gate.id()).row(0).array();
    accumulate(y.id(), gy);
    accumulate(gate.id(), (g.array() * val(y.id()).array()).matrix().colwise().sum());
  });
}

Var Tape::columns(Var x, int start, int count) {
  const Matrix& xv = val(x.id());
  require(start >= 0 && count > 0 && start + count <= xv.cols(), "columns: slice out of range");
  Matrix out = xv.middleCols(start, count);
  const int o = next_id();
  return push(std::move(out), [this, x, start, count, o] {
    grad_of(x.id()).middleCols(start, count) += nodes_[o].grad;
  });
}

Var Tape::layer_norm(Var x, float eps) {
  const Matrix& xv = val(x.id());
  const auto d = static_cast<float>(xv.cols());
  Matrix normed(xv.rows(), xv.cols());
  Matrix rstd(xv.rows(), 1);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const float mean = xv.row(r).sum() / d;
    const auto centered = (xv.row(r).array() - mean);
    const float var = centered.square().sum() / d;
    const float inv = 1.0f / std::sqrt(var + eps);
    normed.row(r) = (centered * inv).matrix();
    rstd(r, 0) = inv;
  }
  const int o = next_id();
  std::vector<Matrix> saved;
  if (track_) saved = {normed, rstd};
  return push(std::move(normed), [this, x, o] {
    const Matrix& g = nodes_[o].grad;
    const Matrix& xhat = nodes_[o].saved[0];
    const Matrix& rstd = nodes_[o].saved[1];
    Matrix& gx = grad_of(x.id());
    const auto d = static_cast<float>(g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const float mean_g = g.row(r).sum() / d;
      const float mean_gx = g.row(r).dot(xhat.row(r)) / d;
      gx.row(r).array() += rstd(r, 0) * (g.row(r).array() - mean_g - xhat.row(r).array() * mean_gx);
    }
  }, std::move(saved));
}

Var Tape::gelu(Var x) {
  const Matrix& xv = val(x.id());
  const auto v = xv.array();
  Matrix th = (kGeluC * (v + 0.044715f * v.cube())).tanh().matrix();
  Matrix out = (0.5f * v * (1.0f + th.array())).matrix();
  const int o = next_id();
  std::vector<Matrix> saved;
  if (track_) saved.push_back(std::move(th));
  return push(std::move(out), [this, x, o] {
    const auto g = nodes_[o].grad.array();
    const auto t = nodes_[o].saved[0].array();
    const auto v = val(x.id()).array();
    const auto du = kGeluC * (1.0f + 3.0f * 0.044715f * v.square());
    accumulate(x.id(), (g * (0.5f * (1.0f + t) + 0.5f * v * (1.0f - t.square()) * du)).matrix());
  }, std::move(saved));
}

Var Tape::silu(Var x) {
  const Matrix& xv = val(x.id());
  Matrix out = xv.unaryExpr([](float v) { return v / (1.0f + std::exp(-v)); });
  const int o = next_id();
  return push(std::move(out), [this, x, o] {
    const Matrix& g = nodes_[o].grad;
    const Matrix d = val(x.id()).unaryExpr([](float v) {
      const float s = 1.0f / (1.0f + std::exp(-v));
      return s * (1.0f + v * (1.0f - s));
    });
    grad_of(x.id()).array() += g.array() * d.array();
  });
}

Var Tape::tanh(Var x) {
  Matrix out = val(x.id()).array().tanh().matrix();
  const int o = next_id();
  return push(std::move(out), [this, x, o] {
    const Matrix& y = nodes_[o].value;
    grad_of(x.id()).array() += nodes_[o].grad.array() * (1.0f - y.array().square());
  });
}

Var Tape::attention(Var q, Var k, Var v, int heads) {
  const Matrix& qv = val(q.id());
  const Matrix& kv = val(k.id());
  const Matrix& vv = val(v.id());
  require(qv.cols() == kv.cols() && kv.cols() == vv.cols() && kv.rows() == vv.rows(),
          "attention: q/k/v shape mismatch");
  require(heads > 0 && qv.cols() % heads == 0, "attention: heads must divide width");
  const int dh = static_cast<int>(qv.cols()) / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  Matrix out(qv.rows(), qv.cols());
  std::vector<Matrix> probs;
  if (track_) probs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Matrix s(qv.rows(), kv.rows());
    s.noalias() = (qv.middleCols(h * dh, dh) * scale) * kv.middleCols(h * dh, dh).transpose();
    const Eigen::VectorXf row_max = s.rowwise().maxCoeff();
    s.colwise() -= row_max;
    s = s.array().exp().matrix();
    const Eigen::VectorXf inv_sum = s.rowwise().sum().cwiseInverse();
    s.array().colwise() *= inv_sum.array();
    out.middleCols(h * dh, dh).noalias() = s * vv.middleCols(h * dh, dh);
    if (track_) probs.push_back(std::move(s));
  }
  const int o = next_id();
  return push(std::move(out), [this, q, k, v, heads, dh, scale, o] {
    const Matrix& g = nodes_[o].grad;
    const auto& probs = nodes_[o].saved;
    Matrix& gq = grad_of(q.id());
    Matrix& gk = grad_of(k.id());
    Matrix& gv = grad_of(v.id());
    const Matrix& qv = val(q.id());
    const Matrix& kv = val(k.id());
    const Matrix& vv = val(v.id());
    Matrix dp(qv.rows(), kv.rows());
    for (int h = 0; h < heads; ++h) {
      const Matrix& p = probs[h];
      const auto gh = g.middleCols(h * dh, dh);
      gv.middleCols(h * dh, dh).noalias() += p.transpose() * gh;
      dp.noalias() = gh * vv.middleCols(h * dh, dh).transpose();
      const Eigen::VectorXf rowdot = (dp.array() * p.array()).rowwise().sum();
      dp.colwise() -= rowdot;
      dp.array() *= p.array() * scale;
      gq.middleCols(h * dh, dh).noalias() += dp * kv.middleCols(h * dh, dh);
      gk.middleCols(h * dh, dh).noalias() += dp.transpose() * qv.middleCols(h * dh, dh);
    }
  }, std::move(probs));
}

Var Tape::mse(Var prediction, Var target) {
  const Matrix& p = val(prediction.id());
  const Matrix& t = val(target.id());
  require(p.rows() == t.rows() && p.cols() == t.cols(), "mse: shape mismatch");
  Matrix out(1, 1);
  out(0, 0) = (p - t).squaredNorm() / static_cast<float>(p.size());
  const int o = next_id();
  return push(std::move(out), [this, prediction, target, o] {
    const float g = nodes_[o].grad(0, 0);
    const Matrix diff = val(prediction.id()) - val(target.id());
    const float k = 2.0f * g / static_cast<float>(diff.size());
    accumulate(prediction.id(), k * diff);
    accumulate(target.id(), -(k * diff));
  });
}

void Tape::backward(Var root, float seed) {
  if (!track_) throw Error("backward on a non-tracking tape");
  grad_of(root.id()).setConstant(seed);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward();
  }
  for (Node& n : nodes_) {
    if (n.param && n.grad.size() > 0) n.param->grad += n.grad;
  }
}

}  // namespace flowi2i
