#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace flowi2i {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A named trainable array with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Var {
 public:
  Var() = default;
  bool valid() const noexcept { return id_ >= 0; }
  int id() const noexcept { return id_; }

 private:
  friend class Tape;
  explicit Var(int id) : id_(id) {}
  int id_ = -1;
};

// Reverse-mode tape over row-major float matrices. Rows are tokens, columns
// are features; row-vector operands broadcast across rows where noted.
// With tracking off the tape only evaluates (no closures, no saved state).
class Tape {
 public:
  explicit Tape(bool track = true) : track_(track) {}

  bool tracking() const noexcept { return track_; }

  Var input(Matrix value);
  /// The same Parameter always maps to the same node within one tape.
  Var param(Parameter& p);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;

  Var matmul(Var a, Var b);
  Var linear(Var x, Var weight, Var bias);  // x * W + 1 * b
  Var add(Var a, Var b);
  Var add_broadcast(Var x, Var row);
  Var modulate(Var x, Var shift, Var scale);    // x .* (1 + scale) + shift
  Var gated_residual(Var h, Var gate, Var y);   // h + y .* gate
  Var columns(Var x, int start, int count);
  Var layer_norm(Var x, float eps = 1e-6f);
  Var gelu(Var x);
  Var silu(Var x);
  Var tanh(Var x);
  /// Multi-head softmax attention; q is T x D, k and v are S x D.
  Var attention(Var q, Var k, Var v, int heads);
  /// Mean squared difference, as a 1 x 1 node.
  Var mse(Var prediction, Var target);

  /// Seeds d(root)/d(root) = seed and propagates; parameter gradients are
  /// accumulated into Parameter::grad.
  void backward(Var root, float seed = 1.0f);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    std::vector<Matrix> saved;
    std::function<void()> backward;
  };

  const Matrix& val(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  Matrix& grad_of(int id);
  // First contribution assigns; later ones add. Avoids zero-filling.
  template <typename Expr>
  void accumulate(int id, const Expr& e) {
    Matrix& g = nodes_[id].grad;
    if (g.size() == 0) {
      g.noalias() = e;
    } else {
      g.noalias() += e;
    }
  }
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }
  int next_id() const { return static_cast<int>(nodes_.size()); }
  Var push(Matrix value, std::function<void()> back = {}, std::vector<Matrix> saved = {});

  bool track_;
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, int> param_ids_;
};

}  // namespace flowi2i
