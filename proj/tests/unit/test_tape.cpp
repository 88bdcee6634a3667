#include <doctest.h>

#include <cmath>
#include <functional>

#include "flowi2i/errors.hpp"
#include "flowi2i/rng.hpp"
#include "flowi2i/tape.hpp"

using namespace flowi2i;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, float scale = 1.0f) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * static_cast<float>(standard_normal(rng));
  return m;
}

using Graph = std::function<Var(Tape&, std::vector<Var>&)>;

// Directional finite difference of the scalar graph output against the
// tape's gradient, one random direction per parameter.
void check_gradients(std::vector<Parameter>& params, const Graph& graph, double tol = 2e-2) {
  auto eval = [&] {
    Tape tape(false);
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(tape.param(p));
    return static_cast<double>(tape.value(graph(tape, vars))(0, 0));
  };
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(tape.param(p));
    tape.backward(graph(tape, vars));
  }
  Rng rng(99);
  for (auto& p : params) {
    const Matrix dir = random_matrix(static_cast<int>(p.value.rows()), static_cast<int>(p.value.cols()), rng);
    const double analytic = static_cast<double>((p.grad.array() * dir.array()).sum());
    const Matrix saved = p.value;
    const float h = 1e-2f;
    p.value = saved + h * dir;
    const double up = eval();
    p.value = saved - h * dir;
    const double down = eval();
    p.value = saved;
    const double numeric = (up - down) / (2.0 * h);
    INFO("parameter " << p.name << " analytic " << analytic << " numeric " << numeric);
    CHECK(std::fabs(analytic - numeric) <= tol * std::max(1.0, std::fabs(numeric)));
  }
}

Var sum_of_squares(Tape& t, Var x) {
  const Matrix& v = t.value(x);
  return t.mse(x, t.input(Matrix::Zero(v.rows(), v.cols())));
}

}  // namespace

TEST_CASE("linear, gelu and layer norm gradients") {
  Rng rng(1);
  std::vector<Parameter> ps;
  ps.emplace_back("x", random_matrix(5, 6, rng));
  ps.emplace_back("w", random_matrix(6, 4, rng, 0.5f));
  ps.emplace_back("b", random_matrix(1, 4, rng));
  check_gradients(ps, [](Tape& t, std::vector<Var>& v) {
    return sum_of_squares(t, t.gelu(t.layer_norm(t.linear(v[0], v[1], v[2]))));
  });
}

TEST_CASE("modulate, gated residual, columns and add gradients") {
  Rng rng(2);
  std::vector<Parameter> ps;
  ps.emplace_back("x", random_matrix(4, 6, rng));
  ps.emplace_back("mod", random_matrix(1, 9, rng, 0.5f));
  ps.emplace_back("y", random_matrix(4, 3, rng));
  check_gradients(ps, [](Tape& t, std::vector<Var>& v) {
    Var shift = t.columns(v[1], 0, 3);
    Var scale = t.columns(v[1], 3, 3);
    Var gate = t.columns(v[1], 6, 3);
    Var a = t.modulate(t.columns(v[0], 0, 3), shift, scale);
    Var b = t.gated_residual(t.columns(v[0], 3, 3), gate, v[2]);
    return sum_of_squares(t, t.tanh(t.add(a, b)));
  });
}

TEST_CASE("attention gradients") {
  Rng rng(3);
  std::vector<Parameter> ps;
  ps.emplace_back("q", random_matrix(5, 8, rng));
  ps.emplace_back("k", random_matrix(7, 8, rng));
  ps.emplace_back("v", random_matrix(7, 8, rng));
  check_gradients(ps, [](Tape& t, std::vector<Var>& v) { return sum_of_squares(t, t.attention(v[0], v[1], v[2], 2)); });
}

TEST_CASE("matmul, silu and broadcast gradients") {
  Rng rng(4);
  std::vector<Parameter> ps;
  ps.emplace_back("a", random_matrix(3, 5, rng));
  ps.emplace_back("b", random_matrix(5, 2, rng));
  ps.emplace_back("r", random_matrix(1, 2, rng));
  check_gradients(ps, [](Tape& t, std::vector<Var>& v) {
    return sum_of_squares(t, t.silu(t.add_broadcast(t.matmul(v[0], v[1]), v[2])));
  });
}

TEST_CASE("attention rows are convex combinations of values") {
  Tape t(false);
  Rng rng(5);
  Matrix q = random_matrix(3, 4, rng);
  Matrix k = random_matrix(6, 4, rng);
  Matrix v = Matrix::Constant(6, 4, 2.5f);
  Var out = t.attention(t.input(q), t.input(k), t.input(v), 2);
  CHECK((t.value(out).array() - 2.5f).abs().maxCoeff() <= 1e-6f);
}

TEST_CASE("shared parameter nodes accumulate gradients from every use") {
  Parameter p("p", Matrix::Constant(1, 1, 3.0f));
  Tape t;
  Var a = t.param(p);
  Var b = t.param(p);
  CHECK(a.id() == b.id());
  Var s = t.add(a, b);  // 2p
  t.backward(t.mse(s, t.input(Matrix::Zero(1, 1))));  // (2p)^2
  CHECK(p.grad(0, 0) == doctest::Approx(8.0f * 3.0f));
}

TEST_CASE("shape mismatches are rejected") {
  Tape t;
  Var a = t.input(Matrix::Zero(2, 3));
  Var b = t.input(Matrix::Zero(2, 4));
  CHECK_THROWS_AS(t.add(a, b), ShapeError);
  CHECK_THROWS_AS(t.matmul(a, a), ShapeError);
  CHECK_THROWS_AS(t.columns(a, 2, 2), ShapeError);
  CHECK_THROWS_AS(t.attention(a, a, a, 2), ShapeError);
}
