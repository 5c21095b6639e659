#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "semhpo/autograd.hpp"
#include "semhpo/error.hpp"

using semhpo::nn::Graph;
using semhpo::nn::Matrix;
using semhpo::nn::Var;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

using Builder = std::function<Var(Graph&, std::vector<Var>&)>;

// Compares backward() against central differences for every input entry.
void check_gradients(std::vector<Matrix> inputs, const Builder& build, double tol = 1e-6) {
  std::vector<Matrix> grads;
  for (const auto& m : inputs) grads.push_back(Matrix::Zero(m.rows(), m.cols()));
  {
    Graph g;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.parameter(inputs[i], &grads[i]));
    g.backward(build(g, vars));
  }
  auto eval = [&] {
    Graph g;
    std::vector<Var> vars;
    for (auto& m : inputs) vars.push_back(g.parameter(m, nullptr));
    return g.scalar(build(g, vars));
  };
  const double h = 1e-6;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      double& x = inputs[i].data()[k];
      const double saved = x;
      x = saved + h;
      const double up = eval();
      x = saved - h;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads[i].data()[k];
      EXPECT_NEAR(analytic, numeric, tol * std::max(1.0, std::abs(numeric))) << "input " << i << " entry " << k;
    }
  }
}

// Reduces any matrix to a scalar with fixed random weights so every entry
// of the gradient is exercised.
Var reduce(Graph& g, Var v, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return g.weighted_sum(v, random_matrix(g.rows(v), g.cols(v), rng));
}

}  // namespace

TEST(Autograd, MatmulAndTransposedMatmul) {
  std::mt19937_64 rng(1);
  check_gradients({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
                  [](Graph& g, std::vector<Var>& v) { return reduce(g, g.matmul(v[0], v[1])); });
  check_gradients({random_matrix(3, 4, rng), random_matrix(5, 4, rng)},
                  [](Graph& g, std::vector<Var>& v) { return reduce(g, g.matmul_nt(v[0], v[1])); });
}

TEST(Autograd, ElementwiseOps) {
  std::mt19937_64 rng(2);
  const auto a = random_matrix(3, 5, rng), b = random_matrix(3, 5, rng), row = random_matrix(1, 5, rng);
  check_gradients({a, b}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.add(v[0], v[1])); });
  check_gradients({a, row}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.add_row(v[0], v[1])); });
  check_gradients({a, b}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.mul(v[0], v[1])); });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.scale(v[0], -2.5)); });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.one_minus(v[0])); });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.sigmoid(v[0])); });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.gelu(v[0])); });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.relu(v[0])); });
}

TEST(Autograd, NormalisationAndSoftmax) {
  std::mt19937_64 rng(3);
  const auto x = random_matrix(4, 6, rng);
  check_gradients({x}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.softmax_rows(v[0])); });
  check_gradients({x}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.log_softmax_rows(v[0])); });
  check_gradients({random_matrix(5, 5, rng)},
                  [](Graph& g, std::vector<Var>& v) { return reduce(g, g.softmax_rows(v[0], true)); });
  check_gradients({x, random_matrix(1, 6, rng), random_matrix(1, 6, rng)}, [](Graph& g, std::vector<Var>& v) {
    return reduce(g, g.layer_norm(v[0], v[1], v[2]));
  });
}

TEST(Autograd, CausalSoftmaxMasksTheFuture) {
  Graph g;
  const Var p = g.softmax_rows(g.constant(Matrix::Zero(3, 3)), true);
  EXPECT_DOUBLE_EQ(g.value(p)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.value(p)(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(g.value(p)(2, 1), 1.0 / 3.0);
}

TEST(Autograd, ShapeOps) {
  std::mt19937_64 rng(4);
  const auto a = random_matrix(4, 6, rng), b = random_matrix(4, 2, rng), c = random_matrix(3, 6, rng);
  const std::vector<int> ids{2, 0, 2, 3};
  check_gradients({a}, [&](Graph& g, std::vector<Var>& v) { return reduce(g, g.gather_rows(v[0], ids)); });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.slice_cols(v[0], 1, 3)); });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.slice_rows(v[0], 1, 2)); });
  check_gradients({a, b}, [](Graph& g, std::vector<Var>& v) {
    const Var parts[] = {v[0], v[1]};
    return reduce(g, g.concat_cols(parts));
  });
  check_gradients({a, c}, [](Graph& g, std::vector<Var>& v) {
    const Var parts[] = {v[0], v[1]};
    return reduce(g, g.concat_rows(parts));
  });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.reshape(v[0], 3, 8)); });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.mean_rows(v[0])); });
  check_gradients({a}, [](Graph& g, std::vector<Var>& v) { return g.sum(v[0]); });
}

TEST(Autograd, LossOps) {
  std::mt19937_64 rng(5);
  Matrix probs = random_matrix(3, 4, rng).array().abs().matrix();
  probs = (probs.array() / (probs.array() + 1.0)).matrix();  // inside (0, 1)
  const std::vector<int> cols{1, 3, 0};
  check_gradients({probs}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.log_clamped(v[0], 1e-7)); });
  check_gradients({probs}, [&](Graph& g, std::vector<Var>& v) { return reduce(g, g.pick(v[0], cols)); });
  check_gradients({random_matrix(3, 5, rng)},
                  [&](Graph& g, std::vector<Var>& v) { return g.cross_entropy(v[0], cols); });
}

TEST(Autograd, ConvolutionHelpers) {
  std::mt19937_64 rng(6);
  // Two signals of length 6 with 2 channels.
  const auto x = random_matrix(12, 2, rng);
  for (int width : {1, 2, 3, 4}) {
    check_gradients({x}, [&](Graph& g, std::vector<Var>& v) { return reduce(g, g.im2col(v[0], 2, 6, width)); });
  }
  check_gradients({x}, [](Graph& g, std::vector<Var>& v) { return reduce(g, g.max_pool2(v[0], 2, 6)); });
}

TEST(Autograd, Im2colUsesSamePadding) {
  Graph g;
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  const Var p = g.im2col(g.constant(x), 1, 4, 3);
  Matrix expect(4, 3);
  expect << 0, 1, 2, 1, 2, 3, 2, 3, 4, 3, 4, 0;
  EXPECT_EQ(g.value(p), expect);
}

TEST(Autograd, SharedParameterAccumulates) {
  Matrix w(1, 1);
  w << 3.0;
  Matrix grad = Matrix::Zero(1, 1);
  Graph g;
  const Var a = g.parameter(w, &grad);
  const Var b = g.parameter(w, &grad);
  EXPECT_EQ(a.id, b.id);
  g.backward(g.sum(g.mul(a, b)));
  EXPECT_DOUBLE_EQ(grad(0, 0), 6.0);
}

TEST(Autograd, ShapeMismatchThrows) {
  Graph g;
  EXPECT_THROW(g.matmul(g.constant(Matrix::Zero(2, 3)), g.constant(Matrix::Zero(2, 3))), semhpo::InputError);
  EXPECT_THROW(g.backward(g.constant(Matrix::Zero(2, 2))), semhpo::InputError);
}
