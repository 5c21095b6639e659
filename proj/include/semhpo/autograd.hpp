#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace semhpo::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Handle to a node of a Graph.
struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

/// Tape-based reverse-mode differentiation over dense row-major matrices.
///
/// Nodes are appended in evaluation order, so walking the tape backwards is
/// a valid topological order. Parameters are bound by pointer: their values
/// are never copied into the tape, and backward() adds their gradients into
/// the caller-owned buffer given to parameter(). Ops whose inputs need no
/// gradient record no closure, which keeps inference graphs cheap.
class Graph {
public:
  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to external storage. grad may be null for frozen values.
  /// Binding the same value twice returns the same node.
  Var parameter(const Matrix& value, Matrix* grad);

  const Matrix& value(Var v) const;
  double scalar(Var v) const { return value(v)(0, 0); }
  Eigen::Index rows(Var v) const { return value(v).rows(); }
  Eigen::Index cols(Var v) const { return value(v).cols(); }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  /// a + broadcast of the 1 x n row over every row of a.
  Var add_row(Var a, Var row);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  /// 1 - a
  Var one_minus(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  /// tanh approximation of GELU
  Var gelu(Var a);
  /// Row-wise softmax; with causal set, entry (i, k) for k > i is masked.
  Var softmax_rows(Var a, bool causal = false);
  /// Row-wise log-softmax.
  Var log_softmax_rows(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  /// Rows of table selected by ids.
  Var gather_rows(Var table, std::span<const int> ids);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  /// Row-major reinterpretation to rows x cols.
  Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
  /// 1 x n mean over rows.
  Var mean_rows(Var a);
  /// 1 x 1 sum of all entries.
  Var sum(Var a);
  /// 1 x 1 sum of a .* weights (weights constant).
  Var weighted_sum(Var a, const Matrix& weights);
  /// log(clamp(a, eps, 1 - eps)); zero gradient where clamped.
  Var log_clamped(Var a, double eps);
  /// n x 1 column of a(i, cols[i]).
  Var pick(Var a, std::span<const int> cols);
  /// 1 x 1 mean over rows of -log softmax(logits)(i, targets[i]).
  Var cross_entropy(Var logits, std::span<const int> targets);

  /// x holds `batch` signals of `length` rows each (batch*length x channels).
  /// Returns the zero-padded ("same") patch matrix for a kernel of `width`
  /// taps: row (b, t) holds x rows t - (width-1)/2 .. t + width/2 of signal b.
  Var im2col(Var x, Eigen::Index batch, Eigen::Index length, Eigen::Index width);
  /// Window-2 stride-2 max pooling along each signal's rows.
  Var max_pool2(Var x, Eigen::Index batch, Eigen::Index length);

  /// Seeds d(loss)/d(loss) = 1 and runs the tape backwards, then adds leaf
  /// gradients into the buffers registered with parameter().
  void backward(Var loss);

private:
  struct Node {
    Matrix value;
    Matrix grad;
    const Matrix* external = nullptr;
    Matrix* external_grad = nullptr;
    std::function<void()> backward;
    bool needs_grad = false;
  };

  Var push(Matrix value, bool needs_grad);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Matrix& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  template <typename Expr>
  void accumulate(Var v, const Eigen::MatrixBase<Expr>& g) {
    auto& n = node(v);
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  /// Grad buffer of v, zero-initialised on first use.
  Matrix& grad_buffer(Var v);

  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, int> bound_;
};

}  // namespace semhpo::nn
