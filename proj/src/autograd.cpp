#include "semhpo/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semhpo/error.hpp"

namespace semhpo::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InputError(what);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var Graph::push(Matrix value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::constant(Matrix value) { return push(std::move(value), false); }

Var Graph::parameter(const Matrix& value, Matrix* grad) {
  if (auto it = bound_.find(&value); it != bound_.end()) return Var{it->second};
  Node n;
  n.external = &value;
  n.external_grad = grad;
  n.needs_grad = grad != nullptr;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  bound_.emplace(&value, id);
  return Var{id};
}

const Matrix& Graph::value(Var v) const {
  const auto& n = nodes_.at(static_cast<std::size_t>(v.id));
  return n.external ? *n.external : n.value;
}

Matrix& Graph::grad_buffer(Var v) {
  auto& n = node(v);
  if (n.grad.size() == 0) n.grad = Matrix::Zero(value(v).rows(), value(v).cols());
  return n.grad;
}

Var Graph::matmul(Var a, Var b) {
  require(cols(a) == rows(b), "matmul: inner dimensions differ");
  Matrix out = value(a) * value(b);
  const bool ng = needs(a) || needs(b);
  const Var r = push(std::move(out), ng);
  if (ng) {
    node(r).backward = [this, a, b, r] {
      const auto& g = grad_of(r.id);
      if (needs(a)) accumulate(a, g * value(b).transpose());
      if (needs(b)) accumulate(b, value(a).transpose() * g);
    };
  }
  return r;
}

Var Graph::matmul_nt(Var a, Var b) {
  require(cols(a) == cols(b), "matmul_nt: inner dimensions differ");
  Matrix out = value(a) * value(b).transpose();
  const bool ng = needs(a) || needs(b);
  const Var r = push(std::move(out), ng);
  if (ng) {
    node(r).backward = [this, a, b, r] {
      const auto& g = grad_of(r.id);
      if (needs(a)) accumulate(a, g * value(b));
      if (needs(b)) accumulate(b, g.transpose() * value(a));
    };
  }
  return r;
}

Var Graph::add(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "add: shape mismatch");
  Matrix out = value(a) + value(b);
  const bool ng = needs(a) || needs(b);
  const Var r = push(std::move(out), ng);
  if (ng) {
    node(r).backward = [this, a, b, r] {
      const auto& g = grad_of(r.id);
      accumulate(a, g);
      accumulate(b, g);
    };
  }
  return r;
}

Var Graph::add_row(Var a, Var row) {
  require(rows(row) == 1 && cols(row) == cols(a), "add_row: bias shape mismatch");
  Matrix out = value(a).rowwise() + value(row).row(0);
  const bool ng = needs(a) || needs(row);
  const Var r = push(std::move(out), ng);
  if (ng) {
    node(r).backward = [this, a, row, r] {
      const auto& g = grad_of(r.id);
      accumulate(a, g);
      if (needs(row)) accumulate(row, g.colwise().sum());
    };
  }
  return r;
}

Var Graph::mul(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "mul: shape mismatch");
  Matrix out = value(a).cwiseProduct(value(b));
  const bool ng = needs(a) || needs(b);
  const Var r = push(std::move(out), ng);
  if (ng) {
    node(r).backward = [this, a, b, r] {
      const auto& g = grad_of(r.id);
      if (needs(a)) accumulate(a, g.cwiseProduct(value(b)));
      if (needs(b)) accumulate(b, g.cwiseProduct(value(a)));
    };
  }
  return r;
}

Var Graph::scale(Var a, double s) {
  Matrix out = value(a) * s;
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r, s] { accumulate(a, grad_of(r.id) * s); };
  }
  return r;
}

Var Graph::one_minus(Var a) {
  Matrix out = (1.0 - value(a).array()).matrix();
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r] { accumulate(a, -grad_of(r.id)); };
  }
  return r;
}

Var Graph::sigmoid(Var a) {
  Matrix out = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r] {
      const auto& y = value(r).array();
      accumulate(a, (grad_of(r.id).array() * y * (1.0 - y)).matrix());
    };
  }
  return r;
}

Var Graph::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0);
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r] {
      accumulate(a, (grad_of(r.id).array() * (value(a).array() > 0.0).cast<double>()).matrix());
    };
  }
  return r;
}

Var Graph::gelu(Var a) {
  const auto& x = value(a).array();
  Matrix out = (0.5 * x * (1.0 + (kGeluC * (x + kGeluA * x.cube())).tanh())).matrix();
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r] {
      const auto& x = value(a).array();
      const auto t = (kGeluC * (x + kGeluA * x.cube())).tanh().eval();
      const auto d = (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * kGeluC * (1.0 + 3.0 * kGeluA * x.square())).eval();
      accumulate(a, (grad_of(r.id).array() * d).matrix());
    };
  }
  return r;
}

Var Graph::softmax_rows(Var a, bool causal) {
  const auto& x = value(a);
  if (causal) require(x.rows() <= x.cols(), "softmax_rows: causal mask needs rows <= cols");
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index n = causal ? i + 1 : x.cols();
    const double m = x.row(i).head(n).maxCoeff();
    out.row(i).head(n) = (x.row(i).head(n).array() - m).exp().matrix();
    out.row(i).head(n) /= out.row(i).head(n).sum();
  }
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r] {
      const auto& y = value(r);
      const auto& g = grad_of(r.id);
      const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
      accumulate(a, (y.array() * (g.colwise() - dots).array()).matrix());
    };
  }
  return r;
}

Var Graph::log_softmax_rows(Var a) {
  const auto& x = value(a);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r] {
      const auto& g = grad_of(r.id);
      const Matrix p = value(r).array().exp().matrix();
      const Eigen::VectorXd gs = g.rowwise().sum();
      accumulate(a, g - (p.array().colwise() * gs.array()).matrix());
    };
  }
  return r;
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const auto& xv = value(x);
  require(rows(gamma) == 1 && cols(gamma) == xv.cols() && rows(beta) == 1 && cols(beta) == xv.cols(),
          "layer_norm: parameter shape mismatch");
  const auto n = static_cast<double>(xv.cols());
  const Eigen::VectorXd mean = xv.rowwise().mean();
  Matrix centred = xv.colwise() - mean;
  const Eigen::VectorXd inv_std = (centred.array().square().rowwise().sum() / n + eps).rsqrt().matrix();
  Matrix xhat = (centred.array().colwise() * inv_std.array()).matrix();
  Matrix out = (xhat.array().rowwise() * value(gamma).row(0).array()).matrix();
  out.rowwise() += value(beta).row(0);
  const bool ng = needs(x) || needs(gamma) || needs(beta);
  const Var r = push(std::move(out), ng);
  if (ng) {
    node(r).backward = [this, x, gamma, beta, r, xhat = std::move(xhat), inv_std, n] {
      const auto& g = grad_of(r.id);
      if (needs(gamma)) accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
      if (needs(beta)) accumulate(beta, g.colwise().sum());
      if (needs(x)) {
        const Matrix dxhat = (g.array().rowwise() * value(gamma).row(0).array()).matrix();
        const Eigen::VectorXd s1 = dxhat.rowwise().sum();
        const Eigen::VectorXd s2 = dxhat.cwiseProduct(xhat).rowwise().sum();
        Matrix dx = (n * dxhat.array()).matrix();
        dx.colwise() -= s1;
        dx -= (xhat.array().colwise() * s2.array()).matrix();
        dx = (dx.array().colwise() * (inv_std.array() / n)).matrix();
        accumulate(x, dx);
      }
    };
  }
  return r;
}

Var Graph::gather_rows(Var table, std::span<const int> ids) {
  const auto& t = value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < t.rows(), "gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  const Var r = push(std::move(out), needs(table));
  if (needs(table)) {
    node(r).backward = [this, table, r, ids = std::vector<int>(ids.begin(), ids.end())] {
      const auto& g = grad_of(r.id);
      auto& tg = grad_buffer(table);
      for (std::size_t i = 0; i < ids.size(); ++i) tg.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    };
  }
  return r;
}

Var Graph::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= cols(a), "slice_cols: out of range");
  Matrix out = value(a).middleCols(start, count);
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r, start, count] { grad_buffer(a).middleCols(start, count) += grad_of(r.id); };
  }
  return r;
}

Var Graph::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= rows(a), "slice_rows: out of range");
  Matrix out = value(a).middleRows(start, count);
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r, start, count] { grad_buffer(a).middleRows(start, count) += grad_of(r.id); };
  }
  return r;
}

Var Graph::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const auto n = rows(parts[0]);
  Eigen::Index total = 0;
  bool ng = false;
  for (auto p : parts) {
    require(rows(p) == n, "concat_cols: row mismatch");
    total += cols(p);
    ng = ng || needs(p);
  }
  Matrix out(n, total);
  Eigen::Index off = 0;
  for (auto p : parts) {
    out.middleCols(off, cols(p)) = value(p);
    off += cols(p);
  }
  const Var r = push(std::move(out), ng);
  if (ng) {
    node(r).backward = [this, r, parts = std::vector<Var>(parts.begin(), parts.end())] {
      const auto& g = grad_of(r.id);
      Eigen::Index off = 0;
      for (auto p : parts) {
        const auto c = cols(p);
        accumulate(p, g.middleCols(off, c));
        off += c;
      }
    };
  }
  return r;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const auto n = cols(parts[0]);
  Eigen::Index total = 0;
  bool ng = false;
  for (auto p : parts) {
    require(cols(p) == n, "concat_rows: column mismatch");
    total += rows(p);
    ng = ng || needs(p);
  }
  Matrix out(total, n);
  Eigen::Index off = 0;
  for (auto p : parts) {
    out.middleRows(off, rows(p)) = value(p);
    off += rows(p);
  }
  const Var r = push(std::move(out), ng);
  if (ng) {
    node(r).backward = [this, r, parts = std::vector<Var>(parts.begin(), parts.end())] {
      const auto& g = grad_of(r.id);
      Eigen::Index off = 0;
      for (auto p : parts) {
        const auto c = rows(p);
        accumulate(p, g.middleRows(off, c));
        off += c;
      }
    };
  }
  return r;
}

Var Graph::reshape(Var a, Eigen::Index r_rows, Eigen::Index r_cols) {
  const auto& x = value(a);
  require(r_rows * r_cols == x.size(), "reshape: size mismatch");
  Matrix out = Eigen::Map<const Matrix>(x.data(), r_rows, r_cols);
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r] {
      const auto& g = grad_of(r.id);
      accumulate(a, Eigen::Map<const Matrix>(g.data(), rows(a), cols(a)));
    };
  }
  return r;
}

Var Graph::mean_rows(Var a) {
  const auto n = rows(a);
  require(n > 0, "mean_rows: empty input");
  Matrix out = value(a).colwise().mean();
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r, n] {
      const RowVector g = grad_of(r.id).row(0) / static_cast<double>(n);
      accumulate(a, g.replicate(n, 1));
    };
  }
  return r;
}

Var Graph::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r] {
      accumulate(a, Matrix::Constant(rows(a), cols(a), grad_of(r.id)(0, 0)));
    };
  }
  return r;
}

Var Graph::weighted_sum(Var a, const Matrix& weights) {
  require(weights.rows() == rows(a) && weights.cols() == cols(a), "weighted_sum: shape mismatch");
  Matrix out(1, 1);
  out(0, 0) = value(a).cwiseProduct(weights).sum();
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r, weights] { accumulate(a, weights * grad_of(r.id)(0, 0)); };
  }
  return r;
}

Var Graph::log_clamped(Var a, double eps) {
  const double lo = eps, hi = 1.0 - eps;
  Matrix out = value(a).cwiseMax(lo).cwiseMin(hi).array().log().matrix();
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r, lo, hi] {
      const auto& x = value(a).array();
      const auto inside = ((x > lo) && (x < hi)).cast<double>();
      accumulate(a, (grad_of(r.id).array() * inside / x.max(lo)).matrix());
    };
  }
  return r;
}

Var Graph::pick(Var a, std::span<const int> cols_idx) {
  const auto& x = value(a);
  require(static_cast<Eigen::Index>(cols_idx.size()) == x.rows(), "pick: one index per row required");
  Matrix out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int c = cols_idx[static_cast<std::size_t>(i)];
    require(c >= 0 && c < x.cols(), "pick: column out of range");
    out(i, 0) = x(i, c);
  }
  const Var r = push(std::move(out), needs(a));
  if (needs(a)) {
    node(r).backward = [this, a, r, idx = std::vector<int>(cols_idx.begin(), cols_idx.end())] {
      const auto& g = grad_of(r.id);
      auto& ga = grad_buffer(a);
      for (std::size_t i = 0; i < idx.size(); ++i) ga(static_cast<Eigen::Index>(i), idx[i]) += g(static_cast<Eigen::Index>(i), 0);
    };
  }
  return r;
}

Var Graph::cross_entropy(Var logits, std::span<const int> targets) {
  const auto& x = value(logits);
  require(static_cast<Eigen::Index>(targets.size()) == x.rows() && x.rows() > 0,
          "cross_entropy: one target per row required");
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    require(t >= 0 && t < x.cols(), "cross_entropy: target out of range");
    const double m = x.row(i).maxCoeff();
    probs.row(i) = (x.row(i).array() - m).exp().matrix();
    const double z = probs.row(i).sum();
    probs.row(i) /= z;
    total += m + std::log(z) - x(i, t);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(x.rows());
  const Var r = push(std::move(out), needs(logits));
  if (needs(logits)) {
    node(r).backward = [this, logits, r, probs = std::move(probs),
                        tgt = std::vector<int>(targets.begin(), targets.end())]() mutable {
      const double g = grad_of(r.id)(0, 0) / static_cast<double>(probs.rows());
      Matrix d = probs;
      for (std::size_t i = 0; i < tgt.size(); ++i) d(static_cast<Eigen::Index>(i), tgt[i]) -= 1.0;
      accumulate(logits, d * g);
    };
  }
  return r;
}

Var Graph::im2col(Var x, Eigen::Index batch, Eigen::Index length, Eigen::Index width) {
  const auto& xv = value(x);
  require(xv.rows() == batch * length && width >= 1, "im2col: shape mismatch");
  const auto ch = xv.cols();
  const Eigen::Index left = (width - 1) / 2;
  Matrix out = Matrix::Zero(batch * length, width * ch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index t = 0; t < length; ++t) {
      for (Eigen::Index k = 0; k < width; ++k) {
        const auto src = t + k - left;
        if (src < 0 || src >= length) continue;
        out.block(b * length + t, k * ch, 1, ch) = xv.row(b * length + src);
      }
    }
  }
  const Var r = push(std::move(out), needs(x));
  if (needs(x)) {
    node(r).backward = [this, x, r, batch, length, width, ch, left] {
      const auto& g = grad_of(r.id);
      auto& gx = grad_buffer(x);
      for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index t = 0; t < length; ++t) {
          for (Eigen::Index k = 0; k < width; ++k) {
            const auto src = t + k - left;
            if (src < 0 || src >= length) continue;
            gx.row(b * length + src) += g.block(b * length + t, k * ch, 1, ch);
          }
        }
      }
    };
  }
  return r;
}

Var Graph::max_pool2(Var x, Eigen::Index batch, Eigen::Index length) {
  const auto& xv = value(x);
  require(xv.rows() == batch * length, "max_pool2: shape mismatch");
  const auto half = length / 2;
  require(half >= 1, "max_pool2: signal shorter than two");
  const auto ch = xv.cols();
  Matrix out(batch * half, ch);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(batch * half * ch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index t = 0; t < half; ++t) {
      for (Eigen::Index c = 0; c < ch; ++c) {
        const auto r0 = b * length + 2 * t;
        const auto pick = xv(r0 + 1, c) > xv(r0, c) ? r0 + 1 : r0;
        out(b * half + t, c) = xv(pick, c);
        arg[static_cast<std::size_t>((b * half + t) * ch + c)] = pick;
      }
    }
  }
  const Var r = push(std::move(out), needs(x));
  if (needs(x)) {
    node(r).backward = [this, x, r, arg = std::move(arg), ch] {
      const auto& g = grad_of(r.id);
      auto& gx = grad_buffer(x);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index c = 0; c < ch; ++c) gx(arg[static_cast<std::size_t>(i * ch + c)], c) += g(i, c);
      }
    };
  }
  return r;
}

void Graph::backward(Var loss) {
  require(rows(loss) == 1 && cols(loss) == 1, "backward: loss must be 1 x 1");
  if (!needs(loss)) return;
  node(loss).grad = Matrix::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward();
  }
  for (auto& n : nodes_) {
    if (n.external_grad && n.grad.size() != 0) *n.external_grad += n.grad;
  }
}

}  // namespace semhpo::nn
