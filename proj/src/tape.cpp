#include "advdrop/tape.hpp"

#include <algorithm>
#include <cmath>

namespace advdrop {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "elementwise-mul";
    case OpKind::scale: return "scale-by-constant";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh_fn: return "tanh";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::log_fn: return "log";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::square: return "square";
    case OpKind::broadcast_row: return "broadcast-row";
  }
  return "?";
}

static void require_same_shape(OpKind k, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    fail(std::string(op_name(k)) + ": shape mismatch " + a.shape_str() + " vs " +
         b.shape_str());
}

const TapeNode& TapeGraph::node(int id) const {
  if (id < 0 || id >= size()) fail("TapeGraph: node id out of range");
  return nodes_[static_cast<size_t>(id)];
}

TapeNode& TapeGraph::node(int id) {
  if (id < 0 || id >= size()) fail("TapeGraph: node id out of range");
  return nodes_[static_cast<size_t>(id)];
}

int TapeGraph::leaf(Tensor v) {
  TapeNode n;
  n.kind = OpKind::leaf;
  n.grad = Tensor::zeros(v.shape);
  n.value = std::move(v);
  nodes_.push_back(std::move(n));
  return size() - 1;
}

static Tensor matmul_values(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows())
    fail(std::string("matmul: shape mismatch ") + a.shape_str() + " vs " + b.shape_str());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    const double* arow = &a.values[static_cast<size_t>(i) * k];
    double* orow = &out.values[static_cast<size_t>(i) * n];
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &b.values[static_cast<size_t>(p) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

static void softmax_rows(const Tensor& in, Tensor& out, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* x = &in.values[static_cast<size_t>(r) * cols];
    double* y = &out.values[static_cast<size_t>(r) * cols];
    double mx = x[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      z += y[c];
    }
    for (int c = 0; c < cols; ++c) y[c] /= z;
  }
}

int TapeGraph::apply(OpKind kind, const std::vector<int>& parents, double aux) {
  for (int p : parents)
    if (p < 0 || p >= size()) fail(std::string(op_name(kind)) + ": parent id out of range");

  auto unary = [&]() -> const Tensor& { return node(parents[0]).value; };

  Tensor out;
  switch (kind) {
    case OpKind::leaf:
      fail("apply: use leaf() to insert leaves");
    case OpKind::matmul: {
      out = matmul_values(node(parents[0]).value, node(parents[1]).value);
      break;
    }
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
      const Tensor& a = node(parents[0]).value;
      const Tensor& b = node(parents[1]).value;
      require_same_shape(kind, a, b);
      out = Tensor(a.shape);
      const size_t n = a.values.size();
      if (kind == OpKind::add)
        for (size_t i = 0; i < n; ++i) out.values[i] = a.values[i] + b.values[i];
      else if (kind == OpKind::sub)
        for (size_t i = 0; i < n; ++i) out.values[i] = a.values[i] - b.values[i];
      else
        for (size_t i = 0; i < n; ++i) out.values[i] = a.values[i] * b.values[i];
      break;
    }
    case OpKind::scale: {
      const Tensor& a = unary();
      out = Tensor(a.shape);
      for (size_t i = 0; i < a.values.size(); ++i) out.values[i] = aux * a.values[i];
      break;
    }
    case OpKind::sigmoid: {
      const Tensor& a = unary();
      out = Tensor(a.shape);
      for (size_t i = 0; i < a.values.size(); ++i)
        out.values[i] = 1.0 / (1.0 + std::exp(-a.values[i]));
      break;
    }
    case OpKind::tanh_fn: {
      const Tensor& a = unary();
      out = Tensor(a.shape);
      for (size_t i = 0; i < a.values.size(); ++i) out.values[i] = std::tanh(a.values[i]);
      break;
    }
    case OpKind::relu: {
      const Tensor& a = unary();
      out = Tensor(a.shape);
      for (size_t i = 0; i < a.values.size(); ++i)
        out.values[i] = a.values[i] > 0.0 ? a.values[i] : 0.0;
      break;
    }
    case OpKind::softmax: {
      const Tensor& a = unary();
      if (a.ndim() > 2) fail("softmax: expects rank 1 or 2, got " + a.shape_str());
      out = Tensor(a.shape);
      const int rows = a.ndim() == 2 ? a.shape[0] : 1;
      const int cols = a.ndim() == 2 ? a.shape[1] : a.shape[0];
      softmax_rows(a, out, rows, cols);
      break;
    }
    case OpKind::log_fn: {
      const Tensor& a = unary();
      out = Tensor(a.shape);
      for (size_t i = 0; i < a.values.size(); ++i) out.values[i] = std::log(a.values[i]);
      break;
    }
    case OpKind::sum:
    case OpKind::mean: {
      const Tensor& a = unary();
      double s = 0.0;
      for (double v : a.values) s += v;
      if (kind == OpKind::mean) s /= static_cast<double>(a.numel());
      out = Tensor::scalar(s);
      break;
    }
    case OpKind::square: {
      const Tensor& a = unary();
      out = Tensor(a.shape);
      for (size_t i = 0; i < a.values.size(); ++i)
        out.values[i] = a.values[i] * a.values[i];
      break;
    }
    case OpKind::broadcast_row: {
      const Tensor& a = unary();
      const int rows = static_cast<int>(aux);
      if (a.ndim() != 1 || rows < 1)
        fail("broadcast-row: expects rank-1 input and positive row count, got " +
             a.shape_str());
      const int c = a.shape[0];
      out = Tensor({rows, c});
      for (int r = 0; r < rows; ++r)
        std::copy(a.values.begin(), a.values.end(),
                  out.values.begin() + static_cast<size_t>(r) * c);
      break;
    }
  }

  TapeNode n;
  n.kind = kind;
  n.parents = parents;
  n.aux = aux;
  n.grad = Tensor::zeros(out.shape);
  n.value = std::move(out);
  nodes_.push_back(std::move(n));
  return size() - 1;
}

void TapeGraph::reset_grads() {
  for (TapeNode& n : nodes_) std::fill(n.grad.values.begin(), n.grad.values.end(), 0.0);
}

void TapeGraph::backward(int root) {
  const TapeNode& r = node(root);
  if (!r.value.is_scalar())
    fail("backward: root must be scalar-shaped, got " + r.value.shape_str());

  nodes_[static_cast<size_t>(root)].grad.values[0] += 1.0;

  for (int id = root; id >= 0; --id) {
    TapeNode& n = nodes_[static_cast<size_t>(id)];
    if (n.kind == OpKind::leaf) continue;
    const Tensor& g = n.grad;
    bool any = false;
    for (double v : g.values)
      if (v != 0.0) { any = true; break; }
    if (!any) continue;

    switch (n.kind) {
      case OpKind::leaf:
        break;
      case OpKind::matmul: {
        // dA = dY B^T, dB = A^T dY
        const Tensor& a = node(n.parents[0]).value;
        const Tensor& b = node(n.parents[1]).value;
        Tensor& ga = node(n.parents[0]).grad;
        Tensor& gb = node(n.parents[1]).grad;
        const int m = a.rows(), k = a.cols(), nn = b.cols();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double s = 0.0;
            for (int j = 0; j < nn; ++j) s += g.at(i, j) * b.at(p, j);
            ga.at(i, p) += s;
          }
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < nn; ++j) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += a.at(i, p) * g.at(i, j);
            gb.at(p, j) += s;
          }
        break;
      }
      case OpKind::add: {
        Tensor& ga = node(n.parents[0]).grad;
        Tensor& gb = node(n.parents[1]).grad;
        for (size_t i = 0; i < g.values.size(); ++i) {
          ga.values[i] += g.values[i];
          gb.values[i] += g.values[i];
        }
        break;
      }
      case OpKind::sub: {
        Tensor& ga = node(n.parents[0]).grad;
        Tensor& gb = node(n.parents[1]).grad;
        for (size_t i = 0; i < g.values.size(); ++i) {
          ga.values[i] += g.values[i];
          gb.values[i] -= g.values[i];
        }
        break;
      }
      case OpKind::mul: {
        const Tensor& a = node(n.parents[0]).value;
        const Tensor& b = node(n.parents[1]).value;
        Tensor& ga = node(n.parents[0]).grad;
        Tensor& gb = node(n.parents[1]).grad;
        for (size_t i = 0; i < g.values.size(); ++i) {
          ga.values[i] += g.values[i] * b.values[i];
          gb.values[i] += g.values[i] * a.values[i];
        }
        break;
      }
      case OpKind::scale: {
        Tensor& ga = node(n.parents[0]).grad;
        for (size_t i = 0; i < g.values.size(); ++i) ga.values[i] += n.aux * g.values[i];
        break;
      }
      case OpKind::sigmoid: {
        Tensor& ga = node(n.parents[0]).grad;
        for (size_t i = 0; i < g.values.size(); ++i) {
          const double y = n.value.values[i];
          ga.values[i] += g.values[i] * y * (1.0 - y);
        }
        break;
      }
      case OpKind::tanh_fn: {
        Tensor& ga = node(n.parents[0]).grad;
        for (size_t i = 0; i < g.values.size(); ++i) {
          const double y = n.value.values[i];
          ga.values[i] += g.values[i] * (1.0 - y * y);
        }
        break;
      }
      case OpKind::relu: {
        const Tensor& a = node(n.parents[0]).value;
        Tensor& ga = node(n.parents[0]).grad;
        for (size_t i = 0; i < g.values.size(); ++i)
          if (a.values[i] > 0.0) ga.values[i] += g.values[i];
        break;
      }
      case OpKind::softmax: {
        // dx = y * (dy - <dy, y>) per row
        Tensor& ga = node(n.parents[0]).grad;
        const int rows = n.value.ndim() == 2 ? n.value.shape[0] : 1;
        const int cols = n.value.ndim() == 2 ? n.value.shape[1] : n.value.shape[0];
        for (int r = 0; r < rows; ++r) {
          const double* y = &n.value.values[static_cast<size_t>(r) * cols];
          const double* dy = &g.values[static_cast<size_t>(r) * cols];
          double dot = 0.0;
          for (int c = 0; c < cols; ++c) dot += dy[c] * y[c];
          double* dx = &ga.values[static_cast<size_t>(r) * cols];
          for (int c = 0; c < cols; ++c) dx[c] += y[c] * (dy[c] - dot);
        }
        break;
      }
      case OpKind::log_fn: {
        const Tensor& a = node(n.parents[0]).value;
        Tensor& ga = node(n.parents[0]).grad;
        for (size_t i = 0; i < g.values.size(); ++i)
          ga.values[i] += g.values[i] / a.values[i];
        break;
      }
      case OpKind::sum: {
        Tensor& ga = node(n.parents[0]).grad;
        const double gv = g.values[0];
        for (double& v : ga.values) v += gv;
        break;
      }
      case OpKind::mean: {
        Tensor& ga = node(n.parents[0]).grad;
        const double gv = g.values[0] / static_cast<double>(ga.numel());
        for (double& v : ga.values) v += gv;
        break;
      }
      case OpKind::square: {
        const Tensor& a = node(n.parents[0]).value;
        Tensor& ga = node(n.parents[0]).grad;
        for (size_t i = 0; i < g.values.size(); ++i)
          ga.values[i] += 2.0 * a.values[i] * g.values[i];
        break;
      }
      case OpKind::broadcast_row: {
        Tensor& ga = node(n.parents[0]).grad;
        const int c = ga.shape[0];
        const int rows = static_cast<int>(n.aux);
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < c; ++j)
            ga.values[j] += g.values[static_cast<size_t>(r) * c + j];
        break;
      }
    }
  }
}

double finite_diff_check(const ScalarGraphFn& f, const Tensor& x, double h) {
  if (h <= 0.0) fail("finite_diff_check: h must be positive");

  auto eval = [&](const Tensor& point) {
    TapeGraph g;
    const int xid = g.leaf(point);
    const int root = f(g, xid);
    const Tensor& v = g.value(root);
    if (!v.is_scalar()) fail("finite_diff_check: f must be scalar-valued");
    if (!std::isfinite(v.values[0])) fail("finite_diff_check: non-finite f evaluation");
    return v.values[0];
  };

  TapeGraph g;
  const int xid = g.leaf(x);
  const int root = f(g, xid);
  if (!g.value(root).is_scalar()) fail("finite_diff_check: f must be scalar-valued");
  g.backward(root);
  const Tensor analytic = g.grad(xid);

  double worst = 0.0;
  for (size_t i = 0; i < x.values.size(); ++i) {
    Tensor lo = x, hi = x;
    hi.values[i] += h;
    lo.values[i] -= h;
    const double cd = (eval(hi) - eval(lo)) / (2.0 * h);
    const double err = std::abs(analytic.values[i] - cd) / std::max(1.0, std::abs(cd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace advdrop
