#include "cdcd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cdcd/error.hpp"

namespace cdcd {

namespace {

constexpr double kLayerNormEps = 1e-5;

[[noreturn]] void shape_error(Op op, std::initializer_list<const Tensor*> ts, const std::string& why) {
  std::ostringstream os;
  os << op_name(op) << ": " << why << " (shapes";
  for (const Tensor* t : ts) os << ' ' << shape_string(t->shape);
  os << ')';
  throw Error(os.str());
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

struct MatMulDims {
  std::size_t batch, m, k, n;
};

MatMulDims matmul_dims(const Tensor& a, const Tensor& b, bool transpose_b) {
  const bool batched = a.rank() == 3;
  if (!(a.rank() == 2 || a.rank() == 3) || b.rank() != a.rank())
    shape_error(Op::MatMul, {&a, &b}, "operands must both be rank 2 or rank 3");
  const std::size_t off = batched ? 1 : 0;
  MatMulDims d{batched ? a.dim(0) : 1, a.dim(off), a.dim(off + 1), 0};
  if (batched && b.dim(0) != d.batch) shape_error(Op::MatMul, {&a, &b}, "batch extents differ");
  const std::size_t bk = transpose_b ? b.dim(off + 1) : b.dim(off);
  d.n = transpose_b ? b.dim(off) : b.dim(off + 1);
  if (bk != d.k) shape_error(Op::MatMul, {&a, &b}, "inner extents differ");
  return d;
}

void accumulate(Tensor& into, const Tensor& g) {
  if (into.size() != g.size()) {
    into = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) into.data[i] += g.data[i];
}

Tensor& grad_slot(std::vector<Tensor>& grads, NodeId id, const std::vector<std::size_t>& shape) {
  Tensor& g = grads[id];
  if (g.shape != shape || g.size() != shape_size(shape)) g = Tensor(shape, 0.0);
  return g;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != shape_size(shape))
    throw Error("Tensor: data length " + std::to_string(data.size()) + " does not match shape " +
                shape_string(shape));
}

double Tensor::item() const {
  if (size() != 1) throw Error("Tensor::item: tensor of shape " + shape_string(shape) + " is not a scalar");
  return data[0];
}

std::size_t shape_size(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  return s + ']';
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::Affine: return "affine";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::LayerNorm: return "layer_norm";
    case Op::Gelu: return "gelu";
    case Op::Relu: return "relu";
    case Op::Gather: return "gather";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumLast: return "sum_last";
    case Op::Scale: return "scale";
    case Op::Concat: return "concat";
    case Op::Reshape: return "reshape";
    case Op::CrossEntropy: return "cross_entropy";
  }
  return "?";
}

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) {
    if (in >= nodes_.size()) throw Error(std::string(op_name(node.op)) + ": input node does not exist");
    node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
  }
  evaluate(node);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Graph::constant(Tensor value) {
  Node n{Op::Constant, {}, std::move(value)};
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Graph::parameter(Tensor value) {
  Node n{Op::Parameter, {}, std::move(value)};
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  params_.push_back(nodes_.size() - 1);
  return nodes_.size() - 1;
}

NodeId Graph::add(NodeId a, NodeId b) { return push(Node{Op::Add, {a, b}}); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(Node{Op::Mul, {a, b}}); }

NodeId Graph::matmul(NodeId a, NodeId b, bool transpose_b) {
  Node n{Op::MatMul, {a, b}};
  n.flag = transpose_b;
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, NodeId w, NodeId b) { return push(Node{Op::Affine, {x, w, b}}); }
NodeId Graph::softmax(NodeId x) { return push(Node{Op::Softmax, {x}}); }
NodeId Graph::log_softmax(NodeId x) { return push(Node{Op::LogSoftmax, {x}}); }
NodeId Graph::layer_norm(NodeId x, NodeId g, NodeId b) { return push(Node{Op::LayerNorm, {x, g, b}}); }
NodeId Graph::gelu(NodeId x) { return push(Node{Op::Gelu, {x}}); }
NodeId Graph::relu(NodeId x) { return push(Node{Op::Relu, {x}}); }

NodeId Graph::gather(NodeId table, std::vector<std::size_t> indices) {
  Node n{Op::Gather, {table}};
  n.index = std::move(indices);
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) { return push(Node{Op::Sum, {x}}); }
NodeId Graph::mean(NodeId x) { return push(Node{Op::Mean, {x}}); }
NodeId Graph::sum_last(NodeId x) { return push(Node{Op::SumLast, {x}}); }

NodeId Graph::scale(NodeId x, double s) {
  Node n{Op::Scale, {x}};
  n.scalar = s;
  return push(std::move(n));
}

NodeId Graph::concat(std::vector<NodeId> xs) {
  if (xs.empty()) throw Error("concat: no inputs");
  return push(Node{Op::Concat, std::move(xs)});
}

NodeId Graph::reshape(NodeId x, std::vector<std::size_t> shape) {
  Node n{Op::Reshape, {x}};
  n.index = std::move(shape);
  return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId p, NodeId target) {
  if (target >= nodes_.size() || nodes_[target].op != Op::Constant)
    throw Error("cross_entropy: target must be a constant node");
  return push(Node{Op::CrossEntropy, {p, target}});
}

void Graph::set_leaf(NodeId id, Tensor value) {
  Node& n = nodes_.at(id);
  if (n.op != Op::Constant && n.op != Op::Parameter) throw Error("set_leaf: node is not a leaf");
  if (n.value.shape != value.shape)
    throw Error("set_leaf: shape " + shape_string(value.shape) + " does not match " + shape_string(n.value.shape));
  n.value = std::move(value);
}

void Graph::recompute() {
  for (Node& n : nodes_)
    if (n.op != Op::Constant && n.op != Op::Parameter) evaluate(n);
}

void Graph::evaluate(Node& node) const {
  const auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  Tensor& out = node.value;
  switch (node.op) {
    case Op::Constant:
    case Op::Parameter:
      return;
    case Op::Add:
    case Op::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape != b.shape) shape_error(node.op, {&a, &b}, "shapes differ");
      out = a;
      if (node.op == Op::Add)
        for (std::size_t i = 0; i < a.size(); ++i) out.data[i] += b.data[i];
      else
        for (std::size_t i = 0; i < a.size(); ++i) out.data[i] *= b.data[i];
      return;
    }
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const MatMulDims d = matmul_dims(a, b, node.flag);
      out = a.rank() == 3 ? Tensor({d.batch, d.m, d.n}) : Tensor({d.m, d.n});
      for (std::size_t s = 0; s < d.batch; ++s) {
        const double* pa = a.data.data() + s * d.m * d.k;
        const double* pb = b.data.data() + s * d.k * d.n;
        double* pc = out.data.data() + s * d.m * d.n;
        if (node.flag)
          gemm_nt(pa, pb, pc, d.m, d.k, d.n);
        else
          gemm_nn(pa, pb, pc, d.m, d.k, d.n);
      }
      return;
    }
    case Op::Affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      if (w.rank() != 2 || x.rank() == 0 || x.cols() != w.dim(0) || b.rank() != 1 || b.dim(0) != w.dim(1))
        shape_error(Op::Affine, {&x, &w, &b}, "expected x[...,k], w[k,n], b[n]");
      auto shape = x.shape;
      shape.back() = w.dim(1);
      out = Tensor(shape);
      const std::size_t rows = x.rows(), n = w.dim(1);
      for (std::size_t r = 0; r < rows; ++r) std::copy(b.data.begin(), b.data.end(), out.data.begin() + r * n);
      gemm_nn(x.data.data(), w.data.data(), out.data.data(), rows, x.cols(), n);
      return;
    }
    case Op::Softmax:
    case Op::LogSoftmax: {
      const Tensor& x = in(0);
      out = x;
      const std::size_t n = x.cols();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double* row = out.data.data() + r * n;
        const double m = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - m);
        if (node.op == Op::Softmax) {
          for (std::size_t j = 0; j < n; ++j) row[j] = std::exp(row[j] - m) / z;
        } else {
          const double lz = m + std::log(z);
          for (std::size_t j = 0; j < n; ++j) row[j] -= lz;
        }
      }
      return;
    }
    case Op::LayerNorm: {
      const Tensor& x = in(0);
      const Tensor& g = in(1);
      const Tensor& b = in(2);
      const std::size_t n = x.cols();
      if (g.rank() != 1 || b.rank() != 1 || g.dim(0) != n || b.dim(0) != n)
        shape_error(Op::LayerNorm, {&x, &g, &b}, "gain and bias must match the last axis");
      out = x;
      node.saved.assign(x.rows() * 2, 0.0);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double* row = out.data.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
        node.saved[2 * r] = mu;
        node.saved[2 * r + 1] = rstd;
        for (std::size_t j = 0; j < n; ++j) row[j] = (row[j] - mu) * rstd * g.data[j] + b.data[j];
      }
      return;
    }
    case Op::Gelu: {
      out = in(0);
      for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 * 0.5));
      return;
    }
    case Op::Relu: {
      out = in(0);
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
      return;
    }
    case Op::Gather: {
      const Tensor& t = in(0);
      if (t.rank() != 2) shape_error(Op::Gather, {&t}, "table must be rank 2");
      const std::size_t d = t.dim(1);
      out = Tensor({node.index.size(), d});
      for (std::size_t i = 0; i < node.index.size(); ++i) {
        const std::size_t r = node.index[i];
        if (r >= t.dim(0))
          throw Error("gather: index " + std::to_string(r) + " out of range for table " + shape_string(t.shape));
        std::copy_n(t.data.begin() + r * d, d, out.data.begin() + i * d);
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      const Tensor& x = in(0);
      double s = 0.0;
      for (double v : x.data) s += v;
      if (node.op == Op::Mean) {
        if (x.size() == 0) shape_error(Op::Mean, {&x}, "empty input");
        s /= static_cast<double>(x.size());
      }
      out = Tensor::scalar(s);
      return;
    }
    case Op::SumLast: {
      const Tensor& x = in(0);
      if (x.rank() == 0) shape_error(Op::SumLast, {&x}, "scalar input");
      out = Tensor(std::vector<std::size_t>(x.shape.begin(), x.shape.end() - 1));
      const std::size_t n = x.cols();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += x.data[r * n + j];
        out.data[r] = s;
      }
      return;
    }
    case Op::Scale: {
      out = in(0);
      for (double& v : out.data) v *= node.scalar;
      return;
    }
    case Op::Concat: {
      const Tensor& first = in(0);
      std::size_t width = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const Tensor& x = in(i);
        if (x.rank() == 0 || x.rank() != first.rank() || x.rows() != first.rows() ||
            !std::equal(x.shape.begin(), x.shape.end() - 1, first.shape.begin()))
          shape_error(Op::Concat, {&first, &x}, "leading extents differ");
        width += x.cols();
      }
      auto shape = first.shape;
      shape.back() = width;
      out = Tensor(shape);
      std::size_t offset = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const Tensor& x = in(i);
        const std::size_t c = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r)
          std::copy_n(x.data.begin() + r * c, c, out.data.begin() + r * width + offset);
        offset += c;
      }
      return;
    }
    case Op::Reshape: {
      const Tensor& x = in(0);
      if (shape_size(node.index) != x.size()) {
        Tensor target(node.index);
        shape_error(Op::Reshape, {&x, &target}, "element counts differ");
      }
      out = Tensor(node.index, x.data);
      return;
    }
    case Op::CrossEntropy: {
      const Tensor& p = in(0);
      const Tensor& w = in(1);
      if (p.shape != w.shape) shape_error(Op::CrossEntropy, {&p, &w}, "shapes differ");
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (w.data[i] == 0.0) continue;
        if (!(p.data[i] > 0.0))
          throw Error("cross_entropy: probability " + std::to_string(p.data[i]) + " at entry " +
                      std::to_string(i) + " where target is nonzero");
        s -= w.data[i] * std::log(p.data[i]);
      }
      out = Tensor::scalar(s);
      return;
    }
  }
}

std::map<NodeId, Tensor> Graph::backward(NodeId output) const {
  const Tensor& y = at(output).value;
  if (y.size() != 1) throw Error("backward: output node has shape " + shape_string(y.shape) + ", expected a scalar");
  std::vector<Tensor> grads(nodes_.size(), Tensor(std::vector<std::size_t>{0}));
  grads[output] = Tensor(y.shape, 1.0);
  for (NodeId id = output + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || grads[id].size() != n.value.size() || n.inputs.empty()) continue;
    propagate(n, grads[id], grads);
    if (n.op != Op::Parameter) grads[id] = Tensor(std::vector<std::size_t>{0});
  }
  std::map<NodeId, Tensor> result;
  for (NodeId p : params_) {
    const Tensor& v = nodes_[p].value;
    result.emplace(p, grads[p].size() == v.size() && p <= output ? grads[p] : Tensor(v.shape, 0.0));
  }
  return result;
}

void Graph::propagate(const Node& node, const Tensor& g, std::vector<Tensor>& grads) const {
  const auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  const auto wants = [&](std::size_t i) { return nodes_[node.inputs[i]].needs_grad; };
  const auto slot = [&](std::size_t i) -> Tensor& { return grad_slot(grads, node.inputs[i], in(i).shape); };

  switch (node.op) {
    case Op::Constant:
    case Op::Parameter:
      return;
    case Op::Add:
      for (std::size_t i = 0; i < 2; ++i)
        if (wants(i)) accumulate(slot(i), g);
      return;
    case Op::Mul:
      for (std::size_t i = 0; i < 2; ++i) {
        if (!wants(i)) continue;
        const Tensor& other = in(1 - i);
        Tensor& s = slot(i);
        for (std::size_t k = 0; k < g.size(); ++k) s.data[k] += g.data[k] * other.data[k];
      }
      return;
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const MatMulDims d = matmul_dims(a, b, node.flag);
      for (std::size_t s = 0; s < d.batch; ++s) {
        const double* pa = a.data.data() + s * d.m * d.k;
        const double* pb = b.data.data() + s * d.k * d.n;
        const double* pg = g.data.data() + s * d.m * d.n;
        if (wants(0)) {
          double* da = slot(0).data.data() + s * d.m * d.k;
          if (node.flag)
            gemm_nn(pg, pb, da, d.m, d.n, d.k);  // dA = dC * B
          else
            gemm_nt(pg, pb, da, d.m, d.n, d.k);  // dA = dC * B^T
        }
        if (wants(1)) {
          double* db = slot(1).data.data() + s * d.k * d.n;
          if (node.flag)
            gemm_tn(pg, pa, db, d.m, d.n, d.k);  // dB = dC^T * A
          else
            gemm_tn(pa, pg, db, d.m, d.k, d.n);  // dB = A^T * dC
        }
      }
      return;
    }
    case Op::Affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const std::size_t rows = x.rows(), k = x.cols(), n = w.dim(1);
      if (wants(0)) gemm_nt(g.data.data(), w.data.data(), slot(0).data.data(), rows, n, k);
      if (wants(1)) gemm_tn(x.data.data(), g.data.data(), slot(1).data.data(), rows, k, n);
      if (wants(2)) {
        Tensor& db = slot(2);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) db.data[j] += g.data[r * n + j];
      }
      return;
    }
    case Op::Softmax: {
      if (!wants(0)) return;
      const Tensor& y = node.value;
      Tensor& dx = slot(0);
      const std::size_t n = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double* yr = y.data.data() + r * n;
        const double* gr = g.data.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
        for (std::size_t j = 0; j < n; ++j) dx.data[r * n + j] += yr[j] * (gr[j] - dot);
      }
      return;
    }
    case Op::LogSoftmax: {
      if (!wants(0)) return;
      const Tensor& y = node.value;
      Tensor& dx = slot(0);
      const std::size_t n = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double* yr = y.data.data() + r * n;
        const double* gr = g.data.data() + r * n;
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += gr[j];
        for (std::size_t j = 0; j < n; ++j) dx.data[r * n + j] += gr[j] - std::exp(yr[j]) * total;
      }
      return;
    }
    case Op::LayerNorm: {
      const Tensor& x = in(0);
      const Tensor& gain = in(1);
      const std::size_t n = x.cols();
      const double inv_n = 1.0 / static_cast<double>(n);
      std::vector<double> xhat(n), dxhat(n);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double mu = node.saved[2 * r];
        const double rstd = node.saved[2 * r + 1];
        const double* xr = x.data.data() + r * n;
        const double* gr = g.data.data() + r * n;
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          xhat[j] = (xr[j] - mu) * rstd;
          dxhat[j] = gr[j] * gain.data[j];
          mean_d += dxhat[j];
          mean_dx += dxhat[j] * xhat[j];
        }
        mean_d *= inv_n;
        mean_dx *= inv_n;
        if (wants(0)) {
          double* dx = slot(0).data.data() + r * n;
          for (std::size_t j = 0; j < n; ++j) dx[j] += rstd * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
        if (wants(1)) {
          double* dg = slot(1).data.data();
          for (std::size_t j = 0; j < n; ++j) dg[j] += gr[j] * xhat[j];
        }
        if (wants(2)) {
          double* db = slot(2).data.data();
          for (std::size_t j = 0; j < n; ++j) db[j] += gr[j];
        }
      }
      return;
    }
    case Op::Gelu: {
      if (!wants(0)) return;
      const Tensor& x = in(0);
      Tensor& dx = slot(0);
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 * 0.5));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        dx.data[i] += g.data[i] * (cdf + v * pdf);
      }
      return;
    }
    case Op::Relu: {
      if (!wants(0)) return;
      const Tensor& x = in(0);
      Tensor& dx = slot(0);
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x.data[i] > 0.0) dx.data[i] += g.data[i];
      return;
    }
    case Op::Gather: {
      if (!wants(0)) return;
      Tensor& dt = slot(0);
      const std::size_t d = in(0).dim(1);
      for (std::size_t i = 0; i < node.index.size(); ++i) {
        double* row = dt.data.data() + node.index[i] * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += g.data[i * d + j];
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      if (!wants(0)) return;
      Tensor& dx = slot(0);
      const double v = node.op == Op::Sum ? g.data[0] : g.data[0] / static_cast<double>(dx.size());
      for (double& e : dx.data) e += v;
      return;
    }
    case Op::SumLast: {
      if (!wants(0)) return;
      Tensor& dx = slot(0);
      const std::size_t n = dx.cols();
      for (std::size_t r = 0; r < dx.rows(); ++r)
        for (std::size_t j = 0; j < n; ++j) dx.data[r * n + j] += g.data[r];
      return;
    }
    case Op::Scale: {
      if (!wants(0)) return;
      Tensor& dx = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) dx.data[i] += g.data[i] * node.scalar;
      return;
    }
    case Op::Concat: {
      const std::size_t width = node.value.cols();
      std::size_t offset = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const std::size_t c = in(i).cols();
        if (wants(i)) {
          Tensor& dx = slot(i);
          for (std::size_t r = 0; r < dx.rows(); ++r)
            for (std::size_t j = 0; j < c; ++j) dx.data[r * c + j] += g.data[r * width + offset + j];
        }
        offset += c;
      }
      return;
    }
    case Op::Reshape: {
      if (!wants(0)) return;
      Tensor& dx = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) dx.data[i] += g.data[i];
      return;
    }
    case Op::CrossEntropy: {
      if (!wants(0)) return;
      const Tensor& p = in(0);
      const Tensor& w = in(1);
      Tensor& dp = slot(0);
      for (std::size_t i = 0; i < p.size(); ++i)
        if (w.data[i] != 0.0) dp.data[i] -= g.data[0] * w.data[i] / p.data[i];
      return;
    }
  }
}

double finite_difference_check(const LossBuilder& build, std::vector<Tensor> params, double eps,
                               std::size_t max_coords, Stream rng) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw Error("finite_difference_check: eps must lie in (0, 1e-2]");

  std::size_t total = 0;
  for (const Tensor& p : params) total += p.size();
  if (total == 0) return 0.0;

  Graph graph;
  std::vector<NodeId> ids;
  for (const Tensor& p : params) ids.push_back(graph.parameter(p));
  const NodeId out = build(graph, ids);
  const auto grads = graph.backward(out);

  const auto evaluate_at = [&](const std::vector<Tensor>& ps) {
    Graph g;
    std::vector<NodeId> pid;
    for (const Tensor& p : ps) pid.push_back(g.parameter(p));
    return g.value(build(g, pid)).item();
  };

  std::vector<std::size_t> coords(total);
  for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  if (total > max_coords) {
    // Partial Fisher-Yates: the first max_coords entries are a uniform sample.
    for (std::size_t i = 0; i < max_coords; ++i) std::swap(coords[i], coords[i + rng.below(total - i)]);
    coords.resize(max_coords);
  }

  double worst = 0.0;
  for (std::size_t flat : coords) {
    std::size_t which = 0;
    while (flat >= params[which].size()) flat -= params[which++].size();
    const double original = params[which].data[flat];
    params[which].data[flat] = original + eps;
    const double up = evaluate_at(params);
    params[which].data[flat] = original - eps;
    const double down = evaluate_at(params);
    params[which].data[flat] = original;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = grads.at(ids[which]).data[flat];
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
  }
  return worst;
}

}  // namespace cdcd
