#include "pfl/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pfl {

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(const std::string& name, Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, name});
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant_ref(const Tensor& value) {
  nodes_.push_back(Node{Tensor(), {}, {}, false, {}, &value});
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter_ref(const std::string& name, const Tensor& value) {
  nodes_.push_back(Node{Tensor(), {}, {}, true, name, &value});
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node node{std::move(value), {}, {}, false, {}};
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.graph != this) throw std::logic_error("op mixes vars from different graphs");
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(Var target) {
  if (!has_grad_[target.id]) {
    grads_[target.id] = Tensor(value(target).shape());
    has_grad_[target.id] = true;
  }
  return grads_[target.id];
}

void Graph::accumulate(Var target, const Tensor& contribution) {
  if (!nodes_[target.id].requires_grad) return;
  Tensor& g = grad_buffer(target);
  auto dst = g.data();
  auto src = contribution.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

std::map<std::string, Tensor> Graph::backward(Var loss) {
  if (loss.graph != this) throw std::logic_error("loss belongs to another graph");
  if (value(loss).size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + value(loss).shape_str());
  }
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), false);
  if (nodes_[loss.id].requires_grad) {
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.requires_grad || !has_grad_[id] || !node.backward) continue;
      node.backward(grads_[id], *this);
    }
  }
  std::map<std::string, Tensor> out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (node.param.empty()) continue;
    out[node.param] = has_grad_[id] ? grads_[id] : Tensor(value(Var{this, id}).shape());
  }
  return out;
}

double gelu(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double k = 0.7978845608028654;
  const double u = k * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

namespace ag {

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " needs a rank-2 tensor, got " + t.shape_str());
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  Tensor out = pfl::matmul(a.value(), b.value());
  const Var in[] = {a, b};
  return g.record(std::move(out), in, [a, b](const Tensor& go, Graph& graph) {
    if (graph.requires_grad(a)) graph.accumulate(a, pfl::matmul(go, pfl::transpose(b.value())));
    if (graph.requires_grad(b)) graph.accumulate(b, pfl::matmul(pfl::transpose(a.value()), go));
  });
}

Var transpose(Var a) {
  const Var in[] = {a};
  return a.graph->record(pfl::transpose(a.value()), in,
                         [a](const Tensor& go, Graph& graph) {
                           graph.accumulate(a, pfl::transpose(go));
                         });
}

Var add(Var a, Var b) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError("add shape mismatch: " + a.value().shape_str() + " + " +
                     b.value().shape_str());
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const Var in[] = {a, b};
  return a.graph->record(std::move(out), in, [a, b](const Tensor& go, Graph& graph) {
    graph.accumulate(a, go);
    graph.accumulate(b, go);
  });
}

Var add_bias(Var a, Var bias) {
  const Tensor& x = a.value();
  const std::size_t n = x.cols();
  if (bias.value().size() != n) {
    throw ShapeError("add_bias mismatch: " + x.shape_str() + " + " +
                     bias.value().shape_str());
  }
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bias.value()[j];
  const Var in[] = {a, bias};
  return a.graph->record(std::move(out), in, [a, bias, n](const Tensor& go, Graph& graph) {
    graph.accumulate(a, go);
    if (graph.requires_grad(bias)) {
      Tensor& gb = graph.grad_buffer(bias);
      for (std::size_t r = 0; r < go.rows(); ++r)
        for (std::size_t j = 0; j < n; ++j) gb[j] += go[r * n + j];
    }
  });
}

Var mul(Var a, Var b) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError("mul shape mismatch: " + a.value().shape_str() + " * " +
                     b.value().shape_str());
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const Var in[] = {a, b};
  return a.graph->record(std::move(out), in, [a, b](const Tensor& go, Graph& graph) {
    if (graph.requires_grad(a)) {
      Tensor ga = go;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b.value()[i];
      graph.accumulate(a, ga);
    }
    if (graph.requires_grad(b)) {
      Tensor gb = go;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a.value()[i];
      graph.accumulate(b, gb);
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  const Var in[] = {a};
  return a.graph->record(std::move(out), in, [a, s](const Tensor& go, Graph& graph) {
    Tensor ga = go;
    for (auto& v : ga.data()) v *= s;
    graph.accumulate(a, ga);
  });
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = pfl::gelu(v);
  const Var in[] = {a};
  return a.graph->record(std::move(out), in, [a](const Tensor& go, Graph& graph) {
    Tensor ga = go;
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= gelu_grad(x[i]);
    graph.accumulate(a, ga);
  });
}

Var softmax(Var x, std::size_t axis) {
  Tensor out = pfl::softmax(x.value(), axis);
  const bool per_row = x.value().rank() <= 1 || axis == 1;
  const Var in[] = {x};
  Tensor saved = out;
  return x.graph->record(
      std::move(out), in, [x, per_row, s = std::move(saved)](const Tensor& go, Graph& graph) {
        const std::size_t rows = s.rows(), cols = s.cols();
        Tensor gx(s.shape());
        const std::size_t outer = per_row ? rows : cols;
        const std::size_t inner = per_row ? cols : rows;
        for (std::size_t o = 0; o < outer; ++o) {
          auto idx = [&](std::size_t i) { return per_row ? o * cols + i : i * cols + o; };
          double dot = 0.0;
          for (std::size_t i = 0; i < inner; ++i) dot += go[idx(i)] * s[idx(i)];
          for (std::size_t i = 0; i < inner; ++i) gx[idx(i)] = s[idx(i)] * (go[idx(i)] - dot);
        }
        graph.accumulate(x, gx);
      });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols(), rows = xv.rows();
  Tensor out = pfl::layer_norm(xv, gain.value(), bias.value(), eps);
  // Cache normalized input and inverse std per row for the backward pass.
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) xhat[r * n + j] = (row[j] - mean) * inv_std[r];
  }
  const Var in[] = {x, gain, bias};
  return x.graph->record(
      std::move(out), in,
      [x, gain, bias, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const Tensor& go, Graph& graph) {
        const Tensor& gv = gain.value();
        if (graph.requires_grad(gain) || graph.requires_grad(bias)) {
          Tensor dg(gv.shape()), db(gv.shape());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) {
              dg[j] += go[r * n + j] * xhat[r * n + j];
              db[j] += go[r * n + j];
            }
          graph.accumulate(gain, dg);
          graph.accumulate(bias, db);
        }
        if (graph.requires_grad(x)) {
          Tensor dx(x.value().shape());
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = go[r * n + j] * gv[j];
              mean_d += d;
              mean_dx += d * xhat[r * n + j];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = go[r * n + j] * gv[j];
              dx[r * n + j] = inv_std[r] * (d - mean_d - xhat[r * n + j] * mean_dx);
            }
          }
          graph.accumulate(x, dx);
        }
      });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_rows");
  if (count == 0 || begin + count > x.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", +" +
                     std::to_string(count) + ") out of " + x.shape_str());
  }
  const std::size_t n = x.cols();
  Tensor out({count, n},
             std::vector<double>(x.data().begin() + begin * n,
                                 x.data().begin() + (begin + count) * n));
  const Var in[] = {a};
  return a.graph->record(std::move(out), in, [a, begin, n](const Tensor& go, Graph& graph) {
    Tensor& ga = graph.grad_buffer(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[begin * n + i] += go[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_cols");
  if (count == 0 || begin + count > x.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", +" +
                     std::to_string(count) + ") out of " + x.shape_str());
  }
  const std::size_t rows = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(rows, count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < count; ++j) out[r * count + j] = x[r * n + begin + j];
  const Var in[] = {a};
  return a.graph->record(std::move(out), in,
                         [a, begin, count, rows, n](const Tensor& go, Graph& graph) {
                           Tensor& ga = graph.grad_buffer(a);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < count; ++j)
                               ga[r * n + begin + j] += go[r * count + j];
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = parts[0].value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != rows) {
      throw ShapeError("concat_cols row mismatch: " + parts[0].value().shape_str() +
                       " vs " + p.value().shape_str());
    }
    total += p.value().cols();
  }
  Tensor out = Tensor::zeros(rows, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < v.cols(); ++j) out[r * total + offset + j] = v[r * v.cols() + j];
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph->record(
      std::move(out), inputs, [inputs, rows, total](const Tensor& go, Graph& graph) {
        std::size_t off = 0;
        for (const Var& p : inputs) {
          const std::size_t c = p.value().cols();
          if (graph.requires_grad(p)) {
            Tensor& gp = graph.grad_buffer(p);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < c; ++j) gp[r * c + j] += go[r * total + off + j];
          }
          off += c;
        }
      });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  const Tensor& x = a.value();
  require_matrix(x, "gather_rows");
  if (indices.empty()) throw ShapeError("gather_rows with no indices");
  const std::size_t n = x.cols();
  Tensor out = Tensor::zeros(indices.size(), n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.rows()) {
      throw ShapeError("gather_rows index " + std::to_string(indices[i]) +
                       " out of " + x.shape_str());
    }
    std::copy_n(x.data().begin() + indices[i] * n, n, out.data().begin() + i * n);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const Var in[] = {a};
  return a.graph->record(std::move(out), in,
                         [a, idx = std::move(idx), n](const Tensor& go, Graph& graph) {
                           Tensor& ga = graph.grad_buffer(a);
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t j = 0; j < n; ++j) ga[idx[i] * n + j] += go[i * n + j];
                         });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const Var in[] = {a};
  return a.graph->record(Tensor::scalar(s), in, [a](const Tensor& go, Graph& graph) {
    Tensor ga(a.value().shape());
    for (auto& v : ga.data()) v = go[0];
    graph.accumulate(a, ga);
  });
}

Var cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = logits.value();
  const double loss = pfl::cross_entropy(z, label);
  const Var in[] = {logits};
  return logits.graph->record(Tensor::scalar(loss), in,
                              [logits, label](const Tensor& go, Graph& graph) {
                                const Tensor& zv = logits.value();
                                Tensor p = pfl::softmax(zv, zv.rank() == 2 ? 1 : 0);
                                p[label] -= 1.0;
                                for (auto& v : p.data()) v *= go[0];
                                graph.accumulate(logits, p);
                              });
}

}  // namespace ag

}  // namespace pfl
