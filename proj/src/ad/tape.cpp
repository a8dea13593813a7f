#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nfem/autodiff.hpp"

namespace nfem::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

Parameter::Parameter(std::string name_, Shape shape_, std::vector<double> value_, bool trainable_)
    : name(std::move(name_)), shape(std::move(shape_)), value(std::move(value_)), trainable(trainable_) {
  if (value.size() != numel(shape)) throw ShapeError("ad", "parameter " + name + " value does not match its shape");
  grad.assign(value.size(), 0.0);
  m.assign(value.size(), 0.0);
  v.assign(value.size(), 0.0);
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("ad", "item() on a tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

Tensor Tape::add_leaf(Shape shape, std::vector<double> values, bool requires_grad, Parameter* param, const char* op) {
  if (values.size() != numel(shape))
    throw ShapeError("ad", std::string(op) + ": " + std::to_string(values.size()) + " values for shape " +
                               shape_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->param = param;
  node->tape = this;
  node->op = op;
  nodes_.push_back(node);
  return Tensor(node);
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  return add_leaf(std::move(shape), std::move(values), false, nullptr, "constant");
}

Tensor Tape::variable(Shape shape, std::vector<double> values) {
  return add_leaf(std::move(shape), std::move(values), true, nullptr, "variable");
}

Tensor Tape::parameter(Parameter& p) { return add_leaf(p.shape, p.value, p.trainable, &p, "parameter"); }

Tensor Tape::record(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents, std::string op,
                    std::function<void(Node&)> backward) {
  if (values.size() != numel(shape))
    throw ShapeError("ad", op + ": " + std::to_string(values.size()) + " values for shape " + shape_string(shape));
  for (double v : values)
    if (!std::isfinite(v)) throw NonFiniteError("ad", op + " produced a non-finite value");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->tape = this;
  node->op = std::move(op);
  for (const auto& p : parents) {
    if (p.node().tape != this) throw InvalidArgument("ad", node->op + ": operand recorded on a different tape");
    node->requires_grad = node->requires_grad || p.requires_grad();
  }
  if (node->requires_grad) {
    for (const auto& p : parents) node->parents.push_back(p.ptr());
    node->backward = std::move(backward);
  }
  nodes_.push_back(node);
  return Tensor(node);
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_) throw InvalidArgument("ad", "backward called twice on the same tape");
  if (!loss.valid() || loss.node().tape != this) throw InvalidArgument("ad", "loss node is not recorded on this tape");
  if (loss.size() != 1) throw ShapeError("ad", "loss must be a scalar, got shape " + shape_string(loss.shape()));
  backward_done_ = true;
  if (!loss.requires_grad()) return;

  loss.node().ensure_grad()[0] = 1.0;
  const auto it = std::find(nodes_.begin(), nodes_.end(), loss.ptr());
  for (auto r = std::make_reverse_iterator(it + 1); r != nodes_.rend(); ++r) {
    Node& n = **r;
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(n);
    if (n.param) {
      auto& g = n.param->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }
}

std::vector<double> Tape::grad_of(const Tensor& t) const {
  if (t.node().grad.empty()) return std::vector<double>(t.size(), 0.0);
  return t.node().grad;
}

GridDims grid_dims(const Shape& shape) {
  if (shape.size() != 4 && shape.size() != 5)
    throw ShapeError("ad", "grid tensors are (batch, x, y[, z], channels), got " + shape_string(shape));
  GridDims d;
  d.spatial_rank = static_cast<int>(shape.size()) - 2;
  d.batch = shape.front();
  d.channels = shape.back();
  for (int a = 0; a < d.spatial_rank; ++a) d.extent[a] = shape[1 + a];
  return d;
}

Shape GridDims::shape() const {
  Shape s{batch};
  for (int a = 0; a < spatial_rank; ++a) s.push_back(extent[a]);
  s.push_back(channels);
  return s;
}

}  // namespace nfem::ad
