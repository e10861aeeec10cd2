#include "btcnn/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace btcnn {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor dimensions must be positive, got " +
                                  shape_to_string(shape));
    }
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t;
  std::size_t n = shape_product(shape);
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->values.assign(n, value);
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  std::size_t n = shape_product(shape);
  if (values.size() != n) {
    throw std::invalid_argument(
        "value count " + std::to_string(values.size()) +
        " does not match shape " + shape_to_string(shape));
  }
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->values = std::move(values);
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor::Storage& Tensor::st() const {
  if (!s_) throw std::logic_error("use of undefined tensor");
  return *s_;
}

const std::vector<int>& Tensor::shape() const { return st().shape; }

int Tensor::dim(int axis) const {
  const auto& sh = st().shape;
  if (axis < 0 || axis >= static_cast<int>(sh.size())) {
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for shape " +
                                shape_to_string(sh));
  }
  return sh[axis];
}

std::size_t Tensor::size() const { return st().values.size(); }

std::vector<double>& Tensor::values() const { return st().values; }

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item() requires a single-element tensor, got " +
                                shape_to_string(shape()));
  }
  return st().values[0];
}

bool Tensor::requires_grad() const { return st().requires_grad; }

void Tensor::set_requires_grad(bool requires_grad) const {
  st().requires_grad = requires_grad;
}

std::vector<double>& Tensor::grad() const {
  Storage& s = st();
  if (s.grad.size() != s.values.size()) {
    s.grad.assign(s.values.size(), 0.0);
  }
  return s.grad;
}

bool Tensor::has_grad() const { return st().grad.size() == size(); }

void Tensor::zero_grad() const {
  Storage& s = st();
  s.grad.assign(s.values.size(), 0.0);
}

void Tape::record(std::function<void()> backward_fn,
                  std::initializer_list<Tensor> outputs) {
  if (consumed_) {
    throw std::logic_error("cannot record on a consumed tape; call reset()");
  }
  for (const Tensor& t : outputs) outputs_.insert(t.id());
  nodes_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw std::logic_error("backward() called twice on the same tape");
  }
  if (loss.size() != 1) {
    throw std::invalid_argument("backward() expects a scalar loss, got " +
                                shape_to_string(loss.shape()));
  }
  if (!outputs_.count(loss.id())) {
    throw std::logic_error(
        "loss tensor was not produced by a forward pass recorded on this tape");
  }
  loss.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  consumed_ = true;
}

void Tape::reset() {
  nodes_.clear();
  outputs_.clear();
  consumed_ = false;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

}  // namespace btcnn
