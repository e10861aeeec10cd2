#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

namespace btcnn {

std::string shape_to_string(const std::vector<int>& shape);

/// N-dimensional array of 64-bit reals with an optional gradient buffer.
///
/// Tensor is a shared handle: copying it copies the handle, not the storage,
/// so ops and tape closures can hold the same buffers the caller sees.
/// Const applies to the handle; element access is always mutable.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const std::vector<int>& shape() const;
  int dim(int axis) const;
  std::size_t size() const;

  std::vector<double>& values() const;
  double item() const;  // value of a single-element tensor

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad) const;

  /// Gradient buffer, allocated (zero-filled) on first access.
  std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad() const;

  /// Stable identity of the underlying storage.
  const void* id() const { return s_.get(); }

 private:
  struct Storage {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until requested
    bool requires_grad = false;
  };

  Storage& st() const;

  std::shared_ptr<Storage> s_;
};

/// Record of one forward pass: backward rules in execution order.
///
/// Ops append a node only while a tape is active (see TapeScope) and at
/// least one input requires a gradient. backward() seeds the loss gradient
/// with 1 and replays the rules in reverse; afterwards the tape is consumed
/// and must be reset() before recording again.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn,
              std::initializer_list<Tensor> outputs);

  /// Runs all recorded backward rules in reverse order, accumulating into
  /// the grad() buffers of every tensor that requires a gradient.
  void backward(const Tensor& loss);

  void reset();
  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }
  bool recorded(const Tensor& t) const { return outputs_.count(t.id()) > 0; }

  /// Tape currently receiving records on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;

  std::vector<std::function<void()>> nodes_;
  std::unordered_set<const void*> outputs_;
  bool consumed_ = false;
};

/// RAII guard making a tape the active one for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace btcnn
