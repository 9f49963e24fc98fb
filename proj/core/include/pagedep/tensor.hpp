#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pagedep/rng.hpp"

namespace pagedep::ad {

/// Dense 64-bit real tensor of rank 1 or 2, row major. The gradient buffer
/// exists exactly when requires_grad is set.
class Tensor {
 public:
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;

  int size() const { return static_cast<int>(value.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<int> shape, std::vector<double> values,
                      bool requires_grad = false);
TensorPtr make_scalar(double v, bool requires_grad = false);

std::string shape_string(const std::vector<int>& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Records differentiable operations for one forward pass and replays them in
/// reverse on backward(). A tape and the intermediate tensors it creates
/// belong to a single thread; parameter tensors may be shared read-only.
class Tape {
 public:
  // -- linear algebra
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

  // -- elementwise arithmetic
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);          // same shape
  TensorPtr add_rows(const TensorPtr& a, const TensorPtr& bias);  // bias per row
  TensorPtr add_const(const TensorPtr& a, double c);
  TensorPtr scale(const TensorPtr& a, double c);
  TensorPtr elementwise_mul(const TensorPtr& a, const TensorPtr& b);  // or [1] broadcast
  TensorPtr mul_rows(const TensorPtr& a, const TensorPtr& v);  // scale columns, v per col
  TensorPtr mul_cols(const TensorPtr& a, const TensorPtr& s);  // scale rows, s per row

  // -- shape manipulation
  TensorPtr concat(std::span<const TensorPtr> parts);  // rank-1 concat
  TensorPtr slice(const TensorPtr& a, int offset, int length);  // rank-1
  TensorPtr concat_cols(const TensorPtr& a, const TensorPtr& b);
  TensorPtr concat_rows(std::span<const TensorPtr> parts);
  TensorPtr rows(const TensorPtr& table, std::span<const int> indices);
  TensorPtr reshape(const TensorPtr& a, std::vector<int> shape);

  // -- nonlinearities and reductions
  TensorPtr sigmoid(const TensorPtr& a);
  TensorPtr tanh(const TensorPtr& a);
  TensorPtr relu(const TensorPtr& a);
  TensorPtr maxout(const TensorPtr& a, int pieces);  // groups along last dim
  TensorPtr sum(const TensorPtr& a);                 // scalar

  /// Pooled vector sum_t softmax(u . tanh(w e_t))_t * e_t for e of shape
  /// [T,d], w [a,d], u [a].
  TensorPtr attention_pool(const TensorPtr& e, const TensorPtr& w, const TensorPtr& u);

  /// Inverted dropout, training mode only; callers skip it in evaluation.
  TensorPtr dropout(const TensorPtr& a, double rate, Rng& rng);

  /// Mean cross entropy of softmax(logits) rows against targets. `valid`,
  /// when given, flags the allowed entries per row (flat row-major, size
  /// rows*cols); the softmax is restricted to them. The row probabilities are
  /// written to probs_out when requested.
  TensorPtr softmax_cross_entropy(const TensorPtr& logits, std::span<const int> targets,
                                  const std::vector<char>* valid = nullptr,
                                  std::vector<double>* probs_out = nullptr);

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients of every recorded
  /// operation in reverse order. Throws when loss is not scalar.
  void backward(const TensorPtr& loss);

  void clear() { steps_.clear(); }
  size_t recorded_steps() const { return steps_.size(); }

  /// With recording off the tape computes forward values only: results carry
  /// no gradient buffers and backward() has nothing to replay (inference mode).
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

 private:
  std::vector<std::function<void()>> steps_;
  bool recording_ = true;

  TensorPtr result(std::vector<int> shape, std::vector<double> values,
                   std::initializer_list<TensorPtr> inputs);
  void record(std::function<void()> fn) { steps_.push_back(std::move(fn)); }
};

}  // namespace pagedep::ad
