#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "offpol/tensor.hpp"

namespace offpol::ad {

// A trainable parameter. Gradients accumulate across backward passes until
// the owner clears them.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor val)
      : name(std::move(n)), value(std::move(val)), grad(value.rows, value.cols) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in topological order; backward walks
// them in reverse. One forward/backward pair per tape.
class Tape {
 public:
  Value constant(Tensor t);
  Value param(Param& p);

  // y = a * b   (matrix product)
  Value matmul(Value a, Value b);
  // y = a + broadcast rows of b (b is 1 x cols)
  Value add_rowvec(Value a, Value b);
  // y = a * broadcast rows of b (b is 1 x cols)
  Value mul_rowvec(Value a, Value b);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);  // elementwise
  Value div(Value a, Value b);  // elementwise
  // y = scale * a + shift
  Value affine(Value a, double scale, double shift);
  Value relu(Value a);
  Value sigmoid(Value a);
  Value log(Value a);
  Value exp(Value a);
  Value sqrt(Value a);
  Value square(Value a);
  // Pass-through gradient inside [lo, hi], zero outside.
  Value clamp(Value a, double lo, double hi);
  // y = min(a, cap); gradient is zero where the cap is active.
  Value clip_max(Value a, double cap);
  Value sum(Value a);       // 1x1
  Value mean(Value a);      // 1x1
  Value row_sum(Value a);   // rows x 1
  Value concat_cols(Value a, Value b);
  Value concat_rows(Value a, Value b);

  // Normalization step of BatchNorm: emits xhat with the row-coupled
  // train-mode backward. invstd is 1 x cols of 1/sqrt(var + eps).
  Value make_batchnorm_node(Value input, Tensor xhat, Tensor invstd, bool train);

  void backward(Value scalar_loss);

  const Tensor& val(Value v) const { return nodes_[v.id].val; }
  const Tensor& grad(Value v) const { return nodes_[v.id].grad; }
  double scalar(Value v) const;

  bool backward_done() const { return backward_done_; }
  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::array<int, 2> parents{-1, -1};
    std::function<void(Tape&, int)> back;
    Param* bound = nullptr;
  };

  int push(Tensor val, int p0 = -1, int p1 = -1);
  Node& node(int id) { return nodes_[id]; }
  Tensor& g(int id) { return nodes_[id].grad; }
  const Tensor& x(int id) const { return nodes_[id].val; }
  void check(Value v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace offpol::ad
