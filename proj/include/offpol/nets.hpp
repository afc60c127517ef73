#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "offpol/autodiff.hpp"
#include "offpol/tensor.hpp"

namespace offpol::ad {

enum class LayerKind { Linear, BatchNorm, ReLU, Sigmoid };

struct LayerSpec {
  LayerKind kind;
  int in = 0;   // Linear: input width; BatchNorm: feature width
  int out = 0;  // Linear only
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  std::uint64_t seed = 0;

  int input_dim() const;
  int output_dim() const;
  // Throws if adjacent layer dimensions are incompatible.
  void validate() const;
};

// Linear -> BatchNorm -> ReLU per hidden width, then Linear -> Sigmoid.
NetworkSpec make_generator_spec(int in, const std::vector<int>& hidden, int out,
                                std::uint64_t seed);
// Linear -> BatchNorm -> ReLU per hidden width, then Linear to a single
// unbounded output.
NetworkSpec make_discriminator_spec(int in, const std::vector<int>& hidden, std::uint64_t seed);

enum class Mode { Train, Eval };

struct BatchNormLayer {
  Param gamma;
  Param beta;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.9;
};

struct LinearLayer {
  Param weight;  // in x out
  Param bias;    // 1 x out
};

// A network instance: parameters + BatchNorm running statistics.
// Forward in Train mode uses batch statistics (batch >= 2 required when the
// net has BatchNorm) and updates the running statistics; Eval mode uses the
// running statistics and is deterministic row by row.
class Network {
 public:
  Network() = default;
  explicit Network(const NetworkSpec& spec);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  Value forward(Tape& tape, Value input, Mode mode);
  Tensor forward_eval(const Tensor& input) const;

  std::vector<Param*> parameters();
  void zero_grad();

  // Parameters plus running statistics, for checkpoints.
  std::vector<double> snapshot() const;
  void restore(std::span<const double> state);

  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  std::vector<LinearLayer> linears_;
  std::vector<BatchNormLayer> bns_;
};

// Differentiable BatchNorm over columns. In Train mode the batch must have
// at least 2 rows; running statistics are updated as a side effect.
Value batchnorm(Tape& tape, Value input, Param& gamma, Param& beta, BatchNormLayer& state,
                Mode mode);

}  // namespace offpol::ad
