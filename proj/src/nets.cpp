#include "offpol/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "offpol/rng.hpp"

namespace offpol::ad {

int NetworkSpec::input_dim() const {
  for (const auto& l : layers)
    if (l.kind == LayerKind::Linear || l.kind == LayerKind::BatchNorm) return l.in;
  throw std::logic_error("NetworkSpec: no dimensioned layer");
}

int NetworkSpec::output_dim() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    if (it->kind == LayerKind::Linear) return it->out;
    else if (it->kind == LayerKind::BatchNorm) return it->in;
  throw std::logic_error("NetworkSpec: no dimensioned layer");
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw std::invalid_argument("NetworkSpec: empty layer list");
  int width = -1;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::Linear:
        if (l.in <= 0 || l.out <= 0)
          throw std::invalid_argument("NetworkSpec: Linear needs positive dimensions");
        if (width != -1 && width != l.in)
          throw std::invalid_argument("NetworkSpec: Linear input width " + std::to_string(l.in) +
                                      " does not match previous width " + std::to_string(width));
        width = l.out;
        break;
      case LayerKind::BatchNorm:
        if (l.in <= 0) throw std::invalid_argument("NetworkSpec: BatchNorm needs a width");
        if (width != -1 && width != l.in)
          throw std::invalid_argument("NetworkSpec: BatchNorm width mismatch");
        width = l.in;
        break;
      case LayerKind::ReLU:
      case LayerKind::Sigmoid:
        break;
    }
  }
}

NetworkSpec make_generator_spec(int in, const std::vector<int>& hidden, int out,
                                std::uint64_t seed) {
  NetworkSpec spec;
  spec.seed = seed;
  int width = in;
  for (int h : hidden) {
    spec.layers.push_back({LayerKind::Linear, width, h});
    spec.layers.push_back({LayerKind::BatchNorm, h, h});
    spec.layers.push_back({LayerKind::ReLU});
    width = h;
  }
  spec.layers.push_back({LayerKind::Linear, width, out});
  spec.layers.push_back({LayerKind::Sigmoid});
  spec.validate();
  return spec;
}

NetworkSpec make_discriminator_spec(int in, const std::vector<int>& hidden, std::uint64_t seed) {
  NetworkSpec spec;
  spec.seed = seed;
  int width = in;
  for (int h : hidden) {
    spec.layers.push_back({LayerKind::Linear, width, h});
    spec.layers.push_back({LayerKind::BatchNorm, h, h});
    spec.layers.push_back({LayerKind::ReLU});
    width = h;
  }
  spec.layers.push_back({LayerKind::Linear, width, 1});
  spec.validate();
  return spec;
}

Network::Network(const NetworkSpec& spec) : spec_(spec) {
  spec_.validate();
  Rng rng(spec_.seed);
  int li = 0, bi = 0;
  for (const auto& l : spec_.layers) {
    if (l.kind == LayerKind::Linear) {
      LinearLayer lin;
      Tensor w(l.in, l.out);
      const double bound = std::sqrt(6.0 / (l.in + l.out));
      for (double& e : w.v) e = rng.uniform(-bound, bound);
      lin.weight = Param("L" + std::to_string(li) + ".W", std::move(w));
      lin.bias = Param("L" + std::to_string(li) + ".b", Tensor(1, l.out));
      linears_.push_back(std::move(lin));
      ++li;
    } else if (l.kind == LayerKind::BatchNorm) {
      BatchNormLayer bn;
      bn.gamma = Param("BN" + std::to_string(bi) + ".gamma", Tensor::full(1, l.in, 1.0));
      bn.beta = Param("BN" + std::to_string(bi) + ".beta", Tensor(1, l.in));
      bn.running_mean = Tensor(1, l.in);
      bn.running_var = Tensor::full(1, l.in, 1.0);
      bns_.push_back(std::move(bn));
      ++bi;
    }
  }
}

Value batchnorm(Tape& tape, Value input, Param& gamma, Param& beta, BatchNormLayer& state,
                Mode mode) {
  const Tensor& X = tape.val(input);
  const int cols = X.cols;
  if (cols != state.running_mean.cols)
    throw std::invalid_argument("batchnorm: width mismatch");

  Tensor mean(1, cols), var(1, cols);
  if (mode == Mode::Train) {
    if (X.rows < 2)
      throw std::invalid_argument("batchnorm: train mode needs a batch of at least 2 rows");
    for (int c = 0; c < cols; ++c) {
      double m = 0.0;
      for (int r = 0; r < X.rows; ++r) m += X.at(r, c);
      m /= X.rows;
      double v = 0.0;
      for (int r = 0; r < X.rows; ++r) {
        const double d = X.at(r, c) - m;
        v += d * d;
      }
      v /= X.rows;
      mean.v[c] = m;
      var.v[c] = v;
    }
    for (int c = 0; c < cols; ++c) {
      state.running_mean.v[c] =
          state.momentum * state.running_mean.v[c] + (1.0 - state.momentum) * mean.v[c];
      state.running_var.v[c] =
          state.momentum * state.running_var.v[c] + (1.0 - state.momentum) * var.v[c];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Tensor invstd(1, cols);
  for (int c = 0; c < cols; ++c) invstd.v[c] = 1.0 / std::sqrt(var.v[c] + state.eps);

  Tensor xhat(X.rows, cols);
  for (int r = 0; r < X.rows; ++r)
    for (int c = 0; c < cols; ++c) xhat.at(r, c) = (X.at(r, c) - mean.v[c]) * invstd.v[c];

  Value xhat_v = tape.make_batchnorm_node(input, std::move(xhat), invstd, mode == Mode::Train);

  Value g = tape.param(gamma);
  Value b = tape.param(beta);
  // out = xhat * gamma + beta, broadcasting the 1 x cols parameters.
  Value scaled = tape.mul_rowvec(xhat_v, g);
  return tape.add_rowvec(scaled, b);
}

Value Network::forward(Tape& tape, Value input, Mode mode) {
  const Tensor& X = tape.val(input);
  if (X.cols != spec_.input_dim())
    throw std::invalid_argument("Network::forward: input width " + std::to_string(X.cols) +
                                " does not match spec input " +
                                std::to_string(spec_.input_dim()));
  if (X.rows < 1) throw std::invalid_argument("Network::forward: empty batch");
  Value h = input;
  int li = 0, bi = 0;
  for (const auto& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::Linear: {
        Value w = tape.param(linears_[li].weight);
        Value b = tape.param(linears_[li].bias);
        h = tape.add_rowvec(tape.matmul(h, w), b);
        ++li;
        break;
      }
      case LayerKind::BatchNorm: {
        auto& bn = bns_[bi];
        h = batchnorm(tape, h, bn.gamma, bn.beta, bn, mode);
        ++bi;
        break;
      }
      case LayerKind::ReLU:
        h = tape.relu(h);
        break;
      case LayerKind::Sigmoid:
        h = tape.sigmoid(h);
        break;
    }
  }
  return h;
}

Tensor Network::forward_eval(const Tensor& input) const {
  if (input.cols != spec_.input_dim())
    throw std::invalid_argument("Network::forward_eval: input width mismatch");
  Tensor h = input;
  int li = 0, bi = 0;
  for (const auto& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::Linear: {
        const auto& lin = linears_[li];
        Tensor out(h.rows, l.out);
        for (int r = 0; r < h.rows; ++r) {
          for (int c = 0; c < l.out; ++c) {
            double s = lin.bias.value.v[c];
            for (int k = 0; k < l.in; ++k) s += h.at(r, k) * lin.weight.value.at(k, c);
            out.at(r, c) = s;
          }
        }
        h = std::move(out);
        ++li;
        break;
      }
      case LayerKind::BatchNorm: {
        const auto& bn = bns_[bi];
        for (int r = 0; r < h.rows; ++r) {
          for (int c = 0; c < h.cols; ++c) {
            const double xhat = (h.at(r, c) - bn.running_mean.v[c]) /
                                std::sqrt(bn.running_var.v[c] + bn.eps);
            h.at(r, c) = xhat * bn.gamma.value.v[c] + bn.beta.value.v[c];
          }
        }
        ++bi;
        break;
      }
      case LayerKind::ReLU:
        for (double& e : h.v) e = e > 0.0 ? e : 0.0;
        break;
      case LayerKind::Sigmoid:
        for (double& e : h.v) e = 1.0 / (1.0 + std::exp(-e));
        break;
    }
  }
  return h;
}

std::vector<Param*> Network::parameters() {
  std::vector<Param*> out;
  for (auto& l : linears_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& b : bns_) {
    out.push_back(&b.gamma);
    out.push_back(&b.beta);
  }
  return out;
}

void Network::zero_grad() {
  for (Param* p : parameters()) p->zero_grad();
}

std::vector<double> Network::snapshot() const {
  std::vector<double> out;
  for (const auto& l : linears_) {
    out.insert(out.end(), l.weight.value.v.begin(), l.weight.value.v.end());
    out.insert(out.end(), l.bias.value.v.begin(), l.bias.value.v.end());
  }
  for (const auto& b : bns_) {
    out.insert(out.end(), b.gamma.value.v.begin(), b.gamma.value.v.end());
    out.insert(out.end(), b.beta.value.v.begin(), b.beta.value.v.end());
    out.insert(out.end(), b.running_mean.v.begin(), b.running_mean.v.end());
    out.insert(out.end(), b.running_var.v.begin(), b.running_var.v.end());
  }
  return out;
}

void Network::restore(std::span<const double> state) {
  size_t pos = 0;
  auto take = [&](Tensor& t) {
    if (pos + t.v.size() > state.size())
      throw std::invalid_argument("Network::restore: state too short");
    std::copy(state.begin() + pos, state.begin() + pos + t.v.size(), t.v.begin());
    pos += t.v.size();
  };
  for (auto& l : linears_) {
    take(l.weight.value);
    take(l.bias.value);
  }
  for (auto& b : bns_) {
    take(b.gamma.value);
    take(b.beta.value);
    take(b.running_mean);
    take(b.running_var);
  }
  if (pos != state.size()) throw std::invalid_argument("Network::restore: state size mismatch");
}

}  // namespace offpol::ad
