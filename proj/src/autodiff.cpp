#include "offpol/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace offpol::ad {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

static CMap emap(const Tensor& t) { return CMap(t.v.data(), t.rows, t.cols); }
static Map emap(Tensor& t) { return Map(t.v.data(), t.rows, t.cols); }

int Tape::push(Tensor val, int p0, int p1) {
  Node n;
  n.grad = Tensor(val.rows, val.cols);
  n.val = std::move(val);
  n.parents = {p0, p1};
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Value v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: value does not belong to this tape");
}

double Tape::scalar(Value v) const {
  check(v);
  if (nodes_[v.id].val.size() != 1)
    throw std::invalid_argument("Tape::scalar: tensor is not 1x1");
  return nodes_[v.id].val.v[0];
}

Value Tape::constant(Tensor t) { return Value{push(std::move(t))}; }

Value Tape::param(Param& p) {
  int id = push(p.value);
  nodes_[id].bound = &p;
  return Value{id};
}

Value Tape::matmul(Value a, Value b) {
  check(a);
  check(b);
  const Tensor& A = x(a.id);
  const Tensor& B = x(b.id);
  if (A.cols != B.rows)
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(A.cols) +
                                " vs " + std::to_string(B.rows) + ")");
  Tensor out(A.rows, B.cols);
  emap(out).noalias() = emap(A) * emap(B);
  int id = push(std::move(out), a.id, b.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& A = t.x(n.parents[0]);
    const Tensor& B = t.x(n.parents[1]);
    emap(t.g(n.parents[0])).noalias() += emap(n.grad) * emap(B).transpose();
    emap(t.g(n.parents[1])).noalias() += emap(A).transpose() * emap(n.grad);
  };
  return Value{id};
}

Value Tape::add_rowvec(Value a, Value b) {
  check(a);
  check(b);
  const Tensor& A = x(a.id);
  const Tensor& B = x(b.id);
  if (B.rows != 1 || B.cols != A.cols)
    throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
  Tensor out = A;
  for (int r = 0; r < A.rows; ++r)
    for (int c = 0; c < A.cols; ++c) out.at(r, c) += B.v[c];
  int id = push(std::move(out), a.id, b.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    Tensor& db = t.g(n.parents[1]);
    for (int i = 0; i < n.grad.size(); ++i) da.v[i] += n.grad.v[i];
    for (int r = 0; r < n.grad.rows; ++r)
      for (int c = 0; c < n.grad.cols; ++c) db.v[c] += n.grad.at(r, c);
  };
  return Value{id};
}

Value Tape::mul_rowvec(Value a, Value b) {
  check(a);
  check(b);
  const Tensor& A = x(a.id);
  const Tensor& B = x(b.id);
  if (B.rows != 1 || B.cols != A.cols)
    throw std::invalid_argument("mul_rowvec: scale must be 1 x cols");
  Tensor out = A;
  for (int r = 0; r < A.rows; ++r)
    for (int c = 0; c < A.cols; ++c) out.at(r, c) *= B.v[c];
  int id = push(std::move(out), a.id, b.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& A = t.x(n.parents[0]);
    const Tensor& B = t.x(n.parents[1]);
    Tensor& da = t.g(n.parents[0]);
    Tensor& db = t.g(n.parents[1]);
    for (int r = 0; r < n.grad.rows; ++r) {
      for (int c = 0; c < n.grad.cols; ++c) {
        da.at(r, c) += n.grad.at(r, c) * B.v[c];
        db.v[c] += n.grad.at(r, c) * A.at(r, c);
      }
    }
  };
  return Value{id};
}

Value Tape::make_batchnorm_node(Value input, Tensor xhat, Tensor invstd, bool train) {
  check(input);
  int id = push(std::move(xhat), input.id);
  nodes_[id].back = [invstd, train](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& xh = n.val;
    Tensor& dx = t.g(n.parents[0]);
    const int rows = xh.rows, cols = xh.cols;
    if (!train) {
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) dx.at(r, c) += n.grad.at(r, c) * invstd.v[c];
      return;
    }
    for (int c = 0; c < cols; ++c) {
      double gsum = 0.0, gxsum = 0.0;
      for (int r = 0; r < rows; ++r) {
        gsum += n.grad.at(r, c);
        gxsum += n.grad.at(r, c) * xh.at(r, c);
      }
      const double gmean = gsum / rows;
      const double gxmean = gxsum / rows;
      for (int r = 0; r < rows; ++r)
        dx.at(r, c) += invstd.v[c] * (n.grad.at(r, c) - gmean - xh.at(r, c) * gxmean);
    }
  };
  return Value{id};
}

static void require_same_shape(const Tensor& A, const Tensor& B, const char* op) {
  if (!A.same_shape(B))
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(A.rows) +
                                "x" + std::to_string(A.cols) + " vs " + std::to_string(B.rows) +
                                "x" + std::to_string(B.cols) + ")");
}

Value Tape::add(Value a, Value b) {
  check(a);
  check(b);
  const Tensor& A = x(a.id);
  const Tensor& B = x(b.id);
  require_same_shape(A, B, "add");
  Tensor out = A;
  for (int i = 0; i < out.size(); ++i) out.v[i] += B.v[i];
  int id = push(std::move(out), a.id, b.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    Tensor& db = t.g(n.parents[1]);
    for (int i = 0; i < n.grad.size(); ++i) {
      da.v[i] += n.grad.v[i];
      db.v[i] += n.grad.v[i];
    }
  };
  return Value{id};
}

Value Tape::sub(Value a, Value b) {
  check(a);
  check(b);
  const Tensor& A = x(a.id);
  const Tensor& B = x(b.id);
  require_same_shape(A, B, "sub");
  Tensor out = A;
  for (int i = 0; i < out.size(); ++i) out.v[i] -= B.v[i];
  int id = push(std::move(out), a.id, b.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    Tensor& db = t.g(n.parents[1]);
    for (int i = 0; i < n.grad.size(); ++i) {
      da.v[i] += n.grad.v[i];
      db.v[i] -= n.grad.v[i];
    }
  };
  return Value{id};
}

Value Tape::mul(Value a, Value b) {
  check(a);
  check(b);
  const Tensor& A = x(a.id);
  const Tensor& B = x(b.id);
  require_same_shape(A, B, "mul");
  Tensor out = A;
  for (int i = 0; i < out.size(); ++i) out.v[i] *= B.v[i];
  int id = push(std::move(out), a.id, b.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& A = t.x(n.parents[0]);
    const Tensor& B = t.x(n.parents[1]);
    Tensor& da = t.g(n.parents[0]);
    Tensor& db = t.g(n.parents[1]);
    for (int i = 0; i < n.grad.size(); ++i) {
      da.v[i] += n.grad.v[i] * B.v[i];
      db.v[i] += n.grad.v[i] * A.v[i];
    }
  };
  return Value{id};
}

Value Tape::div(Value a, Value b) {
  check(a);
  check(b);
  const Tensor& A = x(a.id);
  const Tensor& B = x(b.id);
  require_same_shape(A, B, "div");
  Tensor out = A;
  for (int i = 0; i < out.size(); ++i) out.v[i] /= B.v[i];
  int id = push(std::move(out), a.id, b.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& B = t.x(n.parents[1]);
    const Tensor& C = n.val;
    Tensor& da = t.g(n.parents[0]);
    Tensor& db = t.g(n.parents[1]);
    for (int i = 0; i < n.grad.size(); ++i) {
      da.v[i] += n.grad.v[i] / B.v[i];
      db.v[i] -= n.grad.v[i] * C.v[i] / B.v[i];
    }
  };
  return Value{id};
}

Value Tape::affine(Value a, double scale, double shift) {
  check(a);
  Tensor out = x(a.id);
  for (double& e : out.v) e = scale * e + shift;
  int id = push(std::move(out), a.id);
  nodes_[id].back = [scale](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    for (int i = 0; i < n.grad.size(); ++i) da.v[i] += scale * n.grad.v[i];
  };
  return Value{id};
}

Value Tape::relu(Value a) {
  check(a);
  Tensor out = x(a.id);
  for (double& e : out.v) e = e > 0.0 ? e : 0.0;
  int id = push(std::move(out), a.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& A = t.x(n.parents[0]);
    Tensor& da = t.g(n.parents[0]);
    for (int i = 0; i < n.grad.size(); ++i)
      if (A.v[i] > 0.0) da.v[i] += n.grad.v[i];
  };
  return Value{id};
}

Value Tape::sigmoid(Value a) {
  check(a);
  Tensor out = x(a.id);
  for (double& e : out.v) e = 1.0 / (1.0 + std::exp(-e));
  int id = push(std::move(out), a.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    for (int i = 0; i < n.grad.size(); ++i) {
      const double s = n.val.v[i];
      da.v[i] += n.grad.v[i] * s * (1.0 - s);
    }
  };
  return Value{id};
}

Value Tape::log(Value a) {
  check(a);
  Tensor out = x(a.id);
  for (double& e : out.v) e = std::log(e);
  int id = push(std::move(out), a.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& A = t.x(n.parents[0]);
    Tensor& da = t.g(n.parents[0]);
    for (int i = 0; i < n.grad.size(); ++i) da.v[i] += n.grad.v[i] / A.v[i];
  };
  return Value{id};
}

Value Tape::exp(Value a) {
  check(a);
  Tensor out = x(a.id);
  for (double& e : out.v) e = std::exp(e);
  int id = push(std::move(out), a.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    for (int i = 0; i < n.grad.size(); ++i) da.v[i] += n.grad.v[i] * n.val.v[i];
  };
  return Value{id};
}

Value Tape::sqrt(Value a) {
  check(a);
  Tensor out = x(a.id);
  for (double& e : out.v) e = std::sqrt(e);
  int id = push(std::move(out), a.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    for (int i = 0; i < n.grad.size(); ++i) da.v[i] += n.grad.v[i] * 0.5 / n.val.v[i];
  };
  return Value{id};
}

Value Tape::square(Value a) {
  check(a);
  Tensor out = x(a.id);
  for (double& e : out.v) e = e * e;
  int id = push(std::move(out), a.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& A = t.x(n.parents[0]);
    Tensor& da = t.g(n.parents[0]);
    for (int i = 0; i < n.grad.size(); ++i) da.v[i] += n.grad.v[i] * 2.0 * A.v[i];
  };
  return Value{id};
}

Value Tape::clamp(Value a, double lo, double hi) {
  check(a);
  Tensor out = x(a.id);
  for (double& e : out.v) e = e < lo ? lo : (e > hi ? hi : e);
  int id = push(std::move(out), a.id);
  nodes_[id].back = [lo, hi](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& A = t.x(n.parents[0]);
    Tensor& da = t.g(n.parents[0]);
    for (int i = 0; i < n.grad.size(); ++i)
      if (A.v[i] >= lo && A.v[i] <= hi) da.v[i] += n.grad.v[i];
  };
  return Value{id};
}

Value Tape::clip_max(Value a, double cap) {
  check(a);
  Tensor out = x(a.id);
  for (double& e : out.v) e = e < cap ? e : cap;
  int id = push(std::move(out), a.id);
  nodes_[id].back = [cap](Tape& t, int self) {
    auto& n = t.node(self);
    const Tensor& A = t.x(n.parents[0]);
    Tensor& da = t.g(n.parents[0]);
    for (int i = 0; i < n.grad.size(); ++i)
      if (A.v[i] < cap) da.v[i] += n.grad.v[i];
  };
  return Value{id};
}

Value Tape::sum(Value a) {
  check(a);
  double s = 0.0;
  for (double e : x(a.id).v) s += e;
  int id = push(Tensor::scalar(s), a.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    const double gs = n.grad.v[0];
    for (double& e : da.v) e += gs;
  };
  return Value{id};
}

Value Tape::mean(Value a) {
  check(a);
  const Tensor& A = x(a.id);
  if (A.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (double e : A.v) s += e;
  const double inv = 1.0 / A.size();
  int id = push(Tensor::scalar(s * inv), a.id);
  nodes_[id].back = [inv](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    const double gs = n.grad.v[0] * inv;
    for (double& e : da.v) e += gs;
  };
  return Value{id};
}

Value Tape::row_sum(Value a) {
  check(a);
  const Tensor& A = x(a.id);
  Tensor out(A.rows, 1);
  for (int r = 0; r < A.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < A.cols; ++c) s += A.at(r, c);
    out.v[r] = s;
  }
  int id = push(std::move(out), a.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    for (int r = 0; r < da.rows; ++r)
      for (int c = 0; c < da.cols; ++c) da.at(r, c) += n.grad.v[r];
  };
  return Value{id};
}

Value Tape::concat_cols(Value a, Value b) {
  check(a);
  check(b);
  const Tensor& A = x(a.id);
  const Tensor& B = x(b.id);
  if (A.rows != B.rows) throw std::invalid_argument("concat_cols: row mismatch");
  Tensor out(A.rows, A.cols + B.cols);
  for (int r = 0; r < A.rows; ++r) {
    for (int c = 0; c < A.cols; ++c) out.at(r, c) = A.at(r, c);
    for (int c = 0; c < B.cols; ++c) out.at(r, A.cols + c) = B.at(r, c);
  }
  int id = push(std::move(out), a.id, b.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    Tensor& db = t.g(n.parents[1]);
    for (int r = 0; r < n.grad.rows; ++r) {
      for (int c = 0; c < da.cols; ++c) da.at(r, c) += n.grad.at(r, c);
      for (int c = 0; c < db.cols; ++c) db.at(r, c) += n.grad.at(r, da.cols + c);
    }
  };
  return Value{id};
}

Value Tape::concat_rows(Value a, Value b) {
  check(a);
  check(b);
  const Tensor& A = x(a.id);
  const Tensor& B = x(b.id);
  if (A.cols != B.cols) throw std::invalid_argument("concat_rows: column mismatch");
  Tensor out(A.rows + B.rows, A.cols);
  std::copy(A.v.begin(), A.v.end(), out.v.begin());
  std::copy(B.v.begin(), B.v.end(), out.v.begin() + A.v.size());
  int id = push(std::move(out), a.id, b.id);
  nodes_[id].back = [](Tape& t, int self) {
    auto& n = t.node(self);
    Tensor& da = t.g(n.parents[0]);
    Tensor& db = t.g(n.parents[1]);
    for (size_t i = 0; i < da.v.size(); ++i) da.v[i] += n.grad.v[i];
    for (size_t i = 0; i < db.v.size(); ++i) db.v[i] += n.grad.v[da.v.size() + i];
  };
  return Value{id};
}

void Tape::backward(Value scalar_loss) {
  check(scalar_loss);
  if (backward_done_)
    throw std::logic_error("Tape::backward: backward already ran on this tape");
  Node& loss = nodes_[scalar_loss.id];
  if (loss.val.size() != 1)
    throw std::invalid_argument("Tape::backward: loss must be a scalar (1x1), got " +
                                std::to_string(loss.val.rows) + "x" +
                                std::to_string(loss.val.cols));
  backward_done_ = true;
  loss.grad.v[0] = 1.0;
  for (int id = scalar_loss.id; id >= 0; --id) {
    if (nodes_[id].back) nodes_[id].back(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.bound) {
      for (int i = 0; i < n.grad.size(); ++i) n.bound->grad.v[i] += n.grad.v[i];
    }
  }
}

}  // namespace offpol::ad
