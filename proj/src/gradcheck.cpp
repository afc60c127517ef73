#include "offpol/gradcheck.hpp"

#include <cmath>

#include "offpol/rng.hpp"

namespace offpol::ad {

namespace {

Tensor probe_weights(int rows, int cols) {
  Rng rng(0x9D5FC8E1u);
  Tensor w(rows, cols);
  for (double& e : w.v) e = rng.uniform(0.5, 1.5);
  return w;
}

double probe_loss_value(Network& net, const Tensor& input, Mode mode, const Tensor& w) {
  Tape tape;
  Value out = net.forward(tape, tape.constant(input), mode);
  double s = 0.0;
  const Tensor& o = tape.val(out);
  for (int i = 0; i < o.size(); ++i) s += o.v[i] * w.v[i];
  return s / o.size();
}

}  // namespace

FdReport finite_diff_check(Network& net, const Tensor& input, Mode mode, double h) {
  // Keep the check side-effect free: BatchNorm running stats are restored.
  const std::vector<double> state = net.snapshot();
  net.zero_grad();
  Tensor w;
  {
    Tape tape;
    Value out = net.forward(tape, tape.constant(input), mode);
    const Tensor& o = tape.val(out);
    w = probe_weights(o.rows, o.cols);
    Value loss = tape.mean(tape.mul(out, tape.constant(w)));
    tape.backward(loss);
  }

  FdReport report;
  for (Param* p : net.parameters()) {
    FdEntry entry;
    entry.param = p->name;
    for (int k = 0; k < p->value.size(); ++k) {
      const double orig = p->value.v[k];
      p->value.v[k] = orig + h;
      const double up = probe_loss_value(net, input, mode, w);
      p->value.v[k] = orig - h;
      const double down = probe_loss_value(net, input, mode, w);
      p->value.v[k] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = p->grad.v[k];
      const double dev = std::fabs(an - fd) / std::max(std::fabs(an) + std::fabs(fd), 1e-3);
      if (dev > entry.max_rel_dev) entry.max_rel_dev = dev;
    }
    if (entry.max_rel_dev > report.max_rel_dev) report.max_rel_dev = entry.max_rel_dev;
    report.entries.push_back(std::move(entry));
  }
  net.zero_grad();
  net.restore(state);
  return report;
}

}  // namespace offpol::ad
