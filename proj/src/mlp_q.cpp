#include <Eigen/Dense>

#include <array>
#include <cmath>

#include "hindsight/agent.hpp"

namespace hindsight {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

InputEncoder make_encoder(const Environment& env) {
  InputEncoder enc;
  if (env.kind() == EnvKind::bit_flip) {
    const int n = env.size();
    enc.width = static_cast<std::size_t>(2 * n);
    enc.encode = [n](State s, Goal g, std::span<double> out) {
      for (int i = 0; i < n; ++i) {
        out[i] = static_cast<double>((s.code >> i) & 1u);
        out[n + i] = static_cast<double>((g.code >> i) & 1u);
      }
    };
  } else {
    const int k = env.size();
    enc.width = static_cast<std::size_t>(4 * k);
    enc.encode = [k](State s, Goal g, std::span<double> out) {
      std::fill(out.begin(), out.end(), 0.0);
      const auto sc = static_cast<int>(s.code);
      const auto gc = static_cast<int>(g.code);
      out[sc % k] = 1.0;
      out[k + sc / k] = 1.0;
      out[2 * k + gc % k] = 1.0;
      out[3 * k + gc / k] = 1.0;
    };
  }
  return enc;
}

namespace {

struct AdamSlot {
  Matrix m;
  Matrix v;
  void init(Eigen::Index rows, Eigen::Index cols) {
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
  }
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_step(Matrix& param, const Matrix& grad, AdamSlot& slot, double lr, long step) {
  slot.m = kBeta1 * slot.m + (1.0 - kBeta1) * grad;
  slot.v = kBeta2 * slot.v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
  param.array() -= lr * (slot.m.array() / c1) / ((slot.v.array() / c2).sqrt() + kAdamEps);
}

}  // namespace

struct MlpQ::Net {
  InputEncoder encoder;
  std::size_t actions = 0;
  Matrix w1, b1, w2, b2;  // b1, b2 are single rows
  AdamSlot sw1, sb1, sw2, sb2;
  long step = 0;

  void forward_row(State s, Goal g, std::span<double> out) const {
    RowVector x(static_cast<Eigen::Index>(encoder.width));
    encoder.encode(s, g, std::span<double>(x.data(), encoder.width));
    const RowVector h = (x * w1 + b1).cwiseMax(0.0);
    const RowVector q = h * w2 + b2;
    for (std::size_t a = 0; a < actions; ++a) out[a] = q(static_cast<Eigen::Index>(a));
  }
};

MlpQ::MlpQ(InputEncoder encoder, std::size_t num_actions, std::size_t hidden, Rng rng) : net_(std::make_unique<Net>()) {
  if (num_actions == 0 || num_actions > kMaxActions) throw ContractViolation("unsupported action count");
  if (hidden == 0 || encoder.width == 0) throw ContractViolation("network layers must be nonempty");
  Net& n = *net_;
  n.encoder = std::move(encoder);
  n.actions = num_actions;
  const auto in = static_cast<Eigen::Index>(n.encoder.width);
  const auto hid = static_cast<Eigen::Index>(hidden);
  const auto out = static_cast<Eigen::Index>(num_actions);
  const auto fill = [&rng](Matrix& m, Eigen::Index r, Eigen::Index c, double limit) {
    m.resize(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  };
  // Fan-in scaled uniform weights keep the initial Q values small; wider draws make
  // the bootstrapped targets diverge.
  fill(n.w1, in, hid, 1.0 / std::sqrt(static_cast<double>(in)));
  fill(n.w2, hid, out, 1.0 / std::sqrt(static_cast<double>(hid)));
  n.b1 = Matrix::Zero(1, hid);
  n.b2 = Matrix::Zero(1, out);
  n.sw1.init(in, hid);
  n.sb1.init(1, hid);
  n.sw2.init(hid, out);
  n.sb2.init(1, out);
}

MlpQ::~MlpQ() = default;
MlpQ::MlpQ(MlpQ&&) noexcept = default;
MlpQ& MlpQ::operator=(MlpQ&&) noexcept = default;

std::size_t MlpQ::num_actions() const { return net_->actions; }

double MlpQ::value(State s, Goal g, Action a) const {
  std::array<double, kMaxActions> q;
  net_->forward_row(s, g, std::span<double>(q.data(), net_->actions));
  return q[a];
}

void MlpQ::action_values(State s, Goal g, std::span<double> out) const { net_->forward_row(s, g, out); }

void MlpQ::learn(std::span<const WeightedTransition> batch, const AgentConfig& config) {
  if (batch.empty()) return;
  Net& n = *net_;
  const auto rows = static_cast<Eigen::Index>(batch.size());
  const auto width = static_cast<Eigen::Index>(n.encoder.width);

  // Loss: mean_i 0.5 * w_i * (Q_i - y_i)^2 with y_i = Q_i + delta_i held fixed.
  Matrix x(rows, width);
  Matrix dq = Matrix::Zero(rows, static_cast<Eigen::Index>(n.actions));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& item = batch[static_cast<std::size_t>(i)];
    const auto& rt = item.transition;
    n.encoder.encode(rt.base.state, rt.goal, std::span<double>(x.row(i).data(), n.encoder.width));
    const double delta = td_error(*this, rt, config.gamma, config.td_mode);
    dq(i, rt.base.action) = -item.weight * delta / static_cast<double>(rows);
  }
  const Matrix pre = (x * n.w1).rowwise() + n.b1.row(0);
  const Matrix h = pre.cwiseMax(0.0);

  const Matrix gw2 = h.transpose() * dq;
  const Matrix gb2 = dq.colwise().sum();
  const Matrix dh = (dq * n.w2.transpose()).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  const Matrix gw1 = x.transpose() * dh;
  const Matrix gb1 = dh.colwise().sum();

  ++n.step;
  adam_step(n.w1, gw1, n.sw1, config.learning_rate, n.step);
  adam_step(n.b1, gb1, n.sb1, config.learning_rate, n.step);
  adam_step(n.w2, gw2, n.sw2, config.learning_rate, n.step);
  adam_step(n.b2, gb2, n.sb2, config.learning_rate, n.step);
}

}  // namespace hindsight
