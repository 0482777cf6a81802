#include "ddcsp/guidance.hpp"

namespace ddcsp {

double analytic_value(const MatrixXd& P, const GroupTable& groups) {
  const int N = groups.side();
  double v = 0.0;
  for (const auto& group : groups.groups) {
    for (int d = 0; d < N; ++d) {
      double count = 0.0;
      for (int i : group) count += P(i, d);
      v -= (count - 1.0) * (count - 1.0);
    }
  }
  return v;
}

MatrixXd analytic_value_grad(const MatrixXd& P, const GroupTable& groups) {
  const int N = groups.side();
  MatrixXd grad = MatrixXd::Zero(P.rows(), P.cols());
  for (const auto& group : groups.groups) {
    for (int d = 0; d < N; ++d) {
      double count = 0.0;
      for (int i : group) count += P(i, d);
      const double g = -2.0 * (count - 1.0);
      for (int i : group) grad(i, d) += g;
    }
  }
  return grad;
}

ValueFunction make_analytic_value(int order) {
  const GroupTable& gt = group_table(order);
  const int N = gt.side();
  const int L = N * N;
  // Incidence matrix: rows are groups, columns are cells.
  MatrixXd incidence = MatrixXd::Zero(3 * N, L);
  for (size_t g = 0; g < gt.groups.size(); ++g) {
    for (int i : gt.groups[g]) incidence(static_cast<Eigen::Index>(g), i) = 1.0;
  }
  ValueFunction vf;
  vf.kind = "analytic";
  vf.build = [incidence = std::move(incidence), N](Tape<double>& tape,
                                                   Tape<double>::Var grid) {
    auto counts = tape.matmul(tape.constant(incidence), grid);  // 3N x N digit counts
    auto ones = tape.constant(MatrixXd::Ones(3 * N, N));
    return tape.scale(tape.sum(tape.square(tape.sub(counts, ones))), -1.0);
  };
  return vf;
}

ValueFunction make_learned_value(std::shared_ptr<const ValueNetModel<double>> net) {
  ValueFunction vf;
  vf.kind = "learned";
  vf.build = [net = std::move(net)](Tape<double>& tape, Tape<double>::Var grid) {
    const VarMap<double> w = lift_params(tape, net->params, false);
    return net->forward(tape, w, grid);
  };
  return vf;
}

std::pair<MatrixXd, MatrixXd> gumbel_softmax(const MatrixXd& h, double tau, bool hard, Rng& rng) {
  MatrixXd noise(h.rows(), h.cols());
  for (Eigen::Index r = 0; r < noise.rows(); ++r) {
    for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(r, c) = rng.gumbel();
  }
  return gumbel_softmax(h, tau, hard, noise);
}

std::pair<MatrixXd, MatrixXd> gumbel_softmax(const MatrixXd& h, double tau, bool hard,
                                             const MatrixXd& noise) {
  if (tau <= 0) throw std::invalid_argument("gumbel_softmax: tau must be > 0");
  if (noise.rows() != h.rows() || noise.cols() != h.cols()) {
    throw std::invalid_argument("gumbel_softmax: noise shape mismatch");
  }
  const MatrixXd noisy = log_softmax_rows(h) + noise;
  MatrixXd soft = softmax_rows<double>(MatrixXd(noisy / tau));
  MatrixXd onehot;
  if (hard) {
    onehot = MatrixXd::Zero(h.rows(), h.cols());
    for (Eigen::Index r = 0; r < noisy.rows(); ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < noisy.cols(); ++c) {
        if (noisy(r, c) > noisy(r, best)) best = c;
      }
      onehot(r, best) = 1.0;
    }
  }
  return {std::move(soft), std::move(onehot)};
}

double kl_logits(const MatrixXd& h0, const MatrixXd& h) {
  if (h0.rows() != h.rows() || h0.cols() != h.cols()) {
    throw std::invalid_argument("kl_logits: shape mismatch");
  }
  const MatrixXd logp = log_softmax_rows(h0);
  const MatrixXd logq = log_softmax_rows(h);
  double total = 0.0;
  for (Eigen::Index r = 0; r < h0.rows(); ++r) {
    for (Eigen::Index c = 0; c < h0.cols(); ++c) {
      const double p = std::exp(logp(r, c));
      total += p * (logp(r, c) - logq(r, c));
    }
  }
  return total;
}

LogitGrid guided_refine(const LogitGrid& h0, const ValueFunction& value,
                        const GuidanceConfig& cfg, Rng& rng,
                        const std::vector<uint8_t>& frozen) {
  cfg.validate();
  if (!frozen.empty() && static_cast<Eigen::Index>(frozen.size()) != h0.rows()) {
    throw std::invalid_argument("guided_refine: frozen mask size mismatch");
  }
  LogitGrid h = h0;
  if (cfg.steps == 0) return h;

  MatrixXd fixed_noise;
  if (cfg.fixed_noise) {
    fixed_noise.resize(h.rows(), h.cols());
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      for (Eigen::Index c = 0; c < h.cols(); ++c) fixed_noise(r, c) = rng.gumbel();
    }
  }

  for (int it = 0; it < cfg.steps; ++it) {
    Tape<double> tape;
    auto hv = tape.leaf(h, true);
    auto h0v = tape.constant(h0);

    // gum(h): softmax((log softmax(h) + g) / tau), discretized when hard.
    MatrixXd noise(h.rows(), h.cols());
    if (cfg.fixed_noise) {
      noise = fixed_noise;
    } else {
      for (Eigen::Index r = 0; r < h.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.cols(); ++c) noise(r, c) = rng.gumbel();
      }
    }
    auto logpi = tape.log(tape.softmax_rows(hv));
    auto z = tape.scale(tape.add(logpi, tape.constant(noise)), 1.0 / cfg.tau);
    auto y = tape.softmax_rows(z);
    auto proposal = cfg.hard ? tape.onehot_argmax_st(y) : y;

    auto score = value.build(tape, proposal);
    auto objective = cfg.kl_weight > 0
                         ? tape.sub(score, tape.scale(tape.kl_softmax_rows(h0v, hv),
                                                      cfg.kl_weight))
                         : score;
    tape.backward(objective);

    MatrixXd step = cfg.eta * tape.grad(hv);
    if (!frozen.empty()) {
      for (Eigen::Index r = 0; r < step.rows(); ++r) {
        if (frozen[static_cast<size_t>(r)] != 0) step.row(r).setZero();
      }
    }
    h += step;
    if (!h.allFinite()) {
      throw GuidanceError("guided_refine: non-finite logits at iteration " + std::to_string(it));
    }
  }
  return h;
}

RefineFn make_refiner(ValueFunction value, GuidanceConfig cfg, Rng& rng) {
  return [value = std::move(value), cfg, &rng](const LogitGrid& h0,
                                               const std::vector<uint8_t>& frozen) {
    return guided_refine(h0, value, cfg, rng, frozen);
  };
}

}  // namespace ddcsp
