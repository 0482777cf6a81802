#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ddcsp/dense.hpp"
#include "ddcsp/mlm.hpp"
#include "ddcsp/nn.hpp"
#include "ddcsp/rng.hpp"
#include "ddcsp/sudoku.hpp"
#include "ddcsp/tape.hpp"

namespace ddcsp {

// Differentiable constraint energy over a relaxed board P (L x N rows
// summing to 1): v(P) = -sum over groups g and digits d of (c_{g,d} - 1)^2
// where c_{g,d} is the expected count of digit d in group g. Zero exactly on
// one-hot encodings of valid solutions.
double analytic_value(const MatrixXd& P, const GroupTable& groups);
MatrixXd analytic_value_grad(const MatrixXd& P, const GroupTable& groups);

// Tape-buildable scorer of relaxed boards; higher is better.
struct ValueFunction {
  std::string kind;  // "analytic" or "learned"
  std::function<Tape<double>::Var(Tape<double>&, Tape<double>::Var)> build;
};

ValueFunction make_analytic_value(int order);
ValueFunction make_learned_value(std::shared_ptr<const ValueNetModel<double>> net);

// Gumbel-softmax draw over each row of `h`: y = softmax((log pi + g)/tau)
// with pi = softmax(h) and g i.i.d. Gumbel(0,1). Returns the soft relaxation
// and the one-hot argmax of (log pi + g). The explicit-noise overload takes
// g as a matrix, for deterministic checks.
std::pair<MatrixXd, MatrixXd> gumbel_softmax(const MatrixXd& h, double tau, bool hard, Rng& rng);
std::pair<MatrixXd, MatrixXd> gumbel_softmax(const MatrixXd& h, double tau, bool hard,
                                             const MatrixXd& noise);

// Sum over positions of KL(softmax(h0_row) || softmax(h_row)).
double kl_logits(const MatrixXd& h0, const MatrixXd& h);

struct GuidanceConfig {
  int steps = 5;
  double eta = 0.5;       // step size applied to both gradient terms
  double kl_weight = 0.1;  // lambda
  double tau = 0.5;
  bool hard = true;
  int every = 1;             // refine every Nth reverse timestep
  bool fixed_noise = false;  // draw Gumbel noise once instead of per step
  std::string value_source = "learned";  // "analytic" | "learned"
  std::string value_ckpt;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("guidance steps must be >= 0");
    if (tau <= 0) throw std::invalid_argument("guidance tau must be > 0");
    if (kl_weight < 0) throw std::invalid_argument("guidance lambda must be >= 0");
    if (eta <= 0) throw std::invalid_argument("guidance eta must be > 0");
    if (every < 1) throw std::invalid_argument("guidance every must be >= 1");
  }
};

struct GuidanceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Regularized gradient ascent on the logits:
//   h <- h + eta * grad_h v(gum(h)) - eta * lambda * grad_h KL(pi(h0) || pi(h))
// Rows flagged in `frozen` (non-zero entries) are left untouched. Throws
// GuidanceError if the logits stop being finite.
LogitGrid guided_refine(const LogitGrid& h0, const ValueFunction& value,
                        const GuidanceConfig& cfg, Rng& rng,
                        const std::vector<uint8_t>& frozen = {});

// Adapter for the sampling loop.
RefineFn make_refiner(ValueFunction value, GuidanceConfig cfg, Rng& rng);

}  // namespace ddcsp
