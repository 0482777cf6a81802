#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "ddcsp/dense.hpp"

namespace ddcsp {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameters with per-parameter Adam moment buffers and step counters.
// Iteration order is the name order (std::map), so updates are deterministic.
template <typename Scalar>
struct ParamStore {
  using Mat = DenseMatrix<Scalar>;
  struct Entry {
    Mat value;
    Mat m;
    Mat v;
    long step = 0;
  };
  std::map<std::string, Entry> params;

  Mat& add(const std::string& name, Mat init) {
    if (params.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Entry e;
    e.m = Mat::Zero(init.rows(), init.cols());
    e.v = Mat::Zero(init.rows(), init.cols());
    e.value = std::move(init);
    return params.emplace(name, std::move(e)).first->second.value;
  }
  const Mat& at(const std::string& name) const { return params.at(name).value; }
};

// Bias-corrected adaptive-moment update. Parameters without an entry in
// `grads` are left untouched (their step counter does not advance).
template <typename Scalar>
void adam_step(ParamStore<Scalar>& store, const std::map<std::string, DenseMatrix<Scalar>>& grads,
               const AdamConfig& cfg = {}) {
  for (auto& [name, p] : store.params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const auto& g = it->second;
    if (g.rows() != p.value.rows() || g.cols() != p.value.cols()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    }
    ++p.step;
    const Scalar b1 = static_cast<Scalar>(cfg.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg.beta2);
    p.m = b1 * p.m + (Scalar(1) - b1) * g;
    p.v = (b2 * p.v.array() + (Scalar(1) - b2) * g.array().square()).matrix();
    const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta1, p.step));
    const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta2, p.step));
    p.value.array() -= static_cast<Scalar>(cfg.lr) * (p.m.array() / c1) /
                       ((p.v.array() / c2).sqrt() + static_cast<Scalar>(cfg.eps));
  }
}

}  // namespace ddcsp
