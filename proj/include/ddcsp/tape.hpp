#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddcsp/dense.hpp"

namespace ddcsp {

// Reverse-mode autodiff over fixed-shape dense matrices. A Tape owns every
// intermediate value of one forward computation; backward() walks the nodes
// in reverse creation order (a topological order by construction) and
// accumulates gradients into every node that requires them.
//
// Everything is a 2-D matrix; scalars are 1x1 and vectors are single rows.
template <typename Scalar>
class Tape {
 public:
  using Mat = DenseMatrix<Scalar>;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var leaf(Mat value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, {});
  }
  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& value(Var v) const { return nodes_[check(v)].value; }

  // Accumulated gradient; zero if backward never reached the node.
  const Mat& grad(Var v) {
    Node& n = nodes_[check(v)];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  size_t size() const { return nodes_.size(); }

  // --- arithmetic ---

  Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Mat out = value(a) + value(b);
    return unary_binary(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      accumulate(a, g);
      accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Mat out = value(a) - value(b);
    return unary_binary(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      accumulate(a, g);
      accumulate(b, Mat(-g));
    });
  }

  // Broadcast a 1 x n row (bias) over every row of a.
  Var add_rowvec(Var a, Var row) {
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
      throw std::invalid_argument("add_rowvec: row must be 1 x cols(a)");
    }
    Mat out = value(a).rowwise() + value(row).row(0);
    return unary_binary(std::move(out), {a, row}, [this, a, row](const Mat& g) {
      accumulate(a, g);
      accumulate(row, Mat(g.colwise().sum()));
    });
  }

  Var scale(Var a, Scalar c) {
    Mat out = value(a) * c;
    return unary_binary(std::move(out), {a}, [this, a, c](const Mat& g) {
      accumulate(a, Mat(g * c));
    });
  }

  Var cmul(Var a, Var b) {
    require_same_shape(a, b, "cmul");
    Mat out = value(a).cwiseProduct(value(b));
    // Cache operand ids only; values stay alive on the tape.
    return unary_binary(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      accumulate(a, Mat(g.cwiseProduct(value(b))));
      accumulate(b, Mat(g.cwiseProduct(value(a))));
    });
  }

  Var square(Var a) {
    Mat out = value(a).cwiseProduct(value(a));
    return unary_binary(std::move(out), {a}, [this, a](const Mat& g) {
      accumulate(a, Mat(Scalar(2) * g.cwiseProduct(value(a))));
    });
  }

  Var matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows()) {
      throw std::invalid_argument("matmul: inner dimensions disagree");
    }
    Mat out = value(a) * value(b);
    return unary_binary(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      accumulate(a, Mat(g * value(b).transpose()));
      accumulate(b, Mat(value(a).transpose() * g));
    });
  }

  Var transpose(Var a) {
    Mat out = value(a).transpose();
    return unary_binary(std::move(out), {a}, [this, a](const Mat& g) {
      accumulate(a, Mat(g.transpose()));
    });
  }

  Var rows(Var a, int begin, int n) {
    Mat out = value(a).middleRows(begin, n);
    return unary_binary(std::move(out), {a}, [this, a, begin, n](const Mat& g) {
      Mat da = Mat::Zero(value(a).rows(), value(a).cols());
      da.middleRows(begin, n) = g;
      accumulate(a, da);
    });
  }

  Var cols(Var a, int begin, int n) {
    Mat out = value(a).middleCols(begin, n);
    return unary_binary(std::move(out), {a}, [this, a, begin, n](const Mat& g) {
      Mat da = Mat::Zero(value(a).rows(), value(a).cols());
      da.middleCols(begin, n) = g;
      accumulate(a, da);
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    Eigen::Index rows_n = value(parts.at(0)).rows(), cols_n = 0;
    for (Var p : parts) cols_n += value(p).cols();
    Mat out(rows_n, cols_n);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    return unary_binary(std::move(out), parts, [this, parts](const Mat& g) {
      Eigen::Index at = 0;
      for (Var p : parts) {
        const Eigen::Index w = value(p).cols();
        accumulate(p, Mat(g.middleCols(at, w)));
        at += w;
      }
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    Eigen::Index cols_n = value(parts.at(0)).cols(), rows_n = 0;
    for (Var p : parts) rows_n += value(p).rows();
    Mat out(rows_n, cols_n);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    return unary_binary(std::move(out), parts, [this, parts](const Mat& g) {
      Eigen::Index at = 0;
      for (Var p : parts) {
        const Eigen::Index h = value(p).rows();
        accumulate(p, Mat(g.middleRows(at, h)));
        at += h;
      }
    });
  }

  // Row-major reshape (independent of Eigen's storage order).
  Var reshape(Var a, int rows_n, int cols_n) {
    const Mat& A = value(a);
    if (A.size() != static_cast<Eigen::Index>(rows_n) * cols_n) {
      throw std::invalid_argument("reshape: element count mismatch");
    }
    Mat out(rows_n, cols_n);
    const Eigen::Index ac = A.cols();
    for (Eigen::Index p = 0; p < A.size(); ++p) {
      out(p / cols_n, p % cols_n) = A(p / ac, p % ac);
    }
    return unary_binary(std::move(out), {a}, [this, a, cols_n](const Mat& g) {
      const Mat& A = value(a);
      Mat da(A.rows(), A.cols());
      const Eigen::Index ac = A.cols();
      for (Eigen::Index p = 0; p < A.size(); ++p) {
        da(p / ac, p % ac) = g(p / cols_n, p % cols_n);
      }
      accumulate(a, da);
    });
  }

  // Embedding lookup: out.row(j) = table.row(idx[j]).
  Var gather_rows(Var table, std::vector<int> idx) {
    const Mat& T = value(table);
    Mat out(static_cast<Eigen::Index>(idx.size()), T.cols());
    for (size_t j = 0; j < idx.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = T.row(idx[j]);
    return unary_binary(std::move(out), {table},
                        [this, table, idx = std::move(idx)](const Mat& g) {
                          Mat dt = Mat::Zero(value(table).rows(), value(table).cols());
                          for (size_t j = 0; j < idx.size(); ++j) {
                            dt.row(idx[j]) += g.row(static_cast<Eigen::Index>(j));
                          }
                          accumulate(table, dt);
                        });
  }

  // --- nonlinearities ---

  Var relu(Var a) {
    Mat out = value(a).cwiseMax(Scalar(0));
    return unary_binary(std::move(out), {a}, [this, a](const Mat& g) {
      Mat da = ((value(a).array() > Scalar(0)).template cast<Scalar>() * g.array()).matrix();
      accumulate(a, da);
    });
  }

  Var log(Var a) {
    Mat out = value(a).array().log().matrix();
    return unary_binary(std::move(out), {a}, [this, a](const Mat& g) {
      Mat da = (g.array() / value(a).array()).matrix();
      accumulate(a, da);
    });
  }

  Var exp(Var a) {
    Mat out = value(a).array().exp().matrix();
    int out_id = next_id();
    return unary_binary(std::move(out), {a}, [this, a, out_id](const Mat& g) {
      accumulate(a, Mat(g.cwiseProduct(nodes_[static_cast<size_t>(out_id)].value)));
    });
  }

  Var softmax_rows(Var a) {
    Mat y = ddcsp::softmax_rows<Scalar>(value(a));
    int out_id = next_id();
    return unary_binary(std::move(y), {a}, [this, a, out_id](const Mat& g) {
      const Mat& y = nodes_[static_cast<size_t>(out_id)].value;
      Mat da(y.rows(), y.cols());
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const Scalar dot = g.row(r).dot(y.row(r));
        da.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
      }
      accumulate(a, da);
    });
  }

  // Row-wise layer normalization with learned gain/bias (1 x n each).
  Var layer_norm(Var a, Var gain, Var bias, Scalar eps = Scalar(1e-5)) {
    const Mat& A = value(a);
    const Eigen::Index n = A.cols();
    Mat xhat(A.rows(), n), inv_sigma(A.rows(), 1);
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      const Scalar mu = A.row(r).mean();
      const Scalar var = (A.row(r).array() - mu).square().mean();
      const Scalar s = Scalar(1) / std::sqrt(var + eps);
      xhat.row(r) = ((A.row(r).array() - mu) * s).matrix();
      inv_sigma(r, 0) = s;
    }
    Mat out(A.rows(), n);
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      out.row(r) = xhat.row(r).cwiseProduct(value(gain).row(0)) + value(bias).row(0);
    }
    const int cache = store_cache(std::move(xhat), std::move(inv_sigma));
    return unary_binary(std::move(out), {a, gain, bias},
                        [this, a, gain, bias, cache](const Mat& g) {
                          const Mat& xhat = caches_[static_cast<size_t>(cache)].first;
                          const Mat& inv_sigma = caches_[static_cast<size_t>(cache)].second;
                          accumulate(gain, Mat(g.cwiseProduct(xhat).colwise().sum()));
                          accumulate(bias, Mat(g.colwise().sum()));
                          Mat da(xhat.rows(), xhat.cols());
                          Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dxh(xhat.cols());
                          for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                            dxh = g.row(r).cwiseProduct(value(gain).row(0));
                            const Scalar m1 = dxh.mean();
                            const Scalar m2 = dxh.cwiseProduct(xhat.row(r)).mean();
                            da.row(r) = (inv_sigma(r, 0) *
                                         (dxh.array() - m1 - xhat.row(r).array() * m2))
                                            .matrix();
                          }
                          accumulate(a, da);
                        });
  }

  // Straight-through discretization: forward emits one-hot argmax per row
  // (ties to the lowest column), backward passes the gradient unchanged.
  Var onehot_argmax_st(Var a) {
    const Mat& A = value(a);
    Mat out = Mat::Zero(A.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < A.cols(); ++c) {
        if (A(r, c) > A(r, best)) best = c;
      }
      out(r, best) = Scalar(1);
    }
    return unary_binary(std::move(out), {a}, [this, a](const Mat& g) { accumulate(a, g); });
  }

  // Mean over masked rows of -log softmax(logits)[target]; empty mask -> 0.
  Var masked_cross_entropy(Var logits, std::vector<int> targets, std::vector<uint8_t> mask) {
    const Mat& H = value(logits);
    if (static_cast<Eigen::Index>(targets.size()) != H.rows() || mask.size() != targets.size()) {
      throw std::invalid_argument("masked_cross_entropy: row count mismatch");
    }
    Mat probs = ddcsp::softmax_rows<Scalar>(H);
    int count = 0;
    Scalar total = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      ++count;
      total -= std::log(probs(static_cast<Eigen::Index>(i), targets[i]));
    }
    Mat out(1, 1);
    out(0, 0) = count > 0 ? total / Scalar(count) : Scalar(0);
    const int cache = store_cache(std::move(probs), Mat());
    return unary_binary(std::move(out), {logits},
                        [this, logits, targets = std::move(targets), mask = std::move(mask),
                         cache, count](const Mat& g) {
                          if (count == 0) return;
                          const Mat& probs = caches_[static_cast<size_t>(cache)].first;
                          Mat dh = Mat::Zero(probs.rows(), probs.cols());
                          const Scalar w = g(0, 0) / Scalar(count);
                          for (size_t i = 0; i < mask.size(); ++i) {
                            if (!mask[i]) continue;
                            const auto r = static_cast<Eigen::Index>(i);
                            dh.row(r) = probs.row(r) * w;
                            dh(r, targets[i]) -= w;
                          }
                          accumulate(logits, dh);
                        });
  }

  // Sum over rows of KL(softmax(h0_row) || softmax(h_row)).
  Var kl_softmax_rows(Var h0, Var h) {
    require_same_shape(h0, h, "kl_softmax_rows");
    const Mat logp = log_softmax_rows<Scalar>(value(h0));
    const Mat logq = log_softmax_rows<Scalar>(value(h));
    Mat p = logp.array().exp().matrix();
    Mat row_kl(p.rows(), 1);
    Scalar total = 0;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      row_kl(r, 0) = p.row(r).dot((logp.row(r) - logq.row(r)));
      total += row_kl(r, 0);
    }
    Mat out(1, 1);
    out(0, 0) = total;
    Mat diff = logp - logq;  // log p - log q, reused for the h0 side
    Mat q = logq.array().exp().matrix();
    const int cache1 = store_cache(std::move(p), std::move(q));
    const int cache2 = store_cache(std::move(diff), std::move(row_kl));
    return unary_binary(std::move(out), {h0, h},
                        [this, h0, h, cache1, cache2](const Mat& g) {
                          const Scalar s = g(0, 0);
                          const Mat& p = caches_[static_cast<size_t>(cache1)].first;
                          const Mat& q = caches_[static_cast<size_t>(cache1)].second;
                          const Mat& diff = caches_[static_cast<size_t>(cache2)].first;
                          const Mat& row_kl = caches_[static_cast<size_t>(cache2)].second;
                          accumulate(h, Mat(s * (q - p)));
                          Mat dh0(p.rows(), p.cols());
                          for (Eigen::Index r = 0; r < p.rows(); ++r) {
                            dh0.row(r) = s * p.row(r).cwiseProduct(
                                                 (diff.row(r).array() - row_kl(r, 0)).matrix());
                          }
                          accumulate(h0, dh0);
                        });
  }

  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return unary_binary(std::move(out), {a}, [this, a](const Mat& g) {
      accumulate(a, Mat(Mat::Constant(value(a).rows(), value(a).cols(), g(0, 0))));
    });
  }

  Var mean(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).mean();
    return unary_binary(std::move(out), {a}, [this, a](const Mat& g) {
      const Scalar w = g(0, 0) / Scalar(value(a).size());
      accumulate(a, Mat(Mat::Constant(value(a).rows(), value(a).cols(), w)));
    });
  }

  // --- engine ---

  void backward(Var out) {
    Node& root = nodes_[check(out)];
    if (root.value.size() != 1) throw std::invalid_argument("backward: output must be scalar");
    if (!root.requires_grad) return;  // constant output: every gradient is zero
    root.grad = Mat::Constant(1, 1, Scalar(1));
    for (size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(n.grad);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(const Mat&)> backward;
  };

  int next_id() const { return static_cast<int>(nodes_.size()); }

  size_t check(Var v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size()) {
      throw std::invalid_argument("invalid tape variable");
    }
    return static_cast<size_t>(v.id);
  }

  void require_same_shape(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
  }

  Var push(Mat value, bool requires_grad, std::function<void(const Mat&)> backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var unary_binary(Mat out, const std::vector<Var>& inputs,
                   std::function<void(const Mat&)> backward) {
    bool rg = false;
    for (Var v : inputs) rg = rg || nodes_[check(v)].requires_grad;
    return push(std::move(out), rg, rg ? std::move(backward) : nullptr);
  }

  void accumulate(Var v, const Mat& g) {
    Node& n = nodes_[check(v)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  int store_cache(Mat a, Mat b) {
    caches_.emplace_back(std::move(a), std::move(b));
    return static_cast<int>(caches_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<Mat, Mat>> caches_;
};

}  // namespace ddcsp
