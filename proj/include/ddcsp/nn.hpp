#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ddcsp/adam.hpp"
#include "ddcsp/config.hpp"
#include "ddcsp/rng.hpp"
#include "ddcsp/sudoku.hpp"
#include "ddcsp/tape.hpp"

namespace ddcsp {

template <typename Scalar>
using VarMap = std::map<std::string, typename Tape<Scalar>::Var>;

// Puts every parameter on the tape as a leaf; returns name -> var.
template <typename Scalar>
VarMap<Scalar> lift_params(Tape<Scalar>& tape, const ParamStore<Scalar>& store,
                           bool requires_grad) {
  VarMap<Scalar> vars;
  for (const auto& [name, entry] : store.params) {
    vars[name] = tape.leaf(entry.value, requires_grad);
  }
  return vars;
}

// Pulls accumulated gradients back out, keyed like the store.
template <typename Scalar>
std::map<std::string, DenseMatrix<Scalar>> collect_grads(Tape<Scalar>& tape,
                                                         const VarMap<Scalar>& vars) {
  std::map<std::string, DenseMatrix<Scalar>> grads;
  for (const auto& [name, var] : vars) grads[name] = tape.grad(var);
  return grads;
}

// ---------------------------------------------------------------------------
// Denoiser: small bidirectional transformer over board token sequences with
// additive timestep conditioning and Sudoku-structure position embeddings.
// ---------------------------------------------------------------------------

struct DenoiserConfig {
  int order = 2;
  int embed_dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn_dim = 256;
  int max_t = 16;  // timestep embeddings cover 0..max_t
  double dropout = 0.0;
  uint64_t seed = 1;

  int side() const { return order * order; }
  int seq_len() const { return side() * side(); }
  int vocab() const { return side() + 1; }  // digits + mask

  std::string encode() const;
  static DenoiserConfig decode(const std::string& text);
  static DenoiserConfig defaults_for_order(int order);
};

inline std::string DenoiserConfig::encode() const {
  KeyValues kv;
  kv.set_int("order", order);
  kv.set_int("embed_dim", embed_dim);
  kv.set_int("layers", layers);
  kv.set_int("heads", heads);
  kv.set_int("ffn_dim", ffn_dim);
  kv.set_int("max_t", max_t);
  kv.set_double("dropout", dropout);
  kv.set_int("seed", static_cast<long>(seed));
  return format_kv_text(kv);
}

inline DenoiserConfig DenoiserConfig::decode(const std::string& text) {
  const KeyValues kv = parse_kv_text(text);
  DenoiserConfig c;
  c.order = static_cast<int>(kv.get_int("order", c.order));
  c.embed_dim = static_cast<int>(kv.get_int("embed_dim", c.embed_dim));
  c.layers = static_cast<int>(kv.get_int("layers", c.layers));
  c.heads = static_cast<int>(kv.get_int("heads", c.heads));
  c.ffn_dim = static_cast<int>(kv.get_int("ffn_dim", c.ffn_dim));
  c.max_t = static_cast<int>(kv.get_int("max_t", c.max_t));
  c.dropout = kv.get_double("dropout", c.dropout);
  c.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<long>(c.seed)));
  return c;
}

inline DenoiserConfig DenoiserConfig::defaults_for_order(int order) {
  DenoiserConfig c;
  c.order = order;
  if (order == 2) {
    c.embed_dim = 64;
    c.layers = 2;
    c.heads = 4;
    c.ffn_dim = 256;
    c.max_t = 16;
  } else {
    c.embed_dim = 128;
    c.layers = 4;
    c.heads = 4;
    c.ffn_dim = 512;
    c.max_t = 64;
  }
  return c;
}

template <typename Scalar>
struct DenoiserModel {
  using Var = typename Tape<Scalar>::Var;
  using Mat = DenseMatrix<Scalar>;

  DenoiserConfig cfg;
  ParamStore<Scalar> params;

  static DenoiserModel init(const DenoiserConfig& cfg) {
    DenoiserModel model;
    model.cfg = cfg;
    if (cfg.embed_dim % cfg.heads != 0) {
      throw std::invalid_argument("embed_dim must be divisible by heads");
    }
    Rng rng(cfg.seed);
    auto& p = model.params;
    const int D = cfg.embed_dim, L = cfg.seq_len(), N = cfg.side();
    p.add("tok_emb", normal(rng, cfg.vocab(), D));
    p.add("pos_emb", normal(rng, L, D));
    p.add("row_emb", normal(rng, N, D));
    p.add("col_emb", normal(rng, N, D));
    p.add("blk_emb", normal(rng, N, D));
    p.add("time_emb", normal(rng, cfg.max_t + 1, D));
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      p.add(pre + "ln1.g", Mat::Ones(1, D));
      p.add(pre + "ln1.b", Mat::Zero(1, D));
      p.add(pre + "wq", normal(rng, D, D));
      p.add(pre + "bq", Mat::Zero(1, D));
      p.add(pre + "wk", normal(rng, D, D));
      p.add(pre + "bk", Mat::Zero(1, D));
      p.add(pre + "wv", normal(rng, D, D));
      p.add(pre + "bv", Mat::Zero(1, D));
      // Residual-branch projections get a 1/sqrt(2*layers) down-scaled init.
      const double res = 0.02 / std::sqrt(2.0 * cfg.layers);
      p.add(pre + "wo", normal(rng, D, D, res));
      p.add(pre + "bo", Mat::Zero(1, D));
      p.add(pre + "ln2.g", Mat::Ones(1, D));
      p.add(pre + "ln2.b", Mat::Zero(1, D));
      p.add(pre + "ffn.w1", normal(rng, D, cfg.ffn_dim));
      p.add(pre + "ffn.b1", Mat::Zero(1, cfg.ffn_dim));
      p.add(pre + "ffn.w2", normal(rng, cfg.ffn_dim, D, res));
      p.add(pre + "ffn.b2", Mat::Zero(1, D));
    }
    p.add("lnf.g", Mat::Ones(1, D));
    p.add("lnf.b", Mat::Zero(1, D));
    p.add("head.w", normal(rng, D, N));
    p.add("head.b", Mat::Zero(1, N));
    return model;
  }

  // Batched forward: `tokens` holds B sequences of length L back to back,
  // `ts` one timestep per sequence. Returns (B*L) x N digit logits.
  Var forward(Tape<Scalar>& tape, const VarMap<Scalar>& w, const std::vector<uint8_t>& tokens,
              const std::vector<int>& ts, bool training = false, Rng* dropout_rng = nullptr) const {
    const int L = cfg.seq_len(), N = cfg.side(), D = cfg.embed_dim, H = cfg.heads;
    const int B = static_cast<int>(ts.size());
    if (tokens.size() != static_cast<size_t>(B) * static_cast<size_t>(L)) {
      throw std::invalid_argument("denoiser forward: token count mismatch");
    }
    const GroupTable& gt = group_table(cfg.order);

    std::vector<int> tok_idx(tokens.size()), pos_idx(tokens.size()), row_idx(tokens.size()),
        col_idx(tokens.size()), blk_idx(tokens.size()), time_idx(tokens.size());
    for (int b = 0; b < B; ++b) {
      if (ts[static_cast<size_t>(b)] < 0 || ts[static_cast<size_t>(b)] > cfg.max_t) {
        throw std::invalid_argument("denoiser forward: timestep out of range");
      }
      for (int i = 0; i < L; ++i) {
        const size_t j = static_cast<size_t>(b) * L + i;
        tok_idx[j] = tokens[j];
        pos_idx[j] = i;
        row_idx[j] = gt.row_group(i);
        col_idx[j] = gt.col_group(i) - N;
        blk_idx[j] = gt.block_group(i) - 2 * N;
        time_idx[j] = ts[static_cast<size_t>(b)];
      }
    }

    Var x = tape.gather_rows(w.at("tok_emb"), tok_idx);
    x = tape.add(x, tape.gather_rows(w.at("pos_emb"), pos_idx));
    x = tape.add(x, tape.gather_rows(w.at("row_emb"), row_idx));
    x = tape.add(x, tape.gather_rows(w.at("col_emb"), col_idx));
    x = tape.add(x, tape.gather_rows(w.at("blk_emb"), blk_idx));
    x = tape.add(x, tape.gather_rows(w.at("time_emb"), time_idx));

    const int dh = D / H;
    const Scalar att_scale = Scalar(1) / static_cast<Scalar>(std::sqrt(double(dh)));
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      Var a = tape.layer_norm(x, w.at(pre + "ln1.g"), w.at(pre + "ln1.b"));
      Var q = tape.add_rowvec(tape.matmul(a, w.at(pre + "wq")), w.at(pre + "bq"));
      Var k = tape.add_rowvec(tape.matmul(a, w.at(pre + "wk")), w.at(pre + "bk"));
      Var v = tape.add_rowvec(tape.matmul(a, w.at(pre + "wv")), w.at(pre + "bv"));
      std::vector<Var> per_example;
      per_example.reserve(static_cast<size_t>(B));
      for (int b = 0; b < B; ++b) {
        Var qb = tape.rows(q, b * L, L);
        Var kb = tape.rows(k, b * L, L);
        Var vb = tape.rows(v, b * L, L);
        std::vector<Var> heads;
        heads.reserve(static_cast<size_t>(H));
        for (int h = 0; h < H; ++h) {
          Var qh = tape.cols(qb, h * dh, dh);
          Var kh = tape.cols(kb, h * dh, dh);
          Var vh = tape.cols(vb, h * dh, dh);
          Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), att_scale);
          Var att = tape.softmax_rows(scores);
          heads.push_back(tape.matmul(att, vh));
        }
        per_example.push_back(tape.concat_cols(heads));
      }
      Var o = B == 1 ? per_example[0] : tape.concat_rows(per_example);
      o = tape.add_rowvec(tape.matmul(o, w.at(pre + "wo")), w.at(pre + "bo"));
      o = maybe_dropout(tape, o, training, dropout_rng);
      x = tape.add(x, o);

      Var f = tape.layer_norm(x, w.at(pre + "ln2.g"), w.at(pre + "ln2.b"));
      f = tape.add_rowvec(tape.matmul(f, w.at(pre + "ffn.w1")), w.at(pre + "ffn.b1"));
      f = tape.relu(f);
      f = tape.add_rowvec(tape.matmul(f, w.at(pre + "ffn.w2")), w.at(pre + "ffn.b2"));
      f = maybe_dropout(tape, f, training, dropout_rng);
      x = tape.add(x, f);
    }
    Var xf = tape.layer_norm(x, w.at("lnf.g"), w.at("lnf.b"));
    return tape.add_rowvec(tape.matmul(xf, w.at("head.w")), w.at("head.b"));
  }

 private:
  static Mat normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev = 0.02) {
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        m(r, c) = static_cast<Scalar>(rng.normal(0.0, stddev));
      }
    }
    return m;
  }

  Var maybe_dropout(Tape<Scalar>& tape, Var x, bool training, Rng* rng) const {
    if (!training || cfg.dropout <= 0.0) return x;
    if (!rng) throw std::invalid_argument("dropout requires an rng in training mode");
    const auto& val = tape.value(x);
    Mat mask(val.rows(), val.cols());
    const Scalar keep = static_cast<Scalar>(1.0 - cfg.dropout);
    for (Eigen::Index r = 0; r < val.rows(); ++r) {
      for (Eigen::Index c = 0; c < val.cols(); ++c) {
        mask(r, c) = rng->u01() < cfg.dropout ? Scalar(0) : Scalar(1) / keep;
      }
    }
    return tape.cmul(x, tape.constant(std::move(mask)));
  }
};

// ---------------------------------------------------------------------------
// Value network: MLP scoring a relaxed/one-hot board grid (L x N), higher is
// better (target is -violations).
// ---------------------------------------------------------------------------

struct ValueNetConfig {
  int order = 2;
  int hidden_dim = 128;
  uint64_t seed = 1;

  int side() const { return order * order; }
  int seq_len() const { return side() * side(); }

  std::string encode() const {
    KeyValues kv;
    kv.set_int("order", order);
    kv.set_int("hidden_dim", hidden_dim);
    kv.set_int("seed", static_cast<long>(seed));
    return format_kv_text(kv);
  }
  static ValueNetConfig decode(const std::string& text) {
    const KeyValues kv = parse_kv_text(text);
    ValueNetConfig c;
    c.order = static_cast<int>(kv.get_int("order", c.order));
    c.hidden_dim = static_cast<int>(kv.get_int("hidden_dim", c.hidden_dim));
    c.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<long>(c.seed)));
    return c;
  }
};

template <typename Scalar>
struct ValueNetModel {
  using Var = typename Tape<Scalar>::Var;
  using Mat = DenseMatrix<Scalar>;

  ValueNetConfig cfg;
  ParamStore<Scalar> params;

  static ValueNetModel init(const ValueNetConfig& cfg) {
    ValueNetModel model;
    model.cfg = cfg;
    Rng rng(cfg.seed);
    const int in = cfg.seq_len() * cfg.side();
    const int hd = cfg.hidden_dim;
    auto norm = [&rng](Eigen::Index r, Eigen::Index c, double sd) {
      Mat m(r, c);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = static_cast<Scalar>(rng.normal(0.0, sd));
      return m;
    };
    model.params.add("w1", norm(in, hd, 1.0 / std::sqrt(double(in))));
    model.params.add("b1", Mat::Zero(1, hd));
    model.params.add("w2", norm(hd, hd, 1.0 / std::sqrt(double(hd))));
    model.params.add("b2", Mat::Zero(1, hd));
    model.params.add("w3", norm(hd, 1, 1.0 / std::sqrt(double(hd))));
    model.params.add("b3", Mat::Zero(1, 1));
    return model;
  }

  // grid: (L x N) relaxed board on the tape; returns a 1x1 score.
  Var forward(Tape<Scalar>& tape, const VarMap<Scalar>& w, Var grid) const {
    Var x = tape.reshape(grid, 1, cfg.seq_len() * cfg.side());
    x = tape.relu(tape.add_rowvec(tape.matmul(x, w.at("w1")), w.at("b1")));
    x = tape.relu(tape.add_rowvec(tape.matmul(x, w.at("w2")), w.at("b2")));
    return tape.add_rowvec(tape.matmul(x, w.at("w3")), w.at("b3"));
  }
};

}  // namespace ddcsp
