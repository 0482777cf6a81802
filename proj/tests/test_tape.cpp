#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "ddcsp/adam.hpp"
#include "ddcsp/checkpoint.hpp"
#include "ddcsp/rng.hpp"
#include "ddcsp/tape.hpp"

using namespace ddcsp;

namespace {

using DTape = Tape<double>;
using Var = DTape::Var;
using Build = std::function<Var(DTape&, const std::vector<Var>&)>;

MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, scale);
  }
  return m;
}

double eval_scalar(const std::vector<MatrixXd>& inputs, const Build& build) {
  DTape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& m : inputs) vars.push_back(tape.leaf(m, false));
  return tape.value(build(tape, vars))(0, 0);
}

// Central finite differences against the tape gradient, elementwise
// scale-aware comparison.
void gradcheck(std::vector<MatrixXd> inputs, const Build& build, double tol = 1e-6,
               double h = 1e-5) {
  DTape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& m : inputs) vars.push_back(tape.leaf(m, true));
  const Var out = build(tape, vars);
  REQUIRE(tape.value(out).size() == 1);
  tape.backward(out);
  std::vector<MatrixXd> grads;
  grads.reserve(inputs.size());
  for (Var v : vars) grads.push_back(tape.grad(v));

  for (size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index r = 0; r < inputs[k].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[k].cols(); ++c) {
        const double saved = inputs[k](r, c);
        inputs[k](r, c) = saved + h;
        const double fp = eval_scalar(inputs, build);
        inputs[k](r, c) = saved - h;
        const double fm = eval_scalar(inputs, build);
        inputs[k](r, c) = saved;
        const double fd = (fp - fm) / (2 * h);
        const double got = grads[k](r, c);
        const double err = std::abs(fd - got) / std::max({1.0, std::abs(fd), std::abs(got)});
        if (err >= tol) {
          CAPTURE(k);
          CAPTURE(r);
          CAPTURE(c);
          CAPTURE(fd);
          CAPTURE(got);
        }
        REQUIRE(err < tol);
      }
    }
  }
}

// Probes a non-scalar result with a fixed random linear functional.
Build probed(const MatrixXd& probe, std::function<Var(DTape&, const std::vector<Var>&)> op) {
  return [probe, op = std::move(op)](DTape& tape, const std::vector<Var>& vars) {
    return tape.sum(tape.cmul(op(tape, vars), tape.constant(probe)));
  };
}

}  // namespace

TEST_CASE("gradcheck: elementwise and linear primitives") {
  Rng rng(101);
  const MatrixXd a = random_matrix(rng, 3, 4);
  const MatrixXd b = random_matrix(rng, 3, 4);
  const MatrixXd p34 = random_matrix(rng, 3, 4);

  gradcheck({a, b}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.add(v[0], v[1]);
            }));
  gradcheck({a, b}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.sub(v[0], v[1]);
            }));
  gradcheck({a, b}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.cmul(v[0], v[1]);
            }));
  gradcheck({a}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.scale(v[0], -1.7);
            }));
  gradcheck({a}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.square(v[0]);
            }));
  gradcheck({a}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.exp(v[0]);
            }));
  gradcheck({a}, [](DTape& t, const std::vector<Var>& v) { return t.sum(v[0]); });
  gradcheck({a}, [](DTape& t, const std::vector<Var>& v) { return t.mean(v[0]); });

  const MatrixXd row = random_matrix(rng, 1, 4);
  gradcheck({a, row}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.add_rowvec(v[0], v[1]);
            }));

  // log on safely positive inputs
  MatrixXd pos = a;
  pos = (pos.array().abs() + 0.5).matrix();
  gradcheck({pos}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.log(v[0]);
            }));

  // relu away from the kink
  MatrixXd off = a;
  for (Eigen::Index r = 0; r < off.rows(); ++r) {
    for (Eigen::Index c = 0; c < off.cols(); ++c) {
      if (std::abs(off(r, c)) < 1e-3) off(r, c) = 0.25;
    }
  }
  gradcheck({off}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.relu(v[0]);
            }));
}

TEST_CASE("gradcheck: matmul, transpose, slicing, reshape, gather") {
  Rng rng(202);
  const MatrixXd a = random_matrix(rng, 3, 5);
  const MatrixXd b = random_matrix(rng, 5, 4);
  const MatrixXd p34 = random_matrix(rng, 3, 4);
  const MatrixXd p53 = random_matrix(rng, 5, 3);

  gradcheck({a, b}, probed(p34, [](DTape& t, const std::vector<Var>& v) {
              return t.matmul(v[0], v[1]);
            }));
  gradcheck({a}, probed(p53, [](DTape& t, const std::vector<Var>& v) {
              return t.transpose(v[0]);
            }));
  gradcheck({a}, probed(random_matrix(rng, 2, 5), [](DTape& t, const std::vector<Var>& v) {
              return t.rows(v[0], 1, 2);
            }));
  gradcheck({a}, probed(random_matrix(rng, 3, 2), [](DTape& t, const std::vector<Var>& v) {
              return t.cols(v[0], 2, 2);
            }));
  gradcheck({a}, probed(random_matrix(rng, 1, 15), [](DTape& t, const std::vector<Var>& v) {
              return t.reshape(v[0], 1, 15);
            }));
  gradcheck({a, a}, probed(random_matrix(rng, 3, 10), [](DTape& t, const std::vector<Var>& v) {
              return t.concat_cols({v[0], v[1]});
            }));
  gradcheck({a, a}, probed(random_matrix(rng, 6, 5), [](DTape& t, const std::vector<Var>& v) {
              return t.concat_rows({v[0], v[1]});
            }));

  const MatrixXd table = random_matrix(rng, 6, 4);
  const std::vector<int> idx = {3, 0, 3, 5, 1};
  gradcheck({table}, probed(random_matrix(rng, 5, 4), [idx](DTape& t, const std::vector<Var>& v) {
              return t.gather_rows(v[0], idx);
            }));
}

TEST_CASE("gradcheck: softmax, layer norm, cross-entropy, KL") {
  Rng rng(303);
  const MatrixXd h = random_matrix(rng, 4, 5);
  const MatrixXd p45 = random_matrix(rng, 4, 5);

  gradcheck({h}, probed(p45, [](DTape& t, const std::vector<Var>& v) {
              return t.softmax_rows(v[0]);
            }));

  const MatrixXd gain = random_matrix(rng, 1, 5, 0.5);
  const MatrixXd bias = random_matrix(rng, 1, 5, 0.5);
  gradcheck({h, gain, bias}, probed(p45, [](DTape& t, const std::vector<Var>& v) {
              return t.layer_norm(v[0], v[1], v[2]);
            }));

  // softmax + cross-entropy composite (the fused masked op).
  const std::vector<int> targets = {2, 0, 4, 1};
  const std::vector<uint8_t> mask = {1, 0, 1, 1};
  gradcheck({h}, [targets, mask](DTape& t, const std::vector<Var>& v) {
    return t.masked_cross_entropy(v[0], targets, mask);
  });

  // Gradient at unmasked rows is exactly zero.
  {
    DTape tape;
    const Var hv = tape.leaf(h, true);
    tape.backward(tape.masked_cross_entropy(hv, targets, mask));
    CHECK(tape.grad(hv).row(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(tape.grad(hv).row(0).cwiseAbs().maxCoeff() > 0.0);
  }

  const MatrixXd h2 = random_matrix(rng, 4, 5);
  gradcheck({h, h2}, [](DTape& t, const std::vector<Var>& v) {
    return t.kl_softmax_rows(v[0], v[1]);
  });

  // Empty mask: zero loss, zero gradient.
  {
    DTape tape;
    const Var hv = tape.leaf(h, true);
    const Var out = tape.masked_cross_entropy(hv, targets, {0, 0, 0, 0});
    CHECK(tape.value(out)(0, 0) == 0.0);
  }
}

TEST_CASE("straight-through discretization: one-hot forward, identity backward") {
  Rng rng(404);
  const MatrixXd h = random_matrix(rng, 6, 4);
  const MatrixXd probe = random_matrix(rng, 6, 4);

  DTape tape;
  const Var hv = tape.leaf(h, true);
  const Var w = tape.onehot_argmax_st(hv);

  const MatrixXd& forward = tape.value(w);
  for (Eigen::Index r = 0; r < forward.rows(); ++r) {
    CHECK(forward.row(r).sum() == 1.0);
    CHECK(forward.row(r).maxCoeff() == 1.0);
    CHECK(forward.row(r).minCoeff() == 0.0);
    Eigen::Index best;
    h.row(r).maxCoeff(&best);
    CHECK(forward(r, best) == 1.0);
  }

  tape.backward(tape.sum(tape.cmul(w, tape.constant(probe))));
  CHECK(tape.grad(hv) == probe);  // passes the upstream gradient unchanged
}

TEST_CASE("gradcheck: attention block composite") {
  Rng rng(505);
  const int L = 4, D = 6, H = 2, dh = D / H;
  const MatrixXd x = random_matrix(rng, L, D, 0.7);
  const MatrixXd wq = random_matrix(rng, D, D, 0.4);
  const MatrixXd wk = random_matrix(rng, D, D, 0.4);
  const MatrixXd wv = random_matrix(rng, D, D, 0.4);
  const MatrixXd probe = random_matrix(rng, L, D);

  gradcheck(
      {x, wq, wk, wv},
      probed(probe,
             [=](DTape& t, const std::vector<Var>& v) {
               const Var q = t.matmul(v[0], v[1]);
               const Var k = t.matmul(v[0], v[2]);
               const Var val = t.matmul(v[0], v[3]);
               std::vector<Var> heads;
               for (int head = 0; head < H; ++head) {
                 const Var qh = t.cols(q, head * dh, dh);
                 const Var kh = t.cols(k, head * dh, dh);
                 const Var vh = t.cols(val, head * dh, dh);
                 const Var scores =
                     t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(double(dh)));
                 heads.push_back(t.matmul(t.softmax_rows(scores), vh));
               }
               return t.concat_cols(heads);
             }),
      1e-4);
}

TEST_CASE("gradient accumulation is order-independent") {
  Rng rng(606);
  const MatrixXd a = random_matrix(rng, 3, 3);
  const MatrixXd b = random_matrix(rng, 3, 3);

  auto run = [&](bool swapped) {
    DTape tape;
    const Var av = tape.leaf(a, true);
    const Var bv = tape.leaf(b, true);
    Var t1, t2;
    if (swapped) {
      t2 = tape.matmul(av, bv);
      t1 = tape.cmul(av, bv);
    } else {
      t1 = tape.cmul(av, bv);
      t2 = tape.matmul(av, bv);
    }
    tape.backward(tape.add(tape.sum(t1), tape.sum(t2)));
    return std::make_pair(MatrixXd(tape.grad(av)), MatrixXd(tape.grad(bv)));
  };
  const auto [ga1, gb1] = run(false);
  const auto [ga2, gb2] = run(true);
  CHECK((ga1 - ga2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((gb1 - gb2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("linear function has exactly the constant gradient") {
  MatrixXd c(2, 3);
  c << 1.5, -2.0, 0.25, 3.0, 0.0, -1.0;
  MatrixXd x = MatrixXd::Zero(2, 3);
  x(0, 1) = 4.0;
  DTape tape;
  const Var xv = tape.leaf(x, true);
  tape.backward(tape.sum(tape.cmul(xv, tape.constant(c))));
  CHECK(tape.grad(xv) == c);
}

TEST_CASE("adam") {
  ParamStore<float> store;
  DenseMatrix<float> init(2, 2);
  init << 1.0f, -2.0f, 0.5f, 3.0f;
  store.add("w", init);

  SUBCASE("zero gradient leaves parameters unchanged") {
    adam_step(store, {{"w", DenseMatrix<float>::Zero(2, 2)}});
    CHECK(store.at("w") == init);
  }

  SUBCASE("first step moves each coordinate by about lr") {
    DenseMatrix<float> g(2, 2);
    g << 0.5f, -3.0f, 10.0f, -0.01f;
    AdamConfig cfg;
    adam_step(store, {{"w", g}}, cfg);
    const DenseMatrix<float> delta = store.at("w") - init;
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        CHECK(std::abs(delta(r, c)) <= static_cast<float>(cfg.lr) * 1.0001f);
        CHECK(std::abs(delta(r, c)) >= static_cast<float>(cfg.lr) * 0.98f);
        CHECK(std::signbit(delta(r, c)) != std::signbit(g(r, c)));
      }
    }
  }

  SUBCASE("identical runs are bit-identical") {
    ParamStore<float> s1, s2;
    s1.add("w", init);
    s2.add("w", init);
    Rng rng(7);
    for (int step = 0; step < 25; ++step) {
      DenseMatrix<float> g(2, 2);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) g(r, c) = static_cast<float>(rng.normal());
      }
      adam_step(s1, {{"w", g}});
      adam_step(s2, {{"w", g}});
    }
    CHECK(s1.at("w") == s2.at("w"));
  }

  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(adam_step(store, {{"w", DenseMatrix<float>::Zero(1, 2)}}),
                    std::invalid_argument);
  }
}

TEST_CASE("checkpoint roundtrip and error paths") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "ddcsp_ckpt_test.bin").string();
  Rng rng(8);

  Checkpoint ckpt;
  ckpt.model_kind = "denoiser-v1";
  ckpt.config = "order=2\nembed_dim=16\n";
  DenseMatrix<float> a(3, 4), b(1, 7);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) a(r, c) = static_cast<float>(rng.normal());
  }
  for (int c = 0; c < 7; ++c) b(0, c) = static_cast<float>(rng.normal());
  ckpt.arrays.emplace_back("alpha", a);
  ckpt.arrays.emplace_back("beta", b);

  save_checkpoint(ckpt, path);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.model_kind == ckpt.model_kind);
  CHECK(loaded.config == ckpt.config);
  REQUIRE(loaded.arrays.size() == 2);
  CHECK(loaded.arrays[0].first == "alpha");
  CHECK(loaded.arrays[0].second == a);  // bit-exact
  CHECK(loaded.arrays[1].second == b);

  SUBCASE("bad magic") {
    auto bytes = [&] {
      std::ifstream in(path, std::ios::binary);
      return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }();
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"), CheckpointError);
  }

  SUBCASE("unsupported version") {
    auto bytes = [&] {
      std::ifstream in(path, std::ios::binary);
      return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }();
    bytes[4] = 2;  // version + 1
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("unsupported version"),
                         CheckpointError);
  }

  SUBCASE("truncated file") {
    auto bytes = [&] {
      std::ifstream in(path, std::ios::binary);
      return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }();
    bytes.resize(bytes.size() / 2);
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), CheckpointError);
  }
}
