#include "doctest.h"

#include "caseil/nn.hpp"
#include "caseil/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <vector>

using namespace caseil;
using namespace caseil::nn;

namespace {

// Central finite difference against an analytic gradient. `f` must be a pure
// function of the perturbed buffer. Relative error uses max(1, |a|+|n|) so
// near-zero gradients are compared absolutely.
double fd_rel_error(std::vector<double>& buf, std::size_t i, double analytic,
                    const std::function<double()>& f, double h = 1e-5) {
  const double keep = buf[i];
  buf[i] = keep + h;
  const double fp = f();
  buf[i] = keep - h;
  const double fm = f();
  buf[i] = keep;
  const double numeric = (fp - fm) / (2.0 * h);
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic) + std::abs(numeric));
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = scale * (2.0 * rng.uniform01() - 1.0);
  return t;
}

// Scalarize a tensor with fixed weights so every output entry contributes.
double weighted_sum(const Tensor& t, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.data.size(); ++i) s += t.data[i] * w.data[i];
  return s;
}

}  // namespace

TEST_CASE("tensor shape accounting") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.data.size() == 6);
  for (double x : t.data) CHECK(x == 0.0);
  CHECK_THROWS_AS(Tensor({0, 3}), NnError);
  CHECK_THROWS_AS(Tensor({-1}), NnError);
  CHECK(shape_string({4, 7}) == "[4,7]");
}

TEST_CASE("dense identity weights pass input through") {
  Tensor w({3, 3});
  for (int i = 0; i < 3; ++i) w.data[static_cast<std::size_t>(i * 3 + i)] = 1.0;
  Tensor b({3});
  Tensor in({2, 3});
  in.data = {1.0, -2.0, 0.5, 4.0, 0.0, -1.0};
  Tensor out = dense(in, w, b);
  CHECK(out.shape == std::vector<int>{2, 3});
  CHECK(out.data == in.data);

  b.data = {10.0, 20.0, 30.0};
  out = dense(in, w, b);
  CHECK(out.data[0] == 11.0);
  CHECK(out.data[4] == 20.0);
  CHECK(out.data[5] == 29.0);
}

TEST_CASE("dense rejects mismatched shapes and non-finite values") {
  Tensor w({3, 2});
  Tensor b({2});
  Tensor in({4, 5});
  CHECK_THROWS_AS(dense(in, w, b), NnError);
  Tensor ok({4, 3});
  ok.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dense(ok, w, b), NnError);
  Tensor bad_bias({3});
  Tensor in3({4, 3});
  CHECK_THROWS_AS(dense(in3, w, bad_bias), NnError);
}

TEST_CASE("dense backward matches finite differences") {
  Rng rng(stream_seed(901, "dense-fd"));
  const int B = 3, M = 4, N = 5;
  Tensor in = random_tensor({B, M}, rng);
  Tensor w = random_tensor({M, N}, rng);
  Tensor b = random_tensor({N}, rng);
  Tensor cw = random_tensor({B, N}, rng);  // scalarization weights

  auto loss = [&]() { return weighted_sum(dense(in, w, b), cw); };

  Tensor dw({M, N}), db({N});
  Tensor din = dense_backward(in, w, cw, dw, db);
  CHECK(din.shape == in.shape);

  for (std::size_t i = 0; i < in.data.size(); ++i)
    CHECK(fd_rel_error(in.data, i, din.data[i], loss) < 1e-6);
  for (std::size_t i = 0; i < w.data.size(); ++i)
    CHECK(fd_rel_error(w.data, i, dw.data[i], loss) < 1e-6);
  for (std::size_t i = 0; i < b.data.size(); ++i)
    CHECK(fd_rel_error(b.data, i, db.data[i], loss) < 1e-6);
}

TEST_CASE("dense backward accumulates into existing gradients") {
  Rng rng(stream_seed(902, "dense-acc"));
  Tensor in = random_tensor({2, 3}, rng);
  Tensor w = random_tensor({3, 2}, rng);
  Tensor d_out = random_tensor({2, 2}, rng);
  Tensor dw1({3, 2}), db1({2});
  dense_backward(in, w, d_out, dw1, db1);
  Tensor dw2 = dw1, db2 = db1;
  dense_backward(in, w, d_out, dw2, db2);
  for (std::size_t i = 0; i < dw1.data.size(); ++i)
    CHECK(dw2.data[i] == 2.0 * dw1.data[i]);
  for (std::size_t i = 0; i < db1.data.size(); ++i)
    CHECK(db2.data[i] == 2.0 * db1.data[i]);
}

TEST_CASE("relu clamps negatives and gates gradients") {
  Tensor in({1, 4});
  in.data = {-3.0, 0.0, 2.5, -0.1};
  Tensor out = relu(in);
  CHECK(out.data == std::vector<double>{0.0, 0.0, 2.5, 0.0});

  Tensor d_out({1, 4});
  d_out.data = {1.0, 1.0, 1.0, 1.0};
  Tensor din = relu_backward(in, d_out);
  // Gradient at exactly zero is the zero subgradient.
  CHECK(din.data == std::vector<double>{0.0, 0.0, 1.0, 0.0});
}

TEST_CASE("softmax cross-entropy analytic values") {
  Tensor logits({6});
  auto [loss, grad] = softmax_xent(logits, 2);
  CHECK(loss == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  for (int i = 0; i < 6; ++i) {
    const double expect = (i == 2) ? (1.0 / 6.0 - 1.0) : (1.0 / 6.0);
    CHECK(grad.data[static_cast<std::size_t>(i)] == doctest::Approx(expect).epsilon(1e-12));
  }

  Tensor sharp({4});
  sharp.data = {0.0, 50.0, 0.0, 0.0};
  CHECK(softmax_xent(sharp, 1).first <= 1e-9);
  CHECK(softmax_xent(sharp, 1).first >= 0.0);

  // Shift invariance: adding a constant to all logits leaves the loss alone.
  Tensor shifted = sharp;
  for (double& x : shifted.data) x += 1234.5;
  CHECK(softmax_xent(shifted, 1).first ==
        doctest::Approx(softmax_xent(sharp, 1).first).epsilon(1e-12));

  CHECK_THROWS_AS(softmax_xent(logits, 6), NnError);
  CHECK_THROWS_AS(softmax_xent(logits, -1), NnError);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
  Rng rng(stream_seed(903, "xent-fd"));
  for (int rep = 0; rep < 4; ++rep) {
    Tensor logits = random_tensor({6}, rng, 2.0);
    const int target = static_cast<int>(rng.below(6));
    Tensor grad = softmax_xent(logits, target).second;
    auto loss = [&]() { return softmax_xent(logits, target).first; };
    for (std::size_t i = 0; i < logits.data.size(); ++i)
      CHECK(fd_rel_error(logits.data, i, grad.data[i], loss) < 1e-6);
  }
}

TEST_CASE("batched softmax cross-entropy means the per-row losses") {
  Rng rng(stream_seed(904, "xent-batch"));
  const int B = 5, C = 6;
  Tensor logits = random_tensor({B, C}, rng, 2.0);
  std::vector<int> targets;
  for (int r = 0; r < B; ++r) targets.push_back(static_cast<int>(rng.below(6)));

  auto [batch_loss, grad] = softmax_xent_batch(logits, targets);

  double mean = 0.0;
  for (int r = 0; r < B; ++r) {
    Tensor row({C});
    for (int c = 0; c < C; ++c) row.data[static_cast<std::size_t>(c)] = logits.data[static_cast<std::size_t>(r * C + c)];
    auto [row_loss, row_grad] = softmax_xent(row, targets[static_cast<std::size_t>(r)]);
    mean += row_loss;
    for (int c = 0; c < C; ++c)
      CHECK(grad.data[static_cast<std::size_t>(r * C + c)] ==
            doctest::Approx(row_grad.data[static_cast<std::size_t>(c)] / B).epsilon(1e-12));
  }
  mean /= B;
  CHECK(batch_loss == doctest::Approx(mean).epsilon(1e-12));

  std::vector<int> short_targets{0, 1};
  CHECK_THROWS_AS(softmax_xent_batch(logits, short_targets), NnError);
}

TEST_CASE("triplet margin analytic corners") {
  Tensor a({3}), p({3}), n({3});
  a.data = {1.0, 2.0, 3.0};
  p = a;
  n.data = {5.0, 5.0, 5.0};
  // d(a,p)=0, d(a,n) large: hinge inactive.
  CHECK(triplet_margin(a, p, n, 1.0, nullptr, nullptr, nullptr) == 0.0);

  // All equal: loss == margin exactly.
  CHECK(triplet_margin(a, a, a, 1.0, nullptr, nullptr, nullptr) == 1.0);
  CHECK(triplet_margin(a, a, a, 0.25, nullptr, nullptr, nullptr) == 0.25);

  // Inactive hinge contributes zero gradient.
  Tensor da({3}), dp({3}), dn({3});
  triplet_margin(a, p, n, 1.0, &da, &dp, &dn);
  for (double x : da.data) CHECK(x == 0.0);
  for (double x : dp.data) CHECK(x == 0.0);
  for (double x : dn.data) CHECK(x == 0.0);

  Tensor short_n({2});
  CHECK_THROWS_AS(triplet_margin(a, p, short_n, 1.0, nullptr, nullptr, nullptr), NnError);
}

TEST_CASE("triplet margin gradient matches finite differences away from kinks") {
  Rng rng(stream_seed(905, "triplet-fd"));
  int checked = 0;
  while (checked < 6) {
    Tensor a = random_tensor({4}, rng);
    Tensor p = random_tensor({4}, rng);
    Tensor n = random_tensor({4}, rng);
    const double loss = triplet_margin(a, p, n, 1.0, nullptr, nullptr, nullptr);
    if (loss < 0.05) continue;  // stay clear of the hinge kink
    Tensor da({4}), dp({4}), dn({4});
    triplet_margin(a, p, n, 1.0, &da, &dp, &dn);
    auto f = [&]() { return triplet_margin(a, p, n, 1.0, nullptr, nullptr, nullptr); };
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(fd_rel_error(a.data, i, da.data[i], f) < 1e-6);
      CHECK(fd_rel_error(p.data, i, dp.data[i], f) < 1e-6);
      CHECK(fd_rel_error(n.data, i, dn.data[i], f) < 1e-6);
    }
    ++checked;
  }
}

TEST_CASE("triplet margin accumulates gradients") {
  Rng rng(stream_seed(906, "triplet-acc"));
  Tensor a = random_tensor({4}, rng);
  Tensor p = random_tensor({4}, rng);
  Tensor n = random_tensor({4}, rng);
  if (triplet_margin(a, p, n, 5.0, nullptr, nullptr, nullptr) <= 0.0) return;
  Tensor da1({4}), da2({4});
  triplet_margin(a, p, n, 5.0, &da1, nullptr, nullptr);
  triplet_margin(a, p, n, 5.0, &da2, nullptr, nullptr);
  triplet_margin(a, p, n, 5.0, &da2, nullptr, nullptr);
  for (std::size_t i = 0; i < 4; ++i) CHECK(da2.data[i] == 2.0 * da1.data[i]);
}

TEST_CASE("param store initialization and bookkeeping") {
  ParamStore store;
  Rng rng(stream_seed(907, "init"));
  Param& w = store.add("enc/w0", {9, 4}, &rng);
  CHECK(store.size() == 1);
  CHECK(store.contains("enc/w0"));
  CHECK_FALSE(store.contains("enc/w1"));
  const double bound = 1.0 / 3.0;  // fan_in 9
  bool nonzero = false;
  for (double x : w.value.data) {
    CHECK(x <= bound);
    CHECK(x >= -bound);
    if (x != 0.0) nonzero = true;
  }
  CHECK(nonzero);
  for (double x : w.grad.data) CHECK(x == 0.0);
  for (double x : w.m.data) CHECK(x == 0.0);

  Param& b = store.add("enc/b0", {4}, nullptr);
  for (double x : b.value.data) CHECK(x == 0.0);

  CHECK_THROWS_AS(store.add("enc/w0", {9, 4}, &rng), NnError);
  CHECK_THROWS_AS(store.at("missing"), NnError);

  w.grad.data[0] = 3.0;
  store.zero_grad();
  CHECK(w.grad.data[0] == 0.0);
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  ParamStore store;
  Rng rng(stream_seed(908, "adam-zero"));
  Param& w = store.add("w", {3, 3}, &rng);
  const std::vector<double> before = w.value.data;
  AdamConfig cfg;
  for (int i = 0; i < 5; ++i) adam_step(store, cfg);
  CHECK(w.value.data == before);
  CHECK(store.step_count() == 5);
}

TEST_CASE("adam converges to lr-magnitude steps under constant gradient") {
  ParamStore store;
  Param& w = store.add("w", {2}, nullptr);
  AdamConfig cfg;
  cfg.lr = 1e-3;
  double prev0 = w.value.data[0];
  double last_step0 = 0.0, last_step1 = 0.0;
  for (int t = 0; t < 1000; ++t) {
    w.grad.data[0] = 0.37;   // constant positive gradient
    w.grad.data[1] = -4.2;   // constant negative gradient
    const double p0 = w.value.data[0], p1 = w.value.data[1];
    adam_step(store, cfg);
    last_step0 = w.value.data[0] - p0;
    last_step1 = w.value.data[1] - p1;
    prev0 = p0;
  }
  (void)prev0;
  // With constant gradient g, mhat -> g and vhat -> g^2, so |step| -> lr.
  CHECK(std::abs(std::abs(last_step0) - cfg.lr) < 1e-3 * cfg.lr + 1e-12);
  CHECK(std::abs(std::abs(last_step1) - cfg.lr) < 1e-3 * cfg.lr + 1e-12);
  CHECK(last_step0 < 0.0);  // moves against the gradient
  CHECK(last_step1 > 0.0);
  // Grads are consumed by the step.
  CHECK(w.grad.data[0] == 0.0);
}

TEST_CASE("adam first step matches the closed form") {
  ParamStore store;
  Param& w = store.add("w", {1}, nullptr);
  w.value.data[0] = 2.0;
  w.grad.data[0] = 0.5;
  AdamConfig cfg;  // lr 1e-3, beta1 .9, beta2 .999, eps 1e-8
  adam_step(store, cfg);
  // t=1: mhat = g, vhat = g^2 -> step = -lr * g / (|g| + eps)
  const double expect = 2.0 - cfg.lr * 0.5 / (0.5 + cfg.eps);
  CHECK(w.value.data[0] == doctest::Approx(expect).epsilon(1e-15));
  CHECK(store.step_count() == 1);
}

TEST_CASE("adam is bit-deterministic across identical runs") {
  auto run = []() {
    ParamStore store;
    Rng rng(stream_seed(909, "adam-det"));
    Param& w = store.add("w", {4, 4}, &rng);
    Param& b = store.add("b", {4}, &rng);
    AdamConfig cfg;
    Rng noise(stream_seed(909, "adam-noise"));
    for (int t = 0; t < 50; ++t) {
      for (double& g : w.grad.data) g = noise.uniform01() - 0.5;
      for (double& g : b.grad.data) g = noise.uniform01() - 0.5;
      adam_step(store, cfg);
    }
    std::vector<double> all = w.value.data;
    all.insert(all.end(), b.value.data.begin(), b.value.data.end());
    all.insert(all.end(), w.m.data.begin(), w.m.data.end());
    all.insert(all.end(), w.v.data.begin(), w.v.data.end());
    return all;
  };
  CHECK(run() == run());
}

TEST_CASE("mlp forward and backward agree with finite differences") {
  ParamStore store;
  Rng rng(stream_seed(910, "mlp"));
  Mlp net(store, "pol", {6, 8, 4}, &rng);
  CHECK(store.size() == 4);  // w0,b0,w1,b1
  CHECK(store.contains("pol/w0"));
  CHECK(store.contains("pol/b1"));

  Tensor in = random_tensor({3, 6}, rng);
  Tensor cw = random_tensor({3, 4}, rng);

  Mlp::Trace trace;
  Tensor out = net.forward(in, trace);
  CHECK(out.shape == std::vector<int>{3, 4});
  Tensor pure = net.forward(in);
  CHECK(pure.data == out.data);

  Tensor din = net.backward(trace, cw);
  CHECK(din.shape == in.shape);

  auto loss = [&]() { return weighted_sum(net.forward(in), cw); };
  for (std::size_t i = 0; i < in.data.size(); ++i)
    CHECK(fd_rel_error(in.data, i, din.data[i], loss) < 1e-4);
  for (const char* name : {"pol/w0", "pol/b0", "pol/w1", "pol/b1"}) {
    Param& par = store.at(name);
    for (std::size_t i = 0; i < par.value.data.size(); ++i)
      CHECK(fd_rel_error(par.value.data, i, par.grad.data[i], loss) < 1e-4);
  }
}

TEST_CASE("mlp attaches to existing parameters") {
  ParamStore store;
  Rng rng(stream_seed(911, "mlp-share"));
  Mlp first(store, "enc", {4, 5, 3}, &rng);
  Tensor in = random_tensor({2, 4}, rng);
  Tensor out1 = first.forward(in);
  Mlp second(store, "enc", {4, 5, 3}, nullptr);  // reattach, no re-init
  Tensor out2 = second.forward(in);
  CHECK(out1.data == out2.data);
  CHECK(store.size() == 4);
  CHECK_THROWS_AS(Mlp(store, "enc", {4, 6, 3}, nullptr), NnError);
}

TEST_CASE("checkpoint round-trip restores every moment bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "caseil_test_ckpt.json";

  ParamStore store;
  Rng rng(stream_seed(912, "ckpt"));
  Mlp net(store, "m", {3, 4, 2}, &rng);
  AdamConfig cfg;
  Rng noise(stream_seed(912, "ckpt-noise"));
  for (int t = 0; t < 7; ++t) {
    for (auto& [name, par] : store)
      for (double& g : par.grad.data) g = noise.uniform01() - 0.5;
    adam_step(store, cfg);
  }
  save_checkpoint(store, path.string(), "fp-abc", R"({"epoch": 3})");

  ParamStore loaded;
  Rng rng2(stream_seed(999, "ckpt-other-init"));  // overwritten by the load
  Mlp net2(loaded, "m", {3, 4, 2}, &rng2);
  const std::string extra = load_checkpoint(loaded, path.string(), "fp-abc");
  CHECK(extra.find("\"epoch\"") != std::string::npos);
  CHECK(loaded.step_count() == store.step_count());
  for (auto& [name, par] : store) {
    Param& got = loaded.at(name);
    CHECK(got.value.data == par.value.data);
    CHECK(got.m.data == par.m.data);
    CHECK(got.v.data == par.v.data);
  }

  // Resuming the same noise stream from both stores keeps them identical.
  Rng n1(stream_seed(913, "resume"));
  Rng n2(stream_seed(913, "resume"));
  for (int t = 0; t < 5; ++t) {
    for (auto& [name, par] : store)
      for (double& g : par.grad.data) g = n1.uniform01() - 0.5;
    for (auto& [name, par] : loaded)
      for (double& g : par.grad.data) g = n2.uniform01() - 0.5;
    adam_step(store, cfg);
    adam_step(loaded, cfg);
  }
  for (auto& [name, par] : store) CHECK(loaded.at(name).value.data == par.value.data);

  fs::remove(path);
}

TEST_CASE("checkpoint loading rejects mismatches") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "caseil_test_ckpt_reject.json";

  ParamStore store;
  Rng rng(stream_seed(914, "ckpt-rej"));
  store.add("w", {2, 2}, &rng);
  save_checkpoint(store, path.string(), "fp-good", "");

  ParamStore same;
  same.add("w", {2, 2}, nullptr);
  CHECK_THROWS_WITH_AS(load_checkpoint(same, path.string(), "fp-other"),
                       doctest::Contains("fingerprint"), NnError);

  ParamStore wrong_shape;
  wrong_shape.add("w", {2, 3}, nullptr);
  CHECK_THROWS_AS(load_checkpoint(wrong_shape, path.string(), "fp-good"), NnError);

  ParamStore wrong_name;
  wrong_name.add("other", {2, 2}, nullptr);
  CHECK_THROWS_AS(load_checkpoint(wrong_name, path.string(), "fp-good"), NnError);

  ParamStore extra_param;
  extra_param.add("w", {2, 2}, nullptr);
  extra_param.add("w2", {2, 2}, nullptr);
  CHECK_THROWS_AS(load_checkpoint(extra_param, path.string(), "fp-good"), NnError);

  CHECK_THROWS_AS(load_checkpoint(same, "/nonexistent/dir/ckpt.json", "fp-good"), NnError);

  fs::remove(path);
}
