#include <cmath>
#include <numeric>

#include "doctest.h"
#include "nnet_fixtures.hpp"
#include "radcls/attention.hpp"
#include "radcls/errors.hpp"
#include "radcls/layers.hpp"
#include "radcls/model.hpp"
#include "radcls/optim.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace radcls;
using namespace oracle;

TEST_CASE("attention matches scalar oracles and stays in (0,1)") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t N = 1 + rng.below(2), C = 4 * (1 + rng.below(3)), H = 1 + rng.below(5), W = 1 + rng.below(5);
    const int r = rng.bernoulli(0.5) ? 2 : 4;
    const int k = 1 + 2 * int(rng.below(3));
    const Tensor F = testutil::random_tensor({N, C, H, W}, rng, -2, 2);
    const TensorMap p = random_cbam_params(C, r, k, rng);
    const Tensor mc = channel_attention(F, p, "cbam.channel", r);
    const Tensor ms = spatial_attention(F, p, "cbam.spatial", k);
    CHECK(mc.shape() == std::vector<std::size_t>{N, C, 1, 1});
    CHECK(ms.shape() == std::vector<std::size_t>{N, 1, H, W});
    for (std::size_t n = 0; n < N; ++n) {
      const auto co = channel_oracle(F, p, n);
      for (std::size_t c = 0; c < C; ++c) CHECK(std::abs(mc[n * C + c] - co[c]) < 1e-10);
      const auto so = spatial_oracle(F, p, n);
      for (std::size_t i = 0; i < H * W; ++i) CHECK(std::abs(ms[n * H * W + i] - so[i]) < 1e-10);
    }
    for (double v : mc.values()) CHECK((v > 0.0 && v < 1.0));
    for (double v : ms.values()) CHECK((v > 0.0 && v < 1.0));

    // Spatial permutation leaves channel attention unchanged; channel permutation leaves spatial attention unchanged.
    std::vector<std::size_t> sp(H * W), cp(C);
    std::iota(sp.begin(), sp.end(), 0);
    std::iota(cp.begin(), cp.end(), 0);
    rng.shuffle(sp.begin(), sp.end());
    rng.shuffle(cp.begin(), cp.end());
    Tensor Fs(F.shape()), Fc(F.shape());
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H * W; ++i) {
          Fs[(n * C + c) * H * W + sp[i]] = F[(n * C + c) * H * W + i];
          Fc[(n * C + cp[c]) * H * W + i] = F[(n * C + c) * H * W + i];
        }
    CHECK(channel_attention(Fs, p, "cbam.channel", r) == mc);
    CHECK(spatial_attention(Fc, p, "cbam.spatial", k) == ms);

    // CBAM composes the two maps and strictly shrinks every nonzero element.
    const Tensor out = cbam_apply(F, p, "cbam", {r, k});
    REQUIRE(out.shape() == F.shape());
    Tensor refined = F;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H * W; ++i) refined[(n * C + c) * H * W + i] *= mc[n * C + c];
    const Tensor ms2 = spatial_attention(refined, p, "cbam.spatial", k);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H * W; ++i) {
          const std::size_t idx = (n * C + c) * H * W + i;
          CHECK(std::abs(out[idx] - refined[idx] * ms2[n * H * W + i]) < 1e-12);
          if (F[idx] != 0.0) CHECK(std::abs(out[idx]) < std::abs(F[idx]));
        }
  }
}

TEST_CASE("attention degenerate cases") {
  Rng rng(2);
  TensorMap p = random_cbam_params(8, 2, 3, rng);
  const Tensor F = testutil::random_tensor({1, 8, 3, 3}, rng);
  for (auto& [k, v] : p)
    if (k.find(".channel.") != std::string::npos) v.fill(0.0);
  const Tensor half = channel_attention(F, p, "cbam.channel", 2);
  for (double v : half.values()) CHECK(v == 0.5);
  p["cbam.spatial.conv.weight"].fill(0.0);
  p["cbam.spatial.conv.bias"].fill(0.0);
  const Tensor shalf = spatial_attention(F, p, "cbam.spatial", 3);
  for (double v : shalf.values()) CHECK(v == 0.5);
  const Tensor zero = cbam_apply(Tensor({1, 8, 3, 3}, 0.0), random_cbam_params(8, 2, 3, rng), "cbam", {2, 3});
  for (double v : zero.values()) CHECK(v == 0.0);

  // 1x1 spatial kernel by hand: z = 2*mean - 1*max + 0.5
  TensorMap q = random_cbam_params(2, 1, 1, rng);
  q["cbam.spatial.conv.weight"] = Tensor({1, 2, 1, 1}, std::vector<double>{2.0, -1.0});
  q["cbam.spatial.conv.bias"] = Tensor({1}, std::vector<double>{0.5});
  const Tensor G({1, 2, 1, 2}, std::vector<double>{1.0, 4.0, 3.0, -2.0});
  const Tensor s = spatial_attention(G, q, "cbam.spatial", 1);
  CHECK(s[0] == doctest::Approx(sig(2 * 2.0 - 3.0 + 0.5)));
  CHECK(s[1] == doctest::Approx(sig(2 * 1.0 - 4.0 + 0.5)));

  CHECK_THROWS_AS(channel_attention(F, p, "cbam.channel", 3), ConfigError);
  CHECK_THROWS_AS(spatial_attention(F, p, "cbam.spatial", 4), ConfigError);
}

TEST_CASE("attention backward matches finite differences") {
  Rng rng(3);
  const Tensor F = testutil::random_tensor({2, 4, 3, 3}, rng);
  const TensorMap p = random_cbam_params(4, 2, 3, rng);
  const Tensor w = testutil::random_tensor(F.shape(), rng);
  auto loss = [&](const Tensor& x, const TensorMap& q) {
    const Tensor y = cbam_apply(x, q, "cbam", {2, 3});
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
  };
  CbamCache cache;
  cbam_apply(F, p, "cbam", {2, 3}, &cache);
  TensorMap grads;
  const Tensor dF = cbam_backward(w, p, "cbam", cache, &grads);
  const double h = 1e-6;
  for (std::size_t i = 0; i < F.size(); ++i) {
    Tensor a = F, b = F;
    a[i] += h;
    b[i] -= h;
    CHECK(dF[i] == doctest::Approx((loss(a, p) - loss(b, p)) / (2 * h)).epsilon(1e-6));
  }
  for (const auto& [path, t] : p)
    for (std::size_t i = 0; i < t.size(); ++i) {
      TensorMap a = p, b = p;
      a[path][i] += h;
      b[path][i] -= h;
      CHECK(grads.at(path)[i] == doctest::Approx((loss(F, a) - loss(F, b)) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("full network gradient check") {
  const ModelConfig cfg = testutil::gradcheck_config();
  ModelParams mp = init_params(cfg, 7);
  Rng rng(4);
  // Non-trivial affine terms so every parameter gets a gradient.
  for (auto& [path, t] : mp.params)
    if (path.ends_with(".beta") || path.ends_with(".bias"))
      for (auto& v : t.storage()) v = rng.uniform(-0.2, 0.2);
  CHECK(mp.parameter_count() < 5000);
  const Tensor x = testutil::random_tensor({1, 1, 8, 8}, rng);
  const std::vector<int> label{1};
  const ForwardOptions train{true, 0};
  auto loss = [&](const ModelParams& q) { return cross_entropy(forward(q, cfg, x, train), label); };

  ForwardTrace trace;
  const Tensor logits = forward(mp, cfg, x, train, &trace);
  const BackwardResult br = backward(mp, cfg, trace, cross_entropy_with_grad(logits, label).dlogits);
  double worst = 0;
  std::string worst_path;
  std::size_t checked = 0;
  const double h = 1e-5;
  for (const auto& [path, t] : mp.params) {
    REQUIRE(br.grads.count(path));
    for (std::size_t i = 0; i < t.size(); ++i) {
      ModelParams a = mp, b = mp;
      a.params[path][i] += h;
      b.params[path][i] -= h;
      const double num = (loss(a) - loss(b)) / (2 * h);
      const double ana = br.grads.at(path)[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6});
      if (rel > worst) worst = rel, worst_path = path;
      ++checked;
    }
  }
  CAPTURE(worst_path);
  CHECK(checked == mp.parameter_count());
  CHECK(worst < 1e-4);
}

TEST_CASE("forward contract") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelParams mp = init_params(cfg, 1);
  Rng rng(5);
  Tensor x = testutil::random_tensor({3, 1, 64, 64}, rng);
  for (std::size_t i = 0; i < 64 * 64; ++i) x[64 * 64 + i] = x[i];
  const Tensor y = forward(mp, cfg, x);
  CHECK(y.shape() == std::vector<std::size_t>{3, 2});
  CHECK(y.all_finite());
  CHECK(y[0] == y[2]);
  CHECK(y[1] == y[3]);

  mp.params["head.fc.weight"].fill(0.0);
  mp.params["head.fc.bias"].fill(0.0);
  const Tensor z = forward(mp, cfg, x);
  for (double v : z.values()) CHECK(v == 0.0);
  const Tensor probs = softmax(z);
  for (double v : probs.values()) CHECK(v == 0.5);

  try {
    forward(mp, cfg, testutil::random_tensor({1, 1, 32, 32}, rng));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("input") != std::string::npos);
  }
  ModelParams bad = init_params(cfg, 1);
  bad.params["stage1.block0.conv2.weight"] = Tensor({1, 1, 3, 3});
  try {
    forward(bad, cfg, x);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("stage1.block0.conv2.weight") != std::string::npos);
  }
  ModelParams missing = init_params(cfg, 1);
  missing.params.erase("stage0.block0.cbam.spatial.conv.bias");
  CHECK_THROWS_AS(forward(missing, cfg, x), ShapeError);
}

TEST_CASE("init_params") {
  const ModelConfig cfg = ModelConfig::tiny();
  CHECK(init_params(cfg, 3) == init_params(cfg, 3));
  CHECK_FALSE(init_params(cfg, 3) == init_params(cfg, 4));
  CHECK(init_params(cfg, 3).parameter_count() < 100000);
  ModelConfig three = cfg;
  three.num_classes = 3;
  CHECK(init_params(three, 0).params.at("head.fc.weight").dim(0) == 2);
  const ModelParams mp = init_params(cfg, 0);
  for (double v : mp.params.at("stem.bn.gamma").values()) CHECK(v == 1.0);
  for (double v : mp.params.at("stem.bn.beta").values()) CHECK(v == 0.0);
  const ModelParams big = init_params(ModelConfig::resnet50(), 0);
  CHECK(big.params.count("stage3.block2.cbam.channel.fc1.weight") == 1);
  CHECK(big.params.at("stage3.block2.cbam.channel.fc1.weight").shape() == std::vector<std::size_t>{128, 2048});
  CHECK(big.params.at("head.fc.weight").shape() == std::vector<std::size_t>{2, 2048});
}

TEST_CASE("batch norm") {
  Rng rng(6);
  const Tensor x = testutil::random_tensor({4, 3, 2, 2}, rng, 0, 5);
  TensorMap p{{"bn.gamma", Tensor({3}, 1.0)}, {"bn.beta", Tensor({3}, 0.0)}};
  TensorMap buf{{"bn.running_mean", Tensor({3}, 0.0)}, {"bn.running_var", Tensor({3}, 1.0)}};
  BnCache cache;
  const Tensor y = bn_forward(p, buf, "bn", x, true, 1e-5, &cache);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 4; ++i) m += y[(n * 3 + c) * 4 + i] / 16;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 4; ++i) v += std::pow(y[(n * 3 + c) * 4 + i] - m, 2) / 16;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }
  const Tensor inf = bn_forward(p, buf, "bn", x, false, 1e-5, nullptr);
  CHECK(inf[0] == doctest::Approx(x[0] / std::sqrt(1 + 1e-5)));
}

TEST_CASE("running statistics follow the momentum rule") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelParams mp = init_params(cfg, 0);
  Rng rng(7);
  const Tensor x = testutil::random_tensor({2, 1, 64, 64}, rng);
  ForwardTrace trace;
  forward(mp, cfg, x, {true, 0}, &trace);
  update_running_stats(mp, cfg, trace);
  const auto& mean = trace.stem.bn.batch_mean;
  for (std::size_t c = 0; c < mean.size(); ++c) {
    CHECK(mp.buffers.at("stem.bn.running_mean")[c] == doctest::Approx(0.1 * mean[c]));
    CHECK(mp.buffers.at("stem.bn.running_var")[c] == doctest::Approx(0.9 + 0.1 * trace.stem.bn.batch_var[c]));
  }
}

TEST_CASE("dropout") {
  Rng rng(8);
  const Tensor x = testutil::random_tensor({4, 100}, rng);
  Tensor mask;
  const Tensor y = dropout_forward(x, 0.25, 3, &mask);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i] != 0.0) {
      ++kept;
      CHECK(y[i] == doctest::Approx(x[i] / 0.75));
    } else {
      CHECK(y[i] == 0.0);
    }
  }
  CHECK(kept > 250);
  CHECK(kept < 350);
  CHECK(dropout_forward(x, 0.25, 3, nullptr) == y);
  CHECK(dropout_forward(x, 0.0, 3, nullptr) == x);
}

TEST_CASE("layer paths") {
  const ModelConfig cfg = ModelConfig::tiny();
  const auto paths = feature_layer_paths(cfg);
  CHECK(paths.front() == "stem");
  CHECK(default_cam_layer(cfg) == "stage1.block0");
  CHECK(default_cam_layer(ModelConfig::resnet50()) == "stage3.block2");
  ModelParams mp = init_params(cfg, 0);
  Rng rng(9);
  ForwardTrace trace;
  const Tensor y = forward(mp, cfg, testutil::random_tensor({1, 1, 64, 64}, rng), {}, &trace);
  CHECK_THROWS_AS(backward(mp, cfg, trace, Tensor({1, 2}, 1.0), {false, "stage9.block0"}), ArgumentError);
  const BackwardResult r = backward(mp, cfg, trace, Tensor({1, 2}, 1.0), {false, "stage0.block0"});
  CHECK(r.captured.shape() == trace.activation("stage0.block0").shape());
  CHECK(r.grads.empty());
}
