#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <map>

#include "partsnet/core/adam.hpp"
#include "partsnet/core/gradcheck.hpp"
#include "partsnet/core/rng.hpp"
#include "partsnet/segnet.hpp"

using namespace partsnet;

TEST_CASE("build_segnet: default network downsamples by 4 before the x4 upsample") {
  SegNetConfig cfg;
  REQUIRE(cfg.block_channels.size() == 2);  // two pooling stages -> stride 4
  auto params = build_segnet<float>(cfg, 1);
  Tensor<float> in(1, 1, 64, 64, 0.5f);
  Tensor<float> out = seg_infer(params, in);
  REQUIRE(out.shape() == Shape4{1, 1, 64, 64});
}

TEST_CASE("build_segnet: fixed seed reproduces parameters bit for bit") {
  SegNetConfig cfg;
  auto a = build_segnet<float>(cfg, 42);
  auto b = build_segnet<float>(cfg, 42);
  auto c = build_segnet<float>(cfg, 43);
  bool all_equal = true;
  bool any_differs_from_c = false;
  a.for_each_tensor([&](const std::string& name, Tensor<float>& ta) {
    b.for_each_tensor([&](const std::string& name_b, Tensor<float>& tb) {
      if (name == name_b) {
        all_equal = all_equal && std::memcmp(ta.data(), tb.data(),
                                             sizeof(float) * static_cast<std::size_t>(ta.numel())) == 0;
      }
    });
    c.for_each_tensor([&](const std::string& name_c, Tensor<float>& tc) {
      if (name == name_c && ta.numel() == tc.numel()) {
        any_differs_from_c =
            any_differs_from_c ||
            std::memcmp(ta.data(), tc.data(), sizeof(float) * static_cast<std::size_t>(ta.numel())) != 0;
      }
    });
  });
  REQUIRE(all_equal);
  REQUIRE(any_differs_from_c);
}

TEST_CASE("build_segnet: parameter count matches the closed form") {
  SegNetConfig cfg;
  auto params = build_segnet<float>(cfg, 7);
  // closed form: per conv layer k*k*inC*outC + outC bias + 2*outC batchnorm,
  // head 1x1: inC*1 + 1
  std::int64_t expected = 0;
  int in_c = cfg.in_channels;
  for (int width : cfg.block_channels) {
    expected += 9LL * in_c * width + width + 2LL * width;
    in_c = width;
  }
  for (int i = 0; i < cfg.deep_depth; ++i) {
    expected += 9LL * in_c * cfg.deep_channels + cfg.deep_channels + 2LL * cfg.deep_channels;
    in_c = cfg.deep_channels;
  }
  expected += in_c + 1;
  REQUIRE(params.num_trainable() == expected);
}

TEST_CASE("seg_forward: output matches input size and stays in (0,1)") {
  SegNetConfig cfg;
  auto params = build_segnet<float>(cfg, 3);
  Rng rng(5);
  Tensor<float> in(1, 1, 64, 64);
  for (std::int64_t i = 0; i < in.numel(); ++i) in.data()[i] = static_cast<float>(rng.uniform());
  Tensor<float> out = seg_infer(params, in);
  REQUIRE(out.shape() == Shape4{1, 1, 64, 64});
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    REQUIRE(out.data()[i] > 0.0f);
    REQUIRE(out.data()[i] < 1.0f);
  }
}

TEST_CASE("seg_forward: accepts any input size divisible by 4") {
  SegNetConfig cfg;
  auto params = build_segnet<float>(cfg, 3);
  Tensor<float> in(1, 1, 96, 128, 0.25f);
  Tensor<float> out = seg_infer(params, in);
  REQUIRE(out.shape() == Shape4{1, 1, 96, 128});
}

TEST_CASE("seg_forward: rejects sizes not divisible by 4, naming the requirement") {
  SegNetConfig cfg;
  auto params = build_segnet<float>(cfg, 3);
  Tensor<float> in(1, 1, 66, 64, 0.25f);
  REQUIRE_THROWS_WITH(seg_infer(params, in), Catch::Matchers::ContainsSubstring("divisible by 4"));
}

TEST_CASE("seg_forward: zero weights and zero beta give 0.5 everywhere") {
  SegNetConfig cfg;
  auto params = build_segnet<float>(cfg, 3);
  params.for_each_tensor([](const std::string& name, Tensor<float>& t) {
    if (name.find("kernel") != std::string::npos) t.fill(0.0f);
    if (name.find("beta") != std::string::npos) t.fill(0.0f);
    if (name.find("bias") != std::string::npos) t.fill(0.0f);
  });
  Tensor<float> in(1, 1, 32, 32, 0.7f);
  Tensor<float> out = seg_infer(params, in);
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    REQUIRE(out.data()[i] == Catch::Approx(0.5).margin(1e-6));
  }
}

TEST_CASE("seg_forward: end-to-end gradients match finite differences") {
  SegNetConfig cfg;
  cfg.block_channels = {2, 3};
  cfg.deep_channels = 4;
  cfg.deep_depth = 1;
  auto params = build_segnet<double>(cfg, 11);
  Rng rng(13);
  Tensor<double> input(1, 1, 8, 8);
  for (std::int64_t i = 0; i < input.numel(); ++i) input.data()[i] = rng.uniform();
  Tensor<double> target(1, 1, 8, 8);
  for (std::int64_t i = 0; i < target.numel(); ++i) target.data()[i] = rng.uniform();

  std::vector<Tensor<double>*> tensors;
  params.for_each_tensor([&](const std::string& name, Tensor<double>& t) {
    if (name.find("running") == std::string::npos) tensors.push_back(&t);
  });

  auto build = [&](Tape<double>& tape) {
    GradCheckGraph g;
    SegNetLeaves<double> ids = insert_segnet_leaves(tape, params, true);
    ValueId in = tape.leaf(input, false);
    ValueId out = seg_forward(tape, ids, params, in, BNMode::Train);
    g.loss = op::mse(tape, out, tape.leaf(target));
    for (const auto& l : ids.blocks) {
      g.params.insert(g.params.end(), {l.kernel, l.bias, l.gamma, l.beta});
    }
    for (const auto& l : ids.deep) {
      g.params.insert(g.params.end(), {l.kernel, l.bias, l.gamma, l.beta});
    }
    g.params.push_back(ids.head_kernel);
    g.params.push_back(ids.head_bias);
    return g;
  };
  GradCheckOptions opts;
  opts.max_coords_per_param = 16;
  GradCheckResult r = grad_check(build, tensors, opts);
  REQUIRE(r.coords_checked >= 64);
  REQUIRE(r.max_rel_err < 1e-5);
}

TEST_CASE("segnet: 200 Adam steps halve the loss on one synthetic batch") {
  SegNetConfig cfg;
  cfg.block_channels = {8, 12};
  cfg.deep_channels = 16;
  cfg.deep_depth = 1;
  auto params = build_segnet<float>(cfg, 17);

  // one batch: blob labels on textured backgrounds
  Rng rng(19);
  const int B = 2, H = 32, W = 32;
  Tensor<float> images(B, 1, H, W);
  Tensor<float> labels(B, 1, H, W, 0.0f);
  for (int b = 0; b < B; ++b) {
    const int cy = rng.uniform_int(10, 20), cx = rng.uniform_int(10, 20);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const bool fg = std::abs(y - cy) <= 5 && std::abs(x - cx) <= 5;
        images.at(b, 0, y, x) = static_cast<float>(0.3 + (fg ? 0.4 : 0.0) + rng.uniform(-0.03, 0.03));
        labels.at(b, 0, y, x) = fg ? 1.0f : 0.0f;
      }
    }
  }

  const double lambda = 1e-4;
  std::map<std::string, AdamState<float>> adam;
  double first_loss = 0.0, last_loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    Tape<float> tape;
    SegNetLeaves<float> ids = insert_segnet_leaves(tape, params, true);
    ValueId out = seg_forward(tape, ids, params, tape.leaf(images), BNMode::Train);
    ValueId loss = op::mse(tape, out, tape.leaf(labels));
    for (ValueId k : ids.kernel_ids()) {
      loss = op::add(tape, loss, op::affine(tape, op::sum_squares(tape, k), static_cast<float>(lambda / B), 0.0f));
    }
    tape.backward(loss);
    if (step == 0) first_loss = tape.value(loss).item();
    last_loss = tape.value(loss).item();

    std::vector<std::pair<Tensor<float>*, ValueId>> updates;
    std::size_t li = 0;
    auto bind_layer = [&](ConvBNLayer<float>& l, const typename SegNetLeaves<float>::LayerIds& id) {
      updates.push_back({&l.kernel, id.kernel});
      updates.push_back({&l.bias, id.bias});
      updates.push_back({&l.gamma, id.gamma});
      updates.push_back({&l.beta, id.beta});
    };
    for (std::size_t i = 0; i < params.blocks.size(); ++i) bind_layer(params.blocks[i], ids.blocks[i]);
    for (std::size_t i = 0; i < params.deep.size(); ++i) bind_layer(params.deep[i], ids.deep[i]);
    updates.push_back({&params.head_kernel, ids.head_kernel});
    updates.push_back({&params.head_bias, ids.head_bias});
    for (auto& [tensor, id] : updates) {
      AdamState<float>& st = adam["p" + std::to_string(li++)];
      adam_step(*tensor, tape.grad(id), st);
    }
  }
  INFO("loss " << first_loss << " -> " << last_loss);
  REQUIRE(last_loss <= 0.5 * first_loss);
}
