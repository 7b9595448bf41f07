#include <catch2/catch_amalgamated.hpp>

#include "partsnet/classical.hpp"
#include "partsnet/core/rng.hpp"
#include "support/reference_ops.hpp"

using namespace partsnet;

namespace {

BinaryMap random_binary(int h, int w, Rng& rng, double fg_prob = 0.4) {
  BinaryMap b(h, w);
  for (auto& v : b.data) v = rng.uniform() < fg_prob ? 255 : 0;
  return b;
}

BinaryMap invert(const BinaryMap& b) {
  BinaryMap out(b.h, b.w);
  for (std::size_t i = 0; i < b.data.size(); ++i) out.data[i] = b.data[i] ? 0 : 255;
  return out;
}

}  // namespace

TEST_CASE("hard_threshold: constant above threshold is all foreground") {
  auto bank = make_kernel_bank<float>();
  Tensor<float> map(1, 1, 6, 6, 200.0f);
  BinaryMap b = hard_threshold(map, 100.0f, bank);
  REQUIRE(b.foreground_count() == 36);
}

TEST_CASE("hard_threshold: boundary is inclusive") {
  auto bank = make_kernel_bank<float>();
  Tensor<float> map(1, 1, 8, 8, 0.5f);
  // interior smoothed value is exactly 0.5 (unit-sum kernel); >= keeps it
  BinaryMap b = hard_threshold(map, 0.5f, bank);
  for (int y = 1; y < 7; ++y) {
    for (int x = 1; x < 7; ++x) REQUIRE(b.at(y, x) == 255);
  }
}

TEST_CASE("erode: full 8x8 foreground shrinks to the 6x6 interior") {
  auto bank = make_kernel_bank<float>();
  BinaryMap b(8, 8, 255);
  BinaryMap e = erode(b, bank);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const bool interior = y >= 1 && y <= 6 && x >= 1 && x <= 6;
      REQUIRE(e.at(y, x) == (interior ? 255 : 0));
    }
  }
}

TEST_CASE("dilate: single center pixel grows to its 3x3 block") {
  auto bank = make_kernel_bank<float>();
  BinaryMap b(7, 7);
  b.at(3, 3) = 255;
  BinaryMap d = dilate(b, bank);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 7; ++x) {
      const bool in_block = std::abs(y - 3) <= 1 && std::abs(x - 3) <= 1;
      REQUIRE(d.at(y, x) == (in_block ? 255 : 0));
    }
  }
}

TEST_CASE("erode/dilate: empty map stays empty") {
  auto bank = make_kernel_bank<float>();
  BinaryMap b(5, 5);
  REQUIRE(erode(b, bank).foreground_count() == 0);
  REQUIRE(dilate(b, bank).foreground_count() == 0);
}

TEST_CASE("erode/dilate: match brute-force AND/OR on 100 random 32x32 maps") {
  auto bank = make_kernel_bank<float>();
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    BinaryMap b = random_binary(32, 32, rng, rng.uniform(0.2, 0.8));
    REQUIRE(erode(b, bank).data == testref::naive_erode(b.data, 32, 32));
    REQUIRE(dilate(b, bank).data == testref::naive_dilate(b.data, 32, 32));
  }
}

TEST_CASE("morphological duality holds on interior pixels") {
  auto bank = make_kernel_bank<float>();
  Rng rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    BinaryMap b = random_binary(16, 16, rng);
    BinaryMap lhs = dilate(invert(b), bank);
    BinaryMap rhs = invert(erode(b, bank));
    for (int y = 1; y < 15; ++y) {
      for (int x = 1; x < 15; ++x) REQUIRE(lhs.at(y, x) == rhs.at(y, x));
    }
  }
}

TEST_CASE("opening is idempotent") {
  auto bank = make_kernel_bank<float>();
  Rng rng(107);
  auto open = [&bank](const BinaryMap& b) { return dilate(erode(b, bank), bank); };
  for (int trial = 0; trial < 20; ++trial) {
    BinaryMap b = random_binary(24, 24, rng, 0.55);
    BinaryMap once = open(b);
    REQUIRE(open(once) == once);
  }
}

TEST_CASE("gradient_field: constant map has zero gradients and orientation") {
  auto bank = make_kernel_bank<float>();
  Tensor<float> map(1, 1, 10, 10, 0.6f);
  GradientField f = gradient_field(map, bank);
  // interior only: zero padding makes the image border itself an edge
  for (int y = 2; y < 8; ++y) {
    for (int x = 2; x < 8; ++x) {
      REQUIRE(std::abs(f.p.at(0, 0, y, x)) < 1e-5f);
      REQUIRE(std::abs(f.q.at(0, 0, y, x)) < 1e-5f);
      REQUIRE(f.m.at(0, 0, y, x) < 1e-5f);
      REQUIRE(f.theta.at(0, 0, y, x) == 0.0f);
    }
  }
}

TEST_CASE("gradient_field: horizontal ramp gives x-gradient only") {
  auto bank = make_kernel_bank<float>();
  const int n = 16;
  Tensor<float> map(1, 1, n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) map.at(0, 0, y, x) = static_cast<float>(x) / n;
  }
  GradientField f = gradient_field(map, bank);
  // analytic: the derivative kernel is scaled so a unit-slope ramp responds
  // with 1, so a slope of 1/n responds with 1/n
  const float expected = 1.0f / n;
  for (int y = 3; y < n - 3; ++y) {
    for (int x = 3; x < n - 3; ++x) {
      REQUIRE(f.p.at(0, 0, y, x) == Catch::Approx(expected).margin(1e-5));
      REQUIRE(std::abs(f.q.at(0, 0, y, x)) < 1e-5f);
      REQUIRE(f.m.at(0, 0, y, x) == Catch::Approx(expected).margin(1e-5));
      REQUIRE(std::abs(f.theta.at(0, 0, y, x)) < 1e-3f);
      REQUIRE(f.m.at(0, 0, y, x) > 0.0f);
    }
  }
}

TEST_CASE("gradient_field: transposing the input swaps P and Q") {
  auto bank = make_kernel_bank<float>();
  Rng rng(109);
  const int n = 12;
  Tensor<float> map(1, 1, n, n);
  for (std::int64_t i = 0; i < map.numel(); ++i) map.data()[i] = static_cast<float>(rng.uniform());
  Tensor<float> transposed(1, 1, n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) transposed.at(0, 0, x, y) = map.at(0, 0, y, x);
  }
  GradientField f = gradient_field(map, bank);
  GradientField ft = gradient_field(transposed, bank);
  for (int y = 2; y < n - 2; ++y) {
    for (int x = 2; x < n - 2; ++x) {
      REQUIRE(std::abs(f.p.at(0, 0, y, x)) ==
              Catch::Approx(std::abs(ft.q.at(0, 0, x, y))).margin(1e-5));
    }
  }
}

TEST_CASE("cc_label: single 3x3 block is one component of count 9") {
  BinaryMap b(8, 8);
  for (int y = 2; y < 5; ++y) {
    for (int x = 3; x < 6; ++x) b.at(y, x) = 255;
  }
  ComponentTable t = cc_label(b);
  REQUIRE(t.components.size() == 1);
  REQUIRE(t.components[0].count == 9);
  REQUIRE(t.components[0].min_x == 3);
  REQUIRE(t.components[0].max_x == 5);
  REQUIRE(t.components[0].min_y == 2);
  REQUIRE(t.components[0].max_y == 4);
}

TEST_CASE("cc_label: diagonal touch merges under 8-connectivity") {
  BinaryMap b(8, 8);
  b.at(1, 1) = 255;
  b.at(2, 2) = 255;  // touches only diagonally
  b.at(2, 3) = 255;
  ComponentTable t = cc_label(b);
  REQUIRE(t.components.size() == 1);
  REQUIRE(t.components[0].count == 3);
}

TEST_CASE("cc_label: empty map yields empty table") {
  BinaryMap b(6, 6);
  REQUIRE(cc_label(b).components.empty());
}

TEST_CASE("cc_label: matches union-find oracle on 100 random 32x32 maps") {
  Rng rng(113);
  for (int trial = 0; trial < 100; ++trial) {
    BinaryMap b = random_binary(32, 32, rng, rng.uniform(0.1, 0.7));
    ComponentTable t = cc_label(b);
    std::vector<int> expected = testref::union_find_components(b.data, 32, 32);
    std::vector<int> got(b.data.size(), 0);
    for (const auto& comp : t.components) {
      for (std::int32_t idx : comp.pixels) got[static_cast<std::size_t>(idx)] = comp.id;
    }
    REQUIRE(got == expected);
    // components partition the foreground
    REQUIRE(t.total_foreground() == b.foreground_count());
  }
}

TEST_CASE("cc_area_filter: small components erased, large preserved, zero threshold is identity") {
  BinaryMap b(16, 16);
  // 3-pixel component
  b.at(1, 1) = b.at(1, 2) = b.at(2, 1) = 255;
  // 10-pixel component (2x5 block)
  for (int y = 8; y < 10; ++y) {
    for (int x = 4; x < 9; ++x) b.at(y, x) = 255;
  }
  BinaryMap filtered = cc_area_filter(b, 5);
  REQUIRE(filtered.at(1, 1) == 0);
  REQUIRE(filtered.at(1, 2) == 0);
  REQUIRE(filtered.at(2, 1) == 0);
  for (int y = 8; y < 10; ++y) {
    for (int x = 4; x < 9; ++x) REQUIRE(filtered.at(y, x) == 255);
  }
  REQUIRE(filtered.foreground_count() == 10);

  REQUIRE(cc_area_filter(b, 0) == b);
}

TEST_CASE("cc_area_filter: output foreground is a subset with unchanged survivor counts") {
  Rng rng(117);
  for (int trial = 0; trial < 20; ++trial) {
    BinaryMap b = random_binary(24, 24, rng, 0.35);
    BinaryMap f = cc_area_filter(b, 4);
    for (std::size_t i = 0; i < b.data.size(); ++i) {
      if (f.data[i] != 0) REQUIRE(b.data[i] != 0);
    }
    ComponentTable before = cc_label(b);
    ComponentTable after = cc_label(f);
    for (const auto& comp : after.components) {
      bool matched = false;
      for (const auto& orig : before.components) {
        if (orig.pixels == comp.pixels) {
          matched = true;
          break;
        }
      }
      REQUIRE(matched);
    }
  }
}

TEST_CASE("classical_pipeline: zero map is non-defective") {
  auto bank = make_kernel_bank<float>();
  Tensor<float> map(1, 1, 32, 32, 0.0f);
  ClassicalResult r = classical_pipeline(map, 0.5f, 20, bank);
  REQUIRE_FALSE(r.defective);
  REQUIRE(r.components.components.empty());
  REQUIRE(r.refined.foreground_count() == 0);
}

TEST_CASE("classical_pipeline: solid 12x12 blob survives") {
  auto bank = make_kernel_bank<float>();
  Tensor<float> map(1, 1, 32, 32, 0.0f);
  for (int y = 10; y < 22; ++y) {
    for (int x = 8; x < 20; ++x) map.at(0, 0, y, x) = 0.9f;
  }
  ClassicalResult r = classical_pipeline(map, 0.5f, 20, bank);
  REQUIRE(r.defective);
  REQUIRE(r.components.components.size() == 1);
  REQUIRE(r.components.components[0].count >= 20);
}

TEST_CASE("classical_pipeline: scattered single pixels are removed") {
  auto bank = make_kernel_bank<float>();
  Tensor<float> map(1, 1, 32, 32, 0.0f);
  Rng rng(119);
  for (int k = 0; k < 12; ++k) {
    map.at(0, 0, rng.uniform_int(0, 31), rng.uniform_int(0, 31)) = 0.9f;
  }
  ClassicalResult r = classical_pipeline(map, 0.5f, 20, bank);
  REQUIRE_FALSE(r.defective);
}
