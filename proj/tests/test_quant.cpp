#include <cmath>
#include <vector>

#include "doctest.h"
#include "hwvit/quant.hpp"
#include "hwvit/qvt.hpp"

using namespace hwvit;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) m(0, j++) = x;
  return m;
}

const std::vector<Precision> kW4{Precision::W4};
const std::vector<Precision> kW8{Precision::W8};

}  // namespace

TEST_CASE("all-zero row gets scale one and zero codes") {
  const auto q = quantize_rows(Matrix::Zero(1, 3), kW4);
  CHECK(q.scales()[0] == 1.0);
  for (int j = 0; j < 3; ++j) CHECK(q.code(0, j) == 0);
}

TEST_CASE("W4 row rounds half away from zero") {
  const auto q = quantize_rows(row({0.5, -1.0, 0.75, 0.25}), kW4);
  CHECK(q.scales()[0] == doctest::Approx(1.0 / 7.0));
  CHECK(q.code(0, 0) == 4);
  CHECK(q.code(0, 1) == -7);
  CHECK(q.code(0, 2) == 5);
  CHECK(q.code(0, 3) == 2);
  const Matrix d = dequantize(q);
  CHECK(d(0, 0) == doctest::Approx(4.0 / 7.0));
  CHECK(d(0, 1) == doctest::Approx(-1.0));
  CHECK(d(0, 2) == doctest::Approx(5.0 / 7.0));
  CHECK(d(0, 3) == doctest::Approx(2.0 / 7.0));
}

TEST_CASE("W8 endpoints map to the code extrema") {
  const auto q = quantize_rows(row({1.0, -1.0}), kW8);
  CHECK(q.scales()[0] == doctest::Approx(1.0 / 127.0));
  CHECK(q.code(0, 0) == 127);
  CHECK(q.code(0, 1) == -127);
}

TEST_CASE("round trip stays within half a step") {
  const auto q = quantize_rows(row({0.3, -0.3}), kW8);
  const Matrix d = dequantize(q);
  CHECK(std::abs(d(0, 0) - 0.3) <= q.scales()[0] / 2 + 1e-15);
  CHECK(std::abs(d(0, 1) + 0.3) <= q.scales()[0] / 2 + 1e-15);
  CHECK(dequantize(quantize_rows(Matrix::Zero(2, 2), std::vector{Precision::W4, Precision::W8}))
            .isZero());
}

TEST_CASE("mixed tags carry per-row ranges") {
  Matrix w(2, 3);
  w << 0.1, -0.2, 0.3, 10, -20, 5;
  const std::vector tags{Precision::W8, Precision::W4};
  const auto q = quantize_rows(w, tags);
  CHECK(q.w8_rows() == 1);
  CHECK(q.mixed_ratio() == 0.5);
  CHECK(q.code(0, 2) == 127);
  CHECK(q.code(1, 1) == -7);
}

TEST_CASE("quantize_rows rejects invalid input") {
  Matrix w = row({1.0, NAN});
  CHECK_THROWS_WITH(quantize_rows(w, kW4), "invalid weight");
  CHECK_THROWS(quantize_rows(Matrix(0, 0), std::vector<Precision>{}));
  CHECK_THROWS(quantize_rows(row({1.0}), std::vector{Precision::W4, Precision::W4}));
}

TEST_CASE("fake_quantize matches dequantize and masks clamped entries") {
  const Matrix w = row({0.5, -1.0, 0.75, 0.25});
  const auto fq = fake_quantize(w, kW4);
  CHECK((fq.values - dequantize(quantize_rows(w, kW4))).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(fq.mask.minCoeff() == 1.0);

  const std::vector<double> scale{0.1};  // clamp bound 0.7
  const auto clipped = fake_quantize(row({0.5, 2.0, -0.9}), kW4, scale);
  CHECK(clipped.mask(0, 0) == 1.0);
  CHECK(clipped.mask(0, 1) == 0.0);
  CHECK(clipped.mask(0, 2) == 0.0);
  CHECK(clipped.values(0, 1) == doctest::Approx(0.7));
  CHECK(clipped.values(0, 2) == doctest::Approx(-0.8));
}

TEST_CASE("activation quantization") {
  auto z = quantize_activations(Matrix::Zero(2, 2), 6);
  CHECK(z.scale == 1.0);
  CHECK(z.codes.isZero());
  auto a = quantize_activations(row({31, -31}), 6);
  CHECK(a.scale == 1.0);
  CHECK(a.codes(0, 0) == 31);
  CHECK(a.codes(0, 1) == -31);
  auto b = quantize_activations(row({1.0}), 6);
  CHECK(b.scale == doctest::Approx(1.0 / 31.0));
  CHECK(b.codes(0, 0) == 31);
  Matrix x = row({0.4, -0.2});
  const double s = fake_quantize_activations_inplace(x, 6);
  CHECK(x(0, 0) == doctest::Approx(0.4));
  CHECK(std::abs(x(0, 1) + 0.2) <= s / 2);
}

TEST_CASE("decompose_w8 examples and exhaustive recombination") {
  CHECK(decompose_w8(0).high == 0);
  CHECK(decompose_w8(0).low == 0);
  CHECK(decompose_w8(-77).high == -5);
  CHECK(decompose_w8(-77).low == 3);
  CHECK(decompose_w8(127).high == 7);
  CHECK(decompose_w8(127).low == 15);
  for (int w = -128; w <= 127; ++w) {
    const auto n = decompose_w8(w);
    REQUIRE(n.recombine() == w);
    REQUIRE(n.high >= -8);
    REQUIRE(n.high <= 7);
    REQUIRE(n.low <= 15);
  }
  CHECK_THROWS(decompose_w8(128));
}

TEST_CASE("model size and BOPs arithmetic") {
  CHECK(model_size_bytes(5.9e6, 0.39) / 1e6 == doctest::Approx(4.10).epsilon(0.01 / 4.10));
  CHECK(model_size_bytes(5.9e6, 0.23) / 1e6 == doctest::Approx(3.63).epsilon(0.01 / 3.63));
  CHECK(model_size_bytes(1234, 1.0) == doctest::Approx(1234));
  CHECK(bops(0, 0.5, 6) == 0.0);
  CHECK(bops(1e9, 0.0, 6) == doctest::Approx(24e9));
  CHECK(std::abs(bops(1.4e9, 0.39, 6) / 45.6e9 - 1.0) <= 0.05);
  CHECK_THROWS(model_size_bytes(10, 1.5));
}

TEST_CASE("QVT round trip preserves tags, scales and payloads") {
  Matrix w(3, 2);
  w << 0.1, -0.4, 1.5, 2.0, -0.25, 0.0;
  const std::vector tags{Precision::W8, Precision::W4, Precision::W4};
  const auto q = quantize_rows(w, tags);
  const auto back = qvt::to_quantized(qvt::decode(qvt::encode(qvt::from_quantized(q))));
  REQUIRE(back.rows() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tags()[i] == q.tags()[i]);
    CHECK(back.scales()[i] == q.scales()[i]);
    for (std::size_t j = 0; j < 2; ++j) CHECK(back.code(i, j) == q.code(i, j));
  }
  const Matrix m = qvt::to_matrix(qvt::decode(qvt::encode(qvt::from_matrix(w))));
  CHECK((m - w).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS(qvt::decode("garbage"));
}
