#include "hwvit/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hwvit {

std::string_view to_string(Precision p) { return p == Precision::W4 ? "W4" : "W8"; }

Precision precision_from_string(std::string_view s) {
  if (s == "W4") return Precision::W4;
  if (s == "W8") return Precision::W8;
  throw std::invalid_argument("unknown precision tag: " + std::string(s));
}

void QuantParams::validate() const {
  if (act_bits < 2 || act_bits > 16) throw std::invalid_argument("act_bits must be in [2, 16]");
  if (weight_bits_low >= weight_bits_high)
    throw std::invalid_argument("weight_bits_low must be below weight_bits_high");
  if (weight_bits_low != 4 || weight_bits_high != 8)
    throw std::invalid_argument("only 4/8-bit weights are supported");
  if (!symmetric) throw std::invalid_argument("only symmetric quantization is supported");
}

QuantizedMatrix::QuantizedMatrix(std::size_t rows, std::size_t cols, std::vector<std::int8_t> codes,
                                 std::vector<Precision> tags, std::vector<double> scales,
                                 std::optional<double> act_scale_hint)
    : rows_(rows),
      cols_(cols),
      codes_(std::move(codes)),
      tags_(std::move(tags)),
      scales_(std::move(scales)),
      act_scale_hint_(act_scale_hint) {
  if (codes_.size() != rows_ * cols_) throw std::invalid_argument("code count does not match shape");
  if (tags_.size() != rows_ || scales_.size() != rows_)
    throw std::invalid_argument("per-row tags/scales must have one entry per row");
  for (std::size_t i = 0; i < rows_; ++i) {
    if (!(scales_[i] > 0.0) || !std::isfinite(scales_[i]))
      throw std::invalid_argument("row scales must be positive and finite");
    for (std::int8_t c : row_codes(i)) {
      if (c < code_min(tags_[i]) || c > code_max(tags_[i]))
        throw std::invalid_argument("code outside the range of its row precision");
    }
  }
  if (act_scale_hint_ && !(*act_scale_hint_ > 0.0))
    throw std::invalid_argument("activation scale hint must be positive");
}

std::size_t QuantizedMatrix::w8_rows() const {
  return static_cast<std::size_t>(std::count(tags_.begin(), tags_.end(), Precision::W8));
}

double QuantizedMatrix::mixed_ratio() const {
  return rows_ == 0 ? 0.0 : static_cast<double>(w8_rows()) / static_cast<double>(rows_);
}

namespace {

void check_input(const Eigen::Ref<const Matrix>& w, std::size_t tag_count) {
  if (w.rows() == 0 || w.cols() == 0) throw std::invalid_argument("empty weight matrix");
  if (static_cast<std::size_t>(w.rows()) != tag_count)
    throw std::invalid_argument("one precision tag per row required");
  if (!w.allFinite()) throw std::invalid_argument("invalid weight");
}

int clamp_code(double v, Precision p) {
  return static_cast<int>(std::clamp(v, double(code_min(p)), double(code_max(p))));
}

// Row quantization core. `codes_out` receives the integer codes; returns the
// row scale and writes the clamp bound.
struct RowResult {
  double scale;
  double bound;
};

RowResult quantize_row_dynamic(const Eigen::Ref<const Matrix>& w, Eigen::Index i, Precision p,
                               std::int8_t* codes_out) {
  const double qmax = code_max(p);
  const double maxabs = w.row(i).cwiseAbs().maxCoeff();
  if (maxabs == 0.0) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) codes_out[j] = 0;
    return {1.0, qmax};
  }
  // w * qmax / maxabs keeps exact halves exact (e.g. 0.5 * 7 / 1 == 3.5).
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    codes_out[j] = static_cast<std::int8_t>(clamp_code(std::round(w(i, j) * qmax / maxabs), p));
  return {maxabs / qmax, maxabs};
}

void quantize_row_scaled(const Eigen::Ref<const Matrix>& w, Eigen::Index i, Precision p,
                         double scale, std::int8_t* codes_out) {
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    codes_out[j] = static_cast<std::int8_t>(clamp_code(std::round(w(i, j) / scale), p));
}

}  // namespace

QuantizedMatrix quantize_rows(const Eigen::Ref<const Matrix>& weights,
                              std::span<const Precision> tags, const QuantParams& params) {
  params.validate();
  check_input(weights, tags.size());
  const auto rows = static_cast<std::size_t>(weights.rows());
  const auto cols = static_cast<std::size_t>(weights.cols());
  std::vector<std::int8_t> codes(rows * cols);
  std::vector<double> scales(rows);
  for (std::size_t i = 0; i < rows; ++i)
    scales[i] = quantize_row_dynamic(weights, Eigen::Index(i), tags[i], &codes[i * cols]).scale;
  return QuantizedMatrix(rows, cols, std::move(codes), {tags.begin(), tags.end()}, std::move(scales));
}

QuantizedMatrix quantize_rows_with_scales(const Eigen::Ref<const Matrix>& weights,
                                          std::span<const Precision> tags,
                                          std::span<const double> scales) {
  check_input(weights, tags.size());
  if (scales.size() != tags.size()) throw std::invalid_argument("one scale per row required");
  const auto rows = static_cast<std::size_t>(weights.rows());
  const auto cols = static_cast<std::size_t>(weights.cols());
  std::vector<std::int8_t> codes(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!(scales[i] > 0.0) || !std::isfinite(scales[i]))
      throw std::invalid_argument("row scales must be positive and finite");
    quantize_row_scaled(weights, Eigen::Index(i), tags[i], scales[i], &codes[i * cols]);
  }
  return QuantizedMatrix(rows, cols, std::move(codes), {tags.begin(), tags.end()},
                         {scales.begin(), scales.end()});
}

Matrix dequantize(const QuantizedMatrix& q) {
  Matrix out(q.rows(), q.cols());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const double s = q.scales()[i];
    for (std::size_t j = 0; j < q.cols(); ++j) out(i, j) = q.code(i, j) * s;
  }
  return out;
}

FakeQuantized fake_quantize(const Eigen::Ref<const Matrix>& weights,
                            std::span<const Precision> tags, const QuantParams& params) {
  params.validate();
  check_input(weights, tags.size());
  FakeQuantized out{Matrix(weights.rows(), weights.cols()), Matrix(weights.rows(), weights.cols())};
  std::vector<std::int8_t> row(static_cast<std::size_t>(weights.cols()));
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    const auto r = quantize_row_dynamic(weights, i, tags[std::size_t(i)], row.data());
    for (Eigen::Index j = 0; j < weights.cols(); ++j) {
      out.values(i, j) = row[std::size_t(j)] * r.scale;
      out.mask(i, j) = std::abs(weights(i, j)) <= r.bound ? 1.0 : 0.0;
    }
  }
  return out;
}

FakeQuantized fake_quantize(const Eigen::Ref<const Matrix>& weights,
                            std::span<const Precision> tags, std::span<const double> scales) {
  const QuantizedMatrix q = quantize_rows_with_scales(weights, tags, scales);
  FakeQuantized out{dequantize(q), Matrix(weights.rows(), weights.cols())};
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    const double bound = scales[std::size_t(i)] * code_max(tags[std::size_t(i)]);
    for (Eigen::Index j = 0; j < weights.cols(); ++j)
      out.mask(i, j) = std::abs(weights(i, j)) <= bound ? 1.0 : 0.0;
  }
  return out;
}

ActivationCodes quantize_activations(const Eigen::Ref<const Matrix>& x, int act_bits) {
  if (act_bits < 2 || act_bits > 16) throw std::invalid_argument("act_bits must be in [2, 16]");
  if (!x.allFinite()) throw std::invalid_argument("invalid activation");
  const double qmax = (1 << (act_bits - 1)) - 1;
  const double qmin = -(1 << (act_bits - 1));
  const double maxabs = x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
  ActivationCodes out{CodeMatrix(x.rows(), x.cols()), maxabs == 0.0 ? 1.0 : maxabs / qmax};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double v = maxabs == 0.0 ? 0.0 : std::round(x(i, j) * qmax / maxabs);
      out.codes(i, j) = static_cast<std::int32_t>(std::clamp(v, qmin, qmax));
    }
  }
  return out;
}

double fake_quantize_activations_inplace(Matrix& x, int act_bits) {
  const ActivationCodes q = quantize_activations(x, act_bits);
  x = q.codes.cast<double>() * q.scale;
  return q.scale;
}

NibblePair decompose_w8(std::int32_t w) {
  if (w < -128 || w > 127) throw std::invalid_argument("8-bit weight out of range");
  return {static_cast<std::int8_t>(w >> 4), static_cast<std::uint8_t>(w & 0xF)};
}

namespace {
void check_ratio(double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("mixed ratio must be in [0, 1]");
}
double average_weight_bits(double ratio) { return ratio * 8.0 + (1.0 - ratio) * 4.0; }
}  // namespace

double model_size_bytes(double param_count, double mixed_ratio_8bit) {
  check_ratio(mixed_ratio_8bit);
  return param_count * average_weight_bits(mixed_ratio_8bit) / 8.0;
}

double bops(double macs, double mixed_ratio_8bit, int act_bits) {
  check_ratio(mixed_ratio_8bit);
  return macs * average_weight_bits(mixed_ratio_8bit) * act_bits;
}

}  // namespace hwvit
