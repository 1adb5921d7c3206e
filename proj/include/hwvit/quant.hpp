#pragma once

// Row-wise flexible mixed-precision quantization.
//
// Every output row of a weight matrix carries its own precision tag (4-bit or
// 8-bit) and its own symmetric scale. Activations are quantized per tensor
// with a dynamic max-abs scale. 8-bit codes split into a signed high nibble
// and an unsigned low nibble so that the hardware only ever multiplies
// 4-bit weights.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hwvit/common.hpp"

namespace hwvit {

enum class Precision : std::uint8_t { W4, W8 };

constexpr int bit_width(Precision p) { return p == Precision::W4 ? 4 : 8; }
constexpr int code_max(Precision p) { return (1 << (bit_width(p) - 1)) - 1; }
constexpr int code_min(Precision p) { return -(1 << (bit_width(p) - 1)); }

std::string_view to_string(Precision p);
Precision precision_from_string(std::string_view s);

struct QuantParams {
  int weight_bits_low = 4;
  int weight_bits_high = 8;
  int act_bits = 6;
  bool symmetric = true;

  void validate() const;
};

class QuantizedMatrix {
 public:
  QuantizedMatrix(std::size_t rows, std::size_t cols, std::vector<std::int8_t> codes,
                  std::vector<Precision> tags, std::vector<double> scales,
                  std::optional<double> act_scale_hint = std::nullopt);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::int8_t code(std::size_t i, std::size_t j) const { return codes_[i * cols_ + j]; }
  std::span<const std::int8_t> codes() const { return codes_; }
  std::span<const std::int8_t> row_codes(std::size_t i) const {
    return std::span<const std::int8_t>(codes_).subspan(i * cols_, cols_);
  }
  std::span<const Precision> tags() const { return tags_; }
  std::span<const double> scales() const { return scales_; }
  std::optional<double> act_scale_hint() const { return act_scale_hint_; }

  std::size_t w8_rows() const;
  /// Fraction of rows tagged W8.
  double mixed_ratio() const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::int8_t> codes_;
  std::vector<Precision> tags_;
  std::vector<double> scales_;
  std::optional<double> act_scale_hint_;
};

/// Symmetric per-row quantization with scale max|w_i| / (2^(b-1) - 1); an
/// all-zero row gets scale 1. Rounds half away from zero.
QuantizedMatrix quantize_rows(const Eigen::Ref<const Matrix>& weights,
                              std::span<const Precision> tags, const QuantParams& params = {});

/// Same as quantize_rows but with caller-provided (e.g. calibrated or
/// clipped) row scales; values beyond the code range are clamped.
QuantizedMatrix quantize_rows_with_scales(const Eigen::Ref<const Matrix>& weights,
                                          std::span<const Precision> tags,
                                          std::span<const double> scales);

Matrix dequantize(const QuantizedMatrix& q);

struct FakeQuantized {
  Matrix values;
  // 1 where the latent weight lies inside the clamp bound, 0 outside. The
  // straight-through backward multiplies the upstream gradient by this mask.
  Matrix mask;
};

FakeQuantized fake_quantize(const Eigen::Ref<const Matrix>& weights,
                            std::span<const Precision> tags, const QuantParams& params = {});
FakeQuantized fake_quantize(const Eigen::Ref<const Matrix>& weights,
                            std::span<const Precision> tags, std::span<const double> scales);

struct ActivationCodes {
  CodeMatrix codes;
  double scale = 1.0;
};

/// Per-tensor symmetric signed quantization with a dynamic max-abs scale.
ActivationCodes quantize_activations(const Eigen::Ref<const Matrix>& x, int act_bits);

/// quantize_activations followed by dequantization, written into `x`.
/// Returns the scale used.
double fake_quantize_activations_inplace(Matrix& x, int act_bits);

struct NibblePair {
  std::int8_t high;  // signed, [-8, 7]
  std::uint8_t low;  // unsigned, [0, 15]

  std::int32_t recombine() const { return high * 16 + low; }
};

NibblePair decompose_w8(std::int32_t w);

/// Weight storage in bytes for `param_count` weights of which a fraction
/// `mixed_ratio_8bit` is 8-bit and the rest 4-bit. Scale storage excluded.
double model_size_bytes(double param_count, double mixed_ratio_8bit);

/// Bit operations: MACs weighted by the average weight bit-width and the
/// activation bit-width.
double bops(double macs, double mixed_ratio_8bit, int act_bits);

}  // namespace hwvit
