#pragma once

// QVT tensor files: one UTF-8 JSON header line
//   {"dims":[...],"dtype":"f32"|"i8","tags":[...],"scales":[...]}\n
// followed by the raw little-endian payload in row-major order. "tags" and
// "scales" are optional and carry per-row quantization metadata.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hwvit/common.hpp"
#include "hwvit/quant.hpp"

namespace hwvit::qvt {

enum class DType { F32, I8 };

struct Tensor {
  std::vector<std::size_t> dims;
  DType dtype = DType::F32;
  std::optional<std::vector<Precision>> tags;
  std::optional<std::vector<double>> scales;
  std::vector<float> f32;
  std::vector<std::int8_t> i8;

  std::size_t element_count() const;
};

std::string encode(const Tensor& t);
Tensor decode(std::string_view bytes);

void write_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_file(const std::filesystem::path& path);

Tensor from_matrix(const Eigen::Ref<const Matrix>& m);
Tensor from_vector(const Eigen::Ref<const Vector>& v);
Tensor from_quantized(const QuantizedMatrix& q);

Matrix to_matrix(const Tensor& t);
Vector to_vector(const Tensor& t);
QuantizedMatrix to_quantized(const Tensor& t);

}  // namespace hwvit::qvt
