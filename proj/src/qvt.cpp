#include "hwvit/qvt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace hwvit::qvt {

using nlohmann::json;

static_assert(sizeof(float) == 4);

std::size_t Tensor::element_count() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

void check_metadata(const Tensor& t) {
  const std::size_t n = t.element_count();
  if (t.dtype == DType::F32 && t.f32.size() != n) throw Error("qvt: f32 payload size mismatch");
  if (t.dtype == DType::I8 && t.i8.size() != n) throw Error("qvt: i8 payload size mismatch");
  const std::size_t rows = t.dims.empty() ? 0 : t.dims.front();
  if (t.tags && t.tags->size() != rows) throw Error("qvt: tags must have one entry per row");
  if (t.scales && t.scales->size() != rows) throw Error("qvt: scales must have one entry per row");
}

}  // namespace

std::string encode(const Tensor& t) {
  check_metadata(t);
  json header;
  header["dims"] = t.dims;
  header["dtype"] = t.dtype == DType::F32 ? "f32" : "i8";
  if (t.tags) {
    json tags = json::array();
    for (Precision p : *t.tags) tags.push_back(std::string(to_string(p)));
    header["tags"] = std::move(tags);
  }
  if (t.scales) header["scales"] = *t.scales;

  std::string out = header.dump();
  out.push_back('\n');
  if (t.dtype == DType::F32) {
    const std::size_t base = out.size();
    out.resize(base + t.f32.size() * 4);
    for (std::size_t i = 0; i < t.f32.size(); ++i) {
      const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(t.f32[i]));
      std::memcpy(out.data() + base + i * 4, &bits, 4);
    }
  } else {
    out.append(reinterpret_cast<const char*>(t.i8.data()), t.i8.size());
  }
  return out;
}

Tensor decode(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw Error("qvt: missing header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::parse_error& e) {
    throw Error(std::string("qvt: malformed header: ") + e.what());
  }
  Tensor t;
  try {
    t.dims = header.at("dims").get<std::vector<std::size_t>>();
    const auto dtype = header.at("dtype").get<std::string>();
    if (dtype == "f32") {
      t.dtype = DType::F32;
    } else if (dtype == "i8") {
      t.dtype = DType::I8;
    } else {
      throw Error("qvt: unsupported dtype " + dtype);
    }
    if (header.contains("tags")) {
      std::vector<Precision> tags;
      for (const auto& s : header["tags"]) tags.push_back(precision_from_string(s.get<std::string>()));
      t.tags = std::move(tags);
    }
    if (header.contains("scales")) t.scales = header["scales"].get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(std::string("qvt: bad header field: ") + e.what());
  }

  const std::string_view payload = bytes.substr(nl + 1);
  const std::size_t n = t.element_count();
  const std::size_t width = t.dtype == DType::F32 ? 4 : 1;
  if (payload.size() != n * width) throw Error("qvt: payload length does not match dims");
  if (t.dtype == DType::F32) {
    t.f32.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, payload.data() + i * 4, 4);
      t.f32[i] = std::bit_cast<float>(to_le(bits));
    }
  } else {
    t.i8.resize(n);
    std::memcpy(t.i8.data(), payload.data(), n);
  }
  check_metadata(t);
  return t;
}

void write_file(const std::filesystem::path& path, const Tensor& t) {
  const std::string bytes = encode(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("qvt: cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("qvt: write failed for " + path.string());
}

Tensor read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("qvt: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode(ss.str());
}

Tensor from_matrix(const Eigen::Ref<const Matrix>& m) {
  Tensor t;
  t.dims = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  t.f32.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.f32.push_back(static_cast<float>(m(i, j)));
  return t;
}

Tensor from_vector(const Eigen::Ref<const Vector>& v) {
  Tensor t;
  t.dims = {static_cast<std::size_t>(v.size())};
  for (Eigen::Index i = 0; i < v.size(); ++i) t.f32.push_back(static_cast<float>(v(i)));
  return t;
}

Tensor from_quantized(const QuantizedMatrix& q) {
  Tensor t;
  t.dims = {q.rows(), q.cols()};
  t.dtype = DType::I8;
  t.i8.assign(q.codes().begin(), q.codes().end());
  t.tags = std::vector<Precision>(q.tags().begin(), q.tags().end());
  t.scales = std::vector<double>(q.scales().begin(), q.scales().end());
  return t;
}

Matrix to_matrix(const Tensor& t) {
  if (t.dtype != DType::F32 || t.dims.size() != 2) throw Error("qvt: expected a 2-D f32 tensor");
  Matrix m(t.dims[0], t.dims[1]);
  for (std::size_t i = 0; i < t.f32.size(); ++i) m.data()[i] = t.f32[i];
  return m;
}

Vector to_vector(const Tensor& t) {
  if (t.dtype != DType::F32 || t.dims.size() != 1) throw Error("qvt: expected a 1-D f32 tensor");
  Vector v(t.dims[0]);
  for (std::size_t i = 0; i < t.f32.size(); ++i) v(Eigen::Index(i)) = t.f32[i];
  return v;
}

QuantizedMatrix to_quantized(const Tensor& t) {
  if (t.dtype != DType::I8 || t.dims.size() != 2 || !t.tags || !t.scales)
    throw Error("qvt: expected a 2-D i8 tensor with tags and scales");
  return QuantizedMatrix(t.dims[0], t.dims[1], t.i8, *t.tags, *t.scales);
}

}  // namespace hwvit::qvt
