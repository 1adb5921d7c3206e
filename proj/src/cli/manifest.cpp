#include "hwvit/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>

#include "hwvit/common.hpp"

namespace hwvit {

namespace {

std::string to_hex(const unsigned char* data, unsigned len) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kDigits[data[i] >> 4]);
    out.push_back(kDigits[data[i] & 0xf]);
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
    throw Error("sha256 computation failed");
  return to_hex(md.data(), len);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return sha256_hex(os.str());
}

std::string sha256_path(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) return sha256_file(path);
  std::vector<std::string> lines;
  for (const auto& e : std::filesystem::recursive_directory_iterator(path))
    if (e.is_regular_file())
      lines.push_back(std::filesystem::relative(e.path(), path).generic_string() + " " + sha256_file(e.path()));
  std::sort(lines.begin(), lines.end());
  std::string joined;
  for (const auto& l : lines) joined += l + "\n";
  return sha256_hex(joined);
}

void RunManifest::add_input(std::string role, const std::filesystem::path& path) {
  inputs.push_back({std::move(role), path.string(), sha256_path(path)});
}

void RunManifest::add_output(std::string role, const std::filesystem::path& path) {
  outputs.push_back({std::move(role), path.string(), sha256_path(path)});
}

nlohmann::json RunManifest::to_json() const {
  auto entries = [](const std::vector<ManifestEntry>& v) {
    auto a = nlohmann::json::array();
    for (const auto& e : v) a.push_back({{"role", e.role}, {"path", e.path}, {"sha256", e.sha256}});
    return a;
  };
  return {{"command", command},  {"args", args},
          {"inputs", entries(inputs)}, {"outputs", entries(outputs)},
          {"seeds", seeds},      {"summary", summary},
          {"tool_version", tool_version()},
          {"timestamps", {{"started", started_at}, {"finished", finished_at}}}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const char* tool_version() { return HWVIT_VERSION; }

}  // namespace hwvit
