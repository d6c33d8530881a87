#include "signattack/serialize.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "signattack/errors.hpp"

namespace signattack {

using json = nlohmann::json;

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::uint64_t tensor_hash(const Tensor& t) {
  std::string bytes;
  bytes.reserve(32 + t.size() * sizeof(double));
  for (int d : {t.n(), t.h(), t.w(), t.c()}) bytes.append(reinterpret_cast<const char*>(&d), sizeof(d));
  bytes.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  return fnv1a64(bytes);
}

namespace {
constexpr char kMagic[4] = {'S', 'G', 'N', 'A'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

Artifact::Artifact(std::string kind) : kind_(std::move(kind)), header_(std::make_shared<json>()) {
  (*header_)["kind"] = kind_;
  (*header_)["format_version"] = kVersion;
}

json& Artifact::header() { return *header_; }
const json& Artifact::header() const { return *header_; }

void Artifact::put(const std::string& name, const Tensor& t) { tensors_[name] = t; }

const Tensor& Artifact::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IoError("artifact has no tensor '" + name + "'");
  return it->second;
}

bool Artifact::has(const std::string& name) const { return tensors_.count(name) > 0; }

std::vector<std::string> Artifact::tensor_names() const {
  std::vector<std::string> names;
  for (const auto& [k, v] : tensors_) names.push_back(k);
  return names;
}

void Artifact::save(const std::string& path) const {
  json hdr = *header_;
  json tl = json::array();
  for (const auto& [name, t] : tensors_) {
    tl.push_back({{"name", name}, {"shape", {t.n(), t.h(), t.w(), t.c()}}});
  }
  hdr["tensors"] = tl;
  std::string hs = hdr.dump();

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  std::uint32_t ver = kVersion;
  f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : tensors_)
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!f) throw IoError("short write to '" + path + "'");
}

Artifact Artifact::load(const std::string& path, const std::string& expected_kind,
                        const std::string& producer) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError(path, producer);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) throw IoError("'" + path + "' is not an artifact file");
  std::uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (ver != kVersion) throw IoError("unsupported artifact version in '" + path + "'");
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw IoError("truncated artifact '" + path + "'");

  Artifact a;
  a.header_ = std::make_shared<json>(json::parse(hs));
  a.kind_ = a.header_->value("kind", "");
  if (!expected_kind.empty() && a.kind_ != expected_kind)
    throw IoError("'" + path + "' holds a '" + a.kind_ + "' artifact, expected '" + expected_kind + "'");
  for (const auto& entry : (*a.header_)["tensors"]) {
    auto shape = entry["shape"];
    Tensor t(shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>(), shape[3].get<int>());
    f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw IoError("truncated tensor payload in '" + path + "'");
    a.tensors_[entry["name"].get<std::string>()] = std::move(t);
  }
  return a;
}

}  // namespace signattack
