#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "signattack/tensor.hpp"

namespace signattack {

// FNV-1a over a byte string. Used for config/artifact provenance hashes,
// not for anything security relevant.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

// Hash of a tensor's shape and payload, for provenance fields.
std::uint64_t tensor_hash(const Tensor& t);

// Single-file artifact container: magic, version, a JSON header and a list
// of named float64 tensors. All model checkpoints, dataset caches, map
// archives and perturbation archives use it, each with its own header kind.
class Artifact {
 public:
  Artifact() = default;
  explicit Artifact(std::string kind);

  const std::string& kind() const { return kind_; }
  nlohmann::json& header();
  const nlohmann::json& header() const;

  void put(const std::string& name, const Tensor& t);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<std::string> tensor_names() const;

  void save(const std::string& path) const;
  // Throws MissingArtifactError naming `producer` when the file is absent.
  static Artifact load(const std::string& path, const std::string& expected_kind,
                       const std::string& producer);

 private:
  std::string kind_;
  std::shared_ptr<nlohmann::json> header_;  // pimpl keeps json out of most TUs
  std::map<std::string, Tensor> tensors_;
};

}  // namespace signattack
