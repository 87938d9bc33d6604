#pragma once

// Shared test scaffolding: scratch directories, mock gateways, synthetic data.

#include "metobench/catalog.hpp"
#include "metobench/gateway.hpp"
#include "metobench/mock_backends.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

namespace metobench::testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "metobench-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline BackendConfig backend(const std::string& name, Capability cap) {
  BackendConfig b;
  b.name = name;
  b.capability = cap;
  b.url = "mock:test";
  b.model = name;
  b.retry.base_backoff = std::chrono::milliseconds(0);
  return b;
}

inline std::unique_ptr<Gateway> mock_gateway() { return build_gateway(GatewayConfig::all_mock()); }

// Retained abstract concepts with unique lemmas: "concept00", "concept01", ...
// spread over the default retained supersenses.
inline std::vector<Concept> synthetic_concepts(std::size_t n) {
  static const std::array<Supersense, 5> kinds{Supersense::Feeling, Supersense::State, Supersense::Act,
                                               Supersense::Cognition, Supersense::Attribute};
  std::vector<Concept> out;
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "concept%02zu", i);
    Concept c(name, kinds[i % kinds.size()], 1.5 + 0.05 * static_cast<double>(i % 30));
    c.retain();
    out.push_back(std::move(c));
  }
  return out;
}

inline Embedding random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  Embedding v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v / v.norm();
}

}  // namespace metobench::testing
