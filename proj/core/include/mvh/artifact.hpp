#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mvh/ensemble.hpp"

namespace mvh {

inline constexpr const char* kEngineVersion = "0.1.0";

// Run output directory: manifest.json (seed, config hash, engine version,
// timestamps), data files, report files. Timing lives only in the manifest so
// the data files stay bitwise reproducible.
class RunArtifact {
 public:
  explicit RunArtifact(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  void write_report(const nlohmann::json& report);
  void write_json(const std::string& relative_name, const nlohmann::json& payload);
  // Deterministic CSV: %.17g formatting, fixed column order.
  void write_csv(const std::string& relative_name,
                 const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& rows);
  void write_ensemble_csv(const std::string& relative_name, const Ensemble& ens);

  void finalize_manifest(const nlohmann::json& config, std::uint64_t seed,
                         int threads, const std::string& subcommand);

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

std::string format_double(double v);
std::uint64_t config_hash(const nlohmann::json& config);

}  // namespace mvh
