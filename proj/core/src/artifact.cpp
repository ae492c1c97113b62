#include "mvh/artifact.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mvh {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t config_hash(const nlohmann::json& config) {
  // nlohmann keeps object keys sorted, so dump() is canonical.
  const std::string s = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunArtifact::RunArtifact(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  std::filesystem::create_directories(dir_ / "plotdata");
}

void RunArtifact::write_report(const nlohmann::json& report) {
  write_json("report.json", report);
}

void RunArtifact::write_json(const std::string& relative_name,
                             const nlohmann::json& payload) {
  std::ofstream out(dir_ / relative_name);
  if (!out) throw std::runtime_error("cannot write " + relative_name);
  out << payload.dump(2) << "\n";
  files_.push_back(relative_name);
}

void RunArtifact::write_csv(const std::string& relative_name,
                            const std::vector<std::string>& header,
                            const std::vector<std::vector<double>>& rows) {
  std::ofstream out(dir_ / relative_name);
  if (!out) throw std::runtime_error("cannot write " + relative_name);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << format_double(row[i]);
    out << "\n";
  }
  files_.push_back(relative_name);
}

void RunArtifact::write_ensemble_csv(const std::string& relative_name,
                                     const Ensemble& ens) {
  std::ofstream out(dir_ / relative_name);
  if (!out) throw std::runtime_error("cannot write " + relative_name);
  for (std::size_t k = 0; k < ens.dim(); ++k)
    out << (k ? "," : "") << "z" << k;
  out << "\n";
  for (std::size_t i = 0; i < ens.count(); ++i) {
    const auto z = ens.particle(i);
    for (std::size_t k = 0; k < ens.dim(); ++k)
      out << (k ? "," : "") << format_double(z[k]);
    out << "\n";
  }
  files_.push_back(relative_name);
}

void RunArtifact::finalize_manifest(const nlohmann::json& config,
                                    std::uint64_t seed, int threads,
                                    const std::string& subcommand) {
  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["engine_version"] = kEngineVersion;
  manifest["subcommand"] = subcommand;
  manifest["seed"] = seed;
  manifest["threads"] = threads;
  manifest["config"] = config;
  manifest["config_hash"] = config_hash(config);
  manifest["data_files"] = files_;
  const auto now = std::chrono::system_clock::now();
  manifest["created_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch())
          .count();
  std::ofstream out(dir_ / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest.json");
  out << manifest.dump(2) << "\n";
}

}  // namespace mvh
