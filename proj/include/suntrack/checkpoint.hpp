#pragma once

// JSON network checkpoints: weights row-major per layer, shortest
// round-trip decimal doubles, format_version 1.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "suntrack/neural.hpp"

namespace suntrack {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const Mlp& m) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["layer_sizes"] = m.layer_sizes();
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const Matrix& w = m.params().weights[l];
    auto rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      auto row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < w.cols(); ++c) row.push_back(w(r, c));
      rows.push_back(std::move(row));
    }
    j["weights"].push_back(std::move(rows));
    const Vector& b = m.params().biases[l];
    j["biases"].push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  return j;
}

inline Mlp mlp_from_checkpoint(const nlohmann::json& j) {
  if (!j.is_object()) throw std::runtime_error("checkpoint: top level must be an object");
  if (!j.contains("format_version")) throw std::runtime_error("checkpoint: missing format_version");
  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported format_version " + std::to_string(version) +
                             " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  Mlp shape(sizes);
  const auto& jw = j.at("weights");
  const auto& jb = j.at("biases");
  if (jw.size() != shape.num_layers() || jb.size() != shape.num_layers()) {
    throw std::runtime_error("checkpoint: layer count does not match layer_sizes");
  }
  ParameterSet p = shape.params();
  for (std::size_t l = 0; l < shape.num_layers(); ++l) {
    Matrix& w = p.weights[l];
    if (jw[l].size() != static_cast<std::size_t>(w.rows())) {
      throw std::runtime_error("checkpoint: layer " + std::to_string(l) + " weights have wrong row count");
    }
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const auto& row = jw[l][static_cast<std::size_t>(r)];
      if (row.size() != static_cast<std::size_t>(w.cols())) {
        throw std::runtime_error("checkpoint: layer " + std::to_string(l) + " weights have wrong column count");
      }
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    const auto b = jb[l].get<std::vector<double>>();
    if (b.size() != static_cast<std::size_t>(p.biases[l].size())) {
      throw std::runtime_error("checkpoint: layer " + std::to_string(l) + " biases have wrong length");
    }
    for (std::size_t i = 0; i < b.size(); ++i) p.biases[l][static_cast<Eigen::Index>(i)] = b[i];
  }
  return Mlp(sizes, std::move(p));
}

inline void save_checkpoint(const Mlp& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << checkpoint_json(m).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + path + ": " + e.what());
  }
  try {
    return mlp_from_checkpoint(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace suntrack
