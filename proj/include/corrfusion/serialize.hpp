#pragma once

// Model persistence: every tensor (parameters, then buffers) is appended to
// params.f64 as little-endian f64; manifest.json records the model config
// and, per tensor, its name, shape and byte offset.

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "corrfusion/io.hpp"
#include "corrfusion/model.hpp"

namespace corrfusion {

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"head", to_string(c.head)},
                     {"input_dim", c.input_dim},
                     {"dim", c.dim},
                     {"classes", c.classes},
                     {"r", c.r},
                     {"rho", c.rho},
                     {"bn_momentum", c.bn_momentum},
                     {"bn_epsilon", c.bn_epsilon},
                     {"detach_weights", c.detach_weights}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.head = parse_head(j.at("head").get<std::string>());
  j.at("input_dim").get_to(c.input_dim);
  j.at("dim").get_to(c.dim);
  j.at("classes").get_to(c.classes);
  j.at("r").get_to(c.r);
  j.at("rho").get_to(c.rho);
  j.at("bn_momentum").get_to(c.bn_momentum);
  j.at("bn_epsilon").get_to(c.bn_epsilon);
  j.at("detach_weights").get_to(c.detach_weights);
}

inline void save_network(Network& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string blob;
  nlohmann::json tensors = nlohmann::json::array();
  auto add = [&](const TensorRef& t) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", blob.size()}});
    io::append_f64_le(blob, t.values);
  };
  visit_parameters(net, add);
  visit_buffers(net, add);
  nlohmann::json manifest{{"config", net.config},
                          {"covariance_initialized", net.fusion && net.fusion->initialized},
                          {"tensors", tensors},
                          {"bytes", blob.size()}};
  io::write_json(dir / "manifest.json", manifest);
  io::write_bytes(dir / "params.f64", blob);
}

inline Network load_network(const std::filesystem::path& dir) {
  const nlohmann::json manifest = io::read_json(dir / "manifest.json");
  const std::string blob = io::read_bytes(dir / "params.f64");
  Network net;
  try {
    net = make_network(manifest.at("config").get<ModelConfig>(), 0);
    if (net.fusion) net.fusion->initialized = manifest.at("covariance_initialized").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest.json: " + std::string(e.what()));
  }
  const auto& tensors = manifest.at("tensors");
  std::size_t idx = 0;
  auto fill = [&](const TensorRef& t) {
    if (idx >= tensors.size()) throw IoError("manifest.json: missing tensor " + t.name);
    const auto& entry = tensors[idx++];
    if (entry.at("name").get<std::string>() != t.name ||
        entry.at("shape").get<std::vector<std::size_t>>() != t.shape)
      throw IoError("manifest mismatch at tensor " + t.name);
    const auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t bytes = t.values.size() * 8;
    if (offset + bytes > blob.size())
      throw IoError("params.f64 truncated at tensor " + t.name);
    const auto vals = io::decode_f64_le(std::string_view(blob).substr(offset, bytes));
    std::copy(vals.begin(), vals.end(), t.values.begin());
  };
  visit_parameters(net, fill);
  visit_buffers(net, fill);
  if (idx != tensors.size()) throw IoError("manifest.json lists unexpected extra tensors");
  return net;
}

}  // namespace corrfusion
