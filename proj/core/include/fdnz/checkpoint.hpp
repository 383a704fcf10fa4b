#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "fdnz/nn.hpp"
#include "fdnz/tensor.hpp"

namespace fdnz {

// NTF v1 checkpoint container. Layout, all integers little-endian:
//   magic "FDNZ" + version byte '1' + NUL
//   u16 header JSON length, JSON bytes (canonical, sorted keys)
//   u32 tensor count
//   per tensor: u16 name length, name bytes, u8 dtype (1 = f64), u8 ndim,
//               ndim x u32 dims, payload doubles
// save(load(save(x))) is byte-identical.
struct Checkpoint {
    nlohmann::json header = nlohmann::json::object(); // {"layers": [...], "meta": {...}}
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;
    nlohmann::json meta(const std::string& key) const;
};

void save_ntf(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_ntf(const std::string& path);

nlohmann::json layers_to_json(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> layers_from_json(const nlohmann::json& spec);

void save_model(const ModelParams& model, const std::string& path);
ModelParams load_model(const std::string& path);
ModelParams model_from_checkpoint(const Checkpoint& ckpt);
Checkpoint checkpoint_from_model(const ModelParams& model);

} // namespace fdnz
