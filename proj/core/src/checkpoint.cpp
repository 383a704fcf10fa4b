#include "fdnz/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "fdnz/error.hpp"

namespace fdnz {

namespace {

constexpr char kMagic[6] = {'F', 'D', 'N', 'Z', '1', '\0'};
constexpr std::uint8_t kDtypeF64 = 1;
constexpr std::uint8_t kMaxNdim = 8;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    std::string bytes;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t count, const std::string& what) {
        if (pos + count > bytes.size()) {
            raise(ErrorKind::TruncatedFile, path + ": " + what + " truncated at offset " +
                                                std::to_string(bytes.size()) + ", need " +
                                                std::to_string(pos + count) + " bytes");
        }
    }
    std::uint8_t u8(const std::string& what) {
        need(1, what);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::uint16_t u16(const std::string& what) {
        need(2, what);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
        pos += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
        pos += 4;
        return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
               (std::uint32_t(p[3]) << 24);
    }
    std::string raw(std::size_t count, const std::string& what) {
        need(count, what);
        std::string out = bytes.substr(pos, count);
        pos += count;
        return out;
    }
};

} // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    raise(ErrorKind::MissingArtifact, "checkpoint has no tensor named " + name);
}

bool Checkpoint::has_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return true;
    }
    return false;
}

nlohmann::json Checkpoint::meta(const std::string& key) const {
    if (!header.contains("meta") || !header["meta"].contains(key)) {
        raise(ErrorKind::MissingArtifact, "checkpoint header has no meta key " + key);
    }
    return header["meta"][key];
}

void save_ntf(const Checkpoint& ckpt, const std::string& path) {
    const std::string header = ckpt.header.dump();
    if (header.size() > std::numeric_limits<std::uint16_t>::max()) {
        raise(ErrorKind::InvalidValue, "header JSON exceeds 65535 bytes");
    }
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u16(out, static_cast<std::uint16_t>(header.size()));
    out += header;
    put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
            raise(ErrorKind::InvalidValue, "tensor name too long: " + name);
        }
        if (tensor.ndim() > kMaxNdim) {
            raise(ErrorKind::InvalidValue, "tensor " + name + " has too many dims");
        }
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(kDtypeF64));
        out.push_back(static_cast<char>(tensor.ndim()));
        for (const std::size_t d : tensor.shape) put_u32(out, static_cast<std::uint32_t>(d));
        const std::size_t payload = tensor.numel() * sizeof(double);
        const std::size_t at = out.size();
        out.resize(at + payload);
        std::memcpy(out.data() + at, tensor.data.data(), payload);
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) raise(ErrorKind::IoError, "cannot open " + path + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) raise(ErrorKind::IoError, "short write to " + path);
}

Checkpoint load_ntf(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) raise(ErrorKind::IoError, "cannot open " + path);
    Reader in;
    in.path = path;
    in.bytes.assign(std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>());

    const std::string magic = in.raw(sizeof(kMagic), "magic");
    if (magic.compare(0, 4, "FDNZ", 4) != 0 || magic[5] != '\0') {
        raise(ErrorKind::BadMagic, path + ": not an NTF checkpoint");
    }
    if (magic[4] != '1') {
        raise(ErrorKind::UnsupportedVersion,
              path + ": NTF version '" + std::string(1, magic[4]) + "', expected '1'");
    }

    Checkpoint ckpt;
    const std::uint16_t header_len = in.u16("header length");
    const std::string header = in.raw(header_len, "header JSON");
    try {
        ckpt.header = nlohmann::json::parse(header);
    } catch (const nlohmann::json::parse_error& e) {
        raise(ErrorKind::ParseError, path + ": header JSON: " + e.what());
    }

    const std::uint32_t count = in.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = in.u16("tensor name length");
        const std::string name = in.raw(name_len, "tensor name");
        const std::string what = "tensor " + (name.empty() ? "#" + std::to_string(i) : name);
        const std::uint8_t dtype = in.u8(what + " dtype");
        if (dtype != kDtypeF64) {
            raise(ErrorKind::TensorShapeCorrupt, path + ": " + what + " has dtype " +
                                                     std::to_string(dtype) + ", expected 1");
        }
        const std::uint8_t ndim = in.u8(what + " ndim");
        if (ndim == 0 || ndim > kMaxNdim) {
            raise(ErrorKind::TensorShapeCorrupt, path + ": " + what + " has ndim " +
                                                     std::to_string(ndim));
        }
        std::vector<std::size_t> dims(ndim);
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            dims[d] = in.u32(what + " dims");
            if (dims[d] == 0 || numel > (std::size_t{1} << 40) / dims[d]) {
                raise(ErrorKind::TensorShapeCorrupt, path + ": " + what +
                                                         " has implausible dims");
            }
            numel *= dims[d];
        }
        Tensor t;
        t.shape = std::move(dims);
        t.data.resize(numel);
        const std::string payload = in.raw(numel * sizeof(double), what + " payload");
        std::memcpy(t.data.data(), payload.data(), payload.size());
        ckpt.tensors.emplace_back(name, std::move(t));
    }
    return ckpt;
}

nlohmann::json layers_to_json(const std::vector<LayerSpec>& layers) {
    nlohmann::json out = nlohmann::json::array();
    for (const LayerSpec& layer : layers) {
        nlohmann::json j;
        j["kind"] = to_string(layer.kind);
        switch (layer.kind) {
            case LayerKind::Conv2d:
                j["in_ch"] = layer.in_ch;
                j["out_ch"] = layer.out_ch;
                break;
            case LayerKind::Dense:
                j["in_dim"] = layer.in_dim;
                j["out_dim"] = layer.out_dim;
                j["feature_layer"] = layer.feature_layer;
                break;
            default:
                break;
        }
        out.push_back(std::move(j));
    }
    return out;
}

std::vector<LayerSpec> layers_from_json(const nlohmann::json& spec) {
    if (!spec.is_array()) raise(ErrorKind::ParseError, "layer spec must be a JSON array");
    std::vector<LayerSpec> layers;
    for (const auto& j : spec) {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "conv2d") {
            layers.push_back(LayerSpec::conv2d(j.at("in_ch").get<int>(),
                                               j.at("out_ch").get<int>()));
        } else if (kind == "maxpool2") {
            layers.push_back(LayerSpec::maxpool2());
        } else if (kind == "relu") {
            layers.push_back(LayerSpec::relu());
        } else if (kind == "flatten") {
            layers.push_back(LayerSpec::flatten());
        } else if (kind == "dense") {
            layers.push_back(LayerSpec::dense(j.at("in_dim").get<int>(),
                                              j.at("out_dim").get<int>(),
                                              j.value("feature_layer", false)));
        } else {
            raise(ErrorKind::ParseError, "unknown layer kind " + kind);
        }
    }
    return layers;
}

Checkpoint checkpoint_from_model(const ModelParams& model) {
    Checkpoint ckpt;
    ckpt.header["layers"] = layers_to_json(model.layers);
    ckpt.header["meta"] = {{"rng_seed", model.rng_seed}};
    ckpt.tensors = model.tensors;
    return ckpt;
}

ModelParams model_from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.header.contains("layers")) {
        raise(ErrorKind::TensorShapeCorrupt, "checkpoint header has no layer spec");
    }
    ModelParams model;
    model.layers = layers_from_json(ckpt.header["layers"]);
    model.rng_seed = ckpt.meta("rng_seed").get<std::uint64_t>();
    model.tensors = ckpt.tensors;

    // cross-check parameter tensors against the declared layers
    const ModelParams reference = init_model(model.layers, 0);
    if (reference.tensors.size() != model.tensors.size()) {
        raise(ErrorKind::TensorShapeCorrupt, "checkpoint holds " +
                                                 std::to_string(model.tensors.size()) +
                                                 " tensors, layer spec needs " +
                                                 std::to_string(reference.tensors.size()));
    }
    for (std::size_t i = 0; i < reference.tensors.size(); ++i) {
        if (reference.tensors[i].first != model.tensors[i].first ||
            !reference.tensors[i].second.same_shape(model.tensors[i].second)) {
            raise(ErrorKind::TensorShapeCorrupt, "tensor " + model.tensors[i].first +
                                                     " does not match the layer spec");
        }
    }
    return model;
}

void save_model(const ModelParams& model, const std::string& path) {
    save_ntf(checkpoint_from_model(model), path);
}

ModelParams load_model(const std::string& path) {
    return model_from_checkpoint(load_ntf(path));
}

} // namespace fdnz
