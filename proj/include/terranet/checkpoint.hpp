#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "terranet/net.hpp"

namespace terranet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xffffffffu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

inline void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) buf.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xffu));
}

inline std::uint32_t read_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    std::memcpy(&v, p, 4);
    return v;
}

} // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json net_config_to_json(const NetConfig& config) {
    return nlohmann::json{{"point_branch_widths", config.point_branch_widths},
                          {"neighborhood_branch_widths", config.neighborhood_branch_widths},
                          {"head_widths", config.head_widths},
                          {"input_features", config.input_features}};
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
    NetConfig config;
    config.point_branch_widths = j.at("point_branch_widths").get<std::vector<int>>();
    config.neighborhood_branch_widths =
        j.at("neighborhood_branch_widths").get<std::vector<int>>();
    config.head_widths = j.at("head_widths").get<std::vector<int>>();
    config.input_features = j.at("input_features").get<int>();
    config.validate();
    return config;
}

/// Binary layout: magic "TNET", u32 format version, length-prefixed UTF-8
/// descriptor (config + training metadata as JSON), per-layer little-endian
/// float32 arrays in parameter-list order, trailing CRC-32 of everything
/// before it.
inline void save_checkpoint(const NetParams<float>& params, const nlohmann::json& metadata,
                            const std::filesystem::path& path) {
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), {'T', 'N', 'E', 'T'});
    detail::append_u32(buf, kCheckpointVersion);

    const std::string desc =
        nlohmann::json{{"config", net_config_to_json(params.config)}, {"metadata", metadata}}
            .dump();
    detail::append_u32(buf, static_cast<std::uint32_t>(desc.size()));
    buf.insert(buf.end(), desc.begin(), desc.end());

    for (const Tensor<float>* tensor : params.parameter_list()) {
        const std::size_t bytes = tensor->size() * sizeof(float);
        const std::size_t offset = buf.size();
        buf.resize(offset + bytes);
        std::memcpy(buf.data() + offset, tensor->data(), bytes);
    }
    detail::append_u32(buf, detail::crc32(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to checkpoint: " + path.string());
}

struct LoadedCheckpoint {
    NetParams<float> params;
    nlohmann::json metadata;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

    if (buf.size() < 16) throw ParseError("checkpoint truncated: " + path.string());
    const std::uint32_t stored_crc = detail::read_u32(buf.data() + buf.size() - 4);
    if (detail::crc32(buf.data(), buf.size() - 4) != stored_crc) {
        throw ParseError("checkpoint checksum mismatch: " + path.string());
    }
    if (std::memcmp(buf.data(), "TNET", 4) != 0) {
        throw ParseError("not a checkpoint file (bad magic): " + path.string());
    }
    const std::uint32_t version = detail::read_u32(buf.data() + 4);
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version) + " in " +
                         path.string());
    }
    const std::uint32_t desc_len = detail::read_u32(buf.data() + 8);
    if (12 + static_cast<std::size_t>(desc_len) + 4 > buf.size()) {
        throw ParseError("checkpoint descriptor overruns file: " + path.string());
    }
    nlohmann::json desc;
    try {
        desc = nlohmann::json::parse(buf.begin() + 12, buf.begin() + 12 + desc_len);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint descriptor is not valid JSON: " + std::string(e.what()));
    }

    LoadedCheckpoint loaded;
    try {
        loaded.params.config = net_config_from_json(desc.at("config"));
        loaded.metadata = desc.value("metadata", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint descriptor missing fields: " + std::string(e.what()));
    }

    const NetConfig& cfg = loaded.params.config;
    auto build = [](std::size_t fan_in, const std::vector<int>& widths,
                    std::vector<DenseLayerParams<float>>& layers) {
        for (int width : widths) {
            layers.push_back(DenseLayerParams<float>::zeros(fan_in, static_cast<std::size_t>(width)));
            fan_in = static_cast<std::size_t>(width);
        }
    };
    build(static_cast<std::size_t>(cfg.input_features), cfg.point_branch_widths,
          loaded.params.point_layers);
    build(static_cast<std::size_t>(cfg.input_features), cfg.neighborhood_branch_widths,
          loaded.params.nbr_layers);
    build(cfg.concat_width(), cfg.head_widths, loaded.params.head_layers);

    std::size_t offset = 12 + desc_len;
    const std::size_t payload_end = buf.size() - 4;
    for (Tensor<float>* tensor : loaded.params.parameter_list()) {
        const std::size_t bytes = tensor->size() * sizeof(float);
        if (offset + bytes > payload_end) {
            throw ParseError("checkpoint parameter payload truncated: " + path.string());
        }
        std::memcpy(tensor->data(), buf.data() + offset, bytes);
        offset += bytes;
    }
    if (offset != payload_end) {
        throw ParseError("checkpoint has trailing bytes beyond declared layers: " + path.string());
    }
    return loaded;
}

} // namespace terranet
