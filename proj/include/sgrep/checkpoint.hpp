// Checkpoint container: magic "SGREPCKPT1", a little-endian uint64 header
// length, a JSON header (model config + array manifest + caller metadata),
// then raw little-endian float32 arrays in manifest order. Extra arrays
// (regularizer state and the like) ride behind the model parameters.
#pragma once

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "sgrep/model.hpp"

namespace sgrep {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

inline constexpr char kCheckpointMagic[] = "SGREPCKPT1";
inline constexpr size_t kCheckpointMagicLen = 10;
inline constexpr int kCheckpointFormat = 1;

template <typename T>
struct Checkpoint {
    TransformerParams<T> params;
    std::vector<std::pair<std::string, Tensor<T>>> extras;
    nlohmann::json meta;
};

namespace detail {

inline void write_exact(std::ofstream& out, const void* p, size_t n, const std::string& path) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed: " + path);
}

inline void read_exact(std::ifstream& in, void* p, size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw IoError("truncated checkpoint: " + path);
}

template <typename T>
void write_f32(std::ofstream& out, const Tensor<T>& t, const std::string& path) {
    std::vector<float> buf(t.data.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.data[i]);
    write_exact(out, buf.data(), buf.size() * sizeof(float), path);
}

template <typename T>
Tensor<T> read_f32(std::ifstream& in, Shape shape, const std::string& path) {
    Tensor<T> t(std::move(shape));
    std::vector<float> buf(t.data.size());
    read_exact(in, buf.data(), buf.size() * sizeof(float), path);
    for (size_t i = 0; i < buf.size(); ++i) t.data[i] = static_cast<T>(buf[i]);
    return t;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const TransformerParams<T>& params,
                     const nlohmann::json& meta = nlohmann::json::object(),
                     const std::vector<std::pair<std::string, Tensor<T>>>& extras = {}) {
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, v] : params.params)
        manifest.push_back({{"name", name}, {"shape", v.shape()}});
    nlohmann::json extra_manifest = nlohmann::json::array();
    for (const auto& [name, t] : extras)
        extra_manifest.push_back({{"name", name}, {"shape", t.shape}});
    nlohmann::json header = {{"format", kCheckpointFormat},
                             {"model", params.cfg},
                             {"manifest", manifest},
                             {"extra_manifest", extra_manifest},
                             {"meta", meta}};
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path);
    detail::write_exact(out, kCheckpointMagic, kCheckpointMagicLen, path);
    uint64_t hlen = hs.size();
    detail::write_exact(out, &hlen, sizeof(hlen), path);
    detail::write_exact(out, hs.data(), hs.size(), path);
    for (const auto& [name, v] : params.params) detail::write_f32(out, v.value(), path);
    for (const auto& [name, t] : extras) detail::write_f32(out, t, path);
    out.close();
    if (!out) throw IoError("write failed: " + path);
}

inline bool is_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char magic[kCheckpointMagicLen];
    in.read(magic, kCheckpointMagicLen);
    return in.gcount() == static_cast<std::streamsize>(kCheckpointMagicLen) &&
           std::memcmp(magic, kCheckpointMagic, kCheckpointMagicLen) == 0;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[kCheckpointMagicLen];
    detail::read_exact(in, magic, kCheckpointMagicLen, path);
    if (std::memcmp(magic, kCheckpointMagic, kCheckpointMagicLen) != 0)
        throw IoError("bad checkpoint magic: " + path);
    uint64_t hlen = 0;
    detail::read_exact(in, &hlen, sizeof(hlen), path);
    std::string hs(hlen, '\0');
    detail::read_exact(in, hs.data(), hlen, path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad checkpoint header in " + path + ": " + e.what());
    }
    if (header.value("format", -1) != kCheckpointFormat)
        throw IoError("unsupported checkpoint format in " + path);

    Checkpoint<T> ck;
    ModelConfig cfg = header.at("model").get<ModelConfig>();
    ck.params = init_model<T>(cfg, 0);
    ck.meta = header.value("meta", nlohmann::json::object());

    const auto& manifest = header.at("manifest");
    if (manifest.size() != ck.params.params.size())
        throw IoError("checkpoint manifest does not match config in " + path);
    for (size_t i = 0; i < manifest.size(); ++i) {
        std::string name = manifest[i].at("name").get<std::string>();
        Shape shape = manifest[i].at("shape").get<Shape>();
        auto& [pname, v] = ck.params.params[i];
        if (pname != name || v.shape() != shape)
            throw IoError("checkpoint manifest entry '" + name + "' does not match config in " +
                          path);
        v.node()->value = detail::read_f32<T>(in, std::move(shape), path);
    }
    for (const auto& e : header.value("extra_manifest", nlohmann::json::array())) {
        std::string name = e.at("name").get<std::string>();
        Shape shape = e.at("shape").get<Shape>();
        ck.extras.emplace_back(name, detail::read_f32<T>(in, std::move(shape), path));
    }
    return ck;
}

}  // namespace sgrep
