#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

#include "kept/model.hpp"

namespace kept {

// Binary checkpoint layout (all integers little-endian):
//   magic   4 bytes  "KEPT"
//   version u32      (= 1)
//   meta_len u64
//   meta    UTF-8 JSON: config + provenance + seed
//   tensor_count u32
//   per tensor:
//     name_len u16, name bytes,
//     dtype u8 (0 = f32), rank u8, dims rank x u64,
//     payload row-major f32, little-endian
// load(save(store)) is bitwise-identical to store.

inline constexpr char kCheckpointMagic[4] = {'K', 'E', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    ModelConfig config;
    std::string provenance;
    std::uint64_t seed = 0;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["vocab_size"] = c.vocab_size;
    j["hidden_dim"] = c.hidden_dim;
    j["mlp_dim"] = c.mlp_dim;
    j["n_heads"] = c.n_heads;
    j["head_dim"] = c.head_dim;
    j["n_layers"] = c.n_layers;
    j["rope_base"] = c.rope_base;
    j["norm_kind"] = norm_kind_name(c.norm_kind);
    j["max_seq_len"] = c.max_seq_len;
    return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.mlp_dim = j.at("mlp_dim").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.head_dim = j.at("head_dim").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.rope_base = j.at("rope_base").get<double>();
    c.norm_kind = norm_kind_from_name(j.at("norm_kind").get<std::string>());
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    return c;
}

namespace detail {

inline void put_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
}
inline void put_u16(std::string& buf, std::uint16_t v) {
    char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    buf.append(b, 2);
}
inline void put_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    buf.append(b, 4);
}
inline void put_u64(std::string& buf, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    buf.append(b, 8);
}
inline void put_f32(std::string& buf, float v) { put_u32(buf, std::bit_cast<std::uint32_t>(v)); }

class ByteReader {
  public:
    ByteReader(const std::string& data, const std::string& what) : data_(data), what_(what) {}

    const char* take(std::size_t n) {
        if (pos_ + n > data_.size())
            throw std::runtime_error(what_ + ": truncated checkpoint");
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint16_t u16() {
        const auto* p = reinterpret_cast<const unsigned char*>(take(2));
        return std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
    }
    std::uint32_t u32() {
        const auto* p = reinterpret_cast<const unsigned char*>(take(4));
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const auto* p = reinterpret_cast<const unsigned char*>(take(8));
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    bool exhausted() const { return pos_ == data_.size(); }

  private:
    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_checkpoint(const ParameterStore<float>& store, const CheckpointMeta& meta,
                            const std::string& path) {
    nlohmann::json mj;
    mj["config"] = config_to_json(meta.config);
    mj["provenance"] = meta.provenance;
    mj["seed"] = meta.seed;
    const std::string meta_str = mj.dump();

    std::string buf;
    buf.reserve(64 + meta_str.size());
    detail::put_bytes(buf, kCheckpointMagic, 4);
    detail::put_u32(buf, kCheckpointVersion);
    detail::put_u64(buf, meta_str.size());
    detail::put_bytes(buf, meta_str.data(), meta_str.size());
    detail::put_u32(buf, static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, tensor] : store) {
        if (name.size() > 0xffff) throw std::invalid_argument("save_checkpoint: tensor name too long");
        detail::put_u16(buf, static_cast<std::uint16_t>(name.size()));
        detail::put_bytes(buf, name.data(), name.size());
        buf.push_back(char(0));  // dtype 0 = f32
        buf.push_back(char(tensor.rank()));
        for (std::size_t d : tensor.shape()) detail::put_u64(buf, d);
        for (std::size_t i = 0; i < tensor.numel(); ++i) detail::put_f32(buf, tensor[i]);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_checkpoint: write failure on " + path);
}

inline std::pair<ParameterStore<float>, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error("load_checkpoint: read failure on " + path);

    detail::ByteReader r(data, path);
    const char* magic = r.take(4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error(path + ": bad magic (not a KEPT checkpoint)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t meta_len = r.u64();
    const std::string meta_str(r.take(meta_len), meta_len);

    CheckpointMeta meta;
    nlohmann::json mj = nlohmann::json::parse(meta_str, nullptr, true);
    meta.config = config_from_json(mj.at("config"));
    meta.provenance = mj.value("provenance", "");
    meta.seed = mj.value("seed", std::uint64_t{0});

    ParameterStore<float> store;
    const std::uint32_t count = r.u32();
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = r.u16();
        const std::string name(r.take(name_len), name_len);
        const auto dtype = static_cast<unsigned char>(*r.take(1));
        if (dtype != 0)
            throw std::runtime_error(path + ": unsupported dtype code " + std::to_string(dtype));
        const auto rank = static_cast<unsigned char>(*r.take(1));
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(r.u64());
            numel *= d;
        }
        std::vector<float> values(numel);
        for (auto& v : values) v = r.f32();
        if (!store.emplace(name, Tensor<float>(std::move(shape), std::move(values))).second)
            throw std::runtime_error(path + ": duplicate tensor name " + name);
    }
    if (!r.exhausted()) throw std::runtime_error(path + ": trailing bytes after payload");
    return {std::move(store), std::move(meta)};
}

}  // namespace kept
