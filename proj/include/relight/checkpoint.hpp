#pragma once

// DLKT checkpoint container: magic "DLKT", version u32 LE, entry count u32 LE;
// per entry: name length u16 LE, UTF-8 name, rank u8, dims (u32 LE each),
// raw f32 LE payload. Shared by the pipeline and the fixer.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "relight/autodiff.hpp"
#include "relight/errors.hpp"
#include "relight/tensor.hpp"

namespace relight {

namespace ckpt_detail {

template <typename T>
void write_le(std::ostream& f, T value) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(value) >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& f) {
    unsigned char buf[sizeof(T)];
    f.read(reinterpret_cast<char*>(buf), sizeof(T));
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

} // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const ad::ParamStore& ps) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_checkpoint: cannot open " + path);
    f.write("DLKT", 4);
    ckpt_detail::write_le<uint32_t>(f, 1u);
    ckpt_detail::write_le<uint32_t>(f, static_cast<uint32_t>(ps.entries().size()));
    for (const auto& [name, p] : ps.entries()) {
        if (name.size() > 0xffff) throw ParameterError("save_checkpoint: name too long");
        ckpt_detail::write_le<uint16_t>(f, static_cast<uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        f.put(static_cast<char>(p.value.shape.size()));
        for (int d : p.value.shape) ckpt_detail::write_le<uint32_t>(f, static_cast<uint32_t>(d));
        for (double x : p.value.v) {
            float fx = static_cast<float>(x);
            uint32_t bits;
            std::memcpy(&bits, &fx, 4);
            ckpt_detail::write_le<uint32_t>(f, bits);
        }
    }
    if (!f) throw IoError("save_checkpoint: write failed for " + path);
}

// Loads into a fresh store. Entry shapes come from the file.
inline ad::ParamStore load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_checkpoint: missing checkpoint " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "DLKT")
        throw IoError("load_checkpoint: bad magic in " + path);
    uint32_t version = ckpt_detail::read_le<uint32_t>(f);
    if (version != 1) throw IoError("load_checkpoint: unsupported version");
    uint32_t count = ckpt_detail::read_le<uint32_t>(f);
    ad::ParamStore ps;
    for (uint32_t e = 0; e < count; ++e) {
        uint16_t name_len = ckpt_detail::read_le<uint16_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        int rank = f.get();
        std::vector<int> shape;
        for (int i = 0; i < rank; ++i)
            shape.push_back(static_cast<int>(ckpt_detail::read_le<uint32_t>(f)));
        Tensor t(shape);
        for (auto& x : t.v) {
            uint32_t bits = ckpt_detail::read_le<uint32_t>(f);
            float fx;
            std::memcpy(&fx, &bits, 4);
            x = static_cast<double>(fx);
        }
        if (!f) throw IoError("load_checkpoint: truncated file " + path);
        ps.add(name, std::move(t));
    }
    return ps;
}

} // namespace relight
