#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "nlaslr/error.hpp"
#include "nlaslr/tensor.hpp"

namespace nlaslr {

// Little-endian primitive I/O shared by the raw-tensor and checkpoint formats.
namespace io {

template <typename U>
void write_le(std::ostream& out, U value) {
    static_assert(std::is_arithmetic_v<U>);
    std::array<char, sizeof(U)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(U));
}

template <typename U>
U read_le(std::istream& in, const std::string& what) {
    static_assert(std::is_arithmetic_v<U>);
    std::array<char, sizeof(U)> bytes;
    if (!in.read(bytes.data(), sizeof(U))) throw Error(ErrorKind::Data, "truncated " + what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    U value;
    std::memcpy(&value, bytes.data(), sizeof(U));
    return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const std::string& what) {
    const auto n = read_le<std::uint32_t>(in, what);
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw Error(ErrorKind::Data, "truncated " + what);
    return s;
}

template <typename T>
void write_values(std::ostream& out, const Tensor<T>& t) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    } else {
        for (T v : t.values()) write_le<T>(out, v);
    }
}

template <typename T>
void read_values(std::istream& in, Tensor<T>& t, const std::string& what) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T))))
            throw Error(ErrorKind::Data, "truncated " + what);
    } else {
        for (auto& v : t.values()) v = read_le<T>(in, what);
    }
}

}  // namespace io

// Raw tensor file: "NLAT", u32 version (1), u32 rank, u64 extents[rank],
// then little-endian float32 values in row-major order.
inline constexpr char kRawTensorMagic[4] = {'N', 'L', 'A', 'T'};

inline void write_raw_tensor(std::ostream& out, const Tensor<float>& t) {
    out.write(kRawTensorMagic, 4);
    io::write_le<std::uint32_t>(out, 1);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) io::write_le<std::uint64_t>(out, d);
    io::write_values(out, t);
}

inline Tensor<float> read_raw_tensor(std::istream& in, const std::string& source = "<stream>") {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kRawTensorMagic, 4) != 0)
        throw Error(ErrorKind::Data, source + ": not a raw tensor file");
    if (io::read_le<std::uint32_t>(in, source) != 1) throw Error(ErrorKind::Data, source + ": unsupported version");
    const auto rank = io::read_le<std::uint32_t>(in, source);
    if (rank > 8) throw Error(ErrorKind::Data, source + ": implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = io::read_le<std::uint64_t>(in, source);
    Tensor<float> t(shape);
    io::read_values(in, t, source);
    return t;
}

inline void save_raw_tensor(const std::string& path, const Tensor<float>& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Data, "cannot write " + path);
    write_raw_tensor(out, t);
}

inline Tensor<float> load_raw_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Data, "cannot open " + path);
    return read_raw_tensor(in, path);
}

}  // namespace nlaslr
