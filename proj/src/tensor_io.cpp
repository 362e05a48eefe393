#include "steamcast/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace steamcast {

namespace {

constexpr char kMagic[4] = {'F', 'G', 'T', '1'};
constexpr long kMaxElements = 1L << 40;

void put_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    os.put(static_cast<char>(2));  // float64
    os.put(static_cast<char>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32le(os, static_cast<std::uint32_t>(t.dim(i)));
    static_assert(sizeof(real) == 8, "payload layout assumes 64-bit real");
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(real)));
    if (!os) throw ConfigError("short write: " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open for reading: " + path.string());

    unsigned char header[6];
    is.read(reinterpret_cast<char*>(header), 6);
    if (is.gcount() < 4 || std::memcmp(header, kMagic, 4) != 0)
        throw FormatError(path.string() + ": bad magic", 0);
    if (is.gcount() < 5) throw FormatError(path.string() + ": truncated before dtype", 4);
    const int dtype = header[4];
    if (dtype != 1 && dtype != 2)
        throw FormatError(path.string() + ": unknown dtype code " + std::to_string(dtype), 4);
    if (is.gcount() < 6) throw FormatError(path.string() + ": truncated before rank", 5);
    const int rank = header[5];
    if (rank > 8) throw FormatError(path.string() + ": rank " + std::to_string(rank) + " > 8", 5);

    std::vector<int> shape(static_cast<std::size_t>(rank));
    long numel = 1;
    long offset = 6;
    for (int i = 0; i < rank; ++i) {
        unsigned char eb[4];
        is.read(reinterpret_cast<char*>(eb), 4);
        if (is.gcount() != 4)
            throw FormatError(path.string() + ": truncated extent " + std::to_string(i), offset);
        std::uint32_t e = get_u32le(eb);
        shape[static_cast<std::size_t>(i)] = static_cast<int>(e);
        numel *= static_cast<long>(e);
        if (numel > kMaxElements)
            throw FormatError(path.string() + ": extent overflow", offset);
        offset += 4;
    }

    Tensor t(shape);
    if (dtype == 2) {
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(real)));
        if (is.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(real)))
            throw FormatError(path.string() + ": truncated payload", offset + is.gcount());
    } else {
        std::vector<float> buf(t.data.size());
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (is.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
            throw FormatError(path.string() + ": truncated payload", offset + is.gcount());
        for (std::size_t i = 0; i < buf.size(); ++i) t.data[i] = static_cast<real>(buf[i]);
    }
    return t;
}

}  // namespace steamcast
