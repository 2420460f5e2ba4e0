#include "x0t/archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "x0t/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "X0TA writer assumes a little-endian host");

namespace x0t {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'X', '0', 'T', 'A'};
}

size_t ArchivedArray::element_count() const {
    size_t n = 1;
    for (int d : shape) {
        n *= static_cast<size_t>(d);
    }
    return shape.empty() ? 0 : n;
}

void write_archive(const ArchivedArray& array, const std::string& path) {
    if (array.element_count() != array.values.size()) {
        throw ShapeError("write_archive: shape does not match value count");
    }
    json header = {
        {"shape", array.shape},
        {"dtype", "f32"},
        {"role", array.role},
        {"timestep", array.timestep},
    };
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write archive: " + path);
    }
    out.write(kMagic, 4);
    const uint16_t version = kArchiveVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint32_t header_len = static_cast<uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), header_len);
    out.write(reinterpret_cast<const char*>(array.values.data()),
              static_cast<std::streamsize>(array.values.size() * sizeof(float)));
    if (!out) {
        throw IoError("short write: " + path);
    }
}

ArchivedArray read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open archive: " + path);
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("bad magic in archive: " + path);
    }
    uint16_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kArchiveVersion) {
        throw IoError("unsupported archive version in " + path);
    }
    uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || header_len > (1u << 20)) {
        throw IoError("bad header length in " + path);
    }
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    if (!in) {
        throw IoError("truncated header in " + path);
    }

    ArchivedArray array;
    try {
        const json header = json::parse(header_str);
        if (header.at("dtype").get<std::string>() != "f32") {
            throw IoError("unsupported dtype in " + path);
        }
        array.shape = header.at("shape").get<std::vector<int>>();
        array.role = header.value("role", "");
        array.timestep = header.value("timestep", -1);
    } catch (const json::exception& e) {
        throw IoError("bad archive header in " + path + ": " + e.what());
    }

    array.values.resize(array.element_count());
    in.read(reinterpret_cast<char*>(array.values.data()),
            static_cast<std::streamsize>(array.values.size() * sizeof(float)));
    if (!in) {
        throw IoError("truncated payload in " + path);
    }
    return array;
}

}  // namespace x0t
