#pragma once

#include <string>
#include <vector>

namespace x0t {

// One float32 array in the X0TA container: magic "X0TA", u16 version,
// u32 length-prefixed JSON header {shape, dtype:"f32", role, timestep},
// then raw little-endian floats, row-major. All integers little-endian.
struct ArchivedArray {
    std::vector<int> shape;
    std::string role;
    int timestep = -1;
    std::vector<float> values;

    size_t element_count() const;
};

inline constexpr uint16_t kArchiveVersion = 1;

void write_archive(const ArchivedArray& array, const std::string& path);
ArchivedArray read_archive(const std::string& path);

}  // namespace x0t
