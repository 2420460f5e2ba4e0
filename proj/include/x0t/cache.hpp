#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "x0t/image.hpp"
#include "x0t/trajectory.hpp"

namespace x0t {

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string content_hash(const ImageRgb& image);

// Content-addressed trajectory store: one directory per key holding the
// per-step arrays as X0TA archives plus a metadata JSON with config and
// residuals. Concurrent readers are fine; writes go through a temp directory
// and a rename, so one writer per key wins and the rest discard.
class TrajectoryCache {
public:
    explicit TrajectoryCache(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    // SHA-256 of the canonical descriptor string.
    static std::string key_of(const std::string& descriptor);

    // Miss on absence or on any corruption (with a warning), never a throw.
    std::optional<LatentTrajectory> get(const std::string& key) const;

    void put(const std::string& key, const LatentTrajectory& traj,
             const std::string& descriptor) const;

    bool contains(const std::string& key) const;
    std::vector<std::string> list() const;
    void clear() const;

private:
    std::filesystem::path root_;
};

}  // namespace x0t
