#include "x0t/cache.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "x0t/archive.hpp"
#include "x0t/errors.hpp"
#include "x0t/log.hpp"

namespace x0t {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const void* data, size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data, len) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &digest_len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("sha256 failed");
    }
    EVP_MD_CTX_free(ctx);

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(digest_len * 2);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(const std::string& s) {
    return sha256_hex(s.data(), s.size());
}

std::string content_hash(const ImageRgb& image) {
    std::string bytes;
    bytes.reserve(16 + image.size() * sizeof(float));
    bytes.append(std::to_string(image.height)).append("x").append(std::to_string(image.width));
    bytes.append(reinterpret_cast<const char*>(image.data.data()),
                 image.size() * sizeof(float));
    return sha256_hex(bytes);
}

namespace {

std::string step_file(int i, const char* role) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "step_%03d_%s.x0ta", i, role);
    return buf;
}

ArchivedArray latent_to_archive(const Latent& l, const char* role) {
    ArchivedArray a;
    a.shape = {l.channels, l.height, l.width};
    a.role = role;
    a.timestep = l.step;
    a.values = l.data;
    return a;
}

Latent latent_from_archive(const ArchivedArray& a) {
    if (a.shape.size() != 3) {
        throw IoError("expected 3-D archive for role " + a.role);
    }
    Latent l(a.shape[0], a.shape[1], a.shape[2]);
    l.step = a.timestep;
    l.data = a.values;
    return l;
}

}  // namespace

TrajectoryCache::TrajectoryCache(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
}

std::string TrajectoryCache::key_of(const std::string& descriptor) {
    return sha256_hex(descriptor);
}

bool TrajectoryCache::contains(const std::string& key) const {
    return fs::exists(root_ / key / "metadata.json");
}

std::optional<LatentTrajectory> TrajectoryCache::get(const std::string& key) const {
    const fs::path dir = root_ / key;
    if (!fs::exists(dir / "metadata.json")) {
        return std::nullopt;
    }
    try {
        std::ifstream in(dir / "metadata.json");
        const json meta = json::parse(in);

        LatentTrajectory traj;
        traj.kind = meta.at("kind").get<std::string>() == "source" ? TrajectoryKind::Source
                                                                   : TrajectoryKind::Target;
        traj.prompt = meta.at("prompt").get<std::string>();
        traj.guidance_scale = meta.at("guidance_scale").get<float>();
        traj.residuals = meta.at("residuals").get<std::vector<float>>();
        const auto timesteps = meta.at("timesteps").get<std::vector<int>>();
        const bool has_uncond = meta.at("has_uncond").get<bool>();

        traj.entries.resize(timesteps.size());
        for (size_t i = 0; i < timesteps.size(); ++i) {
            TrajectoryEntry& e = traj.entries[i];
            const int idx = static_cast<int>(i);
            e.timestep = timesteps[i];
            e.latent = latent_from_archive(read_archive((dir / step_file(idx, "latent")).string()));
            e.eps = latent_from_archive(read_archive((dir / step_file(idx, "eps")).string()));
            e.predicted_x0 =
                latent_from_archive(read_archive((dir / step_file(idx, "x0")).string()));
            if (has_uncond) {
                const ArchivedArray a =
                    read_archive((dir / step_file(idx, "uncond")).string());
                if (a.shape.size() != 2) {
                    throw IoError("expected 2-D uncond archive");
                }
                TextEmbedding u(a.shape[0], a.shape[1], TextEmbedding::Kind::Unconditional);
                u.data = a.values;
                e.uncond = std::move(u);
            }
        }
        return traj;
    } catch (const std::exception& e) {
        log_warn("cache entry " + key + " unreadable (" + e.what() + "); treating as miss");
        return std::nullopt;
    }
}

void TrajectoryCache::put(const std::string& key, const LatentTrajectory& traj,
                          const std::string& descriptor) const {
    const fs::path dir = root_ / key;
    if (fs::exists(dir)) {
        return;  // content-addressed: an existing entry is the same payload
    }
    const fs::path tmp = root_ / (key + ".tmp_" + std::to_string(::getpid()));
    try {
        fs::create_directories(tmp);
        json meta = {
            {"version", 1},
            {"kind", traj.kind == TrajectoryKind::Source ? "source" : "target"},
            {"prompt", traj.prompt},
            {"guidance_scale", traj.guidance_scale},
            {"residuals", traj.residuals},
            {"has_uncond", traj.carries_uncond()},
            {"descriptor", descriptor},
        };
        std::vector<int> timesteps;
        for (const auto& e : traj.entries) {
            timesteps.push_back(e.timestep);
        }
        meta["timesteps"] = timesteps;

        for (size_t i = 0; i < traj.entries.size(); ++i) {
            const TrajectoryEntry& e = traj.entries[i];
            const int idx = static_cast<int>(i);
            write_archive(latent_to_archive(e.latent, "latent"),
                          (tmp / step_file(idx, "latent")).string());
            write_archive(latent_to_archive(e.eps, "eps"), (tmp / step_file(idx, "eps")).string());
            write_archive(latent_to_archive(e.predicted_x0, "x0"),
                          (tmp / step_file(idx, "x0")).string());
            if (e.uncond) {
                ArchivedArray a;
                a.shape = {e.uncond->tokens, e.uncond->dim};
                a.role = "uncond";
                a.timestep = e.timestep;
                a.values = e.uncond->data;
                write_archive(a, (tmp / step_file(idx, "uncond")).string());
            }
        }
        std::ofstream out(tmp / "metadata.json");
        out << meta.dump(2) << "\n";
        out.close();

        fs::rename(tmp, dir);
    } catch (const std::exception& e) {
        log_warn("cache put failed for " + key + ": " + e.what());
        std::error_code ec;
        fs::remove_all(tmp, ec);
    }
}

std::vector<std::string> TrajectoryCache::list() const {
    std::vector<std::string> keys;
    for (const auto& entry : fs::directory_iterator(root_)) {
        if (entry.is_directory() && fs::exists(entry.path() / "metadata.json")) {
            keys.push_back(entry.path().filename().string());
        }
    }
    std::sort(keys.begin(), keys.end());
    return keys;
}

void TrajectoryCache::clear() const {
    for (const auto& entry : fs::directory_iterator(root_)) {
        std::error_code ec;
        fs::remove_all(entry.path(), ec);
    }
}

}  // namespace x0t
