#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gacvid/errors.hpp"
#include "gacvid/tensor.hpp"
#include "gacvid/types.hpp"

namespace gacvid {

using json = nlohmann::json;

// --- Pose JSON: {"points": [[x,y,v] x21], "h": H, "w": W} -------------------

inline json pose_to_json(const Pose& pose) {
    json points = json::array();
    for (const PosePoint& p : pose.points)
        points.push_back({p.x, p.y, p.visible ? 1 : 0});
    return json{{"points", points}, {"h", pose.height}, {"w", pose.width}};
}

inline Pose pose_from_json(const json& j) {
    if (!j.contains("points") || !j.contains("h") || !j.contains("w"))
        throw FormatError("pose JSON missing fields");
    const json& points = j.at("points");
    if (!points.is_array() || points.size() != kNumPosePoints)
        throw FormatError("pose JSON count!=21");
    Pose pose;
    pose.height = j.at("h").get<int>();
    pose.width = j.at("w").get<int>();
    for (int i = 0; i < kNumPosePoints; ++i) {
        const json& e = points[i];
        if (!e.is_array() || e.size() != 3)
            throw FormatError("pose point must be [x,y,v]");
        pose.points[i].x = e[0].get<double>();
        pose.points[i].y = e[1].get<double>();
        pose.points[i].visible = e[2].get<int>() != 0;
    }
    return pose;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
    if (!os) throw IoError("short write: " + path);
}

inline json read_json_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    json j = json::parse(is, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw FormatError("invalid JSON: " + path);
    return j;
}

// Rejects config keys the schema does not know; catches typos in lambda names
// and the like.
inline void require_known_keys(const json& j, const std::vector<std::string>& known,
                               const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const std::string& k : known)
            if (k == key) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
    }
}

// --- Binary tensor container --------------------------------------------------
//
// Versioned container mapping names to float tensors:
//   magic "GVTC", u32 version, u32 count,
//   per entry: u16 name length, name bytes, u8 rank, u32 dims..., f32 payload.
// Little-endian throughout.

inline constexpr std::uint32_t kTensorContainerVersion = 1;

template <typename T>
void write_tensor_container(const std::string& path,
                            const std::map<std::string, Tensor<T>>& tensors) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open " + path + " for writing");
    bool ok = std::fwrite("GVTC", 1, 4, fp) == 4;
    const std::uint32_t version = kTensorContainerVersion;
    const std::uint32_t count = static_cast<std::uint32_t>(tensors.size());
    ok = ok && std::fwrite(&version, 4, 1, fp) == 1 &&
         std::fwrite(&count, 4, 1, fp) == 1;
    std::vector<float> buf(65536);
    for (const auto& [name, tensor] : tensors) {
        const std::uint16_t len = static_cast<std::uint16_t>(name.size());
        ok = ok && std::fwrite(&len, 2, 1, fp) == 1 &&
             std::fwrite(name.data(), 1, len, fp) == len;
        const std::uint8_t rank = static_cast<std::uint8_t>(tensor.rank());
        ok = ok && std::fwrite(&rank, 1, 1, fp) == 1;
        for (int d = 0; d < tensor.rank(); ++d) {
            const std::uint32_t dim = static_cast<std::uint32_t>(tensor.dim(d));
            ok = ok && std::fwrite(&dim, 4, 1, fp) == 1;
        }
        for (std::size_t i = 0; i < tensor.size() && ok; i += buf.size()) {
            const std::size_t n = std::min(buf.size(), tensor.size() - i);
            for (std::size_t k = 0; k < n; ++k)
                buf[k] = static_cast<float>(tensor[i + k]);
            ok = std::fwrite(buf.data(), sizeof(float), n, fp) == n;
        }
    }
    std::fclose(fp);
    if (!ok) throw IoError("short write: " + path);
}

template <typename T>
std::map<std::string, Tensor<T>> read_tensor_container(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path);
    auto fail = [&](const std::string& msg) -> FormatError {
        std::fclose(fp);
        return FormatError(msg + ": " + path);
    };
    char magic[4];
    std::uint32_t version = 0, count = 0;
    if (std::fread(magic, 1, 4, fp) != 4 || std::memcmp(magic, "GVTC", 4) != 0)
        throw fail("bad container magic");
    if (std::fread(&version, 4, 1, fp) != 1 || version != kTensorContainerVersion)
        throw fail("unsupported container version");
    if (std::fread(&count, 4, 1, fp) != 1) throw fail("truncated container");
    std::map<std::string, Tensor<T>> tensors;
    std::vector<float> buf(65536);
    for (std::uint32_t e = 0; e < count; ++e) {
        std::uint16_t len = 0;
        if (std::fread(&len, 2, 1, fp) != 1) throw fail("truncated entry header");
        std::string name(len, '\0');
        if (std::fread(name.data(), 1, len, fp) != len) throw fail("truncated name");
        std::uint8_t rank = 0;
        if (std::fread(&rank, 1, 1, fp) != 1 || rank > 4) throw fail("bad rank");
        std::vector<int> shape(rank);
        for (int d = 0; d < rank; ++d) {
            std::uint32_t dim = 0;
            if (std::fread(&dim, 4, 1, fp) != 1) throw fail("truncated dims");
            shape[d] = static_cast<int>(dim);
        }
        Tensor<T> tensor(shape);
        for (std::size_t i = 0; i < tensor.size(); i += buf.size()) {
            const std::size_t n = std::min(buf.size(), tensor.size() - i);
            if (std::fread(buf.data(), sizeof(float), n, fp) != n)
                throw fail("truncated payload");
            for (std::size_t k = 0; k < n; ++k)
                tensor[i + k] = static_cast<T>(buf[k]);
        }
        tensors.emplace(std::move(name), std::move(tensor));
    }
    std::fclose(fp);
    return tensors;
}

}  // namespace gacvid
