#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gacvid/errors.hpp"
#include "gacvid/pose_geometry.hpp"
#include "gacvid/serialization.hpp"
#include "gacvid/tensor.hpp"
#include "gacvid/types.hpp"

namespace gacvid {

// One usable library frame for one body part.
struct LibraryEntry {
    int frame_id = 0;
    std::string source_tag;
    Pose pose;                 // full pose of the source frame
    Tensor<float> layout;      // part group channels (n,H,W), binary
    Tensor<float> foreground;  // (3,H,W), image masked by the part layout group
};

// Per-part appearance condition library. Any positive entry count is valid.
struct AppearanceLibrary {
    std::array<std::vector<LibraryEntry>, 3> parts;
    int height = 0;
    int width = 0;

    const std::vector<LibraryEntry>& entries(PartKind kind) const {
        return parts[static_cast<int>(kind)];
    }
};

inline bool part_fully_visible(const Pose& pose, const BodyPart& part) {
    for (int idx : part.point_set)
        if (!pose.points[idx].visible) return false;
    return true;
}

// Extracts the part's layout group channels and masked foreground.
inline LibraryEntry make_library_entry(const FrameRecord& frame, PartKind kind,
                                       const std::string& tag) {
    const int h = frame.layout.height, w = frame.layout.width;
    const std::vector<int>& classes = part_classes(kind);
    LibraryEntry entry;
    entry.frame_id = frame.frame_id;
    entry.source_tag = tag;
    entry.pose = frame.pose;
    entry.layout = Tensor<float>({static_cast<int>(classes.size()), h, w});
    entry.foreground = Tensor<float>({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int cls = frame.layout.at(y, x);
            for (std::size_t k = 0; k < classes.size(); ++k)
                if (cls == classes[k]) {
                    entry.layout(static_cast<int>(k), y, x) = 1.f;
                    for (int c = 0; c < 3; ++c)
                        entry.foreground(c, y, x) = frame.image(c, y, x);
                }
        }
    return entry;
}

// Builds one part's library from frames carrying pose + layout. Frames with
// missing part joints are skipped with a warning on stderr.
inline std::vector<LibraryEntry> build_library(const std::vector<FrameRecord>& frames,
                                               PartKind kind,
                                               const std::string& tag = "") {
    std::vector<LibraryEntry> entries;
    const BodyPart& part = body_part(kind);
    for (const FrameRecord& frame : frames) {
        if (!part_fully_visible(frame.pose, part)) {
            std::fprintf(stderr,
                         "{\"event\":\"library_skip\",\"part\":\"%s\",\"frame\":%d}\n",
                         part_name(kind), frame.frame_id);
            continue;
        }
        entries.push_back(make_library_entry(frame, kind, tag));
    }
    if (entries.empty())
        throw EmptyLibrary(std::string("no usable frames for part ") + part_name(kind));
    return entries;
}

inline AppearanceLibrary build_appearance_library(const std::vector<FrameRecord>& frames,
                                                  const std::string& tag = "") {
    if (frames.empty()) throw EmptyLibrary("no frames supplied");
    AppearanceLibrary lib;
    lib.height = frames[0].layout.height;
    lib.width = frames[0].layout.width;
    for (PartKind kind : all_parts())
        lib.parts[static_cast<int>(kind)] = build_library(frames, kind, tag);
    return lib;
}

// Argmax of body-part pose similarity over the library; ties break to the
// lowest frame_id. Exhaustive scan is the contract at this scale.
inline int select_part_condition(const Pose& src,
                                 const std::vector<LibraryEntry>& entries,
                                 PartKind kind) {
    if (entries.empty()) throw EmptyLibrary("selection over empty library");
    const BodyPart& part = body_part(kind);
    int best = -1;
    double best_sim = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const double sim = part_pose_similarity(src, entries[i].pose, part);
        const bool better =
            best < 0 || sim > best_sim ||
            (sim == best_sim && entries[i].frame_id < entries[best].frame_id);
        if (better) {
            best = static_cast<int>(i);
            best_sim = sim;
        }
    }
    return best;
}

// Applies the part's similarity transform to the selected entry's pose,
// layout and foreground. The foreground is re-masked by the warped layout so
// bilinear bleed cannot escape the part support.
inline LibraryEntry normalize_selected(const Pose& src, const LibraryEntry& entry,
                                       PartKind kind) {
    const BodyPart& part = body_part(kind);
    const PartTransform tf = part_scale_translation(src, entry.pose, part);
    LibraryEntry out;
    out.frame_id = entry.frame_id;
    out.source_tag = entry.source_tag;
    out.pose = apply_transform_pose(entry.pose, tf);
    out.layout = apply_transform_raster(entry.layout, tf, Resample::Nearest);
    out.foreground = apply_transform_raster(entry.foreground, tf, Resample::Bilinear);
    const int h = out.layout.dim(1), w = out.layout.dim(2);
    const int groups = out.layout.dim(0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool covered = false;
            for (int c = 0; c < groups && !covered; ++c)
                covered = out.layout(c, y, x) != 0.f;
            if (!covered)
                for (int c = 0; c < 3; ++c) out.foreground(c, y, x) = 0.f;
        }
    return out;
}

// Connects the three normalized part fragments into the X_T bundle.
// Composite pose ownership: P0..P5 from head, P6..P12 from upper, P13..P20
// from lower (shared joints P5/P12 come from head/upper respectively).
inline AppearanceCondition assemble_condition(const Pose& src,
                                              const LibraryEntry& head,
                                              const LibraryEntry& upper,
                                              const LibraryEntry& lower) {
    const LibraryEntry* parts[3] = {&head, &upper, &lower};
    const int h = head.layout.dim(1), w = head.layout.dim(2);
    for (const auto* e : parts)
        if (e->layout.dim(1) != h || e->layout.dim(2) != w ||
            e->foreground.dim(1) != h || e->foreground.dim(2) != w)
            throw ShapeMismatch("part conditions disagree on frame size");

    AppearanceCondition cond;
    cond.composite_pose.height = src.height;
    cond.composite_pose.width = src.width;
    for (int i = 0; i <= 5; ++i) cond.composite_pose.points[i] = head.pose.points[i];
    for (int i = 6; i <= 12; ++i) cond.composite_pose.points[i] = upper.pose.points[i];
    for (int i = 13; i <= 20; ++i) cond.composite_pose.points[i] = lower.pose.points[i];

    cond.layout = Tensor<float>({kNumForegroundClasses, h, w});
    cond.foreground = Tensor<float>({9, h, w});
    for (PartKind kind : all_parts()) {
        const int p = static_cast<int>(kind);
        const LibraryEntry& e = *parts[p];
        const int cb = part_channel_begin(kind);
        const int cc = part_channel_count(kind);
        for (int c = 0; c < cc; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    cond.layout(cb + c, y, x) = e.layout(c, y, x);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    cond.foreground(3 * p + c, y, x) = e.foreground(c, y, x);
        cond.selected_frames[p] = e.frame_id;
        cond.source_tags[p] = e.source_tag;
    }
    return cond;
}

// Selection + normalization + assembly for one source pose.
inline AppearanceCondition select_condition(const Pose& src,
                                            const AppearanceLibrary& lib) {
    std::array<LibraryEntry, 3> normalized;
    for (PartKind kind : all_parts()) {
        const int p = static_cast<int>(kind);
        const auto& entries = lib.entries(kind);
        const int idx = select_part_condition(src, entries, kind);
        normalized[p] = normalize_selected(src, entries[idx], kind);
    }
    return assemble_condition(src, normalized[0], normalized[1], normalized[2]);
}

// Per-joint Gaussian heatmaps; invisible joints give all-zero channels.
template <typename T>
Tensor<T> rasterize_pose(const Pose& pose, double sigma) {
    if (sigma <= 0.0) throw ConfigError("rasterize_pose sigma must be > 0");
    Tensor<T> raster({kNumPosePoints, pose.height, pose.width});
    const double inv = 1.0 / (2.0 * sigma * sigma);
    // Gaussian support is truncated where exp() underflows the 1e-12 floor;
    // beyond ~7.5 sigma the stamp is exactly zero either way.
    const int radius = static_cast<int>(std::ceil(sigma * 7.5));
    for (int j = 0; j < kNumPosePoints; ++j) {
        const PosePoint& p = pose.points[j];
        if (!p.visible) continue;
        const int cx = static_cast<int>(std::lround(p.x));
        const int cy = static_cast<int>(std::lround(p.y));
        const int x0 = std::max(0, cx - radius), x1 = std::min(pose.width - 1, cx + radius);
        const int y0 = std::max(0, cy - radius), y1 = std::min(pose.height - 1, cy + radius);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - p.x, dy = y - p.y;
                const double v = std::exp(-(dx * dx + dy * dy) * inv);
                if (v > 1e-12) raster(j, y, x) = static_cast<T>(v);
            }
    }
    return raster;
}

// --- Condition cache ----------------------------------------------------------
//
// Directory of per-frame binary tensor files plus a JSON index mapping
// frame_id to file, part sources and selected indices.

struct ConditionCache {
    std::filesystem::path dir;

    static std::filesystem::path default_dir(const std::filesystem::path& dataset_root) {
        if (const char* env = std::getenv("GACVID_CACHE"))
            return std::filesystem::path(env);
        return dataset_root / "conditions";
    }
};

inline void write_condition_frame(const std::filesystem::path& dir, int frame_id,
                                  const AppearanceCondition& cond) {
    std::map<std::string, Tensor<float>> tensors;
    tensors["x_tlo"] = cond.layout;
    tensors["x_tfg"] = cond.foreground;
    char name[32];
    std::snprintf(name, sizeof(name), "cond_%04d.bin", frame_id);
    write_tensor_container(dir / name, tensors);
}

inline json condition_index_entry(int frame_id, const AppearanceCondition& cond) {
    char name[32];
    std::snprintf(name, sizeof(name), "cond_%04d.bin", frame_id);
    json sources = json::object();
    for (PartKind kind : all_parts()) {
        const int p = static_cast<int>(kind);
        sources[part_name(kind)] = {{"frame", cond.selected_frames[p]},
                                    {"tag", cond.source_tags[p]}};
    }
    return json{{"frame", frame_id},
                {"file", name},
                {"sources", sources},
                {"pose", pose_to_json(cond.composite_pose)}};
}

inline AppearanceCondition read_condition_frame(const std::filesystem::path& dir,
                                                const json& index_entry) {
    AppearanceCondition cond;
    auto tensors =
        read_tensor_container<float>(dir / index_entry.at("file").get<std::string>());
    cond.layout = std::move(tensors.at("x_tlo"));
    cond.foreground = std::move(tensors.at("x_tfg"));
    cond.composite_pose = pose_from_json(index_entry.at("pose"));
    const json& sources = index_entry.at("sources");
    for (PartKind kind : all_parts()) {
        const int p = static_cast<int>(kind);
        cond.selected_frames[p] = sources.at(part_name(kind)).at("frame").get<int>();
        cond.source_tags[p] = sources.at(part_name(kind)).at("tag").get<std::string>();
    }
    return cond;
}

}  // namespace gacvid
