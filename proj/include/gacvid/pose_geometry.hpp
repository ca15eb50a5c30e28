#pragma once

#include <cmath>
#include <vector>

#include "gacvid/errors.hpp"
#include "gacvid/tensor.hpp"
#include "gacvid/types.hpp"

namespace gacvid {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

// Similarity transform of one body part: scale about the target part's point
// centroid, then translate. After applying, the target part centroid lands on
// the source part centroid and vector lengths match the source.
struct PartTransform {
    double scale = 1.0;
    Vec2 translation;  // mean point difference, computed after scaling
    Vec2 center;       // pre-transform target part centroid

    Vec2 apply(const Vec2& p) const {
        return (p - center) * scale + center + translation;
    }
    // Output pixel -> source pixel for inverse-mapped resampling.
    Vec2 invert(const Vec2& p) const {
        return (p - center - translation) * (1.0 / scale) + center;
    }
};

// Pose vectors of one part in table order: vector i = point(to_i) - point(from_i).
inline std::vector<Vec2> part_vectors(const Pose& pose, const BodyPart& part) {
    std::vector<Vec2> vectors;
    vectors.reserve(part.vector_table.size());
    for (const auto& [from, to] : part.vector_table) {
        const PosePoint& a = pose.points[from];
        const PosePoint& b = pose.points[to];
        if (!a.visible)
            throw MissingPoint("P" + std::to_string(from) + " invisible");
        if (!b.visible)
            throw MissingPoint("P" + std::to_string(to) + " invisible");
        vectors.push_back({b.x - a.x, b.y - a.y});
    }
    return vectors;
}

// Average cosine similarity between corresponding part pose vectors.
// Zero-length pairs contribute 0 to the average.
inline double part_pose_similarity(const Pose& src, const Pose& tgt,
                                   const BodyPart& part) {
    const std::vector<Vec2> vs = part_vectors(src, part);
    const std::vector<Vec2> vt = part_vectors(tgt, part);
    double sum = 0.0;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        const double denom = vs[i].norm() * vt[i].norm();
        if (denom > 0.0) sum += vs[i].dot(vt[i]) / denom;
    }
    return sum / static_cast<double>(vs.size());
}

inline Vec2 part_centroid(const Pose& pose, const BodyPart& part) {
    Vec2 c;
    for (int idx : part.point_set) {
        const PosePoint& p = pose.points[idx];
        if (!p.visible) throw MissingPoint("P" + std::to_string(idx) + " invisible");
        c.x += p.x;
        c.y += p.y;
    }
    const double n = static_cast<double>(part.point_set.size());
    return {c.x / n, c.y / n};
}

// Scale = sum of source vector lengths over sum of target vector lengths;
// translation = mean point difference. The translation is evaluated after
// scaling about the target centroid, which leaves it equal to the plain
// centroid difference.
inline PartTransform part_scale_translation(const Pose& src, const Pose& tgt,
                                            const BodyPart& part) {
    const std::vector<Vec2> vs = part_vectors(src, part);
    const std::vector<Vec2> vt = part_vectors(tgt, part);
    double src_len = 0.0, tgt_len = 0.0;
    for (const Vec2& v : vs) src_len += v.norm();
    for (const Vec2& v : vt) tgt_len += v.norm();
    if (tgt_len <= 0.0)
        throw DegeneratePart("target part vectors have zero total length");
    PartTransform tf;
    tf.scale = src_len / tgt_len;
    tf.center = part_centroid(tgt, part);
    const Vec2 src_centroid = part_centroid(src, part);
    tf.translation = src_centroid - tf.center;
    return tf;
}

// Transforms visible points; invisible points pass through unchanged.
inline std::vector<PosePoint> apply_transform_points(
    const std::vector<PosePoint>& points, const PartTransform& tf) {
    std::vector<PosePoint> out = points;
    for (PosePoint& p : out) {
        if (!p.visible) continue;
        const Vec2 q = tf.apply({p.x, p.y});
        p.x = q.x;
        p.y = q.y;
    }
    return out;
}

inline Pose apply_transform_pose(const Pose& pose, const PartTransform& tf) {
    Pose out = pose;
    for (PosePoint& p : out.points) {
        if (!p.visible) continue;
        const Vec2 q = tf.apply({p.x, p.y});
        p.x = q.x;
        p.y = q.y;
    }
    return out;
}

enum class Resample { Nearest, Bilinear };

// Inverse-mapped resampling of a (C,H,W) raster. Pixels mapped from outside
// the source extent become zero. Nearest for label channels, bilinear for
// color.
template <typename T>
Tensor<T> apply_transform_raster(const Tensor<T>& raster, const PartTransform& tf,
                                 Resample mode) {
    const int c = raster.dim(0), h = raster.dim(1), w = raster.dim(2);
    Tensor<T> out({c, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec2 s = tf.invert({static_cast<double>(x), static_cast<double>(y)});
            if (mode == Resample::Nearest) {
                const int sx = static_cast<int>(std::lround(s.x));
                const int sy = static_cast<int>(std::lround(s.y));
                if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;
                for (int ch = 0; ch < c; ++ch) out(ch, y, x) = raster(ch, sy, sx);
            } else {
                const int x0 = static_cast<int>(std::floor(s.x));
                const int y0 = static_cast<int>(std::floor(s.y));
                if (s.x < 0.0 || s.y < 0.0 || x0 >= w || y0 >= h) continue;
                const double fx = s.x - x0, fy = s.y - y0;
                const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
                const int cx0 = std::max(x0, 0), cy0 = std::max(y0, 0);
                for (int ch = 0; ch < c; ++ch) {
                    const double v00 = raster(ch, cy0, cx0);
                    const double v01 = raster(ch, cy0, x1);
                    const double v10 = raster(ch, y1, cx0);
                    const double v11 = raster(ch, y1, x1);
                    const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                     fy * ((1 - fx) * v10 + fx * v11);
                    out(ch, y, x) = static_cast<T>(v);
                }
            }
        }
    }
    return out;
}

inline SemanticLayout apply_transform_layout(const SemanticLayout& layout,
                                             const PartTransform& tf) {
    SemanticLayout out(layout.height, layout.width);
    for (int y = 0; y < layout.height; ++y)
        for (int x = 0; x < layout.width; ++x) {
            const Vec2 s = tf.invert({static_cast<double>(x), static_cast<double>(y)});
            const int sx = static_cast<int>(std::lround(s.x));
            const int sy = static_cast<int>(std::lround(s.y));
            if (sx < 0 || sx >= layout.width || sy < 0 || sy >= layout.height) continue;
            out.at(y, x) = layout.at(sy, sx);
        }
    return out;
}

}  // namespace gacvid
