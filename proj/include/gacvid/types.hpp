#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gacvid/errors.hpp"
#include "gacvid/tensor.hpp"

namespace gacvid {

inline constexpr int kNumPosePoints = 21;
inline constexpr int kNumClasses = 13;            // 12 foreground classes + background
inline constexpr int kNumForegroundClasses = 12;  // class ids 1..12

// Semantic class ids. Background is 0.
enum ClassId : std::uint8_t {
    kBackground = 0,
    kHair = 1,
    kFace = 2,
    kTops = 3,
    kTorsoSkin = 4,
    kLeftArm = 5,
    kRightArm = 6,
    kBottoms = 7,
    kLeftLeg = 8,
    kRightLeg = 9,
    kLeftShoe = 10,
    kRightShoe = 11,
    kSocks = 12,
};

inline const std::array<std::string, kNumClasses>& class_names() {
    static const std::array<std::string, kNumClasses> names = {
        "background", "hair",      "face",     "tops",      "torso-skin",
        "left-arm",   "right-arm", "bottoms",  "left-leg",  "right-leg",
        "left-shoe",  "right-shoe", "socks"};
    return names;
}

struct PosePoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = false;
};

// 21 named 2D keypoints with visibility. Invisible points are stored as
// (0,0,false); consumers must check the flag.
struct Pose {
    std::array<PosePoint, kNumPosePoints> points{};
    int height = 0;
    int width = 0;

    bool operator==(const Pose& o) const {
        if (height != o.height || width != o.width) return false;
        for (int i = 0; i < kNumPosePoints; ++i) {
            const auto& a = points[i];
            const auto& b = o.points[i];
            if (a.visible != b.visible || a.x != b.x || a.y != b.y) return false;
        }
        return true;
    }
};

enum class PartKind { Head = 0, Upper = 1, Lower = 2 };

inline const std::array<PartKind, 3>& all_parts() {
    static const std::array<PartKind, 3> parts = {PartKind::Head, PartKind::Upper,
                                                  PartKind::Lower};
    return parts;
}

inline const char* part_name(PartKind kind) {
    switch (kind) {
        case PartKind::Head: return "head";
        case PartKind::Upper: return "upper";
        default: return "lower";
    }
}

// Pose-vector and point tables of one body part.
struct BodyPart {
    PartKind kind;
    std::vector<std::pair<int, int>> vector_table;  // (from_index, to_index)
    std::vector<int> point_set;
};

inline const BodyPart& body_part(PartKind kind) {
    static const BodyPart head = {
        PartKind::Head,
        {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {0, 5}},
        {0, 1, 2, 3, 4, 5}};
    static const BodyPart upper = {
        PartKind::Upper,
        {{5, 6}, {6, 7}, {7, 8}, {5, 9}, {9, 10}, {10, 11}, {5, 12}},
        {5, 6, 7, 8, 9, 10, 11, 12}};
    static const BodyPart lower = {
        PartKind::Lower,
        {{12, 13}, {13, 14}, {14, 15}, {15, 16}, {12, 17}, {17, 18}, {18, 19}, {19, 20}},
        {12, 13, 14, 15, 16, 17, 18, 19, 20}};
    switch (kind) {
        case PartKind::Head: return head;
        case PartKind::Upper: return upper;
        default: return lower;
    }
}

// Foreground classes belonging to one part. The three groups partition 1..12.
inline const std::vector<int>& part_classes(PartKind kind) {
    static const std::vector<int> head = {kHair, kFace};
    static const std::vector<int> upper = {kTops, kTorsoSkin, kLeftArm, kRightArm};
    static const std::vector<int> lower = {kBottoms,  kLeftLeg,  kRightLeg,
                                           kLeftShoe, kRightShoe, kSocks};
    switch (kind) {
        case PartKind::Head: return head;
        case PartKind::Upper: return upper;
        default: return lower;
    }
}

inline PartKind class_part(int class_id) {
    if (class_id == kHair || class_id == kFace) return PartKind::Head;
    if (class_id >= kTops && class_id <= kRightArm) return PartKind::Upper;
    return PartKind::Lower;
}

// Channel offset of a part's class group inside the 12-channel layout tensor
// (channel k holds class k+1).
inline int part_channel_begin(PartKind kind) {
    switch (kind) {
        case PartKind::Head: return 0;
        case PartKind::Upper: return 2;
        default: return 6;
    }
}
inline int part_channel_count(PartKind kind) {
    return static_cast<int>(part_classes(kind).size());
}

// Per-pixel class map, values 0..12.
struct SemanticLayout {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> classes;

    SemanticLayout() = default;
    SemanticLayout(int h, int w) : height(h), width(w), classes(std::size_t(h) * w, 0) {}

    std::uint8_t& at(int y, int x) { return classes[std::size_t(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return classes[std::size_t(y) * width + x]; }

    bool operator==(const SemanticLayout& o) const {
        return height == o.height && width == o.width && classes == o.classes;
    }
};

// One frame of data: image in [0,1], pose and layout. The toy renderer also
// provides these as exact ground truth.
struct FrameRecord {
    int frame_id = 0;
    Tensor<float> image;  // (3,H,W)
    Pose pose;
    SemanticLayout layout;
};

// H x W x 12 one-hot layout channels grouped by part. Channels from different
// parts may overlap since parts can come from different frames.
template <typename T>
Tensor<T> part_layout_tensor(const SemanticLayout& head, const SemanticLayout& upper,
                             const SemanticLayout& lower) {
    const SemanticLayout* part_layouts[3] = {&head, &upper, &lower};
    const int h = head.height, w = head.width;
    for (const auto* l : part_layouts)
        if (l->height != h || l->width != w)
            throw ShapeMismatch("part layouts disagree on frame size");
    Tensor<T> out({kNumForegroundClasses, h, w});
    for (PartKind kind : all_parts()) {
        const SemanticLayout& lay = *part_layouts[static_cast<int>(kind)];
        for (int cls : part_classes(kind)) {
            const int ch = cls - 1;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (lay.at(y, x) == cls) out(ch, y, x) = T(1);
        }
    }
    return out;
}

// Zeroes every pixel of a part's RGB group where that part's layout channels
// are all zero. Enforces the foreground/layout channel discipline.
template <typename T>
void mask_foreground_by_layout(Tensor<T>& foreground, const Tensor<T>& layout) {
    const int h = foreground.dim(1), w = foreground.dim(2);
    if (foreground.dim(0) != 9 || layout.dim(0) != kNumForegroundClasses ||
        layout.dim(1) != h || layout.dim(2) != w)
        throw ShapeMismatch("foreground/layout tensor shapes");
    for (PartKind kind : all_parts()) {
        const int p = static_cast<int>(kind);
        const int cb = part_channel_begin(kind), cc = part_channel_count(kind);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                bool covered = false;
                for (int c = cb; c < cb + cc && !covered; ++c)
                    covered = layout(c, y, x) != T(0);
                if (!covered)
                    for (int c = 0; c < 3; ++c) foreground(3 * p + c, y, x) = T(0);
            }
    }
}

// Per-part condition after selection and normalization.
struct PartCondition {
    Pose pose;                  // part fragment, non-part points invisible
    Tensor<float> layout;       // (group channels, H, W) binary
    Tensor<float> foreground;   // (3, H, W) masked RGB
    int source_frame = -1;
    std::string source_tag;
};

// The assembled X_T bundle: composite pose plus 12-channel layout and
// 9-channel foreground tensors.
struct AppearanceCondition {
    Pose composite_pose;                    // X_TP
    Tensor<float> layout;                   // X_TLO (12,H,W)
    Tensor<float> foreground;               // X_TFG (9,H,W)
    std::array<int, 3> selected_frames = {-1, -1, -1};
    std::array<std::string, 3> source_tags;
};

// Per-pixel brightness multiplier in (0,1).
using ShadowMap = Tensor<float>;

// Time-indexed stack of conditions and previously generated outputs for
// t-2..t. Missing history (t < 2) is all-zero tensors of the correct shape.
template <typename T>
struct FrameWindow {
    std::array<Tensor<T>, 3> source_pose;       // X_SP rasters, t-2..t
    std::array<Tensor<T>, 3> target_pose;       // X_TP rasters, t-2..t
    std::array<Tensor<T>, 3> target_layout;     // X_TLO, t-2..t
    std::array<Tensor<T>, 3> target_foreground; // X_TFG, t-2..t
    std::array<Tensor<T>, 2> prev_layout;       // generated, t-2..t-1
    std::array<Tensor<T>, 2> prev_foreground;   // generated, t-2..t-1
};

struct TrainingConfig {
    double learning_rate = 2e-4;
    int batch_size = 4;
    int epochs = 10;
    int steps = 0;  // when > 0, overrides epochs * steps_per_epoch
    double lambda_ac = 5.0;
    double lambda_ss = 10.0;
    double lambda_t = 10.0;
    double lambda_fm = 10.0;
    double lambda_vgg = 10.0;
    int frame_height = 128;
    int frame_width = 96;
    std::uint64_t seed = 0;
    std::vector<int> temporal_strides = {1, 2, 4};
    int base_filters = 32;
    int checkpoint_every = 0;  // 0 = final checkpoint only
    double pose_sigma = 3.0;

    void validate() const {
        if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        for (double l : {lambda_ac, lambda_ss, lambda_t, lambda_fm, lambda_vgg})
            if (l < 0) throw ConfigError("loss weights must be >= 0");
        if (temporal_strides.empty()) throw ConfigError("temporal_strides empty");
        for (int s : temporal_strides)
            if (s < 1) throw ConfigError("temporal strides must be >= 1");
    }
};

// Diagnostic invariant check; returns one message per violation.
inline std::vector<std::string> validate_pose(const Pose& pose) {
    std::vector<std::string> violations;
    if (pose.height <= 0 || pose.width <= 0)
        violations.push_back("frame_size not positive");
    bool saw_point = false;
    for (int i = 0; i < kNumPosePoints; ++i) {
        const PosePoint& p = pose.points[i];
        if (!p.visible) continue;
        saw_point = true;
        if (p.x < 0 || p.x >= pose.width || p.y < 0 || p.y >= pose.height)
            violations.push_back("P" + std::to_string(i) + " outside frame bounds");
    }
    (void)saw_point;
    return violations;
}

// Count mismatch can only be expressed for dynamically sized inputs (e.g.
// deserialized JSON); the fixed-size Pose is validated at parse time.
inline std::vector<std::string> validate_pose_list(std::size_t n_points) {
    if (n_points != kNumPosePoints) return {"count!=21"};
    return {};
}

}  // namespace gacvid
