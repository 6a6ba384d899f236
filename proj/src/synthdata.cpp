#include "vton/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace vton {

Affine2 Affine2::rotation_about(double angle, double cx, double cy) {
    const double c = std::cos(angle), s = std::sin(angle);
    Affine2 r{c, -s, s, c, 0, 0};
    r.tx = cx - (r.a * cx + r.b * cy);
    r.ty = cy - (r.c * cx + r.d * cy);
    return r;
}

Affine2 Affine2::similarity(double scale, double angle, double cx, double cy, double dx, double dy) {
    Affine2 r = rotation_about(angle, cx, cy);
    r.a *= scale;
    r.b *= scale;
    r.c *= scale;
    r.d *= scale;
    r.tx = cx - (r.a * cx + r.b * cy) + dx;
    r.ty = cy - (r.c * cx + r.d * cy) + dy;
    return r;
}

Affine2 Affine2::inverse() const {
    const double det = a * d - b * c;
    Affine2 r{d / det, -b / det, -c / det, a / det, 0, 0};
    r.tx = -(r.a * tx + r.b * ty);
    r.ty = -(r.c * tx + r.d * ty);
    return r;
}

Affine2 Affine2::then_after(const Affine2& rhs) const {
    Affine2 r;
    r.a = a * rhs.a + b * rhs.c;
    r.b = a * rhs.b + b * rhs.d;
    r.c = c * rhs.a + d * rhs.c;
    r.d = c * rhs.b + d * rhs.d;
    r.tx = a * rhs.tx + b * rhs.ty + tx;
    r.ty = c * rhs.tx + d * rhs.ty + ty;
    return r;
}

namespace {

// Body layout in a 48 x 64 design frame; rendering scales it to the canvas.
constexpr double design_w = 48.0;
constexpr double design_h = 64.0;

struct Vec2 {
    double x, y;
};

constexpr Vec2 torso_center{24.0, 30.0};
constexpr Vec2 head_center{24.0, 8.0};
constexpr double head_rx = 5.0, head_ry = 6.0;
constexpr double torso_x0 = 16.0, torso_x1 = 32.0, torso_y0 = 15.0, torso_y1 = 36.0;
constexpr double neck_x0 = 22.0, neck_x1 = 26.0, neck_y0 = 12.5, neck_y1 = 16.0;
constexpr double pelvis_x0 = 16.5, pelvis_x1 = 31.5, pelvis_y0 = 35.0, pelvis_y1 = 41.0;

constexpr Vec2 left_shoulder{16.5, 17.0};
constexpr Vec2 right_shoulder{31.5, 17.0};
constexpr double upper_arm_len = 11.0, forearm_len = 10.0, arm_radius = 2.2;
constexpr double arm_rest_angle = 20.0 * 3.14159265358979323846 / 180.0;

constexpr Vec2 left_hip{20.5, 40.0};
constexpr Vec2 right_hip{27.5, 40.0};
constexpr double leg_len = 21.5, leg_radius = 3.0;
constexpr double leg_rest_angle = 3.0 * 3.14159265358979323846 / 180.0;

constexpr double sleeve_len = 5.0, sleeve_radius = 2.9;
constexpr double shirt_y1 = 33.0;
constexpr double waist_y0 = 34.5, waist_y1 = 41.5;
constexpr double tube_len = 10.0, tube_radius = 3.6;
constexpr double skirt_y1 = 50.0, skirt_flare = 2.5;

Vec2 limb_point(Vec2 origin, double angle, double len, bool left) {
    const double sx = left ? -1.0 : 1.0;
    return {origin.x + sx * std::sin(angle) * len, origin.y + std::cos(angle) * len};
}

Vec2 left_elbow_rest() { return limb_point(left_shoulder, arm_rest_angle, upper_arm_len, true); }
Vec2 right_elbow_rest() { return limb_point(right_shoulder, arm_rest_angle, upper_arm_len, false); }
Vec2 left_wrist_rest() { return limb_point(left_elbow_rest(), arm_rest_angle, forearm_len, true); }
Vec2 right_wrist_rest() { return limb_point(right_elbow_rest(), arm_rest_angle, forearm_len, false); }
Vec2 left_ankle_rest() { return limb_point(left_hip, leg_rest_angle, leg_len, true); }
Vec2 right_ankle_rest() { return limb_point(right_hip, leg_rest_angle, leg_len, false); }

// Distance-based capsule test; returns the axis parameter in [0, 1] when inside.
std::optional<std::pair<double, double>> capsule(Vec2 p, Vec2 a, Vec2 b, double r) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = a.x + t * vx - p.x, cy = a.y + t * vy - p.y;
    const double dist2 = cx * cx + cy * cy;
    if (dist2 > r * r) return std::nullopt;
    // signed offset across the axis, normalized to [-1, 1]
    const double cross = (vx * (p.y - a.y) - vy * (p.x - a.x)) / std::sqrt(len2);
    return std::make_pair(t, std::clamp(cross / r, -1.0, 1.0));
}

bool in_rect(Vec2 p, double x0, double x1, double y0, double y1) {
    return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
}

bool in_ellipse(Vec2 p, Vec2 c, double rx, double ry) {
    const double dx = (p.x - c.x) / rx, dy = (p.y - c.y) / ry;
    return dx * dx + dy * dy <= 1.0;
}

bool in_shape(EmblemShape shape, Vec2 p, double cx, double cy, double r) {
    const double dx = p.x - cx, dy = p.y - cy;
    switch (shape) {
    case EmblemShape::square: return std::abs(dx) <= r && std::abs(dy) <= r;
    case EmblemShape::disc: return dx * dx + dy * dy <= r * r;
    case EmblemShape::triangle: return dy <= r && dy >= -r && std::abs(dx) <= (dy + r) * 0.5;
    }
    return false;
}

// Per-limb affine maps (design frame) taking canonical points onto the posed body.
struct Pose {
    Affine2 torso, left_upper, right_upper, left_fore, right_fore, left_leg, right_leg;
};

Pose make_pose(const BodyParams& b) {
    Pose p;
    p.torso = Affine2::similarity(b.torso_scale, b.torso_angle, torso_center.x, torso_center.y,
                                  b.shift_x, b.shift_y);
    // outward rotation is counter-clockwise on screen for the left arm (y down)
    p.left_upper = p.torso.then_after(
        Affine2::rotation_about(b.left_shoulder, left_shoulder.x, left_shoulder.y));
    p.right_upper = p.torso.then_after(
        Affine2::rotation_about(-b.right_shoulder, right_shoulder.x, right_shoulder.y));
    const Vec2 le = left_elbow_rest(), re = right_elbow_rest();
    p.left_fore = p.left_upper.then_after(Affine2::rotation_about(b.left_elbow, le.x, le.y));
    p.right_fore = p.right_upper.then_after(Affine2::rotation_about(-b.right_elbow, re.x, re.y));
    p.left_leg = p.torso.then_after(Affine2::rotation_about(b.left_hip, left_hip.x, left_hip.y));
    p.right_leg =
        p.torso.then_after(Affine2::rotation_about(-b.right_hip, right_hip.x, right_hip.y));
    return p;
}

enum class Limb { torso, left_upper, right_upper, left_fore, right_fore, left_leg, right_leg };

const Affine2& limb_map(const Pose& p, Limb l) {
    switch (l) {
    case Limb::torso: return p.torso;
    case Limb::left_upper: return p.left_upper;
    case Limb::right_upper: return p.right_upper;
    case Limb::left_fore: return p.left_fore;
    case Limb::right_fore: return p.right_fore;
    case Limb::left_leg: return p.left_leg;
    case Limb::right_leg: return p.right_leg;
    }
    return p.torso;
}

// A garment is a list of parts, each attached to one limb and defined by a region in
// the canonical frame. Earlier parts take priority where parts overlap.
struct GarmentPart {
    Limb limb;
    std::function<bool(Vec2)> region;
    int64_t label_upper_half; // parsing label for canonical y < waist_y0
    int64_t label_lower_half;
};

std::vector<GarmentPart> garment_parts(GarmentType type) {
    const Vec2 ls_end = limb_point(left_shoulder, arm_rest_angle, sleeve_len, true);
    const Vec2 rs_end = limb_point(right_shoulder, arm_rest_angle, sleeve_len, false);
    const Vec2 lt_end = limb_point(left_hip, leg_rest_angle, tube_len, true);
    const Vec2 rt_end = limb_point(right_hip, leg_rest_angle, tube_len, false);
    auto left_sleeve = [=](Vec2 c) {
        return capsule(c, left_shoulder, ls_end, sleeve_radius).has_value();
    };
    auto right_sleeve = [=](Vec2 c) {
        return capsule(c, right_shoulder, rs_end, sleeve_radius).has_value();
    };
    switch (type) {
    case GarmentType::upper:
        return {
            {Limb::left_upper, left_sleeve, label::torso_cloth, label::torso_cloth},
            {Limb::right_upper, right_sleeve, label::torso_cloth, label::torso_cloth},
            {Limb::torso, [](Vec2 c) { return in_rect(c, 15.5, 32.5, torso_y0, shirt_y1); },
             label::torso_cloth, label::torso_cloth},
        };
    case GarmentType::lower:
        return {
            {Limb::torso, [](Vec2 c) { return in_rect(c, 16.0, 32.0, waist_y0, waist_y1); },
             label::lower_cloth, label::lower_cloth},
            {Limb::left_leg, [=](Vec2 c) { return capsule(c, left_hip, lt_end, tube_radius).has_value(); },
             label::lower_cloth, label::lower_cloth},
            {Limb::right_leg, [=](Vec2 c) { return capsule(c, right_hip, rt_end, tube_radius).has_value(); },
             label::lower_cloth, label::lower_cloth},
        };
    case GarmentType::dress:
        return {
            {Limb::left_upper, left_sleeve, label::torso_cloth, label::torso_cloth},
            {Limb::right_upper, right_sleeve, label::torso_cloth, label::torso_cloth},
            {Limb::torso,
             [](Vec2 c) {
                 if (in_rect(c, 15.5, 32.5, torso_y0, 41.0)) return true;
                 if (c.y < 41.0 || c.y > skirt_y1) return false;
                 const double f = (c.y - 41.0) / (skirt_y1 - 41.0) * skirt_flare;
                 return c.x >= 15.5 - f && c.x <= 32.5 + f;
             },
             label::torso_cloth, label::lower_cloth},
        };
    }
    return {};
}

Rgb shade(const Rgb& c, float k) {
    return {std::clamp(c.r * k, -1.0f, 1.0f), std::clamp(c.g * k, -1.0f, 1.0f),
            std::clamp(c.b * k, -1.0f, 1.0f)};
}

Rgb alternate(const Rgb& c) { return {-0.6f * c.r + 0.1f, -0.6f * c.g + 0.1f, -0.6f * c.b + 0.1f}; }

Rgb garment_texture(const GarmentParams& g, Vec2 c) {
    if (g.emblem && in_shape(g.emblem->shape, c, g.emblem->cx, g.emblem->cy, g.emblem->radius)) {
        return g.emblem->color;
    }
    const bool odd_y = static_cast<int64_t>(std::floor(c.y / 2.5)) % 2 != 0;
    const bool odd_x = static_cast<int64_t>(std::floor(c.x / 2.5)) % 2 != 0;
    switch (g.pattern) {
    case Pattern::plain: return shade(g.base, 1.0f - 0.01f * static_cast<float>(c.y - 15.0));
    case Pattern::h_stripes: return odd_y ? alternate(g.base) : g.base;
    case Pattern::v_stripes: return odd_x ? alternate(g.base) : g.base;
    case Pattern::checker: return (odd_x != odd_y) ? alternate(g.base) : g.base;
    case Pattern::dots: {
        const double fx = c.x / 3.0 - std::floor(c.x / 3.0) - 0.5;
        const double fy = c.y / 3.0 - std::floor(c.y / 3.0) - 0.5;
        return fx * fx + fy * fy < 0.09 ? alternate(g.base) : g.base;
    }
    }
    return g.base;
}

struct Frame {
    int64_t h, w;
    double sx, sy; // design -> pixel scale
    Vec2 to_design(int64_t x, int64_t y) const {
        return {static_cast<double>(x) / sx, static_cast<double>(y) / sy};
    }
    Vec2 to_pixel(Vec2 d) const { return {d.x * sx, d.y * sy}; }
};

Frame make_frame(ImageSize s) {
    return {s.height, s.width, static_cast<double>(s.width) / design_w,
            static_cast<double>(s.height) / design_h};
}

// Flat in-shop rendering: garment parts at their canonical positions on white.
std::vector<float> render_flat(const GarmentParams& g, const Frame& f) {
    const auto parts = garment_parts(g.type);
    std::vector<float> img(static_cast<size_t>(3 * f.h * f.w), 1.0f);
    for (int64_t y = 0; y < f.h; ++y) {
        for (int64_t x = 0; x < f.w; ++x) {
            const Vec2 c = f.to_design(x, y);
            for (const auto& part : parts) {
                if (!part.region(c)) continue;
                const Rgb col = garment_texture(g, c);
                const size_t i = static_cast<size_t>(y * f.w + x);
                img[i] = col.r;
                img[i + f.h * f.w] = col.g;
                img[i + 2 * f.h * f.w] = col.b;
                break;
            }
        }
    }
    return img;
}

// Border-clamped bilinear lookup; the same arithmetic the warp operator uses.
std::array<float, 3> bilinear(const std::vector<float>& img, const Frame& f, double sx, double sy) {
    sx = std::clamp(sx, 0.0, static_cast<double>(f.w - 1));
    sy = std::clamp(sy, 0.0, static_cast<double>(f.h - 1));
    const int64_t x0 = static_cast<int64_t>(std::floor(sx));
    const int64_t y0 = static_cast<int64_t>(std::floor(sy));
    const int64_t x1 = std::min(x0 + 1, f.w - 1), y1 = std::min(y0 + 1, f.h - 1);
    const float wx = static_cast<float>(sx - static_cast<double>(x0));
    const float wy = static_cast<float>(sy - static_cast<double>(y0));
    std::array<float, 3> out{};
    for (int64_t ch = 0; ch < 3; ++ch) {
        const float* p = img.data() + ch * f.h * f.w;
        const float top = (1 - wx) * p[y0 * f.w + x0] + wx * p[y0 * f.w + x1];
        const float bot = (1 - wx) * p[y1 * f.w + x0] + wx * p[y1 * f.w + x1];
        out[static_cast<size_t>(ch)] = (1 - wy) * top + wy * bot;
    }
    return out;
}

// Which part of a worn garment covers a design point, with its canonical preimage.
struct GarmentHit {
    const GarmentPart* part;
    Vec2 canonical;
};

std::optional<GarmentHit> hit_garment(const std::vector<GarmentPart>& parts, const Pose& pose,
                                      Vec2 d) {
    for (const auto& part : parts) {
        const auto inv = limb_map(pose, part.limb).inverse();
        const auto c = inv.apply(d.x, d.y);
        const Vec2 cv{c[0], c[1]};
        if (part.region(cv)) return GarmentHit{&part, cv};
    }
    return std::nullopt;
}

struct BodyHit {
    int64_t label;
    int64_t dp_part; // densepose part id, 0 = background
    double u, v;
};

// Skin/body lookup ignoring clothes: arms, then head, torso, legs.
std::optional<BodyHit> hit_body(const Pose& pose, Vec2 d) {
    auto local = [&](Limb l) {
        const auto c = limb_map(pose, l).inverse().apply(d.x, d.y);
        return Vec2{c[0], c[1]};
    };
    {
        const Vec2 c = local(Limb::left_fore);
        if (auto h = capsule(c, left_elbow_rest(), left_wrist_rest(), arm_radius))
            return BodyHit{label::left_arm, 4, h->first, (h->second + 1) / 2};
    }
    {
        const Vec2 c = local(Limb::right_fore);
        if (auto h = capsule(c, right_elbow_rest(), right_wrist_rest(), arm_radius))
            return BodyHit{label::right_arm, 6, h->first, (h->second + 1) / 2};
    }
    {
        const Vec2 c = local(Limb::left_upper);
        if (auto h = capsule(c, left_shoulder, left_elbow_rest(), arm_radius))
            return BodyHit{label::left_arm, 3, h->first, (h->second + 1) / 2};
    }
    {
        const Vec2 c = local(Limb::right_upper);
        if (auto h = capsule(c, right_shoulder, right_elbow_rest(), arm_radius))
            return BodyHit{label::right_arm, 5, h->first, (h->second + 1) / 2};
    }
    const Vec2 t = local(Limb::torso);
    if (in_ellipse(t, head_center, head_rx, head_ry)) {
        return BodyHit{label::head, 1, (t.x - head_center.x + head_rx) / (2 * head_rx),
                       (t.y - head_center.y + head_ry) / (2 * head_ry)};
    }
    if (in_rect(t, neck_x0, neck_x1, neck_y0, neck_y1) ||
        in_rect(t, torso_x0, torso_x1, torso_y0, torso_y1) ||
        in_rect(t, pelvis_x0, pelvis_x1, pelvis_y0, pelvis_y1)) {
        return BodyHit{label::center_body, 2, (t.x - 15.0) / 18.0, (t.y - 12.0) / 30.0};
    }
    {
        const Vec2 c = local(Limb::left_leg);
        if (auto h = capsule(c, left_hip, left_ankle_rest(), leg_radius))
            return BodyHit{label::left_leg, 7, h->first, (h->second + 1) / 2};
    }
    {
        const Vec2 c = local(Limb::right_leg);
        if (auto h = capsule(c, right_hip, right_ankle_rest(), leg_radius))
            return BodyHit{label::right_leg, 8, h->first, (h->second + 1) / 2};
    }
    return std::nullopt;
}

const IdentityMark* on_mark(const SynthScene& s, const Pose& pose, Vec2 d) {
    for (const auto& m : s.identity_marks) {
        const Limb l = m.left_arm ? Limb::left_fore : Limb::right_fore;
        const auto c = limb_map(pose, l).inverse().apply(d.x, d.y);
        const Vec2 a = m.left_arm ? left_elbow_rest() : right_elbow_rest();
        const Vec2 b = m.left_arm ? left_wrist_rest() : right_wrist_rest();
        const double cx = a.x + (b.x - a.x) * m.along, cy = a.y + (b.y - a.y) * m.along;
        if (in_shape(m.shape, {c[0], c[1]}, cx, cy, m.radius)) return &m;
    }
    return nullptr;
}

torch::Tensor to_tensor(const std::vector<float>& v, std::vector<int64_t> shape) {
    return torch::from_blob(const_cast<float*>(v.data()), shape, torch::kFloat32).clone();
}

struct Layers {
    const GarmentParams* upper = nullptr; // upper garment or dress
    const GarmentParams* lower = nullptr;
};

Layers worn(const SynthScene& s, bool gt) {
    const GarmentParams* swapped = gt ? &s.target : &s.original;
    switch (s.swapped) {
    case GarmentType::upper: return {swapped, &s.other};
    case GarmentType::lower: return {&s.other, swapped};
    case GarmentType::dress: return {swapped, nullptr};
    }
    return {};
}

struct Rendered {
    std::vector<float> image;
    std::vector<int64_t> parsing;
    std::vector<uint8_t> swapped_mask;
    std::vector<uint8_t> marks;
};

void absorb_limb_fragments(Rendered& r, const Frame& f);

Rendered render_person(const SynthScene& s, const Pose& pose, const Frame& f, bool gt) {
    const Layers layers = worn(s, gt);
    const auto upper_parts = garment_parts(layers.upper->type);
    const auto upper_flat = render_flat(*layers.upper, f);
    std::vector<GarmentPart> lower_parts;
    std::vector<float> lower_flat;
    if (layers.lower) {
        lower_parts = garment_parts(layers.lower->type);
        lower_flat = render_flat(*layers.lower, f);
    }
    const int64_t hw = f.h * f.w;
    Rendered r{std::vector<float>(static_cast<size_t>(3 * hw)),
               std::vector<int64_t>(static_cast<size_t>(hw), label::background),
               std::vector<uint8_t>(static_cast<size_t>(hw), 0),
               std::vector<uint8_t>(static_cast<size_t>(hw), 0)};
    auto put = [&](int64_t i, float cr, float cg, float cb) {
        r.image[static_cast<size_t>(i)] = cr;
        r.image[static_cast<size_t>(i + hw)] = cg;
        r.image[static_cast<size_t>(i + 2 * hw)] = cb;
    };
    const bool upper_swapped = s.swapped != GarmentType::lower;
    for (int64_t y = 0; y < f.h; ++y) {
        for (int64_t x = 0; x < f.w; ++x) {
            const int64_t i = y * f.w + x;
            const Vec2 d = f.to_design(x, y);
            auto paint_garment = [&](const std::optional<GarmentHit>& hit,
                                     const std::vector<float>& flat, bool is_swapped) {
                const Vec2 q = f.to_pixel(hit->canonical);
                const auto col = bilinear(flat, f, q.x, q.y);
                put(i, col[0], col[1], col[2]);
                r.parsing[static_cast<size_t>(i)] = hit->canonical.y < waist_y0
                                                        ? hit->part->label_upper_half
                                                        : hit->part->label_lower_half;
                r.swapped_mask[static_cast<size_t>(i)] = is_swapped ? 1 : 0;
            };
            if (auto hit = hit_garment(upper_parts, pose, d)) {
                paint_garment(hit, upper_flat, upper_swapped);
                continue;
            }
            const auto body = hit_body(pose, d);
            const bool arm = body && (body->label == label::left_arm || body->label == label::right_arm);
            if (!arm && layers.lower) {
                if (auto hit = hit_garment(lower_parts, pose, d)) {
                    paint_garment(hit, lower_flat, !upper_swapped);
                    continue;
                }
            }
            if (body) {
                r.parsing[static_cast<size_t>(i)] = body->label;
                if (body->label == label::head) {
                    // hair on the upper half of the head ellipse
                    const auto t = pose.torso.inverse().apply(d.x, d.y);
                    const Rgb c = t[1] < head_center.y - 1.0 ? s.hair : s.skin;
                    put(i, c.r, c.g, c.b);
                } else if (const IdentityMark* m = arm ? on_mark(s, pose, d) : nullptr) {
                    put(i, m->color.r, m->color.g, m->color.b);
                    r.marks[static_cast<size_t>(i)] = 1;
                } else {
                    const Rgb c = shade(s.skin, 1.0f - 0.04f * static_cast<float>(body->v - 0.5));
                    put(i, c.r, c.g, c.b);
                }
                continue;
            }
            const float t = static_cast<float>(y) / static_cast<float>(std::max<int64_t>(f.h - 1, 1));
            put(i, s.bg_top.r * (1 - t) + s.bg_bottom.r * t, s.bg_top.g * (1 - t) + s.bg_bottom.g * t,
                s.bg_top.b * (1 - t) + s.bg_bottom.b * t);
        }
    }
    absorb_limb_fragments(r, f);
    return r;
}

// Slivers of skin between garment edges can split a limb into pieces; everything but the
// largest piece is folded into whatever covers its neighbourhood.
void absorb_limb_fragments(Rendered& r, const Frame& f) {
    const int64_t hw = f.h * f.w;
    const int64_t limbs[] = {label::left_arm, label::right_arm, label::left_leg, label::right_leg};
    for (const int64_t lab : limbs) {
        std::vector<int> comp(static_cast<size_t>(hw), -1);
        std::vector<int64_t> sizes;
        for (int64_t s0 = 0; s0 < hw; ++s0) {
            if (r.parsing[static_cast<size_t>(s0)] != lab || comp[static_cast<size_t>(s0)] >= 0) continue;
            const int id = static_cast<int>(sizes.size());
            std::vector<int64_t> stack{s0};
            comp[static_cast<size_t>(s0)] = id;
            int64_t n = 0;
            while (!stack.empty()) {
                const int64_t i = stack.back();
                stack.pop_back();
                ++n;
                const int64_t y = i / f.w, x = i % f.w;
                const int64_t nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
                for (const auto& q : nb) {
                    if (q[0] < 0 || q[0] >= f.h || q[1] < 0 || q[1] >= f.w) continue;
                    const int64_t j = q[0] * f.w + q[1];
                    if (r.parsing[static_cast<size_t>(j)] == lab && comp[static_cast<size_t>(j)] < 0) {
                        comp[static_cast<size_t>(j)] = id;
                        stack.push_back(j);
                    }
                }
            }
            sizes.push_back(n);
        }
        if (sizes.size() < 2) continue;
        const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
        std::vector<int64_t> stray;
        for (int64_t i = 0; i < hw; ++i) {
            const int c = comp[static_cast<size_t>(i)];
            if (c >= 0 && c != keep) stray.push_back(i);
        }
        // grow the surrounding labels inwards until every stray pixel is covered
        while (!stray.empty()) {
            std::vector<int64_t> rest;
            std::vector<std::pair<int64_t, int64_t>> fills;
            for (const int64_t i : stray) {
                const int64_t y = i / f.w, x = i % f.w;
                const int64_t nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
                int64_t src = -1;
                for (const auto& q : nb) {
                    if (q[0] < 0 || q[0] >= f.h || q[1] < 0 || q[1] >= f.w) continue;
                    const int64_t j = q[0] * f.w + q[1];
                    if (r.parsing[static_cast<size_t>(j)] != lab) {
                        src = j;
                        break;
                    }
                }
                if (src < 0) rest.push_back(i);
                else fills.emplace_back(i, src);
            }
            if (fills.empty()) break;
            for (const auto& [i, j] : fills) {
                const auto a = static_cast<size_t>(i), b = static_cast<size_t>(j);
                r.parsing[a] = r.parsing[b];
                r.swapped_mask[a] = r.swapped_mask[b];
                r.marks[a] = 0;
                for (int64_t c = 0; c < 3; ++c) {
                    r.image[static_cast<size_t>(i + c * hw)] = r.image[static_cast<size_t>(j + c * hw)];
                }
            }
            stray = std::move(rest);
        }
    }
}

std::vector<float> render_densepose(const Pose& pose, const Frame& f) {
    const int64_t hw = f.h * f.w;
    std::vector<float> dp(static_cast<size_t>(3 * hw), -1.0f);
    for (int64_t y = 0; y < f.h; ++y) {
        for (int64_t x = 0; x < f.w; ++x) {
            const auto body = hit_body(pose, f.to_design(x, y));
            if (!body) continue;
            const size_t i = static_cast<size_t>(y * f.w + x);
            dp[i] = static_cast<float>(body->dp_part) / 8.0f * 2.0f - 1.0f;
            dp[i + static_cast<size_t>(hw)] = static_cast<float>(std::clamp(body->u, 0.0, 1.0) * 2.0 - 1.0);
            dp[i + static_cast<size_t>(2 * hw)] = static_cast<float>(std::clamp(body->v, 0.0, 1.0) * 2.0 - 1.0);
        }
    }
    return dp;
}

Rgb random_color(std::mt19937_64& rng, float lo = -0.9f, float hi = 0.9f) {
    std::uniform_real_distribution<float> u(lo, hi);
    const float r = u(rng), g = u(rng), b = u(rng);
    return {r, g, b};
}

GarmentParams random_garment(std::mt19937_64& rng, GarmentType type) {
    GarmentParams g;
    g.type = type;
    g.base = random_color(rng);
    std::uniform_int_distribution<int> pat(0, 4);
    g.pattern = static_cast<Pattern>(pat(rng));
    std::bernoulli_distribution has_emblem(0.6);
    if (type != GarmentType::lower && has_emblem(rng)) {
        std::uniform_real_distribution<double> rad(1.5, 3.0);
        Emblem e;
        e.radius = rad(rng);
        // fully inside the chest panel, away from its border
        std::uniform_real_distribution<double> ex(15.5 + e.radius + 1.0, 32.5 - e.radius - 1.0);
        std::uniform_real_distribution<double> ey(torso_y0 + e.radius + 3.0, shirt_y1 - e.radius - 1.0);
        e.cx = ex(rng);
        e.cy = ey(rng);
        std::uniform_int_distribution<int> shape(0, 2);
        e.shape = static_cast<EmblemShape>(shape(rng));
        e.color = random_color(rng, -1.0f, 1.0f);
        g.emblem = e;
    }
    return g;
}

} // namespace

SynthScene make_scene(uint64_t seed, ImageSize size, GarmentType type, const SynthOptions& opt) {
    const int64_t div = int64_t{1} << std::max(opt.pyramid_depth - 1, 0);
    if (size.height <= 0 || size.width <= 0 || size.height % div != 0 || size.width % div != 0) {
        throw ConfigError("synthetic canvas " + std::to_string(size.height) + "x" +
                          std::to_string(size.width) + " is not divisible by " + std::to_string(div) +
                          " (pyramid depth " + std::to_string(opt.pyramid_depth) + ")");
    }
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x5851F42D4C957F2DULL);
    SynthScene s;
    s.seed = seed;
    s.canvas = size;
    s.swapped = type;

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
    BodyParams b;
    b.torso_scale = uniform(0.94, 1.06);
    b.torso_angle = uniform(-0.05, 0.05);
    b.shift_x = uniform(-2.5, 2.5);
    b.shift_y = uniform(-1.5, 1.5);
    b.left_shoulder = uniform(-0.15, 0.35);
    b.right_shoulder = uniform(-0.15, 0.35);
    b.left_elbow = uniform(-0.1, 0.4);
    b.right_elbow = uniform(-0.1, 0.4);
    b.left_hip = uniform(-0.03, 0.12);
    b.right_hip = uniform(-0.03, 0.12);
    switch (opt.deformation) {
    case Deformation::random: s.body = b; break;
    case Deformation::identity: s.body = BodyParams{}; break;
    case Deformation::translation:
        s.body = BodyParams{};
        s.body.shift_x = opt.translate_x * design_w / static_cast<double>(size.width);
        s.body.shift_y = opt.translate_y * design_h / static_cast<double>(size.height);
        break;
    }

    std::uniform_real_distribution<float> tone(-0.1f, 0.7f);
    const float base = tone(rng);
    s.skin = {base + 0.25f, base, base - 0.15f};
    s.hair = random_color(rng, -1.0f, -0.2f);
    s.bg_top = random_color(rng, 0.2f, 1.0f);
    s.bg_bottom = random_color(rng, 0.0f, 0.9f);

    s.target = random_garment(rng, type);
    s.original = random_garment(rng, type);
    s.other = random_garment(rng, type == GarmentType::lower ? GarmentType::upper : GarmentType::lower);

    std::uniform_int_distribution<int> shape(0, 2);
    for (bool left : {true, false}) {
        IdentityMark m;
        m.left_arm = left;
        m.along = uniform(0.35, 0.65);
        m.radius = uniform(0.9, 1.3);
        m.shape = static_cast<EmblemShape>(shape(rng));
        m.color = {static_cast<float>(uniform(-1.0, -0.6)), static_cast<float>(uniform(-1.0, -0.5)),
                   static_cast<float>(uniform(-0.4, 0.4))};
        s.identity_marks.push_back(m);
    }
    return s;
}

Sample render_scene(const SynthScene& scene) {
    const Frame f = make_frame(scene.canvas);
    const Pose pose = make_pose(scene.body);
    const auto person = render_person(scene, pose, f, false);
    const auto gt = render_person(scene, pose, f, true);

    Sample s;
    s.name = "synth_" + std::to_string(scene.seed) + "_" + to_string(scene.swapped);
    s.garment_type = scene.swapped;
    s.person = to_tensor(person.image, {3, f.h, f.w});
    s.gt_tryon = to_tensor(gt.image, {3, f.h, f.w});
    s.garment = to_tensor(render_flat(scene.target, f), {3, f.h, f.w});
    s.parsing = torch::from_blob(const_cast<int64_t*>(person.parsing.data()), {f.h, f.w}, torch::kInt64)
                    .clone();
    s.cloth_mask =
        torch::from_blob(const_cast<uint8_t*>(gt.swapped_mask.data()), {f.h, f.w}, torch::kUInt8)
            .to(torch::kBool);
    s.mark_mask = torch::from_blob(const_cast<uint8_t*>(person.marks.data()), {f.h, f.w}, torch::kUInt8)
                      .to(torch::kBool);
    s.densepose = to_tensor(render_densepose(pose, f), {3, f.h, f.w});
    s.keypoints = scene_keypoints(scene);
    s.scene = scene;
    return s;
}

Sample gen_sample(uint64_t seed, ImageSize size, GarmentType type, const SynthOptions& opt) {
    return render_scene(make_scene(seed, size, type, opt));
}

std::vector<Keypoint> scene_keypoints(const SynthScene& scene) {
    const Frame f = make_frame(scene.canvas);
    const Pose pose = make_pose(scene.body);
    auto kp = [&](const Affine2& m, Vec2 p) {
        const auto d = m.apply(p.x, p.y);
        const Vec2 px = f.to_pixel({d[0], d[1]});
        const bool inside = px.x >= 0 && px.y >= 0 && px.x <= static_cast<double>(f.w - 1) &&
                            px.y <= static_cast<double>(f.h - 1);
        return Keypoint{px.x, px.y, inside};
    };
    std::vector<Keypoint> out(num_joints);
    out[static_cast<size_t>(Joint::head)] = kp(pose.torso, head_center);
    out[static_cast<size_t>(Joint::neck)] = kp(pose.torso, {24.0, 14.5});
    out[static_cast<size_t>(Joint::left_shoulder)] = kp(pose.torso, left_shoulder);
    out[static_cast<size_t>(Joint::right_shoulder)] = kp(pose.torso, right_shoulder);
    out[static_cast<size_t>(Joint::left_elbow)] = kp(pose.left_upper, left_elbow_rest());
    out[static_cast<size_t>(Joint::right_elbow)] = kp(pose.right_upper, right_elbow_rest());
    out[static_cast<size_t>(Joint::left_wrist)] = kp(pose.left_fore, left_wrist_rest());
    out[static_cast<size_t>(Joint::right_wrist)] = kp(pose.right_fore, right_wrist_rest());
    out[static_cast<size_t>(Joint::left_hip)] = kp(pose.torso, left_hip);
    out[static_cast<size_t>(Joint::right_hip)] = kp(pose.torso, right_hip);
    return out;
}

torch::Tensor oracle_flow(const Sample& sample) {
    if (!sample.scene) throw ContractError("oracle_flow requires a synthetic sample");
    const SynthScene& s = *sample.scene;
    const Frame f = make_frame(s.canvas);
    const Pose pose = make_pose(s.body);
    const auto parts = garment_parts(s.target.type);
    const Affine2 torso_inv = pose.torso.inverse();
    std::vector<float> flow(static_cast<size_t>(2 * f.h * f.w));
    const int64_t hw = f.h * f.w;
    for (int64_t y = 0; y < f.h; ++y) {
        for (int64_t x = 0; x < f.w; ++x) {
            const Vec2 d = f.to_design(x, y);
            Vec2 c;
            if (auto hit = hit_garment(parts, pose, d)) {
                c = hit->canonical;
            } else {
                const auto t = torso_inv.apply(d.x, d.y);
                c = {t[0], t[1]};
            }
            // (d - c) is exactly zero for the identity pose
            const size_t i = static_cast<size_t>(y * f.w + x);
            flow[i] = static_cast<float>((d.x - c.x) * f.sx);
            flow[i + static_cast<size_t>(hw)] = static_cast<float>((d.y - c.y) * f.sy);
        }
    }
    return to_tensor(flow, {2, f.h, f.w});
}

} // namespace vton
