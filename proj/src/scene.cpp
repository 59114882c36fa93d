#include "depthkit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace depthkit {
namespace {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Vec3 normalized(const Vec3& v) {
    const double n = std::sqrt(dot(v, v));
    return {v.x / n, v.y / n, v.z / n};
}

struct Rgb {
    double r = 0, g = 0, b = 0;
};

struct Sphere {
    Vec3 c;
    double r = 1;
    Rgb albedo;
};

struct Box {
    Vec3 c, half;
    Rgb albedo;
};

struct Hit {
    double t = 0;
    Vec3 normal;
    Rgb albedo;
};

// Ray is t * d from the origin with d.z == 1, so the hit parameter t is the
// z-depth directly.
bool hit_sphere(const Sphere& s, const Vec3& d, Hit& out) {
    const double a = dot(d, d);
    const double b = dot(d, s.c);
    const double disc = b * b - a * (dot(s.c, s.c) - s.r * s.r);
    if (disc < 0) return false;
    const double t = (b - std::sqrt(disc)) / a;
    if (t <= 1e-9) return false;
    const Vec3 p{t * d.x, t * d.y, t * d.z};
    out = {t, {(p.x - s.c.x) / s.r, (p.y - s.c.y) / s.r, (p.z - s.c.z) / s.r}, s.albedo};
    return true;
}

bool hit_box(const Box& b, const Vec3& d, Hit& out) {
    double t_near = -1e300, t_far = 1e300;
    int axis = 0;
    double axis_sign = 0;
    const double dir[3] = {d.x, d.y, d.z};
    const double ctr[3] = {b.c.x, b.c.y, b.c.z};
    const double half[3] = {b.half.x, b.half.y, b.half.z};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(dir[i]) < 1e-12) {
            if (std::abs(ctr[i]) > half[i]) return false;
            continue;
        }
        double t0 = (ctr[i] - half[i]) / dir[i];
        double t1 = (ctr[i] + half[i]) / dir[i];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > t_near) {
            t_near = t0;
            axis = i;
            axis_sign = dir[i] > 0 ? -1.0 : 1.0;
        }
        t_far = std::min(t_far, t1);
    }
    if (t_near > t_far || t_near <= 1e-9) return false;
    Vec3 n{0, 0, 0};
    (axis == 0 ? n.x : axis == 1 ? n.y : n.z) = axis_sign;
    out = {t_near, n, b.albedo};
    return true;
}

}  // namespace

Scene synth_scene(const SceneSpec& spec) {
    if (!(0 < spec.near && spec.near < spec.far))
        throw std::invalid_argument("scene requires 0 < near < far");
    if (spec.height <= 0 || spec.width <= 0 || spec.objects < 0)
        throw std::invalid_argument("scene requires positive extents and object count");

    const std::int64_t h = spec.height, w = spec.width;
    const double f = kSceneFocalFactor * static_cast<double>(std::max(h, w));
    const double tan_x = static_cast<double>(w) / (2 * f);

    Rng rng(spec.seed);
    std::vector<Sphere> spheres;
    std::vector<Box> boxes;
    const double cz_lo = spec.near + 2.0;
    const double cz_hi = std::max(cz_lo + 1.0, std::min(spec.far - 1.0, 34.0));
    for (int k = 0; k < spec.objects; ++k) {
        const double cz = cz_lo + rng.uniform() * (cz_hi - cz_lo);
        const double cx = (2 * rng.uniform() - 1) * 0.7 * tan_x * cz;
        const double cy = kSceneGroundY - (0.3 + rng.uniform() * 2.4);
        if (k % 2 == 0) {
            const double r = 0.35 + rng.uniform() * 1.1;
            const Rgb a{0.25 + 0.7 * rng.uniform(), 0.25 + 0.7 * rng.uniform(),
                        0.25 + 0.7 * rng.uniform()};
            spheres.push_back({{cx, cy, cz}, r, a});
        } else {
            const Vec3 half{0.3 + rng.uniform() * 0.9, 0.3 + rng.uniform() * 0.9,
                            0.3 + rng.uniform() * 0.9};
            const Rgb a{0.25 + 0.7 * rng.uniform(), 0.25 + 0.7 * rng.uniform(),
                        0.25 + 0.7 * rng.uniform()};
            boxes.push_back({{cx, cy, cz}, half, a});
        }
    }

    Scene scene{Tensor::zeros({3, h, w}, Dtype::F32), Tensor::zeros({1, h, w}, Dtype::F32)};
    auto img = scene.image.data<float>();
    auto dep = scene.depth.data<float>();
    const Vec3 light = normalized({0.4, 0.7, 0.35});
    const Rgb sky{0.55, 0.65, 0.85};
    const Rgb ground{0.45, 0.5, 0.4};

    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const Vec3 d{(static_cast<double>(x) + 0.5 - static_cast<double>(w) / 2) / f,
                         (static_cast<double>(y) + 0.5 - static_cast<double>(h) / 2) / f, 1.0};
            Hit best;
            bool found = false;
            if (d.y > 0) {
                const double t = kSceneGroundY / d.y;
                Rgb a = ground;
                const double checker =
                    (static_cast<std::int64_t>(std::floor(t * d.x)) +
                     static_cast<std::int64_t>(std::floor(t * d.z))) % 2 == 0 ? 1.0 : 0.8;
                a = {a.r * checker, a.g * checker, a.b * checker};
                best = {t, {0, -1, 0}, a};
                found = true;
            }
            Hit hit;
            for (const Sphere& s : spheres) {
                if (hit_sphere(s, d, hit) && (!found || hit.t < best.t)) {
                    best = hit;
                    found = true;
                }
            }
            for (const Box& b : boxes) {
                if (hit_box(b, d, hit) && (!found || hit.t < best.t)) {
                    best = hit;
                    found = true;
                }
            }

            const std::size_t pix = static_cast<std::size_t>(y * w + x);
            Rgb color;
            double depth;
            if (found) {
                const double diffuse = std::max(0.0, -dot(best.normal, light));
                const double shade = 0.25 + 0.75 * diffuse;
                color = {best.albedo.r * shade, best.albedo.g * shade, best.albedo.b * shade};
                depth = best.t;
            } else {
                color = sky;
                depth = spec.far;
            }
            dep[pix] = static_cast<float>(std::clamp(depth, spec.near, spec.far));
            img[pix] = static_cast<float>(color.r);
            img[static_cast<std::size_t>(h * w) + pix] = static_cast<float>(color.g);
            img[2 * static_cast<std::size_t>(h * w) + pix] = static_cast<float>(color.b);
        }
    }
    return scene;
}

}  // namespace depthkit
