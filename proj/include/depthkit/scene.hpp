#pragma once

#include <cstdint>

#include "depthkit/tensor.hpp"

namespace depthkit {

/// Fully determines one rendered frame: identical specs give bit-identical
/// tensors.
struct SceneSpec {
    std::uint64_t seed = 0;
    std::int64_t height = 64, width = 96;
    int objects = 6;
    double near = 1.0, far = 80.0;  // depth clamp range, meters
};

struct Scene {
    Tensor image;  // (3, H, W) f32, Lambertian shading times per-object albedo
    Tensor depth;  // (1, H, W) f32, ray z-depth clamped to [near, far]
};

/// Camera model shared with the analytic ground-plane oracle: camera at the
/// origin looking along +z, +y down, pixel (row y, col x) casts the ray
/// t * (dx, dy, 1) with dx = (x + 0.5 - W/2) / f, dy = (y + 0.5 - H/2) / f,
/// f = kSceneFocalFactor * max(H, W). The ground plane sits at world
/// y = kSceneGroundY, so its z-depth at a pixel is kSceneGroundY / dy.
inline constexpr double kSceneFocalFactor = 0.8;
inline constexpr double kSceneGroundY = 1.5;

/// Ray-casts a ground plane plus `objects` seeded spheres and axis-aligned
/// boxes. Depth is the z-depth of the first hit (background = far).
Scene synth_scene(const SceneSpec& spec);

}  // namespace depthkit
