#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lsplat/tensor.hpp"

namespace lsplat {

template <typename R>
struct Vec3 {
    R x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(R s) const { return {x * s, y * s, z * s}; }
    R dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    R norm() const { return std::sqrt(x * x + y * y + z * z); }
    Vec3 normalized() const {
        const R n = norm();
        return {x / n, y / n, z / n};
    }
};

// Pinhole camera with a world-from-camera rigid pose. Looks down +z in the
// camera frame; pixel (u, v) rays pass through the pixel center (u+.5, v+.5).
template <typename R>
struct Camera {
    R fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    std::array<R, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major, world-from-camera
    Vec3<R> center{0, 0, 0};                          // camera origin in world

    Vec3<R> rotate_to_world(const Vec3<R>& v) const {
        return {rot[0] * v.x + rot[1] * v.y + rot[2] * v.z,
                rot[3] * v.x + rot[4] * v.y + rot[5] * v.z,
                rot[6] * v.x + rot[7] * v.y + rot[8] * v.z};
    }

    Vec3<R> rotate_to_camera(const Vec3<R>& v) const {  // R^T v
        return {rot[0] * v.x + rot[3] * v.y + rot[6] * v.z,
                rot[1] * v.x + rot[4] * v.y + rot[7] * v.z,
                rot[2] * v.x + rot[5] * v.y + rot[8] * v.z};
    }

    Vec3<R> world_to_camera(const Vec3<R>& p) const { return rotate_to_camera(p - center); }
    Vec3<R> camera_to_world(const Vec3<R>& p) const { return rotate_to_world(p) + center; }

    // (u, v) pixel coordinates plus camera-space depth z.
    std::array<R, 3> project(const Vec3<R>& p_world) const {
        const Vec3<R> pc = world_to_camera(p_world);
        return {fx * pc.x / pc.z + cx, fy * pc.y / pc.z + cy, pc.z};
    }

    void validate() const {
        detail::check(fx > 0 && fy > 0, "camera: focal lengths must be positive");
        detail::check(width > 0 && height > 0, "camera: bad image size");
        // ||R^T R - I||_inf < 1e-6 and det = +1
        R max_dev = 0;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                R dot = 0;
                for (int k = 0; k < 3; ++k) dot += rot[k * 3 + i] * rot[k * 3 + j];
                max_dev = std::max(max_dev, std::abs(dot - (i == j ? R(1) : R(0))));
            }
        }
        detail::check(max_dev < R(1e-5), "camera: rotation not orthonormal");
        const R det = rot[0] * (rot[4] * rot[8] - rot[5] * rot[7]) -
                      rot[1] * (rot[3] * rot[8] - rot[5] * rot[6]) +
                      rot[2] * (rot[3] * rot[7] - rot[4] * rot[6]);
        detail::check(std::abs(det - R(1)) < R(1e-4), "camera: rotation must have det +1");
    }
};

template <typename R>
struct Ray {
    Vec3<R> origin;
    Vec3<R> direction;  // unit
};

template <typename R>
struct RayEmbedding {
    std::array<R, 9> channels;  // [origin, direction, origin x direction]
};

// Camera pose looking from `eye` toward `target`; right-handed, +z forward.
template <typename R>
Camera<R> look_at_camera(const Vec3<R>& eye, const Vec3<R>& target, const Vec3<R>& up, R fx, R fy,
                         int width, int height) {
    Camera<R> cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = R(width) / 2;
    cam.cy = R(height) / 2;
    cam.width = width;
    cam.height = height;
    cam.center = eye;
    const Vec3<R> fwd = (target - eye).normalized();
    Vec3<R> right = fwd.cross(up);
    if (right.norm() < R(1e-8)) right = fwd.cross(Vec3<R>{1, 0, 0});
    right = right.normalized();
    const Vec3<R> down = fwd.cross(right).normalized();  // +y down matches pixel v axis
    cam.rot = {right.x, down.x, fwd.x, right.y, down.y, fwd.y, right.z, down.z, fwd.z};
    return cam;
}

template <typename R>
Ray<R> pixel_ray(const Camera<R>& cam, int u, int v) {
    const Vec3<R> dir_cam{(R(u) + R(0.5) - cam.cx) / cam.fx, (R(v) + R(0.5) - cam.cy) / cam.fy, R(1)};
    return Ray<R>{cam.center, cam.rotate_to_world(dir_cam).normalized()};
}

// Row-major H x W grid of rays through each pixel center, in world frame.
template <typename R>
std::vector<Ray<R>> pixel_rays(const Camera<R>& cam) {
    cam.validate();
    std::vector<Ray<R>> rays;
    rays.reserve(static_cast<std::size_t>(cam.width) * cam.height);
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) rays.push_back(pixel_ray(cam, u, v));
    return rays;
}

template <typename R>
RayEmbedding<R> ray_embedding(const Ray<R>& r) {
    detail::check(std::abs(r.direction.norm() - R(1)) < R(1e-6), "ray_embedding: direction must be unit");
    const Vec3<R> m = r.origin.cross(r.direction);
    return RayEmbedding<R>{{r.origin.x, r.origin.y, r.origin.z, r.direction.x, r.direction.y,
                            r.direction.z, m.x, m.y, m.z}};
}

template <typename R>
Vec3<R> depth_to_position(const Ray<R>& r, R depth) {
    detail::check(depth > 0, "depth_to_position: depth must be positive");
    return r.origin + r.direction * depth;
}

// Bounded object-centric depth: near + sigmoid(raw) * (far - near).
template <typename R>
R range_object_centric(R raw, R near, R far) {
    detail::check(0 < near && near < far, "range: need 0 < near < far");
    const R s = R(1) / (R(1) + std::exp(-raw));
    return near + s * (far - near);
}

// Unbounded scene depth: near + softplus(raw) * (far - near), capped at 4*far.
template <typename R>
R range_linear(R raw, R near, R far) {
    detail::check(0 < near && near < far, "range: need 0 < near < far");
    const R sp = raw > R(30) ? raw : std::log1p(std::exp(raw));
    return std::min(near + sp * (far - near), R(4) * far);
}

// near/far for cameras orbiting the unit box [-1,1]^3: distance to origin
// plus/minus the box's bounding-sphere radius sqrt(3), floored away from zero.
template <typename R>
std::pair<R, R> object_range_bounds(R camera_distance) {
    const R r = std::sqrt(R(3));
    const R near = std::max(R(0.05), camera_distance - r);
    return {near, camera_distance + r};
}

}  // namespace lsplat
