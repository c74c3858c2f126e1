#include "hpe/trainer.hpp"

namespace hpe {

AugmentDraw draw_augment(const AugmentConfig& cfg, std::mt19937_64& rng) {
    const double r = cfg.rotation_range_deg * 3.14159265358979323846 / 180.0;
    std::uniform_real_distribution<double> theta(-r, r);
    std::uniform_real_distribution<double> aspect(cfg.aspect_min, cfg.aspect_max);
    AugmentDraw d;
    d.theta_rad = theta(rng);
    d.aspect_x = aspect(rng);
    d.aspect_y = aspect(rng);
    return d;
}

std::pair<PointCloud, Pose> apply_augment(const PointCloud& cloud, const Pose& pose,
                                          const AugmentDraw& draw) {
    if (draw.is_identity()) {
        return {cloud, pose};
    }
    const Vec3 pivot = centroid(cloud);
    const double c = std::cos(draw.theta_rad);
    const double s = std::sin(draw.theta_rad);
    auto transform = [&](const Vec3& p) -> Vec3 {
        const double dx = p.x - pivot.x;
        const double dy = p.y - pivot.y;
        const double rx = c * dx - s * dy;
        const double ry = s * dx + c * dy;
        return {pivot.x + draw.aspect_x * rx, pivot.y + draw.aspect_y * ry, p.z};
    };
    PointCloud out_cloud;
    out_cloud.reserve(cloud.size());
    for (const Vec3& p : cloud) {
        out_cloud.push_back(transform(p));
    }
    Pose out_pose;
    out_pose.joints.reserve(pose.joints.size());
    for (const Vec3& j : pose.joints) {
        out_pose.joints.push_back(transform(j));
    }
    return {std::move(out_cloud), std::move(out_pose)};
}

std::pair<PointCloud, Pose> augment(const PointCloud& cloud, const Pose& pose, const AugmentConfig& cfg,
                                    std::mt19937_64& rng) {
    if (!cfg.enabled) {
        return {cloud, pose};
    }
    return apply_augment(cloud, pose, draw_augment(cfg, rng));
}

}  // namespace hpe
