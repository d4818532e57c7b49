#include "tfield/speed.hpp"

#include <algorithm>
#include <cmath>

namespace tfield::speed {

ReachabilityModel ReachabilityModel::always() {
    ReachabilityModel m;
    m.kind = Kind::AlwaysReachable;
    return m;
}

ReachabilityModel ReachabilityModel::shell(const Eigen::Vector3d& center,
                                           double r_inner, double r_outer) {
    ReachabilityModel m;
    m.kind = Kind::SphericalShell;
    m.center = center;
    m.r_inner = r_inner;
    m.r_outer = r_outer;
    return m;
}

ReachabilityModel ReachabilityModel::custom(std::function<bool(const geom::Pose&)> pred) {
    ReachabilityModel m;
    m.kind = Kind::Custom;
    m.predicate = std::move(pred);
    return m;
}

int ReachabilityModel::operator()(const geom::Pose& p) const {
    switch (kind) {
        case Kind::AlwaysReachable:
            return 1;
        case Kind::SphericalShell: {
            double r = (p.translation - center).norm();
            return (r >= r_inner && r <= r_outer) ? 1 : 0;
        }
        case Kind::Custom:
            return predicate(p) ? 1 : 0;
    }
    return 0;
}

double speed_from_distance(double distance, int gate, const SpeedParams& params) {
    double clipped = std::clamp(distance * gate, params.d_min, params.d_max);
    return params.s_const / params.d_max * clipped;
}

double ground_truth_speed(const geom::Scene& scene, const std::string& object_id,
                          const geom::Pose& pose, const SpeedParams& params,
                          const ReachabilityModel& reach) {
    if (!params.valid()) throw InvalidInputError("invalid speed parameters");
    const geom::PointCloud& cloud = scene.object(object_id);
    const bool have_obstacles =
        scene.distance_grid.has_value() || !scene.obstacle_cloud.empty();
    double d = have_obstacles
                   ? geom::min_obstacle_distance(scene, geom::transform_cloud(cloud, pose))
                         .distance
                   : params.d_max;
    return speed_from_distance(d, reach(pose), params);
}

double scheduled_speed(double s_star, double alpha, double s_const) {
    double s = (1.0 - alpha) * s_const + alpha * s_star;
    return std::min(std::max(s, 1e-12), s_const);
}

PoseMask PoseMask::full() { return PoseMask{}; }

PoseMask PoseMask::planar_xy() {
    PoseMask m;
    m.translation[2] = false;
    m.rotation[0] = m.rotation[1] = m.rotation[2] = false;
    return m;
}

PoseMask PoseMask::translation_only() {
    PoseMask m;
    m.rotation[0] = m.rotation[1] = m.rotation[2] = false;
    return m;
}

geom::Pose sample_valid_pose(const geom::Scene& scene, const std::string& object_id,
                             std::mt19937_64& rng, const PoseMask& mask,
                             SampleStats* stats) {
    const geom::PointCloud& cloud = scene.object(object_id);
    const Eigen::Vector3d lo = scene.workspace_bounds.min();
    const Eigen::Vector3d hi = scene.workspace_bounds.max();
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const bool have_obstacles =
        scene.distance_grid.has_value() || !scene.obstacle_cloud.empty();
    constexpr int kMaxRejections = 10000;

    int rejections = 0;
    for (;;) {
        geom::Pose p;
        for (int i = 0; i < 3; ++i)
            p.translation[i] = mask.translation[i] ? lo[i] + (hi[i] - lo[i]) * unit(rng) : 0.0;
        for (int i = 0; i < 3; ++i)
            p.rotation[i] = mask.rotation[i]
                                ? geom::wrap_angle(-M_PI + 2.0 * M_PI * unit(rng))
                                : 0.0;
        if (!have_obstacles) {
            if (stats) stats->rejections = rejections;
            return p;
        }
        double d =
            geom::min_obstacle_distance(scene, geom::transform_cloud(cloud, p)).distance;
        if (d > 0) {
            if (stats) stats->rejections = rejections;
            return p;
        }
        if (++rejections >= kMaxRejections) throw SceneTooClutteredError(rejections);
    }
}

}  // namespace tfield::speed
