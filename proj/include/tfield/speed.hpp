#pragma once

#include <functional>
#include <random>
#include <string>

#include "tfield/geom.hpp"

namespace tfield::speed {

struct SpeedParams {
    double s_const = 1.0;
    double d_min = 0.05;   // m
    double d_max = 0.3;    // m
    double alpha = 1.0;    // scheduling coefficient, [0, 1.05]

    bool valid() const { return s_const > 0 && d_min > 0 && d_min < d_max; }
};

/// Binary reachability gate. The default shell model tests the object's
/// translation against a spherical shell around a robot base.
struct ReachabilityModel {
    enum class Kind { AlwaysReachable, SphericalShell, Custom };
    Kind kind = Kind::AlwaysReachable;
    Eigen::Vector3d center{0, 0, 0};
    double r_inner = 0.15;
    double r_outer = 0.9;
    std::function<bool(const geom::Pose&)> predicate;

    static ReachabilityModel always();
    static ReachabilityModel shell(const Eigen::Vector3d& center, double r_inner,
                                   double r_outer);
    static ReachabilityModel custom(std::function<bool(const geom::Pose&)> pred);

    int operator()(const geom::Pose& p) const;  // exactly 0 or 1
};

/// S* = (s_const/d_max) * clip(d * IK_r, d_min, d_max).
double ground_truth_speed(const geom::Scene& scene, const std::string& object_id,
                          const geom::Pose& pose, const SpeedParams& params,
                          const ReachabilityModel& reach);

/// Same, with the obstacle distance already computed.
double speed_from_distance(double distance, int gate, const SpeedParams& params);

/// Progressive schedule: (1 - alpha) * s_const + alpha * s_star.
double scheduled_speed(double s_star, double alpha, double s_const = 1.0);

/// Which pose components vary during sampling; inactive ones stay zero.
struct PoseMask {
    bool translation[3] = {true, true, true};
    bool rotation[3] = {true, true, true};

    static PoseMask full();
    static PoseMask planar_xy();       // x, y only
    static PoseMask translation_only();
};

struct SampleStats {
    int rejections = 0;
};

/// Uniform rejection sampling over workspace bounds x wrapped angles until
/// the transformed object cloud clears the obstacles (d > 0).
geom::Pose sample_valid_pose(const geom::Scene& scene, const std::string& object_id,
                             std::mt19937_64& rng, const PoseMask& mask,
                             SampleStats* stats = nullptr);

}  // namespace tfield::speed
