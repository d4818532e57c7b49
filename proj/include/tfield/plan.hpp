#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tfield/net.hpp"

namespace tfield::plan {

enum class TrajectorySource { LearnedField, OracleBacktrack };

struct Trajectory {
    std::vector<geom::Pose> poses;
    double length_m = 0;  // translation arc length
    TrajectorySource source = TrajectorySource::LearnedField;

    static double translation_length(const std::vector<geom::Pose>& poses);
};

struct Grasp {
    std::string id;
    geom::Pose object_frame_transform;  // gripper relative to object
    double stability_score = 0;
};

/// Grasp list file: "id x y z roll pitch yaw score" per line.
std::vector<Grasp> load_grasps(const std::string& path);
void sort_grasps(std::vector<Grasp>& grasps);  // descending stability

struct IKProvider {
    virtual ~IKProvider() = default;
    virtual bool feasible(const geom::Pose& object_pose, const Grasp& grasp) const = 0;
};

/// Everything reachable.
struct AlwaysFeasibleIK final : IKProvider {
    bool feasible(const geom::Pose&, const Grasp&) const override { return true; }
};

/// Gripper position (object pose composed with the grasp transform) must lie
/// in a spherical shell around the robot base and inside the workspace.
struct ShellIK final : IKProvider {
    Eigen::Vector3d base{0, 0, 0};
    double r_inner = 0.15;
    double r_outer = 0.9;
    Eigen::AlignedBox3d workspace;

    bool feasible(const geom::Pose& object_pose, const Grasp& grasp) const override;
};

struct PredicateIK final : IKProvider {
    std::function<bool(const geom::Pose&, const Grasp&)> pred;
    bool feasible(const geom::Pose& p, const Grasp& g) const override { return pred(p, g); }
};

struct MarchParams {
    double eta = 0.03;
    double d_s = 0.05;
    int max_iters = 2000;
};

struct NoConvergenceError : Error {
    std::vector<geom::Pose> start_chain;
    std::vector<geom::Pose> goal_chain;
    NoConvergenceError(std::vector<geom::Pose> s, std::vector<geom::Pose> g)
        : Error("bidirectional marching did not meet within iteration budget"),
          start_chain(std::move(s)), goal_chain(std::move(g)) {}
};

struct DegenerateDecoupleError : Error {
    DegenerateDecoupleError() : Error("all rotation components already match goal") {}
};

struct PlanFailureError : Error {
    geom::Pose deepest_infeasible;
    double best_coverage = 0;
    PlanFailureError(const geom::Pose& p, double coverage)
        : Error("no feasible grasp assignment found"),
          deepest_infeasible(p), best_coverage(coverage) {}
};

/// Eq. 13: both endpoints descend the time field toward each other until
/// their weighted distance drops below d_s; the final gap is bridged by
/// interpolation.
Trajectory march_bidirectional(const net::TimeFieldModel& model,
                               const geom::PointCloud& object_cloud,
                               const geom::Pose& p_s, const geom::Pose& p_g,
                               const MarchParams& params = {});

/// In-place rotation intermediate: at the start translation, set the
/// rotation axis farthest (wrapped) from its goal value to the goal value.
geom::Pose decouple(const geom::Pose& p_s, const geom::Pose& p_g);

struct PlanSegment {
    Trajectory trajectory;
    Grasp grasp;
};

struct PlanResult {
    std::vector<PlanSegment> segments;
    std::vector<geom::Pose> intermediate_poses;  // regrasp locations
    double total_length_m = 0;
    double plan_time_s = 0;
};

PlanResult omanip(const net::TimeFieldModel& model, const geom::Scene& scene,
                  const std::string& object_id, const geom::Pose& p_s,
                  const geom::Pose& p_g, const std::vector<Grasp>& grasps,
                  const IKProvider& ik, int depth_limit = 3,
                  const MarchParams& march = {});

struct SmoothResult {
    Trajectory trajectory;
    bool reverted = false;  // smoothing would have increased penetration
};

/// Moving average with pinned endpoints; window must be odd. When a scene is
/// given, reverts if the smoothed path gets closer to obstacles than the
/// original's worst pose.
SmoothResult smooth(const Trajectory& traj, int window,
                    const geom::Scene* scene = nullptr,
                    const std::string& object_id = {});

struct ValidationReport {
    bool collision_free = true;
    double min_distance = std::numeric_limits<double>::infinity();
    double length_m = 0;
    int samples = 0;
};

ValidationReport validate_trajectory(const geom::Scene& scene, const std::string& object_id,
                                     const Trajectory& traj, double resolution_m);

/// Linear pose interpolation with wrapped rotations, t in [0, 1].
geom::Pose interpolate_pose(const geom::Pose& a, const geom::Pose& b, double t);

}  // namespace tfield::plan
