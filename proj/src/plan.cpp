#include "tfield/plan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tfield::plan {

double Trajectory::translation_length(const std::vector<geom::Pose>& poses) {
    double len = 0;
    for (std::size_t i = 1; i < poses.size(); ++i)
        len += (poses[i].translation - poses[i - 1].translation).norm();
    return len;
}

std::vector<Grasp> load_grasps(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open grasp file: " + path);
    std::vector<Grasp> grasps;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        Grasp g;
        double x, y, z, roll, pitch, yaw;
        if (!(ss >> g.id)) continue;
        if (!(ss >> x >> y >> z >> roll >> pitch >> yaw >> g.stability_score))
            throw FileError("malformed grasp line: " + line);
        g.object_frame_transform = geom::Pose(x, y, z, roll, pitch, yaw);
        grasps.push_back(std::move(g));
    }
    sort_grasps(grasps);
    return grasps;
}

void sort_grasps(std::vector<Grasp>& grasps) {
    std::stable_sort(grasps.begin(), grasps.end(), [](const Grasp& a, const Grasp& b) {
        return a.stability_score > b.stability_score;
    });
}

bool ShellIK::feasible(const geom::Pose& object_pose, const Grasp& grasp) const {
    geom::Pose gripper = object_pose.compose(grasp.object_frame_transform);
    double r = (gripper.translation - base).norm();
    if (r < r_inner || r > r_outer) return false;
    return workspace.isEmpty() || workspace.contains(gripper.translation);
}

geom::Pose interpolate_pose(const geom::Pose& a, const geom::Pose& b, double t) {
    geom::Pose out;
    out.translation = a.translation + t * (b.translation - a.translation);
    for (int i = 0; i < 3; ++i)
        out.rotation[i] =
            geom::wrap_angle(a.rotation[i] + t * geom::wrap_angle(b.rotation[i] - a.rotation[i]));
    return out;
}

namespace {

geom::Pose march_step(const geom::Pose& p, const Eigen::Matrix<double, 6, 1>& grad,
                      double eta, double s_cap) {
    double n = grad.norm();
    double s = n > 1e-12 ? std::min(1.0 / n, s_cap) : s_cap;  // speed capped at s_const
    Eigen::Matrix<double, 6, 1> v = p.as_vector() - eta * s * s * grad;
    return geom::Pose::from_vector(v);  // Pose ctor re-wraps rotations
}

}  // namespace

Trajectory march_bidirectional(const net::TimeFieldModel& model,
                               const geom::PointCloud& object_cloud,
                               const geom::Pose& p_s, const geom::Pose& p_g,
                               const MarchParams& params) {
    if (params.eta <= 0 || params.d_s <= 0)
        throw InvalidInputError("march requires eta > 0 and d_s > 0");
    const double w_rot = model.config.w_rot;
    const double s_const = model.train_speed_params.s_const;

    std::vector<geom::Pose> start_chain{p_s}, goal_chain{p_g};
    geom::Pose a = p_s, b = p_g;
    bool met = geom::pose_distance(a, b, w_rot) < params.d_s;

    for (int iter = 0; iter < params.max_iters && !met; ++iter) {
        net::InputGradients g = net::input_gradients(model, object_cloud, a, b);
        a = march_step(a, g.d_ps, params.eta, s_const);
        b = march_step(b, g.d_pg, params.eta, s_const);
        start_chain.push_back(a);
        goal_chain.push_back(b);
        met = geom::pose_distance(a, b, w_rot) < params.d_s;
    }
    if (!met) throw NoConvergenceError(std::move(start_chain), std::move(goal_chain));

    Trajectory traj;
    traj.poses = start_chain;
    // bridge the meeting gap at the marching step resolution
    double gap = geom::pose_distance(a, b, w_rot);
    int bridge = std::max(1, int(std::ceil(gap / (params.eta * s_const))));
    for (int j = 1; j < bridge; ++j)
        traj.poses.push_back(interpolate_pose(a, b, double(j) / bridge));
    for (auto it = goal_chain.rbegin(); it != goal_chain.rend(); ++it)
        traj.poses.push_back(*it);
    traj.length_m = Trajectory::translation_length(traj.poses);
    traj.source = TrajectorySource::LearnedField;
    return traj;
}

geom::Pose decouple(const geom::Pose& p_s, const geom::Pose& p_g) {
    int best_axis = -1;
    double best_d = 0;
    for (int i = 0; i < 3; ++i) {  // roll < pitch < yaw tie-break
        double d = geom::angular_distance(p_s.rotation[i], p_g.rotation[i]);
        if (d > best_d) {
            best_d = d;
            best_axis = i;
        }
    }
    if (best_axis < 0 || best_d < 1e-12) throw DegenerateDecoupleError();
    geom::Pose p_c = p_s;
    p_c.rotation[best_axis] = p_g.rotation[best_axis];
    return p_c;
}

namespace {

PlanResult omanip_impl(const net::TimeFieldModel& model, const geom::Scene& scene,
                       const std::string& object_id, const geom::Pose& p_s,
                       const geom::Pose& p_g, const std::vector<Grasp>& grasps,
                       const IKProvider& ik, int depth_limit, const MarchParams& march) {
    const geom::PointCloud& cloud = scene.object(object_id);
    Trajectory traj = march_bidirectional(model, cloud, p_s, p_g, march);

    double best_coverage = 0;
    geom::Pose deepest = p_s;
    for (const Grasp& grasp : grasps) {
        std::size_t ok = 0;
        const geom::Pose* first_bad = nullptr;
        for (const auto& pose : traj.poses) {
            if (ik.feasible(pose, grasp)) {
                ++ok;
            } else if (!first_bad) {
                first_bad = &pose;
            }
        }
        if (ok == traj.poses.size()) {
            PlanResult result;
            result.segments.push_back({std::move(traj), grasp});
            result.total_length_m = result.segments[0].trajectory.length_m;
            return result;
        }
        double coverage = double(ok) / double(traj.poses.size());
        if (coverage > best_coverage) {
            best_coverage = coverage;
            if (first_bad) deepest = *first_bad;
        }
    }

    if (depth_limit <= 0) throw PlanFailureError(deepest, best_coverage);
    geom::Pose p_c;
    try {
        p_c = decouple(p_s, p_g);
    } catch (const DegenerateDecoupleError&) {
        throw PlanFailureError(deepest, best_coverage);
    }

    PlanResult left =
        omanip_impl(model, scene, object_id, p_s, p_c, grasps, ik, depth_limit - 1, march);
    PlanResult right =
        omanip_impl(model, scene, object_id, p_c, p_g, grasps, ik, depth_limit - 1, march);

    PlanResult combined;
    combined.segments = std::move(left.segments);
    for (auto& seg : right.segments) combined.segments.push_back(std::move(seg));
    combined.intermediate_poses = std::move(left.intermediate_poses);
    combined.intermediate_poses.push_back(p_c);
    for (auto& p : right.intermediate_poses) combined.intermediate_poses.push_back(p);
    combined.total_length_m = 0;
    for (const auto& seg : combined.segments)
        combined.total_length_m += seg.trajectory.length_m;
    return combined;
}

}  // namespace

PlanResult omanip(const net::TimeFieldModel& model, const geom::Scene& scene,
                  const std::string& object_id, const geom::Pose& p_s,
                  const geom::Pose& p_g, const std::vector<Grasp>& grasps,
                  const IKProvider& ik, int depth_limit, const MarchParams& march) {
    if (grasps.empty()) throw InvalidInputError("omanip requires at least one grasp");
    if (!std::is_sorted(grasps.begin(), grasps.end(), [](const Grasp& a, const Grasp& b) {
            return a.stability_score > b.stability_score;
        }))
        throw InvalidInputError("grasps must be sorted by descending stability score");

    auto t0 = std::chrono::steady_clock::now();
    PlanResult result =
        omanip_impl(model, scene, object_id, p_s, p_g, grasps, ik, depth_limit, march);
    result.plan_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

namespace {

double worst_pose_distance(const geom::Scene& scene, const std::string& object_id,
                           const std::vector<geom::Pose>& poses) {
    const geom::PointCloud& cloud = scene.object(object_id);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& p : poses)
        worst = std::min(worst,
                         geom::min_obstacle_distance(scene, geom::transform_cloud(cloud, p))
                             .distance);
    return worst;
}

}  // namespace

SmoothResult smooth(const Trajectory& traj, int window, const geom::Scene* scene,
                    const std::string& object_id) {
    if (window < 1 || window % 2 == 0)
        throw InvalidInputError("smoothing window must be odd and >= 1");
    if (window == 1 || traj.poses.size() < 3) return {traj, false};

    const int half = window / 2;
    const int n = int(traj.poses.size());
    std::vector<geom::Pose> out(traj.poses);
    for (int i = 1; i < n - 1; ++i) {
        int lo = std::max(0, i - half), hi = std::min(n - 1, i + half);
        Eigen::Vector3d t = Eigen::Vector3d::Zero();
        Eigen::Vector3d r_off = Eigen::Vector3d::Zero();
        for (int j = lo; j <= hi; ++j) {
            t += traj.poses[std::size_t(j)].translation;
            for (int k = 0; k < 3; ++k)
                r_off[k] += geom::wrap_angle(traj.poses[std::size_t(j)].rotation[k] -
                                             traj.poses[std::size_t(i)].rotation[k]);
        }
        double inv = 1.0 / double(hi - lo + 1);
        out[std::size_t(i)].translation = t * inv;
        for (int k = 0; k < 3; ++k)
            out[std::size_t(i)].rotation[k] =
                geom::wrap_angle(traj.poses[std::size_t(i)].rotation[k] + r_off[k] * inv);
    }

    if (scene && !object_id.empty()) {
        double before = worst_pose_distance(*scene, object_id, traj.poses);
        double after = worst_pose_distance(*scene, object_id, out);
        if (after < before - 1e-9) return {traj, true};
    }

    Trajectory smoothed;
    smoothed.poses = std::move(out);
    smoothed.length_m = Trajectory::translation_length(smoothed.poses);
    smoothed.source = traj.source;
    return {std::move(smoothed), false};
}

ValidationReport validate_trajectory(const geom::Scene& scene, const std::string& object_id,
                                     const Trajectory& traj, double resolution_m) {
    if (resolution_m <= 0) throw InvalidInputError("resolution must be positive");
    ValidationReport report;
    const geom::PointCloud& cloud = scene.object(object_id);
    const bool have_obstacles =
        scene.distance_grid.has_value() || !scene.obstacle_cloud.empty();

    geom::Pose prev;
    bool first = true;
    for (std::size_t i = 0; i + 1 < traj.poses.size(); ++i) {
        const geom::Pose& a = traj.poses[i];
        const geom::Pose& b = traj.poses[i + 1];
        double gap = (b.translation - a.translation).norm();
        int steps = std::max(1, int(std::ceil(gap / resolution_m)));
        for (int j = (i == 0 ? 0 : 1); j <= steps; ++j) {
            geom::Pose p = interpolate_pose(a, b, double(j) / steps);
            if (!first) report.length_m += (p.translation - prev.translation).norm();
            prev = p;
            first = false;
            ++report.samples;
            if (have_obstacles) {
                double d =
                    geom::min_obstacle_distance(scene, geom::transform_cloud(cloud, p))
                        .distance;
                report.min_distance = std::min(report.min_distance, d);
                if (d <= 0) report.collision_free = false;
            }
        }
    }
    if (traj.poses.size() == 1) report.samples = 1;
    return report;
}

}  // namespace tfield::plan
