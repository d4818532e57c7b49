#pragma once

#include <string>
#include <vector>

#include "tfield/net.hpp"
#include "tfield/plan.hpp"
#include "tfield/speed.hpp"

namespace tfield::oracle {

/// Uniform 2D/3D grid of per-node speeds; nz == 1 means a 2D slice.
struct SpeedGrid {
    Eigen::Vector3i dims{0, 0, 1};
    double h = 0.01;
    Eigen::Vector3d origin{0, 0, 0};
    std::vector<double> values;  // x-major

    bool is2d() const { return dims.z() == 1; }
    std::size_t index(int ix, int iy, int iz) const {
        return std::size_t((iz * dims.y() + iy) * dims.x() + ix);
    }
    double at(int ix, int iy, int iz) const { return values[index(ix, iy, iz)]; }
    Eigen::Vector3d position(int ix, int iy, int iz) const {
        return origin + h * Eigen::Vector3d(ix, iy, iz);
    }
};

enum class NodeState : std::uint8_t { Far, Narrow, Frozen };

struct TimeGrid {
    Eigen::Vector3i dims{0, 0, 1};
    double h = 0.01;
    Eigen::Vector3d origin{0, 0, 0};
    std::vector<double> values;
    std::vector<NodeState> states;
    Eigen::Vector3i source{0, 0, 0};

    std::size_t index(int ix, int iy, int iz) const {
        return std::size_t((iz * dims.y() + iy) * dims.x() + ix);
    }
    double at(int ix, int iy, int iz) const { return values[index(ix, iy, iz)]; }
    Eigen::Vector3d position(int ix, int iy, int iz) const {
        return origin + h * Eigen::Vector3d(ix, iy, iz);
    }
    /// Bi/trilinear interpolation of arrival time at a point.
    double interpolate(const Eigen::Vector3d& p) const;
};

/// First-order upwind Fast Marching from a point source. Freeze order is
/// asserted non-decreasing. The neighbor order flag exists to show the
/// solution does not depend on traversal order.
TimeGrid fmm_solve(const SpeedGrid& speed, const Eigen::Vector3i& source,
                   bool reverse_neighbor_order = false);

/// 8-connected (2D) / 26-connected (3D) shortest arrival times with edge
/// cost = edge length * 2 / (S_a + S_b).
TimeGrid dijkstra_solve(const SpeedGrid& speed, const Eigen::Vector3i& source);

struct BacktrackStallError : Error {
    BacktrackStallError() : Error("backtrack stalled at a non-source local minimum") {}
};

/// Steepest descent on interpolated T from a start node to the source,
/// step h/2.
plan::Trajectory backtrack_path(const TimeGrid& times, const Eigen::Vector3i& start);

/// Speed grid over a translation slice at fixed orientation, reusing the
/// ground-truth speed model node by node.
SpeedGrid build_speed_grid(const geom::Scene& scene, const std::string& object_id,
                           const Eigen::Vector3d& orientation, double h,
                           const speed::SpeedParams& params,
                           const speed::ReachabilityModel& reach, bool planar,
                           double fixed_z = 0.0);

struct CompareReport {
    double mean_rel_time_error = 0;
    double max_rel_time_error = 0;
    double mean_path_length_ratio = 0;  // learned / oracle, when paths requested
    int probes = 0;
    int paths_compared = 0;
};

/// Learned field vs grid oracle. Every probe's first pose must sit at the
/// grid source (within one cell). With compare_paths, marched trajectories
/// are measured against grid backtracking.
CompareReport compare_fields(const net::TimeFieldModel& model,
                             const geom::PointCloud& object_cloud, const TimeGrid& times,
                             const std::vector<std::pair<geom::Pose, geom::Pose>>& probes,
                             bool compare_paths = false,
                             const plan::MarchParams& march = {});

void save_time_grid(const TimeGrid& grid, const std::string& path);
TimeGrid load_time_grid(const std::string& path);

}  // namespace tfield::oracle
