#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tfield/errors.hpp"

namespace tfield::geom {

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Wrapped absolute angular difference in [0, pi].
double angular_distance(double a, double b);

/// Object pose: translation (m) + intrinsic Z-Y-X Euler rotation
/// (roll, pitch, yaw), each component wrapped to (-pi, pi].
struct Pose {
    Eigen::Vector3d translation{0, 0, 0};
    Eigen::Vector3d rotation{0, 0, 0};  // roll, pitch, yaw

    Pose() = default;
    Pose(const Eigen::Vector3d& t, const Eigen::Vector3d& r);
    Pose(double x, double y, double z, double roll, double pitch, double yaw);

    /// R = Rz(yaw) * Ry(pitch) * Rx(roll).
    Eigen::Matrix3d rotation_matrix() const;

    Pose inverse() const;
    Pose compose(const Pose& rhs) const;  // this ∘ rhs

    Eigen::Matrix<double, 6, 1> as_vector() const;
    static Pose from_vector(const Eigen::Matrix<double, 6, 1>& v);

    bool isApprox(const Pose& o, double tol = 1e-12) const;
};

/// Translation + weighted wrapped-rotation distance. w_rot in m/rad.
double pose_distance(const Pose& a, const Pose& b, double w_rot);

/// Euler Z-Y-X angles from a rotation matrix, pitch in [-pi/2, pi/2].
Eigen::Vector3d euler_from_matrix(const Eigen::Matrix3d& R);

struct PointCloud {
    Eigen::Matrix3Xd points;  // one column per point, meters

    PointCloud() = default;
    explicit PointCloud(Eigen::Matrix3Xd pts) : points(std::move(pts)) {}

    std::size_t count() const { return static_cast<std::size_t>(points.cols()); }
    bool empty() const { return points.cols() == 0; }
    Eigen::Vector3d point(std::size_t i) const { return points.col(static_cast<Eigen::Index>(i)); }
};

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

/// Greedy farthest-point sampling, tie-break by lowest index. If the cloud
/// has fewer than k distinct points the output is padded with the seed point
/// and *padded is set.
PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                 std::size_t seed_index, bool* padded = nullptr);

/// Uniform grid of precomputed min obstacle distances.
struct DistanceGrid {
    Eigen::Vector3d origin{0, 0, 0};
    double spacing = 0.01;
    Eigen::Vector3i dims{0, 0, 0};
    std::vector<double> values;  // x-major: idx = (iz*ny + iy)*nx + ix

    double at(int ix, int iy, int iz) const {
        return values[static_cast<std::size_t>((iz * dims.y() + iy) * dims.x() + ix)];
    }
    /// Trilinear interpolation, clamped to the grid extents.
    double interpolate(const Eigen::Vector3d& p) const;
};

DistanceGrid build_distance_grid(const PointCloud& obstacles,
                                 const Eigen::AlignedBox3d& bounds,
                                 double spacing);

struct Scene {
    PointCloud obstacle_cloud;
    std::optional<DistanceGrid> distance_grid;
    Eigen::AlignedBox3d workspace_bounds;
    std::map<std::string, PointCloud> objects;

    const PointCloud& object(const std::string& id) const;
};

struct DistanceResult {
    double distance = 0;
    bool from_grid = false;
};

/// Min over object points of min distance to the obstacle set. Uses the
/// precomputed grid when present, brute force otherwise.
DistanceResult min_obstacle_distance(const Scene& scene, const PointCloud& cloud);

/// Exact pairwise version, independent of any grid.
double brute_force_min_distance(const PointCloud& a, const PointCloud& b);

// --- file formats ---

/// "x y z" per line, '#' comments; rejects non-finite values.
PointCloud load_cloud(const std::string& path);
void save_cloud(const PointCloud& cloud, const std::string& path);

/// Key-value scene file: obstacle_cloud, bounds, grid_spacing, object entries.
Scene load_scene(const std::string& path);

/// Stable FNV-1a hash over obstacle geometry, bounds, and the object catalog.
std::uint64_t scene_hash(const Scene& scene);

}  // namespace tfield::geom
