#include "tfield/geom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace tfield::geom {

double wrap_angle(double a) {
    double w = std::fmod(a + M_PI, 2.0 * M_PI);
    if (w <= 0) w += 2.0 * M_PI;
    return w - M_PI;  // (-pi, pi]
}

double angular_distance(double a, double b) {
    // symmetric by construction: wrap_angle's shifted fmod is not
    double d = std::fmod(std::abs(a - b), 2.0 * M_PI);
    return d > M_PI ? 2.0 * M_PI - d : d;
}

Pose::Pose(const Eigen::Vector3d& t, const Eigen::Vector3d& r) : translation(t) {
    for (int i = 0; i < 3; ++i) rotation[i] = wrap_angle(r[i]);
}

Pose::Pose(double x, double y, double z, double roll, double pitch, double yaw)
    : Pose(Eigen::Vector3d(x, y, z), Eigen::Vector3d(roll, pitch, yaw)) {}

Eigen::Matrix3d Pose::rotation_matrix() const {
    const double cr = std::cos(rotation[0]), sr = std::sin(rotation[0]);
    const double cp = std::cos(rotation[1]), sp = std::sin(rotation[1]);
    const double cy = std::cos(rotation[2]), sy = std::sin(rotation[2]);
    Eigen::Matrix3d Rx, Ry, Rz;
    Rx << 1, 0, 0, 0, cr, -sr, 0, sr, cr;
    Ry << cp, 0, sp, 0, 1, 0, -sp, 0, cp;
    Rz << cy, -sy, 0, sy, cy, 0, 0, 0, 1;
    return Rz * Ry * Rx;
}

Eigen::Vector3d euler_from_matrix(const Eigen::Matrix3d& R) {
    // Z-Y-X: R = Rz(yaw) Ry(pitch) Rx(roll)
    double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
    double roll, yaw;
    if (std::abs(R(2, 0)) < 1.0 - 1e-12) {
        roll = std::atan2(R(2, 1), R(2, 2));
        yaw = std::atan2(R(1, 0), R(0, 0));
    } else {
        // gimbal lock: fold everything into roll
        roll = std::atan2(-R(1, 2), R(1, 1));
        yaw = 0;
    }
    return {roll, pitch, yaw};
}

Pose Pose::inverse() const {
    Eigen::Matrix3d Rt = rotation_matrix().transpose();
    return Pose(-(Rt * translation), euler_from_matrix(Rt));
}

Pose Pose::compose(const Pose& rhs) const {
    Eigen::Matrix3d R = rotation_matrix();
    Eigen::Matrix3d Rc = R * rhs.rotation_matrix();
    return Pose(R * rhs.translation + translation, euler_from_matrix(Rc));
}

Eigen::Matrix<double, 6, 1> Pose::as_vector() const {
    Eigen::Matrix<double, 6, 1> v;
    v << translation, rotation;
    return v;
}

Pose Pose::from_vector(const Eigen::Matrix<double, 6, 1>& v) {
    return Pose(v.head<3>(), v.tail<3>());
}

bool Pose::isApprox(const Pose& o, double tol) const {
    if ((translation - o.translation).lpNorm<Eigen::Infinity>() > tol) return false;
    for (int i = 0; i < 3; ++i)
        if (angular_distance(rotation[i], o.rotation[i]) > tol) return false;
    return true;
}

double pose_distance(const Pose& a, const Pose& b, double w_rot) {
    double s = (a.translation - b.translation).squaredNorm();
    for (int i = 0; i < 3; ++i) {
        double d = angular_distance(a.rotation[i], b.rotation[i]);
        s += w_rot * w_rot * d * d;
    }
    return std::sqrt(s);
}

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
    if (cloud.empty()) throw EmptyCloudError();
    Eigen::Matrix3Xd out = pose.rotation_matrix() * cloud.points;
    out.colwise() += pose.translation;
    return PointCloud(std::move(out));
}

PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                 std::size_t seed_index, bool* padded) {
    const std::size_t n = cloud.count();
    if (k > n) throw InsufficientPointsError(k, n);
    if (seed_index >= n) throw InvalidInputError("fps seed index out of range");
    if (padded) *padded = false;
    if (k == n) return cloud;

    std::vector<std::size_t> chosen;
    chosen.reserve(k);
    chosen.push_back(seed_index);
    Eigen::VectorXd min_d2 =
        (cloud.points.colwise() - cloud.points.col(static_cast<Eigen::Index>(seed_index)))
            .colwise().squaredNorm();

    while (chosen.size() < k) {
        Eigen::Index best = -1;
        double best_d2 = -1;
        for (Eigen::Index i = 0; i < min_d2.size(); ++i) {
            if (min_d2[i] > best_d2) {  // strict: lowest index wins ties
                best_d2 = min_d2[i];
                best = i;
            }
        }
        if (best_d2 <= 0) {
            // only duplicates of already-chosen points remain
            if (padded) *padded = true;
            while (chosen.size() < k) chosen.push_back(seed_index);
            break;
        }
        chosen.push_back(static_cast<std::size_t>(best));
        Eigen::VectorXd d2 =
            (cloud.points.colwise() - cloud.points.col(best)).colwise().squaredNorm();
        min_d2 = min_d2.cwiseMin(d2);
    }

    Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i)
        out.col(static_cast<Eigen::Index>(i)) =
            cloud.points.col(static_cast<Eigen::Index>(chosen[i]));
    return PointCloud(std::move(out));
}

double DistanceGrid::interpolate(const Eigen::Vector3d& p) const {
    Eigen::Vector3d g = (p - origin) / spacing;
    double fx = std::clamp(g.x(), 0.0, double(dims.x() - 1));
    double fy = std::clamp(g.y(), 0.0, double(dims.y() - 1));
    double fz = std::clamp(g.z(), 0.0, double(dims.z() - 1));
    int ix = std::min(int(fx), dims.x() - 2 >= 0 ? dims.x() - 2 : 0);
    int iy = std::min(int(fy), dims.y() - 2 >= 0 ? dims.y() - 2 : 0);
    int iz = std::min(int(fz), dims.z() - 2 >= 0 ? dims.z() - 2 : 0);
    ix = std::max(ix, 0); iy = std::max(iy, 0); iz = std::max(iz, 0);
    double tx = dims.x() > 1 ? fx - ix : 0;
    double ty = dims.y() > 1 ? fy - iy : 0;
    double tz = dims.z() > 1 ? fz - iz : 0;
    int jx = std::min(ix + 1, dims.x() - 1);
    int jy = std::min(iy + 1, dims.y() - 1);
    int jz = std::min(iz + 1, dims.z() - 1);

    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    double c00 = lerp(at(ix, iy, iz), at(jx, iy, iz), tx);
    double c10 = lerp(at(ix, jy, iz), at(jx, jy, iz), tx);
    double c01 = lerp(at(ix, iy, jz), at(jx, iy, jz), tx);
    double c11 = lerp(at(ix, jy, jz), at(jx, jy, jz), tx);
    return lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz);
}

DistanceGrid build_distance_grid(const PointCloud& obstacles,
                                 const Eigen::AlignedBox3d& bounds,
                                 double spacing) {
    if (obstacles.empty()) throw EmptyCloudError();
    DistanceGrid grid;
    grid.origin = bounds.min();
    grid.spacing = spacing;
    Eigen::Vector3d extent = bounds.max() - bounds.min();
    for (int i = 0; i < 3; ++i)
        grid.dims[i] = std::max(2, int(std::ceil(extent[i] / spacing)) + 1);
    grid.values.resize(std::size_t(grid.dims.x()) * grid.dims.y() * grid.dims.z());

    for (int iz = 0; iz < grid.dims.z(); ++iz)
        for (int iy = 0; iy < grid.dims.y(); ++iy)
            for (int ix = 0; ix < grid.dims.x(); ++ix) {
                Eigen::Vector3d p = grid.origin + spacing * Eigen::Vector3d(ix, iy, iz);
                double d2 = (obstacles.points.colwise() - p).colwise().squaredNorm().minCoeff();
                grid.values[std::size_t((iz * grid.dims.y() + iy) * grid.dims.x() + ix)] =
                    std::sqrt(d2);
            }
    return grid;
}

const PointCloud& Scene::object(const std::string& id) const {
    auto it = objects.find(id);
    if (it == objects.end()) throw UnknownObjectError(id);
    return it->second;
}

double brute_force_min_distance(const PointCloud& a, const PointCloud& b) {
    if (a.empty() || b.empty()) throw EmptyCloudError();
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < a.points.cols(); ++i) {
        double d2 = (b.points.colwise() - a.points.col(i)).colwise().squaredNorm().minCoeff();
        best = std::min(best, d2);
    }
    return std::sqrt(best);
}

DistanceResult min_obstacle_distance(const Scene& scene, const PointCloud& cloud) {
    if (cloud.empty()) throw EmptyCloudError();
    if (scene.distance_grid) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < cloud.points.cols(); ++i)
            best = std::min(best, scene.distance_grid->interpolate(cloud.points.col(i)));
        return {best, true};
    }
    if (scene.obstacle_cloud.empty()) throw MissingObstaclesError();
    return {brute_force_min_distance(cloud, scene.obstacle_cloud), false};
}

PointCloud load_cloud(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open cloud file: " + path);
    std::vector<Eigen::Vector3d> pts;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        double x, y, z;
        if (!(ss >> x)) continue;  // blank / comment-only line
        if (!(ss >> y >> z)) throw FileError("malformed cloud line in " + path + ": " + line);
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
            throw FileError("non-finite coordinate in " + path);
        pts.emplace_back(x, y, z);
    }
    Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i];
    return PointCloud(std::move(m));
}

void save_cloud(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write cloud file: " + path);
    out.precision(17);
    for (Eigen::Index i = 0; i < cloud.points.cols(); ++i)
        out << cloud.points(0, i) << ' ' << cloud.points(1, i) << ' '
            << cloud.points(2, i) << '\n';
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open scene file: " + path);
    Scene scene;
    double grid_spacing = 0;
    bool have_bounds = false;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        if (key == "obstacle_cloud") {
            std::string p;
            ss >> p;
            scene.obstacle_cloud = load_cloud(p);
        } else if (key == "bounds") {
            Eigen::Vector3d lo, hi;
            if (!(ss >> lo.x() >> lo.y() >> lo.z() >> hi.x() >> hi.y() >> hi.z()))
                throw FileError("malformed bounds in " + path);
            scene.workspace_bounds = Eigen::AlignedBox3d(lo, hi);
            have_bounds = true;
        } else if (key == "grid_spacing") {
            ss >> grid_spacing;
        } else if (key == "object") {
            std::string id, p;
            if (!(ss >> id >> p)) throw FileError("malformed object entry in " + path);
            if (scene.objects.count(id)) throw FileError("duplicate object id: " + id);
            scene.objects[id] = load_cloud(p);
        } else {
            throw FileError("unknown scene key '" + key + "' in " + path);
        }
    }
    if (!have_bounds) throw FileError("scene file missing bounds: " + path);
    if (grid_spacing > 0 && !scene.obstacle_cloud.empty())
        scene.distance_grid =
            build_distance_grid(scene.obstacle_cloud, scene.workspace_bounds, grid_spacing);
    return scene;
}

namespace {
void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
}
void hash_double(std::uint64_t& h, double d) { hash_bytes(h, &d, sizeof(d)); }
void hash_cloud(std::uint64_t& h, const PointCloud& c) {
    for (Eigen::Index i = 0; i < c.points.cols(); ++i)
        for (int j = 0; j < 3; ++j) hash_double(h, c.points(j, i));
}
}  // namespace

std::uint64_t scene_hash(const Scene& scene) {
    std::uint64_t h = 14695981039346656037ULL;
    hash_cloud(h, scene.obstacle_cloud);
    for (int j = 0; j < 3; ++j) hash_double(h, scene.workspace_bounds.min()[j]);
    for (int j = 0; j < 3; ++j) hash_double(h, scene.workspace_bounds.max()[j]);
    for (const auto& [id, cloud] : scene.objects) {
        hash_bytes(h, id.data(), id.size());
        hash_cloud(h, cloud);
    }
    return h;
}

}  // namespace tfield::geom
