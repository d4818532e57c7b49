#include "tfield/oracle.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

namespace tfield::oracle {

namespace {

double trilinear(const Eigen::Vector3i& dims, double h, const Eigen::Vector3d& origin,
                 const std::vector<double>& values, const Eigen::Vector3d& p) {
    auto at = [&](int ix, int iy, int iz) {
        return values[std::size_t((iz * dims.y() + iy) * dims.x() + ix)];
    };
    Eigen::Vector3d g = (p - origin) / h;
    auto prep = [&](double v, int n, int& i0, int& i1, double& t) {
        v = std::clamp(v, 0.0, double(n - 1));
        i0 = std::min(int(v), std::max(n - 2, 0));
        i1 = std::min(i0 + 1, n - 1);
        t = n > 1 ? v - i0 : 0.0;
    };
    int x0, x1, y0, y1, z0, z1;
    double tx, ty, tz;
    prep(g.x(), dims.x(), x0, x1, tx);
    prep(g.y(), dims.y(), y0, y1, ty);
    prep(g.z(), dims.z(), z0, z1, tz);
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    double c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), tx);
    double c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), tx);
    double c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), tx);
    double c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), tx);
    return lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz);
}

}  // namespace

double TimeGrid::interpolate(const Eigen::Vector3d& p) const {
    return trilinear(dims, h, origin, values, p);
}

TimeGrid fmm_solve(const SpeedGrid& speed, const Eigen::Vector3i& source,
                   bool reverse_neighbor_order) {
    const Eigen::Vector3i& d = speed.dims;
    if (source.x() < 0 || source.x() >= d.x() || source.y() < 0 || source.y() >= d.y() ||
        source.z() < 0 || source.z() >= d.z())
        throw InvalidInputError("fmm source out of bounds");

    TimeGrid out;
    out.dims = d;
    out.h = speed.h;
    out.origin = speed.origin;
    out.source = source;
    const std::size_t n = std::size_t(d.x()) * d.y() * d.z();
    out.values.assign(n, std::numeric_limits<double>::infinity());
    out.states.assign(n, NodeState::Far);

    const int axes = speed.is2d() ? 2 : 3;
    auto in_bounds = [&](const Eigen::Vector3i& v) {
        return v.x() >= 0 && v.x() < d.x() && v.y() >= 0 && v.y() < d.y() && v.z() >= 0 &&
               v.z() < d.z();
    };

    // upwind quadratic: sum_i (t - a_i)^2 = h^2 / S^2 over the axes used
    auto solve_node = [&](const Eigen::Vector3i& node) {
        std::vector<double> a;
        for (int axis = 0; axis < axes; ++axis) {
            double best = std::numeric_limits<double>::infinity();
            for (int sgn : {-1, 1}) {
                Eigen::Vector3i nb = node;
                nb[axis] += sgn;
                if (in_bounds(nb) && out.states[out.index(nb.x(), nb.y(), nb.z())] ==
                                         NodeState::Frozen)
                    best = std::min(best, out.values[out.index(nb.x(), nb.y(), nb.z())]);
            }
            if (std::isfinite(best)) a.push_back(best);
        }
        std::sort(a.begin(), a.end());
        double rhs = speed.h / speed.at(node.x(), node.y(), node.z());
        int k = int(a.size());
        while (k >= 1) {
            if (k == 1) return a[0] + rhs;
            double sum = 0, sum2 = 0;
            for (int i = 0; i < k; ++i) {
                sum += a[std::size_t(i)];
                sum2 += a[std::size_t(i)] * a[std::size_t(i)];
            }
            double disc = sum * sum - k * (sum2 - rhs * rhs);
            if (disc >= 0) {
                double t = (sum + std::sqrt(disc)) / k;
                if (t >= a[std::size_t(k - 1)]) return t;
            }
            --k;  // drop the largest neighbor and retry
        }
        return std::numeric_limits<double>::infinity();
    };

    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

    // seed a small disk of exact straight-line times around the source; a bare
    // point source caps first-order convergence and inflates the relative error
    // at the nodes next to it
    double extent = 0;
    for (int axis = 0; axis < axes; ++axis)
        extent = std::max(extent, (d[axis] - 1) * speed.h);
    const double seed_radius = std::max(2.0 * speed.h, 0.08 * extent);
    const int rc = int(std::ceil(seed_radius / speed.h));
    const double s_src = speed.at(source.x(), source.y(), source.z());
    const int rz = speed.is2d() ? 0 : rc;
    for (int dz = -rz; dz <= rz; ++dz)
        for (int dy = -rc; dy <= rc; ++dy)
            for (int dx = -rc; dx <= rc; ++dx) {
                Eigen::Vector3i node = source + Eigen::Vector3i(dx, dy, dz);
                if (!in_bounds(node)) continue;
                double dist = speed.h * std::sqrt(double(dx * dx + dy * dy + dz * dz));
                if (dist > seed_radius) continue;
                double s_bar = 0.5 * (s_src + speed.at(node.x(), node.y(), node.z()));
                std::size_t idx = out.index(node.x(), node.y(), node.z());
                out.values[idx] = dist / s_bar;
                out.states[idx] = NodeState::Narrow;
                heap.emplace(out.values[idx], idx);
            }

    double last_frozen = 0;
    while (!heap.empty()) {
        auto [t, idx] = heap.top();
        heap.pop();
        if (out.states[idx] == NodeState::Frozen || t > out.values[idx]) continue;
        out.states[idx] = NodeState::Frozen;
        assert(t >= last_frozen - 1e-9 && "FMM freeze order must be non-decreasing");
        last_frozen = t;

        Eigen::Vector3i node(int(idx % std::size_t(d.x())),
                             int((idx / std::size_t(d.x())) % std::size_t(d.y())),
                             int(idx / (std::size_t(d.x()) * d.y())));
        for (int step = 0; step < 2 * axes; ++step) {
            int s = reverse_neighbor_order ? 2 * axes - 1 - step : step;
            Eigen::Vector3i nb = node;
            nb[s / 2] += (s % 2 == 0) ? -1 : 1;
            if (!in_bounds(nb)) continue;
            std::size_t nidx = out.index(nb.x(), nb.y(), nb.z());
            if (out.states[nidx] == NodeState::Frozen) continue;
            double nt = solve_node(nb);
            if (nt < out.values[nidx]) {
                out.values[nidx] = nt;
                out.states[nidx] = NodeState::Narrow;
                heap.emplace(nt, nidx);
            }
        }
    }
    return out;
}

TimeGrid dijkstra_solve(const SpeedGrid& speed, const Eigen::Vector3i& source) {
    const Eigen::Vector3i& d = speed.dims;
    TimeGrid out;
    out.dims = d;
    out.h = speed.h;
    out.origin = speed.origin;
    out.source = source;
    const std::size_t n = std::size_t(d.x()) * d.y() * d.z();
    out.values.assign(n, std::numeric_limits<double>::infinity());
    out.states.assign(n, NodeState::Far);

    const int zlo = speed.is2d() ? 0 : -1, zhi = speed.is2d() ? 0 : 1;

    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    std::size_t src = out.index(source.x(), source.y(), source.z());
    out.values[src] = 0;
    heap.emplace(0.0, src);

    while (!heap.empty()) {
        auto [t, idx] = heap.top();
        heap.pop();
        if (out.states[idx] == NodeState::Frozen || t > out.values[idx]) continue;
        out.states[idx] = NodeState::Frozen;

        Eigen::Vector3i node(int(idx % std::size_t(d.x())),
                             int((idx / std::size_t(d.x())) % std::size_t(d.y())),
                             int(idx / (std::size_t(d.x()) * d.y())));
        double s_here = speed.at(node.x(), node.y(), node.z());
        for (int dz = zlo; dz <= zhi; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    Eigen::Vector3i nb = node + Eigen::Vector3i(dx, dy, dz);
                    if (nb.x() < 0 || nb.x() >= d.x() || nb.y() < 0 || nb.y() >= d.y() ||
                        nb.z() < 0 || nb.z() >= d.z())
                        continue;
                    std::size_t nidx = out.index(nb.x(), nb.y(), nb.z());
                    if (out.states[nidx] == NodeState::Frozen) continue;
                    double len = speed.h * std::sqrt(double(dx * dx + dy * dy + dz * dz));
                    double cost = len * 2.0 / (s_here + speed.at(nb.x(), nb.y(), nb.z()));
                    double nt = t + cost;
                    if (nt < out.values[nidx]) {
                        out.values[nidx] = nt;
                        heap.emplace(nt, nidx);
                    }
                }
    }
    return out;
}

plan::Trajectory backtrack_path(const TimeGrid& times, const Eigen::Vector3i& start) {
    const Eigen::Vector3i& d = times.dims;
    if (start.x() < 0 || start.x() >= d.x() || start.y() < 0 || start.y() >= d.y() ||
        start.z() < 0 || start.z() >= d.z())
        throw InvalidInputError("backtrack start out of bounds");

    const bool planar = d.z() == 1;
    Eigen::Vector3d x = times.position(start.x(), start.y(), start.z());
    Eigen::Vector3d src = times.position(times.source.x(), times.source.y(), times.source.z());

    plan::Trajectory traj;
    traj.source = plan::TrajectorySource::OracleBacktrack;
    traj.poses.push_back(geom::Pose(x, Eigen::Vector3d::Zero()));

    if ((x - src).norm() < 1e-12) {
        traj.length_m = 0;
        return traj;
    }

    const double step = times.h / 2.0;
    const double t_start = times.interpolate(x);
    const int max_iters = int(t_start / (0.05 * times.h)) + 1000;
    double best_t = t_start;
    int no_progress = 0;

    for (int iter = 0; iter < max_iters; ++iter) {
        if ((x - src).norm() <= times.h) {
            traj.poses.push_back(geom::Pose(src, Eigen::Vector3d::Zero()));
            traj.length_m = plan::Trajectory::translation_length(traj.poses);
            return traj;
        }
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        const double delta = times.h / 2.0;
        for (int axis = 0; axis < (planar ? 2 : 3); ++axis) {
            Eigen::Vector3d hi = x, lo = x;
            hi[axis] += delta;
            lo[axis] -= delta;
            g[axis] = (times.interpolate(hi) - times.interpolate(lo)) / (2.0 * delta);
        }
        double gn = g.norm();
        if (gn < 1e-12) throw BacktrackStallError();
        x -= step * g / gn;
        traj.poses.push_back(geom::Pose(x, Eigen::Vector3d::Zero()));

        double t = times.interpolate(x);
        if (t < best_t - 1e-12) {
            best_t = t;
            no_progress = 0;
        } else if (++no_progress > 100) {
            throw BacktrackStallError();
        }
    }
    throw BacktrackStallError();
}

SpeedGrid build_speed_grid(const geom::Scene& scene, const std::string& object_id,
                           const Eigen::Vector3d& orientation, double h,
                           const speed::SpeedParams& params,
                           const speed::ReachabilityModel& reach, bool planar,
                           double fixed_z) {
    const Eigen::Vector3d lo = scene.workspace_bounds.min();
    const Eigen::Vector3d hi = scene.workspace_bounds.max();
    SpeedGrid grid;
    grid.h = h;
    grid.origin = lo;
    if (planar) grid.origin.z() = fixed_z;
    grid.dims.x() = std::max(2, int(std::floor((hi.x() - lo.x()) / h)) + 1);
    grid.dims.y() = std::max(2, int(std::floor((hi.y() - lo.y()) / h)) + 1);
    grid.dims.z() = planar ? 1 : std::max(2, int(std::floor((hi.z() - lo.z()) / h)) + 1);
    grid.values.resize(std::size_t(grid.dims.x()) * grid.dims.y() * grid.dims.z());

    for (int iz = 0; iz < grid.dims.z(); ++iz)
        for (int iy = 0; iy < grid.dims.y(); ++iy)
            for (int ix = 0; ix < grid.dims.x(); ++ix) {
                geom::Pose pose(grid.position(ix, iy, iz), orientation);
                grid.values[grid.index(ix, iy, iz)] =
                    speed::ground_truth_speed(scene, object_id, pose, params, reach);
            }
    return grid;
}

CompareReport compare_fields(const net::TimeFieldModel& model,
                             const geom::PointCloud& object_cloud, const TimeGrid& times,
                             const std::vector<std::pair<geom::Pose, geom::Pose>>& probes,
                             bool compare_paths, const plan::MarchParams& march) {
    Eigen::Vector3d src =
        times.position(times.source.x(), times.source.y(), times.source.z());
    CompareReport report;
    double err_sum = 0, ratio_sum = 0;

    for (const auto& [p_s, p_g] : probes) {
        if ((p_s.translation - src).lpNorm<Eigen::Infinity>() > times.h * (1 + 1e-9))
            throw InvalidInputError("probe start must sit at the oracle grid source");
        Eigen::Vector3d lo = times.origin;
        Eigen::Vector3d hi = times.position(times.dims.x() - 1, times.dims.y() - 1,
                                            times.dims.z() - 1);
        for (int i = 0; i < (times.dims.z() == 1 ? 2 : 3); ++i)
            if (p_g.translation[i] < lo[i] - 1e-9 || p_g.translation[i] > hi[i] + 1e-9)
                throw InvalidInputError("probe goal outside oracle grid extents");

        double oracle_t = times.interpolate(p_g.translation);
        double learned_t = net::forward_time(model, object_cloud, p_s, p_g);
        double rel = std::abs(learned_t - oracle_t) / std::max(oracle_t, 1e-9);
        err_sum += rel;
        report.max_rel_time_error = std::max(report.max_rel_time_error, rel);
        ++report.probes;

        if (compare_paths) {
            Eigen::Vector3d g = (p_g.translation - times.origin) / times.h;
            Eigen::Vector3i node(int(std::lround(g.x())), int(std::lround(g.y())),
                                 times.dims.z() == 1 ? 0 : int(std::lround(g.z())));
            try {
                plan::Trajectory learned =
                    plan::march_bidirectional(model, object_cloud, p_s, p_g, march);
                plan::Trajectory oracle_path = backtrack_path(times, node);
                if (oracle_path.length_m > 1e-9) {
                    ratio_sum += learned.length_m / oracle_path.length_m;
                    ++report.paths_compared;
                }
            } catch (const plan::NoConvergenceError&) {
                // failed march counts as no path; ratio omitted
            } catch (const BacktrackStallError&) {
            }
        }
    }
    if (report.probes > 0) report.mean_rel_time_error = err_sum / report.probes;
    if (report.paths_compared > 0)
        report.mean_path_length_ratio = ratio_sum / report.paths_compared;
    return report;
}

void save_time_grid(const TimeGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot write grid: " + path);
    out << "tfield-grid v1 time " << grid.dims.x() << " " << grid.dims.y() << " "
        << grid.dims.z() << " ";
    out.precision(17);
    out << grid.h << " " << grid.origin.x() << " " << grid.origin.y() << " "
        << grid.origin.z() << " " << grid.source.x() << " " << grid.source.y() << " "
        << grid.source.z() << "\n";
    out.write(reinterpret_cast<const char*>(grid.values.data()),
              std::streamsize(sizeof(double) * grid.values.size()));
    if (!out) throw FileError("write failure: " + path);
}

TimeGrid load_time_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open grid: " + path);
    std::string header;
    std::getline(in, header);
    std::istringstream ss(header);
    std::string magic, version, kind;
    TimeGrid grid;
    ss >> magic >> version >> kind >> grid.dims.x() >> grid.dims.y() >> grid.dims.z() >>
        grid.h >> grid.origin.x() >> grid.origin.y() >> grid.origin.z() >>
        grid.source.x() >> grid.source.y() >> grid.source.z();
    if (magic != "tfield-grid" || version != "v1" || kind != "time" || !ss)
        throw FileError("not a time-grid file: " + path);
    grid.values.resize(std::size_t(grid.dims.x()) * grid.dims.y() * grid.dims.z());
    in.read(reinterpret_cast<char*>(grid.values.data()),
            std::streamsize(sizeof(double) * grid.values.size()));
    if (!in) throw FileError("truncated grid file: " + path);
    grid.states.assign(grid.values.size(), NodeState::Frozen);
    return grid;
}

}  // namespace tfield::oracle
