#include "tfield/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace tfield::bench {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

geom::PointCloud concat_clouds(const std::vector<geom::PointCloud>& clouds) {
    Eigen::Index total = 0;
    for (const auto& c : clouds) total += c.points.cols();
    Eigen::Matrix3Xd pts(3, total);
    Eigen::Index at = 0;
    for (const auto& c : clouds) {
        pts.middleCols(at, c.points.cols()) = c.points;
        at += c.points.cols();
    }
    return geom::PointCloud(std::move(pts));
}

geom::PointCloud canonical(const geom::PointCloud& dense) {
    return geom::farthest_point_sample(dense, 64, 0);
}

geom::PointCloud make_box_object(const Eigen::Vector3d& half) {
    return canonical(sample_box_surface(-half, half, half.minCoeff() / 4.0));
}

geom::PointCloud make_cylinder_object(double radius, double height) {
    std::vector<Eigen::Vector3d> pts;
    const int rings = 12, per_ring = 16;
    for (int i = 0; i < rings; ++i) {
        double z = -height / 2 + height * i / (rings - 1);
        for (int j = 0; j < per_ring; ++j) {
            double a = 2.0 * M_PI * j / per_ring;
            pts.emplace_back(radius * std::cos(a), radius * std::sin(a), z);
        }
    }
    Eigen::Matrix3Xd m(3, Eigen::Index(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) m.col(Eigen::Index(i)) = pts[i];
    return canonical(geom::PointCloud(std::move(m)));
}

geom::PointCloud make_l_shape_object() {
    auto a = sample_box_surface({-0.03, -0.01, -0.01}, {0.03, 0.01, 0.01}, 0.005);
    auto b = sample_box_surface({-0.03, -0.01, -0.01}, {-0.01, 0.01, 0.05}, 0.005);
    return canonical(concat_clouds({a, b}));
}

geom::PointCloud make_mug_object() {
    auto body = make_cylinder_object(0.035, 0.08);
    auto handle = sample_box_surface({0.035, -0.008, -0.025}, {0.055, 0.008, 0.025}, 0.005);
    return canonical(concat_clouds({geom::PointCloud(body.points), handle}));
}

std::map<std::string, geom::PointCloud> small_catalog() {
    return {{"box", make_box_object({0.02, 0.02, 0.02})},
            {"cylinder", make_cylinder_object(0.02, 0.06)}};
}

std::map<std::string, geom::PointCloud> full_catalog() {
    auto cat = small_catalog();
    cat["l_shape"] = make_l_shape_object();
    cat["mug"] = make_mug_object();
    return cat;
}

}  // namespace

geom::PointCloud sample_box_surface(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                                    double spacing) {
    std::vector<Eigen::Vector3d> pts;
    Eigen::Vector3i n;
    for (int i = 0; i < 3; ++i)
        n[i] = std::max(2, int(std::round((hi[i] - lo[i]) / spacing)) + 1);
    auto coord = [&](int axis, int i) {
        return lo[axis] + (hi[axis] - lo[axis]) * double(i) / (n[axis] - 1);
    };
    for (int ix = 0; ix < n.x(); ++ix)
        for (int iy = 0; iy < n.y(); ++iy)
            for (int iz = 0; iz < n.z(); ++iz) {
                bool on_face = ix == 0 || ix == n.x() - 1 || iy == 0 || iy == n.y() - 1 ||
                               iz == 0 || iz == n.z() - 1;
                if (on_face)
                    pts.emplace_back(coord(0, ix), coord(1, iy), coord(2, iz));
            }
    Eigen::Matrix3Xd m(3, Eigen::Index(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) m.col(Eigen::Index(i)) = pts[i];
    return geom::PointCloud(std::move(m));
}

std::vector<std::string> environment_names() {
    return {"free_space_2d", "tabletop_center_obstacle", "u_tunnel", "cabinet"};
}

Environment make_environment(const std::string& name, std::uint64_t seed) {
    Environment env;
    env.name = name;
    env.speed_params = speed::SpeedParams{};
    env.reach = speed::ReachabilityModel::always();

    if (name == "free_space_2d") {
        env.scene.workspace_bounds =
            Eigen::AlignedBox3d(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 1, 0.1));
        env.scene.objects = small_catalog();
        env.mask = speed::PoseMask::planar_xy();
    } else if (name == "tabletop_center_obstacle") {
        // 0.5 m tabletop with a large pillar in the middle
        env.scene.workspace_bounds =
            Eigen::AlignedBox3d(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0.5, 0.5, 0.5));
        env.scene.obstacle_cloud =
            sample_box_surface({0.19, 0.19, 0.0}, {0.31, 0.31, 0.35}, 0.015);
        env.scene.distance_grid = geom::build_distance_grid(
            env.scene.obstacle_cloud, env.scene.workspace_bounds, 0.01);
        env.scene.objects = small_catalog();
        env.mask = speed::PoseMask::translation_only();
    } else if (name == "u_tunnel") {
        // 1 m volume split by a central divider; paths must round its tip
        env.scene.workspace_bounds =
            Eigen::AlignedBox3d(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 1, 1));
        env.scene.obstacle_cloud =
            sample_box_surface({0.45, 0.0, 0.0}, {0.55, 0.7, 1.0}, 0.025);
        env.scene.distance_grid = geom::build_distance_grid(
            env.scene.obstacle_cloud, env.scene.workspace_bounds, 0.02);
        env.scene.objects = full_catalog();
        env.mask = speed::PoseMask::translation_only();
    } else if (name == "cabinet") {
        // 0.55 x 1 x 0.6 m shell with seeded clutter boxes
        env.scene.workspace_bounds = Eigen::AlignedBox3d(Eigen::Vector3d(0, 0, 0),
                                                         Eigen::Vector3d(0.55, 1.0, 0.6));
        std::vector<geom::PointCloud> parts;
        parts.push_back(sample_box_surface({0.0, 0.0, 0.0}, {0.02, 1.0, 0.6}, 0.03));
        parts.push_back(sample_box_surface({0.0, 0.0, 0.0}, {0.55, 1.0, 0.02}, 0.03));
        parts.push_back(sample_box_surface({0.0, 0.0, 0.58}, {0.55, 1.0, 0.6}, 0.03));
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> ux(0.1, 0.45), uy(0.1, 0.9);
        for (int i = 0; i < 3; ++i) {
            Eigen::Vector3d at(ux(rng), uy(rng), 0.02);
            parts.push_back(sample_box_surface(at, at + Eigen::Vector3d(0.08, 0.08, 0.12),
                                               0.02));
        }
        env.scene.obstacle_cloud = concat_clouds(parts);
        env.scene.distance_grid = geom::build_distance_grid(
            env.scene.obstacle_cloud, env.scene.workspace_bounds, 0.015);
        env.scene.objects = full_catalog();
        speed::PoseMask mask = speed::PoseMask::translation_only();
        mask.rotation[2] = true;  // yaw
        env.mask = mask;
    } else {
        throw InvalidInputError("unknown environment: " + name);
    }
    env.scene_hash = geom::scene_hash(env.scene);
    return env;
}

train::Dataset generate_dataset(const Environment& env, int n_tuples, std::uint64_t seed) {
    if (n_tuples <= 0) throw InvalidInputError("n_tuples must be positive");
    std::vector<std::string> ids;
    for (const auto& [id, cloud] : env.scene.objects) ids.push_back(id);

    train::Dataset ds;
    ds.params = env.speed_params;
    ds.scene_hash = env.scene_hash;
    ds.seed = seed;
    ds.env = env.name;
    ds.tuples.reserve(std::size_t(n_tuples));

    std::mt19937_64 rng(seed);
    for (int i = 0; i < n_tuples; ++i) {
        train::DatasetTuple t;
        t.object_id = ids[std::size_t(i) % ids.size()];
        t.p_s = speed::sample_valid_pose(env.scene, t.object_id, rng, env.mask);
        t.p_g = speed::sample_valid_pose(env.scene, t.object_id, rng, env.mask);
        t.s_star_s =
            speed::ground_truth_speed(env.scene, t.object_id, t.p_s, env.speed_params, env.reach);
        t.s_star_g =
            speed::ground_truth_speed(env.scene, t.object_id, t.p_g, env.speed_params, env.reach);
        ds.tuples.push_back(std::move(t));
    }
    return ds;
}

BenchmarkSummary summarize(const std::vector<MetricsRecord>& records) {
    BenchmarkSummary s;
    s.queries = int(records.size());
    if (records.empty()) return s;

    int successes = 0;
    double time_sum = 0, len_sum = 0;
    for (const auto& r : records) {
        time_sum += r.planning_time_s;
        if (r.success && r.length_m) {
            ++successes;
            len_sum += *r.length_m;
        }
    }
    s.success_rate = double(successes) / double(records.size());
    s.mean_time_s = time_sum / double(records.size());
    if (successes > 0) s.mean_length_m = len_sum / successes;

    double tvar = 0, lvar = 0;
    for (const auto& r : records) {
        tvar += (r.planning_time_s - s.mean_time_s) * (r.planning_time_s - s.mean_time_s);
        if (r.success && r.length_m)
            lvar += (*r.length_m - s.mean_length_m) * (*r.length_m - s.mean_length_m);
    }
    s.std_time_s = std::sqrt(tvar / double(records.size()));
    if (successes > 0) s.std_length_m = std::sqrt(lvar / successes);
    return s;
}

BenchmarkResult run_benchmark(const net::TimeFieldModel& model, const Environment& env,
                              const BenchmarkOptions& options) {
    if (model.scene_hash != env.scene_hash)
        throw InvalidInputError(
            "checkpoint scene hash does not match the benchmark environment");

    std::vector<plan::Grasp> grasps = options.grasps;
    if (grasps.empty()) grasps.push_back({"default", geom::Pose(), 1.0});
    plan::sort_grasps(grasps);
    static const plan::AlwaysFeasibleIK default_ik;
    const plan::IKProvider& ik = options.ik ? *options.ik : default_ik;

    std::vector<std::string> ids;
    for (const auto& [id, cloud] : env.scene.objects) ids.push_back(id);

    BenchmarkResult result;
    result.records.resize(std::size_t(std::max(0, options.n_queries)));

    auto run_query = [&](int q) {
        MetricsRecord rec;
        rec.env = env.name;
        rec.seed = splitmix64(options.seed ^ std::uint64_t(q));
        rec.object_id = ids[std::size_t(q) % ids.size()];
        std::mt19937_64 rng(rec.seed);

        geom::Pose p_s = speed::sample_valid_pose(env.scene, rec.object_id, rng, env.mask);
        geom::Pose p_g = speed::sample_valid_pose(env.scene, rec.object_id, rng, env.mask);
        // avoid degenerate queries that are already at the meeting threshold
        for (int tries = 0;
             tries < 100 &&
             geom::pose_distance(p_s, p_g, model.config.w_rot) < 2 * options.march.d_s;
             ++tries)
            p_g = speed::sample_valid_pose(env.scene, rec.object_id, rng, env.mask);

        auto t0 = std::chrono::steady_clock::now();
        try {
            plan::PlanResult pr = plan::omanip(model, env.scene, rec.object_id, p_s, p_g,
                                               grasps, ik, options.depth_limit,
                                               options.march);
            rec.planning_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rec.segments = int(pr.segments.size());
            bool all_clear = true;
            for (const auto& seg : pr.segments) {
                auto report = plan::validate_trajectory(env.scene, rec.object_id,
                                                        seg.trajectory,
                                                        options.validation_resolution_m);
                if (!report.collision_free) all_clear = false;
            }
            if (all_clear) {
                rec.success = true;
                rec.length_m = pr.total_length_m;
            }
        } catch (const Error&) {
            rec.planning_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        result.records[std::size_t(q)] = std::move(rec);
    };

    int threads = std::max(1, options.threads);
    if (threads == 1) {
        for (int q = 0; q < options.n_queries; ++q) run_query(q);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&]() {
                for (int q = next.fetch_add(1); q < options.n_queries;
                     q = next.fetch_add(1))
                    run_query(q);
            });
        for (auto& th : pool) th.join();
    }

    result.summary = summarize(result.records);
    return result;
}

void save_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write metrics: " + path);
    out.precision(17);
    out << "planning_time_s,length_m,success,segments,env,object_id,seed\n";
    for (const auto& r : records) {
        out << r.planning_time_s << ",";
        if (r.length_m) out << *r.length_m;
        out << "," << (r.success ? 1 : 0) << "," << r.segments << "," << r.env << ","
            << r.object_id << "," << r.seed << "\n";
    }
    if (!out) throw FileError("write failure: " + path);
}

std::vector<MetricsRecord> load_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open metrics: " + path);
    std::vector<MetricsRecord> records;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        MetricsRecord r;
        std::getline(ss, field, ',');
        r.planning_time_s = std::stod(field);
        std::getline(ss, field, ',');
        if (!field.empty()) r.length_m = std::stod(field);
        std::getline(ss, field, ',');
        r.success = field == "1";
        std::getline(ss, field, ',');
        r.segments = std::stoi(field);
        std::getline(ss, r.env, ',');
        std::getline(ss, r.object_id, ',');
        std::getline(ss, field, ',');
        r.seed = std::stoull(field);
        records.push_back(std::move(r));
    }
    return records;
}

void write_field_slice(const net::TimeFieldModel& model, const geom::PointCloud& cloud,
                       const geom::Pose& goal, double z,
                       const Eigen::AlignedBox3d& bounds, int samples_per_axis,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write field slice: " + path);
    out.precision(17);
    out << "x,y,t\n";
    for (int iy = 0; iy < samples_per_axis; ++iy)
        for (int ix = 0; ix < samples_per_axis; ++ix) {
            double x = bounds.min().x() +
                       (bounds.max().x() - bounds.min().x()) * ix / (samples_per_axis - 1);
            double y = bounds.min().y() +
                       (bounds.max().y() - bounds.min().y()) * iy / (samples_per_axis - 1);
            geom::Pose p(x, y, z, 0, 0, 0);
            out << x << "," << y << "," << net::forward_time(model, cloud, p, goal) << "\n";
        }
}

void write_trajectory_csv(const plan::Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write trajectory: " + path);
    out.precision(17);
    out << "x,y,z,roll,pitch,yaw\n";
    for (const auto& p : traj.poses)
        out << p.translation.x() << "," << p.translation.y() << "," << p.translation.z()
            << "," << p.rotation.x() << "," << p.rotation.y() << "," << p.rotation.z()
            << "\n";
}

void emit_metric_histograms(const std::vector<MetricsRecord>& records, int bins,
                            const std::string& time_path, const std::string& length_path) {
    auto write_hist = [bins](std::vector<double> values, const std::string& path) {
        std::ofstream out(path);
        if (!out) throw FileError("cannot write histogram: " + path);
        out << "bin_low,bin_high,count\n";
        if (values.empty()) return;
        double lo = *std::min_element(values.begin(), values.end());
        double hi = *std::max_element(values.begin(), values.end());
        double width = (hi - lo) / bins;
        if (width <= 0) width = 1;
        std::vector<int> counts(std::size_t(bins), 0);
        for (double v : values)
            counts[std::size_t(std::min(bins - 1, int((v - lo) / width)))]++;
        out.precision(17);
        for (int b = 0; b < bins; ++b)
            out << lo + b * width << "," << lo + (b + 1) * width << ","
                << counts[std::size_t(b)] << "\n";
    };

    std::vector<double> times, lengths;
    for (const auto& r : records) {
        times.push_back(r.planning_time_s);
        if (r.length_m) lengths.push_back(*r.length_m);
    }
    write_hist(std::move(times), time_path);
    write_hist(std::move(lengths), length_path);
}

}  // namespace tfield::bench
