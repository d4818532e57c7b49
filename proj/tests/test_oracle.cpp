#include <doctest.h>

#include <cstdio>
#include <random>

#include "tfield/bench.hpp"
#include "tfield/oracle.hpp"

using namespace tfield;

namespace {

oracle::SpeedGrid uniform_grid(int n, double h, double s) {
    oracle::SpeedGrid g;
    g.dims = {n, n, 1};
    g.h = h;
    g.origin = {0, 0, 0};
    g.values.assign(std::size_t(n) * n, s);
    return g;
}

}  // namespace

TEST_CASE("uniform-speed FMM reproduces the distance field") {
    const int n = 101;
    const double h = 0.01;
    oracle::SpeedGrid speed = uniform_grid(n, h, 1.0);
    oracle::TimeGrid t = oracle::fmm_solve(speed, {50, 50, 0});

    CHECK(t.at(50, 50, 0) == 0.0);
    CHECK(t.at(100, 100, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(2 * h / 0.70711));
    CHECK(std::abs(t.at(100, 100, 0) - 0.70711) <= 2 * h);
    CHECK(t.at(100, 50, 0) == doctest::Approx(0.5).epsilon(0.02));
    // symmetry of the solution about the center
    CHECK(t.at(0, 0, 0) == doctest::Approx(t.at(100, 100, 0)).epsilon(1e-9));
    CHECK(t.at(0, 100, 0) == doctest::Approx(t.at(100, 0, 0)).epsilon(1e-9));
}

TEST_CASE("speed homogeneity scales times exactly") {
    const int n = 41;
    oracle::SpeedGrid fast = uniform_grid(n, 0.01, 1.0);
    oracle::SpeedGrid slow = uniform_grid(n, 0.01, 0.5);
    oracle::TimeGrid tf = oracle::fmm_solve(fast, {20, 20, 0});
    oracle::TimeGrid ts = oracle::fmm_solve(slow, {20, 20, 0});
    for (std::size_t i = 0; i < tf.values.size(); ++i)
        CHECK(ts.values[i] == 2.0 * tf.values[i]);
}

TEST_CASE("FMM is invariant to neighbor traversal order") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    oracle::SpeedGrid speed = uniform_grid(31, 0.02, 1.0);
    for (auto& v : speed.values) v = u(rng);
    oracle::TimeGrid a = oracle::fmm_solve(speed, {5, 25, 0}, false);
    oracle::TimeGrid b = oracle::fmm_solve(speed, {5, 25, 0}, true);
    for (std::size_t i = 0; i < a.values.size(); ++i)
        CHECK(std::abs(a.values[i] - b.values[i]) < 1e-12);
}

TEST_CASE("refinement halves the error at first order") {
    auto max_err = [](int n) {
        double h = 1.0 / (n - 1);
        oracle::SpeedGrid speed = uniform_grid(n, h, 1.0);
        int c = (n - 1) / 2;
        oracle::TimeGrid t = oracle::fmm_solve(speed, {c, c, 0});
        double worst = 0;
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                double exact = std::hypot((ix - c) * h, (iy - c) * h);
                worst = std::max(worst, std::abs(t.at(ix, iy, 0) - exact));
            }
        return worst;
    };
    double coarse = max_err(51), fine = max_err(101);
    CHECK(coarse / fine >= 1.8);
}

TEST_CASE("dijkstra oracle") {
    SUBCASE("single node") {
        oracle::SpeedGrid g = uniform_grid(1, 0.01, 1.0);
        oracle::TimeGrid t = oracle::dijkstra_solve(g, {0, 0, 0});
        CHECK(t.at(0, 0, 0) == 0.0);
    }
    SUBCASE("axis-aligned neighbor costs h / S") {
        oracle::SpeedGrid g = uniform_grid(3, 0.02, 0.5);
        oracle::TimeGrid t = oracle::dijkstra_solve(g, {0, 0, 0});
        CHECK(t.at(1, 0, 0) == doctest::Approx(0.04));
    }
    SUBCASE("tracks FMM within 8% on a random smooth grid") {
        const int n = 51;
        oracle::SpeedGrid speed = uniform_grid(n, 0.02, 1.0);
        // smooth low-frequency speed field in [0.4, 1]
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix)
                speed.values[speed.index(ix, iy, 0)] =
                    0.7 + 0.3 * std::sin(0.06 * ix) * std::cos(0.05 * iy);
        oracle::TimeGrid f = oracle::fmm_solve(speed, {25, 25, 0});
        oracle::TimeGrid d = oracle::dijkstra_solve(speed, {25, 25, 0});
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                if (ix == 25 && iy == 25) continue;
                double rel = std::abs(f.at(ix, iy, 0) - d.at(ix, iy, 0)) / d.at(ix, iy, 0);
                CHECK(rel <= 0.08);
            }
    }
}

TEST_CASE("backtracking descends to the source") {
    const int n = 81;
    const double h = 1.0 / (n - 1);

    SUBCASE("straight line on a uniform field") {
        oracle::SpeedGrid speed = uniform_grid(n, h, 1.0);
        oracle::TimeGrid t = oracle::fmm_solve(speed, {10, 10, 0});
        plan::Trajectory path = oracle::backtrack_path(t, {70, 60, 0});
        CHECK(path.source == plan::TrajectorySource::OracleBacktrack);
        Eigen::Vector3d src = t.position(10, 10, 0), start = t.position(70, 60, 0);
        CHECK((path.poses.front().translation - start).norm() < 1e-12);
        CHECK((path.poses.back().translation - src).norm() <= h + 1e-12);
        double straight = (start - src).norm();
        CHECK(path.length_m <= straight * 1.05 + 2 * h);
        for (const auto& p : path.poses) {
            Eigen::Vector3d d = p.translation - src;
            Eigen::Vector3d axis = (start - src).normalized();
            CHECK((d - d.dot(axis) * axis).norm() < 2 * h + 1e-9);
        }
    }
    SUBCASE("start at source gives a single pose") {
        oracle::SpeedGrid speed = uniform_grid(21, 0.05, 1.0);
        oracle::TimeGrid t = oracle::fmm_solve(speed, {10, 10, 0});
        plan::Trajectory path = oracle::backtrack_path(t, {10, 10, 0});
        CHECK(path.poses.size() == 1);
    }
    SUBCASE("routes around a slow wall near the Dijkstra geodesic") {
        oracle::SpeedGrid speed = uniform_grid(n, h, 1.0);
        // thick near-impassable vertical wall with a top opening
        int wall_x = n / 2;
        for (int dx = -1; dx <= 1; ++dx)
            for (int iy = 0; iy < n - 12; ++iy)
                speed.values[speed.index(wall_x + dx, iy, 0)] = 0.001;
        oracle::TimeGrid t = oracle::fmm_solve(speed, {10, 20, 0});
        plan::Trajectory path = oracle::backtrack_path(t, {70, 20, 0});
        // the path must rise above the wall rather than crossing it
        double max_y = 0;
        for (const auto& p : path.poses) max_y = std::max(max_y, p.translation.y());
        CHECK(max_y > (n - 14) * h);
        oracle::TimeGrid d = oracle::dijkstra_solve(speed, {10, 20, 0});
        CHECK(path.length_m <= 1.10 * d.at(70, 20, 0) + 2 * h);
    }
}

TEST_CASE("time grid serialization round trip") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.3, 1.0);
    oracle::SpeedGrid speed = uniform_grid(17, 0.03, 1.0);
    for (auto& v : speed.values) v = u(rng);
    oracle::TimeGrid t = oracle::fmm_solve(speed, {8, 8, 0});

    std::string path = "test_oracle_grid.bin";
    oracle::save_time_grid(t, path);
    oracle::TimeGrid back = oracle::load_time_grid(path);
    CHECK(back.dims == t.dims);
    CHECK(back.h == t.h);
    CHECK(back.origin == t.origin);
    REQUIRE(back.values.size() == t.values.size());
    for (std::size_t i = 0; i < t.values.size(); ++i)
        CHECK(back.values[i] == t.values[i]);
    std::remove(path.c_str());
}

TEST_CASE("speed grid built from a scene matches the speed model") {
    bench::Environment env = bench::make_environment("tabletop_center_obstacle");
    oracle::SpeedGrid grid =
        oracle::build_speed_grid(env.scene, "box", {0, 0, 0}, 0.025, env.speed_params,
                                 env.reach, true, 0.1);
    REQUIRE(grid.is2d());
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> ux(0, grid.dims.x() - 1), uy(0, grid.dims.y() - 1);
    for (int i = 0; i < 30; ++i) {
        int ix = ux(rng), iy = uy(rng);
        Eigen::Vector3d p = grid.position(ix, iy, 0);
        geom::Pose pose(p.x(), p.y(), p.z(), 0, 0, 0);
        double expect = speed::ground_truth_speed(env.scene, "box", pose,
                                                  env.speed_params, env.reach);
        CHECK(grid.at(ix, iy, 0) == doctest::Approx(expect));
    }
}

TEST_CASE("compare_fields smoke on an untrained model") {
    net::ModelConfig mc;
    mc.fourier_features = 8;
    mc.pose_latent = 16;
    mc.shape_latent = 8;
    mc.shape_hidden = 8;
    mc.gen_width = 16;
    mc.gen_blocks = 2;
    mc.canonical_points = 64;
    net::TimeFieldModel model = net::init_model(mc);

    bench::Environment env = bench::make_environment("free_space_2d");
    const geom::PointCloud& cloud = env.scene.objects.at("box");

    oracle::SpeedGrid speed = uniform_grid(51, 0.02, 1.0);
    oracle::TimeGrid times = oracle::fmm_solve(speed, {10, 10, 0});

    std::vector<std::pair<geom::Pose, geom::Pose>> probes;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    geom::Pose src(times.position(10, 10, 0).x(), times.position(10, 10, 0).y(), 0, 0, 0, 0);
    for (int i = 0; i < 20; ++i)
        probes.emplace_back(src, geom::Pose(u(rng), u(rng), 0, 0, 0, 0));

    oracle::CompareReport report = oracle::compare_fields(model, cloud, times, probes);
    CHECK(report.probes == 20);
    CHECK(std::isfinite(report.mean_rel_time_error));
    CHECK(report.mean_rel_time_error < 0.5);  // near-metric init vs distance field
    CHECK(report.max_rel_time_error >= report.mean_rel_time_error);

    // probes must start at the grid source
    std::vector<std::pair<geom::Pose, geom::Pose>> bad{
        {geom::Pose(0.9, 0.9, 0, 0, 0, 0), geom::Pose(0.1, 0.1, 0, 0, 0, 0)}};
    CHECK_THROWS_AS(oracle::compare_fields(model, cloud, times, bad), InvalidInputError);
}
