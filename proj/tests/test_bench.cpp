#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tfield/bench.hpp"

using namespace tfield;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

net::ModelConfig small_config() {
    net::ModelConfig c;
    c.fourier_features = 8;
    c.pose_latent = 16;
    c.shape_latent = 8;
    c.shape_hidden = 8;
    c.gen_width = 16;
    c.gen_blocks = 2;
    c.canonical_points = 64;
    return c;
}

}  // namespace

TEST_CASE("environment catalog") {
    for (const auto& name : bench::environment_names()) {
        bench::Environment env = bench::make_environment(name);
        CHECK(env.name == name);
        CHECK_FALSE(env.scene.objects.empty());
        CHECK_FALSE(env.scene.workspace_bounds.isEmpty());
        for (const auto& [id, cloud] : env.scene.objects) CHECK(cloud.count() == 64);
        // deterministic reconstruction
        CHECK(bench::make_environment(name).scene_hash == env.scene_hash);
    }
    CHECK_THROWS_AS(bench::make_environment("nope"), InvalidInputError);
    // cabinet clutter depends on the seed
    CHECK(bench::make_environment("cabinet", 1).scene_hash !=
          bench::make_environment("cabinet", 2).scene_hash);
}

TEST_CASE("dataset generation") {
    bench::Environment env = bench::make_environment("free_space_2d");

    SUBCASE("deterministic files") {
        train::Dataset a = bench::generate_dataset(env, 10, 42);
        train::Dataset b = bench::generate_dataset(env, 10, 42);
        std::string pa = "test_bench_a.txt", pb = "test_bench_b.txt";
        train::save_dataset(a, pa);
        train::save_dataset(b, pb);
        CHECK(slurp(pa) == slurp(pb));
        std::remove(pa.c_str());
        std::remove(pb.c_str());
    }
    SUBCASE("free space yields top-clip speeds") {
        train::Dataset ds = bench::generate_dataset(env, 50, 7);
        for (const auto& t : ds.tuples) {
            CHECK(t.s_star_s == doctest::Approx(1.0));
            CHECK(t.s_star_g == doctest::Approx(1.0));
        }
    }
    SUBCASE("records re-verify against the speed model") {
        bench::Environment tab = bench::make_environment("tabletop_center_obstacle");
        train::Dataset ds = bench::generate_dataset(tab, 100, 3);
        CHECK(ds.scene_hash == tab.scene_hash);
        for (const auto& t : ds.tuples) {
            CHECK(t.s_star_s == doctest::Approx(speed::ground_truth_speed(
                                    tab.scene, t.object_id, t.p_s, tab.speed_params,
                                    tab.reach)));
            CHECK(t.s_star_g == doctest::Approx(speed::ground_truth_speed(
                                    tab.scene, t.object_id, t.p_g, tab.speed_params,
                                    tab.reach)));
        }
    }
    SUBCASE("rejects a non-positive count") {
        CHECK_THROWS_AS(bench::generate_dataset(env, 0, 0), InvalidInputError);
    }
}

TEST_CASE("benchmark harness") {
    bench::Environment env = bench::make_environment("free_space_2d");
    net::TimeFieldModel model = net::init_model(small_config());
    model.scene_hash = env.scene_hash;

    SUBCASE("zero queries give an empty result") {
        bench::BenchmarkOptions opts;
        opts.n_queries = 0;
        bench::BenchmarkResult r = bench::run_benchmark(model, env, opts);
        CHECK(r.records.empty());
        CHECK(r.summary.queries == 0);
        CHECK(r.summary.success_rate == 0.0);
        CHECK(r.summary.mean_time_s == 0.0);
    }
    SUBCASE("scene hash mismatch aborts") {
        net::TimeFieldModel wrong = net::init_model(small_config());
        wrong.scene_hash = env.scene_hash + 1;
        bench::BenchmarkOptions opts;
        opts.n_queries = 1;
        CHECK_THROWS_AS(bench::run_benchmark(wrong, env, opts), InvalidInputError);
    }
    SUBCASE("near-metric model succeeds in free space with straight-ish paths") {
        bench::BenchmarkOptions opts;
        opts.n_queries = 10;
        opts.seed = 5;
        bench::BenchmarkResult r = bench::run_benchmark(model, env, opts);
        REQUIRE(r.records.size() == 10);
        CHECK(r.summary.success_rate == 1.0);
        for (const auto& rec : r.records) {
            CHECK(rec.success);
            CHECK(rec.segments == 1);
            REQUIRE(rec.length_m.has_value());
            CHECK(rec.planning_time_s > 0.0);
        }
        // determinism across runs and thread counts
        bench::BenchmarkResult r2 = bench::run_benchmark(model, env, opts);
        bench::BenchmarkOptions threaded = opts;
        threaded.threads = 4;
        bench::BenchmarkResult r3 = bench::run_benchmark(model, env, threaded);
        for (std::size_t i = 0; i < r.records.size(); ++i) {
            CHECK(r.records[i].planning_time_s > 0);
            CHECK(*r.records[i].length_m == *r2.records[i].length_m);
            CHECK(*r.records[i].length_m == *r3.records[i].length_m);
            CHECK(r.records[i].seed == r3.records[i].seed);
        }
    }
}

TEST_CASE("metrics CSV round trip and summary recomputation") {
    std::vector<bench::MetricsRecord> records;
    bench::MetricsRecord a;
    a.planning_time_s = 0.0125;
    a.length_m = 1.5;
    a.success = true;
    a.segments = 1;
    a.env = "free_space_2d";
    a.object_id = "box";
    a.seed = 42;
    bench::MetricsRecord b;
    b.planning_time_s = 0.5;
    b.success = false;
    b.segments = 0;
    b.env = "free_space_2d";
    b.object_id = "cylinder";
    b.seed = 43;
    records = {a, b};

    std::string path = "test_bench_metrics.csv";
    bench::save_metrics_csv(records, path);
    auto back = bench::load_metrics_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].planning_time_s == a.planning_time_s);
    CHECK(*back[0].length_m == 1.5);
    CHECK(back[0].success);
    CHECK(back[0].object_id == "box");
    CHECK_FALSE(back[1].length_m.has_value());
    CHECK_FALSE(back[1].success);
    CHECK(back[1].seed == 43);

    bench::BenchmarkSummary s = bench::summarize(back);
    CHECK(s.queries == 2);
    CHECK(s.success_rate == doctest::Approx(0.5));
    CHECK(s.mean_time_s == doctest::Approx((0.0125 + 0.5) / 2).epsilon(1e-9));
    CHECK(s.mean_length_m == doctest::Approx(1.5));
    std::remove(path.c_str());
}

TEST_CASE("histograms and plot artifacts") {
    std::vector<bench::MetricsRecord> records;
    for (int i = 0; i < 20; ++i) {
        bench::MetricsRecord r;
        r.planning_time_s = 0.01 * (i + 1);
        r.success = true;
        r.length_m = 0.5 + 0.05 * i;
        records.push_back(r);
    }
    bench::emit_metric_histograms(records, 5, "test_bench_th.csv", "test_bench_lh.csv");
    std::string th = slurp("test_bench_th.csv");
    CHECK(th.find("bin_low,bin_high,count") == 0);
    int total = 0;
    {
        std::ifstream in("test_bench_th.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            auto last = line.rfind(',');
            total += std::stoi(line.substr(last + 1));
        }
    }
    CHECK(total == 20);
    std::remove("test_bench_th.csv");
    std::remove("test_bench_lh.csv");
}

TEST_CASE("field slice and trajectory CSVs") {
    bench::Environment env = bench::make_environment("free_space_2d");
    net::TimeFieldModel model = net::init_model(small_config());
    geom::Pose goal(0.5, 0.5, 0, 0, 0, 0);
    bench::write_field_slice(model, env.scene.objects.at("box"), goal, 0.0,
                             env.scene.workspace_bounds, 5, "test_bench_slice.csv");
    std::ifstream in("test_bench_slice.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,y,t");
    int rows = 0;
    bool saw_zero = false;
    while (std::getline(in, line)) {
        ++rows;
        auto last = line.rfind(',');
        if (std::stod(line.substr(last + 1)) == 0.0) saw_zero = true;
    }
    CHECK(rows == 25);
    CHECK(saw_zero);  // the goal lies on the 5x5 grid
    std::remove("test_bench_slice.csv");

    plan::Trajectory traj;
    traj.poses = {goal, geom::Pose(0.6, 0.5, 0, 0, 0, 0)};
    bench::write_trajectory_csv(traj, "test_bench_traj.csv");
    std::ifstream tin("test_bench_traj.csv");
    std::getline(tin, line);
    CHECK(line == "x,y,z,roll,pitch,yaw");
    std::remove("test_bench_traj.csv");
}
