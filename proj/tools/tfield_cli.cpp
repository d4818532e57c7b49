#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tfield/bench.hpp"
#include "tfield/oracle.hpp"

using namespace tfield;

namespace {

geom::Pose parse_pose(const std::string& text) {
    std::istringstream ss(text);
    double x, y, z, roll, pitch, yaw;
    if (!(ss >> x >> y >> z >> roll >> pitch >> yaw))
        throw InvalidInputError("expected \"x y z roll pitch yaw\", got: " + text);
    return geom::Pose(x, y, z, roll, pitch, yaw);
}

struct GlobalOpts {
    std::uint64_t seed = 0;
    int threads = 1;
    bool verbose = false;
};

int cmd_gen_data(const GlobalOpts& g, const std::string& env_name, std::uint64_t env_seed,
                 int n, const std::string& out) {
    bench::Environment env = bench::make_environment(env_name, env_seed);
    train::Dataset ds = bench::generate_dataset(env, n, g.seed);
    train::save_dataset(ds, out);
    if (g.verbose)
        std::cerr << "wrote " << ds.tuples.size() << " tuples for " << env_name
                  << " (scene hash " << env.scene_hash << ") to " << out << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& env_name, std::uint64_t env_seed,
              const std::string& dataset_path, const std::string& out,
              const std::string& log_path, train::TrainConfig cfg,
              const std::string& reg_name, bool standard_schedule) {
    bench::Environment env = bench::make_environment(env_name, env_seed);
    train::Dataset ds = train::load_dataset(dataset_path);
    if (ds.scene_hash != env.scene_hash)
        throw InvalidInputError("dataset was generated against a different scene");

    if (reg_name == "dirichlet")
        cfg.regularizer = train::Regularizer::Dirichlet;
    else if (reg_name == "viscosity")
        cfg.regularizer = train::Regularizer::Viscosity;
    else if (reg_name == "none")
        cfg.regularizer = train::Regularizer::None;
    else
        throw InvalidInputError("unknown regularizer: " + reg_name);
    if (standard_schedule)
        cfg.alpha_schedule = train::AlphaSchedule::standard(cfg.epochs);
    cfg.rng_seed = g.seed;

    net::ModelConfig mc;
    mc.seed = g.seed;
    net::TimeFieldModel model = net::init_model(mc);
    model.train_speed_params = ds.params;
    model.scene_hash = ds.scene_hash;

    auto log = train::train(model, ds, env.scene, cfg);
    net::save_checkpoint(model, out);
    if (!log_path.empty()) train::save_log(log, log_path);
    if (g.verbose && !log.empty())
        std::cerr << "final mean loss " << log.back().mean_loss << " after "
                  << log.size() << " epochs\n";
    return 0;
}

int cmd_plan(const GlobalOpts& g, const std::string& checkpoint,
             const std::string& env_name, std::uint64_t env_seed,
             const std::string& scene_path, const std::string& object_id,
             const std::string& start, const std::string& goal,
             const std::string& grasp_path, const std::string& out, int depth_limit,
             const plan::MarchParams& march) {
    geom::Scene scene;
    if (!scene_path.empty()) {
        scene = geom::load_scene(scene_path);
    } else {
        scene = bench::make_environment(env_name, env_seed).scene;
    }
    net::TimeFieldModel model =
        net::load_checkpoint(checkpoint, false, geom::scene_hash(scene));

    std::vector<plan::Grasp> grasps;
    if (!grasp_path.empty())
        grasps = plan::load_grasps(grasp_path);
    else
        grasps.push_back({"default", geom::Pose(), 1.0});

    plan::AlwaysFeasibleIK ik;
    plan::PlanResult result = plan::omanip(model, scene, object_id, parse_pose(start),
                                           parse_pose(goal), grasps, ik, depth_limit,
                                           march);

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out.empty()) {
        file.open(out);
        if (!file) throw FileError("cannot write plan: " + out);
        os = &file;
    }
    (*os).precision(17);
    *os << "segments " << result.segments.size() << "\n";
    *os << "total_length_m " << result.total_length_m << "\n";
    *os << "plan_time_s " << result.plan_time_s << "\n";
    for (std::size_t i = 0; i < result.segments.size(); ++i) {
        const auto& seg = result.segments[i];
        *os << "segment " << i << " grasp " << seg.grasp.id << " poses "
            << seg.trajectory.poses.size() << " length_m " << seg.trajectory.length_m
            << "\n";
        for (const auto& p : seg.trajectory.poses)
            *os << "  " << p.translation.x() << " " << p.translation.y() << " "
                << p.translation.z() << " " << p.rotation.x() << " " << p.rotation.y()
                << " " << p.rotation.z() << "\n";
    }
    for (const auto& p : result.intermediate_poses)
        *os << "regrasp_at " << p.translation.x() << " " << p.translation.y() << " "
            << p.translation.z() << " " << p.rotation.x() << " " << p.rotation.y() << " "
            << p.rotation.z() << "\n";
    if (g.verbose)
        std::cerr << "planned " << result.segments.size() << " segment(s), length "
                  << result.total_length_m << " m\n";
    return 0;
}

int cmd_bench(const GlobalOpts& g, const std::string& checkpoint,
              const std::string& env_name, std::uint64_t env_seed, int queries,
              const std::string& out, int depth_limit) {
    bench::Environment env = bench::make_environment(env_name, env_seed);
    net::TimeFieldModel model = net::load_checkpoint(checkpoint, false, env.scene_hash);
    bench::BenchmarkOptions opts;
    opts.n_queries = queries;
    opts.seed = g.seed;
    opts.threads = g.threads;
    opts.depth_limit = depth_limit;
    bench::BenchmarkResult result = bench::run_benchmark(model, env, opts);
    bench::save_metrics_csv(result.records, out);
    const auto& s = result.summary;
    std::cout << "queries " << s.queries << " success_rate " << s.success_rate
              << " mean_time_s " << s.mean_time_s << " mean_length_m " << s.mean_length_m
              << "\n";
    return 0;
}

int cmd_oracle(const GlobalOpts& g, const std::string& env_name, std::uint64_t env_seed,
               const std::string& object_id, const std::string& orientation,
               double h, const std::string& source, const std::string& out, bool planar,
               double fixed_z) {
    bench::Environment env = bench::make_environment(env_name, env_seed);
    Eigen::Vector3d rot;
    {
        std::istringstream os_(orientation);
        if (!(os_ >> rot.x() >> rot.y() >> rot.z()))
            throw InvalidInputError("expected --orientation \"roll pitch yaw\"");
    }

    std::istringstream ss(source);
    Eigen::Vector3d src_pos = Eigen::Vector3d::Zero();
    if (!(ss >> src_pos.x() >> src_pos.y())) throw InvalidInputError("bad --source");
    if (!planar && !(ss >> src_pos.z())) throw InvalidInputError("bad --source");

    oracle::SpeedGrid grid =
        oracle::build_speed_grid(env.scene, object_id, rot, h, env.speed_params,
                                 env.reach, planar, fixed_z);
    Eigen::Vector3i src;
    for (int i = 0; i < 3; ++i)
        src[i] = int(std::lround((src_pos[i] - grid.origin[i]) / grid.h));
    if (planar) src.z() = 0;
    oracle::TimeGrid times = oracle::fmm_solve(grid, src);
    oracle::save_time_grid(times, out);
    if (g.verbose)
        std::cerr << "solved " << grid.dims.transpose() << " grid, wrote " << out << "\n";
    return 0;
}

int cmd_plot_data(const GlobalOpts&, const std::string& metrics, int bins,
                  const std::string& time_out, const std::string& length_out) {
    auto records = bench::load_metrics_csv(metrics);
    bench::emit_metric_histograms(records, bins, time_out, length_out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"travel-time field learning, planning, and benchmarking"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "global RNG seed");
    app.add_option("--threads", g.threads, "worker threads for benchmarks");
    app.add_flag("--verbose", g.verbose, "progress output on stderr");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "sample a training dataset");
    std::string gen_env = "free_space_2d", gen_out;
    std::uint64_t gen_env_seed = 0;
    int gen_n = 1000;
    gen->add_option("--env", gen_env, "environment name")
        ->check(CLI::IsMember(bench::environment_names()));
    gen->add_option("--env-seed", gen_env_seed, "environment construction seed");
    gen->add_option("--n", gen_n, "number of tuples");
    gen->add_option("--out", gen_out, "output dataset path")->required();

    // train
    auto* tr = app.add_subcommand("train", "fit a time field to a dataset");
    std::string tr_env = "free_space_2d", tr_dataset, tr_out, tr_log, tr_reg = "dirichlet";
    std::uint64_t tr_env_seed = 0;
    train::TrainConfig tr_cfg;
    bool tr_std_schedule = true;
    tr->add_option("--env", tr_env)->check(CLI::IsMember(bench::environment_names()));
    tr->add_option("--env-seed", tr_env_seed);
    tr->add_option("--dataset", tr_dataset)->required();
    tr->add_option("--out", tr_out, "checkpoint path")->required();
    tr->add_option("--log", tr_log, "training log CSV path");
    tr->add_option("--epochs", tr_cfg.epochs);
    tr->add_option("--batch-size", tr_cfg.batch_size);
    tr->add_option("--learning-rate", tr_cfg.learning_rate);
    tr->add_option("--epsilon", tr_cfg.epsilon, "regularizer weight");
    tr->add_option("--regularizer", tr_reg, "dirichlet|viscosity|none");
    tr->add_option("--alpha-init", tr_cfg.alpha_schedule.alpha_init);
    tr->add_option("--alpha-stop", tr_cfg.alpha_schedule.alpha_stop);
    tr->add_option("--warmup-epochs", tr_cfg.alpha_schedule.warmup_epochs);
    tr->add_option("--alpha-delta", tr_cfg.alpha_schedule.delta_per_epoch);
    tr->add_flag("--standard-schedule,!--manual-schedule", tr_std_schedule,
                 "derive the alpha schedule from --epochs");
    tr->add_option("--adam-beta1", tr_cfg.adam_beta1);
    tr->add_option("--adam-beta2", tr_cfg.adam_beta2);

    // plan
    auto* pl = app.add_subcommand("plan", "plan a (possibly multi-grasp) trajectory");
    std::string pl_ckpt, pl_env = "free_space_2d", pl_scene, pl_obj, pl_start, pl_goal,
                pl_grasps, pl_out;
    std::uint64_t pl_env_seed = 0;
    int pl_depth = 3;
    plan::MarchParams pl_march;
    pl->add_option("--checkpoint", pl_ckpt)->required();
    pl->add_option("--env", pl_env)->check(CLI::IsMember(bench::environment_names()));
    pl->add_option("--env-seed", pl_env_seed);
    pl->add_option("--scene", pl_scene, "scene file (overrides --env)");
    pl->add_option("--object", pl_obj)->required();
    pl->add_option("--start", pl_start, "\"x y z roll pitch yaw\"")->required();
    pl->add_option("--goal", pl_goal, "\"x y z roll pitch yaw\"")->required();
    pl->add_option("--grasps", pl_grasps, "grasp list file");
    pl->add_option("--out", pl_out, "plan output path (stdout if omitted)");
    pl->add_option("--depth-limit", pl_depth);
    pl->add_option("--eta", pl_march.eta);
    pl->add_option("--d-s", pl_march.d_s);
    pl->add_option("--max-iters", pl_march.max_iters);

    // bench
    auto* be = app.add_subcommand("bench", "run the benchmark harness");
    std::string be_ckpt, be_env = "free_space_2d", be_out;
    std::uint64_t be_env_seed = 0;
    int be_queries = 100, be_depth = 3;
    be->add_option("--checkpoint", be_ckpt)->required();
    be->add_option("--env", be_env)->check(CLI::IsMember(bench::environment_names()));
    be->add_option("--env-seed", be_env_seed);
    be->add_option("--queries", be_queries);
    be->add_option("--depth-limit", be_depth);
    be->add_option("--out", be_out, "metrics CSV path")->required();

    // oracle
    auto* orc = app.add_subcommand("oracle", "fast-marching ground truth solve");
    std::string or_env = "free_space_2d", or_obj, or_orient = "0 0 0", or_src, or_out;
    std::uint64_t or_env_seed = 0;
    double or_h = 0.01, or_z = 0;
    bool or_planar = false;
    orc->add_option("--env", or_env)->check(CLI::IsMember(bench::environment_names()));
    orc->add_option("--env-seed", or_env_seed);
    orc->add_option("--object", or_obj)->required();
    orc->add_option("--orientation", or_orient, "\"roll pitch yaw\"");
    orc->add_option("--spacing", or_h, "grid spacing");
    orc->add_option("--source", or_src, "\"x y\" (planar) or \"x y z\"")->required();
    orc->add_flag("--planar", or_planar, "2D slice at --z");
    orc->add_option("--z", or_z, "slice height for --planar");
    orc->add_option("--out", or_out)->required();

    // plot-data
    auto* pd = app.add_subcommand("plot-data", "histogram CSVs from benchmark metrics");
    std::string pd_metrics, pd_time = "time_hist.csv", pd_length = "length_hist.csv";
    int pd_bins = 20;
    pd->add_option("--metrics", pd_metrics)->required();
    pd->add_option("--bins", pd_bins);
    pd->add_option("--time-out", pd_time);
    pd->add_option("--length-out", pd_length);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(g, gen_env, gen_env_seed, gen_n, gen_out);
        if (tr->parsed())
            return cmd_train(g, tr_env, tr_env_seed, tr_dataset, tr_out, tr_log, tr_cfg,
                             tr_reg, tr_std_schedule);
        if (pl->parsed())
            return cmd_plan(g, pl_ckpt, pl_env, pl_env_seed, pl_scene, pl_obj, pl_start,
                            pl_goal, pl_grasps, pl_out, pl_depth, pl_march);
        if (be->parsed())
            return cmd_bench(g, be_ckpt, be_env, be_env_seed, be_queries, be_out,
                             be_depth);
        if (orc->parsed())
            return cmd_oracle(g, or_env, or_env_seed, or_obj, or_orient, or_h, or_src,
                              or_out, or_planar, or_z);
        if (pd->parsed()) return cmd_plot_data(g, pd_metrics, pd_bins, pd_time, pd_length);
    } catch (const plan::PlanFailureError& e) {
        std::cerr << "plan failure: " << e.what() << " (coverage "
                  << e.best_coverage << ")\n";
        return 2;
    } catch (const plan::NoConvergenceError& e) {
        std::cerr << "plan failure: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
