#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tfield/oracle.hpp"
#include "tfield/plan.hpp"
#include "tfield/train.hpp"

namespace tfield::bench {

/// A named procedural environment: scene, sampling mask, and speed model.
struct Environment {
    std::string name;
    geom::Scene scene;
    speed::PoseMask mask;
    speed::SpeedParams speed_params;
    speed::ReachabilityModel reach = speed::ReachabilityModel::always();
    std::uint64_t scene_hash = 0;
};

std::vector<std::string> environment_names();

/// Deterministic procedural construction; the same (name, seed) always
/// yields an identical scene and hash.
Environment make_environment(const std::string& name, std::uint64_t seed = 0);

/// Surface-sampled axis-aligned box, spacing-controlled, deterministic.
geom::PointCloud sample_box_surface(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                                    double spacing);

train::Dataset generate_dataset(const Environment& env, int n_tuples, std::uint64_t seed);

struct MetricsRecord {
    double planning_time_s = 0;
    std::optional<double> length_m;  // present only on success
    bool success = false;
    int segments = 0;
    std::string env;
    std::string object_id;
    std::uint64_t seed = 0;
};

struct BenchmarkSummary {
    int queries = 0;
    double success_rate = 0;
    double mean_time_s = 0, std_time_s = 0;
    double mean_length_m = 0, std_length_m = 0;
};

struct BenchmarkResult {
    std::vector<MetricsRecord> records;
    BenchmarkSummary summary;
};

void save_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);
std::vector<MetricsRecord> load_metrics_csv(const std::string& path);
BenchmarkSummary summarize(const std::vector<MetricsRecord>& records);

struct BenchmarkOptions {
    int n_queries = 100;
    std::uint64_t seed = 0;
    int threads = 1;
    double validation_resolution_m = 0.001;
    plan::MarchParams march;
    int depth_limit = 3;
    std::vector<plan::Grasp> grasps;       // default: one identity grasp
    const plan::IKProvider* ik = nullptr;  // default: always feasible
};

/// Random valid start/goal pairs -> omanip -> 1 mm validation. Success
/// requires both a returned plan and a collision-free check. Aborts if the
/// checkpoint was trained against a different scene.
BenchmarkResult run_benchmark(const net::TimeFieldModel& model, const Environment& env,
                              const BenchmarkOptions& options);

/// Regular (x, y) sampling of T(. , goal) at fixed z/orientation, CSV rows
/// "x,y,t".
void write_field_slice(const net::TimeFieldModel& model, const geom::PointCloud& cloud,
                       const geom::Pose& goal, double z,
                       const Eigen::AlignedBox3d& bounds, int samples_per_axis,
                       const std::string& path);

void write_trajectory_csv(const plan::Trajectory& traj, const std::string& path);

/// Histogram CSV (bin_low,bin_high,count) for planning time and length.
void emit_metric_histograms(const std::vector<MetricsRecord>& records, int bins,
                            const std::string& time_path, const std::string& length_path);

}  // namespace tfield::bench
