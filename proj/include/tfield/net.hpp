#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfield/ad.hpp"
#include "tfield/geom.hpp"
#include "tfield/speed.hpp"

namespace tfield::net {

struct ModelConfig {
    int fourier_features = 64;   // F; feature dim is 2F
    double sigma_ff = 1.0;
    int pose_latent = 128;
    int shape_latent = 64;
    int shape_hidden = 64;
    int gen_width = 128;
    int gen_blocks = 4;
    int canonical_points = 64;   // required point-cloud size
    double w_rot = 0.2;          // m/rad, rotation weight in the metric
    std::uint64_t seed = 0;

    bool operator==(const ModelConfig&) const = default;
};

struct Linear {
    ad::Var W, b;
};

struct ResBlock {
    Linear l1, l2;
};

/// Arrival-time field T(p_s, p_g | shape). T factors as metric distance
/// times a strictly positive head, which pins T(p, p) = 0 and makes the
/// initial field approximately the metric itself.
struct TimeFieldModel {
    ModelConfig config;
    Eigen::MatrixXd fourier_B;  // F x 6, frozen at init
    Linear pose1, pose2;
    Linear shape1, shape2;
    Linear gen_in;
    std::vector<ResBlock> blocks;
    Linear head;

    speed::SpeedParams train_speed_params;
    std::uint64_t scene_hash = 0;

    /// All trainable parameters in declared (serialization) order.
    std::vector<ad::Var> parameters() const;
    bool all_finite() const;
};

TimeFieldModel init_model(const ModelConfig& config);

/// Everything produced by one batched forward pass. Columns are samples.
struct ForwardBatch {
    ad::Var Ps, Pg;   // 6 x B leaves
    ad::Var T;        // 1 x B
    ad::Var dist;     // 1 x B, weighted metric distance
    ad::Var head;     // 1 x B, positive factor
};

using PoseBatch = Eigen::Matrix<double, 6, Eigen::Dynamic>;

ForwardBatch forward_batch(const TimeFieldModel& model, const geom::PointCloud& cloud,
                           const PoseBatch& ps, const PoseBatch& pg);

/// In-graph weighted metric between two 6 x B pose leaves.
ad::Var metric_distance(const ad::Var& Ps, const ad::Var& Pg, double w_rot);

// single-sample views used by tests and planning
Eigen::VectorXd encode_pose(const TimeFieldModel& model, const geom::Pose& pose);
Eigen::VectorXd encode_shape(const TimeFieldModel& model, const geom::PointCloud& cloud);
Eigen::VectorXd symmetric_combine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

double forward_time(const TimeFieldModel& model, const geom::PointCloud& cloud,
                    const geom::Pose& p_s, const geom::Pose& p_g);

struct InputGradients {
    Eigen::Matrix<double, 6, 1> d_ps;
    Eigen::Matrix<double, 6, 1> d_pg;
};

InputGradients input_gradients(const TimeFieldModel& model, const geom::PointCloud& cloud,
                               const geom::Pose& p_s, const geom::Pose& p_g);

struct SpeedPair {
    double at_start;
    double at_goal;
};

/// S = 1 / |grad T| at each endpoint (Eikonal relation).
SpeedPair predicted_speed(const TimeFieldModel& model, const geom::PointCloud& cloud,
                          const geom::Pose& p_s, const geom::Pose& p_g);

// checkpoint container: versioned, carries the frozen Fourier matrix, all
// parameters, training SpeedParams, and the scene hash
void save_checkpoint(const TimeFieldModel& model, const std::string& path);
TimeFieldModel load_checkpoint(const std::string& path, bool allow_mismatch = false,
                               std::uint64_t expected_scene_hash = 0);

}  // namespace tfield::net
