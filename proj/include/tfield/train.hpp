#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tfield/net.hpp"

namespace tfield::train {

struct DatasetTuple {
    std::string object_id;
    geom::Pose p_s;
    geom::Pose p_g;
    double s_star_s = 0;
    double s_star_g = 0;
};

struct Dataset {
    speed::SpeedParams params;
    std::uint64_t scene_hash = 0;
    std::uint64_t seed = 0;
    std::string env;
    std::vector<DatasetTuple> tuples;
};

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

enum class Regularizer { Dirichlet, Viscosity, None };

struct AlphaSchedule {
    double alpha_init = 0.5;
    int warmup_epochs = 0;
    double delta_per_epoch = 0.0;
    double alpha_stop = 1.0;

    double at(int epoch) const;  // 0-based

    /// Hold alpha_init for 10% of the run, then ramp linearly to alpha_stop
    /// over the next 80%.
    static AlphaSchedule standard(int epochs, double alpha_init = 0.5,
                                  double alpha_stop = 1.0);
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 256;
    double learning_rate = 1e-3;
    double epsilon = 0.1;  // regularizer weight
    Regularizer regularizer = Regularizer::Dirichlet;
    AlphaSchedule alpha_schedule;
    std::uint64_t rng_seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

/// Eq. 12 ratio loss; >= 0, zero iff both predictions exact.
double isotropic_loss(double s_star_s, double s_star_g, double s_pred_s, double s_pred_g);

using FieldFn = std::function<ad::Var(const ad::Var& Ps, const ad::Var& Pg)>;

/// Mean over columns of |grad_pg T|^2 (Monte-Carlo Dirichlet energy).
double dirichlet_term_fn(const FieldFn& field, const net::PoseBatch& ps,
                         const net::PoseBatch& pg);

/// Mean over columns of the Laplacian of T w.r.t. p_g (signed).
double viscosity_term_fn(const FieldFn& field, const net::PoseBatch& ps,
                         const net::PoseBatch& pg);

double dirichlet_term(const net::TimeFieldModel& model, const geom::Scene& scene,
                      std::span<const DatasetTuple> batch);
double viscosity_term(const net::TimeFieldModel& model, const geom::Scene& scene,
                      std::span<const DatasetTuple> batch);

struct EpochLog {
    int epoch;
    double alpha;
    double mean_loss;   // data (isotropic) term
    double reg_term;
    double wall_seconds;
};

void save_log(const std::vector<EpochLog>& log, const std::string& path);

/// One Adam step over a fixed batch; returns the pre-step batch data loss.
/// Exposed so the training loop, tests, and timing comparisons share it.
double train_step(net::TimeFieldModel& model, const geom::Scene& scene,
                  std::span<const DatasetTuple> batch, const TrainConfig& config,
                  double alpha, std::vector<Eigen::MatrixXd>& adam_m,
                  std::vector<Eigen::MatrixXd>& adam_v, int step_index,
                  double* reg_value = nullptr);

std::vector<EpochLog> train(net::TimeFieldModel& model, const Dataset& dataset,
                            const geom::Scene& scene, const TrainConfig& config);

/// Mean isotropic loss of the model against (alpha-blended) dataset targets.
double evaluate_data_loss(const net::TimeFieldModel& model, const geom::Scene& scene,
                          std::span<const DatasetTuple> tuples, double alpha = 1.0);

}  // namespace tfield::train
