#include "tfield/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace tfield::train {

using ad::Var;

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write dataset: " + path);
    out.precision(17);
    out << "# tfield-dataset v1\n";
    out << "# scene_hash " << ds.scene_hash << "\n";
    out << "# speed " << ds.params.s_const << " " << ds.params.d_min << " "
        << ds.params.d_max << " " << ds.params.alpha << "\n";
    out << "# seed " << ds.seed << "\n";
    out << "# env " << ds.env << "\n";
    for (const auto& t : ds.tuples) {
        out << t.object_id;
        auto ps = t.p_s.as_vector(), pg = t.p_g.as_vector();
        for (int i = 0; i < 6; ++i) out << " " << ps[i];
        for (int i = 0; i < 6; ++i) out << " " << pg[i];
        out << " " << t.s_star_s << " " << t.s_star_g << "\n";
    }
    if (!out) throw FileError("write failure: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open dataset: " + path);
    Dataset ds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(1));
            std::string key;
            ss >> key;
            if (key == "scene_hash") ss >> ds.scene_hash;
            else if (key == "speed")
                ss >> ds.params.s_const >> ds.params.d_min >> ds.params.d_max >>
                    ds.params.alpha;
            else if (key == "seed") ss >> ds.seed;
            else if (key == "env") ss >> ds.env;
            continue;
        }
        std::istringstream ss(line);
        DatasetTuple t;
        Eigen::Matrix<double, 6, 1> ps, pg;
        ss >> t.object_id;
        for (int i = 0; i < 6; ++i) ss >> ps[i];
        for (int i = 0; i < 6; ++i) ss >> pg[i];
        if (!(ss >> t.s_star_s >> t.s_star_g))
            throw FileError("malformed dataset row: " + line);
        t.p_s = geom::Pose::from_vector(ps);
        t.p_g = geom::Pose::from_vector(pg);
        ds.tuples.push_back(std::move(t));
    }
    return ds;
}

double AlphaSchedule::at(int epoch) const {
    double a = epoch < warmup_epochs
                   ? alpha_init
                   : alpha_init + delta_per_epoch * (epoch - warmup_epochs);
    return std::min(a, alpha_stop);
}

AlphaSchedule AlphaSchedule::standard(int epochs, double alpha_init, double alpha_stop) {
    AlphaSchedule s;
    s.alpha_init = alpha_init;
    s.alpha_stop = alpha_stop;
    s.warmup_epochs = std::max(1, epochs / 10);
    int ramp = std::max(1, (epochs * 8) / 10);
    s.delta_per_epoch = (alpha_stop - alpha_init) / ramp;
    return s;
}

double isotropic_loss(double s_star_s, double s_star_g, double s_pred_s, double s_pred_g) {
    if (s_star_s <= 0 || s_star_g <= 0 || s_pred_s <= 0 || s_pred_g <= 0)
        throw InvalidInputError("isotropic loss requires positive speeds");
    return s_star_s / s_pred_s + s_pred_s / s_star_s + s_star_g / s_pred_g +
           s_pred_g / s_star_g - 4.0;
}

namespace {

struct Group {
    std::string object_id;
    std::vector<std::size_t> indices;
};

std::vector<Group> group_by_object(std::span<const DatasetTuple> batch) {
    std::map<std::string, std::vector<std::size_t>> by_id;
    for (std::size_t i = 0; i < batch.size(); ++i)
        by_id[batch[i].object_id].push_back(i);
    std::vector<Group> out;
    for (auto& [id, idx] : by_id) out.push_back({id, std::move(idx)});
    return out;
}

net::PoseBatch gather_poses(std::span<const DatasetTuple> batch,
                            const std::vector<std::size_t>& idx, bool start) {
    net::PoseBatch P(6, Eigen::Index(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto& t = batch[idx[j]];
        P.col(Eigen::Index(j)) = (start ? t.p_s : t.p_g).as_vector();
    }
    return P;
}

/// s*/S + S/s* with S = 1/|G|, i.e. s*|G| + 1/(s*|G|), as a 1xB row.
Var ratio_terms(const Var& grad_cols, const Eigen::RowVectorXd& s_star) {
    Var norm = ad::sqrt(ad::colsum(ad::square(grad_cols)));
    Var prod = ad::mul(norm, ad::constant(s_star));
    Var ones = ad::constant(Eigen::MatrixXd::Ones(1, s_star.cols()));
    return ad::add(prod, ad::div(ones, prod));
}

/// Laplacian of T w.r.t. Pg per sample (1xB) via six second-order passes.
Var laplacian_rows(const Var& G_g, const Var& Pg, bool create_graph) {
    Var lap;
    for (int i = 0; i < 6; ++i) {
        ad::GradMap second =
            ad::backward(ad::sum_all(ad::slice_rows(G_g, i, 1)), create_graph);
        Var row = ad::slice_rows(second.at(Pg), i, 1);
        lap = lap ? ad::add(lap, row) : row;
    }
    return lap;
}

struct BatchGraph {
    Var data_sum;  // 1x1, sum of per-sample isotropic losses
    Var reg_sum;   // 1x1, sum of per-sample regularizer penalties (may be null)
    int count = 0;
};

BatchGraph build_batch_graph(const net::TimeFieldModel& model, const geom::Scene& scene,
                             std::span<const DatasetTuple> batch, double alpha,
                             Regularizer reg) {
    BatchGraph out;
    const double s_const = model.train_speed_params.s_const;
    for (const auto& group : group_by_object(batch)) {
        const geom::PointCloud& cloud = scene.object(group.object_id);
        net::PoseBatch ps = gather_poses(batch, group.indices, true);
        net::PoseBatch pg = gather_poses(batch, group.indices, false);
        const Eigen::Index B = ps.cols();

        net::ForwardBatch fb = net::forward_batch(model, cloud, ps, pg);
        ad::GradMap grads = ad::backward(ad::sum_all(fb.T), true);
        Var G_s = grads.at(fb.Ps);
        Var G_g = grads.at(fb.Pg);

        Eigen::RowVectorXd star_s(B), star_g(B);
        for (Eigen::Index j = 0; j < B; ++j) {
            const auto& t = batch[group.indices[std::size_t(j)]];
            star_s[j] = speed::scheduled_speed(t.s_star_s, alpha, s_const);
            star_g[j] = speed::scheduled_speed(t.s_star_g, alpha, s_const);
        }

        Var data = ad::add_scalar(
            ad::sum_all(ad::add(ratio_terms(G_s, star_s), ratio_terms(G_g, star_g))),
            -4.0 * double(B));
        out.data_sum = out.data_sum ? ad::add(out.data_sum, data) : data;

        if (reg == Regularizer::Dirichlet) {
            Var d = ad::sum_all(ad::colsum(ad::square(G_g)));
            out.reg_sum = out.reg_sum ? ad::add(out.reg_sum, d) : d;
        } else if (reg == Regularizer::Viscosity) {
            Var lap = laplacian_rows(G_g, fb.Pg, true);
            Var v = ad::sum_all(ad::square(lap));
            out.reg_sum = out.reg_sum ? ad::add(out.reg_sum, v) : v;
        }
        out.count += int(B);
    }
    return out;
}

}  // namespace

double dirichlet_term_fn(const FieldFn& field, const net::PoseBatch& ps,
                         const net::PoseBatch& pg) {
    if (ps.cols() == 0) throw InvalidInputError("empty batch");
    Var Ps = ad::leaf(ps), Pg = ad::leaf(pg);
    Var T = field(Ps, Pg);
    ad::GradMap grads = ad::backward(ad::sum_all(T), false);
    const Eigen::MatrixXd& G = ad::val(grads.at(Pg));
    return G.colwise().squaredNorm().mean();
}

double viscosity_term_fn(const FieldFn& field, const net::PoseBatch& ps,
                         const net::PoseBatch& pg) {
    Var Ps = ad::leaf(ps), Pg = ad::leaf(pg);
    Var T = field(Ps, Pg);
    ad::GradMap grads = ad::backward(ad::sum_all(T), true);
    Var lap = laplacian_rows(grads.at(Pg), Pg, false);
    return ad::val(lap).mean();
}

double dirichlet_term(const net::TimeFieldModel& model, const geom::Scene& scene,
                      std::span<const DatasetTuple> batch) {
    if (batch.empty()) throw InvalidInputError("empty batch");
    double sum = 0;
    for (const auto& group : group_by_object(batch)) {
        net::ForwardBatch fb =
            net::forward_batch(model, scene.object(group.object_id),
                               gather_poses(batch, group.indices, true),
                               gather_poses(batch, group.indices, false));
        ad::GradMap grads = ad::backward(ad::sum_all(fb.T), false);
        sum += ad::val(grads.at(fb.Pg)).colwise().squaredNorm().sum();
    }
    return sum / double(batch.size());
}

double viscosity_term(const net::TimeFieldModel& model, const geom::Scene& scene,
                      std::span<const DatasetTuple> batch) {
    if (batch.empty()) throw InvalidInputError("empty batch");
    double sum = 0;
    for (const auto& group : group_by_object(batch)) {
        net::ForwardBatch fb =
            net::forward_batch(model, scene.object(group.object_id),
                               gather_poses(batch, group.indices, true),
                               gather_poses(batch, group.indices, false));
        ad::GradMap grads = ad::backward(ad::sum_all(fb.T), true);
        Var lap = laplacian_rows(grads.at(fb.Pg), fb.Pg, false);
        sum += ad::val(lap).sum();
    }
    return sum / double(batch.size());
}

double train_step(net::TimeFieldModel& model, const geom::Scene& scene,
                  std::span<const DatasetTuple> batch, const TrainConfig& config,
                  double alpha, std::vector<Eigen::MatrixXd>& adam_m,
                  std::vector<Eigen::MatrixXd>& adam_v, int step_index,
                  double* reg_value) {
    Regularizer reg = config.epsilon > 0 ? config.regularizer : Regularizer::None;
    BatchGraph bg = build_batch_graph(model, scene, batch, alpha, reg);
    const double inv_n = 1.0 / double(bg.count);

    Var loss = ad::scalar_mul(bg.data_sum, inv_n);
    double data_loss = ad::val(loss)(0, 0);
    if (reg_value)
        *reg_value = bg.reg_sum ? ad::val(bg.reg_sum)(0, 0) * inv_n : 0.0;
    if (bg.reg_sum)
        loss = ad::add(loss, ad::scalar_mul(bg.reg_sum, config.epsilon * inv_n));

    ad::GradMap grads = ad::backward(loss, false);

    auto params = model.parameters();
    if (adam_m.size() != params.size()) {
        adam_m.clear();
        adam_v.clear();
        for (const auto& p : params) {
            adam_m.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
            adam_v.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
        }
    }
    const double b1 = config.adam_beta1, b2 = config.adam_beta2;
    const double bias1 = 1.0 - std::pow(b1, step_index + 1);
    const double bias2 = 1.0 - std::pow(b2, step_index + 1);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Eigen::MatrixXd& g = ad::val(grads.at(params[i]));
        adam_m[i] = b1 * adam_m[i] + (1.0 - b1) * g;
        adam_v[i] = b2 * adam_v[i].array() + (1.0 - b2) * g.array().square();
        Eigen::ArrayXXd update =
            (adam_m[i].array() / bias1) /
            ((adam_v[i].array() / bias2).sqrt() + config.adam_eps);
        params[i]->value.array() -= config.learning_rate * update;
    }
    return data_loss;
}

std::vector<EpochLog> train(net::TimeFieldModel& model, const Dataset& dataset,
                            const geom::Scene& scene, const TrainConfig& config) {
    if (dataset.scene_hash != 0 && model.scene_hash != 0 &&
        dataset.scene_hash != model.scene_hash)
        throw InvalidInputError("dataset scene hash does not match model scene hash");
    if (dataset.tuples.empty()) throw InvalidInputError("empty dataset");

    model.train_speed_params = dataset.params;
    if (model.scene_hash == 0) model.scene_hash = dataset.scene_hash;

    auto params = model.parameters();
    std::vector<Eigen::MatrixXd> adam_m, adam_v;
    for (const auto& p : params) {
        adam_m.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
        adam_v.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    }

    std::mt19937_64 rng(config.rng_seed);
    std::vector<std::size_t> order(dataset.tuples.size());
    std::iota(order.begin(), order.end(), std::size_t(0));

    std::vector<EpochLog> log;
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        double alpha = config.alpha_schedule.at(epoch);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0, reg_sum = 0;
        int batches = 0;
        std::vector<DatasetTuple> batch;
        for (std::size_t pos = 0; pos < order.size(); pos += std::size_t(config.batch_size)) {
            batch.clear();
            for (std::size_t j = pos;
                 j < std::min(order.size(), pos + std::size_t(config.batch_size)); ++j)
                batch.push_back(dataset.tuples[order[j]]);
            double reg = 0;
            double loss = train_step(model, scene, batch, config, alpha, adam_m, adam_v,
                                     step++, &reg);
            if (!std::isfinite(loss)) throw NanLossError(epoch, batches);
            loss_sum += loss;
            reg_sum += reg;
            ++batches;
        }
        if (!model.all_finite()) throw NanLossError(epoch, batches);

        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.push_back({epoch, alpha, loss_sum / batches, reg_sum / batches, wall});
    }
    return log;
}

double evaluate_data_loss(const net::TimeFieldModel& model, const geom::Scene& scene,
                          std::span<const DatasetTuple> tuples, double alpha) {
    if (tuples.empty()) throw InvalidInputError("empty evaluation set");
    const double s_const = model.train_speed_params.s_const;
    double sum = 0;
    for (const auto& group : group_by_object(tuples)) {
        const geom::PointCloud& cloud = scene.object(group.object_id);
        net::PoseBatch ps = gather_poses(tuples, group.indices, true);
        net::PoseBatch pg = gather_poses(tuples, group.indices, false);
        net::ForwardBatch fb = net::forward_batch(model, cloud, ps, pg);
        ad::GradMap grads = ad::backward(ad::sum_all(fb.T), false);
        Eigen::RowVectorXd ns = ad::val(grads.at(fb.Ps)).colwise().norm();
        Eigen::RowVectorXd ng = ad::val(grads.at(fb.Pg)).colwise().norm();
        for (Eigen::Index j = 0; j < ns.cols(); ++j) {
            const auto& t = tuples[group.indices[std::size_t(j)]];
            double ss = speed::scheduled_speed(t.s_star_s, alpha, s_const);
            double sg = speed::scheduled_speed(t.s_star_g, alpha, s_const);
            sum += isotropic_loss(ss, sg, 1.0 / ns[j], 1.0 / ng[j]);
        }
    }
    return sum / double(tuples.size());
}

void save_log(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write training log: " + path);
    out << "epoch,alpha,mean_loss,reg_term,wall_seconds\n";
    out.precision(17);
    for (const auto& row : log)
        out << row.epoch << "," << row.alpha << "," << row.mean_loss << ","
            << row.reg_term << "," << row.wall_seconds << "\n";
}

}  // namespace tfield::train
