#include "tfield/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace tfield::net {

using ad::Var;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'T', 'F', 'C', 'K'};

// softplus(b) == 1 at this bias, so the fresh head outputs ~1
const double kHeadBiasInit = std::log(std::exp(1.0) - 1.0);

Linear init_linear(int out, int in, std::mt19937_64& rng, double weight_scale = 1.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd W(out, in);
    double s = weight_scale / std::sqrt(double(in));
    for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j) W(i, j) = s * normal(rng);
    return Linear{ad::leaf(std::move(W)), ad::leaf(Eigen::MatrixXd::Zero(out, 1))};
}

Var apply_linear(const Linear& l, const Var& x) {
    return ad::add_col(ad::matmul(l.W, x), l.b);
}

Var pose_features(const TimeFieldModel& model, const Var& P) {
    Var arg = ad::scalar_mul(ad::matmul(ad::constant(model.fourier_B), P), 2.0 * M_PI);
    return ad::concat_rows(ad::cos(arg), ad::sin(arg));
}

Var encode_pose_var(const TimeFieldModel& model, const Var& P) {
    Var x = ad::softplus(apply_linear(model.pose1, pose_features(model, P)));
    return ad::softplus(apply_linear(model.pose2, x));
}

Var encode_shape_var(const TimeFieldModel& model, const geom::PointCloud& cloud) {
    if (int(cloud.count()) != model.config.canonical_points)
        throw InvalidInputError("shape encoder expects " +
                                std::to_string(model.config.canonical_points) + " points, got " +
                                std::to_string(cloud.count()));
    Var X = ad::constant(cloud.points);
    Var h = ad::softplus(apply_linear(model.shape1, X));
    h = ad::softplus(apply_linear(model.shape2, h));
    return ad::rowmax(h);  // permutation-invariant pool, shape_latent x 1
}

Var generator(const TimeFieldModel& model, const Var& input) {
    Var x = ad::softplus(apply_linear(model.gen_in, input));
    for (const auto& block : model.blocks) {
        Var h = ad::softplus(apply_linear(block.l1, x));
        x = ad::add(x, apply_linear(block.l2, h));
    }
    return ad::softplus(apply_linear(model.head, x));  // 1 x B, positive
}

}  // namespace

std::vector<Var> TimeFieldModel::parameters() const {
    std::vector<Var> out = {pose1.W, pose1.b, pose2.W, pose2.b,
                            shape1.W, shape1.b, shape2.W, shape2.b,
                            gen_in.W, gen_in.b};
    for (const auto& block : blocks) {
        out.push_back(block.l1.W);
        out.push_back(block.l1.b);
        out.push_back(block.l2.W);
        out.push_back(block.l2.b);
    }
    out.push_back(head.W);
    out.push_back(head.b);
    return out;
}

bool TimeFieldModel::all_finite() const {
    for (const auto& p : parameters())
        if (!p->value.allFinite()) return false;
    return true;
}

TimeFieldModel init_model(const ModelConfig& config) {
    TimeFieldModel m;
    m.config = config;
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    m.fourier_B.resize(config.fourier_features, 6);
    for (int i = 0; i < config.fourier_features; ++i)
        for (int j = 0; j < 6; ++j) m.fourier_B(i, j) = config.sigma_ff * normal(rng);

    m.pose1 = init_linear(config.pose_latent, 2 * config.fourier_features, rng);
    m.pose2 = init_linear(config.pose_latent, config.pose_latent, rng);
    m.shape1 = init_linear(config.shape_hidden, 3, rng);
    m.shape2 = init_linear(config.shape_latent, config.shape_hidden, rng);
    m.gen_in = init_linear(config.gen_width, 2 * config.pose_latent + config.shape_latent, rng);
    m.blocks.resize(config.gen_blocks);
    for (auto& block : m.blocks) {
        block.l1 = init_linear(config.gen_width, config.gen_width, rng);
        // residual branch starts small so the fresh field tracks the metric
        block.l2 = init_linear(config.gen_width, config.gen_width, rng, 0.1);
    }
    m.head = init_linear(1, config.gen_width, rng, 0.1);
    m.head.b->value(0, 0) = kHeadBiasInit;
    return m;
}

ad::Var metric_distance(const Var& Ps, const Var& Pg, double w_rot) {
    Var dt = ad::sub(ad::slice_rows(Ps, 0, 3), ad::slice_rows(Pg, 0, 3));
    Var dr = ad::wrap(ad::sub(ad::slice_rows(Ps, 3, 3), ad::slice_rows(Pg, 3, 3)));
    Var s2 = ad::add(ad::colsum(ad::square(dt)),
                     ad::scalar_mul(ad::colsum(ad::square(dr)), w_rot * w_rot));
    return ad::sqrt(s2);
}

ForwardBatch forward_batch(const TimeFieldModel& model, const geom::PointCloud& cloud,
                           const PoseBatch& ps, const PoseBatch& pg) {
    if (!ps.allFinite() || !pg.allFinite())
        throw InvalidInputError("non-finite pose input");
    if (ps.cols() != pg.cols() || ps.cols() == 0)
        throw InvalidInputError("pose batches must have equal, non-zero size");

    ForwardBatch fb;
    fb.Ps = ad::leaf(ps);
    fb.Pg = ad::leaf(pg);

    Var ls = encode_pose_var(model, fb.Ps);
    Var lg = encode_pose_var(model, fb.Pg);
    Var sym = ad::concat_rows(ad::cwise_max(ls, lg), ad::cwise_min(ls, lg));
    Var shape = ad::tile_cols(encode_shape_var(model, cloud), ps.cols());

    fb.head = generator(model, ad::concat_rows(sym, shape));
    fb.dist = metric_distance(fb.Ps, fb.Pg, model.config.w_rot);
    fb.T = ad::mul(fb.dist, fb.head);
    return fb;
}

Eigen::VectorXd encode_pose(const TimeFieldModel& model, const geom::Pose& pose) {
    if (!pose.as_vector().allFinite()) throw InvalidInputError("non-finite pose");
    ad::NoGradGuard ng;
    Var P = ad::constant(pose.as_vector());
    return encode_pose_var(model, P)->value.col(0);
}

Eigen::VectorXd encode_shape(const TimeFieldModel& model, const geom::PointCloud& cloud) {
    ad::NoGradGuard ng;
    return encode_shape_var(model, cloud)->value.col(0);
}

Eigen::VectorXd symmetric_combine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw InvalidInputError("latent dimension mismatch");
    Eigen::VectorXd out(2 * a.size());
    out.head(a.size()) = a.cwiseMax(b);
    out.tail(a.size()) = a.cwiseMin(b);
    return out;
}

double forward_time(const TimeFieldModel& model, const geom::PointCloud& cloud,
                    const geom::Pose& p_s, const geom::Pose& p_g) {
    ad::NoGradGuard ng;
    return forward_batch(model, cloud, p_s.as_vector(), p_g.as_vector()).T->value(0, 0);
}

InputGradients input_gradients(const TimeFieldModel& model, const geom::PointCloud& cloud,
                               const geom::Pose& p_s, const geom::Pose& p_g) {
    ForwardBatch fb = forward_batch(model, cloud, p_s.as_vector(), p_g.as_vector());
    ad::GradMap grads = ad::backward(ad::sum_all(fb.T), false);
    InputGradients out;
    out.d_ps = grads.at(fb.Ps)->value;
    out.d_pg = grads.at(fb.Pg)->value;
    return out;
}

SpeedPair predicted_speed(const TimeFieldModel& model, const geom::PointCloud& cloud,
                          const geom::Pose& p_s, const geom::Pose& p_g) {
    InputGradients g = input_gradients(model, cloud, p_s, p_g);
    double ns = g.d_ps.norm(), ng = g.d_pg.norm();
    if (ns < 1e-12 || ng < 1e-12) throw DegenerateGradientError();
    return {1.0 / ns, 1.0 / ng};
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    write_u64(out, std::uint64_t(m.rows()));
    write_u64(out, std::uint64_t(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              std::streamsize(sizeof(double)) * m.size());
}

std::uint32_t read_u32(std::istream& in) { std::uint32_t v; in.read(reinterpret_cast<char*>(&v), 4); return v; }
std::uint64_t read_u64(std::istream& in) { std::uint64_t v; in.read(reinterpret_cast<char*>(&v), 8); return v; }
double read_f64(std::istream& in) { double v; in.read(reinterpret_cast<char*>(&v), 8); return v; }
Eigen::MatrixXd read_matrix(std::istream& in) {
    auto rows = Eigen::Index(read_u64(in));
    auto cols = Eigen::Index(read_u64(in));
    Eigen::MatrixXd m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), std::streamsize(sizeof(double)) * m.size());
    return m;
}

}  // namespace

void save_checkpoint(const TimeFieldModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_u32(out, kCheckpointVersion);
    write_u64(out, model.scene_hash);
    write_f64(out, model.train_speed_params.s_const);
    write_f64(out, model.train_speed_params.d_min);
    write_f64(out, model.train_speed_params.d_max);
    write_f64(out, model.train_speed_params.alpha);

    const ModelConfig& c = model.config;
    write_u32(out, std::uint32_t(c.fourier_features));
    write_u32(out, std::uint32_t(c.pose_latent));
    write_u32(out, std::uint32_t(c.shape_latent));
    write_u32(out, std::uint32_t(c.shape_hidden));
    write_u32(out, std::uint32_t(c.gen_width));
    write_u32(out, std::uint32_t(c.gen_blocks));
    write_u32(out, std::uint32_t(c.canonical_points));
    write_f64(out, c.sigma_ff);
    write_f64(out, c.w_rot);
    write_u64(out, c.seed);

    write_matrix(out, model.fourier_B);
    auto params = model.parameters();
    write_u64(out, params.size());
    for (const auto& p : params) write_matrix(out, p->value);
    if (!out) throw FileError("write failure: " + path);
}

TimeFieldModel load_checkpoint(const std::string& path, bool allow_mismatch,
                               std::uint64_t expected_scene_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FileError("not a checkpoint file: " + path);
    std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion)
        throw FileError("unsupported checkpoint version " + std::to_string(version));

    std::uint64_t scene_hash = read_u64(in);
    if (expected_scene_hash != 0 && scene_hash != expected_scene_hash && !allow_mismatch)
        throw FileError("checkpoint scene hash mismatch (trained against a different scene)");

    speed::SpeedParams sp;
    sp.s_const = read_f64(in);
    sp.d_min = read_f64(in);
    sp.d_max = read_f64(in);
    sp.alpha = read_f64(in);

    ModelConfig c;
    c.fourier_features = int(read_u32(in));
    c.pose_latent = int(read_u32(in));
    c.shape_latent = int(read_u32(in));
    c.shape_hidden = int(read_u32(in));
    c.gen_width = int(read_u32(in));
    c.gen_blocks = int(read_u32(in));
    c.canonical_points = int(read_u32(in));
    c.sigma_ff = read_f64(in);
    c.w_rot = read_f64(in);
    c.seed = read_u64(in);

    TimeFieldModel model = init_model(c);
    model.train_speed_params = sp;
    model.scene_hash = scene_hash;
    model.fourier_B = read_matrix(in);
    std::uint64_t n_params = read_u64(in);
    auto params = model.parameters();
    if (n_params != params.size())
        throw FileError("checkpoint parameter count mismatch");
    for (auto& p : params) p->value = read_matrix(in);
    if (!in) throw FileError("truncated checkpoint: " + path);
    return model;
}

}  // namespace tfield::net
