#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <random>

#include "tfield/net.hpp"

using namespace tfield;
using geom::PointCloud;
using geom::Pose;

namespace {

PointCloud random_cloud(int n, std::mt19937_64& rng, double scale = 0.05) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Eigen::Matrix3Xd pts(3, n);
    for (int i = 0; i < n; ++i) pts.col(i) << u(rng), u(rng), u(rng);
    return PointCloud(std::move(pts));
}

Pose random_pose(std::mt19937_64& rng, double scale = 0.5) {
    std::uniform_real_distribution<double> t(-scale, scale), r(-3.0, 3.0);
    return Pose(t(rng), t(rng), t(rng), r(rng), r(rng), r(rng));
}

net::ModelConfig small_config() {
    net::ModelConfig c;
    c.fourier_features = 8;
    c.pose_latent = 16;
    c.shape_latent = 8;
    c.shape_hidden = 8;
    c.gen_width = 16;
    c.gen_blocks = 2;
    c.canonical_points = 16;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("symmetric_combine") {
    Eigen::VectorXd a(2), b(2);
    a << 1, 3;
    b << 2, 2;
    Eigen::VectorXd out = net::symmetric_combine(a, b);
    REQUIRE(out.size() == 4);
    CHECK(out(0) == 2);
    CHECK(out(1) == 3);
    CHECK(out(2) == 1);
    CHECK(out(3) == 2);
    CHECK(net::symmetric_combine(b, a) == out);
    Eigen::VectorXd same = net::symmetric_combine(a, a);
    CHECK(same.head(2) == a);
    CHECK(same.tail(2) == a);
    Eigen::VectorXd c(3);
    c.setZero();
    CHECK_THROWS_AS(net::symmetric_combine(a, c), InvalidInputError);
}

TEST_CASE("time field symmetry and boundary") {
    net::TimeFieldModel model = net::init_model(small_config());
    std::mt19937_64 rng(5);
    PointCloud cloud = random_cloud(model.config.canonical_points, rng);

    for (int i = 0; i < 1000; ++i) {
        Pose a = random_pose(rng), b = random_pose(rng);
        double tab = net::forward_time(model, cloud, a, b);
        double tba = net::forward_time(model, cloud, b, a);
        CHECK(std::abs(tab - tba) <= 1e-6);
        CHECK(tab >= 0.0);
    }
    for (int i = 0; i < 100; ++i) {
        Pose p = random_pose(rng);
        CHECK(net::forward_time(model, cloud, p, p) == 0.0);
    }
}

TEST_CASE("zero fourier matrix collapses the pose encoding") {
    net::TimeFieldModel model = net::init_model(small_config());
    model.fourier_B.setZero();
    std::mt19937_64 rng(6);
    Eigen::VectorXd l1 = net::encode_pose(model, random_pose(rng));
    Eigen::VectorXd l2 = net::encode_pose(model, random_pose(rng));
    CHECK((l1 - l2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pose encoding is deterministic") {
    net::TimeFieldModel model = net::init_model(small_config());
    Pose p(0.1, -0.2, 0.3, 0.4, -0.5, 0.6);
    CHECK((net::encode_pose(model, p) - net::encode_pose(model, p)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK_THROWS_AS(
        net::encode_pose(model, Pose(std::numeric_limits<double>::quiet_NaN(), 0, 0, 0, 0, 0)),
        InvalidInputError);
}

TEST_CASE("shape encoding is permutation invariant") {
    net::TimeFieldModel model = net::init_model(small_config());
    std::mt19937_64 rng(7);
    PointCloud cloud = random_cloud(model.config.canonical_points, rng);
    Eigen::VectorXd base = net::encode_shape(model, cloud);

    std::vector<int> perm(cloud.count());
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 100; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        Eigen::Matrix3Xd shuffled(3, cloud.points.cols());
        for (std::size_t i = 0; i < perm.size(); ++i)
            shuffled.col(Eigen::Index(i)) = cloud.points.col(perm[i]);
        Eigen::VectorXd latent = net::encode_shape(model, PointCloud(shuffled));
        CHECK((latent - base).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("shape encoding distinguishes shapes and scales") {
    net::TimeFieldModel model = net::init_model(small_config());
    std::mt19937_64 rng(8);
    PointCloud a = random_cloud(model.config.canonical_points, rng);
    PointCloud b = random_cloud(model.config.canonical_points, rng);
    PointCloud scaled(Eigen::Matrix3Xd(2.0 * a.points));
    CHECK((net::encode_shape(model, a) - net::encode_shape(model, b)).cwiseAbs().maxCoeff() >
          0.0);
    CHECK((net::encode_shape(model, a) - net::encode_shape(model, scaled))
              .cwiseAbs()
              .maxCoeff() > 0.0);
    CHECK_THROWS_AS(net::encode_shape(model, random_cloud(5, rng)), InvalidInputError);
}

TEST_CASE("fresh model approximates the pose metric") {
    net::TimeFieldModel model = net::init_model(small_config());
    std::mt19937_64 rng(9);
    PointCloud cloud = random_cloud(model.config.canonical_points, rng);
    for (int i = 0; i < 50; ++i) {
        Pose a = random_pose(rng), b = random_pose(rng);
        double t = net::forward_time(model, cloud, a, b);
        double d = geom::pose_distance(a, b, model.config.w_rot);
        CHECK(t == doctest::Approx(d).epsilon(0.25));
    }
}

TEST_CASE("input gradients match central finite differences") {
    net::TimeFieldModel model = net::init_model(small_config());
    std::mt19937_64 rng(10);
    PointCloud cloud = random_cloud(model.config.canonical_points, rng);
    const double h = 1e-4;

    for (int trial = 0; trial < 25; ++trial) {
        Pose a = random_pose(rng), b = random_pose(rng);
        net::InputGradients g = net::input_gradients(model, cloud, a, b);

        for (int i = 0; i < 6; ++i) {
            auto perturb = [&](const Pose& p, double delta) {
                Pose q = p;
                if (i < 3)
                    q.translation[i] += delta;
                else
                    q.rotation[i - 3] += delta;
                return q;
            };
            double fd_s = (net::forward_time(model, cloud, perturb(a, h), b) -
                           net::forward_time(model, cloud, perturb(a, -h), b)) /
                          (2 * h);
            double fd_g = (net::forward_time(model, cloud, a, perturb(b, h)) -
                           net::forward_time(model, cloud, a, perturb(b, -h))) /
                          (2 * h);
            double denom_s = std::max(std::abs(fd_s), 1e-3);
            double denom_g = std::max(std::abs(fd_g), 1e-3);
            CHECK(std::abs(g.d_ps(i) - fd_s) / denom_s < 1e-4);
            CHECK(std::abs(g.d_pg(i) - fd_g) / denom_g < 1e-4);
        }
    }
}

TEST_CASE("gradient symmetry under argument swap") {
    net::TimeFieldModel model = net::init_model(small_config());
    std::mt19937_64 rng(11);
    PointCloud cloud = random_cloud(model.config.canonical_points, rng);
    for (int i = 0; i < 20; ++i) {
        Pose a = random_pose(rng), b = random_pose(rng);
        net::InputGradients ab = net::input_gradients(model, cloud, a, b);
        net::InputGradients ba = net::input_gradients(model, cloud, b, a);
        CHECK((ab.d_ps - ba.d_pg).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((ab.d_pg - ba.d_ps).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("predicted speed is near the initial head value in free space") {
    net::TimeFieldModel model = net::init_model(small_config());
    std::mt19937_64 rng(12);
    PointCloud cloud = random_cloud(model.config.canonical_points, rng);
    for (int i = 0; i < 20; ++i) {
        // translation-only offsets: the metric gradient has unit norm there
        Pose a = random_pose(rng), b = random_pose(rng);
        b.rotation = a.rotation;
        net::SpeedPair s = net::predicted_speed(model, cloud, a, b);
        CHECK(s.at_start > 0.0);
        CHECK(s.at_goal > 0.0);
        CHECK(s.at_start == doctest::Approx(1.0).epsilon(0.5));
        CHECK(s.at_goal == doctest::Approx(1.0).epsilon(0.5));
    }
}

TEST_CASE("checkpoint round trip is bitwise stable") {
    net::TimeFieldModel model = net::init_model(small_config());
    model.scene_hash = 0xDEADBEEFuLL;
    model.train_speed_params.d_min = 0.07;
    std::mt19937_64 rng(13);
    PointCloud cloud = random_cloud(model.config.canonical_points, rng);
    Pose a = random_pose(rng), b = random_pose(rng);
    double before = net::forward_time(model, cloud, a, b);

    std::string path = "test_net_ckpt.bin";
    net::save_checkpoint(model, path);

    SUBCASE("values survive") {
        net::TimeFieldModel back = net::load_checkpoint(path, false, model.scene_hash);
        CHECK(back.train_speed_params.d_min == 0.07);
        CHECK(net::forward_time(back, cloud, a, b) == before);
    }
    SUBCASE("scene hash mismatch is refused unless overridden") {
        CHECK_THROWS_AS(net::load_checkpoint(path, false, 1234), Error);
        net::TimeFieldModel forced = net::load_checkpoint(path, true, 1234);
        CHECK(net::forward_time(forced, cloud, a, b) == before);
    }
    std::remove(path.c_str());
}
