#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/mlp.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

Matrix make_matrix(std::size_t r, std::size_t c, std::initializer_list<double> v) {
    Matrix m(r, c);
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
}

double rel_err(double a, double b, double floor_scale) {
    return std::abs(a - b) / std::max(std::abs(b), floor_scale);
}

}  // namespace

TEST_CASE("matmul matches hand arithmetic") {
    Matrix a = make_matrix(2, 3, {1, 2, 3, 4, 5, 6});
    Matrix b = make_matrix(3, 2, {7, 8, 9, 10, 11, 12});
    Matrix c;
    matmul(a, b, c);
    REQUIRE(c.rows == 2);
    REQUIRE(c.cols == 2);
    CHECK(c.at(0, 0) == 58.0);
    CHECK(c.at(0, 1) == 64.0);
    CHECK(c.at(1, 0) == 139.0);
    CHECK(c.at(1, 1) == 154.0);
}

TEST_CASE("matmul rejects mismatched shapes") {
    Matrix a(2, 3), b(2, 2), c;
    CHECK_THROWS_AS(matmul(a, b, c), ConfigError);
}

TEST_CASE("transposed products agree with explicit transpose") {
    auto rng = make_rng({9, 1});
    std::uniform_real_distribution<double> u(-1, 1);
    Matrix a(4, 3), b(4, 5);
    for (double& v : a.data) v = u(rng);
    for (double& v : b.data) v = u(rng);
    Matrix at(3, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) at.at(j, i) = a.at(i, j);
    Matrix direct, fused;
    matmul(at, b, direct);
    matmul_tn(a, b, fused);
    for (std::size_t i = 0; i < direct.data.size(); ++i)
        CHECK(fused.data[i] == Catch::Approx(direct.data[i]).margin(1e-12));
}

TEST_CASE("forward with zero params is uniform over classes") {
    MlpArchitecture arch({4, 3, 5});
    ParamVector params(arch.param_count(), 0.0);
    Matrix x = make_matrix(2, 4, {1, 2, 3, 4, -1, 0, 1, 2});
    Matrix p = forward(params, arch, x);
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j)
            CHECK(p.at(i, j) == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("single-layer identity net predicts the hot index") {
    MlpArchitecture arch({3, 3});
    ParamVector params(arch.param_count(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) params[arch.weight_offset(0) + i * 3 + i] = 5.0;
    Matrix x(3, 3);
    for (std::size_t i = 0; i < 3; ++i) x.at(i, i) = 1.0;
    Matrix p = forward(params, arch, x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(argmax_row(p, i) == int(i));
}

TEST_CASE("forward rows are strictly positive distributions") {
    MlpArchitecture arch({6, 8, 4});
    ParamVector params = init_params(arch, 1234);
    auto rng = make_rng({5, 6});
    std::uniform_real_distribution<double> u(-2, 2);
    Matrix x(2, 6);
    for (double& v : x.data) v = u(rng);
    Matrix p = forward(params, arch, x);
    for (std::size_t i = 0; i < p.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < p.cols; ++j) {
            CHECK(p.at(i, j) > 0.0);
            sum += p.at(i, j);
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("softmax is stable for large logits") {
    MlpArchitecture arch({2, 2});
    ParamVector params(arch.param_count(), 0.0);
    params[arch.weight_offset(0)] = 500.0;  // logit ~1000 on input 2
    Matrix x = make_matrix(1, 2, {2, 0});
    Matrix p = forward(params, arch, x);
    CHECK(std::isfinite(p.at(0, 0)));
    CHECK(p.at(0, 0) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("cross entropy hand values") {
    Matrix uniform(1, 10);
    for (double& v : uniform.data) v = 0.1;
    CHECK(cross_entropy_loss(uniform, {3}) ==
          Catch::Approx(std::log(10.0)).margin(1e-12));

    Matrix half = make_matrix(1, 2, {0.5, 0.5});
    CHECK(cross_entropy_loss(half, {0}) == Catch::Approx(std::log(2.0)).margin(1e-12));

    Matrix onehot = make_matrix(1, 2, {1.0, 0.0});
    CHECK(cross_entropy_loss(onehot, {0}) == Catch::Approx(0.0).margin(1e-12));

    CHECK_THROWS_AS(cross_entropy_loss(half, {2}), InputError);
    CHECK_THROWS_AS(cross_entropy_loss(half, {-1}), InputError);
}

TEST_CASE("batch loss equals mean of per-sample losses") {
    Matrix p = make_matrix(3, 2, {0.9, 0.1, 0.3, 0.7, 0.5, 0.5});
    std::vector<int> y = {0, 1, 0};
    double batch = cross_entropy_loss(p, y);
    double mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        Matrix row(1, 2);
        row.at(0, 0) = p.at(i, 0);
        row.at(0, 1) = p.at(i, 1);
        mean += cross_entropy_loss(row, {y[i]});
    }
    mean /= 3.0;
    CHECK(batch == Catch::Approx(mean).margin(1e-12));
}

TEST_CASE("backward matches finite differences on a small net") {
    MlpArchitecture arch({4, 2, 2});
    ParamVector params = init_params(arch, 77);
    auto rng = make_rng({7, 8});
    std::uniform_real_distribution<double> u(0, 1);
    Matrix x(3, 4);
    for (double& v : x.data) v = u(rng);
    std::vector<int> y = {0, 1, 0};

    auto [loss, grad] = backward(params, arch, x, y);
    std::vector<double> fd = oracle::fd_param_gradient(params, arch, x, y, 1e-5);
    REQUIRE(grad.size() == fd.size());
    CHECK(loss == Catch::Approx(cross_entropy_loss(forward(params, arch, x), y))
                      .margin(1e-12));
    for (std::size_t j = 0; j < grad.size(); ++j)
        CHECK(rel_err(grad[j], fd[j], 1e-3) < 1e-6);
}

TEST_CASE("backward matches finite differences up to three hidden layers") {
    const std::vector<std::vector<std::size_t>> shapes = {
        {3, 4, 2}, {5, 4, 3, 2}, {4, 5, 4, 3, 3}};
    for (const auto& sizes : shapes) {
        MlpArchitecture arch(sizes);
        auto rng = make_rng({11, sizes.size()});
        std::uniform_real_distribution<double> u(0, 1);
        Matrix x(4, sizes.front());
        for (double& v : x.data) v = u(rng);
        std::vector<int> y;
        for (std::size_t i = 0; i < 4; ++i)
            y.push_back(int(i % sizes.back()));

        // A sample that silences a whole hidden layer cascades exact zeros
        // into downstream pre-activations, parking units on the ReLU kink
        // where finite differences and any subgradient choice disagree.
        // Jitter the params (nonzero biases included) and redraw until every
        // hidden layer stays live for every sample.
        ParamVector params;
        bool live = false;
        for (int attempt = 0; attempt < 32 && !live; ++attempt) {
            params = init_params(arch, 31 + sizes.size());
            std::uniform_real_distribution<double> jitter(-0.3, 0.3);
            for (double& p : params) p += jitter(rng);
            std::vector<Matrix> acts;
            detail::forward_impl(params, arch, x, &acts);
            live = true;
            for (std::size_t a = 1; a + 1 < acts.size(); ++a)
                for (std::size_t i = 0; i < acts[a].rows; ++i) {
                    bool any = false;
                    for (std::size_t j = 0; j < acts[a].cols; ++j)
                        if (acts[a].at(i, j) > 0.0) any = true;
                    if (!any) live = false;
                }
        }
        REQUIRE(live);

        auto [loss, grad] = backward(params, arch, x, y);
        std::vector<double> fd = oracle::fd_param_gradient(params, arch, x, y, 1e-5);
        double worst = 0.0;
        for (std::size_t j = 0; j < grad.size(); ++j)
            worst = std::max(worst, rel_err(grad[j], fd[j], 1e-3));
        INFO("layers " << sizes.size() << " worst rel err " << worst);
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("zero input and zero params leave only output-bias gradients") {
    MlpArchitecture arch({3, 2, 2});
    ParamVector params(arch.param_count(), 0.0);
    Matrix x(2, 3);
    std::vector<int> y = {0, 0};
    auto [loss, grad] = backward(params, arch, x, y);
    CHECK(loss == Catch::Approx(std::log(2.0)).margin(1e-12));
    const std::size_t ob = arch.bias_offset(1);
    for (std::size_t j = 0; j < grad.size(); ++j) {
        if (j == ob)
            CHECK(grad[j] == Catch::Approx(-0.5).margin(1e-12));
        else if (j == ob + 1)
            CHECK(grad[j] == Catch::Approx(0.5).margin(1e-12));
        else
            CHECK(grad[j] == 0.0);
    }
}

TEST_CASE("duplicating a sample leaves the mean gradient unchanged") {
    MlpArchitecture arch({3, 3, 2});
    ParamVector params = init_params(arch, 5);
    Matrix one = make_matrix(1, 3, {0.2, -0.4, 0.9});
    Matrix two(2, 3);
    for (std::size_t j = 0; j < 3; ++j) {
        two.at(0, j) = one.at(0, j);
        two.at(1, j) = one.at(0, j);
    }
    auto [l1, g1] = backward(params, arch, one, {1});
    auto [l2, g2] = backward(params, arch, two, {1, 1});
    CHECK(l1 == Catch::Approx(l2).margin(1e-15));
    for (std::size_t j = 0; j < g1.size(); ++j)
        CHECK(g1[j] == Catch::Approx(g2[j]).margin(1e-15));
}

TEST_CASE("forward and backward are pure") {
    MlpArchitecture arch({4, 3, 2});
    ParamVector params = init_params(arch, 99);
    Matrix x = make_matrix(2, 4, {1, 0, 0.5, 0.25, 0, 1, 0.75, 0.5});
    std::vector<int> y = {0, 1};
    Matrix p1 = forward(params, arch, x);
    Matrix p2 = forward(params, arch, x);
    CHECK(p1.data == p2.data);
    auto r1 = backward(params, arch, x, y);
    auto r2 = backward(params, arch, x, y);
    CHECK(r1.first == r2.first);
    CHECK(r1.second == r2.second);
}

TEST_CASE("non-finite parameters are rejected") {
    MlpArchitecture arch({2, 2});
    ParamVector params(arch.param_count(), 0.0);
    params[0] = std::numeric_limits<double>::infinity();
    Matrix x = make_matrix(1, 2, {1, 1});
    CHECK_THROWS_AS(backward(params, arch, x, {0}), NumericError);
}

TEST_CASE("init params respects fan-based bounds and zero biases") {
    MlpArchitecture arch({10, 6, 4});
    ParamVector params = init_params(arch, 2024);
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const double a = std::sqrt(6.0 / double(arch.layer_sizes[l] +
                                                arch.layer_sizes[l + 1]));
        const double* w = params.data() + arch.weight_offset(l);
        for (std::size_t i = 0;
             i < arch.layer_sizes[l] * arch.layer_sizes[l + 1]; ++i) {
            CHECK(std::abs(w[i]) <= a);
        }
        const double* b = params.data() + arch.bias_offset(l);
        for (std::size_t i = 0; i < arch.layer_sizes[l + 1]; ++i) CHECK(b[i] == 0.0);
    }
    CHECK(init_params(arch, 2024) == params);
    CHECK(init_params(arch, 2025) != params);
}

TEST_CASE("evaluate hand micro-case") {
    MlpArchitecture arch({2, 2});
    ParamVector params(arch.param_count(), 0.0);
    params[arch.weight_offset(0) + 0] = 3.0;  // identity-ish: logit_0 = 3 x_0
    params[arch.weight_offset(0) + 3] = 3.0;  // logit_1 = 3 x_1

    LabeledDataset both_right;
    both_right.num_classes = 2;
    both_right.features = make_matrix(2, 2, {1, 0, 0, 1});
    both_right.labels = {0, 1};
    auto [acc1, f11] = evaluate(params, arch, both_right);
    CHECK(acc1 == 1.0);
    CHECK(f11 == 1.0);

    LabeledDataset half;
    half.num_classes = 2;
    half.features = make_matrix(2, 2, {1, 0, 1, 0});  // both predicted class 0
    half.labels = {0, 1};
    auto [acc2, f12] = evaluate(params, arch, half);
    CHECK(acc2 == Catch::Approx(0.5).margin(1e-12));
    CHECK(f12 == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("evaluate is chance-level for random params on balanced data") {
    LabeledDataset ds = synth_blobs(10, 100, 12, 404);
    MlpArchitecture arch({12, 16, 10});
    ParamVector params = init_params(arch, 17);
    auto [acc, f1] = evaluate(params, arch, ds);
    CHECK(acc > 0.05);
    CHECK(acc < 0.15);
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 1.0);
}

TEST_CASE("argmax ties break to the lowest index") {
    Matrix m = make_matrix(1, 3, {0.4, 0.4, 0.2});
    CHECK(argmax_row(m, 0) == 0);
}
