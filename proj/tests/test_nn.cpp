#include <cmath>
#include <numeric>

#include "doctest.h"
#include "geochem/error.hpp"
#include "geochem/nn/adam.hpp"
#include "geochem/nn/autoencoder.hpp"
#include "geochem/nn/layers.hpp"
#include "geochem/nn/ops.hpp"
#include "support.hpp"

using namespace geochem;
using namespace geochem::nn;
using testing::gradient_check;
using testing::random_parameter;

namespace {

// Projects an arbitrary tensor to a scalar with fixed random weights so every
// output entry carries a distinct upstream gradient.
Tensor probe(const Tensor& t, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> w(t.numel());
    for (auto& v : w) v = rng.normal();
    return sum(mul(t, Tensor::constant(t.shape(), w)));
}

DetectorInput input_from(const Eigen::MatrixXd& x) {
    DetectorInput in;
    in.features = x;
    in.positions.assign(static_cast<std::size_t>(x.rows()), Point{});
    in.target_values = x.col(0);
    return in;
}

Eigen::MatrixXd rank_one_with_outlier(Rng& rng, int n) {
    Eigen::RowVectorXd dir(5);
    dir << 1.0, -0.5, 2.0, 0.3, -1.2;
    Eigen::MatrixXd x(n + 1, 5);
    for (int i = 0; i < n; ++i) x.row(i) = rng.normal() * dir + 0.01 * testing::random_matrix(rng, 1, 5);
    Eigen::RowVectorXd off(5);
    off << 2.0, 4.0, 0.0, -3.0, 0.0;  // orthogonal to dir
    x.row(n) = off;
    return x;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("trivial gradients") {
    Rng rng(1);
    Tensor x = random_parameter(rng, {3, 4});
    sum(x).backward();
    for (double g : x.grad()) CHECK(g == 1.0);

    Tensor y = random_parameter(rng, {5});
    y.zero_grad();
    scale(sum(square(y)), 0.5).backward();
    for (std::size_t i = 0; i < 5; ++i) CHECK(y.grad()[i] == doctest::Approx(y.data()[i]).epsilon(1e-15));
}

TEST_CASE("gradient checks per primitive") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        Rng rng(seed);
        Tensor a = random_parameter(rng, {2, 3, 4});
        Tensor b = random_parameter(rng, {2, 3, 4});
        Tensor w = random_parameter(rng, {4, 5});
        Tensor row = random_parameter(rng, {4});
        Tensor pos = Tensor::parameter({2, 3, 4}, [&] {
            std::vector<double> d(24);
            for (auto& v : d) v = rng.uniform(0.5, 2.0);
            return d;
        }());
        Tensor gain = random_parameter(rng, {4});
        Tensor bias = random_parameter(rng, {4});
        Tensor table = random_parameter(rng, {6, 4});
        std::vector<double> mask(24);
        for (auto& m : mask) m = rng.uniform() < 0.3 ? 0.0 : 1.0;

        CHECK(gradient_check({a, w}, [&] { return probe(matmul(a, w), 1); }) < 1e-4);
        CHECK(gradient_check({a, b}, [&] { return probe(add(a, b), 2); }) < 1e-4);
        CHECK(gradient_check({a, row}, [&] { return probe(add(a, row), 3); }) < 1e-4);
        CHECK(gradient_check({a, b}, [&] { return probe(sub(a, b), 4); }) < 1e-4);
        CHECK(gradient_check({a, row}, [&] { return probe(mul(a, row), 5); }) < 1e-4);
        CHECK(gradient_check({a}, [&] { return probe(add_scalar(scale(a, -1.7), 0.3), 6); }) < 1e-4);
        CHECK(gradient_check({a}, [&] { return probe(square(a), 7); }) < 1e-4);
        CHECK(gradient_check({a}, [&] { return probe(exp(a), 8); }) < 1e-4);
        CHECK(gradient_check({a}, [&] { return probe(gelu(a), 9); }) < 1e-4);
        CHECK(gradient_check({a}, [&] { return probe(softmax(a), 10); }) < 1e-4);
        CHECK(gradient_check({a, gain, bias}, [&] { return probe(layer_norm(a, gain, bias), 11); }) < 1e-4);
        CHECK(gradient_check({table}, [&] { return probe(embedding(table, {0, 3, 3, 5, 1, 0}, {2, 3}), 12); }) < 1e-4);
        CHECK(gradient_check({a}, [&] { return probe(reshape(a, {6, 4}), 13); }) < 1e-4);
        CHECK(gradient_check({a, b}, [&] { return probe(concat({a, b}, 1), 14); }) < 1e-4);
        CHECK(gradient_check({a, b}, [&] { return probe(concat({a, b}, 2), 15); }) < 1e-4);
        CHECK(gradient_check({a}, [&] { return probe(slice(a, 1, 1, 2), 16); }) < 1e-4);
        CHECK(gradient_check({a}, [&] { return mean(mul(a, pos)); }) < 1e-4);
        CHECK(gradient_check({a, b}, [&] { return mse(a, b); }) < 1e-4);
        CHECK(gradient_check({a}, [&] { return probe(mul_constant(a, mask), 17); }) < 1e-4);

        std::vector<std::uint8_t> keys{1, 1, 0, 1, 1, 1};
        Tensor q = random_parameter(rng, {2, 3, 4});
        CHECK(gradient_check({q, a, b}, [&] { return probe(attention(q, a, b, 2), 18); }) < 1e-4);
        CHECK(gradient_check({q, a, b}, [&] { return probe(attention(q, a, b, 1, keys), 19); }) < 1e-4);
    }
}

TEST_CASE("three-layer mlp gradient check") {
    // 17 parameters: 2x3 + 3, 3x1 + 1, plus a 1x1 + 1 output affine
    Rng rng(17);
    Tensor w1 = random_parameter(rng, {2, 3}), b1 = random_parameter(rng, {3});
    Tensor w2 = random_parameter(rng, {3, 1}), b2 = random_parameter(rng, {1});
    Tensor w3 = random_parameter(rng, {1, 2}), b3 = random_parameter(rng, {2});
    const Tensor x = Tensor::constant({4, 2}, {0.1, -0.4, 1.2, 0.3, -0.8, 0.9, 0.5, 0.5});
    const Tensor y = Tensor::constant({4, 2}, {1, 0, 0, 1, 0.5, 0.5, -1, 2});
    auto loss = [&] {
        Tensor h = gelu(add(matmul(x, w1), b1));
        h = gelu(add(matmul(h, w2), b2));
        return mse(add(matmul(h, w3), b3), y);
    };
    std::size_t count = 0;
    for (const auto& t : {w1, b1, w2, b2, w3, b3}) count += t.numel();
    CHECK(count == 17);
    CHECK(gradient_check({w1, b1, w2, b2, w3, b3}, loss, 1e-4) < 1e-4);
}

TEST_CASE("shape errors name the primitive") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor w = Tensor::zeros({4, 2});
    try {
        matmul(a, w);
        FAIL("expected a shape error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, Tensor::zeros({2})), ConfigError);
    CHECK_THROWS_AS(attention(Tensor::zeros({1, 2, 3}), Tensor::zeros({1, 2, 3}), Tensor::zeros({1, 2, 3}), 2),
                    ConfigError);
}

TEST_CASE("softmax and layer norm invariants") {
    Rng rng(6);
    const Tensor a = random_parameter(rng, {7, 9}, 3.0);
    const auto s = softmax(a).data();
    for (int r = 0; r < 7; ++r) CHECK(std::abs(std::accumulate(s.begin() + r * 9, s.begin() + r * 9 + 9, 0.0) - 1.0) < 1e-9);

    const Tensor ones = Tensor::constant({9}, std::vector<double>(9, 1.0));
    const Tensor zeros = Tensor::constant({9}, std::vector<double>(9, 0.0));
    const auto n = layer_norm(a, ones, zeros).data();
    for (int r = 0; r < 7; ++r) {
        double m = 0.0, v = 0.0;
        for (int c = 0; c < 9; ++c) m += n[r * 9 + c];
        m /= 9;
        for (int c = 0; c < 9; ++c) v += (n[r * 9 + c] - m) * (n[r * 9 + c] - m);
        v /= 9;
        CHECK(std::abs(m) < 1e-6);
        CHECK(std::abs(v - 1.0) < 1e-6);
    }
}

TEST_CASE("attention examples") {
    SUBCASE("two tokens, one head, by hand") {
        const Tensor q = Tensor::constant({1, 2, 2}, {1.0, 0.0, 0.5, -1.0});
        const Tensor k = Tensor::constant({1, 2, 2}, {0.2, 0.4, -0.6, 1.0});
        const Tensor v = Tensor::constant({1, 2, 2}, {1.0, 2.0, 3.0, -1.0});
        const auto out = attention(q, k, v, 1).data();
        const double r = 1.0 / std::sqrt(2.0);
        for (int i = 0; i < 2; ++i) {
            const double s0 = (q.data()[i * 2] * 0.2 + q.data()[i * 2 + 1] * 0.4) * r;
            const double s1 = (q.data()[i * 2] * -0.6 + q.data()[i * 2 + 1] * 1.0) * r;
            const double p0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
            CHECK(out[i * 2] == doctest::Approx(p0 * 1.0 + (1 - p0) * 3.0).epsilon(1e-14));
            CHECK(out[i * 2 + 1] == doctest::Approx(p0 * 2.0 + (1 - p0) * -1.0).epsilon(1e-14));
        }
    }
    SUBCASE("identical keys give uniform weights") {
        Rng rng(2);
        const Tensor q = random_parameter(rng, {1, 4, 4});
        const Tensor k = Tensor::constant({1, 4, 4}, std::vector<double>(16, 0.7));
        const Tensor v = random_parameter(rng, {1, 4, 4});
        const auto out = attention(q, k, v, 2).data();
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 4; ++c) {
                double m = 0.0;
                for (int j = 0; j < 4; ++j) m += v.data()[j * 4 + c];
                CHECK(out[i * 4 + c] == doctest::Approx(m / 4.0).epsilon(1e-12));
            }
    }
    SUBCASE("single token returns its projected value") {
        Rng rng(3);
        MultiHeadAttention mha(4, 2, rng);
        const Tensor x = random_parameter(rng, {1, 1, 4});
        const auto got = mha.forward(x, x, x).data();
        const auto want = mha.wo.forward(mha.wv.forward(x)).data();
        for (int c = 0; c < 4; ++c) CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-14));
    }
    SUBCASE("masked keys are ignored") {
        Rng rng(4);
        const Tensor q = random_parameter(rng, {1, 3, 2});
        const Tensor k = random_parameter(rng, {1, 3, 2});
        Tensor v = random_parameter(rng, {1, 3, 2});
        const auto before = attention(q, k, v, 1, {1, 1, 0}).data();
        v.data()[4] = 99.0;
        const auto after = attention(q, k, v, 1, {1, 1, 0}).data();
        CHECK(before == after);
    }
}

TEST_CASE("property: attention is permutation equivariant over tokens") {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        const std::size_t S = 2 + rng.below(6);
        Tensor x = random_parameter(rng, {1, S, 4});
        std::vector<std::size_t> perm(S);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        std::vector<double> px(S * 4);
        for (std::size_t i = 0; i < S; ++i)
            for (int c = 0; c < 4; ++c) px[i * 4 + c] = x.data()[perm[i] * 4 + c];
        const Tensor y = Tensor::constant({1, S, 4}, px);
        const auto a = attention(x, x, x, 2).data();
        const auto b = attention(y, y, y, 2).data();
        for (std::size_t i = 0; i < S; ++i)
            for (int c = 0; c < 4; ++c) CHECK(b[i * 4 + c] == a[perm[i] * 4 + c]);
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradient is a fixed point") {
        ParameterSet ps;
        Tensor w = Tensor::parameter({3}, {1.0, -2.0, 0.5});
        ps.add("w", w);
        Adam opt(ps);
        w.mutable_grad();
        opt.step();
        CHECK(w.data() == std::vector<double>{1.0, -2.0, 0.5});
    }
    SUBCASE("first step moves by lr against the gradient") {
        ParameterSet ps;
        Tensor w = Tensor::parameter({2}, {1.0, 1.0});
        ps.add("w", w);
        Adam opt(ps, {0.01});
        w.mutable_grad() = {3.0, -0.2};
        opt.step();
        CHECK(w.data()[0] == doctest::Approx(0.99).epsilon(1e-6));
        CHECK(w.data()[1] == doctest::Approx(1.01).epsilon(1e-6));
        CHECK(opt.steps() == 1);
    }
    SUBCASE("quadratic descent") {
        ParameterSet ps;
        Tensor w = Tensor::parameter({1}, {0.0});
        ps.add("w", w);
        Adam opt(ps, {0.1});
        double prev = 3.0;
        for (int s = 0; s < 10; ++s) {
            w.zero_grad();
            square(add_scalar(w, -3.0)).backward();
            opt.step();
            const double gap = std::abs(w.data()[0] - 3.0);
            CHECK(gap < prev);
            prev = gap;
        }
    }
}

TEST_CASE("gaussian kl") {
    CHECK(gaussian_kl(0.0, 0.0) == 0.0);
    CHECK(gaussian_kl(1.0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    const double lv = std::log(2.0);
    CHECK(gaussian_kl(0.5, lv) == doctest::Approx(0.5 * (0.25 + 2.0 - 1.0 - lv)));
}

TEST_CASE("untrained zero-output autoencoder scores mean square") {
    Rng rng(8);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 12, 4);
    for (bool variational : {false, true}) {
        AutoEncoderConfig cfg;
        cfg.zero_init_output = true;
        AutoEncoderDetector ae(variational, cfg);
        ae.initialize(4);
        const auto s = ae.reconstruction_error(x);
        for (Eigen::Index i = 0; i < x.rows(); ++i) CHECK(s[std::size_t(i)] == doctest::Approx(x.row(i).squaredNorm() / 4.0).epsilon(1e-14));
    }
}

TEST_CASE("autoencoder loss gradients") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const Eigen::MatrixXd x = testing::random_matrix(rng, 6, 4);
        const Eigen::MatrixXd noise = testing::random_matrix(rng, 6, 3);
        for (bool variational : {false, true}) {
            AutoEncoderConfig cfg;
            cfg.hidden = 5;
            cfg.latent = 3;
            cfg.seed = seed;
            AutoEncoderDetector ae(variational, cfg);
            ae.initialize(4);
            std::vector<Tensor> leaves;
            for (const auto& [name, t] : ae.parameters().items()) leaves.push_back(t);
            CHECK(gradient_check(leaves, [&] { return ae.batch_loss(x, variational ? &noise : nullptr); }) < 1e-4);
        }
    }
}

TEST_CASE("planted outlier is the worst reconstructed row") {
    for (bool variational : {false, true}) {
        CAPTURE(variational);
        Rng rng(13);
        const Eigen::MatrixXd x = rank_one_with_outlier(rng, 300);
        AutoEncoderConfig cfg;
        cfg.epochs = 60;
        cfg.seed = 13;
        AutoEncoderDetector ae(variational, cfg);
        ae.fit(input_from(x));
        const auto s = ae.score(input_from(x));
        CHECK(std::max_element(s.begin(), s.end()) - s.begin() == 300);
        CHECK(ae.loss_history().size() == 60);
    }
}

TEST_CASE("training is bit-reproducible") {
    Rng rng(14);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 80, 4);
    AutoEncoderConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 3;
    AutoEncoderDetector a(true, cfg), b(true, cfg);
    a.fit(input_from(x));
    b.fit(input_from(x));
    CHECK(parameters_to_json(a.parameters()) == parameters_to_json(b.parameters()));

    AutoEncoderDetector c(true, cfg);
    c.fit(input_from(x));
    const auto back = AutoEncoderDetector::restore(nlohmann::json::parse(c.snapshot().dump()));
    CHECK(back->kind() == DetectorKind::Vae);
    CHECK(back->score(input_from(x)) == c.score(input_from(x)));
}

TEST_CASE("divergence reports the epoch") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(8, 3, 1e200);
    AutoEncoderConfig cfg;
    cfg.epochs = 3;
    AutoEncoderDetector ae(false, cfg);
    try {
        ae.fit(input_from(x));
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    }
}

}
