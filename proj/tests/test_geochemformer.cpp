#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "geochem/error.hpp"
#include "geochem/geochemformer.hpp"
#include "geochem/nn/autoencoder.hpp"
#include "geochem/pipeline.hpp"
#include "geochem/synth.hpp"
#include "support.hpp"

using namespace geochem;

namespace {

GeoChemFormerConfig tiny_config(std::uint64_t seed = 0) {
    GeoChemFormerConfig c;
    c.encoder.layers = 1;
    c.encoder.width = 8;
    c.encoder.heads = 2;
    c.encoder.ff_width = 16;
    c.encoder.dropout = 0.0;
    c.k = 4;
    c.scl_epochs = 2;
    c.edm_epochs = 2;
    c.batch = 16;
    c.seed = seed;
    return c;
}

DetectorInput random_input(Rng& rng, Eigen::Index n, Eigen::Index c, double extent = 50.0) {
    DetectorInput in;
    in.features = testing::random_matrix(rng, n, c);
    in.positions = testing::random_points(rng, static_cast<std::size_t>(n), extent);
    in.target_column = 0;
    in.target_values = in.features.col(0);
    in.target_id = 0;
    in.element_vocab = static_cast<std::size_t>(c);
    return in;
}

std::vector<nn::Tensor> leaves(const nn::ParameterSet& ps) {
    std::vector<nn::Tensor> out;
    for (const auto& [name, t] : ps.items()) out.push_back(t);
    return out;
}

}  // namespace

TEST_SUITE("geochemformer") {

TEST_CASE("neighbourhood tokens") {
    SUBCASE("offset in sampling-distance units") {
        const SpatialIndex index({{100, 200}, {103, 204}});
        const Eigen::MatrixXd f = Eigen::MatrixXd::Ones(2, 1);
        CoordinateFrame frame;
        frame.offset_scale = 1.0;
        const auto seq = build_neighborhood_tokens(f, index, frame, 0, 1, 0);
        CHECK(seq.neighbors[0].offset == Point{3.0, 4.0});
        CHECK(seq.neighbor_ids[0] == 1);
    }
    SUBCASE("exhausted neighbourhood is padded and masked") {
        const SpatialIndex index({{0, 0}, {1, 0}, {0, 2}});
        const Eigen::MatrixXd f = Eigen::MatrixXd::Constant(3, 2, 5.0);
        const auto seq = build_neighborhood_tokens(f, index, CoordinateFrame::fit(index), 0, 5, 1);
        REQUIRE(seq.neighbors.size() == 5);
        CHECK(seq.mask == std::vector<std::uint8_t>{1, 1, 0, 0, 0});
        CHECK(seq.neighbors[4].features == std::vector<double>{0.0, 0.0});
        CHECK(seq.element_token_id == 1);
    }
    SUBCASE("identities equal brute-force knn without self") {
        const std::vector<Point> pts{{0, 0}, {2, 1}, {5, 5}, {1, 3}, {4, 0}};
        const SpatialIndex index(pts);
        const Eigen::MatrixXd f = Eigen::MatrixXd::Random(5, 3);
        for (std::size_t s = 0; s < pts.size(); ++s) {
            const auto seq = build_neighborhood_tokens(f, index, CoordinateFrame::fit(index), s, 3, 0);
            const auto want = testing::brute_knn(pts, pts[s], 3, long(s));
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(seq.neighbor_ids[j] == want[j].index);
                CHECK(seq.neighbors[j].features[1] == f(Eigen::Index(want[j].index), 1));
            }
        }
    }
    SUBCASE("errors") {
        const SpatialIndex one({{0, 0}});
        CHECK_THROWS_AS(build_neighborhood_tokens(Eigen::MatrixXd::Ones(1, 1), one, {}, 0, 2, 0), DataError);
        const SpatialIndex two({{0, 0}, {1, 1}});
        CHECK_THROWS_AS(build_neighborhood_tokens(Eigen::MatrixXd::Ones(2, 1), two, {}, 0, 0, 0), ConfigError);
    }
}

TEST_CASE("coordinate frame") {
    const SpatialIndex index({{0, 0}, {2, 0}, {0, 2}, {2, 2}});
    const auto f = CoordinateFrame::fit(index);
    CHECK(f.cx == 1.0);
    CHECK(f.cy == 1.0);
    CHECK(f.coord_scale == doctest::Approx(1.0));
    CHECK(f.offset_scale == doctest::Approx(2.0));
    CHECK(f.normalize({3, 1}) == Point{2.0, 0.0});
    const auto enc = sinusoidal_encoding({0.3, -0.7}, 16);
    CHECK(enc.size() == 16);
    for (double v : enc) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("context loss and reconstruction score recomputation") {
    Rng rng(2);
    const auto in = random_input(rng, 60, 3);
    GeoChemFormerDetector t2(true, tiny_config(2));
    t2.fit(in);

    const auto seqs = t2.sequences(in);
    const double loss = t2.scl_loss(seqs, in.target_values).item();
    const auto pred = t2.predict_target(in);
    double ref = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) ref += (pred[i] - in.target_values(Eigen::Index(i))) * (pred[i] - in.target_values(Eigen::Index(i)));
    ref /= double(pred.size());
    CHECK(std::abs(loss - ref) < 1e-10);
    CHECK(mean_squared_residual(pred, std::vector<double>(in.target_values.data(), in.target_values.data() + 60)) ==
          doctest::Approx(ref).epsilon(1e-12));

    const auto scores = t2.score(in);
    const Eigen::MatrixXd rec = t2.reconstruct(in);
    for (Eigen::Index i = 0; i < in.features.rows(); ++i) {
        const double s = (in.features.row(i) - rec.row(i)).squaredNorm() / double(in.features.cols());
        CHECK(std::abs(scores[std::size_t(i)] - s) < 1e-10);
    }
    const Eigen::MatrixXd ctx = t2.spatial_context(in);
    const double edm = t2.edm_loss(in.features, &ctx, {}).item();
    CHECK(std::abs(edm - (in.features - rec).array().square().mean()) < 1e-10);
}

TEST_CASE("reconstruction score worked example") {
    CHECK(mean_squared_residual({1.0, 2.0}, {0.0, -1.0}) == 5.0);
    CHECK(mean_squared_residual({0.3, 0.3}, {0.3, 0.3}) == 0.0);
    CHECK_THROWS(mean_squared_residual({1.0}, {1.0, 2.0}));
}

TEST_CASE("leakage guard") {
    Rng rng(3);
    auto in = random_input(rng, 80, 3);
    GeoChemFormerDetector t2(true, tiny_config(3));
    t2.fit(in);
    const auto base = t2.predict_target(in);
    for (int t = 0; t < 20; ++t) {
        const auto i = static_cast<Eigen::Index>(rng.below(80));
        auto moved = in;
        moved.features(i, 0) += rng.normal(0.0, 5.0);
        moved.target_values(i) = moved.features(i, 0);
        CHECK(t2.predict_target(moved)[std::size_t(i)] == base[std::size_t(i)]);
    }
}

TEST_CASE("neighbour order does not change the context") {
    Rng rng(4);
    const auto in = random_input(rng, 40, 3);
    GeoChemFormerDetector t2(true, tiny_config(4));
    t2.initialize(in);
    auto seqs = t2.sequences(in);
    seqs.resize(10);
    auto reversed = seqs;
    for (auto& s : reversed) {
        std::reverse(s.neighbors.begin(), s.neighbors.end());
        std::reverse(s.neighbor_ids.begin(), s.neighbor_ids.end());
        std::reverse(s.mask.begin(), s.mask.end());
    }
    CHECK(t2.stage1().context(seqs, false, nullptr).data() == t2.stage1().context(reversed, false, nullptr).data());
}

TEST_CASE("stage loss gradients") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        Rng rng(seed);
        const auto in = random_input(rng, 6, 3);
        auto cfg = tiny_config(seed);
        cfg.encoder.width = 4;
        cfg.encoder.ff_width = 6;
        cfg.k = 3;
        GeoChemFormerDetector t2(true, cfg);
        t2.initialize(in);
        const auto seqs = t2.sequences(in);
        CHECK(testing::gradient_check(leaves(t2.stage1().parameters()), [&] { return t2.scl_loss(seqs, in.target_values); }) < 1e-4);

        const Eigen::MatrixXd ctx = testing::random_matrix(rng, 6, 4);
        std::vector<double> keep(18);
        for (auto& k : keep) k = rng.uniform() < 0.3 ? 0.0 : 1.0;
        CHECK(testing::gradient_check(leaves(t2.stage2().parameters()), [&] { return t2.edm_loss(in.features, &ctx, keep); }) < 1e-4);

        GeoChemFormerDetector t1(false, cfg);
        t1.initialize(in);
        CHECK(testing::gradient_check(leaves(t1.stage2().parameters()), [&] { return t1.edm_loss(in.features, nullptr, keep); }) < 1e-4);
    }
}

TEST_CASE("zero decoder starts at mean square") {
    Rng rng(5);
    const auto in = random_input(rng, 10, 4);
    auto cfg = tiny_config();
    cfg.zero_init_decoder = true;
    GeoChemFormerDetector t1(false, cfg);
    t1.initialize(in);
    CHECK(t1.edm_loss(in.features, nullptr, {}).item() == doctest::Approx(in.features.array().square().mean()).epsilon(1e-14));
}

TEST_CASE("t1 and t2 differ by the context projection") {
    Rng rng(6);
    const auto in = random_input(rng, 10, 4);
    GeoChemFormerDetector t1(false, tiny_config(1)), t2(true, tiny_config(1));
    t1.initialize(in);
    t2.initialize(in);
    const std::size_t d = 8;
    CHECK(t2.stage2().parameters().count() - t1.stage2().parameters().count() == d * d + d);
    CHECK_THROWS_AS(t1.predict_target(in), ConfigError);
}

TEST_CASE("constant target trains to the floor") {
    Rng rng(7);
    auto in = random_input(rng, 256, 3);
    in.target_values.setConstant(1.0);
    auto cfg = tiny_config(7);
    cfg.scl_epochs = 40;
    cfg.edm_epochs = 1;
    cfg.lr = 1e-2;
    GeoChemFormerDetector t2(true, cfg);
    t2.initialize(in);
    const double initial = t2.scl_loss(t2.sequences(in), in.target_values).item();
    t2.fit(in);
    REQUIRE(t2.scl_history().size() == 40);
    CHECK(t2.scl_history().back() < 1e-3 * initial);
}

TEST_CASE("smooth field beats the global mean on held-out samples") {
    Rng rng(21);
    auto field = [](const Point& p) { return std::sin(p.x / 8.0) + std::cos(p.y / 11.0); };
    DetectorInput all;
    const std::size_t n_train = 300, n_all = 400;
    all.positions = testing::random_points(rng, n_all, 50.0);
    all.features.resize(Eigen::Index(n_all), 2);
    for (std::size_t i = 0; i < n_all; ++i) {
        all.features(Eigen::Index(i), 0) = field(all.positions[i]);
        all.features(Eigen::Index(i), 1) = rng.normal();
    }
    all.target_column = 0;
    all.target_values = all.features.col(0);
    all.element_vocab = 2;

    DetectorInput train = all;
    train.positions.resize(n_train);
    train.features.conservativeResize(Eigen::Index(n_train), 2);
    train.target_values = train.features.col(0);

    auto cfg = tiny_config(21);
    cfg.k = 8;
    cfg.scl_epochs = 40;
    cfg.edm_epochs = 1;
    cfg.lr = 3e-3;
    GeoChemFormerDetector t2(true, cfg);
    t2.fit(train);
    const auto pred = t2.predict_target(all);
    const double mean = train.target_values.mean();
    double model = 0.0, baseline = 0.0;
    for (std::size_t i = n_train; i < n_all; ++i) {
        const double y = all.target_values(Eigen::Index(i));
        model += (pred[i] - y) * (pred[i] - y);
        baseline += (mean - y) * (mean - y);
    }
    CHECK(model < baseline);
}

TEST_CASE("all values hidden: loss stays above the column-variance floor") {
    Rng rng(8);
    DetectorInput in = random_input(rng, 200, 3);
    in.features.col(1) = 2.0 * in.features.col(0);  // deterministic dependency
    auto cfg = tiny_config(8);
    cfg.mask_rate = 1.0;
    cfg.edm_epochs = 60;
    cfg.lr = 1e-2;
    GeoChemFormerDetector t1(false, cfg);
    t1.fit(in);
    const Eigen::MatrixXd centered = in.features.rowwise() - in.features.colwise().mean();
    const double floor = centered.array().square().mean();
    const double hidden = t1.edm_loss(in.features, nullptr, std::vector<double>(600, 0.0)).item();
    CHECK(hidden >= floor - 1e-12);
    CHECK(hidden < 1.5 * floor);
}

TEST_CASE("planted halos score above background") {
    SynthConfig sc;
    sc.n_samples = 500;
    sc.width = sc.height = 2000.0;
    sc.n_elements = 6;
    sc.n_deposits = 4;
    sc.halo_radius = 200.0;
    sc.seed = 33;
    const auto synth = generate_survey(sc);
    const auto prepared = prepare_survey(synth.survey, "Au", PreprocessConfig{});
    auto cfg = tiny_config(33);
    cfg.k = 8;
    cfg.scl_epochs = 5;
    cfg.edm_epochs = 20;
    GeoChemFormerDetector t2(true, cfg);
    t2.fit(prepared.input);
    const auto s = t2.score(prepared.input);
    double in_sum = 0.0, bg_sum = 0.0;
    std::size_t in_n = 0, bg_n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (synth.truth.in_halo[i]) {
            in_sum += s[i];
            ++in_n;
        } else {
            bg_sum += s[i];
            ++bg_n;
        }
    }
    REQUIRE(in_n > 0);
    CHECK(in_sum / double(in_n) > bg_sum / double(bg_n));
}

TEST_CASE("training is reproducible and snapshots restore") {
    Rng rng(9);
    const auto in = random_input(rng, 50, 3);
    GeoChemFormerDetector a(true, tiny_config(9)), b(true, tiny_config(9));
    a.fit(in);
    b.fit(in);
    CHECK(a.score(in) == b.score(in));
    const auto back = GeoChemFormerDetector::restore(nlohmann::json::parse(a.snapshot().dump()));
    CHECK(back->score(in) == a.score(in));
    CHECK(back->kind() == DetectorKind::GeoChemFormer);
}

TEST_CASE("config validation") {
    auto cfg = tiny_config();
    cfg.k = 0;
    CHECK_THROWS_AS(GeoChemFormerDetector(true, cfg), ConfigError);
    cfg = tiny_config();
    cfg.encoder.heads = 3;
    CHECK_THROWS_AS(GeoChemFormerDetector(true, cfg), ConfigError);
    cfg = tiny_config();
    cfg.mask_rate = 1.5;
    CHECK_THROWS_AS(GeoChemFormerDetector(true, cfg), ConfigError);
    const auto j = tiny_config().to_json();
    CHECK(GeoChemFormerConfig::from_json(j).to_json() == j);
}

}
