// Acceptance harness: one PASS/FAIL/SKIP line per criterion, exit status 1 if
// anything failed. Criterion 8 runs only when GEOCHEM_SED1_SURVEY points at a
// downloaded sed1 survey CSV.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "geochem/compositional.hpp"
#include "geochem/csv.hpp"
#include "geochem/eval.hpp"
#include "geochem/geochemformer.hpp"
#include "geochem/nn/ops.hpp"
#include "geochem/pipeline.hpp"
#include "geochem/registry.hpp"
#include "geochem/synth.hpp"
#include "support.hpp"

using namespace geochem;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    enum { Pass, Fail, Skip } status = Pass;
    std::string detail;
};

// Collects failed sub-checks; the first few are reported.
struct Checks {
    std::size_t total = 0;
    std::vector<std::string> failures;

    void expect(bool ok, const std::string& what) {
        ++total;
        if (!ok) failures.push_back(what);
    }
    Outcome outcome(const std::string& summary) const {
        Outcome o;
        o.status = failures.empty() ? Outcome::Pass : Outcome::Fail;
        std::ostringstream s;
        s << summary << "; " << total - failures.size() << "/" << total << " checks";
        for (std::size_t i = 0; i < std::min<std::size_t>(failures.size(), 3); ++i) s << "; " << failures[i];
        o.detail = s.str();
        return o;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) { return csv::format_significant(v, digits); }

CompositionMatrix raw_matrix(const Eigen::MatrixXd& data) {
    CompositionMatrix m;
    m.data = data;
    for (Eigen::Index j = 0; j < data.cols(); ++j) m.element_names.push_back("E" + std::to_string(j));
    for (Eigen::Index i = 0; i < data.rows(); ++i) m.row_ids.push_back("R" + std::to_string(i));
    return m;
}

Outcome compositional_suite() {
    const auto t0 = Clock::now();
    Checks c;
    Rng rng(1001);
    double worst_sum = 0, worst_scale = 0, worst_iso = 0, worst_ortho = 0;
    for (int t = 0; t < 1000; ++t) {
        const int parts = 2 + int(rng.below(15));
        Eigen::MatrixXd d(2, parts);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < parts; ++j) d(i, j) = std::exp(rng.normal(0.0, 3.0));
        const auto clr = clr_transform(raw_matrix(d));
        worst_sum = std::max(worst_sum, std::abs(clr.data.row(0).sum()));
        const auto scaled = clr_transform(raw_matrix(d * std::exp(rng.normal(0.0, 5.0))));
        worst_scale = std::max(worst_scale, (scaled.data - clr.data).cwiseAbs().maxCoeff());
        const auto ilr = ilr_transform(raw_matrix(d));
        worst_iso = std::max(worst_iso, std::abs((ilr.data.row(0) - ilr.data.row(1)).norm() -
                                                 (clr.data.row(0) - clr.data.row(1)).norm()));

        const int n = 5 + int(rng.below(40));
        Eigen::MatrixXd comp(n, parts);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < parts; ++j) comp(i, j) = std::exp(rng.normal(0.0, 1.0));
        const auto pca = fit_pca(standardize(clr_transform(raw_matrix(comp))));
        const Eigen::MatrixXd g = pca.loadings.transpose() * pca.loadings;
        worst_ortho = std::max(worst_ortho, (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff());
    }
    c.expect(worst_sum < 1e-9, "clr zero-sum " + fmt(worst_sum));
    c.expect(worst_scale < 1e-9, "clr scale invariance " + fmt(worst_scale));
    c.expect(worst_iso < 1e-8, "ilr isometry " + fmt(worst_iso));
    c.expect(worst_ortho < 1e-8, "pca orthonormality " + fmt(worst_ortho));
    const double secs = seconds_since(t0);
    c.expect(secs < 10.0, "runtime " + fmt(secs) + " s");
    return c.outcome("1000 compositions each, worst zero-sum " + fmt(worst_sum, 2) + ", scale " + fmt(worst_scale, 2) +
                     ", isometry " + fmt(worst_iso, 2) + ", orthonormality " + fmt(worst_ortho, 2) + ", " +
                     fmt(secs, 3) + " s");
}

Outcome spatial_suite() {
    const auto t0 = Clock::now();
    Checks c;
    Rng rng(2002);
    std::size_t knn_mismatch = 0;
    double worst_exact = 0, worst_sum = 0;
    std::size_t idw_out = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng.below(300);
        auto pts = testing::random_points(rng, n, rng.uniform(1.0, 1000.0));
        if (t % 10 == 0 && n > 4) pts[1] = pts[0];  // duplicates exercise the tie rule
        const auto index = build_index(pts);
        const Point q{rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0)};
        const std::size_t k = 1 + rng.below(20);
        const auto got = index.knn(q, k);
        const auto want = testing::brute_knn(pts, q, k);
        bool same = got.size() == want.size();
        for (std::size_t i = 0; same && i < got.size(); ++i)
            same = got[i].index == want[i].index && got[i].distance == want[i].distance;
        knn_mismatch += !same;

        if (n >= 3 && t % 2 == 0) {
            std::vector<double> v(n);
            for (auto& x : v) x = rng.normal(0.0, 5.0);
            std::vector<Point> distinct;
            std::vector<double> dv;
            for (std::size_t i = 0; i < n; ++i) {
                bool dup = false;
                for (const auto& p : distinct) dup = dup || p == pts[i];
                if (!dup) {
                    distinct.push_back(pts[i]);
                    dv.push_back(v[i]);
                }
            }
            if (distinct.size() >= 2) {
                const auto di = build_index(distinct);
                const VariogramModel m{rng.uniform() < 0.5 ? VariogramKind::Spherical : VariogramKind::Exponential, 0.0,
                                       rng.uniform(0.5, 3.0), rng.uniform(50.0, 800.0)};
                const std::size_t s = rng.below(distinct.size());
                const auto at = kriging_interpolate(di, dv, m, distinct[s], 16);
                if (!at.fallback) worst_exact = std::max(worst_exact, std::abs(at.estimate - dv[s]));
                else c.expect(false, "kriging fell back at a sample");
                const auto off = kriging_interpolate(di, dv, m, q, 16);
                if (!off.fallback) {
                    worst_sum = std::max(worst_sum, std::abs(std::accumulate(off.weights.begin(), off.weights.end(), 0.0) - 1.0));
                }
            }
            const double p = rng.uniform(0.1, 6.0);
            double lo = 1e300, hi = -1e300;
            for (const auto& nb : index.knn(q, k)) {
                lo = std::min(lo, v[nb.index]);
                hi = std::max(hi, v[nb.index]);
            }
            const double est = idw_interpolate(index, v, q, p, k);
            idw_out += est < lo - 1e-12 || est > hi + 1e-12;
        }
    }
    c.expect(knn_mismatch == 0, std::to_string(knn_mismatch) + " kNN mismatches");
    c.expect(worst_exact < 1e-8, "kriging exactness " + fmt(worst_exact));
    c.expect(worst_sum < 1e-10, "kriging weight sum " + fmt(worst_sum));
    c.expect(idw_out == 0, std::to_string(idw_out) + " IDW values out of bounds");
    const double secs = seconds_since(t0);
    c.expect(secs < 30.0, "runtime " + fmt(secs) + " s");
    return c.outcome("1000 configurations, kNN mismatches " + std::to_string(knn_mismatch) + ", kriging exactness " +
                     fmt(worst_exact, 2) + ", weight sum " + fmt(worst_sum, 2) + ", " + fmt(secs, 3) + " s");
}

nn::Tensor probe(const nn::Tensor& t, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> w(t.numel());
    for (auto& v : w) v = rng.normal();
    return nn::sum(nn::mul(t, nn::Tensor::constant(t.shape(), w)));
}

std::vector<nn::Tensor> leaves(const nn::ParameterSet& ps) {
    std::vector<nn::Tensor> out;
    for (const auto& [name, t] : ps.items()) out.push_back(t);
    return out;
}

Outcome autodiff_suite() {
    using namespace geochem::nn;
    using testing::random_parameter;
    const auto t0 = Clock::now();
    Checks c;
    double worst = 0.0;
    auto check = [&](const std::string& name, std::uint64_t seed, std::vector<Tensor> ls, const std::function<Tensor()>& f) {
        const double e = testing::gradient_check(std::move(ls), f);
        worst = std::max(worst, e);
        c.expect(e < 1e-4, name + " seed " + std::to_string(seed) + " rel err " + fmt(e));
    };
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed * 7919);
        Tensor a = random_parameter(rng, {2, 3, 4}), b = random_parameter(rng, {2, 3, 4});
        Tensor q = random_parameter(rng, {2, 3, 4});
        Tensor w = random_parameter(rng, {4, 5}), row = random_parameter(rng, {4});
        Tensor gain = random_parameter(rng, {4}), bias = random_parameter(rng, {4});
        Tensor table = random_parameter(rng, {6, 4});
        std::vector<double> mask(24);
        for (auto& m : mask) m = rng.uniform() < 0.3 ? 0.0 : 1.0;
        const std::vector<std::uint8_t> keys{1, 0, 1, 1, 1, 0};

        check("matmul", seed, {a, w}, [&] { return probe(matmul(a, w), 1); });
        check("add", seed, {a, row}, [&] { return probe(add(a, row), 2); });
        check("sub", seed, {a, b}, [&] { return probe(sub(a, b), 3); });
        check("mul", seed, {a, b}, [&] { return probe(mul(a, b), 4); });
        check("scale", seed, {a}, [&] { return probe(add_scalar(scale(a, 2.5), 1.0), 5); });
        check("square", seed, {a}, [&] { return probe(square(a), 6); });
        check("exp", seed, {a}, [&] { return probe(exp(a), 7); });
        check("gelu", seed, {a}, [&] { return probe(gelu(a), 8); });
        check("softmax", seed, {a}, [&] { return probe(softmax(a), 9); });
        check("layer_norm", seed, {a, gain, bias}, [&] { return probe(layer_norm(a, gain, bias), 10); });
        check("embedding", seed, {table}, [&] { return probe(embedding(table, {1, 5, 5, 0, 2, 3}, {2, 3}), 11); });
        check("reshape", seed, {a}, [&] { return probe(reshape(a, {3, 8}), 12); });
        check("concat", seed, {a, b}, [&] { return probe(concat({a, b}, 1), 13); });
        check("slice", seed, {a}, [&] { return probe(slice(a, 2, 1, 2), 14); });
        check("mean", seed, {a}, [&] { return mean(square(a)); });
        check("mse", seed, {a, b}, [&] { return mse(a, b); });
        check("mul_constant", seed, {a}, [&] { return probe(mul_constant(a, mask), 15); });
        check("attention", seed, {q, a, b}, [&] { return probe(attention(q, a, b, 2, keys), 16); });

        DetectorInput in;
        in.features = testing::random_matrix(rng, 6, 3);
        in.positions = testing::random_points(rng, 6, 10.0);
        in.target_column = 0;
        in.target_values = in.features.col(0);
        in.element_vocab = 3;
        GeoChemFormerConfig cfg;
        cfg.encoder = {1, 4, 2, 6, 0.0, 0};
        cfg.k = 3;
        cfg.seed = seed;
        GeoChemFormerDetector t2(true, cfg);
        t2.initialize(in);
        const auto seqs = t2.sequences(in);
        check("stage 1 loss", seed, leaves(t2.stage1().parameters()), [&] { return t2.scl_loss(seqs, in.target_values); });
        const Eigen::MatrixXd ctx = testing::random_matrix(rng, 6, 4);
        std::vector<double> keep(18);
        for (auto& k : keep) k = rng.uniform() < 0.3 ? 0.0 : 1.0;
        check("stage 2 loss", seed, leaves(t2.stage2().parameters()), [&] { return t2.edm_loss(in.features, &ctx, keep); });
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 60.0, "runtime " + fmt(secs) + " s");
    return c.outcome("18 primitives + 2 stage losses x 5 seeds, worst rel err " + fmt(worst, 2) + ", " + fmt(secs, 3) + " s");
}

DetectorInput synth_input(std::uint64_t seed, std::size_t n, SynthSurvey* out = nullptr) {
    SynthConfig sc;
    sc.n_samples = n;
    sc.seed = seed;
    auto s = generate_survey(sc);
    auto prepared = prepare_survey(s.survey, "Au", PreprocessConfig{});
    if (out) *out = std::move(s);
    return prepared.input;
}

Outcome recomputation() {
    Checks c;
    const DetectorInput in = synth_input(4, 500);
    GeoChemFormerConfig cfg;
    cfg.encoder = {1, 16, 2, 32, 0.1, 0};
    cfg.k = 16;
    cfg.scl_epochs = 3;
    cfg.edm_epochs = 3;
    cfg.seed = 4;
    GeoChemFormerDetector t2(true, cfg);
    t2.fit(in);

    const auto seqs = t2.sequences(in);
    const double loss = t2.scl_loss(seqs, in.target_values).item();
    const auto pred = t2.predict_target(in);
    double ref = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - in.target_values(Eigen::Index(i));
        ref += r * r;
    }
    ref /= double(pred.size());
    c.expect(std::abs(loss - ref) < 1e-10, "context loss gap " + fmt(std::abs(loss - ref)));

    const auto scores = t2.score(in);
    const Eigen::MatrixXd rec = t2.reconstruct(in);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < in.features.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < in.features.cols(); ++j) s += (in.features(i, j) - rec(i, j)) * (in.features(i, j) - rec(i, j));
        worst = std::max(worst, std::abs(scores[std::size_t(i)] - s / double(in.features.cols())));
    }
    c.expect(worst < 1e-10, "reconstruction score gap " + fmt(worst));

    Rng rng(100);
    std::size_t leaks = 0;
    for (int t = 0; t < 100; ++t) {
        const auto i = static_cast<Eigen::Index>(rng.below(std::uint64_t(in.features.rows())));
        DetectorInput moved = in;
        const double delta = rng.normal(0.0, 3.0);
        moved.features(i, *in.target_column) += delta;
        moved.target_values(i) += delta;
        leaks += t2.predict_target(moved)[std::size_t(i)] != pred[std::size_t(i)];
    }
    c.expect(leaks == 0, std::to_string(leaks) + "/100 leakage-guard violations");
    return c.outcome("context loss gap " + fmt(std::abs(loss - ref), 2) + ", reconstruction score gap " + fmt(worst, 2) + ", leakage guard " +
                     std::to_string(100 - leaks) + "/100 bit-identical");
}

Outcome metric_suite() {
    Checks c;
    Rng rng(5005);
    std::size_t exact_miss = 0, monotone_miss = 0;
    double worst_complement = 0.0;
    for (int t = 0; t < 500; ++t) {
        std::vector<double> pos(1 + rng.below(40)), bg(1 + rng.below(400));
        const bool ties = t % 3 == 0;
        for (auto& v : pos) v = ties ? double(rng.below(6)) : rng.normal(0.7, 1.0);
        for (auto& v : bg) v = ties ? double(rng.below(6)) : rng.normal();
        double wins = 0.0;
        for (double p : pos)
            for (double b : bg) wins += p > b ? 1.0 : p == b ? 0.5 : 0.0;
        const double auc = roc_auc(pos, bg);
        exact_miss += auc != wins / (double(pos.size()) * double(bg.size()));
        auto tp = pos, tb = bg;
        for (auto& v : tp) v = std::atan(v) * 3.0 - 7.0;
        for (auto& v : tb) v = std::atan(v) * 3.0 - 7.0;
        monotone_miss += roc_auc(tp, tb) != auc;
        worst_complement = std::max(worst_complement, std::abs(auc + roc_auc(bg, pos) - 1.0));
    }
    c.expect(exact_miss == 0, std::to_string(exact_miss) + " pair-count mismatches");
    c.expect(monotone_miss == 0, std::to_string(monotone_miss) + " monotone-transform mismatches");
    c.expect(worst_complement < 1e-12, "complement gap " + fmt(worst_complement));
    const double worked = roc_auc({0.9, 0.8}, {0.7, 0.85, 0.1});
    c.expect(worked == 5.0 / 6.0, "worked example " + fmt(worked, 17));
    return c.outcome("500 score sets, worked example " + fmt(worked, 6));
}

json reduced_transformer(const char* kind) {
    return json{{"kind", kind}, {"k", 16}, {"width", 32}, {"heads", 4}, {"ff_width", 64}, {"layers", 1}, {"scl_epochs", 10}, {"edm_epochs", 20}};
}

Outcome synthetic_recovery() {
    const auto t0 = Clock::now();
    Checks c;
    std::vector<json> blocks;
    for (auto k : all_detector_kinds()) {
        if (k == DetectorKind::T1 || k == DetectorKind::GeoChemFormer) blocks.push_back(reduced_transformer(to_string(k)));
        else blocks.push_back(json{{"kind", to_string(k)}});
    }
    const std::size_t D = blocks.size();
    std::vector<std::vector<double>> auc(5, std::vector<double>(D));
    std::cout << "  seed";
    for (const auto& b : blocks) std::cout << '\t' << b["kind"].get<std::string>();
    std::cout << '\n';
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthSurvey synth;
        synth_input(seed, 2000, &synth);
        const auto prepared = prepare_survey(synth.survey, "Au", PreprocessConfig{});
        const SpatialIndex index(prepared.input.positions);
        std::cout << "  " << seed << std::flush;
        for (std::size_t d = 0; d < D; ++d) {
            auto det = make_detector(blocks[d]);
            det->fit(prepared.input);
            const auto report = run_protocol(det->score(prepared.input), index, synth.deposits, EvalProtocol{});
            auc[seed - 1][d] = report.auc.mean;
            std::cout << '\t' << fmt(report.auc.mean) << std::flush;
        }
        std::cout << '\n';
    }
    auto column_mean = [&](std::size_t d) {
        double s = 0.0;
        for (const auto& r : auc) s += r[d];
        return s / 5.0;
    };
    auto column_min = [&](std::size_t d) {
        double m = 1.0;
        for (const auto& r : auc) m = std::min(m, r[d]);
        return m;
    };
    const std::size_t ae = 5, t1 = 7, t2 = 8;
    c.expect(column_mean(t2) >= 0.85, "T2 mean AUC " + fmt(column_mean(t2)) + " < 0.85");
    c.expect(column_mean(ae) >= 0.80, "AE mean AUC " + fmt(column_mean(ae)) + " < 0.80");
    for (std::size_t d = 0; d < D; ++d)
        c.expect(column_mean(d) > 0.5, blocks[d]["kind"].get<std::string>() + " mean AUC " + fmt(column_mean(d)) + " <= 0.5");
    int t2_wins = 0;
    for (const auto& r : auc) t2_wins += r[t2] >= r[t1];
    c.expect(t2_wins >= 3, "T2 >= T1 in only " + std::to_string(t2_wins) + "/5 seeds");
    const double secs = seconds_since(t0);
    c.expect(secs < 600.0, "runtime " + fmt(secs) + " s");

    std::ostringstream s;
    s << "5-seed mean AUC T2 " << fmt(column_mean(t2)) << " (lowest seed " << fmt(column_min(t2)) << "), T1 "
      << fmt(column_mean(t1)) << ", AE " << fmt(column_mean(ae)) << " (lowest seed " << fmt(column_min(ae)) << ")";
    double lowest = 1.0;
    for (std::size_t d = 0; d < D; ++d) lowest = std::min(lowest, column_mean(d));
    s << ", lowest detector mean " << fmt(lowest) << ", T2 >= T1 in " << t2_wins << "/5 seeds, " << fmt(secs, 3) << " s";
    return c.outcome(s.str());
}

int run_command(const std::string& args) {
    const std::string cmd = "\"" GEOCHEM_CLI_PATH "\" " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome determinism() {
    Checks c;
    testing::TempDir dir("accept_det");
    SynthConfig sc;
    sc.n_samples = 600;
    sc.seed = 7;
    write_synth_files(generate_survey(sc), dir.file("syn"));
    json dets = json::array();
    for (auto k : all_detector_kinds()) {
        json b{{"kind", to_string(k)}};
        if (k == DetectorKind::AutoEncoder || k == DetectorKind::Vae) b["epochs"] = 10;
        if (k == DetectorKind::T1 || k == DetectorKind::GeoChemFormer) {
            b = reduced_transformer(to_string(k));
            b["scl_epochs"] = 2;
            b["edm_epochs"] = 2;
        }
        dets.push_back(b);
    }
    const json cfg{{"dataset", {{"name", "syn"}, {"survey", "syn_survey.csv"}, {"deposits", "syn_deposits.csv"}, {"target", "Au"}}},
                   {"detectors", dets},
                   {"save_models", true}};
    const std::string path = dir.write("cfg.json", cfg.dump(2));
    c.expect(run_command("run \"" + path + "\" -o \"" + dir.file("a") + "\"") == 0, "first run failed");
    c.expect(run_command("run \"" + path + "\" -o \"" + dir.file("b") + "\"") == 0, "second run failed");
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(dir.path() / "a")) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), dir.path() / "a");
        const auto other = dir.path() / "b" / rel;
        c.expect(fs::exists(other) && testing::slurp(entry.path()) == testing::slurp(other), rel.string() + " differs");
        ++compared;
    }
    c.expect(compared >= 9 * 3 + 3, "only " + std::to_string(compared) + " artifacts");
    return c.outcome(std::to_string(compared) + " artifacts compared across two runs with all 9 detectors");
}

Outcome real_data_smoke() {
    const char* path = std::getenv("GEOCHEM_SED1_SURVEY");
    if (!path || !*path) return {Outcome::Skip, "set GEOCHEM_SED1_SURVEY to a downloaded sed1 survey CSV to run"};
    Checks c;
    const Survey s = parse_survey_csv(path);
    c.expect(s.size() == 1392, std::to_string(s.size()) + " samples, expected 1392");
    c.expect(s.element_count() == 124, std::to_string(s.element_count()) + " elements, expected 124");
    return c.outcome(std::to_string(s.size()) + " samples, " + std::to_string(s.element_count()) + " elements");
}

}  // namespace

int main(int argc, char** argv) {
    // Optional: run a subset, e.g. `geochem_acceptance 1 5`.
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"compositional suite", compositional_suite},
        {"spatial suite", spatial_suite},
        {"autodiff gradient checks", autodiff_suite},
        {"loss and score recomputation, leakage guard", recomputation},
        {"metric suite", metric_suite},
        {"synthetic recovery", synthetic_recovery},
        {"determinism of cmd_run", determinism},
        {"real-data smoke (sed1)", real_data_smoke},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = int(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {Outcome::Fail, std::string("threw: ") + e.what()};
        }
        const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
        failed += o.status == Outcome::Fail;
        std::cout << "criterion " << id << " " << tag << "  " << criteria[i].first << ": " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
