#include "geochem/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "geochem/error.hpp"
#include "geochem/random.hpp"
#include "geochem/spatial.hpp"

namespace geochem {

using nlohmann::json;

void SynthConfig::validate() const {
    if (n_samples < 2) throw ConfigError("synth: need at least two samples");
    if (!(width > 0.0 && height > 0.0)) throw ConfigError("synth: extent must be positive");
    if (n_elements < 1) throw ConfigError("synth: need at least one element");
    if (!(correlation_range > 0.0)) throw ConfigError("synth: correlation_range must be positive");
    if (!(halo_radius > 0.0)) throw ConfigError("synth: halo_radius must be positive");
    if (!(enrichment_factor > 1.0)) throw ConfigError("synth: enrichment_factor must exceed 1");
    if (!(noise >= 0.0)) throw ConfigError("synth: noise must be non-negative");
    if (target >= n_elements) throw ConfigError("synth: target element index out of range");
    for (auto p : pathfinders) {
        if (p >= n_elements) throw ConfigError("synth: pathfinder index " + std::to_string(p) + " out of range");
    }
}

json SynthConfig::to_json() const {
    return json{{"n_samples", n_samples},
                {"width", width},
                {"height", height},
                {"n_elements", n_elements},
                {"correlation_range", correlation_range},
                {"n_deposits", n_deposits},
                {"halo_radius", halo_radius},
                {"enrichment_factor", enrichment_factor},
                {"target", target},
                {"pathfinders", pathfinders},
                {"latent_fields", latent_fields},
                {"noise", noise},
                {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const json& j) {
    SynthConfig c;
    c.n_samples = j.value("n_samples", c.n_samples);
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.n_elements = j.value("n_elements", c.n_elements);
    c.correlation_range = j.value("correlation_range", c.correlation_range);
    c.n_deposits = j.value("n_deposits", c.n_deposits);
    c.halo_radius = j.value("halo_radius", c.halo_radius);
    c.enrichment_factor = j.value("enrichment_factor", c.enrichment_factor);
    c.target = j.value("target", c.target);
    c.pathfinders = j.value("pathfinders", c.pathfinders);
    c.latent_fields = j.value("latent_fields", c.latent_fields);
    c.noise = j.value("noise", c.noise);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

std::vector<ElementDescriptor> synth_elements(std::size_t count) {
    static const std::pair<const char*, Unit> table[] = {
        {"Au", Unit::Ppb}, {"Cu", Unit::Ppm}, {"Pb", Unit::Ppm}, {"Zn", Unit::Ppm}, {"As", Unit::Ppm},
        {"Ag", Unit::Ppb}, {"Ni", Unit::Ppm}, {"Co", Unit::Ppm}, {"Cr", Unit::Ppm}, {"Fe", Unit::Pct},
        {"Mn", Unit::Ppm}, {"Ti", Unit::Ppm}, {"Mo", Unit::Ppm}, {"Sb", Unit::Ppm}, {"Bi", Unit::Ppm},
        {"W", Unit::Ppm},  {"Sn", Unit::Ppm}, {"Ba", Unit::Ppm}, {"Sr", Unit::Ppm}, {"V", Unit::Ppm},
    };
    std::vector<ElementDescriptor> out;
    for (std::size_t c = 0; c < count; ++c) {
        ElementDescriptor e;
        if (c < std::size(table)) {
            e.symbol = table[c].first;
            e.unit = table[c].second;
        } else {
            e.symbol = "E" + std::to_string(c + 1);
        }
        e.column_name = e.symbol + "_" + unit_suffix(e.unit);
        out.push_back(std::move(e));
    }
    return out;
}

double enrichment_at(double distance, double factor, double radius) {
    if (distance > radius) return 1.0;
    const double s = radius / 2.0;
    return std::max(1.0, factor * std::exp(-distance * distance / (2.0 * s * s)));
}

namespace {

// Unit-variance Gaussian random field at the sample positions: white noise
// smoothed by a Gaussian kernel of bandwidth r, truncated at 3r.
std::vector<double> smoothed_field(const SpatialIndex& index, double r, Rng& rng) {
    const std::size_t n = index.size();
    std::vector<double> white(n);
    for (auto& w : white) w = rng.normal();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0, w2 = 0.0;
        for (const auto& nb : index.within(index.point(i), 3.0 * r)) {
            const double w = std::exp(-nb.distance * nb.distance / (2.0 * r * r));
            s += w * white[nb.index];
            w2 += w * w;
        }
        out[i] = s / std::sqrt(w2);
    }
    return out;
}

}  // namespace

SynthSurvey generate_survey(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const std::size_t N = config.n_samples;
    const std::size_t C = config.n_elements;

    // Jittered grid covering the extent.
    const auto nx = static_cast<std::size_t>(
        std::max(1.0, std::round(std::sqrt(static_cast<double>(N) * config.width / config.height))));
    const std::size_t ny = (N + nx - 1) / nx;
    const double dx = config.width / static_cast<double>(nx);
    const double dy = config.height / static_cast<double>(ny);
    std::vector<Point> pos(N);
    for (std::size_t i = 0; i < N; ++i) {
        const double gx = (static_cast<double>(i % nx) + 0.5 + rng.uniform(-0.25, 0.25)) * dx;
        const double gy = (static_cast<double>(i / nx) + 0.5 + rng.uniform(-0.25, 0.25)) * dy;
        pos[i] = {gx, gy};
    }
    const SpatialIndex index(pos);

    // Element baselines and loadings on the shared latent fields.
    std::vector<double> base(C), own(C);
    std::vector<std::vector<double>> loading(C, std::vector<double>(config.latent_fields));
    for (std::size_t c = 0; c < C; ++c) {
        base[c] = rng.uniform(0.5, 4.0);
        own[c] = rng.uniform(0.2, 0.4);
        for (auto& a : loading[c]) a = rng.normal(0.0, 0.4);
    }
    std::vector<std::vector<double>> latent;
    for (std::size_t f = 0; f < config.latent_fields; ++f) latent.push_back(smoothed_field(index, config.correlation_range, rng));

    std::vector<std::vector<double>> logv(N, std::vector<double>(C));
    for (std::size_t c = 0; c < C; ++c) {
        const auto field = smoothed_field(index, config.correlation_range, rng);
        for (std::size_t i = 0; i < N; ++i) {
            double v = base[c] + own[c] * field[i];
            for (std::size_t f = 0; f < config.latent_fields; ++f) v += loading[c][f] * latent[f][i];
            logv[i][c] = v;
        }
    }
    for (auto& row : logv) {
        for (auto& v : row) v += config.noise * rng.normal();
    }

    SynthSurvey out;
    for (std::size_t d = 0; d < config.n_deposits; ++d) {
        out.truth.deposits.push_back({rng.uniform(0.0, config.width), rng.uniform(0.0, config.height)});
    }
    out.truth.in_halo.assign(N, false);
    std::vector<bool> enriched(C, false);
    enriched[config.target] = true;
    for (auto p : config.pathfinders) enriched[p] = true;
    std::size_t halo_count = 0;
    for (std::size_t i = 0; i < N; ++i) {
        double factor = 1.0;
        for (const auto& dep : out.truth.deposits) {
            const double dist = planar_distance(pos[i], dep);
            if (dist <= config.halo_radius) out.truth.in_halo[i] = true;
            factor = std::max(factor, enrichment_at(dist, config.enrichment_factor, config.halo_radius));
        }
        if (out.truth.in_halo[i]) ++halo_count;
        for (std::size_t c = 0; c < C; ++c) {
            if (enriched[c]) logv[i][c] += std::log(factor);
        }
    }
    if (2 * halo_count > N) {
        out.warnings.push_back("synth: halos cover " + std::to_string(halo_count) + " of " + std::to_string(N) +
                               " samples; anomalies are no longer rare");
    }

    std::vector<Sample> samples(N);
    const int width = static_cast<int>(std::to_string(N).size());
    for (std::size_t i = 0; i < N; ++i) {
        std::string num = std::to_string(i + 1);
        samples[i].id = "SYN" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
        samples[i].sample_type = "soil";
        samples[i].position = pos[i];
        samples[i].values.resize(C);
        samples[i].missing.assign(C, false);
        for (std::size_t c = 0; c < C; ++c) samples[i].values[c] = std::exp(logv[i][c]);
    }
    out.survey = Survey(std::move(samples), synth_elements(C));
    for (std::size_t d = 0; d < out.truth.deposits.size(); ++d) {
        out.deposits.push_back({"DEP" + std::to_string(d + 1), "SYNTH", out.truth.deposits[d]});
    }
    return out;
}

void write_synth_files(const SynthSurvey& synth, const std::string& prefix) {
    write_survey_csv(synth.survey, prefix + "_survey.csv");
    write_deposits_csv(synth.deposits, prefix + "_deposits.csv");
    std::ofstream f(prefix + "_truth.csv", std::ios::binary);
    if (!f) throw DataError("cannot write " + prefix + "_truth.csv");
    f << "SAMPLEID,in_halo\n";
    for (std::size_t i = 0; i < synth.survey.size(); ++i) {
        f << synth.survey.samples()[i].id << ',' << (synth.truth.in_halo[i] ? 1 : 0) << '\n';
    }
}

}  // namespace geochem
