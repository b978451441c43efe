#include "geochem/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "geochem/error.hpp"
#include "geochem/random.hpp"

namespace geochem {

using nlohmann::json;

void EvalProtocol::validate() const {
    if (n_runs < 1) throw ConfigError("protocol: n_runs must be at least 1");
    if (bg_per_pos < 1) throw ConfigError("protocol: bg_per_pos must be at least 1");
    if (!(match_radius > 0.0) || !(exclusion_radius > 0.0)) throw ConfigError("protocol: radii must be positive");
    if (!(dtd_fraction > 0.0 && dtd_fraction <= 1.0)) throw ConfigError("protocol: dtd_fraction must lie in (0, 1]");
}

json EvalProtocol::to_json() const {
    return json{{"n_runs", n_runs},
                {"bg_per_pos", bg_per_pos},
                {"match_radius", match_radius},
                {"exclusion_radius", exclusion_radius},
                {"dtd_fraction", dtd_fraction},
                {"seed", seed}};
}

EvalProtocol EvalProtocol::from_json(const json& j) {
    EvalProtocol p;
    p.n_runs = j.value("n_runs", p.n_runs);
    p.bg_per_pos = j.value("bg_per_pos", p.bg_per_pos);
    p.match_radius = j.value("match_radius", p.match_radius);
    p.exclusion_radius = j.value("exclusion_radius", p.exclusion_radius);
    p.dtd_fraction = j.value("dtd_fraction", p.dtd_fraction);
    p.seed = j.value("seed", p.seed);
    p.validate();
    return p;
}

PositiveAssignment assign_positive_scores(const std::vector<double>& scores, const SpatialIndex& index,
                                          const std::vector<DepositSite>& deposits, const EvalProtocol& protocol,
                                          double avg_distance) {
    if (scores.size() != index.size()) throw DataError("scores are not aligned with the survey samples");
    PositiveAssignment out;
    const double radius = protocol.match_radius * avg_distance;
    for (const auto& dep : deposits) {
        const Neighbor nb = index.nearest(dep.position);
        if (nb.distance <= radius) {
            out.scores.push_back(scores[nb.index]);
            out.samples.push_back(nb.index);
            out.matched.push_back(dep.site_id);
        } else {
            out.dropped.push_back(dep.site_id);
        }
    }
    if (out.scores.empty()) throw DataError("no deposit lies within the match radius of any sample");
    return out;
}

std::vector<std::size_t> sample_background(const SpatialIndex& index, const std::vector<DepositSite>& deposits,
                                           const EvalProtocol& protocol, std::size_t n_positive,
                                           std::uint64_t run_seed, double avg_distance, std::string* warning) {
    const double radius = protocol.exclusion_radius * avg_distance;
    std::vector<bool> excluded(index.size(), false);
    for (const auto& dep : deposits) {
        for (const auto& nb : index.within(dep.position, radius)) excluded[nb.index] = true;
    }
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (!excluded[i]) pool.push_back(i);
    }
    const std::size_t want = protocol.bg_per_pos * n_positive;
    if (pool.size() <= want) {
        if (pool.size() < want && warning) {
            *warning = "background pool holds " + std::to_string(pool.size()) + " samples, " + std::to_string(want) +
                       " requested; using the whole pool";
        }
        return pool;
    }
    // Partial Fisher-Yates: the first `want` slots form the draw.
    Rng rng(run_seed);
    for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(want);
    return pool;
}

namespace {

void require_nonempty(const std::vector<double>& pos, const std::vector<double>& bg, const char* what) {
    if (pos.empty() || bg.empty()) throw DataError(std::string(what) + ": positive and background sets must be nonempty");
}

// (recall, precision) after each distinct score threshold, highest first.
std::vector<std::pair<double, double>> pr_points(const std::vector<double>& pos, const std::vector<double>& bg) {
    std::vector<std::pair<double, int>> all;
    all.reserve(pos.size() + bg.size());
    for (double s : pos) all.emplace_back(s, 1);
    for (double s : bg) all.emplace_back(s, 0);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::pair<double, double>> pts;
    double tp = 0.0, fp = 0.0;
    const double np = static_cast<double>(pos.size());
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) {
            (all[j].second ? tp : fp) += 1.0;
            ++j;
        }
        pts.emplace_back(tp / np, tp / (tp + fp));
        i = j;
    }
    return pts;
}

}  // namespace

double roc_auc(const std::vector<double>& pos, const std::vector<double>& bg) {
    require_nonempty(pos, bg, "auc");
    // Rank-sum form of the pair count: sort backgrounds once, then for each
    // positive count backgrounds below and equal.
    std::vector<double> sorted = bg;
    std::sort(sorted.begin(), sorted.end());
    double wins = 0.0;
    for (double p : pos) {
        const auto lo = std::lower_bound(sorted.begin(), sorted.end(), p);
        const auto hi = std::upper_bound(lo, sorted.end(), p);
        wins += static_cast<double>(lo - sorted.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(bg.size()));
}

double average_precision(const std::vector<double>& pos, const std::vector<double>& bg) {
    require_nonempty(pos, bg, "average precision");
    double ap = 0.0, prev_recall = 0.0;
    for (const auto& [recall, precision] : pr_points(pos, bg)) {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

double pr_auc(const std::vector<double>& pos, const std::vector<double>& bg) {
    require_nonempty(pos, bg, "pr-auc");
    const auto pts = pr_points(pos, bg);
    double area = 0.0;
    double r0 = 0.0, p0 = pts.front().second;
    for (const auto& [r, p] : pts) {
        area += (r - r0) * 0.5 * (p + p0);
        r0 = r;
        p0 = p;
    }
    return area;
}

double distance_to_deposits(const std::vector<double>& scores, const SpatialIndex& index,
                            const std::vector<DepositSite>& deposits, double top_fraction) {
    if (deposits.empty()) throw DataError("dtd: no deposits");
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw ConfigError("dtd: top fraction must lie in (0, 1]");
    if (scores.size() != index.size() || scores.empty()) throw DataError("dtd: scores are not aligned with the survey");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const auto top = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(scores.size()) - 1e-9));
    const std::size_t n = std::clamp<std::size_t>(top, 1, scores.size());
    double total = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& dep : deposits) best = std::min(best, planar_distance(index.point(order[t]), dep.position));
        total += best;
    }
    return total / static_cast<double>(n);
}

MetricSummary MetricSummary::from_runs(std::vector<double> runs) {
    MetricSummary m;
    m.runs = std::move(runs);
    if (m.runs.empty()) return m;
    double s = 0.0;
    for (double v : m.runs) s += v;
    m.mean = s / static_cast<double>(m.runs.size());
    double ss = 0.0;
    for (double v : m.runs) ss += (v - m.mean) * (v - m.mean);
    m.variance = ss / static_cast<double>(m.runs.size());
    return m;
}

json MetricSummary::to_json() const { return json{{"runs", runs}, {"mean", mean}, {"variance", variance}}; }

json EvalReport::to_json() const {
    return json{{"detector", detector},
                {"config_hash", config_hash},
                {"protocol", protocol.to_json()},
                {"auc", auc.to_json()},
                {"ap", ap.to_json()},
                {"pr_auc", pr_auc.to_json()},
                {"dtd", dtd},
                {"matched_deposits", matched_deposits},
                {"dropped_deposits", dropped_deposits},
                {"warnings", warnings}};
}

EvalReport run_protocol(const std::vector<double>& scores, const SpatialIndex& index,
                        const std::vector<DepositSite>& deposits, const EvalProtocol& protocol,
                        const std::string& detector, const std::string& config_hash) {
    protocol.validate();
    const double avg = average_sampling_distance(index);
    const PositiveAssignment positives = assign_positive_scores(scores, index, deposits, protocol, avg);

    EvalReport report;
    report.detector = detector;
    report.config_hash = config_hash;
    report.protocol = protocol;
    report.matched_deposits = positives.matched.size();
    report.dropped_deposits = positives.dropped;
    if (!positives.dropped.empty()) {
        report.warnings.push_back(std::to_string(positives.dropped.size()) + " deposit(s) had no sample within the match radius");
    }

    std::vector<double> auc, ap, pr;
    for (std::size_t r = 1; r <= protocol.n_runs; ++r) {
        std::string warning;
        const auto bg_idx = sample_background(index, deposits, protocol, positives.scores.size(), protocol.seed + r,
                                              avg, &warning);
        if (!warning.empty() && std::find(report.warnings.begin(), report.warnings.end(), warning) == report.warnings.end()) {
            report.warnings.push_back(warning);
        }
        std::vector<double> bg;
        bg.reserve(bg_idx.size());
        for (auto i : bg_idx) bg.push_back(scores[i]);
        auc.push_back(roc_auc(positives.scores, bg));
        ap.push_back(average_precision(positives.scores, bg));
        pr.push_back(geochem::pr_auc(positives.scores, bg));
    }
    report.auc = MetricSummary::from_runs(std::move(auc));
    report.ap = MetricSummary::from_runs(std::move(ap));
    report.pr_auc = MetricSummary::from_runs(std::move(pr));
    report.dtd = distance_to_deposits(scores, index, deposits, protocol.dtd_fraction);
    return report;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace geochem
