#include "geochem/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>

#include "geochem/csv.hpp"
#include "geochem/error.hpp"
#include "geochem/registry.hpp"

namespace geochem {

using nlohmann::json;
using csv::escape_field;
using csv::format_exact;
using csv::format_significant;
using csv::parse_double;
using csv::read_lines;
using csv::split_record;
namespace fs = std::filesystem;

namespace {

AbnormalStrategy abnormal_from_string(const std::string& name) {
    if (name == "half_detection_limit" || name == "half_dl") return AbnormalStrategy::HalfDetectionLimit;
    if (name == "drop" || name == "drop_sample") return AbnormalStrategy::DropSample;
    throw ConfigError("unknown abnormal-value strategy '" + name + "' (expected half_detection_limit or drop)");
}

const char* to_string(AbnormalStrategy s) {
    return s == AbnormalStrategy::DropSample ? "drop" : "half_detection_limit";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
    if (!f) throw DataError("failed writing " + path.string());
}

// Re-throws `e` with the stage prepended, keeping its exit code.
[[noreturn]] void rethrow_in_stage(const std::string& stage, const Error& e) {
    const std::string what = stage + ": " + e.what();
    switch (e.code()) {
        case ExitCode::Config: throw ConfigError(what);
        case ExitCode::Data: throw DataError(what);
        default: throw NumericError(what);
    }
}

}  // namespace

json PreprocessConfig::to_json() const {
    return json{{"abnormal", to_string(abnormal)},
                {"transform", geochem::to_string(transform)},
                {"standardize", standardize},
                {"order", std::string(select_first ? "select_first" : "transform_first")},
                {"selection", {{"strategy", geochem::to_string(selection)}, {"elements", selected}, {"variance", pca_variance}}}};
}

PreprocessConfig PreprocessConfig::from_json(const json& j) {
    PreprocessConfig p;
    if (j.contains("abnormal")) p.abnormal = abnormal_from_string(j.at("abnormal").get<std::string>());
    if (j.contains("transform")) p.transform = transform_space_from_string(j.at("transform").get<std::string>());
    p.standardize = j.value("standardize", p.standardize);
    const std::string order = j.value("order", std::string("transform_first"));
    if (order != "transform_first" && order != "select_first") {
        throw ConfigError("preprocess order must be transform_first or select_first");
    }
    p.select_first = order == "select_first";
    if (j.contains("selection")) {
        const json& s = j.at("selection");
        p.selection = selection_strategy_from_string(s.value("strategy", std::string("all")));
        p.selected = s.value("elements", std::vector<std::string>{});
        p.pca_variance = s.value("variance", p.pca_variance);
        if (p.selection == SelectionStrategy::Manual && p.selected.empty()) {
            throw ConfigError("manual selection needs a nonempty \"elements\" list");
        }
    }
    if (p.select_first && p.selection != SelectionStrategy::Manual) {
        throw ConfigError("select_first needs manual selection");
    }
    return p;
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir, const fs::path& default_output) {
    try {
        PipelineConfig c;
        auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
        json datasets = j.contains("datasets") ? j.at("datasets") : json::array({j.at("dataset")});
        for (const auto& d : datasets) {
            DatasetConfig ds;
            ds.survey = resolve(d.at("survey").get<std::string>());
            ds.deposits = resolve(d.at("deposits").get<std::string>());
            ds.name = d.value("name", ds.survey.stem().string());
            ds.target = d.at("target").get<std::string>();
            if (d.contains("elements")) ds.elements = d.at("elements").get<std::vector<std::string>>();
            c.datasets.push_back(std::move(ds));
        }
        if (c.datasets.empty()) throw ConfigError("config lists no datasets");
        if (j.contains("preprocess")) c.preprocess = PreprocessConfig::from_json(j.at("preprocess"));
        for (const auto& d : j.at("detectors")) {
            json block = d;
            block.erase("label");
            normalized_detector_block(block);  // validates kind and keys early
            c.detectors.push_back(d);
        }
        if (c.detectors.empty()) throw ConfigError("config lists no detectors");
        std::vector<std::string> labels;
        for (const auto& d : c.detectors) labels.push_back(detector_label(d));
        std::sort(labels.begin(), labels.end());
        if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) {
            throw ConfigError("detector labels must be unique; add a \"label\" to repeated kinds");
        }
        if (j.contains("protocol")) c.protocol = EvalProtocol::from_json(j.at("protocol"));
        const std::string out = j.value("output_dir", std::string());
        c.output_dir = out.empty() ? default_output : resolve(out);
        c.parallel = j.value("parallel", false);
        c.save_models = j.value("save_models", false);
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

PipelineConfig PipelineConfig::load(const fs::path& path, const fs::path& default_output) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(f, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path(), default_output);
}

PreparedSurvey prepare_survey(const Survey& raw, const std::string& target, const PreprocessConfig& cfg) {
    PreparedSurvey out;
    out.survey = handle_abnormal_values(raw, cfg.abnormal);
    std::vector<std::string> dropped;
    CompositionMatrix comp = to_composition(out.survey, &dropped);
    for (const auto& d : dropped) out.warnings.push_back("element " + d + " has no usable values and was dropped");
    PreprocessConfig config = cfg;
    if (config.select_first) {
        if (config.selection != SelectionStrategy::Manual) throw ConfigError("select_first needs manual selection");
        if (std::find(config.selected.begin(), config.selected.end(), target) == config.selected.end()) {
            throw ConfigError("select_first needs the target element among the selected elements");
        }
        std::vector<Eigen::Index> cols;
        for (const auto& sym : config.selected) {
            const auto e = std::find(comp.element_names.begin(), comp.element_names.end(), sym);
            if (e == comp.element_names.end()) throw ConfigError("selected element '" + sym + "' is not in the survey");
            cols.push_back(static_cast<Eigen::Index>(e - comp.element_names.begin()));
        }
        comp = select_features(comp, FeatureSelection::manual(std::move(cols)));
        config.selection = SelectionStrategy::All;
    }
    const auto it = std::find(comp.element_names.begin(), comp.element_names.end(), target);
    if (it == comp.element_names.end()) throw DataError("target element '" + target + "' is not in the survey");
    const auto target_idx = static_cast<Eigen::Index>(it - comp.element_names.begin());

    CompositionMatrix transformed;
    Eigen::VectorXd target_series;
    switch (config.transform) {
        case TransformSpace::Raw:
        case TransformSpace::ZScore:
            transformed = comp;
            target_series = comp.data.col(target_idx);
            break;
        case TransformSpace::Clr:
            transformed = clr_transform(comp);
            target_series = transformed.data.col(target_idx);
            break;
        case TransformSpace::Ilr:
            transformed = ilr_transform(comp);
            target_series = clr_transform(comp).data.col(target_idx);
            break;
    }

    json meta{{"transform", to_string(config.transform)},
              {"order", std::string(cfg.select_first ? "select_first" : "transform_first")},
              {"elements", comp.element_names},
              {"target", target}};
    if (config.standardize || config.transform == TransformSpace::ZScore) {
        const Standardizer st = Standardizer::fit(transformed.data);
        transformed.data = st.apply(transformed.data);
        const Standardizer ts = Standardizer::fit(target_series);
        target_series = ts.apply(target_series);
        meta["standardize"] = {{"mean", vector_to_json(st.mean)}, {"scale", vector_to_json(st.scale)}};
    }

    FeatureSelection selection;
    std::optional<Eigen::Index> target_column;
    const bool per_element = config.transform != TransformSpace::Ilr;
    switch (config.selection) {
        case SelectionStrategy::All:
            if (per_element) target_column = target_idx;
            break;
        case SelectionStrategy::Manual: {
            if (!per_element) throw ConfigError("manual element selection does not apply to ILR coordinates");
            std::vector<Eigen::Index> cols;
            for (const auto& sym : config.selected) {
                const auto e = std::find(comp.element_names.begin(), comp.element_names.end(), sym);
                if (e == comp.element_names.end()) throw ConfigError("selected element '" + sym + "' is not in the survey");
                const auto col = static_cast<Eigen::Index>(e - comp.element_names.begin());
                if (col == target_idx) target_column = static_cast<Eigen::Index>(cols.size());
                cols.push_back(col);
            }
            selection = FeatureSelection::manual(std::move(cols));
            break;
        }
        case SelectionStrategy::Pca: selection = fit_pca(transformed, config.pca_variance); break;
    }
    out.matrix = select_features(transformed, selection);
    meta["selection"] = {{"strategy", to_string(config.selection)}, {"columns", out.matrix.element_names}};
    if (config.selection == SelectionStrategy::Pca) {
        meta["selection"]["center"] = vector_to_json(selection.center);
        meta["selection"]["loadings"] = matrix_to_json(selection.loadings);
    }

    out.input.features = out.matrix.data;
    out.input.positions = out.survey.positions();
    out.input.target_column = target_column;
    out.input.target_values = target_series;
    out.input.target_id = static_cast<std::size_t>(target_idx);
    out.input.element_vocab = comp.element_names.size();
    out.metadata = std::move(meta);
    return out;
}

std::string detector_label(const json& block) {
    if (block.contains("label")) return block.at("label").get<std::string>();
    return to_string(detector_kind_from_string(block.at("kind").get<std::string>()));
}

void write_scored_csv(const Survey& survey, const std::vector<double>& scores, const std::string& path) {
    if (scores.size() != survey.size()) throw DataError("scores are not aligned with the survey");
    std::string text = "SAMPLEID,x,y,score\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& s = survey.samples()[i];
        text += escape_field(s.id) + ',' + format_exact(s.position.x) + ',' + format_exact(s.position.y) + ',' +
                format_significant(scores[i], 10) + '\n';
    }
    write_text(path, text);
}

std::vector<ScoredPoint> read_scored_csv(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw DataError(path + ": empty file");
    const auto header = split_record(lines[0]);
    auto col = [&](const char* name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError(path + ": missing column " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ci = col("SAMPLEID"), cx = col("x"), cy = col("y"), cs = col("score");
    std::vector<ScoredPoint> out;
    for (std::size_t l = 1; l < lines.size(); ++l) {
        if (lines[l].empty()) continue;
        const auto f = split_record(lines[l]);
        ScoredPoint p;
        if (f.size() != header.size() || !parse_double(f[cx], p.position.x) || !parse_double(f[cy], p.position.y) ||
            !parse_double(f[cs], p.score)) {
            throw DataError(path + ": malformed row " + std::to_string(l + 1));
        }
        p.id = f[ci];
        out.push_back(std::move(p));
    }
    if (out.empty()) throw DataError(path + ": no scored rows");
    return out;
}

namespace {

struct DetectorOutcome {
    std::string label;
    std::vector<double> scores;
    EvalReport report;
    json snapshot;
    std::vector<std::string> warnings;
};

DetectorOutcome run_detector(const json& block, const PreparedSurvey& prepared, const SpatialIndex& index,
                             const std::vector<DepositSite>& deposits, const PipelineConfig& config) {
    DetectorOutcome out;
    out.label = detector_label(block);
    json clean = block;
    clean.erase("label");
    const json normalized = normalized_detector_block(clean);
    const std::string hash = fnv1a_hex(normalized.dump() + config.preprocess.to_json().dump());
    std::string stage = "fit " + out.label;
    try {
        auto det = make_detector(normalized);
        det->fit(prepared.input);
        stage = "score " + out.label;
        out.scores = det->score(prepared.input);
        out.warnings = det->warnings();
        stage = "evaluate " + out.label;
        out.report = run_protocol(out.scores, index, deposits, config.protocol, out.label, hash);
        out.report.warnings.insert(out.report.warnings.begin(), out.warnings.begin(), out.warnings.end());
        if (config.save_models) {
            out.snapshot = detector_snapshot(*det);
            out.snapshot["preprocessing"] = prepared.metadata;
        }
    } catch (const Error& e) {
        rethrow_in_stage(stage, e);
    }
    return out;
}

}  // namespace

RunSummary run_pipeline(const PipelineConfig& config) {
    fs::create_directories(config.output_dir);
    json manifest{{"status", "running"}, {"artifacts", json::array()}, {"warnings", json::array()}};
    auto save_manifest = [&] { write_text(config.output_dir / "manifest.json", manifest.dump(2) + "\n"); };
    auto record = [&](const fs::path& p) { manifest["artifacts"].push_back(fs::relative(p, config.output_dir).generic_string()); };

    RunSummary summary;
    for (const auto& block : config.detectors) summary.detectors.push_back(detector_label(block));
    std::string stage = "ingest";
    try {
        for (const auto& ds : config.datasets) {
            stage = "ingest " + ds.name;
            const Survey raw = parse_survey_csv(ds.survey.string(), ds.elements);
            const auto deposits = parse_deposits_csv(ds.deposits.string());
            stage = "preprocess " + ds.name;
            const PreparedSurvey prepared = prepare_survey(raw, ds.target, config.preprocess);
            for (const auto& w : prepared.warnings) manifest["warnings"].push_back(ds.name + ": " + w);
            const SpatialIndex index(prepared.input.positions);
            const fs::path dir = config.output_dir / ds.name;
            fs::create_directories(dir);

            stage = "detectors " + ds.name;
            std::vector<DetectorOutcome> outcomes;
            if (config.parallel) {
                std::vector<std::future<DetectorOutcome>> jobs;
                for (const auto& block : config.detectors) {
                    jobs.push_back(std::async(std::launch::async, run_detector, std::cref(block), std::cref(prepared),
                                              std::cref(index), std::cref(deposits), std::cref(config)));
                }
                for (auto& j : jobs) outcomes.push_back(j.get());
            } else {
                for (const auto& block : config.detectors) {
                    outcomes.push_back(run_detector(block, prepared, index, deposits, config));
                }
            }

            stage = "write " + ds.name;
            std::vector<double> row;
            for (const auto& o : outcomes) {
                const fs::path scores = dir / (o.label + "_scores.csv");
                write_scored_csv(prepared.survey, o.scores, scores.string());
                record(scores);
                const fs::path report = dir / (o.label + "_report.json");
                json rj = o.report.to_json();
                rj["dataset"] = ds.name;
                write_text(report, rj.dump(2) + "\n");
                record(report);
                if (config.save_models) {
                    const fs::path model = dir / (o.label + "_model.json");
                    write_text(model, o.snapshot.dump() + "\n");
                    record(model);
                }
                row.push_back(o.report.auc.mean);
            }
            summary.datasets.push_back(ds.name);
            summary.mean_auc.push_back(std::move(row));
            save_manifest();
        }

        stage = "comparison";
        std::string table = "dataset";
        for (const auto& d : summary.detectors) table += "," + d;
        table += "\n";
        std::string rows = "dataset,detector,auc_mean,auc_var,ap_mean,pr_auc_mean,dtd\n";
        for (std::size_t r = 0; r < summary.datasets.size(); ++r) {
            table += escape_field(summary.datasets[r]);
            for (double v : summary.mean_auc[r]) table += "," + format_exact(v);
            table += "\n";
        }
        // Flat rows, one per (dataset, detector), read back from the reports.
        for (const auto& ds : summary.datasets) {
            for (const auto& d : summary.detectors) {
                std::ifstream f(config.output_dir / ds / (d + "_report.json"));
                const json rj = json::parse(f);
                rows += escape_field(ds) + "," + escape_field(d) + "," + format_exact(rj["auc"]["mean"].get<double>()) +
                        "," + format_exact(rj["auc"]["variance"].get<double>()) + "," +
                        format_exact(rj["ap"]["mean"].get<double>()) + "," +
                        format_exact(rj["pr_auc"]["mean"].get<double>()) + "," + format_exact(rj["dtd"].get<double>()) +
                        "\n";
            }
        }
        write_text(config.output_dir / "comparison.csv", table);
        record(config.output_dir / "comparison.csv");
        write_text(config.output_dir / "comparison_rows.csv", rows);
        record(config.output_dir / "comparison_rows.csv");
        manifest["status"] = "ok";
        save_manifest();
    } catch (const Error& e) {
        manifest["status"] = "failed";
        manifest["stage"] = stage;
        manifest["error"] = e.what();
        save_manifest();
        // Detector stages already carry their own stage prefix.
        if (stage.rfind("detectors ", 0) == 0) throw;
        rethrow_in_stage(stage, e);
    }
    return summary;
}

SurveyStats survey_stats(const Survey& survey) {
    SurveyStats s;
    s.samples = survey.size();
    s.elements = survey.element_count();
    const auto pts = survey.positions();
    s.min_x = s.min_y = std::numeric_limits<double>::infinity();
    s.max_x = s.max_y = -std::numeric_limits<double>::infinity();
    for (const auto& p : pts) {
        s.min_x = std::min(s.min_x, p.x);
        s.max_x = std::max(s.max_x, p.x);
        s.min_y = std::min(s.min_y, p.y);
        s.max_y = std::max(s.max_y, p.y);
    }
    if (pts.size() >= 2) s.avg_sampling_distance = average_sampling_distance(SpatialIndex(pts));
    return s;
}

}  // namespace geochem
