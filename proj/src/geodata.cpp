#include "geochem/geodata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "geochem/csv.hpp"
#include "geochem/error.hpp"

namespace geochem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

/// Maps lower-cased header names to their column position.
std::unordered_map<std::string, std::size_t> header_lookup(const std::vector<std::string>& header) {
    std::unordered_map<std::string, std::size_t> lookup;
    for (std::size_t i = 0; i < header.size(); ++i) lookup.emplace(lower(header[i]), i);
    return lookup;
}

std::size_t require_column(const std::unordered_map<std::string, std::size_t>& lookup, const std::string& name,
                           const std::string& path) {
    auto it = lookup.find(lower(name));
    if (it == lookup.end()) throw DataError(path + ": missing required column '" + name + "'");
    return it->second;
}

double parse_coordinate(const std::string& text, const std::string& path, std::size_t line_no, const char* axis) {
    double v = 0.0;
    if (!csv::parse_double(text, v) || !std::isfinite(v)) {
        throw DataError(path + ":" + std::to_string(line_no) + ": unparseable " + axis + " coordinate '" + text +
                        "'");
    }
    return v;
}

}  // namespace

const char* unit_suffix(Unit unit) {
    switch (unit) {
        case Unit::Ppm: return "ppm";
        case Unit::Ppb: return "ppb";
        case Unit::Pct: return "pct";
    }
    return "ppm";
}

std::optional<ElementDescriptor> detect_element_column(const std::string& header) {
    const auto pos = header.rfind('_');
    if (pos == std::string::npos || pos == 0) return std::nullopt;
    const std::string suffix = lower(header.substr(pos + 1));
    Unit unit;
    if (suffix == "ppm") unit = Unit::Ppm;
    else if (suffix == "ppb") unit = Unit::Ppb;
    else if (suffix == "pct") unit = Unit::Pct;
    else return std::nullopt;
    return ElementDescriptor{header.substr(0, pos), unit, header};
}

bool same_sample(const Sample& a, const Sample& b) {
    if (a.id != b.id || a.sample_type != b.sample_type || !(a.position == b.position)) return false;
    if (a.values.size() != b.values.size() || a.missing != b.missing) return false;
    for (std::size_t c = 0; c < a.values.size(); ++c) {
        if (!a.missing[c] && a.values[c] != b.values[c]) return false;
    }
    return true;
}

Survey::Survey(std::vector<Sample> samples, std::vector<ElementDescriptor> elements)
    : samples_(std::move(samples)), elements_(std::move(elements)) {
    if (samples_.empty()) throw DataError("survey has no samples");
    if (elements_.empty()) throw DataError("survey has no element columns");
    for (const auto& e : elements_) {
        if (e.symbol.empty()) throw DataError("element column '" + e.column_name + "' has an empty symbol");
    }
    std::unordered_set<std::string> ids;
    for (const auto& s : samples_) {
        if (s.values.size() != elements_.size() || s.missing.size() != elements_.size()) {
            throw DataError("sample '" + s.id + "' does not match the element registry");
        }
        if (!ids.insert(s.id).second) throw DataError("duplicate SAMPLEID '" + s.id + "'");
    }
}

std::optional<std::size_t> Survey::element_index(const std::string& symbol) const {
    for (std::size_t c = 0; c < elements_.size(); ++c) {
        if (elements_[c].symbol == symbol || elements_[c].column_name == symbol) return c;
    }
    return std::nullopt;
}

std::vector<Point> Survey::positions() const {
    std::vector<Point> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.position);
    return out;
}

bool operator==(const Survey& a, const Survey& b) {
    if (a.elements_ != b.elements_ || a.samples_.size() != b.samples_.size()) return false;
    for (std::size_t i = 0; i < a.samples_.size(); ++i) {
        if (!same_sample(a.samples_[i], b.samples_[i])) return false;
    }
    return true;
}

Survey parse_survey_csv(const std::string& path, const std::optional<std::vector<std::string>>& element_filter) {
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw DataError(path + ": empty file, expected a header row");
    const auto header = csv::split_record(lines.front());
    const auto lookup = header_lookup(header);
    const std::size_t id_col = require_column(lookup, "SAMPLEID", path);
    const std::size_t x_col = require_column(lookup, "x", path);
    const std::size_t y_col = require_column(lookup, "y", path);
    std::optional<std::size_t> type_col;
    if (auto it = lookup.find("sampletype"); it != lookup.end()) type_col = it->second;

    std::vector<ElementDescriptor> elements;
    std::vector<std::size_t> element_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i == id_col || i == x_col || i == y_col || (type_col && i == *type_col)) continue;
        auto desc = detect_element_column(header[i]);
        if (!desc) continue;
        if (element_filter) {
            const auto& f = *element_filter;
            if (std::find(f.begin(), f.end(), desc->symbol) == f.end()) continue;
        }
        elements.push_back(*desc);
        element_cols.push_back(i);
    }
    if (elements.empty()) throw DataError(path + ": no element columns matching 'Elem_ppm|ppb|pct'");
    if (element_filter) {
        for (const auto& symbol : *element_filter) {
            if (std::none_of(elements.begin(), elements.end(), [&](const auto& e) { return e.symbol == symbol; })) {
                throw DataError(path + ": requested element '" + symbol + "' not found");
            }
        }
    }

    std::vector<Sample> samples;
    samples.reserve(lines.size() - 1);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto fields = csv::split_record(lines[li]);
        const std::size_t line_no = li + 1;
        if (fields.size() < header.size()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(fields.size()));
        }
        Sample s;
        s.id = fields[id_col];
        if (type_col) s.sample_type = fields[*type_col];
        s.position = {parse_coordinate(fields[x_col], path, line_no, "x"),
                      parse_coordinate(fields[y_col], path, line_no, "y")};
        s.values.resize(elements.size());
        s.missing.resize(elements.size());
        for (std::size_t c = 0; c < elements.size(); ++c) {
            const auto& text = fields[element_cols[c]];
            double v = 0.0;
            if (text.empty() || lower(text) == "nan" || lower(text) == "na") {
                s.values[c] = kNaN;
                s.missing[c] = true;
            } else if (csv::parse_double(text, v) && std::isfinite(v)) {
                s.values[c] = v;
                s.missing[c] = false;
            } else {
                throw DataError(path + ":" + std::to_string(line_no) + ": unparseable value '" + text +
                                "' in column " + elements[c].column_name);
            }
        }
        samples.push_back(std::move(s));
    }
    return Survey(std::move(samples), std::move(elements));
}

std::vector<DepositSite> parse_deposits_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw DataError(path + ": empty file, expected a header row");
    const auto header = csv::split_record(lines.front());
    const auto lookup = header_lookup(header);
    const std::size_t site_col = require_column(lookup, "SiteID", path);
    const std::size_t x_col = require_column(lookup, "x", path);
    const std::size_t y_col = require_column(lookup, "y", path);
    std::optional<std::size_t> project_col;
    if (auto it = lookup.find("projectid"); it != lookup.end()) project_col = it->second;

    std::vector<DepositSite> sites;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto fields = csv::split_record(lines[li]);
        const std::size_t line_no = li + 1;
        if (fields.size() < header.size()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": truncated row");
        }
        DepositSite d;
        d.site_id = fields[site_col];
        if (project_col) d.project_id = fields[*project_col];
        d.position = {parse_coordinate(fields[x_col], path, line_no, "x"),
                      parse_coordinate(fields[y_col], path, line_no, "y")};
        sites.push_back(std::move(d));
    }
    return sites;
}

void write_survey_csv(const Survey& survey, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << "SAMPLEID,SAMPLETYPE,x,y";
    for (const auto& e : survey.elements()) out << ',' << csv::escape_field(e.column_name);
    out << '\n';
    for (const auto& s : survey.samples()) {
        out << csv::escape_field(s.id) << ',' << csv::escape_field(s.sample_type) << ','
            << csv::format_exact(s.position.x) << ',' << csv::format_exact(s.position.y);
        for (std::size_t c = 0; c < s.values.size(); ++c) {
            out << ',';
            if (!s.missing[c]) out << csv::format_exact(s.values[c]);
        }
        out << '\n';
    }
}

void write_deposits_csv(const std::vector<DepositSite>& deposits, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << "SiteID,ProjectID,x,y\n";
    for (const auto& d : deposits) {
        out << csv::escape_field(d.site_id) << ',' << csv::escape_field(d.project_id) << ','
            << csv::format_exact(d.position.x) << ',' << csv::format_exact(d.position.y) << '\n';
    }
}

bool is_abnormal(double value, bool missing) {
    return missing || !std::isfinite(value) || value <= 0.0;
}

Survey handle_abnormal_values(const Survey& survey, AbnormalStrategy strategy) {
    const std::size_t n_elements = survey.element_count();
    std::vector<Sample> out;
    out.reserve(survey.size());

    if (strategy == AbnormalStrategy::DropSample) {
        for (const auto& s : survey.samples()) {
            bool bad = false;
            for (std::size_t c = 0; c < n_elements && !bad; ++c) bad = is_abnormal(s.values[c], s.missing[c]);
            if (!bad) out.push_back(s);
        }
        if (out.empty()) throw DataError("no samples left after dropping abnormal values");
        return Survey(std::move(out), survey.elements());
    }

    std::vector<double> min_positive(n_elements, std::numeric_limits<double>::infinity());
    for (const auto& s : survey.samples()) {
        for (std::size_t c = 0; c < n_elements; ++c) {
            if (!is_abnormal(s.values[c], s.missing[c])) min_positive[c] = std::min(min_positive[c], s.values[c]);
        }
    }
    for (Sample s : survey.samples()) {
        for (std::size_t c = 0; c < n_elements; ++c) {
            if (!is_abnormal(s.values[c], s.missing[c])) continue;
            if (std::isfinite(min_positive[c])) {
                s.values[c] = 0.5 * min_positive[c];
                s.missing[c] = false;
            } else {
                s.values[c] = kNaN;
                s.missing[c] = true;
            }
        }
        out.push_back(std::move(s));
    }
    return Survey(std::move(out), survey.elements());
}

}  // namespace geochem
