#pragma once

#include <optional>
#include <string>
#include <vector>

namespace geochem {

/// Planar position in survey coordinates (longitude, latitude degrees).
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

enum class Unit { Ppm, Ppb, Pct };

const char* unit_suffix(Unit unit);

/// One element column, e.g. symbol "Au", unit ppb, column "Au_ppb".
struct ElementDescriptor {
    std::string symbol;
    Unit unit = Unit::Ppm;
    std::string column_name;

    friend bool operator==(const ElementDescriptor&, const ElementDescriptor&) = default;
};

/// Returns the descriptor for a column following the `Symbol_unit` naming,
/// or nothing when the header is not an element column.
std::optional<ElementDescriptor> detect_element_column(const std::string& header);

struct Sample {
    std::string id;
    std::string sample_type;
    Point position;
    /// Raw readings. Entries flagged in `missing` hold NaN.
    std::vector<double> values;
    std::vector<bool> missing;
};

/// Value equality that treats masked entries as equal regardless of payload.
bool same_sample(const Sample& a, const Sample& b);

inline constexpr const char* kCrsTag = "GDA2020";

class Survey {
public:
    Survey() = default;
    /// Validates: at least one sample and element, unique ids, aligned vectors.
    Survey(std::vector<Sample> samples, std::vector<ElementDescriptor> elements);

    const std::vector<Sample>& samples() const { return samples_; }
    const std::vector<ElementDescriptor>& elements() const { return elements_; }
    std::size_t size() const { return samples_.size(); }
    std::size_t element_count() const { return elements_.size(); }
    const char* crs_tag() const { return kCrsTag; }

    /// Index of the element with this symbol, or nothing.
    std::optional<std::size_t> element_index(const std::string& symbol) const;
    std::vector<Point> positions() const;

    friend bool operator==(const Survey& a, const Survey& b);

private:
    std::vector<Sample> samples_;
    std::vector<ElementDescriptor> elements_;
};

struct DepositSite {
    std::string site_id;
    std::string project_id;
    Point position;

    friend bool operator==(const DepositSite&, const DepositSite&) = default;
};

/// Reads a survey CSV. Element columns are recognised by their `_ppm`, `_ppb`
/// or `_pct` suffix; `element_filter` keeps only the listed symbols (in file
/// order). Abnormal sentinels are kept as raw values.
Survey parse_survey_csv(const std::string& path,
                        const std::optional<std::vector<std::string>>& element_filter = std::nullopt);

std::vector<DepositSite> parse_deposits_csv(const std::string& path);

/// Canonical writer: SAMPLEID,SAMPLETYPE,x,y,<element columns>. Values are
/// written in shortest round-trip form; masked entries are empty cells.
void write_survey_csv(const Survey& survey, const std::string& path);
void write_deposits_csv(const std::vector<DepositSite>& deposits, const std::string& path);

enum class AbnormalStrategy { DropSample, HalfDetectionLimit };

/// Anything at or below zero (which includes the -9999 style sentinels) or an
/// empty cell counts as abnormal.
bool is_abnormal(double value, bool missing);

/// Drops affected samples, or replaces abnormal entries of element c with
/// half of the smallest strictly positive observation of c. Elements with no
/// positive observation keep their abnormal entries masked.
Survey handle_abnormal_values(const Survey& survey, AbnormalStrategy strategy);

}  // namespace geochem
