#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace metabias {

// One study row. Counts are optional as a block: either all four are present
// or none. Effects may be given directly, computed from counts, or (for
// unpublished rows) absent entirely; explicit yi/sei win over counts.
struct StudyRecord {
    std::string id;
    bool published = true;
    std::optional<std::int64_t> events_trt;
    std::optional<std::int64_t> total_trt;
    std::optional<std::int64_t> events_ctl;
    std::optional<std::int64_t> total_ctl;
    std::int64_t n = 0;  // total sample size, required for every row
    std::optional<double> yi;
    std::optional<double> sei;
};

struct Violation {
    std::size_t row;  // 1-based data row; 0 for dataset-level rules
    std::string rule;
};

class DatasetError : public std::runtime_error {
public:
    explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

// Log odds ratio and its standard error from a 2x2 table. When any cell is
// zero, 0.5 is added to all four cells before both computations.
std::pair<double, double> two_by_two_effect(std::int64_t events_trt, std::int64_t total_trt,
                                            std::int64_t events_ctl, std::int64_t total_ctl);

class MetaDataset {
public:
    MetaDataset() = default;

    // Fills missing effects from counts where possible; no validation.
    static MetaDataset unchecked(std::vector<StudyRecord> records);
    // unchecked + validate; throws DatasetError listing every violation.
    static MetaDataset checked(std::vector<StudyRecord> records);

    const std::vector<StudyRecord>& studies() const { return studies_; }
    std::size_t n_published() const;
    std::size_t n_unpublished() const;

    // column views over the published (resp. unpublished) rows, in file order
    std::vector<double> published_yi() const;
    std::vector<double> published_sei() const;
    std::vector<double> published_n() const;
    std::vector<double> unpublished_n() const;

private:
    std::vector<StudyRecord> studies_;
};

std::vector<Violation> validate(const MetaDataset& ds);

// CSV with the exact header
//   study,events_trt,total_trt,events_ctl,total_ctl,n,yi,sei,published
// Optional fields are empty strings. Throws DatasetError naming the row and
// rule on malformed input or validation failure.
MetaDataset parse_csv(std::istream& in);
MetaDataset parse_csv_file(const std::string& path);
std::string serialize_csv(const MetaDataset& ds);

}  // namespace metabias
