#pragma once

#include <optional>
#include <string>
#include <vector>

namespace metabias::tool {

// One analysis result row; absent optionals serialize as empty TSV cells or
// JSON nulls. Values in the or/ci columns are on whatever scale the caller
// chose (odds ratio by default, log on request).
struct ReportRow {
    std::string description;
    std::string method;
    std::optional<double> expected_m;
    std::optional<double> or_value;
    std::optional<double> ci_lower;
    std::optional<double> ci_upper;
    std::optional<double> p_value;
};

struct ReportTable {
    std::vector<ReportRow> rows;
};

// Scenario summary row set matching the simulation table column set.
struct SummaryRow {
    std::string method;
    double ave = 0.0;
    double sd = 0.0;
    double cp = 0.0;
    double loci = 0.0;
    std::size_t noc = 0;
};

struct SummaryTable {
    std::vector<SummaryRow> rows;
};

// Serialization is round-trip idempotent: parse followed by re-serialization
// reproduces the byte stream. Doubles print in shortest round-trip form.
std::string to_tsv(const ReportTable& t);
std::string to_json(const ReportTable& t);
ReportTable report_from_tsv(const std::string& text);
ReportTable report_from_json(const std::string& text);

std::string to_tsv(const SummaryTable& t);
std::string to_json(const SummaryTable& t);
SummaryTable summary_from_tsv(const std::string& text);
SummaryTable summary_from_json(const std::string& text);

}  // namespace metabias::tool
