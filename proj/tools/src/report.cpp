#include "report.hpp"

#include <charconv>
#include <cstddef>
#include <stdexcept>
#include <string_view>
#include <system_error>

#include "json.hpp"

namespace metabias::tool {

namespace {

constexpr std::string_view kReportHeader =
    "description\tmethod\texpected_m\tor\tci_lower\tci_upper\tp_value";
constexpr std::string_view kSummaryHeader = "method\tave\tsd\tcp\tloci\tnoc";

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buf, ptr);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string{}; }

double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::invalid_argument("bad numeric cell: " + std::string(s));
    return v;
}

std::optional<double> parse_opt(std::string_view s) {
    if (s.empty()) return std::nullopt;
    return parse_double(s);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> body_lines(std::string_view text, std::string_view header) {
    auto lines = split(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty() || lines.front() != header)
        throw std::invalid_argument("unrecognized table header");
    lines.erase(lines.begin());
    return lines;
}

std::string check_text(std::string s) {
    if (s.find('\t') != std::string::npos || s.find('\n') != std::string::npos)
        throw std::invalid_argument("text cell contains tab or newline: " + s);
    return s;
}

nlohmann::ordered_json json_of(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

std::optional<double> opt_of(const nlohmann::ordered_json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

}  // namespace

std::string to_tsv(const ReportTable& t) {
    std::string out{kReportHeader};
    out += '\n';
    for (const auto& r : t.rows) {
        out += check_text(r.description);
        out += '\t';
        out += check_text(r.method);
        out += '\t';
        out += fmt(r.expected_m);
        out += '\t';
        out += fmt(r.or_value);
        out += '\t';
        out += fmt(r.ci_lower);
        out += '\t';
        out += fmt(r.ci_upper);
        out += '\t';
        out += fmt(r.p_value);
        out += '\n';
    }
    return out;
}

ReportTable report_from_tsv(const std::string& text) {
    ReportTable t;
    for (auto line : body_lines(text, kReportHeader)) {
        auto cells = split(line, '\t');
        if (cells.size() != 7) throw std::invalid_argument("expected 7 cells per row");
        ReportRow r;
        r.description = std::string(cells[0]);
        r.method = std::string(cells[1]);
        r.expected_m = parse_opt(cells[2]);
        r.or_value = parse_opt(cells[3]);
        r.ci_lower = parse_opt(cells[4]);
        r.ci_upper = parse_opt(cells[5]);
        r.p_value = parse_opt(cells[6]);
        t.rows.push_back(std::move(r));
    }
    return t;
}

std::string to_json(const ReportTable& t) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : t.rows) {
        rows.push_back({{"description", r.description},
                        {"method", r.method},
                        {"expected_m", json_of(r.expected_m)},
                        {"or", json_of(r.or_value)},
                        {"ci_lower", json_of(r.ci_lower)},
                        {"ci_upper", json_of(r.ci_upper)},
                        {"p_value", json_of(r.p_value)}});
    }
    return rows.dump(2) + "\n";
}

ReportTable report_from_json(const std::string& text) {
    auto j = nlohmann::ordered_json::parse(text);
    if (!j.is_array()) throw std::invalid_argument("expected a JSON array of rows");
    ReportTable t;
    for (const auto& e : j) {
        ReportRow r;
        r.description = e.at("description").get<std::string>();
        r.method = e.at("method").get<std::string>();
        r.expected_m = opt_of(e, "expected_m");
        r.or_value = opt_of(e, "or");
        r.ci_lower = opt_of(e, "ci_lower");
        r.ci_upper = opt_of(e, "ci_upper");
        r.p_value = opt_of(e, "p_value");
        t.rows.push_back(std::move(r));
    }
    return t;
}

std::string to_tsv(const SummaryTable& t) {
    std::string out{kSummaryHeader};
    out += '\n';
    for (const auto& r : t.rows) {
        out += check_text(r.method);
        out += '\t';
        out += fmt(r.ave);
        out += '\t';
        out += fmt(r.sd);
        out += '\t';
        out += fmt(r.cp);
        out += '\t';
        out += fmt(r.loci);
        out += '\t';
        out += std::to_string(r.noc);
        out += '\n';
    }
    return out;
}

SummaryTable summary_from_tsv(const std::string& text) {
    SummaryTable t;
    for (auto line : body_lines(text, kSummaryHeader)) {
        auto cells = split(line, '\t');
        if (cells.size() != 6) throw std::invalid_argument("expected 6 cells per row");
        SummaryRow r;
        r.method = std::string(cells[0]);
        r.ave = parse_double(cells[1]);
        r.sd = parse_double(cells[2]);
        r.cp = parse_double(cells[3]);
        r.loci = parse_double(cells[4]);
        std::size_t noc = 0;
        auto [ptr, ec] = std::from_chars(cells[5].data(), cells[5].data() + cells[5].size(), noc);
        if (ec != std::errc{} || ptr != cells[5].data() + cells[5].size())
            throw std::invalid_argument("bad count cell");
        r.noc = noc;
        t.rows.push_back(std::move(r));
    }
    return t;
}

std::string to_json(const SummaryTable& t) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : t.rows) {
        rows.push_back({{"method", r.method},
                        {"ave", r.ave},
                        {"sd", r.sd},
                        {"cp", r.cp},
                        {"loci", r.loci},
                        {"noc", r.noc}});
    }
    return rows.dump(2) + "\n";
}

SummaryTable summary_from_json(const std::string& text) {
    auto j = nlohmann::ordered_json::parse(text);
    if (!j.is_array()) throw std::invalid_argument("expected a JSON array of rows");
    SummaryTable t;
    for (const auto& e : j) {
        SummaryRow r;
        r.method = e.at("method").get<std::string>();
        r.ave = e.at("ave").get<double>();
        r.sd = e.at("sd").get<double>();
        r.cp = e.at("cp").get<double>();
        r.loci = e.at("loci").get<double>();
        r.noc = e.at("noc").get<std::size_t>();
        t.rows.push_back(std::move(r));
    }
    return t;
}

}  // namespace metabias::tool
