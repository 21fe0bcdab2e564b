#include "metabias/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace metabias {

namespace {

const char* kHeader = "study,events_trt,total_trt,events_ctl,total_ctl,n,yi,sei,published";

std::string trimmed(std::string s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trimmed(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trimmed(cur));
    return out;
}

std::optional<std::int64_t> parse_count(const std::string& s, std::size_t row, const char* col) {
    if (s.empty()) return std::nullopt;
    std::int64_t v = 0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    const auto rc = std::from_chars(first, last, v);
    if (rc.ec != std::errc{} || rc.ptr != last)
        throw DatasetError("row " + std::to_string(row) + ": field '" + col +
                           "' is not an integer: '" + s + "'");
    return v;
}

std::optional<double> parse_real(const std::string& s, std::size_t row, const char* col) {
    if (s.empty()) return std::nullopt;
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DatasetError("row " + std::to_string(row) + ": field '" + col +
                           "' is not a finite number: '" + s + "'");
    }
}

std::string fmt_real(double v) {
    char buf[64];
    const auto rc = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, rc.ptr);
}

bool counts_complete(const StudyRecord& r) {
    return r.events_trt && r.total_trt && r.events_ctl && r.total_ctl;
}

bool counts_partial(const StudyRecord& r) {
    const int have = int(bool(r.events_trt)) + int(bool(r.total_trt)) +
                     int(bool(r.events_ctl)) + int(bool(r.total_ctl));
    return have != 0 && have != 4;
}

bool counts_in_range(const StudyRecord& r) {
    return *r.total_trt > 0 && *r.total_ctl > 0 && *r.events_trt >= 0 &&
           *r.events_ctl >= 0 && *r.events_trt <= *r.total_trt &&
           *r.events_ctl <= *r.total_ctl;
}

}  // namespace

std::pair<double, double> two_by_two_effect(std::int64_t events_trt, std::int64_t total_trt,
                                            std::int64_t events_ctl, std::int64_t total_ctl) {
    if (total_trt <= 0 || total_ctl <= 0 || events_trt < 0 || events_ctl < 0 ||
        events_trt > total_trt || events_ctl > total_ctl)
        throw DatasetError("two_by_two_effect: counts out of range");
    double a = double(events_trt);
    double b = double(total_trt - events_trt);
    double c = double(events_ctl);
    double d = double(total_ctl - events_ctl);
    if (a == 0.0 || b == 0.0 || c == 0.0 || d == 0.0) {
        a += 0.5;
        b += 0.5;
        c += 0.5;
        d += 0.5;
    }
    const double yi = std::log(a * d / (b * c));
    const double sei = std::sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d);
    return {yi, sei};
}

MetaDataset MetaDataset::unchecked(std::vector<StudyRecord> records) {
    for (auto& r : records) {
        if ((!r.yi || !r.sei) && counts_complete(r) && counts_in_range(r)) {
            const auto [y, s] = two_by_two_effect(*r.events_trt, *r.total_trt,
                                                  *r.events_ctl, *r.total_ctl);
            if (!r.yi) r.yi = y;
            if (!r.sei) r.sei = s;
        }
    }
    MetaDataset ds;
    ds.studies_ = std::move(records);
    return ds;
}

MetaDataset MetaDataset::checked(std::vector<StudyRecord> records) {
    MetaDataset ds = unchecked(std::move(records));
    const auto viol = validate(ds);
    if (!viol.empty()) {
        std::ostringstream msg;
        msg << "dataset validation failed:";
        for (const auto& v : viol) msg << "\n  row " << v.row << ": " << v.rule;
        throw DatasetError(msg.str());
    }
    return ds;
}

std::size_t MetaDataset::n_published() const {
    std::size_t k = 0;
    for (const auto& r : studies_) k += r.published ? 1 : 0;
    return k;
}

std::size_t MetaDataset::n_unpublished() const { return studies_.size() - n_published(); }

std::vector<double> MetaDataset::published_yi() const {
    std::vector<double> v;
    for (const auto& r : studies_)
        if (r.published) v.push_back(r.yi.value());
    return v;
}

std::vector<double> MetaDataset::published_sei() const {
    std::vector<double> v;
    for (const auto& r : studies_)
        if (r.published) v.push_back(r.sei.value());
    return v;
}

std::vector<double> MetaDataset::published_n() const {
    std::vector<double> v;
    for (const auto& r : studies_)
        if (r.published) v.push_back(double(r.n));
    return v;
}

std::vector<double> MetaDataset::unpublished_n() const {
    std::vector<double> v;
    for (const auto& r : studies_)
        if (!r.published) v.push_back(double(r.n));
    return v;
}

std::vector<Violation> validate(const MetaDataset& ds) {
    std::vector<Violation> out;
    std::size_t row = 0;
    for (const auto& r : ds.studies()) {
        ++row;
        if (r.id.empty()) out.push_back({row, "study id must be nonempty"});
        if (r.n <= 0) out.push_back({row, "n must be a positive count"});
        if (counts_partial(r)) {
            out.push_back({row, "counts must be given all together or not at all"});
        } else if (counts_complete(r) && !counts_in_range(r)) {
            out.push_back({row, "events must lie in [0, total] with positive totals"});
        }
        if (r.published) {
            if (!r.yi || !r.sei)
                out.push_back({row, "published row needs yi and sei (direct or from counts)"});
            else if (!(*r.sei > 0.0))
                out.push_back({row, "sei must be positive"});
            if (r.yi && !std::isfinite(*r.yi)) out.push_back({row, "yi must be finite"});
        } else if (r.yi || r.sei || counts_complete(r) || counts_partial(r)) {
            out.push_back({row, "unpublished row must carry n only"});
        }
    }
    if (ds.n_published() < 2)
        out.push_back({0, "dataset needs at least 2 published studies"});
    return out;
}

MetaDataset parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DatasetError("empty input: missing header");
    if (trimmed(line) != kHeader)
        throw DatasetError("bad header: expected '" + std::string(kHeader) + "'");

    std::vector<StudyRecord> records;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trimmed(line).empty()) continue;
        ++row;
        const auto f = split_fields(line);
        if (f.size() != 9)
            throw DatasetError("row " + std::to_string(row) + ": expected 9 fields, got " +
                               std::to_string(f.size()));
        StudyRecord r;
        r.id = f[0];
        r.events_trt = parse_count(f[1], row, "events_trt");
        r.total_trt = parse_count(f[2], row, "total_trt");
        r.events_ctl = parse_count(f[3], row, "events_ctl");
        r.total_ctl = parse_count(f[4], row, "total_ctl");
        const auto n = parse_count(f[5], row, "n");
        if (!n) throw DatasetError("row " + std::to_string(row) + ": field 'n' is required");
        r.n = *n;
        r.yi = parse_real(f[6], row, "yi");
        r.sei = parse_real(f[7], row, "sei");
        if (f[8] == "1")
            r.published = true;
        else if (f[8] == "0")
            r.published = false;
        else
            throw DatasetError("row " + std::to_string(row) + ": field 'published' must be 0 or 1");
        records.push_back(std::move(r));
    }
    return MetaDataset::checked(std::move(records));
}

MetaDataset parse_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open file: " + path);
    return parse_csv(in);
}

std::string serialize_csv(const MetaDataset& ds) {
    std::ostringstream out;
    out << kHeader << '\n';
    for (const auto& r : ds.studies()) {
        out << r.id << ',';
        if (r.events_trt) out << *r.events_trt;
        out << ',';
        if (r.total_trt) out << *r.total_trt;
        out << ',';
        if (r.events_ctl) out << *r.events_ctl;
        out << ',';
        if (r.total_ctl) out << *r.total_ctl;
        out << ',' << r.n << ',';
        if (r.yi) out << fmt_real(*r.yi);
        out << ',';
        if (r.sei) out << fmt_real(*r.sei);
        out << ',' << (r.published ? '1' : '0') << '\n';
    }
    return out.str();
}

}  // namespace metabias
