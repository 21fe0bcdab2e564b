#include <stdexcept>
#include <string>

#include "doctest.h"
#include "report.hpp"

using namespace metabias::tool;

namespace {

ReportTable sample_report() {
    ReportTable t;
    t.rows.push_back({"tiotropium", "REML", std::nullopt, 0.7678, 0.6958, 0.8472, std::nullopt});
    t.rows.push_back({"tiotropium", "Egger", std::nullopt, std::nullopt, std::nullopt,
                      std::nullopt, 0.2252});
    t.rows.push_back({"edge", "MLE(SE#)", 8.0, 1e-9, -0.30000000000000004, 12345678.9, 1.0});
    return t;
}

SummaryTable sample_summary() {
    SummaryTable t;
    t.rows.push_back({"REML", -0.3029, 0.0331, 0.6465, 0.1278, 1000});
    t.rows.push_back({"MLE(N)", -0.2471, 0.0335, 0.9469, 0.1331, 990});
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("report");

TEST_CASE("tsv report round-trips byte for byte") {
    const auto t = sample_report();
    const std::string tsv = to_tsv(t);
    CHECK(tsv.substr(0, tsv.find('\n')) ==
          "description\tmethod\texpected_m\tor\tci_lower\tci_upper\tp_value");
    const auto back = report_from_tsv(tsv);
    REQUIRE(back.rows.size() == t.rows.size());
    CHECK(to_tsv(back) == tsv);
    // shortest round-trip printing preserves the doubles exactly
    CHECK(back.rows[2].or_value == t.rows[2].or_value);
    CHECK(back.rows[2].ci_lower == t.rows[2].ci_lower);
    CHECK(back.rows[0].p_value == t.rows[0].p_value);
    CHECK(!back.rows[1].or_value.has_value());
    CHECK(back.rows[1].p_value == t.rows[1].p_value);
}

TEST_CASE("json report round-trips and marks absent values as null") {
    const auto t = sample_report();
    const std::string json = to_json(t);
    CHECK(json.find("\"or\": null") != std::string::npos);
    const auto back = report_from_json(json);
    REQUIRE(back.rows.size() == t.rows.size());
    CHECK(to_json(back) == json);
    CHECK(back.rows[0].description == "tiotropium");
    CHECK(back.rows[2].method == "MLE(SE#)");
    CHECK(back.rows[2].expected_m == 8.0);
}

TEST_CASE("empty report is just the header") {
    const std::string tsv = to_tsv(ReportTable{});
    CHECK(report_from_tsv(tsv).rows.empty());
    CHECK(to_tsv(report_from_tsv(tsv)) == tsv);
    const std::string json = to_json(ReportTable{});
    CHECK(report_from_json(json).rows.empty());
    CHECK(to_json(report_from_json(json)) == json);
}

TEST_CASE("report parsers reject malformed input") {
    CHECK_THROWS_AS(report_from_tsv("wrong\theader\n"), std::invalid_argument);
    const std::string header = "description\tmethod\texpected_m\tor\tci_lower\tci_upper\tp_value\n";
    CHECK_THROWS_AS(report_from_tsv(header + "a\tb\tc\n"), std::invalid_argument);
    CHECK_THROWS_AS(report_from_tsv(header + "a\tb\t\tnot-a-number\t\t\t\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(report_from_json("{}"), std::invalid_argument);
    CHECK_THROWS_AS(report_from_json("not json"), std::exception);
}

TEST_CASE("text cells cannot smuggle separators") {
    ReportTable t;
    t.rows.push_back({"has\ttab", "REML", {}, {}, {}, {}, {}});
    CHECK_THROWS_AS(to_tsv(t), std::invalid_argument);
    t.rows[0] = {"ok", "has\nnewline", {}, {}, {}, {}, {}};
    CHECK_THROWS_AS(to_tsv(t), std::invalid_argument);
}

TEST_CASE("summary table round-trips in both formats") {
    const auto t = sample_summary();
    const std::string tsv = to_tsv(t);
    CHECK(tsv.substr(0, tsv.find('\n')) == "method\tave\tsd\tcp\tloci\tnoc");
    const auto back = summary_from_tsv(tsv);
    REQUIRE(back.rows.size() == 2);
    CHECK(to_tsv(back) == tsv);
    CHECK(back.rows[0].ave == t.rows[0].ave);
    CHECK(back.rows[1].noc == 990);

    const std::string json = to_json(t);
    const auto jback = summary_from_json(json);
    CHECK(to_json(jback) == json);
    CHECK(jback.rows[1].method == "MLE(N)");
    CHECK(jback.rows[1].cp == t.rows[1].cp);
}

TEST_CASE("summary parsers reject malformed input") {
    const std::string header = "method\tave\tsd\tcp\tloci\tnoc\n";
    CHECK_THROWS_AS(summary_from_tsv("bogus\n"), std::invalid_argument);
    CHECK_THROWS_AS(summary_from_tsv(header + "REML\t0\t0\t0\t0\n"), std::invalid_argument);
    CHECK_THROWS_AS(summary_from_tsv(header + "REML\t0\t0\t0\t0\t3.5\n"), std::invalid_argument);
    CHECK_THROWS_AS(summary_from_json("4"), std::invalid_argument);
}

TEST_SUITE_END();
