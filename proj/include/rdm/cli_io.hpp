#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rdm/experiments.hpp"

namespace rdm {

constexpr const char* kToolVersion = "rdm 0.1.0";
constexpr const char* kRecordsSchema = "records-v1";

// 64-bit FNV-1a
std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t h);

struct Manifest {
    std::string tool = kToolVersion;
    std::string plan_hash;
    std::uint64_t master_seed = 0;
    std::string schema;
    std::string timestamp;  // only in the separate manifest file, never in result files
};
// tolerances in effect, as "name=value" pairs
std::vector<std::pair<std::string, std::string>> tolerance_table();
// "# key: value" lines (no timestamp, so reruns stay byte-identical)
void write_manifest_header(std::ostream& os, const Manifest& m);
// same plus the timestamp, for the manifest file
void write_manifest_file(std::ostream& os, const Manifest& m);
std::string utc_timestamp();

// "assert metric op value"
struct PlanAssertion {
    std::string metric;
    std::string op;  // > >= < <= == !=
    double value = 0.0;
    bool holds(double x) const;
    std::string text() const;
};
PlanAssertion parse_assertion(const std::string& s);

struct PlanSection {
    std::string name;
    SweepPlan plan;
    double ratio_floor = 0.005;  // boundary-mode fraction metric
};

// INI-like: "key = value" lines, "[name]" sections, "#" comments, "assert ..." lines.
// Keys before the first section are defaults for every section. Without sections the
// whole file is one section named "main".
struct PlanFile {
    std::vector<PlanSection> sections;
    std::vector<PlanAssertion> asserts;
    // canonical text of every semantic field, sections and keys sorted; workers excluded
    std::string canonical() const;
    std::string hash() const { return hex64(fnv1a64(canonical())); }
};
PlanFile parse_plan(std::istream& is);
PlanFile parse_plan_text(const std::string& text);

struct AssertionOutcome {
    PlanAssertion assertion;
    bool known = false;  // metric exists
    double value = 0.0;
    bool passed = false;
};

struct PlanOutcome {
    std::vector<std::pair<std::string, ScalingResult>> results;
    std::map<std::string, double> metrics;
    std::vector<AssertionOutcome> assertions;
    bool all_passed() const;
};
// runs every section; workers > 0 overrides the plan/env setting
PlanOutcome run_plan(const PlanFile& plan, int workers = 0);
// metrics of one section, named "<metric>_<section>"
void section_metrics(const PlanSection& s, const ScalingResult& r, std::map<std::string, double>& out);

}  // namespace rdm
