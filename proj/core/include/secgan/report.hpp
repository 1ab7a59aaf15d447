#pragma once

// Evaluation reports on disk (tab-separated table + JSON summary) and SVG
// figures drawn from them.

#include <filesystem>
#include <string>
#include <vector>

#include "secgan/evaluation.hpp"

namespace secgan {

struct ReportRow {
    std::string method;
    double lambda_sc = 0;
    std::string attribute;  // "mean" for the summary row
    double accuracy = 0;
    double ssfid = 0;
    double is_mean = 0;
    double is_std = 0;
};

struct EvaluationReport {
    std::string method;
    double lambda_sc = 0;
    std::string config_hash;
    uint64_t seed = 0;
    std::string embedder;
    EvaluationResult result;
};

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {"method", "lambda_sc", "attribute", "accuracy",
                                                  "ssfid",  "is_mean",   "is_std"};
    return cols;
}

std::vector<ReportRow> report_rows(const EvaluationReport& report);

/// Writes `report.tsv` and `summary.json` under `dir`.
void write_report(const EvaluationReport& report, const std::filesystem::path& dir);

/// Parses a report table; a missing column is an error naming it.
std::vector<ReportRow> read_report(const std::filesystem::path& tsv);

/// Grouped per-attribute accuracy bars, one group per attribute, one bar per report.
void plot_accuracy_bars(const std::vector<std::vector<ReportRow>>& reports, const std::filesystem::path& svg);

/// Mean accuracy against lambda_sc, one point per report, sorted by lambda_sc.
void plot_lambda_curve(const std::vector<std::vector<ReportRow>>& reports, const std::filesystem::path& svg);

}  // namespace secgan
