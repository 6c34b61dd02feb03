#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfecsim/scenario.hpp"
#include "dfecsim/workloads.hpp"

namespace dfecsim {

struct RunRow {
  RunSpec spec;
  RunMetrics metrics;
};

// Executes one fully resolved scenario for one seed. Deterministic: the same
// (scenario, seed) pair always produces the same metrics.
RunMetrics run_one(const Scenario& scenario, std::uint64_t seed,
                   SeriesRecorder* series = nullptr);

// Expands and executes a sweep, up to `jobs` isolated runs in parallel.
// Results come back in expansion order regardless of scheduling.
std::vector<RunRow> run_sweep(const SweepSpec& sweep, int jobs = 1);

// Paper-figure presets.
std::vector<std::string> preset_names();
SweepSpec make_preset(const std::string& name, int seed_count = 20);

// CSV / JSON output. All CSV is RFC-4180: header row, UTF-8, quoted fields.
std::string csv_escape(const std::string& field);
std::vector<std::string> runs_csv_header();
std::vector<std::string> run_row_values(const RunRow& row);
void write_runs_csv(const std::string& path, const std::vector<RunRow>& rows);
void write_series_csv(const std::string& path, const SeriesRecorder& rec);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable rows_to_table(const std::vector<RunRow>& rows);
CsvTable read_csv(const std::string& text);
std::string write_csv(const CsvTable& table);

// Per-(cell, arm) summary with mean/median/CI plus arm-vs-baseline ratio
// columns. Throws std::invalid_argument on empty input or mismatched schemas.
CsvTable aggregate_table(const CsvTable& runs);

// Paired-arm ratio report, one JSON document per sweep.
std::string comparison_json(const std::vector<RunRow>& rows);

std::string format_double(double v);

}  // namespace dfecsim
