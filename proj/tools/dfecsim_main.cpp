#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dfecsim/runner.hpp"

namespace fs = std::filesystem;
using namespace dfecsim;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  }
  return out;
}

int run_command(const std::string& scenario_path, const std::string& preset,
                const std::string& out_dir, int jobs, int seed_count,
                const std::vector<std::uint64_t>& seeds) {
  SweepSpec sweep;
  try {
    if (!preset.empty()) {
      sweep = make_preset(preset, seed_count);
    } else if (!scenario_path.empty()) {
      std::string text = slurp(scenario_path);
      // A file may hold either a bare scenario or a full sweep.
      try {
        sweep = SweepSpec::from_json(text);
      } catch (const std::exception&) {
        sweep.base = Scenario::from_json(text);
        sweep.arms = {{protocol_name(sweep.base.protocol), sweep.base.protocol, {}, {}, {}}};
      }
    } else {
      std::cerr << "error: either --preset or --scenario is required\n";
      return 1;
    }
    if (!seeds.empty()) sweep.base.seeds = seeds;
    sweep.base.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  try {
    fs::create_directories(out_dir);
    std::vector<RunRow> rows = run_sweep(sweep, jobs);

    bool any_failed = false;
    for (const RunRow& r : rows) {
      if (r.metrics.aborted || !r.metrics.byte_integrity_ok) any_failed = true;
    }

    write_runs_csv(out_dir + "/runs.csv", rows);
    {
      std::ofstream f(out_dir + "/summary.csv", std::ios::binary);
      f << write_csv(aggregate_table(rows_to_table(rows)));
    }
    {
      std::ofstream f(out_dir + "/comparison.json", std::ios::binary);
      f << comparison_json(rows);
    }
    {
      std::ofstream f(out_dir + "/sweep.json", std::ios::binary);
      f << sweep.to_json();
    }
    if (sweep.base.workload.kind == WorkloadSpec::Kind::Web) {
      std::ofstream f(out_dir + "/web_objects.json", std::ios::binary);
      f << "{\"profile\":\"" << sweep.base.workload.web.name << "\",\"sizes\":[";
      auto sizes = sweep.base.workload.web.object_sizes();
      for (std::size_t i = 0; i < sizes.size(); ++i) f << (i ? "," : "") << sizes[i];
      f << "]}\n";
    }
    if (sweep.base.record_series) {
      for (const RunRow& r : rows) {
        SeriesRecorder rec(true);
        run_one(r.spec.scenario, r.spec.seed, &rec);
        std::string fname = out_dir + "/series_" + sanitize(r.spec.arm) + "_" +
                            sanitize(r.spec.cell) + "_s" + std::to_string(r.spec.seed) + ".csv";
        write_series_csv(fname, rec);
      }
    }
    std::cout << "wrote " << rows.size() << " runs to " << out_dir << "\n";
    if (any_failed) {
      std::cerr << "run failure: at least one run aborted or failed integrity\n";
      return 2;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "run failure: " << e.what() << "\n";
    return 2;
  }
}

int aggregate_command(const std::vector<std::string>& inputs, const std::string& out_path) {
  try {
    CsvTable merged;
    for (const std::string& path : inputs) {
      CsvTable t = read_csv(slurp(path));
      if (merged.header.empty()) {
        merged = t;
      } else {
        if (t.header != merged.header) {
          std::cerr << "config error: heterogeneous schemas across inputs\n";
          return 1;
        }
        merged.rows.insert(merged.rows.end(), t.rows.begin(), t.rows.end());
      }
    }
    if (merged.rows.empty()) {
      std::ofstream f(out_path, std::ios::binary);
      f << "# empty: no input rows\r\n";
      std::cerr << "config error: no rows to aggregate\n";
      return 1;
    }
    CsvTable summary = aggregate_table(merged);
    std::ofstream f(out_path, std::ios::binary);
    f << write_csv(summary);
    std::cout << "wrote " << summary.rows.size() << " summary rows to " << out_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dfecsim: deterministic transport/FEC experiment runner"};
  app.require_subcommand(0, 1);

  std::string scenario_path;
  std::string preset;
  std::string out_dir = "out";
  int jobs = 1;
  int seed_count = 20;
  std::vector<std::uint64_t> seeds;
  bool list_presets = false;

  app.add_option("--scenario", scenario_path, "scenario or sweep JSON file");
  app.add_option("--preset", preset, "named experiment preset");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--jobs", jobs, "parallel independent runs");
  app.add_option("--seed-count", seed_count, "seeds per cell for presets");
  app.add_option("--seeds", seeds, "explicit seed list")->delimiter(',');
  std::uint64_t single_seed = 0;
  app.add_option("--seed", single_seed, "single seed (shorthand for --seeds)");
  app.add_flag("--list-presets", list_presets, "print preset names and exit");

  CLI::App* agg = app.add_subcommand("aggregate", "summarize existing runs.csv files");
  std::vector<std::string> agg_inputs;
  std::string agg_out = "summary.csv";
  agg->add_option("inputs", agg_inputs, "runs.csv files")->required();
  agg->add_option("--out", agg_out, "summary output path");

  CLI11_PARSE(app, argc, argv);

  if (list_presets) {
    for (const std::string& name : preset_names()) std::cout << name << "\n";
    return 0;
  }
  if (agg->parsed()) {
    return aggregate_command(agg_inputs, agg_out);
  }
  if (single_seed != 0 && seeds.empty()) seeds = {single_seed};
  return run_command(scenario_path, preset, out_dir, jobs, seed_count, seeds);
}
