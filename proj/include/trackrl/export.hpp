#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "trackrl/river.hpp"
#include "trackrl/synergy.hpp"

namespace trackrl {

inline constexpr const char* kEvalSchema = "#schema=eval.v1";
inline constexpr const char* kCurvesSchema = "#schema=curves.v1";
inline constexpr const char* kViolinSchema = "#schema=violin.v1";
inline constexpr const char* kTraceSchema = "traces.v1";

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

// Linear-interpolation quantile (q in [0, 1]) of unsorted values.
double quantile(std::vector<double> values, double q);
Summary summarize(const std::vector<double>& values);

struct CsvTable {
  std::string schema;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

// Reads a CSV whose first line is "#schema=<expected>"; other versions are
// rejected.
CsvTable read_csv(const std::string& path, const std::string& expected_schema);

// Per-episode evaluation output plus summary statistics.
void write_eval_csv(std::ostream& out, const EvalResult& result);
void write_eval_stats(std::ostream& out, const EvalResult& result);
// One JSON line per episode: schema, env, layout, reward, trace.
void write_traces_jsonl(std::ostream& out, const std::string& env, const EvalResult& result);

// Aligns `column` of every metrics file by step: step, one column per run,
// mean, stderr (sample std / sqrt(n)).
void export_curves(std::ostream& out, const std::vector<std::string>& labels,
                   const std::vector<std::string>& metrics_paths, const std::string& column);

// Distribution statistics for each eval file.
void export_violin(std::ostream& out, const std::vector<std::string>& labels,
                   const std::vector<std::string>& eval_paths);

// Overhead SVG of river traces: banks, obstacles, one polyline per episode
// and a star every `marker_every` steps.
void export_trajectory_svg(std::ostream& out, const river::RiverConfig& map, const std::string& traces_path,
                           int marker_every = 50);

}  // namespace trackrl
