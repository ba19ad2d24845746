#include "trackrl/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace trackrl {
namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of no values");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("summary of no values");
  Summary s;
  s.n = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  return s;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::invalid_argument("no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::string& path, const std::string& expected_schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable table;
  if (!std::getline(in, table.schema) || table.schema != expected_schema) {
    throw SchemaError(path + ": expected " + expected_schema + ", found '" + table.schema + "'");
  }
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": missing header");
  table.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto row = split(line);
    if (row.size() != table.header.size()) throw SchemaError(path + ": ragged row");
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_eval_csv(std::ostream& out, const EvalResult& result) {
  out << kEvalSchema << "\nepisode,reward,length\n";
  for (std::size_t i = 0; i < result.rewards.size(); ++i) {
    out << i << ',' << fmt(result.rewards[i]) << ',' << result.lengths[i] << '\n';
  }
}

void write_eval_stats(std::ostream& out, const EvalResult& result) {
  std::vector<double> lengths(result.lengths.begin(), result.lengths.end());
  out << "metric,n,mean,std,min,q1,median,q3,max\n";
  for (const auto& [name, values] : {std::pair{"reward", result.rewards}, std::pair{"length", lengths}}) {
    const Summary s = summarize(values);
    out << name << ',' << s.n << ',' << fmt(s.mean) << ',' << fmt(s.stddev) << ',' << fmt(s.min) << ','
        << fmt(s.q1) << ',' << fmt(s.median) << ',' << fmt(s.q3) << ',' << fmt(s.max) << '\n';
  }
}

void write_traces_jsonl(std::ostream& out, const std::string& env, const EvalResult& result) {
  for (std::size_t i = 0; i < result.episodes.size(); ++i) {
    const EpisodeRecord& e = result.episodes[i];
    nlohmann::json line = {{"schema", kTraceSchema},
                           {"env", env},
                           {"episode", i},
                           {"layout", e.layout},
                           {"reward", e.trajectory.episodic_reward()},
                           {"trace", e.trace}};
    out << line.dump() << '\n';
  }
}

void export_curves(std::ostream& out, const std::vector<std::string>& labels,
                   const std::vector<std::string>& metrics_paths, const std::string& column) {
  if (metrics_paths.empty()) throw std::invalid_argument("no metrics files to aggregate");
  std::map<long, std::vector<double>> by_step;
  for (std::size_t r = 0; r < metrics_paths.size(); ++r) {
    const CsvTable t = read_csv(metrics_paths[r], kMetricsSchema);
    const std::size_t step_col = t.column("step");
    const std::size_t value_col = t.column(column);
    for (const auto& row : t.rows) {
      auto& slot = by_step[std::stol(row[step_col])];
      slot.resize(metrics_paths.size(), std::nan(""));
      if (!row[value_col].empty()) slot[r] = std::stod(row[value_col]);
    }
  }
  out << kCurvesSchema << "\nstep";
  for (const auto& l : labels) out << ',' << l;
  out << ",mean,stderr\n";
  for (auto& [step, values] : by_step) {
    values.resize(metrics_paths.size(), std::nan(""));
    std::vector<double> present;
    out << step;
    for (double v : values) {
      out << ',' << fmt(v);
      if (!std::isnan(v)) present.push_back(v);
    }
    if (present.empty()) {
      out << ",,\n";
      continue;
    }
    const Summary s = summarize(present);
    out << ',' << fmt(s.mean) << ',' << fmt(s.stddev / std::sqrt(static_cast<double>(s.n))) << '\n';
  }
}

void export_violin(std::ostream& out, const std::vector<std::string>& labels,
                   const std::vector<std::string>& eval_paths) {
  if (eval_paths.empty()) throw std::invalid_argument("no eval files to summarize");
  out << kViolinSchema << "\nlabel,n,mean,std,min,q1,median,q3,max\n";
  for (std::size_t i = 0; i < eval_paths.size(); ++i) {
    const CsvTable t = read_csv(eval_paths[i], kEvalSchema);
    const std::size_t col = t.column("reward");
    std::vector<double> rewards;
    for (const auto& row : t.rows) rewards.push_back(std::stod(row[col]));
    const Summary s = summarize(rewards);
    out << labels[i] << ',' << s.n << ',' << fmt(s.mean) << ',' << fmt(s.stddev) << ',' << fmt(s.min) << ','
        << fmt(s.q1) << ',' << fmt(s.median) << ',' << fmt(s.q3) << ',' << fmt(s.max) << '\n';
  }
}

void export_trajectory_svg(std::ostream& out, const river::RiverConfig& map, const std::string& traces_path,
                           int marker_every) {
  std::ifstream in(traces_path);
  if (!in) throw std::runtime_error("cannot open " + traces_path);
  std::vector<std::vector<Eigen::Vector2d>> paths;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.value("schema", "") != kTraceSchema) throw SchemaError(traces_path + ": unknown trace schema");
    if (j.at("env") != "river") throw std::invalid_argument("trajectory plots need river traces");
    std::vector<Eigen::Vector2d> path;
    for (const auto& p : j.at("trace")) path.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    paths.push_back(std::move(path));
  }
  if (paths.empty()) throw std::invalid_argument(traces_path + " has no episodes");

  const river::RiverSpline spline(map.control_points, map.half_widths, map.segments, map.samples_per_span);
  const int n = spline.segment_count();
  std::vector<Eigen::Vector2d> left, right;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d c = spline.vertex(i).head<2>();
    const Eigen::Vector2d t = spline.tangent(i).head<2>().normalized();
    const Eigen::Vector2d normal(-t.y(), t.x());
    const double w = spline.half_width(i, 0.0);
    left.push_back(c + w * normal);
    right.push_back(c - w * normal);
  }
  Eigen::Vector2d lo = left.front(), hi = left.front();
  for (const auto* pts : {&left, &right}) {
    for (const auto& p : *pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  for (const auto& path : paths) {
    for (const auto& p : path) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  lo.array() -= 5.0;
  hi.array() += 5.0;
  constexpr double kScale = 6.0;
  auto px = [&](const Eigen::Vector2d& p) {
    return fmt((p.x() - lo.x()) * kScale) + "," + fmt((hi.y() - p.y()) * kScale);
  };
  auto polyline = [&](const std::vector<Eigen::Vector2d>& pts, bool closed) {
    std::string s;
    for (const auto& p : pts) s += px(p) + " ";
    if (closed) s += px(pts.front());
    return s;
  };
  static const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt((hi.x() - lo.x()) * kScale) << "\" height=\""
      << fmt((hi.y() - lo.y()) * kScale) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#e8f0e0\"/>\n";
  // Outer bank filled with water, inner bank cut back out.
  auto area = [](const std::vector<Eigen::Vector2d>& pts) {
    double a = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& p = pts[i];
      const auto& q = pts[(i + 1) % pts.size()];
      a += p.x() * q.y() - q.x() * p.y();
    }
    return std::abs(a);
  };
  const bool left_outer = area(left) > area(right);
  out << "<polygon points=\"" << polyline(left_outer ? left : right, false)
      << "\" fill=\"#a6cbe8\" stroke=\"#4a7fa8\"/>\n";
  out << "<polygon points=\"" << polyline(left_outer ? right : left, false)
      << "\" fill=\"#e8f0e0\" stroke=\"#4a7fa8\"/>\n";
  for (const auto& box : map.obstacles) {
    const Eigen::Vector2d a = box.min.head<2>();
    const Eigen::Vector2d b(box.min.x(), box.max.y());
    const Eigen::Vector2d c = box.max.head<2>();
    const Eigen::Vector2d d(box.max.x(), box.min.y());
    out << "<polygon points=\"" << polyline({a, b, c, d}, true) << "\" fill=\"#7f7f7f\" opacity=\"0.6\"/>\n";
  }
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    out << "<polyline points=\"" << polyline(paths[k], false) << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    for (std::size_t i = 0; i < paths[k].size(); i += static_cast<std::size_t>(marker_every)) {
      const double cx = (paths[k][i].x() - lo.x()) * kScale;
      const double cy = (hi.y() - paths[k][i].y()) * kScale;
      std::string star;
      for (int v = 0; v < 10; ++v) {
        const double r = v % 2 == 0 ? 6.0 : 2.5;
        const double a = -M_PI / 2 + v * M_PI / 5;
        star += fmt(cx + r * std::cos(a)) + "," + fmt(cy + r * std::sin(a)) + " ";
      }
      out << "<polygon class=\"star\" points=\"" << star << "\" fill=\"" << color << "\"/>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace trackrl
