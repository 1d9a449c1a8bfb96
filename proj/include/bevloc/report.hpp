#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bevloc/format.hpp"
#include "bevloc/metrics.hpp"
#include "bevloc/pose2d.hpp"

namespace bevloc {

/** @brief One detected revisit pair with its estimated relative pose. */
struct LoopDetection {
  std::string a, b;
  double descriptor_distance = 0.0;
  Pose2D est_pose;  // maps frame-a coordinates to frame-b coordinates
  double cost = 0.0;
  bool accepted = false;
  bool has_world = false;
  Pose2D a_world, b_world;
};

enum class ReportKind { kLocalization, kLoop };

namespace detail {

constexpr const char* kLocalizationMarker = "# bevloc localization report";
constexpr const char* kLoopMarker = "# bevloc loop report";
constexpr const char* kMetricNotes =
    "# metric conventions: aoe/ape average the lowest-percentile per-query errors after an "
    "ascending sort, over queries whose top-1 frame lies within the distance threshold of "
    "the true position; rotation error is the wrapped absolute yaw difference; translation "
    "error is the distance between the query origins placed by the estimated and true "
    "relative poses";

constexpr const char* kLocalizationHeader =
    "query_id,ranking,match_id,gt_nearest_id,gt_nearest_dist_m,est_x,est_y,est_yaw_deg,cost,"
    "accepted,has_gt,gt_x,gt_y,gt_yaw_deg,has_world,query_wx,query_wy,query_wyaw_deg,"
    "match_wx,match_wy,match_wyaw_deg";

constexpr const char* kLoopHeader =
    "a,b,descriptor_distance,est_x,est_y,est_yaw_deg,cost,accepted,has_world,a_wx,a_wy,"
    "a_wyaw_deg,b_wx,b_wy,b_wyaw_deg";

inline std::string join_ranking(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check_csv_field(ids[i], "report ranking id");
    if (ids[i].find('|') != std::string::npos)
      throw std::invalid_argument("report ranking id may not contain '|': " + ids[i]);
    if (i) out += '|';
    out += ids[i];
  }
  return out;
}

inline std::vector<std::string> split_ranking(const std::string& s) {
  std::vector<std::string> ids;
  if (s.empty()) return ids;
  std::size_t start = 0;
  while (true) {
    const std::size_t bar = s.find('|', start);
    if (bar == std::string::npos) {
      ids.push_back(s.substr(start));
      return ids;
    }
    ids.push_back(s.substr(start, bar - start));
    start = bar + 1;
  }
}

inline bool parse_flag(const std::string& s, const std::string& context) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw std::runtime_error(context + ": expected 0 or 1, got '" + s + "'");
}

// Reads a report file, returning the data rows after validating the header.
inline std::vector<std::string> read_report_rows(const std::filesystem::path& path,
                                                 const char* marker, const char* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("report: cannot open " + path.string());
  std::string line;
  bool marker_seen = false, header_seen = false;
  std::vector<std::string> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line == marker) marker_seen = true;
      continue;
    }
    if (!header_seen) {
      if (line != header)
        throw std::runtime_error("report: " + path.string() + ":" +
                                 std::to_string(line_no) + ": unexpected column header");
      header_seen = true;
      continue;
    }
    rows.push_back(line);
  }
  if (!marker_seen)
    throw std::runtime_error("report: " + path.string() + " lacks the marker line " +
                             std::string(marker));
  if (!header_seen)
    throw std::runtime_error("report: " + path.string() + " lacks a column header");
  return rows;
}

}  // namespace detail

inline ReportKind report_kind(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("report_kind: cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == detail::kLocalizationMarker) return ReportKind::kLocalization;
    if (line == detail::kLoopMarker) return ReportKind::kLoop;
    if (!line.empty() && line[0] != '#') break;
  }
  throw std::runtime_error("report_kind: " + path.string() + " has no report marker line");
}

//============================================================================
// Localization report CSV
//============================================================================

inline void write_localization_report(const std::filesystem::path& path,
                                      const std::vector<EvalRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("write_localization_report: cannot open " + path.string());
  out << detail::kLocalizationMarker << "\n" << detail::kMetricNotes << "\n";
  out << detail::kLocalizationHeader << "\n";
  for (const auto& r : records) {
    check_csv_field(r.query_id, "report query id");
    check_csv_field(r.match_id, "report match id");
    check_csv_field(r.gt_nearest_id, "report nearest id");
    out << r.query_id << ',' << detail::join_ranking(r.ranking) << ',' << r.match_id << ','
        << r.gt_nearest_id << ',' << format_double(r.gt_nearest_dist_m) << ','
        << format_double(r.est_pose.x_m) << ',' << format_double(r.est_pose.y_m) << ','
        << format_double(r.est_pose.yaw_deg) << ',' << format_double(r.cost) << ','
        << (r.accepted ? 1 : 0) << ',' << (r.has_gt ? 1 : 0) << ','
        << format_double(r.gt_pose.x_m) << ',' << format_double(r.gt_pose.y_m) << ','
        << format_double(r.gt_pose.yaw_deg) << ',' << (r.has_world ? 1 : 0) << ','
        << format_double(r.query_world.x_m) << ',' << format_double(r.query_world.y_m) << ','
        << format_double(r.query_world.yaw_deg) << ',' << format_double(r.match_world.x_m)
        << ',' << format_double(r.match_world.y_m) << ','
        << format_double(r.match_world.yaw_deg) << "\n";
  }
  if (!out) throw std::runtime_error("write_localization_report: write failed");
}

inline std::vector<EvalRecord> read_localization_report(const std::filesystem::path& path) {
  const auto rows = detail::read_report_rows(path, detail::kLocalizationMarker,
                                             detail::kLocalizationHeader);
  std::vector<EvalRecord> records;
  records.reserve(rows.size());
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto f = split_csv(rows[n]);
    const std::string ctx = path.string() + " row " + std::to_string(n + 1);
    if (f.size() != 21) throw std::runtime_error(ctx + ": expected 21 fields");
    EvalRecord r;
    r.query_id = f[0];
    r.ranking = detail::split_ranking(f[1]);
    r.match_id = f[2];
    r.gt_nearest_id = f[3];
    r.gt_nearest_dist_m = parse_double(f[4], ctx);
    r.est_pose = Pose2D(parse_double(f[5], ctx), parse_double(f[6], ctx),
                        parse_double(f[7], ctx));
    r.cost = parse_double(f[8], ctx);
    r.accepted = detail::parse_flag(f[9], ctx);
    r.has_gt = detail::parse_flag(f[10], ctx);
    r.gt_pose = Pose2D(parse_double(f[11], ctx), parse_double(f[12], ctx),
                       parse_double(f[13], ctx));
    r.has_world = detail::parse_flag(f[14], ctx);
    r.query_world = Pose2D(parse_double(f[15], ctx), parse_double(f[16], ctx),
                           parse_double(f[17], ctx));
    r.match_world = Pose2D(parse_double(f[18], ctx), parse_double(f[19], ctx),
                           parse_double(f[20], ctx));
    records.push_back(std::move(r));
  }
  return records;
}

//============================================================================
// Loop report CSV
//============================================================================

inline void write_loop_report(const std::filesystem::path& path,
                              const std::vector<LoopDetection>& detections) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_loop_report: cannot open " + path.string());
  out << detail::kLoopMarker << "\n" << detail::kLoopHeader << "\n";
  for (const auto& d : detections) {
    check_csv_field(d.a, "loop report frame id");
    check_csv_field(d.b, "loop report frame id");
    out << d.a << ',' << d.b << ',' << format_double(d.descriptor_distance) << ','
        << format_double(d.est_pose.x_m) << ',' << format_double(d.est_pose.y_m) << ','
        << format_double(d.est_pose.yaw_deg) << ',' << format_double(d.cost) << ','
        << (d.accepted ? 1 : 0) << ',' << (d.has_world ? 1 : 0) << ','
        << format_double(d.a_world.x_m) << ',' << format_double(d.a_world.y_m) << ','
        << format_double(d.a_world.yaw_deg) << ',' << format_double(d.b_world.x_m) << ','
        << format_double(d.b_world.y_m) << ',' << format_double(d.b_world.yaw_deg) << "\n";
  }
  if (!out) throw std::runtime_error("write_loop_report: write failed");
}

inline std::vector<LoopDetection> read_loop_report(const std::filesystem::path& path) {
  const auto rows = detail::read_report_rows(path, detail::kLoopMarker, detail::kLoopHeader);
  std::vector<LoopDetection> detections;
  detections.reserve(rows.size());
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto f = split_csv(rows[n]);
    const std::string ctx = path.string() + " row " + std::to_string(n + 1);
    if (f.size() != 15) throw std::runtime_error(ctx + ": expected 15 fields");
    LoopDetection d;
    d.a = f[0];
    d.b = f[1];
    d.descriptor_distance = parse_double(f[2], ctx);
    d.est_pose = Pose2D(parse_double(f[3], ctx), parse_double(f[4], ctx),
                        parse_double(f[5], ctx));
    d.cost = parse_double(f[6], ctx);
    d.accepted = detail::parse_flag(f[7], ctx);
    d.has_world = detail::parse_flag(f[8], ctx);
    d.a_world = Pose2D(parse_double(f[9], ctx), parse_double(f[10], ctx),
                       parse_double(f[11], ctx));
    d.b_world = Pose2D(parse_double(f[12], ctx), parse_double(f[13], ctx),
                       parse_double(f[14], ctx));
    detections.push_back(std::move(d));
  }
  return detections;
}

inline void write_metrics_json(const std::filesystem::path& path,
                               const nlohmann::ordered_json& metrics) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_metrics_json: cannot open " + path.string());
  out << metrics.dump(2) << "\n";
  if (!out) throw std::runtime_error("write_metrics_json: write failed");
}

//============================================================================
// SVG trajectory plots
//============================================================================

namespace detail {

struct SvgMapper {
  double min_x = 0, min_y = 0, scale = 1;
  double size = 800.0, pad = 40.0;

  // world x grows to the right, world y grows upward on the page
  double px(double x) const { return pad + (x - min_x) * scale; }
  double py(double y) const { return size - pad - (y - min_y) * scale; }

  static SvgMapper fit(const std::vector<Vec2>& points) {
    SvgMapper m;
    if (points.empty()) return m;
    double min_x = points[0].x(), max_x = points[0].x();
    double min_y = points[0].y(), max_y = points[0].y();
    for (const auto& p : points) {
      min_x = std::min(min_x, p.x());
      max_x = std::max(max_x, p.x());
      min_y = std::min(min_y, p.y());
      max_y = std::max(max_y, p.y());
    }
    const double span = std::max({max_x - min_x, max_y - min_y, 1e-9});
    m.min_x = min_x;
    m.min_y = min_y;
    m.scale = (m.size - 2.0 * m.pad) / span;
    return m;
  }
};

inline void svg_open(std::ostringstream& s, double size) {
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
    << "\" viewBox=\"0 0 " << size << " " << size << "\">\n";
  s << "<rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
}

inline void svg_circle(std::ostringstream& s, double cx, double cy, double r,
                       const char* fill) {
  s << "<circle cx=\"" << format_double(cx) << "\" cy=\"" << format_double(cy) << "\" r=\""
    << r << "\" fill=\"" << fill << "\"/>\n";
}

inline void svg_line(std::ostringstream& s, double x1, double y1, double x2, double y2,
                     const char* stroke, double width) {
  s << "<line x1=\"" << format_double(x1) << "\" y1=\"" << format_double(y1) << "\" x2=\""
    << format_double(x2) << "\" y2=\"" << format_double(y2) << "\" stroke=\"" << stroke
    << "\" stroke-width=\"" << width << "\"/>\n";
}

inline void svg_text(std::ostringstream& s, double x, double y, const std::string& text) {
  s << "<text x=\"" << x << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\"14\">"
    << text << "</text>\n";
}

}  // namespace detail

/**
 * @brief Map frames in gray, query positions colored by acceptance, a line to
 * the matched frame, and a cross at the pose estimate's placement of the
 * query. Requires world poses in the records.
 */
inline std::string render_localization_svg(const std::vector<EvalRecord>& records) {
  std::vector<Vec2> pts;
  for (const auto& r : records) {
    if (!r.has_world) continue;
    pts.push_back(r.query_world.origin_in_parent());
    pts.push_back(r.match_world.origin_in_parent());
  }
  const auto m = detail::SvgMapper::fit(pts);
  std::ostringstream s;
  detail::svg_open(s, m.size);
  for (const auto& r : records) {
    if (!r.has_world) continue;
    const Vec2 q = r.query_world.origin_in_parent();
    const Vec2 t = r.match_world.origin_in_parent();
    detail::svg_line(s, m.px(q.x()), m.py(q.y()), m.px(t.x()), m.py(t.y()), "#bbbbbb", 1.0);
  }
  for (const auto& r : records) {
    if (!r.has_world) continue;
    const Vec2 t = r.match_world.origin_in_parent();
    detail::svg_circle(s, m.px(t.x()), m.py(t.y()), 3.0, "#888888");
  }
  for (const auto& r : records) {
    if (!r.has_world) continue;
    const Vec2 q = r.query_world.origin_in_parent();
    // where the estimated relative pose places the query in the world
    const Vec2 est = r.match_world.apply(r.est_pose.origin_in_parent());
    detail::svg_line(s, m.px(q.x()), m.py(q.y()), m.px(est.x()), m.py(est.y()), "#3366cc",
                     1.0);
    detail::svg_circle(s, m.px(est.x()), m.py(est.y()), 2.0, "#3366cc");
    detail::svg_circle(s, m.px(q.x()), m.py(q.y()), 3.0, r.accepted ? "#2a9d3a" : "#cc3333");
  }
  detail::svg_text(s, 12, 20,
                   "localization: gray = map frames, green/red = accepted/rejected queries, "
                   "blue = estimated placement");
  s << "</svg>\n";
  return s.str();
}

/** @brief Frame positions in gray plus one edge per detected loop pair. */
inline std::string render_loop_svg(const std::vector<LoopDetection>& detections) {
  std::vector<Vec2> pts;
  for (const auto& d : detections) {
    if (!d.has_world) continue;
    pts.push_back(d.a_world.origin_in_parent());
    pts.push_back(d.b_world.origin_in_parent());
  }
  const auto m = detail::SvgMapper::fit(pts);
  std::ostringstream s;
  detail::svg_open(s, m.size);
  for (const auto& d : detections) {
    if (!d.has_world) continue;
    const Vec2 a = d.a_world.origin_in_parent();
    const Vec2 b = d.b_world.origin_in_parent();
    detail::svg_line(s, m.px(a.x()), m.py(a.y()), m.px(b.x()), m.py(b.y()),
                     d.accepted ? "#2a9d3a" : "#e08a00", 1.5);
  }
  for (const auto& d : detections) {
    if (!d.has_world) continue;
    const Vec2 a = d.a_world.origin_in_parent();
    const Vec2 b = d.b_world.origin_in_parent();
    detail::svg_circle(s, m.px(a.x()), m.py(a.y()), 3.0, "#888888");
    detail::svg_circle(s, m.px(b.x()), m.py(b.y()), 3.0, "#888888");
  }
  detail::svg_text(s, 12, 20,
                   "loop closures: green = accepted pose, orange = rejected");
  s << "</svg>\n";
  return s.str();
}

/** @brief Renders the right figure for whichever report kind the file holds. */
inline void plot_report(const std::filesystem::path& report_path,
                        const std::filesystem::path& out_svg) {
  std::string svg;
  if (report_kind(report_path) == ReportKind::kLocalization)
    svg = render_localization_svg(read_localization_report(report_path));
  else
    svg = render_loop_svg(read_loop_report(report_path));
  std::ofstream out(out_svg, std::ios::binary);
  if (!out) throw std::runtime_error("plot_report: cannot open " + out_svg.string());
  out << svg;
  if (!out) throw std::runtime_error("plot_report: write failed");
}

}  // namespace bevloc
