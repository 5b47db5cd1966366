#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "perclab/runner.hpp"

namespace perclab {

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 80, kRight = 30, kTop = 40, kBottom = 60;

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Csv read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PlotError("cannot read CSV '" + path + "'");
  Csv csv;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      csv.header = split_line(line);
      first = false;
    } else {
      csv.rows.push_back(split_line(line));
    }
  }
  return csv;
}

int column(const Csv& csv, const std::string& name) {
  auto it = std::find(csv.header.begin(), csv.header.end(), name);
  if (it == csv.header.end()) throw PlotError("CSV has no column '" + name + "'");
  return static_cast<int>(it - csv.header.begin());
}

bool to_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(v);
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct Axis {
  double lo = 0, hi = 1;  // in transformed coordinates
  bool log = false;
  double pix_lo = 0, pix_hi = 1;

  double t(double v) const { return log ? std::log10(v) : v; }
  double pix(double v) const { return pix_lo + (t(v) - lo) / (hi - lo) * (pix_hi - pix_lo); }
  double pix_t(double tv) const { return pix_lo + (tv - lo) / (hi - lo) * (pix_hi - pix_lo); }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (double e = std::floor(lo); e <= std::ceil(hi); e += 1.0) {
        if (e >= lo - 1e-9 && e <= hi + 1e-9) out.push_back(std::pow(10.0, e));
      }
      return out;
    }
    const double span = hi - lo;
    const double raw = span / 5;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) out.push_back(v);
    return out;
  }
};

void fit_range(Axis& a, std::vector<double> vals) {
  std::vector<double> tv;
  for (double v : vals) {
    if (a.log && !(v > 0)) continue;
    tv.push_back(a.t(v));
  }
  if (tv.empty()) {
    a.lo = a.log ? 0 : 0;
    a.hi = 1;
    return;
  }
  a.lo = *std::min_element(tv.begin(), tv.end());
  a.hi = *std::max_element(tv.begin(), tv.end());
  if (a.hi - a.lo < 1e-12) {
    const double pad = a.log ? 0.5 : std::max(std::fabs(a.lo) * 0.1, 0.5);
    a.lo -= pad;
    a.hi += pad;
  } else {
    const double pad = 0.05 * (a.hi - a.lo);
    a.lo -= pad;
    a.hi += pad;
  }
}

}  // namespace

PlotSpec default_plot_spec(const ExperimentConfig& cfg) {
  const double d = cfg.model.dimension;
  PlotSpec s;
  s.error_column = "std_error";
  s.y_column = "value";
  s.title = to_string(cfg.kind);
  switch (cfg.kind) {
    case ExperimentKind::Plateau:
      s.x_column = "jbracket";
      s.reference_slope = -(d - 2);
      s.horizontal_guide = std::pow(static_cast<double>(cfg.model.volume()), -2.0 / 3.0);
      break;
    case ExperimentKind::TwoPoint:
      s.x_column = "jbracket";
      s.reference_slope = -(d - 2);
      break;
    case ExperimentKind::OneArm:
      s.x_column = "rho";
      s.reference_slope = cfg.metric == ArmMetric::Extrinsic ? -2.0 : -1.0;
      break;
    case ExperimentKind::Pioneers: s.x_column = "n"; break;
    case ExperimentKind::Slab: s.x_column = "r"; break;
    case ExperimentKind::Susceptibility:
      s.x_column = "p";
      s.log_log = false;
      break;
    case ExperimentKind::MassFit:
      s.x_column = "n";
      s.log_log = false;
      break;
    case ExperimentKind::PtSolve:
      s.x_column = "lambda";
      s.y_column = "p_T";
      s.error_column.clear();
      s.log_log = false;
      break;
    case ExperimentKind::Oracle:
      s.x_column = "exact";
      s.log_log = false;
      s.reference_slope = 1.0;
      break;
    case ExperimentKind::OsssCheck:
      s.x_column = "rhs";
      s.y_column = "lhs";
      s.error_column.clear();
      s.log_log = false;
      s.reference_slope = 1.0;
      break;
    case ExperimentKind::Triangle:
      s.x_column = "p";
      s.y_column = "triangle";
      s.error_column.clear();
      s.log_log = false;
      break;
    case ExperimentKind::Coupling:
      s.x_column = "q";
      s.y_column = "edge_violations";
      s.error_column.clear();
      s.log_log = false;
      break;
    case ExperimentKind::ImageSum:
      s.x_column = "image_sum";
      s.y_column = "tau_torus";
      s.error_column = "tau_torus_se";
      s.log_log = false;
      s.reference_slope = 1.0;
      break;
  }
  return s;
}

PlotResult emit_plot(const std::string& csv_path, const PlotSpec& spec, const std::string& svg_path) {
  const Csv csv = read_csv(csv_path);
  PlotResult res;
  struct Pt {
    double x, y, e;
  };
  std::vector<Pt> pts;
  if (!csv.header.empty()) {
    column(csv, spec.x_column);
    column(csv, spec.y_column);
    if (!spec.error_column.empty()) column(csv, spec.error_column);
  }
  if (csv.header.empty() || csv.rows.empty()) {
    res.warnings.push_back("CSV '" + csv_path + "' has no data rows; writing empty axes");
  } else {
    const int cx = column(csv, spec.x_column), cy = column(csv, spec.y_column);
    const int ce = spec.error_column.empty() ? -1 : column(csv, spec.error_column);
    std::size_t skipped = 0;
    for (const auto& row : csv.rows) {
      if (row.size() != csv.header.size()) throw PlotError("CSV row width does not match its header");
      Pt p{0, 0, 0};
      if (!to_number(row[cx], p.x) || !to_number(row[cy], p.y) || (ce >= 0 && !to_number(row[ce], p.e))) {
        ++skipped;
        continue;
      }
      if (spec.log_log && (p.x <= 0 || p.y <= 0)) {
        ++skipped;
        continue;
      }
      pts.push_back(p);
    }
    if (skipped) res.warnings.push_back(std::to_string(skipped) + " rows without plottable values were skipped");
  }
  res.points = pts.size();

  Axis ax{0, 1, spec.log_log, kLeft, kWidth - kRight};
  Axis ay{0, 1, spec.log_log, kHeight - kBottom, kTop};
  std::vector<double> xs, ys;
  for (const auto& p : pts) {
    xs.push_back(p.x);
    ys.push_back(p.y);
    ys.push_back(p.y + p.e);
    if (!spec.log_log || p.y - p.e > 0) ys.push_back(p.y - p.e);
  }
  if (spec.horizontal_guide) ys.push_back(*spec.horizontal_guide);
  fit_range(ax, xs);
  fit_range(ay, ys);

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << esc(spec.title)
     << "</text>\n";
  // Frame and ticks.
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
     << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double v : ax.ticks()) {
    const double px = ax.pix(v);
    os << "<line x1=\"" << num(px) << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << num(px) << "\" y2=\""
       << kHeight - kBottom + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(px) << "\" y=\"" << kHeight - kBottom + 18 << "\" text-anchor=\"middle\">"
       << tick_label(v) << "</text>\n";
  }
  for (double v : ay.ticks()) {
    const double py = ay.pix(v);
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << num(py) << "\" x2=\"" << kLeft << "\" y2=\"" << num(py)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">" << tick_label(v)
       << "</text>\n";
  }
  const std::string scale = spec.log_log ? " (log)" : "";
  os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 15 << "\" text-anchor=\"middle\">"
     << esc(spec.x_column + scale) << "</text>\n";
  os << "<text x=\"18\" y=\"" << (kTop + kHeight - kBottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (kTop + kHeight - kBottom) / 2 << ")\">" << esc(spec.y_column + scale) << "</text>\n";

  os << "<g clip-path=\"url(#plot-area)\">\n";
  os << "<clipPath id=\"plot-area\"><rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\""
     << kWidth - kLeft - kRight << "\" height=\"" << kHeight - kTop - kBottom << "\"/></clipPath>\n";
  if (spec.horizontal_guide && (!spec.log_log || *spec.horizontal_guide > 0)) {
    const double py = ay.pix(*spec.horizontal_guide);
    os << "<line x1=\"" << kLeft << "\" y1=\"" << num(py) << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << num(py)
       << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
  }
  if (spec.reference_slope && !pts.empty()) {
    // Through the first point, across the x range.
    const double tx0 = ax.t(pts.front().x), ty0 = ay.t(pts.front().y);
    const double s = *spec.reference_slope;
    auto y_at = [&](double tx) { return ty0 + s * (tx - tx0); };
    os << "<line x1=\"" << num(ax.pix_t(ax.lo)) << "\" y1=\"" << num(ay.pix_t(y_at(ax.lo))) << "\" x2=\""
       << num(ax.pix_t(ax.hi)) << "\" y2=\"" << num(ay.pix_t(y_at(ax.hi)))
       << "\" stroke=\"firebrick\" stroke-dasharray=\"3,3\"/>\n";
  }
  for (const auto& p : pts) {
    const double px = ax.pix(p.x), py = ay.pix(p.y);
    if (p.e > 0) {
      const double hi = ay.pix(p.y + p.e);
      const double lo = spec.log_log && p.y - p.e <= 0 ? kHeight - kBottom : ay.pix(p.y - p.e);
      os << "<line x1=\"" << num(px) << "\" y1=\"" << num(lo) << "\" x2=\"" << num(px) << "\" y2=\"" << num(hi)
         << "\" stroke=\"steelblue\"/>\n";
    }
    os << "<circle cx=\"" << num(px) << "\" cy=\"" << num(py) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  os << "</g>\n</svg>\n";

  std::ofstream out(svg_path, std::ios::binary | std::ios::trunc);
  if (!out) throw PlotError("cannot write '" + svg_path + "'");
  out << os.str();
  return res;
}

}  // namespace perclab
