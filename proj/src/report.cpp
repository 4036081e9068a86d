#include "mlmoe/report.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mlmoe/config.hpp"

namespace mlmoe {

namespace {

std::string fmt17(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string fmt_px(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 3);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_num(const std::string& s, int line, const char* field) {
  T v{};
  const char* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw std::runtime_error("records line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  }
  return v;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string series_color(const RateFit& fit, std::size_t index) {
  if (fit.gate == GateKind::SoftmaxBaseline) return "#d62728";
  static const char* palette[] = {"#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#17becf"};
  return palette[index % 5];
}

void check_series(const std::vector<RateFit>& fits) {
  if (fits.empty()) throw std::invalid_argument("plot: no series");
  int lo = 0, hi = 0;
  for (std::size_t s = 0; s < fits.size(); ++s) {
    const RateFit& f = fits[s];
    if (f.n_values.size() < 2) throw std::invalid_argument("plot: a series needs at least two n values");
    for (double m : f.per_n_mean) {
      if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("plot: means must be positive and finite");
    }
    if (!std::isfinite(f.slope) || !std::isfinite(f.intercept)) throw std::invalid_argument("plot: non-finite fit");
    const int flo = f.n_values.front(), fhi = f.n_values.back();
    if (s == 0) {
      lo = flo;
      hi = fhi;
    } else {
      lo = std::max(lo, flo);
      hi = std::min(hi, fhi);
    }
  }
  if (lo > hi) throw std::invalid_argument("plot: overlaid series have no common n range");
}

double fit_value(const RateFit& f, double n) { return std::exp(f.intercept) * std::pow(n, f.slope); }

}  // namespace

std::string records_csv(const std::vector<SweepRecord>& records) {
  std::string out = kRecordsHeader;
  out += '\n';
  for (const auto& r : records) {
    out += std::string(to_string(r.gate)) + ',' + std::to_string(r.k_fit) + ',' + std::to_string(r.n) + ',' +
           std::to_string(r.replication) + ',' + std::to_string(r.seed) + ',' + r.loss_name + ',' +
           fmt17(r.loss_value) + ',' + std::to_string(r.em_iterations) + ',' + fmt17(r.final_loglik) + ',' +
           (r.converged ? "true" : "false") + ',' + std::to_string(r.wall_ms) + '\n';
  }
  return out;
}

void write_records_csv(const std::vector<SweepRecord>& records, const std::string& path) {
  write_text_file(path, records_csv(records));
}

std::vector<SweepRecord> parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("records: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordsHeader) throw std::runtime_error("records: unexpected header '" + line + "'");
  std::vector<SweepRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 11) throw std::runtime_error("records line " + std::to_string(lineno) + ": expected 11 fields");
    SweepRecord r;
    try {
      r.gate = parse_gate_kind(f[0]);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("records line " + std::to_string(lineno) + ": " + e.what());
    }
    r.k_fit = parse_num<int>(f[1], lineno, "k_fit");
    r.n = parse_num<int>(f[2], lineno, "n");
    r.replication = parse_num<int>(f[3], lineno, "replication");
    r.seed = parse_num<std::uint64_t>(f[4], lineno, "seed");
    r.loss_name = f[5];
    r.loss_value = parse_num<double>(f[6], lineno, "loss_value");
    r.em_iterations = parse_num<int>(f[7], lineno, "em_iterations");
    r.final_loglik = parse_num<double>(f[8], lineno, "final_loglik");
    if (f[9] != "true" && f[9] != "false") {
      throw std::runtime_error("records line " + std::to_string(lineno) + ": bad converged '" + f[9] + "'");
    }
    r.converged = f[9] == "true";
    r.wall_ms = parse_num<std::int64_t>(f[10], lineno, "wall_ms");
    out.push_back(r);
  }
  return out;
}

std::vector<SweepRecord> read_records_csv(const std::string& path) {
  try {
    return parse_records_csv(read_text_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::vector<RateFit> fit_all(const std::vector<SweepRecord>& records, RegressionMode mode, int trim) {
  std::vector<RateFit> fits;
  for (const auto& [key, recs] : group_series(records)) fits.push_back(fit_loglog(recs, mode, trim));
  return fits;
}

std::string summary_json(const std::vector<RateFit>& fits, RegressionMode mode, int trim) {
  if (fits.empty()) throw std::invalid_argument("summary: no fits");
  nlohmann::ordered_json j;
  j["format"] = "mlmoe-summary/1";
  j["regression"] = std::string(to_string(mode));
  j["trim"] = trim;
  j["series"] = nlohmann::ordered_json::array();
  for (const auto& f : fits) {
    nlohmann::ordered_json s;
    s["gate"] = std::string(to_string(f.gate));
    s["k_fit"] = f.k_fit;
    s["loss_name"] = f.loss_name;
    s["slope"] = f.slope;
    s["intercept"] = f.intercept;
    s["r_squared"] = f.r_squared;
    s["record_count"] = f.record_count;
    s["failure_count"] = f.failure_count;
    s["points"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < f.n_values.size(); ++i) {
      s["points"].push_back({{"n", f.n_values[i]},
                             {"mean", f.per_n_mean[i]},
                             {"two_std", f.per_n_two_std[i]},
                             {"count", f.per_n_count[i]}});
    }
    j["series"].push_back(s);
  }
  return j.dump(2) + "\n";
}

void write_summary(const std::vector<RateFit>& fits, RegressionMode mode, int trim, const std::string& path) {
  write_text_file(path, summary_json(fits, mode, trim));
}

std::string utc_timestamp_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["config_digest"] = m.config_digests.size() == 1 ? nlohmann::ordered_json(m.config_digests.front())
                                                    : nlohmann::ordered_json(m.config_digests);
  j["tool_version"] = m.tool_version;
  j["start_time"] = m.start_time;
  j["end_time"] = m.end_time;
  j["record_count"] = m.record_count;
  j["failure_count"] = m.failure_count;
  j["files"] = nlohmann::ordered_json::array();
  for (const auto& f : m.files) j["files"].push_back({{"path", f.path}, {"sha256", f.sha256}});
  return j.dump(2) + "\n";
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  write_text_file(path, manifest_json(manifest));
}

ManifestFile manifest_entry(const std::string& path) { return {path, sha256_hex(read_text_file(path))}; }

double LogLogFrame::px(double x) const {
  const double t = (std::log10(x) - log_x_min) / (log_x_max - log_x_min);
  return left + t * (width - left - right);
}

double LogLogFrame::py(double y) const {
  const double t = (std::log10(y) - log_y_min) / (log_y_max - log_y_min);
  return height - bottom - t * (height - top - bottom);
}

LogLogFrame frame_for(const std::vector<RateFit>& fits) {
  check_series(fits);
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& f : fits) {
    for (std::size_t i = 0; i < f.n_values.size(); ++i) {
      const double n = f.n_values[i];
      xmin = std::min(xmin, n);
      xmax = std::max(xmax, n);
      const double m = f.per_n_mean[i];
      ymin = std::min({ymin, m, fit_value(f, n)});
      ymax = std::max({ymax, m + f.per_n_two_std[i], fit_value(f, n)});
      if (m - f.per_n_two_std[i] > 0.0) ymin = std::min(ymin, m - f.per_n_two_std[i]);
    }
  }
  LogLogFrame fr;
  const double lx0 = std::log10(xmin), lx1 = std::log10(xmax);
  const double ly0 = std::log10(ymin), ly1 = std::log10(ymax);
  const double px = 0.05 * (lx1 - lx0);
  const double py = std::max(0.05 * (ly1 - ly0), 0.05);
  fr.log_x_min = lx0 - px;
  fr.log_x_max = lx1 + px;
  fr.log_y_min = ly0 - py;
  fr.log_y_max = ly1 + py;
  return fr;
}

std::string render_loglog_svg(const std::vector<RateFit>& fits, const std::string& title) {
  const LogLogFrame fr = frame_for(fits);
  const double x0 = fr.left, x1 = fr.width - fr.right;
  const double y0 = fr.top, y1 = fr.height - fr.bottom;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_px(fr.width) << "\" height=\""
     << fmt_px(fr.height) << "\" viewBox=\"0 0 " << fmt_px(fr.width) << ' ' << fmt_px(fr.height)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << fmt_px(fr.width) << "\" height=\"" << fmt_px(fr.height)
     << "\" fill=\"white\"/>\n";
  if (!title.empty()) {
    os << "<text class=\"title\" x=\"" << fmt_px(fr.width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << xml_escape(title) << "</text>\n";
  }
  os << "<defs><clipPath id=\"plot-area\"><rect x=\"" << fmt_px(x0) << "\" y=\"" << fmt_px(y0) << "\" width=\""
     << fmt_px(x1 - x0) << "\" height=\"" << fmt_px(y1 - y0) << "\"/></clipPath></defs>\n";

  // Decade gridlines and tick labels.
  os << "<g class=\"grid\" stroke=\"#dddddd\" stroke-width=\"1\">\n";
  auto decades = [](double lo, double hi) {
    std::vector<int> out;
    for (int e = static_cast<int>(std::ceil(lo)); e <= static_cast<int>(std::floor(hi)); ++e) out.push_back(e);
    return out;
  };
  const auto xd = decades(fr.log_x_min, fr.log_x_max);
  const auto yd = decades(fr.log_y_min, fr.log_y_max);
  for (int e : xd) {
    const double x = fr.px(std::pow(10.0, e));
    os << "<line x1=\"" << fmt_px(x) << "\" y1=\"" << fmt_px(y0) << "\" x2=\"" << fmt_px(x) << "\" y2=\"" << fmt_px(y1)
       << "\"/>\n";
  }
  for (int e : yd) {
    const double y = fr.py(std::pow(10.0, e));
    os << "<line x1=\"" << fmt_px(x0) << "\" y1=\"" << fmt_px(y) << "\" x2=\"" << fmt_px(x1) << "\" y2=\"" << fmt_px(y)
       << "\"/>\n";
  }
  os << "</g>\n";
  os << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  os << "<rect x=\"" << fmt_px(x0) << "\" y=\"" << fmt_px(y0) << "\" width=\"" << fmt_px(x1 - x0) << "\" height=\""
     << fmt_px(y1 - y0) << "\"/>\n";
  os << "</g>\n";
  os << "<g class=\"ticks\" fill=\"black\">\n";
  for (int e : xd) {
    os << "<text x=\"" << fmt_px(fr.px(std::pow(10.0, e))) << "\" y=\"" << fmt_px(y1 + 18)
       << "\" text-anchor=\"middle\">1e" << e << "</text>\n";
  }
  for (int e : yd) {
    os << "<text x=\"" << fmt_px(x0 - 6) << "\" y=\"" << fmt_px(fr.py(std::pow(10.0, e)) + 4)
       << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  os << "<text x=\"" << fmt_px((x0 + x1) / 2) << "\" y=\"" << fmt_px(fr.height - 15)
     << "\" text-anchor=\"middle\">sample size n (log scale)</text>\n";
  os << "<text x=\"18\" y=\"" << fmt_px((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << fmt_px((y0 + y1) / 2) << ")\">loss (log scale)</text>\n";
  os << "</g>\n";

  for (std::size_t s = 0; s < fits.size(); ++s) {
    const RateFit& f = fits[s];
    const std::string color = series_color(f, s);
    const std::string name = std::string(to_string(f.gate)) + " k=" + std::to_string(f.k_fit) + " " + f.loss_name;
    os << "<g class=\"series\" data-gate=\"" << to_string(f.gate) << "\" data-k=\"" << f.k_fit << "\" data-loss=\""
       << xml_escape(f.loss_name) << "\" clip-path=\"url(#plot-area)\">\n";
    for (std::size_t i = 0; i < f.n_values.size(); ++i) {
      const double x = fr.px(f.n_values[i]);
      const double m = f.per_n_mean[i];
      const double hi = m + f.per_n_two_std[i];
      const double lo = m - f.per_n_two_std[i];
      const double ytop = fr.py(hi);
      const double ybot = lo > 0.0 ? fr.py(lo) : y1;
      os << "<line class=\"errorbar\" x1=\"" << fmt_px(x) << "\" y1=\"" << fmt_px(ytop) << "\" x2=\"" << fmt_px(x)
         << "\" y2=\"" << fmt_px(ybot) << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
    }
    const double na = f.n_values.front(), nb = f.n_values.back();
    os << "<line class=\"fit\" x1=\"" << fmt_px(fr.px(na)) << "\" y1=\"" << fmt_px(fr.py(fit_value(f, na)))
       << "\" x2=\"" << fmt_px(fr.px(nb)) << "\" y2=\"" << fmt_px(fr.py(fit_value(f, nb))) << "\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" stroke-dasharray=\"6 3\"/>\n";
    for (std::size_t i = 0; i < f.n_values.size(); ++i) {
      os << "<circle class=\"marker\" cx=\"" << fmt_px(fr.px(f.n_values[i])) << "\" cy=\""
         << fmt_px(fr.py(f.per_n_mean[i])) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    os << "</g>\n";
    const double ly = y0 + 16 + 16 * static_cast<double>(s);
    std::ostringstream slope;
    slope.precision(2);
    slope << std::fixed << f.slope;
    os << "<text class=\"slope\" x=\"" << fmt_px(x1 - 8) << "\" y=\"" << fmt_px(ly) << "\" text-anchor=\"end\" fill=\""
       << color << "\">" << xml_escape(name) << ": slope " << slope.str() << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_loglog_svg(const std::vector<RateFit>& fits, const std::string& path, const std::string& title) {
  const std::string svg = render_loglog_svg(fits, title);
  write_text_file(path, svg);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mlmoe
