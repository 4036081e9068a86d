#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <regex>

#include "mlmoe/report.hpp"
#include "json.hpp"

using namespace mlmoe;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("mlmoe_report_" + name)).string();
}

std::vector<SweepRecord> records(int count, GateKind gate = GateKind::ModifiedSigmoid) {
  std::vector<SweepRecord> out;
  const std::vector<int> ns = {1000, 2000, 4000, 8000};
  for (int i = 0; i < count; ++i) {
    SweepRecord r;
    r.gate = gate;
    r.k_fit = 3 + (i / 200) % 2;
    r.n = ns[static_cast<std::size_t>(i % 4)];
    r.replication = i / 4;
    r.seed = 0xfedcba9876543210ULL + static_cast<std::uint64_t>(i);
    r.loss_name = gate == GateKind::SoftmaxBaseline ? "softmax_baseline" : "D1";
    r.loss_value = 0.1 / 3.0 * std::pow(r.n, -0.5) * (1.0 + 0.01 * (i % 7));
    r.em_iterations = 10 + i;
    r.final_loglik = -1234.5678901234567 - i;
    r.converged = i % 13 != 5;
    r.wall_ms = i;
    out.push_back(r);
  }
  return out;
}

// Minimal XML well-formedness check: balanced, properly nested tags.
bool well_formed(const std::string& xml) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = xml.find('<', pos)) != std::string::npos) {
    const std::size_t end = xml.find('>', pos);
    if (end == std::string::npos) return false;
    std::string tag = xml.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;
    if (tag[0] == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
  }
  return stack.empty();
}

RateFit exact_fit(GateKind gate, int k, double c, double slope) {
  std::vector<SweepRecord> recs;
  for (int n : {1000, 2154, 4642, 10000}) {
    SweepRecord r;
    r.gate = gate;
    r.k_fit = k;
    r.n = n;
    r.loss_name = "D1";
    r.loss_value = c * std::pow(n, slope);
    r.converged = true;
    recs.push_back(r);
  }
  return fit_loglog(recs);
}

}  // namespace

TEST(RecordsCsv, EmptyIsHeaderOnly) {
  EXPECT_EQ(records_csv({}), std::string(kRecordsHeader) + "\n");
  EXPECT_TRUE(parse_records_csv(records_csv({})).empty());
}

TEST(RecordsCsv, LineCountAndRoundTrip) {
  const auto recs = records(400);
  const std::string path = temp_path("records.csv");
  write_records_csv(recs, path);
  const std::string text = read_text_file(path);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 401);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  const auto back = read_records_csv(path);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].loss_value, recs[i].loss_value);
    EXPECT_EQ(back[i].final_loglik, recs[i].final_loglik);
    EXPECT_EQ(back[i].seed, recs[i].seed);
    EXPECT_EQ(back[i].converged, recs[i].converged);
    EXPECT_EQ(back[i].gate, recs[i].gate);
  }
  EXPECT_EQ(records_csv(back), text);
  std::remove(path.c_str());
}

TEST(RecordsCsv, RejectsMalformedRows) {
  EXPECT_THROW(parse_records_csv("nope\n"), std::runtime_error);
  const std::string h = std::string(kRecordsHeader) + "\n";
  EXPECT_THROW(parse_records_csv(h + "modified_sigmoid,3,100\n"), std::runtime_error);
  EXPECT_THROW(parse_records_csv(h + "modified_sigmoid,3,100,0,1,D1,abc,1,-1,true,0\n"), std::runtime_error);
  EXPECT_THROW(parse_records_csv(h + "modified_sigmoid,3,100,0,1,D1,0.5,1,-1,yes,0\n"), std::runtime_error);
  EXPECT_THROW(read_records_csv("/nonexistent/records.csv"), std::runtime_error);
}

TEST(Summary, SlopeAndBlocks) {
  auto recs = records(400);
  auto soft = records(400, GateKind::SoftmaxBaseline);
  recs.insert(recs.end(), soft.begin(), soft.end());
  const auto fits = fit_all(recs, RegressionMode::LogOfMean, 0);
  ASSERT_EQ(fits.size(), 4u);
  const auto j = nlohmann::json::parse(summary_json(fits, RegressionMode::LogOfMean, 0));
  ASSERT_EQ(j["series"].size(), 4u);
  EXPECT_EQ(j["series"][0]["gate"], "modified_sigmoid");
  EXPECT_EQ(j["series"][2]["gate"], "softmax");
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const double s = j["series"][i]["slope"];
    EXPECT_NEAR(s, fits[i].slope, 1e-12 * std::abs(fits[i].slope));
    EXPECT_EQ(j["series"][i]["failure_count"], fits[i].failure_count);
    EXPECT_EQ(j["series"][i]["points"].size(), fits[i].n_values.size());
  }
  const RateFit exact = exact_fit(GateKind::ModifiedSigmoid, 3, 2.0, -0.5);
  const auto e = nlohmann::json::parse(summary_json({exact}, RegressionMode::LogOfMean, 0));
  EXPECT_NEAR(e["series"][0]["slope"].get<double>(), -0.5, 1e-12);
  EXPECT_THROW(summary_json({}, RegressionMode::LogOfMean, 0), std::invalid_argument);
}

TEST(Svg, FitLinePassesThroughMarkers) {
  const RateFit f = exact_fit(GateKind::ModifiedSigmoid, 3, 2.0, -0.5);
  const std::string svg = render_loglog_svg({f}, "exact");
  EXPECT_TRUE(well_formed(svg));
  const std::regex line_re(R"re(<line class="fit" x1="([-\d.]+)" y1="([-\d.]+)" x2="([-\d.]+)" y2="([-\d.]+)")re");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, line_re));
  const double x1 = std::stod(m[1]), y1 = std::stod(m[2]), x2 = std::stod(m[3]), y2 = std::stod(m[4]);
  const std::regex marker_re(R"re(<circle class="marker" cx="([-\d.]+)" cy="([-\d.]+)")re");
  int markers = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), marker_re); it != std::sregex_iterator(); ++it) {
    const double cx = std::stod((*it)[1]), cy = std::stod((*it)[2]);
    const double on_line = y1 + (y2 - y1) * (cx - x1) / (x2 - x1);
    EXPECT_LT(std::abs(cy - on_line), 0.5);
    ++markers;
  }
  EXPECT_EQ(markers, 4);
  // Independent transform: canvas coordinates from the declared frame.
  const LogLogFrame fr = frame_for({f});
  const double t = (std::log10(1000.0) - fr.log_x_min) / (fr.log_x_max - fr.log_x_min);
  EXPECT_NEAR(x1, fr.left + t * (fr.width - fr.left - fr.right), 0.001);
}

TEST(Svg, OverlaysTwoColoredSeries) {
  const RateFit a = exact_fit(GateKind::ModifiedSigmoid, 3, 2.0, -0.5);
  const RateFit b = exact_fit(GateKind::SoftmaxBaseline, 3, 1.0, -0.3);
  const std::string svg = render_loglog_svg({a, b});
  EXPECT_TRUE(well_formed(svg));
  EXPECT_NE(svg.find("#1f77b4"), std::string::npos);
  EXPECT_NE(svg.find("#d62728"), std::string::npos);
  EXPECT_NE(svg.find("slope -0.50"), std::string::npos);
  EXPECT_NE(svg.find("slope -0.30"), std::string::npos);
  EXPECT_EQ(render_loglog_svg({a, b}), svg);
}

TEST(Svg, DegenerateInputWritesNothing) {
  const std::string path = temp_path("bad.svg");
  std::remove(path.c_str());
  RateFit a = exact_fit(GateKind::ModifiedSigmoid, 3, 2.0, -0.5);
  RateFit b = a;
  for (auto& n : b.n_values) n *= 100;
  EXPECT_THROW(write_loglog_svg({a, b}, path), std::invalid_argument);
  EXPECT_FALSE(fs::exists(path));
  EXPECT_THROW(write_loglog_svg({}, path), std::invalid_argument);
  RateFit single = a;
  single.n_values.resize(1);
  single.per_n_mean.resize(1);
  single.per_n_two_std.resize(1);
  EXPECT_THROW(write_loglog_svg({single}, path), std::invalid_argument);
  RateFit zero = a;
  zero.per_n_mean[0] = 0.0;
  EXPECT_THROW(write_loglog_svg({zero}, path), std::invalid_argument);
  EXPECT_FALSE(fs::exists(path));
}

TEST(Manifest, ListsFilesWithHashes) {
  const std::string path = temp_path("payload.txt");
  write_text_file(path, "abc");
  RunManifest m;
  m.config_digests = {"d1"};
  m.start_time = "2026-01-01T00:00:00Z";
  m.end_time = utc_timestamp_now();
  m.record_count = 3;
  m.files.push_back(manifest_entry(path));
  const auto j = nlohmann::json::parse(manifest_json(m));
  EXPECT_EQ(j["config_digest"], "d1");
  EXPECT_EQ(j["tool_version"], kToolVersion);
  EXPECT_EQ(j["files"][0]["sha256"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(j["record_count"], 3);
  std::remove(path.c_str());
}
