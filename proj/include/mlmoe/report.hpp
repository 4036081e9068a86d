#pragma once

// Result files: records CSV, summary JSON, run manifest JSON and log-log SVG
// plots. All writers are deterministic functions of their inputs except the
// manifest, which carries timestamps.

#include <cstdint>
#include <string>
#include <vector>

#include "mlmoe/experiments.hpp"

namespace mlmoe {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kRecordsHeader =
    "gate,k_fit,n,replication,seed,loss_name,loss_value,em_iterations,final_loglik,converged,wall_ms";

std::string records_csv(const std::vector<SweepRecord>& records);
void write_records_csv(const std::vector<SweepRecord>& records, const std::string& path);
std::vector<SweepRecord> parse_records_csv(const std::string& text);
std::vector<SweepRecord> read_records_csv(const std::string& path);

// One RateFit per series (gate, k_fit, loss) in order of first appearance.
std::vector<RateFit> fit_all(const std::vector<SweepRecord>& records, RegressionMode mode, int trim);

std::string summary_json(const std::vector<RateFit>& fits, RegressionMode mode, int trim);
void write_summary(const std::vector<RateFit>& fits, RegressionMode mode, int trim,
                   const std::string& path);

struct ManifestFile {
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::vector<std::string> config_digests;
  std::string tool_version = kToolVersion;
  std::string start_time;  // ISO 8601 UTC
  std::string end_time;
  int record_count = 0;
  int failure_count = 0;
  std::vector<ManifestFile> files;
};

std::string utc_timestamp_now();
std::string manifest_json(const RunManifest& manifest);
void write_manifest(const RunManifest& manifest, const std::string& path);
// Hashes the file at path for a manifest entry.
ManifestFile manifest_entry(const std::string& path);

// Pixel mapping of a log-log plot.
struct LogLogFrame {
  double width = 720.0;
  double height = 480.0;
  double left = 80.0;
  double right = 30.0;
  double top = 40.0;
  double bottom = 60.0;
  double log_x_min = 0.0;  // log10 bounds of the plotted area
  double log_x_max = 1.0;
  double log_y_min = 0.0;
  double log_y_max = 1.0;

  double px(double x) const;
  double py(double y) const;
};

// Frame covering all markers, error bars and fit lines of the series.
LogLogFrame frame_for(const std::vector<RateFit>& fits);

// Throws std::invalid_argument for no series, a series with fewer than two n
// values or non-positive means, or overlaid series whose n ranges do not
// intersect.
std::string render_loglog_svg(const std::vector<RateFit>& fits, const std::string& title = "");
// Renders first; nothing is written when rendering fails.
void write_loglog_svg(const std::vector<RateFit>& fits, const std::string& path,
                      const std::string& title = "");

// Writes text to path, failing with the path in the message.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace mlmoe
