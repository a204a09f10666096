#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <system_error>

#include "t3vf/harness.hpp"

namespace t3vf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string_view display_name(TTTMode mode) {
  switch (mode) {
    case TTTMode::Base: return "Base";
    case TTTMode::Indiscriminate: return "Indiscriminate";
    case TTTMode::FixedThreshold: return "FixedThreshold";
    case TTTMode::Adaptive: return "Adaptive";
  }
  return "Unknown";
}

std::string percent(double rate) { return format_fixed(100.0 * rate, 1); }

json cell_json(const CellStats& c) {
  return json{{"episodes", c.episodes},
              {"successes", c.successes},
              {"success_rate", c.rate()},
              {"mean_steps", c.mean_steps},
              {"mean_updates", c.mean_updates},
              {"mean_pairs_accepted", c.mean_pairs_accepted}};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

fs::path write_file(const fs::path& dir, const char* name, const std::string& content) {
  const fs::path path = dir / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
  return path;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string format_fixed(double value, int decimals, bool explicit_sign) {
  char buf[64];
  // Avoid printing "-0.0" for tiny negatives.
  const double scale = std::pow(10.0, decimals);
  if (std::abs(value) * scale < 0.5) value = 0.0;
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, decimals);
  std::string out(buf, res.ptr);
  if (explicit_sign && value >= 0.0) out.insert(out.begin(), '+');
  return out;
}

std::string report_csv(const EvalReport& r) {
  std::string out = "dimension";
  for (auto m : r.modes) out += "," + std::string(display_name(m));
  const bool delta = r.has_delta();
  if (delta) out += ",Delta";
  out += "\n";
  for (std::size_t d = 0; d < r.dimensions.size(); ++d) {
    out += std::string(to_string(r.dimensions[d].dimension));
    for (std::size_t m = 0; m < r.modes.size(); ++m) out += "," + percent(r.cells[m][d].rate());
    if (delta) out += "," + format_fixed(100.0 * r.delta(d), 1, true);
    out += "\n";
  }
  out += "Avg";
  for (auto m : r.modes) out += "," + percent(r.average(m));
  if (delta) out += "," + format_fixed(100.0 * r.average_delta(), 1, true);
  out += "\n";
  return out;
}

json report_json(const EvalReport& r, bool include_episodes) {
  json grid = json::array();
  for (std::size_t m = 0; m < r.modes.size(); ++m) {
    json cells = json::array();
    for (std::size_t d = 0; d < r.dimensions.size(); ++d) {
      json c = cell_json(r.cells[m][d]);
      c["dimension"] = to_string(r.dimensions[d].dimension);
      c["magnitude"] = r.dimensions[d].magnitude;
      cells.push_back(std::move(c));
    }
    grid.push_back({{"mode", to_string(r.modes[m])}, {"average", r.average(r.modes[m])}, {"cells", cells}});
  }
  json doc = {{"kind", "eval"}, {"setting", to_string(r.setting)}, {"grid", grid}, {"metadata", r.metadata}};
  doc["fixed_threshold"] = r.fixed_threshold ? json(*r.fixed_threshold) : json(nullptr);
  if (r.has_delta()) {
    json deltas = json::object();
    for (std::size_t d = 0; d < r.dimensions.size(); ++d) deltas[std::string(to_string(r.dimensions[d].dimension))] = r.delta(d);
    doc["delta"] = {{"per_dimension", deltas}, {"average", r.average_delta()}};
  }
  if (include_episodes) {
    json eps = json::array();
    for (const auto& e : r.episodes) {
      eps.push_back({{"dimension", to_string(e.dimension)},
                     {"mode", to_string(e.mode)},
                     {"episode", e.episode},
                     {"env_seed", e.env_seed},
                     {"success", e.success},
                     {"steps", e.steps},
                     {"updates", e.updates},
                     {"pairs_accepted", e.pairs_accepted},
                     {"pairs_matured", e.pairs_matured},
                     {"final_q_delta_norm", e.final_q_delta_norm}});
    }
    doc["episodes"] = std::move(eps);
  }
  return doc;
}

std::string report_csv(const AblationReport& r) {
  std::string out = "row,ttt,variance_filter,adaptive_buffer,success_rate\n";
  for (const auto& row : r.rows) {
    out += std::string(display_name(row.mode)) + "," + (row.ttt ? "1" : "0") + "," + (row.variance_filter ? "1" : "0") +
           "," + (row.adaptive_buffer ? "1" : "0") + "," + percent(row.stats.rate()) + "\n";
  }
  return out;
}

json report_json(const AblationReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json c = cell_json(row.stats);
    c["mode"] = to_string(row.mode);
    c["ttt"] = row.ttt;
    c["variance_filter"] = row.variance_filter;
    c["adaptive_buffer"] = row.adaptive_buffer;
    rows.push_back(std::move(c));
  }
  return json{{"kind", "ablation"},
              {"dimension", "robot"},
              {"fixed_threshold", r.fixed_threshold},
              {"rows", rows},
              {"metadata", r.metadata}};
}

std::string report_csv(const TimingReport& r) {
  std::string out = "mode,mean_wall_ms,mean_updates,mean_steps,relative_time\n";
  for (const auto& row : r.rows) {
    out += std::string(display_name(row.mode)) + "," + format_fixed(row.mean_wall_ms, 4) + "," +
           format_fixed(row.mean_updates, 2) + "," + format_fixed(row.mean_steps, 2) + "," +
           format_fixed(row.relative_time, 2) + "\n";
  }
  return out;
}

json report_json(const TimingReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"mode", to_string(row.mode)},
                    {"episodes", row.episodes},
                    {"mean_wall_ms", row.mean_wall_ms},
                    {"mean_updates", row.mean_updates},
                    {"mean_steps", row.mean_steps},
                    {"relative_time", row.relative_time}});
  }
  return json{{"kind", "timing"}, {"rows", rows}, {"metadata", r.metadata}};
}

std::string timing_svg(const TimingReport& r) {
  constexpr int kWidth = 480;
  constexpr int kHeight = 320;
  constexpr int kMarginTop = 40;
  constexpr int kMarginBottom = 50;
  constexpr int kBarWidth = 90;
  const int plot_h = kHeight - kMarginTop - kMarginBottom;
  double max_rel = 1.0;
  for (const auto& row : r.rows) max_rel = std::max(max_rel, row.relative_time);

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(kWidth) +
         "\" height=\"" + std::to_string(kHeight) + "\" viewBox=\"0 0 " + std::to_string(kWidth) + " " +
         std::to_string(kHeight) + "\">\n";
  out += "  <rect x=\"0\" y=\"0\" width=\"" + std::to_string(kWidth) + "\" height=\"" + std::to_string(kHeight) +
         "\" fill=\"white\"/>\n";
  out += "  <text x=\"" + std::to_string(kWidth / 2) +
         "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">Per-episode time relative to Base</text>\n";
  const int n = static_cast<int>(r.rows.size());
  const int slot = n > 0 ? kWidth / n : kWidth;
  for (int i = 0; i < n; ++i) {
    const auto& row = r.rows[static_cast<std::size_t>(i)];
    const double h = plot_h * (row.relative_time / max_rel);
    const double x = i * slot + (slot - kBarWidth) / 2.0;
    const double y = kMarginTop + (plot_h - h);
    out += "  <rect x=\"" + format_fixed(x, 1) + "\" y=\"" + format_fixed(y, 1) + "\" width=\"" +
           std::to_string(kBarWidth) + "\" height=\"" + format_fixed(h, 1) + "\" fill=\"#4a78b5\"/>\n";
    out += "  <text x=\"" + format_fixed(x + kBarWidth / 2.0, 1) + "\" y=\"" + format_fixed(y - 6.0, 1) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
           format_fixed(row.relative_time, 2) + "x</text>\n";
    out += "  <text x=\"" + format_fixed(x + kBarWidth / 2.0, 1) + "\" y=\"" + std::to_string(kHeight - 20) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
           xml_escape(display_name(row.mode)) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::vector<fs::path> emit_reports(const EvalReport& report, const fs::path& out_dir, const EmitOptions& options) {
  ensure_dir(out_dir);
  return {write_file(out_dir, "report.csv", report_csv(report)),
          write_file(out_dir, "report.json", report_json(report, options.include_episodes).dump(2) + "\n")};
}

std::vector<fs::path> emit_reports(const AblationReport& report, const fs::path& out_dir, const EmitOptions&) {
  ensure_dir(out_dir);
  return {write_file(out_dir, "report.csv", report_csv(report)),
          write_file(out_dir, "report.json", report_json(report).dump(2) + "\n")};
}

std::vector<fs::path> emit_reports(const TimingReport& report, const fs::path& out_dir, const EmitOptions&) {
  ensure_dir(out_dir);
  return {write_file(out_dir, "report.csv", report_csv(report)),
          write_file(out_dir, "report.json", report_json(report).dump(2) + "\n"),
          write_file(out_dir, "timing.svg", timing_svg(report))};
}

}  // namespace t3vf
