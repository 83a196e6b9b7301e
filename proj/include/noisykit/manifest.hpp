#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisykit/hash.hpp"
#include "noisykit/version.hpp"

namespace noisykit {

/// Provenance record written next to every CLI output. The timestamp lives
/// only here; the data outputs themselves are pure functions of the flags.
struct RunManifest {
  std::string command;
  nlohmann::json resolved_config;
  std::vector<std::pair<std::string, std::uint64_t>> inputs;  // path, fnv1a64
  std::vector<std::string> outputs;

  void add_input(const std::filesystem::path& path) {
    inputs.emplace_back(path.string(), hash_file(path.string()));
  }

  nlohmann::json to_json() const {
    nlohmann::json ins = nlohmann::json::array();
    for (const auto& [path, hash] : inputs)
      ins.push_back({{"path", path}, {"fnv1a64", hex64(hash)}});
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    return nlohmann::json{
        {"command", command},
        {"config", resolved_config},
        {"inputs", ins},
        {"outputs", outputs},
        {"tool_version", kVersion},
        {"rng_algorithm", kRngAlgorithm},
        {"unix_time_ms", std::chrono::duration_cast<std::chrono::milliseconds>(now).count()}};
  }

  /// Writes `<primary_output>.manifest.json`.
  void write(const std::filesystem::path& primary_output) const {
    const auto path = primary_output.string() + ".manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << to_json().dump(2) << "\n";
  }
};

/// Minimal SVG bar chart: one bar per label with a +/- one-std whisker.
inline std::string svg_bar_chart(const std::vector<std::string>& labels,
                                 const std::vector<double>& means,
                                 const std::vector<double>& stds, const std::string& title) {
  const double width = 520.0;
  const double left = 60.0, bottom = 280.0, top = 40.0;
  const double plot_h = bottom - top;
  const std::size_t n = labels.size();
  const double slot = (width - left - 20.0) / static_cast<double>(n == 0 ? 1 : n);
  const double bar_w = slot * 0.6;

  auto y_of = [&](double v) { return bottom - v * plot_h; };  // value axis is [0, 1]
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"520\" height=\"320\" "
         "viewBox=\"0 0 520 320\">\n";
  svg += "<text x=\"260\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
  svg += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(bottom) + "\" x2=\"500\" y2=\"" +
         std::to_string(bottom) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top) + "\" x2=\"" +
         std::to_string(left) + "\" y2=\"" + std::to_string(bottom) + "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = 0.25 * tick;
    svg += "<text x=\"" + std::to_string(left - 8.0) + "\" y=\"" + std::to_string(y_of(v) + 4.0) +
           "\" text-anchor=\"end\" font-size=\"10\">" + std::to_string(v).substr(0, 4) + "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const double m = means[i], s = stds[i];
    svg += "<rect x=\"" + std::to_string(cx - bar_w / 2) + "\" y=\"" + std::to_string(y_of(m)) +
           "\" width=\"" + std::to_string(bar_w) + "\" height=\"" + std::to_string(bottom - y_of(m)) +
           "\" fill=\"#4878a8\"/>\n";
    svg += "<line x1=\"" + std::to_string(cx) + "\" y1=\"" + std::to_string(y_of(m - s)) + "\" x2=\"" +
           std::to_string(cx) + "\" y2=\"" + std::to_string(y_of(m + s)) + "\" stroke=\"black\"/>\n";
    for (double end : {m - s, m + s})
      svg += "<line x1=\"" + std::to_string(cx - 6.0) + "\" y1=\"" + std::to_string(y_of(end)) +
             "\" x2=\"" + std::to_string(cx + 6.0) + "\" y2=\"" + std::to_string(y_of(end)) +
             "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + std::to_string(cx) + "\" y=\"" + std::to_string(bottom + 16.0) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + labels[i] + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace noisykit
