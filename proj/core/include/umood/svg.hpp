#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace umood {

// Deterministic SVG line charts: fixed 880x520 canvas, fixed palette, no
// timestamps; identical inputs render byte-identical files.
struct Series {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, std::span<const Series> series);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace umood
