#include "pca_svg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>

#include "wsp/error.hpp"
#include "wsp/format.hpp"

namespace wsp::cli {

namespace {

constexpr double kSize = 640.0;
constexpr double kMargin = 48.0;

std::string hsl(int hue, int saturation, int lightness) {
  return "hsl(" + std::to_string(hue) + "," + std::to_string(saturation) + "%," + std::to_string(lightness) + "%)";
}

}  // namespace

void write_pca_svg(const std::filesystem::path& path, const RepresentationTable& table, const PcaResult& pca) {
  if (pca.coordinates.rank() != 2 || pca.coordinates.extent(1) < 2 || pca.coordinates.extent(0) != table.size()) {
    throw DimensionError("write_pca_svg: need one row of at least two PCA coordinates per slice");
  }
  const std::size_t n = table.size();
  double x_lo = pca.coordinates.at(0, 0), x_hi = x_lo;
  double y_lo = pca.coordinates.at(0, 1), y_hi = y_lo;
  for (std::size_t i = 0; i < n; ++i) {
    x_lo = std::min(x_lo, pca.coordinates.at(i, 0));
    x_hi = std::max(x_hi, pca.coordinates.at(i, 0));
    y_lo = std::min(y_lo, pca.coordinates.at(i, 1));
    y_hi = std::max(y_hi, pca.coordinates.at(i, 1));
  }
  const double x_span = std::max(x_hi - x_lo, 1e-12);
  const double y_span = std::max(y_hi - y_lo, 1e-12);
  const double inner = kSize - 2.0 * kMargin;

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << inner << "\" height=\"" << inner
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  const std::string ev1 = pca.explained_variance.size() > 0 ? format_fixed(100.0 * pca.explained_variance[0], 1) : "?";
  const std::string ev2 = pca.explained_variance.size() > 1 ? format_fixed(100.0 * pca.explained_variance[1], 1) : "?";
  out << "<text x=\"" << kSize / 2 << "\" y=\"" << kSize - 14 << "\" text-anchor=\"middle\" font-size=\"14\">PC1 ("
      << ev1 << "%)</text>\n"
      << "<text x=\"16\" y=\"" << kSize / 2 << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 "
      << kSize / 2 << ")\">PC2 (" << ev2 << "%)</text>\n"
      << "<text x=\"" << kMargin << "\" y=\"30\" font-size=\"13\">hue: y_strong (blue 0, red 1); "
      << "lightness: depth (dark d=0, light d=1)</text>\n";
  out << "<g stroke=\"none\" fill-opacity=\"0.8\">\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double px = kMargin + inner * (pca.coordinates.at(i, 0) - x_lo) / x_span;
    const double py = kMargin + inner * (1.0 - (pca.coordinates.at(i, 1) - y_lo) / y_span);
    const int lightness = 25 + static_cast<int>(50.0 * std::clamp(table.d[i], 0.0, 1.0));
    std::string fill;
    if (!table.y_strong[i]) fill = hsl(0, 0, lightness);
    else fill = *table.y_strong[i] == 1 ? hsl(5, 80, lightness) : hsl(215, 80, lightness);
    out << "<circle cx=\"" << format_fixed(px, 2) << "\" cy=\"" << format_fixed(py, 2) << "\" r=\"3\" fill=\"" << fill
        << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
  if (!out) throw IoError("failed while writing " + path.string());
}

}  // namespace wsp::cli
