#pragma once

#include <filesystem>

#include "wsp/evaluation.hpp"
#include "wsp/pca.hpp"

namespace wsp::cli {

/// Scatter of the first two PCA coordinates. Hue encodes y_strong (blue 0,
/// red 1, grey unknown); lightness encodes depth, dark at d = 0.
void write_pca_svg(const std::filesystem::path& path, const RepresentationTable& table, const PcaResult& pca);

}  // namespace wsp::cli
