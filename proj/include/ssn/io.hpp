#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ssn/assembly.hpp"
#include "ssn/label_map.hpp"
#include "ssn/lowrank_mvn.hpp"
#include "ssn/metrics.hpp"

namespace ssn::io {

using Json = nlohmann::ordered_json;

// SSNT container: {"format":"SSNT","version":1,"S","C","R", "mean",
// "factor","diag_raw"}, each tensor as {"shape":[...],"data":[...]} with
// row-major doubles printed in shortest round-trip form.
Json ssnt_to_json(const LowRankGaussian& dist);
LowRankGaussian ssnt_from_json(const Json& doc);
std::string dump_ssnt(const LowRankGaussian& dist);
void save_ssnt(const std::filesystem::path& path, const LowRankGaussian& dist);
// Throws IoError when the file is unreadable or malformed.
LowRankGaussian load_ssnt(const std::filesystem::path& path);

// Label map file: {"shape":[...],"num_classes":C,"labels":[...],"mask":[...]}
// (mask optional, booleans).
Json labelmap_to_json(const LabelMap& map);
LabelMap labelmap_from_json(const Json& doc);

// Dispatches on extension: ".pgm" is an 8-bit binary (P5) image of a 2D
// binary map with 0 = background and 255 = foreground; anything else is JSON.
void save_labelmap(const std::filesystem::path& path, const LabelMap& map);
LabelMap load_labelmap(const std::filesystem::path& path);

// All label maps in a directory (*.json, *.pgm), sorted by filename.
std::vector<LabelMap> load_labelmap_dir(const std::filesystem::path& dir);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

struct PlotScale {
  double min = 0.0;
  double max = 0.0;
};

// Min-max normalizes a rows x cols grid to 0..255, each cell expanded to a
// cell_w x cell_h block, and writes the PGM plus a "<path>.json" sidecar with
// the value range. A constant grid maps to 0.
PlotScale write_heatmap(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                        std::span<const double> values, std::size_t cell_w = 1,
                        std::size_t cell_h = 1);

DeviationScale deviation_scale_from_json(const Json& doc);
Json to_json(const MetricReport& report);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ssn::io
