#include "ssn/io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ssn/errors.hpp"

namespace ssn::io {

namespace fs = std::filesystem;

namespace {

Json tensor_to_json(const Tensor& t) {
  Json out;
  out["shape"] = t.shape();
  out["data"] = t.values();
  return out;
}

Tensor tensor_from_json(const Json& doc, const char* name) {
  if (!doc.contains(name)) throw ValidationError(std::string("missing tensor \"") + name + "\"");
  const Json& t = doc.at(name);
  return Tensor(t.at("shape").get<std::vector<std::size_t>>(),
                t.at("data").get<std::vector<double>>());
}

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

// Reads the next whitespace-delimited header token of a PNM file, skipping
// '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json ssnt_to_json(const LowRankGaussian& dist) {
  Json doc;
  doc["format"] = "SSNT";
  doc["version"] = 1;
  doc["S"] = dist.pixels();
  doc["C"] = dist.classes();
  doc["R"] = dist.rank();
  doc["mean"] = tensor_to_json(dist.mean());
  doc["factor"] = tensor_to_json(dist.factor());
  doc["diag_raw"] = tensor_to_json(dist.diag_raw());
  return doc;
}

LowRankGaussian ssnt_from_json(const Json& doc) {
  if (doc.value("format", std::string()) != "SSNT") throw ValidationError("not an SSNT document");
  if (doc.value("version", 0) != 1) throw ValidationError("unsupported SSNT version");
  return LowRankGaussian(tensor_from_json(doc, "mean"), tensor_from_json(doc, "factor"),
                         tensor_from_json(doc, "diag_raw"), doc.at("S").get<std::size_t>(),
                         doc.at("C").get<std::size_t>(), doc.at("R").get<std::size_t>());
}

std::string dump_ssnt(const LowRankGaussian& dist) { return ssnt_to_json(dist).dump(1) + "\n"; }

void save_ssnt(const fs::path& path, const LowRankGaussian& dist) {
  write_text(path, dump_ssnt(dist));
}

LowRankGaussian load_ssnt(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return ssnt_from_json(Json::parse(text));
  } catch (const Json::exception& e) {
    throw IoError("malformed SSNT file " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw IoError("malformed SSNT file " + path.string() + ": " + e.what());
  }
}

Json labelmap_to_json(const LabelMap& map) {
  Json doc;
  doc["shape"] = map.shape();
  doc["num_classes"] = map.num_classes();
  doc["labels"] = map.labels();
  if (map.mask()) {
    Json mask = Json::array();
    for (auto m : *map.mask()) mask.push_back(m != 0);
    doc["mask"] = std::move(mask);
  }
  return doc;
}

LabelMap labelmap_from_json(const Json& doc) {
  std::optional<std::vector<std::uint8_t>> mask;
  if (doc.contains("mask") && !doc.at("mask").is_null()) {
    mask.emplace();
    for (const auto& m : doc.at("mask")) {
      mask->push_back(m.is_boolean() ? m.get<bool>() : m.get<int>() != 0);
    }
  }
  return LabelMap(doc.at("labels").get<std::vector<int>>(), doc.at("num_classes").get<int>(),
                  std::move(mask), doc.at("shape").get<std::vector<std::size_t>>());
}

void write_pgm(const fs::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) {
    throw DimensionError("PGM pixel buffer does not match width x height");
  }
  std::ostringstream out;
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  write_text(path, out.str());
}

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (pnm_token(in) != "P5") throw IoError(path.string() + " is not a binary PGM (P5)");
  GrayImage img;
  try {
    img.width = std::stoul(pnm_token(in));
    img.height = std::stoul(pnm_token(in));
    if (std::stoul(pnm_token(in)) != 255) throw IoError(path.string() + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw IoError("malformed PGM header in " + path.string());
  }
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw IoError("truncated PGM data in " + path.string());
  }
  return img;
}

void save_labelmap(const fs::path& path, const LabelMap& map) {
  if (lower_extension(path) != ".pgm") {
    write_text(path, labelmap_to_json(map).dump() + "\n");
    return;
  }
  if (map.shape().size() != 2 || map.label_values() != 2 || map.mask()) {
    throw ValidationError("PGM label maps must be 2D, binary and unmasked");
  }
  GrayImage img{map.shape()[1], map.shape()[0], {}};
  img.pixels.reserve(map.pixels());
  for (int l : map.labels()) img.pixels.push_back(l ? 255 : 0);
  write_pgm(path, img);
}

LabelMap load_labelmap(const fs::path& path) {
  if (lower_extension(path) == ".pgm") {
    const GrayImage img = read_pgm(path);
    std::vector<int> labels;
    labels.reserve(img.pixels.size());
    for (auto p : img.pixels) labels.push_back(p > 127 ? 1 : 0);
    return LabelMap(std::move(labels), 1, std::nullopt, {img.height, img.width});
  }
  const std::string text = read_text(path);
  try {
    return labelmap_from_json(Json::parse(text));
  } catch (const Json::exception& e) {
    throw IoError("malformed label map " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw IoError("malformed label map " + path.string() + ": " + e.what());
  }
}

std::vector<LabelMap> load_labelmap_dir(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string ext = lower_extension(entry.path());
    if (entry.is_regular_file() && (ext == ".json" || ext == ".pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LabelMap> maps;
  for (const auto& f : files) maps.push_back(load_labelmap(f));
  if (maps.empty()) throw IoError("no label maps found in " + dir.string());
  return maps;
}

PlotScale write_heatmap(const fs::path& path, std::size_t rows, std::size_t cols,
                        std::span<const double> values, std::size_t cell_w, std::size_t cell_h) {
  if (values.size() != rows * cols) throw DimensionError("heatmap values do not match rows x cols");
  PlotScale scale{values.empty() ? 0.0 : values[0], values.empty() ? 0.0 : values[0]};
  for (double v : values) {
    scale.min = std::min(scale.min, v);
    scale.max = std::max(scale.max, v);
  }
  const double span = scale.max - scale.min;
  GrayImage img{cols * cell_w, rows * cell_h, {}};
  img.pixels.resize(img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double v = values[(y / cell_h) * cols + x / cell_w];
      const double t = span > 0.0 ? (v - scale.min) / span : 0.0;
      img.pixels[y * img.width + x] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
  }
  write_pgm(path, img);
  Json side;
  side["min"] = scale.min;
  side["max"] = scale.max;
  side["rows"] = rows;
  side["cols"] = cols;
  side["cell_width"] = cell_w;
  side["cell_height"] = cell_h;
  side["mapping"] = "gray = round(255 * (value - min) / (max - min))";
  write_text(path.string() + ".json", side.dump(2) + "\n");
  return scale;
}

DeviationScale deviation_scale_from_json(const Json& doc) {
  DeviationScale s;
  s.per_class = doc.at("per_class").get<std::vector<double>>();
  s.temperature = doc.value("temperature", 1.0);
  return s;
}

Json to_json(const MetricReport& report) {
  Json doc;
  doc["ged_squared"] = report.ged_squared;
  doc["diversity"] = report.diversity;
  doc["cross_term"] = report.cross_term;
  doc["gt_self_term"] = report.gt_self_term;
  return doc;
}

}  // namespace ssn::io
