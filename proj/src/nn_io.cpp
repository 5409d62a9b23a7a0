#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "gbopt/nn.hpp"

// GBNN v1 is written in native byte order; the format is little-endian.
static_assert(std::endian::native == std::endian::little,
              "GBNN I/O assumes a little-endian host");

namespace gbopt {

namespace {

constexpr char kMagic[4] = {'G', 'B', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

// Caps against absurd headers so a corrupt file cannot trigger a huge
// allocation before the payload read fails.
constexpr std::uint32_t kMaxLayers = 4096;
constexpr std::uint32_t kMaxWidth = 16u * 1024u * 1024u;

template <typename T>
bool read_pod(std::istream& in, T* out) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) return false;
  std::memcpy(out, buf, sizeof(T));
  return true;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

NeuralNet load_weights_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_weights: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("load_weights: " + path + " is not valid JSON: " +
                      e.what());
  }
  if (!doc.is_object() || doc.value("magic", "") != "GBNN") {
    throw FormatError("load_weights: " + path + " lacks the GBNN magic");
  }
  if (doc.value("version", 0) != static_cast<int>(kVersion)) {
    throw FormatError("load_weights: unsupported version in " + path);
  }
  if (!doc.contains("layers") || !doc["layers"].is_array() ||
      doc["layers"].empty()) {
    throw DimensionError("load_weights: " + path + " declares no layers");
  }
  std::vector<Layer> layers;
  for (const auto& jl : doc["layers"]) {
    if (!jl.contains("rows") || !jl.contains("cols") ||
        !jl.contains("activation") || !jl.contains("weights") ||
        !jl.contains("biases")) {
      throw FormatError("load_weights: layer object missing fields in " +
                        path);
    }
    const auto rows = jl["rows"].get<std::int64_t>();
    const auto cols = jl["cols"].get<std::int64_t>();
    const auto act = jl["activation"].get<std::int64_t>();
    if (rows <= 0 || cols <= 0 || rows > kMaxWidth || cols > kMaxWidth) {
      throw DimensionError("load_weights: implausible layer shape in " +
                           path);
    }
    if (act < 0 || act > 3) {
      throw FormatError("load_weights: unknown activation code in " + path);
    }
    const auto& jw = jl["weights"];
    const auto& jb = jl["biases"];
    if (!jw.is_array() || static_cast<std::int64_t>(jw.size()) != rows ||
        !jb.is_array() || static_cast<std::int64_t>(jb.size()) != rows) {
      throw DimensionError(
          "load_weights: weight/bias row count mismatch in " + path);
    }
    Layer lay;
    lay.weight.resize(rows, cols);
    for (std::int64_t r = 0; r < rows; ++r) {
      const auto& row = jw[static_cast<size_t>(r)];
      if (!row.is_array() || static_cast<std::int64_t>(row.size()) != cols) {
        throw DimensionError("load_weights: weight column count mismatch in " +
                             path);
      }
      for (std::int64_t c = 0; c < cols; ++c) {
        lay.weight(r, c) = row[static_cast<size_t>(c)].get<double>();
      }
    }
    lay.bias.resize(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
      lay.bias(r) = jb[static_cast<size_t>(r)].get<double>();
    }
    lay.activation = static_cast<ActivationKind>(act);
    layers.push_back(std::move(lay));
  }
  return NeuralNet(std::move(layers));
}

void save_weights_json(const NeuralNet& nn, const std::string& path) {
  nlohmann::json doc;
  doc["magic"] = "GBNN";
  doc["version"] = kVersion;
  auto& jlayers = doc["layers"] = nlohmann::json::array();
  for (const Layer& lay : nn.layers()) {
    nlohmann::json jl;
    jl["rows"] = lay.weight.rows();
    jl["cols"] = lay.weight.cols();
    jl["activation"] = static_cast<int>(lay.activation);
    auto& jw = jl["weights"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < lay.weight.rows(); ++r) {
      auto& row = jw.emplace_back(nlohmann::json::array());
      for (Eigen::Index c = 0; c < lay.weight.cols(); ++c) {
        row.push_back(lay.weight(r, c));
      }
    }
    auto& jb = jl["biases"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < lay.bias.size(); ++r) {
      jb.push_back(lay.bias(r));
    }
    jlayers.push_back(std::move(jl));
  }
  std::ofstream out(path);
  if (!out) throw IoError("save_weights: cannot open " + path);
  out << doc.dump(1) << "\n";
  if (!out) throw IoError("save_weights: write failed for " + path);
}

bool ends_with_json(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
}

}  // namespace

NeuralNet load_weights(const std::string& path) {
  if (ends_with_json(path)) return load_weights_json(path);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_weights: cannot open " + path);

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("load_weights: " + path + " lacks the GBNN magic");
  }
  std::uint32_t version = 0;
  std::uint32_t layer_count = 0;
  if (!read_pod(in, &version)) {
    throw FormatError("load_weights: header truncated in " + path);
  }
  if (version != kVersion) {
    throw FormatError("load_weights: unsupported version " +
                      std::to_string(version) + " in " + path);
  }
  if (!read_pod(in, &layer_count)) {
    throw FormatError("load_weights: header truncated in " + path);
  }
  if (layer_count == 0 || layer_count > kMaxLayers) {
    throw DimensionError("load_weights: implausible layer count " +
                         std::to_string(layer_count) + " in " + path);
  }

  std::vector<Layer> layers;
  layers.reserve(layer_count);
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    std::uint32_t rows = 0, cols = 0;
    std::uint8_t act = 0;
    if (!read_pod(in, &rows) || !read_pod(in, &cols) || !read_pod(in, &act)) {
      throw TruncatedError("load_weights: layer header truncated in " + path);
    }
    if (rows == 0 || cols == 0 || rows > kMaxWidth || cols > kMaxWidth) {
      throw DimensionError("load_weights: implausible shape " +
                           std::to_string(rows) + "x" + std::to_string(cols) +
                           " in " + path);
    }
    if (act > 3) {
      throw FormatError("load_weights: unknown activation code " +
                        std::to_string(act) + " in " + path);
    }
    if (!layers.empty() &&
        static_cast<Eigen::Index>(cols) != layers.back().weight.rows()) {
      throw DimensionError("load_weights: layer " + std::to_string(l) +
                           " input width does not chain in " + path);
    }
    Layer lay;
    lay.weight.resize(rows, cols);
    // Row-major on disk, column-major in memory: read per row.
    std::vector<double> row(cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      if (!in.read(reinterpret_cast<char*>(row.data()),
                   static_cast<std::streamsize>(sizeof(double) * cols))) {
        throw TruncatedError("load_weights: weight payload truncated in " +
                             path);
      }
      for (std::uint32_t c = 0; c < cols; ++c) lay.weight(r, c) = row[c];
    }
    lay.bias.resize(rows);
    if (!in.read(reinterpret_cast<char*>(lay.bias.data()),
                 static_cast<std::streamsize>(sizeof(double) * rows))) {
      throw TruncatedError("load_weights: bias payload truncated in " + path);
    }
    lay.activation = static_cast<ActivationKind>(act);
    layers.push_back(std::move(lay));
  }
  // Strictness guard: anything after the declared payload is a sign of a
  // damaged or mislabeled file.
  char extra;
  if (in.read(&extra, 1)) {
    throw FormatError("load_weights: trailing bytes after payload in " +
                      path);
  }
  return NeuralNet(std::move(layers));
}

void save_weights(const NeuralNet& nn, const std::string& path) {
  if (ends_with_json(path)) {
    save_weights_json(nn, path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_weights: cannot open " + path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(nn.layer_count()));
  for (const Layer& lay : nn.layers()) {
    write_pod(out, static_cast<std::uint32_t>(lay.weight.rows()));
    write_pod(out, static_cast<std::uint32_t>(lay.weight.cols()));
    write_pod(out, static_cast<std::uint8_t>(lay.activation));
    for (Eigen::Index r = 0; r < lay.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < lay.weight.cols(); ++c) {
        write_pod(out, lay.weight(r, c));
      }
    }
    for (Eigen::Index r = 0; r < lay.bias.size(); ++r) {
      write_pod(out, lay.bias(r));
    }
  }
  if (!out) throw IoError("save_weights: write failed for " + path);
}

}  // namespace gbopt
