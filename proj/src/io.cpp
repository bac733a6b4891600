#include "darkmix/io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "darkmix/error.hpp"

namespace darkmix {

namespace {

using nlohmann::json;

namespace fs = std::filesystem;

fs::path sibling(const std::string& manifest_path, const std::string& file) {
  return fs::path(manifest_path).parent_path() / file;
}

json conditions_to_json(const std::vector<Condition>& conditions) {
  json arr = json::array();
  for (const auto& c : conditions) {
    arr.push_back({{"temp_c", c.temp_c}, {"duration_s", c.duration_s}});
  }
  return arr;
}

std::vector<Condition> conditions_from_json(const json& arr,
                                            const std::string& path) {
  std::vector<Condition> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& c = arr.at(i);
    out.push_back({c.at("temp_c").get<double>(),
                   c.at("duration_s").get<double>()});
    (void)path;
  }
  return out;
}

/// Wraps json access so a malformed document fails with the offending
/// field path instead of a bare type error.
template <typename T>
T field(const json& j, const std::string& path_in_doc) {
  json cursor = j;
  std::istringstream segments(path_in_doc);
  std::string segment;
  while (std::getline(segments, segment, '.')) {
    if (!cursor.contains(segment)) {
      fail(ErrorCode::parse_error, "missing field '" + path_in_doc + "'");
    }
    cursor = cursor.at(segment);
  }
  try {
    return cursor.get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::parse_error,
         "field '" + path_in_doc + "' has the wrong type");
  }
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_failure, "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& err) {
    fail(ErrorCode::parse_error,
         "malformed JSON in " + path + ": " + err.what());
  }
  return doc;
}

void write_csv_panel(const Panel& panel, const ExperimentDesign& design,
                     const fs::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_failure, "cannot write " + path.string());
  out.precision(17);
  for (int e = 0; e < design.n_conditions(); ++e) {
    for (int j = 0; j < design.replicates(); ++j) {
      if (e + j > 0) out << ',';
      out << 'e' << (e + 1) << "_j" << (j + 1);
    }
  }
  out << '\n';
  for (long i = 0; i < panel.n_pixels(); ++i) {
    for (long c = 0; c < panel.width(); ++c) {
      if (c > 0) out << ',';
      out << panel.data(i, c);
    }
    out << '\n';
  }
  require(out.good(), ErrorCode::io_failure, "write failed: " + path.string());
}

Panel read_csv_panel(const fs::path& path, long n_pixels, int width) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_failure, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::truncated_data,
          "missing CSV header in " + path.string());

  Panel panel;
  panel.data.resize(n_pixels, width);
  for (long i = 0; i < n_pixels; ++i) {
    if (!std::getline(in, line)) {
      fail(ErrorCode::truncated_data,
           "expected " + std::to_string(n_pixels) + " data rows, got " +
               std::to_string(i));
    }
    std::istringstream cells(line);
    std::string cell;
    for (int c = 0; c < width; ++c) {
      if (!std::getline(cells, cell, ',')) {
        fail(ErrorCode::dimension_mismatch,
             "row " + std::to_string(i + 1) + " has fewer than " +
                 std::to_string(width) + " columns");
      }
      try {
        panel.data(i, c) = std::stod(cell);
      } catch (const std::exception&) {
        fail(ErrorCode::parse_error, "row " + std::to_string(i + 1) +
                                         ", column " + std::to_string(c + 1) +
                                         ": not a number: '" + cell + "'");
      }
    }
    if (std::getline(cells, cell, ',')) {
      fail(ErrorCode::dimension_mismatch,
           "row " + std::to_string(i + 1) + " has more than " +
               std::to_string(width) + " columns");
    }
  }
  return panel;
}

void write_binary_panel(const Panel& panel, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io_failure, "cannot write " + path.string());
  // PanelMatrix is row-major, so rows stream out pixel by pixel; doubles are
  // written as little-endian IEEE-754, which is the native layout here.
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(panel.data.data()),
            static_cast<std::streamsize>(sizeof(double) * panel.data.size()));
  require(out.good(), ErrorCode::io_failure, "write failed: " + path.string());
}

Panel read_binary_panel(const fs::path& path, long n_pixels, int width) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(in.good(), ErrorCode::io_failure, "cannot open " + path.string());
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t expected =
      sizeof(double) * static_cast<std::uint64_t>(n_pixels) * width;
  if (bytes < expected) {
    fail(ErrorCode::truncated_data,
         path.string() + " holds " + std::to_string(bytes) +
             " bytes, expected " + std::to_string(expected));
  }
  if (bytes > expected) {
    fail(ErrorCode::dimension_mismatch,
         path.string() + " holds " + std::to_string(bytes) +
             " bytes, expected " + std::to_string(expected));
  }
  in.seekg(0);
  Panel panel;
  panel.data.resize(n_pixels, width);
  in.read(reinterpret_cast<char*>(panel.data.data()),
          static_cast<std::streamsize>(expected));
  require(in.good(), ErrorCode::io_failure, "read failed: " + path.string());
  return panel;
}

}  // namespace

PanelManifest make_manifest(const ExperimentDesign& design, long n_pixels,
                            const std::string& data_file, PanelLayout layout) {
  PanelManifest manifest;
  manifest.n_pixels = n_pixels;
  manifest.replicates = design.replicates();
  manifest.conditions = design.conditions();
  manifest.data_file = data_file;
  manifest.layout = layout;
  return manifest;
}

void write_panel(const Panel& panel, const PanelManifest& manifest,
                 const std::string& manifest_path) {
  require(manifest.n_pixels == panel.n_pixels(),
          ErrorCode::dimension_mismatch,
          "manifest pixel count does not match the panel");
  const ExperimentDesign design = manifest.design();
  check_panel_design(panel, design);

  json doc;
  doc["schema_version"] = manifest.schema_version;
  doc["n_pixels"] = manifest.n_pixels;
  doc["replicates"] = manifest.replicates;
  doc["conditions"] = conditions_to_json(manifest.conditions);
  doc["data_file"] = manifest.data_file;
  doc["layout"] = manifest.layout == PanelLayout::csv ? "csv" : "binary64-le";

  const fs::path data_path = sibling(manifest_path, manifest.data_file);
  if (manifest.layout == PanelLayout::csv) {
    write_csv_panel(panel, design, data_path);
  } else {
    write_binary_panel(panel, data_path);
  }

  std::ofstream out(manifest_path);
  require(out.good(), ErrorCode::io_failure, "cannot write " + manifest_path);
  out << doc.dump(2) << '\n';
  require(out.good(), ErrorCode::io_failure, "write failed: " + manifest_path);
}

std::pair<Panel, PanelManifest> read_panel(const std::string& manifest_path) {
  const json doc = load_json(manifest_path);

  PanelManifest manifest;
  manifest.schema_version = field<int>(doc, "schema_version");
  if (manifest.schema_version != 1) {
    fail(ErrorCode::unknown_schema,
         "unsupported panel schema version " +
             std::to_string(manifest.schema_version) + " (supported: 1)");
  }
  manifest.n_pixels = field<long>(doc, "n_pixels");
  manifest.replicates = field<int>(doc, "replicates");
  if (!doc.contains("conditions") || !doc.at("conditions").is_array()) {
    fail(ErrorCode::parse_error, "missing field 'conditions'");
  }
  manifest.conditions =
      conditions_from_json(doc.at("conditions"), manifest_path);
  manifest.data_file = field<std::string>(doc, "data_file");
  const std::string layout = field<std::string>(doc, "layout");
  if (layout == "csv") {
    manifest.layout = PanelLayout::csv;
  } else if (layout == "binary64-le") {
    manifest.layout = PanelLayout::binary;
  } else {
    fail(ErrorCode::unknown_schema, "unknown storage layout '" + layout + "'");
  }

  const ExperimentDesign design = manifest.design();
  require(manifest.n_pixels >= 1, ErrorCode::parse_error,
          "manifest declares no pixels");

  const fs::path data_path = sibling(manifest_path, manifest.data_file);
  Panel panel = manifest.layout == PanelLayout::csv
                    ? read_csv_panel(data_path, manifest.n_pixels,
                                     design.width())
                    : read_binary_panel(data_path, manifest.n_pixels,
                                        design.width());
  check_panel_design(panel, design);
  return {std::move(panel), std::move(manifest)};
}

namespace {

json component_to_json(const ComponentParameters& comp) {
  json j;
  if (comp.is_npm()) {
    const auto& npm = std::get<NpmMeans>(comp.mean);
    j["mean"] = {{"type", "npm"},
                 {"values", std::vector<double>(
                                npm.values.begin(), npm.values.end())}};
  } else {
    const auto& lei = std::get<LeiMeans>(comp.mean);
    j["mean"] = {{"type", "lei"},
                 {"beta1", lei.beta1},
                 {"log_rate", lei.log_rate},
                 {"deltas", std::vector<double>(lei.deltas.begin(),
                                                lei.deltas.end())},
                 {"beta_temp", lei.beta_temp},
                 {"condition_group", lei.condition_group}};
  }
  j["alpha"] = std::vector<double>(comp.alpha.begin(), comp.alpha.end());
  j["gamma"] = std::vector<double>(comp.gamma.begin(), comp.gamma.end());
  return j;
}

Vector vector_from_json(const json& arr, const std::string& path) {
  if (!arr.is_array()) {
    fail(ErrorCode::parse_error, "field '" + path + "' must be an array");
  }
  Vector v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr.at(i).is_number()) {
      fail(ErrorCode::parse_error,
           "field '" + path + "[" + std::to_string(i) + "]' is not a number");
    }
    v[static_cast<long>(i)] = arr.at(i).get<double>();
  }
  return v;
}

ComponentParameters component_from_json(const json& j,
                                        const std::string& path) {
  ComponentParameters comp;
  if (!j.contains("mean")) {
    fail(ErrorCode::parse_error, "missing field '" + path + ".mean'");
  }
  const json& mean = j.at("mean");
  const std::string type = field<std::string>(mean, "type");
  if (type == "npm") {
    NpmMeans npm;
    npm.values = vector_from_json(mean.at("values"), path + ".mean.values");
    comp.mean = std::move(npm);
  } else if (type == "lei") {
    LeiMeans lei;
    lei.beta1 = field<double>(mean, "beta1");
    lei.log_rate = field<double>(mean, "log_rate");
    lei.deltas = vector_from_json(mean.at("deltas"), path + ".mean.deltas");
    lei.beta_temp = field<double>(mean, "beta_temp");
    lei.condition_group =
        field<std::vector<int>>(mean, "condition_group");
    comp.mean = std::move(lei);
  } else {
    fail(ErrorCode::parse_error,
         "field '" + path + ".mean.type' must be 'npm' or 'lei'");
  }
  if (!j.contains("alpha") || !j.contains("gamma")) {
    fail(ErrorCode::parse_error,
         "missing field '" + path + ".alpha' or '" + path + ".gamma'");
  }
  comp.alpha = vector_from_json(j.at("alpha"), path + ".alpha");
  comp.gamma = vector_from_json(j.at("gamma"), path + ".gamma");
  return comp;
}

}  // namespace

void write_model(const ModelFile& file, const std::string& path) {
  validate_model(file.model);
  json doc;
  doc["schema_version"] = file.schema_version;
  doc["design"] = {{"conditions", conditions_to_json(file.model.design.conditions())},
                   {"replicates", file.model.design.replicates()}};
  doc["k"] = file.model.n_components();
  doc["mean_spec"] =
      file.model.components.front().is_npm() ? "npm" : "lei";
  json comps = json::array();
  for (const auto& comp : file.model.components) {
    comps.push_back(component_to_json(comp));
  }
  doc["components"] = std::move(comps);
  doc["theta"] = std::vector<double>(file.model.weights.theta.begin(),
                                     file.model.weights.theta.end());
  doc["fit"] = {{"loglik", file.loglik},
                {"iterations", file.iterations},
                {"converged", file.converged}};

  std::ofstream out(path);
  require(out.good(), ErrorCode::io_failure, "cannot write " + path);
  out << doc.dump(2) << '\n';
  require(out.good(), ErrorCode::io_failure, "write failed: " + path);
}

ModelFile read_model(const std::string& path) {
  const json doc = load_json(path);

  ModelFile file;
  file.schema_version = field<int>(doc, "schema_version");
  if (file.schema_version != 1) {
    fail(ErrorCode::version_mismatch,
         "model schema version " + std::to_string(file.schema_version) +
             " is not supported (this build reads version 1)");
  }
  if (!doc.contains("design")) {
    fail(ErrorCode::parse_error, "missing field 'design'");
  }
  const json& design_json = doc.at("design");
  if (!design_json.contains("conditions")) {
    fail(ErrorCode::parse_error, "missing field 'design.conditions'");
  }
  file.model.design =
      build_design(conditions_from_json(design_json.at("conditions"), path),
                   field<int>(design_json, "replicates"));

  const int k = field<int>(doc, "k");
  if (!doc.contains("components") || !doc.at("components").is_array()) {
    fail(ErrorCode::parse_error, "missing field 'components'");
  }
  const json& comps = doc.at("components");
  if (static_cast<int>(comps.size()) != k) {
    fail(ErrorCode::parse_error,
         "field 'components' has " + std::to_string(comps.size()) +
             " entries but k = " + std::to_string(k));
  }
  for (int i = 0; i < k; ++i) {
    file.model.components.push_back(component_from_json(
        comps.at(i), "components[" + std::to_string(i) + "]"));
  }
  if (!doc.contains("theta")) {
    fail(ErrorCode::parse_error, "missing field 'theta'");
  }
  file.model.weights.theta = vector_from_json(doc.at("theta"), "theta");
  if (file.model.weights.theta.size() != k - 1) {
    fail(ErrorCode::parse_error,
         "field 'theta' must have k - 1 = " + std::to_string(k - 1) +
             " entries");
  }
  file.loglik = field<double>(doc, "fit.loglik");
  file.iterations = field<int>(doc, "fit.iterations");
  file.converged = field<bool>(doc, "fit.converged");
  validate_model(file.model);
  return file;
}

}  // namespace darkmix
