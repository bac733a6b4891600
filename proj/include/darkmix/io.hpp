#pragma once

#include <string>
#include <utility>

#include "darkmix/em.hpp"
#include "darkmix/model.hpp"
#include "darkmix/panel.hpp"

namespace darkmix {

enum class PanelLayout { csv, binary };

/// Sidecar metadata for a stored panel. The manifest is a JSON file; the
/// measurements live in the referenced data file, either headered CSV
/// (columns e{e}_j{j}) or raw little-endian 64-bit floats, row-major, one
/// pixel per row.
struct PanelManifest {
  int schema_version = 1;
  long n_pixels = 0;
  int replicates = 0;
  std::vector<Condition> conditions;
  std::string data_file;
  PanelLayout layout = PanelLayout::binary;

  ExperimentDesign design() const {
    return build_design(conditions, replicates);
  }
};

PanelManifest make_manifest(const ExperimentDesign& design, long n_pixels,
                            const std::string& data_file, PanelLayout layout);

/// Writes the manifest at `manifest_path` and the data file next to it.
void write_panel(const Panel& panel, const PanelManifest& manifest,
                 const std::string& manifest_path);

std::pair<Panel, PanelManifest> read_panel(const std::string& manifest_path);

/// Model files round-trip every parameter at full precision together with
/// fit metadata (manifest LL, iterations, convergence flag).
struct ModelFile {
  int schema_version = 1;
  MixtureModel model;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

void write_model(const ModelFile& file, const std::string& path);
ModelFile read_model(const std::string& path);

}  // namespace darkmix
