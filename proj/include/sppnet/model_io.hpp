#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sppnet/cascade.hpp"
#include "sppnet/dataset.hpp"
#include "sppnet/omegaval.hpp"

namespace sppnet::cascade {

inline constexpr std::string_view kModelMagic = "spp-cascadenet-model v1";

/// Everything needed to run inference: weights, window limits, the
/// calibrated acceptance region and the normalization the net was trained on.
struct ModelFile {
  CascadeNet net = CascadeNet::zeros();
  omega::AcceptanceRegion region;
  std::optional<data::NormalizationState> normalization;
  /// key=value lines (resolved config, seeds), written as comments.
  std::vector<std::pair<std::string, std::string>> provenance;
};

void write_model(std::ostream& out, const ModelFile& model);
/// Throws DataError on a malformed or inconsistent file.
ModelFile read_model(std::istream& in);
/// Throws IoError when the file cannot be written or opened.
void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace sppnet::cascade
