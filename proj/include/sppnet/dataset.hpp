#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sppnet/physics.hpp"

namespace sppnet::data {

inline constexpr std::size_t kColumns = 4;
inline constexpr std::array<std::string_view, kColumns> kColumnNames = {"lambda0_nm", "t_nm", "lambda_spp_nm",
                                                                         "L_spp_nm"};
enum Column : std::size_t { kLambda0 = 0, kThickness = 1, kLambdaSpp = 2, kLength = 3 };

/// One grid point. Units are nm for raw data; after normalize() every field
/// holds its dimensionless image in [-1, 1].
struct Sample {
  double lambda0_nm = 0.0;
  double t_nm = 0.0;
  double lambda_spp_nm = 0.0;
  double L_spp_nm = 0.0;

  std::array<double, kColumns> to_array() const { return {lambda0_nm, t_nm, lambda_spp_nm, L_spp_nm}; }
  static Sample from_array(const std::array<double, kColumns>& a) { return {a[0], a[1], a[2], a[3]}; }
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct ColumnRange {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const ColumnRange&, const ColumnRange&) = default;
};

/// Affine map of every column onto [-1, 1]. The propagation length column
/// is mapped in log10 space, so its range holds log10(L_spp_nm) bounds.
struct NormalizationState {
  std::array<ColumnRange, kColumns> columns;

  static constexpr bool log_scaled(std::size_t column) { return column == kLength; }

  double forward(std::size_t column, double raw) const;
  double inverse(std::size_t column, double normalized) const;
  friend bool operator==(const NormalizationState&, const NormalizationState&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::optional<NormalizationState> normalization;
  /// key=value provenance (generator parameters, seeds), written as CSV comments.
  std::vector<std::pair<std::string, std::string>> provenance;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  bool normalized() const { return normalization.has_value(); }
};

struct Exclusion {
  double lambda0_nm = 0.0;
  double t_nm = 0.0;
  std::string reason;
};

struct GridSpec {
  std::vector<double> thicknesses_nm = {36, 42, 48, 54, 60, 72, 84, 96, 128};
  double lambda_min_nm = 400.0;
  double lambda_max_nm = 700.0;
  int n_lambda = 101;
  /// Fraction of grid points allowed to fail before generation errors out.
  double max_failure_fraction = 0.10;
};

struct GridResult {
  Dataset dataset;
  std::vector<Exclusion> exclusions;
};

/// Sweeps thickness (outer) and wavelength (inner, endpoints inclusive).
GridResult generate_grid(const GridSpec& spec, const physics::PhysicsConfig& physics);

NormalizationState fit_normalization(const Dataset& ds);
Dataset normalize(const Dataset& ds);
Dataset normalize_with(const Dataset& ds, const NormalizationState& state);
Dataset denormalize(const Dataset& ds);

/// Deterministic partition: samples are put in canonical order, shuffled with
/// `seed`, and the first ceil(f*N) go to the training set.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

void write_csv(const Dataset& ds, std::ostream& out);
Dataset read_csv(std::istream& in);
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

void write_exclusions(const std::vector<Exclusion>& exclusions, std::ostream& out);
void save_exclusions(const std::vector<Exclusion>& exclusions, const std::filesystem::path& path);

}  // namespace sppnet::data
