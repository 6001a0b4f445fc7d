#include "sppnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "sppnet/errors.hpp"
#include "sppnet/rng.hpp"

namespace sppnet::data {
namespace {

constexpr std::string_view kNormPrefix = "norm.";

std::string join_thicknesses(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    out += detail::format_double(values[i]);
  }
  return out;
}

std::string sanitize(std::string text) {
  std::replace(text.begin(), text.end(), ',', ';');
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

double column_value(std::size_t column, double raw) {
  return NormalizationState::log_scaled(column) ? std::log10(raw) : raw;
}

}  // namespace

double NormalizationState::forward(std::size_t column, double raw) const {
  const auto& r = columns.at(column);
  return 2.0 * (column_value(column, raw) - r.min) / (r.max - r.min) - 1.0;
}

double NormalizationState::inverse(std::size_t column, double normalized) const {
  const auto& r = columns.at(column);
  const double v = r.min + 0.5 * (normalized + 1.0) * (r.max - r.min);
  return log_scaled(column) ? std::pow(10.0, v) : v;
}

GridResult generate_grid(const GridSpec& spec, const physics::PhysicsConfig& physics) {
  if (spec.n_lambda < 1) throw DomainError("n_lambda must be >= 1");
  if (!(spec.lambda_min_nm < spec.lambda_max_nm)) throw DomainError("lambda_min must be < lambda_max");
  if (!(spec.lambda_min_nm > 0.0)) throw DomainError("lambda_min must be positive");
  if (spec.thicknesses_nm.empty()) throw DomainError("thickness list is empty");
  for (double t : spec.thicknesses_nm) {
    if (!(t > 0.0)) throw DomainError("thicknesses must be positive");
  }

  GridResult result;
  auto& ds = result.dataset;
  const int n = spec.n_lambda;
  const double step = n > 1 ? (spec.lambda_max_nm - spec.lambda_min_nm) / (n - 1) : 0.0;
  for (double t : spec.thicknesses_nm) {
    for (int i = 0; i < n; ++i) {
      const double lambda0 = (n > 1 && i == n - 1) ? spec.lambda_max_nm : spec.lambda_min_nm + i * step;
      try {
        const auto obs = physics::observe(physics, lambda0 * 1e-9, t * 1e-9);
        if (!obs.wave.bound) {
          result.exclusions.push_back({lambda0, t, "no bound mode"});
        } else if (obs.length.infinite) {
          result.exclusions.push_back({lambda0, t, "infinite propagation length"});
        } else {
          ds.samples.push_back({lambda0, t, obs.lambda_spp * 1e9, obs.length.meters * 1e9});
        }
      } catch (const Error& e) {
        result.exclusions.push_back({lambda0, t, sanitize(e.what())});
      }
    }
  }

  const std::size_t total = spec.thicknesses_nm.size() * static_cast<std::size_t>(n);
  if (static_cast<double>(result.exclusions.size()) > spec.max_failure_fraction * static_cast<double>(total)) {
    throw DataError("grid generation failed for " + std::to_string(result.exclusions.size()) + " of " +
                    std::to_string(total) + " points");
  }

  ds.provenance = {
      {"generator", "thin_film_dispersion"},
      {"thicknesses_nm", join_thicknesses(spec.thicknesses_nm)},
      {"lambda_min_nm", detail::format_double(spec.lambda_min_nm)},
      {"lambda_max_nm", detail::format_double(spec.lambda_max_nm)},
      {"n_lambda", std::to_string(spec.n_lambda)},
      {"eps_d", detail::format_double(physics.eps_d)},
      {"parity", std::string(physics::to_string(physics.parity))},
  };
  if (physics.table) {
    ds.provenance.emplace_back("permittivity", "table");
  } else {
    ds.provenance.emplace_back("permittivity", "drude");
    ds.provenance.emplace_back("drude_plasma_frequency", detail::format_double(physics.drude.plasma_frequency));
    ds.provenance.emplace_back("drude_collision_rate", detail::format_double(physics.drude.collision_rate));
    ds.provenance.emplace_back("drude_epsilon_inf", detail::format_double(physics.drude.epsilon_inf));
  }
  return result;
}

NormalizationState fit_normalization(const Dataset& ds) {
  if (ds.empty()) throw DataError("cannot normalize an empty dataset");
  if (ds.normalized()) throw DataError("dataset is already normalized");
  NormalizationState state;
  for (std::size_t c = 0; c < kColumns; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : ds.samples) {
      const double v = column_value(c, s.to_array()[c]);
      if (!std::isfinite(v)) throw DataError("non-finite value in column " + std::string(kColumnNames[c]));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(hi > lo)) throw DataError("column " + std::string(kColumnNames[c]) + " is constant");
    state.columns[c] = {lo, hi};
  }
  return state;
}

Dataset normalize(const Dataset& ds) { return normalize_with(ds, fit_normalization(ds)); }

Dataset normalize_with(const Dataset& ds, const NormalizationState& state) {
  if (ds.normalized()) throw DataError("dataset is already normalized");
  Dataset out;
  out.provenance = ds.provenance;
  out.normalization = state;
  out.samples.reserve(ds.size());
  for (const auto& s : ds.samples) {
    auto a = s.to_array();
    for (std::size_t c = 0; c < kColumns; ++c) a[c] = state.forward(c, a[c]);
    out.samples.push_back(Sample::from_array(a));
  }
  return out;
}

Dataset denormalize(const Dataset& ds) {
  if (!ds.normalized()) throw DataError("dataset is not normalized");
  Dataset out;
  out.provenance = ds.provenance;
  out.samples.reserve(ds.size());
  for (const auto& s : ds.samples) {
    auto a = s.to_array();
    for (std::size_t c = 0; c < kColumns; ++c) a[c] = ds.normalization->inverse(c, a[c]);
    out.samples.push_back(Sample::from_array(a));
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DomainError("train_fraction must be in (0, 1)");
  if (ds.empty()) throw DataError("cannot split an empty dataset");

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ds.samples[a].to_array() < ds.samples[b].to_array();
  });
  Engine engine(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[bounded(engine, i)]);
  }

  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(ds.size()) - 1e-9));
  std::pair<Dataset, Dataset> parts;
  for (auto* part : {&parts.first, &parts.second}) {
    part->normalization = ds.normalization;
    part->provenance = ds.provenance;
    part->provenance.emplace_back("split_seed", std::to_string(seed));
    part->provenance.emplace_back("train_fraction", detail::format_double(train_fraction));
  }
  parts.first.provenance.emplace_back("partition", "train");
  parts.second.provenance.emplace_back("partition", "test");
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? parts.first : parts.second).samples.push_back(ds.samples[order[i]]);
  }
  return parts;
}

void write_csv(const Dataset& ds, std::ostream& out) {
  for (const auto& [key, value] : ds.provenance) out << "# " << key << '=' << value << '\n';
  if (ds.normalization) {
    for (std::size_t c = 0; c < kColumns; ++c) {
      const auto& r = ds.normalization->columns[c];
      out << "# " << kNormPrefix << kColumnNames[c] << '=' << detail::format_double(r.min) << ','
          << detail::format_double(r.max) << '\n';
    }
  }
  for (std::size_t c = 0; c < kColumns; ++c) out << (c ? "," : "") << kColumnNames[c];
  out << '\n';
  for (const auto& s : ds.samples) {
    const auto a = s.to_array();
    for (std::size_t c = 0; c < kColumns; ++c) out << (c ? "," : "") << detail::format_double(a[c]);
    out << '\n';
  }
}

Dataset read_csv(std::istream& in) {
  Dataset ds;
  NormalizationState state;
  std::array<bool, kColumns> seen{};
  bool any_norm = false;
  bool header_seen = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    if (body.front() == '#') {
      auto kv = detail::trim(body.substr(1));
      const auto eq = kv.find('=');
      if (eq == std::string_view::npos) continue;
      const auto key = kv.substr(0, eq);
      const auto value = kv.substr(eq + 1);
      if (key.starts_with(kNormPrefix)) {
        const auto col = key.substr(kNormPrefix.size());
        const auto it = std::find(kColumnNames.begin(), kColumnNames.end(), col);
        const auto bounds = detail::split_fields(value);
        if (it == kColumnNames.end() || bounds.size() != 2) throw ParseError("bad normalization comment", lineno);
        const auto c = static_cast<std::size_t>(it - kColumnNames.begin());
        state.columns[c] = {detail::parse_double(bounds[0], lineno), detail::parse_double(bounds[1], lineno)};
        seen[c] = true;
        any_norm = true;
      } else {
        ds.provenance.emplace_back(std::string(key), std::string(value));
      }
      continue;
    }
    const auto fields = detail::split_fields(body);
    if (!header_seen) {
      bool ok = fields.size() == kColumns;
      for (std::size_t c = 0; ok && c < kColumns; ++c) ok = detail::trim(fields[c]) == kColumnNames[c];
      if (!ok) throw ParseError("expected header 'lambda0_nm,t_nm,lambda_spp_nm,L_spp_nm'", lineno);
      header_seen = true;
      continue;
    }
    if (fields.size() != kColumns) {
      throw ParseError("expected " + std::to_string(kColumns) + " columns, got " + std::to_string(fields.size()),
                       lineno);
    }
    std::array<double, kColumns> a{};
    for (std::size_t c = 0; c < kColumns; ++c) a[c] = detail::parse_double(fields[c], lineno);
    ds.samples.push_back(Sample::from_array(a));
  }
  if (!header_seen) throw ParseError("missing header", lineno);
  if (any_norm) {
    if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
      throw DataError("incomplete normalization metadata");
    }
    ds.normalization = state;
  }
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(ds, out);
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in);
}

void write_exclusions(const std::vector<Exclusion>& exclusions, std::ostream& out) {
  out << "lambda0_nm,t_nm,reason\n";
  for (const auto& e : exclusions) {
    out << detail::format_double(e.lambda0_nm) << ',' << detail::format_double(e.t_nm) << ',' << sanitize(e.reason)
        << '\n';
  }
}

void save_exclusions(const std::vector<Exclusion>& exclusions, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_exclusions(exclusions, out);
}

}  // namespace sppnet::data
