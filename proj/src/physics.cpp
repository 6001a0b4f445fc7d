#include "sppnet/physics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "csv.hpp"
#include "sppnet/errors.hpp"

namespace sppnet::physics {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Wavenumber (1/cm) to angular frequency (rad/s).
constexpr double kWavenumberToRad = kTwoPi * kSpeedOfLight * 100.0;

// Newton keeps polishing below the acceptance tolerance until it stagnates.
constexpr double kPolishResidual = 1e-14;
constexpr int kMaxHalvings = 40;

void require_wavelength(double lambda0) {
  if (!(lambda0 > 0.0) || !std::isfinite(lambda0)) {
    throw DomainError("vacuum wavelength must be positive and finite, got " + std::to_string(lambda0));
  }
}

// tanh without the overflow of sinh/cosh for large Re[x].
Complex stable_tanh(Complex x) {
  if (x.real() < 0.0) return -stable_tanh(-x);
  const Complex e = std::exp(-2.0 * x);
  return (1.0 - e) / (1.0 + e);
}

Complex principal_branch_fix(Complex q) {
  if (q.real() < 0.0 || (q.real() == 0.0 && q.imag() < 0.0)) return -q;
  return q;
}

// Film dispersion in the cladding decay constant kappa = sqrt(q^2 - eps_d):
//   antisymmetric: kappa_m eps_d tanh(kappa_m a) + kappa eps_m = 0
//   symmetric:     kappa eps_m tanh(kappa_m a) + kappa_m eps_d = 0
// with kappa_m = sqrt(kappa^2 + eps_d - eps_m) and a = k0 t / 2.
struct FilmEquation {
  double eps_d;
  Complex eps_m;
  double half_phase;  // k0 t / 2
  ModeParity parity;

  struct Terms {
    Complex first;
    Complex second;
    Complex derivative;
  };

  Terms eval(Complex kappa) const {
    const Complex kappa_m = std::sqrt(kappa * kappa + eps_d - eps_m);
    const Complex th = stable_tanh(kappa_m * half_phase);
    const Complex sech2 = 1.0 - th * th;
    const Complex dkm = kappa / kappa_m;
    if (parity == ModeParity::antisymmetric) {
      return {kappa_m * eps_d * th, kappa * eps_m, eps_d * dkm * (th + kappa_m * half_phase * sech2) + eps_m};
    }
    return {kappa * eps_m * th, kappa_m * eps_d, eps_m * (th + kappa * half_phase * sech2 * dkm) + eps_d * dkm};
  }

  double residual(Complex kappa) const {
    const auto t = eval(kappa);
    const double scale = std::abs(t.first) + std::abs(t.second);
    const double r = std::abs(t.first + t.second);
    return scale > 0.0 ? r / scale : r;
  }
};

}  // namespace

std::string_view to_string(ModeParity parity) {
  return parity == ModeParity::symmetric ? "symmetric" : "antisymmetric";
}

ModeParity parse_parity(std::string_view text) {
  if (text == "symmetric") return ModeParity::symmetric;
  if (text == "antisymmetric") return ModeParity::antisymmetric;
  throw DomainError("unknown mode parity '" + std::string(text) + "'");
}

void DrudeParams::validate() const {
  if (!(plasma_frequency > 0.0)) throw DomainError("Drude plasma frequency must be positive");
  if (!(collision_rate >= 0.0)) throw DomainError("Drude collision rate must be non-negative");
  if (!(epsilon_inf >= 1.0)) throw DomainError("Drude epsilon_inf must be >= 1");
}

DrudeParams DrudeParams::molybdenum() {
  // Ordal et al., Appl. Opt. 24, 4493 (1985): wp = 6.02e4 1/cm, w_tau = 4.12e2 1/cm.
  return {6.02e4 * kWavenumberToRad, 4.12e2 * kWavenumberToRad, 1.0};
}

double angular_frequency(double lambda0) {
  require_wavelength(lambda0);
  return kTwoPi * kSpeedOfLight / lambda0;
}

ComplexPermittivity drude_permittivity(double lambda0, const DrudeParams& params) {
  params.validate();
  const double w = angular_frequency(lambda0);
  const Complex denom(w * w, params.collision_rate * w);
  const Complex eps = params.epsilon_inf - params.plasma_frequency * params.plasma_frequency / denom;
  return ComplexPermittivity(eps);
}

Wavevector single_interface_beta(double eps_d, ComplexPermittivity eps_m, double lambda0) {
  require_wavelength(lambda0);
  if (!(eps_d > 0.0)) throw DomainError("dielectric permittivity must be positive");
  const Complex em = eps_m.value();
  const Complex denom = eps_d + em;
  if (std::abs(denom) <= 1e-14 * (eps_d + std::abs(em))) {
    throw ResonanceError("eps_d + eps_m = 0: surface plasmon resonance pole");
  }
  const double k0 = kTwoPi / lambda0;
  const Complex q = principal_branch_fix(std::sqrt(eps_d * em / denom));
  return {k0 * q, k0, eps_m.metallic_for(eps_d)};
}

double film_dispersion_residual(Complex q, double eps_d, ComplexPermittivity eps_m, double thickness,
                                double lambda0, ModeParity parity) {
  require_wavelength(lambda0);
  const FilmEquation eq{eps_d, eps_m.value(), std::numbers::pi * thickness / lambda0, parity};
  return eq.residual(std::sqrt(q * q - eps_d));
}

ThinFilmSolution thin_film_beta(double eps_d, ComplexPermittivity eps_m, double thickness,
                                double lambda0, ModeParity parity, const SolverOptions& options) {
  require_wavelength(lambda0);
  if (!(thickness > 0.0) || !std::isfinite(thickness)) {
    throw DomainError("film thickness must be positive and finite");
  }
  const Wavevector seed = single_interface_beta(eps_d, eps_m, lambda0);
  if (!seed.bound) {
    return {{seed.beta, seed.k0, false}, std::nan(""), 0};
  }

  const FilmEquation eq{eps_d, eps_m.value(), std::numbers::pi * thickness / lambda0, parity};
  const Complex q0 = seed.beta / seed.k0;
  Complex kappa = std::sqrt(q0 * q0 - eps_d);
  double r = eq.residual(kappa);

  int it = 0;
  while (it < options.max_iterations && r > kPolishResidual) {
    ++it;
    const auto t = eq.eval(kappa);
    const Complex step = -(t.first + t.second) / t.derivative;
    if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) break;

    double damping = 1.0;
    bool improved = false;
    for (int h = 0; h < kMaxHalvings; ++h) {
      const Complex trial = kappa + damping * step;
      const double rt = eq.residual(trial);
      if (std::isfinite(rt) && rt < r) {
        kappa = trial;
        r = rt;
        improved = true;
        break;
      }
      damping *= 0.5;
    }
    if (!improved) break;  // stagnated at the rounding floor
  }

  if (!(r < options.tolerance)) {
    throw SolverError("thin-film dispersion solver did not converge", r, it);
  }

  const Complex q = principal_branch_fix(std::sqrt(eps_d + kappa * kappa));
  const Complex kappa_m = std::sqrt(kappa * kappa + eps_d - eps_m.value());
  const bool bound = kappa.real() > 0.0 && kappa_m.real() > 0.0;
  return {{seed.k0 * q, seed.k0, bound}, r, it};
}

double spp_wavelength(const Wavevector& wave) {
  if (!(wave.beta.real() > 0.0)) throw DomainError("spp_wavelength requires Re[beta] > 0");
  return kTwoPi / wave.beta.real();
}

PropagationLength propagation_length(const Wavevector& wave) {
  const double im = wave.beta.imag();
  if (im < 0.0) throw GainMediumError("Im[beta] < 0 describes a gain medium, which is not supported");
  if (im == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {1.0 / im, false};
}

PermittivityTable::PermittivityTable(std::vector<Row> rows) : rows_(std::move(rows)) {
  if (rows_.size() < 2) throw DataError("permittivity table needs at least two rows");
  for (std::size_t i = 1; i < rows_.size(); ++i) {
    if (!(rows_[i].lambda_nm > rows_[i - 1].lambda_nm)) {
      throw DataError("permittivity table wavelengths must be strictly increasing");
    }
  }
}

PermittivityTable PermittivityTable::read_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<Row> rows;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = detail::split_fields(body);
    if (!header_seen) {
      if (fields.size() != 3 || detail::trim(fields[0]) != "lambda_nm" || detail::trim(fields[1]) != "eps_real" ||
          detail::trim(fields[2]) != "eps_imag") {
        throw ParseError("expected header 'lambda_nm,eps_real,eps_imag'", lineno);
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) throw ParseError("expected 3 columns", lineno);
    rows.push_back({detail::parse_double(fields[0], lineno), detail::parse_double(fields[1], lineno),
                    detail::parse_double(fields[2], lineno)});
  }
  if (!header_seen) throw ParseError("missing header", lineno);
  return PermittivityTable(std::move(rows));
}

PermittivityTable PermittivityTable::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open permittivity table " + path.string());
  return read_csv(in);
}

ComplexPermittivity PermittivityTable::at(double lambda_nm) const {
  if (!(lambda_nm >= min_lambda_nm() && lambda_nm <= max_lambda_nm())) {
    throw DomainError("wavelength " + std::to_string(lambda_nm) + " nm outside permittivity table range");
  }
  auto hi = std::upper_bound(rows_.begin(), rows_.end(), lambda_nm,
                             [](double v, const Row& r) { return v < r.lambda_nm; });
  if (hi == rows_.end()) return {rows_.back().eps_real, rows_.back().eps_imag};
  const auto lo = std::prev(hi);
  const double f = (lambda_nm - lo->lambda_nm) / (hi->lambda_nm - lo->lambda_nm);
  return {lo->eps_real + f * (hi->eps_real - lo->eps_real), lo->eps_imag + f * (hi->eps_imag - lo->eps_imag)};
}

ComplexPermittivity PhysicsConfig::permittivity(double lambda0) const {
  if (table) return table->at(lambda0 * 1e9);
  return drude_permittivity(lambda0, drude);
}

SppObservables observe(const PhysicsConfig& config, double lambda0, double thickness) {
  const auto eps_m = config.permittivity(lambda0);
  const auto solution = thin_film_beta(config.eps_d, eps_m, thickness, lambda0, config.parity, config.solver);
  SppObservables obs;
  obs.wave = solution.wave;
  if (!solution.wave.bound) return obs;
  obs.lambda_spp = spp_wavelength(solution.wave);
  obs.length = propagation_length(solution.wave);
  return obs;
}

}  // namespace sppnet::physics
