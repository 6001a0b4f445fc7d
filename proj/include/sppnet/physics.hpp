#pragma once

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace sppnet::physics {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

using Complex = std::complex<double>;

/// Free-electron dielectric model eps(w) = eps_inf - wp^2 / (w^2 + i*gamma*w).
struct DrudeParams {
  double plasma_frequency = 0.0;  // rad/s
  double collision_rate = 0.0;    // rad/s
  double epsilon_inf = 1.0;

  /// Throws DomainError unless wp > 0, gamma >= 0, eps_inf >= 1.
  void validate() const;

  /// Molybdenum fit shipped with the generator (see data/molybdenum_drude.txt).
  static DrudeParams molybdenum();
};

/// eps_m = eps_r + i*eps_i, passive media have eps_i >= 0.
struct ComplexPermittivity {
  double real = 0.0;
  double imag = 0.0;

  ComplexPermittivity() = default;
  ComplexPermittivity(double re, double im) : real(re), imag(im) {}
  explicit ComplexPermittivity(Complex z) : real(z.real()), imag(z.imag()) {}

  Complex value() const { return {real, imag}; }
  /// Re[eps_m] < -eps_d: a single interface supports a bound mode.
  bool metallic_for(double eps_d) const { return real < -eps_d; }
};

/// Complex propagation constant beta (1/m) together with the vacuum
/// wavenumber it was computed for.
struct Wavevector {
  Complex beta;
  double k0 = 0.0;
  /// False when the solution is not a mode bound to the interface/film.
  bool bound = true;

  /// beta / k0, the effective index.
  Complex effective_index() const { return beta / k0; }
};

enum class ModeParity {
  symmetric,      // short-range coupled mode
  antisymmetric,  // long-range coupled mode (E_x odd across the film)
};

std::string_view to_string(ModeParity parity);
ModeParity parse_parity(std::string_view text);

/// L_SPP in metres; Im[beta] = 0 gives infinite = true instead of a division.
struct PropagationLength {
  double meters = 0.0;
  bool infinite = false;
};

struct SolverOptions {
  int max_iterations = 200;
  /// Accepted roots must satisfy normalized |residual| below this.
  double tolerance = 1e-10;
};

struct ThinFilmSolution {
  Wavevector wave;
  double residual = 0.0;
  int iterations = 0;
};

/// omega = 2*pi*c / lambda0.
double angular_frequency(double lambda0);

ComplexPermittivity drude_permittivity(double lambda0, const DrudeParams& params);

/// Single metal/dielectric interface: beta = k0 sqrt(eps_d eps_m / (eps_d + eps_m)),
/// branch fixed so that Re[beta] > 0 and Im[beta] >= 0.
Wavevector single_interface_beta(double eps_d, ComplexPermittivity eps_m, double lambda0);

/// Normalized residual of the symmetric-cladding film dispersion relation at
/// effective index q = beta/k0.
double film_dispersion_residual(Complex q, double eps_d, ComplexPermittivity eps_m, double thickness,
                                double lambda0, ModeParity parity);

/// Coupled mode of a metal film of thickness t in a symmetric dielectric
/// cladding, solved by damped Newton iteration seeded with the single
/// interface solution. Throws SolverError if the iteration fails to converge.
ThinFilmSolution thin_film_beta(double eps_d, ComplexPermittivity eps_m, double thickness,
                                double lambda0, ModeParity parity,
                                const SolverOptions& options = {});

/// lambda_SPP = 2*pi / Re[beta].
double spp_wavelength(const Wavevector& wave);

/// L_SPP = 1 / Im[beta].
PropagationLength propagation_length(const Wavevector& wave);

/// Tabulated eps(lambda) with linear interpolation between rows.
class PermittivityTable {
public:
  struct Row {
    double lambda_nm;
    double eps_real;
    double eps_imag;
  };

  explicit PermittivityTable(std::vector<Row> rows);

  /// Parses CSV with header `lambda_nm,eps_real,eps_imag`.
  static PermittivityTable read_csv(std::istream& in);
  static PermittivityTable load_csv(const std::filesystem::path& path);

  /// Throws DomainError outside [min_lambda_nm, max_lambda_nm].
  ComplexPermittivity at(double lambda_nm) const;

  double min_lambda_nm() const { return rows_.front().lambda_nm; }
  double max_lambda_nm() const { return rows_.back().lambda_nm; }
  const std::vector<Row>& rows() const { return rows_; }

private:
  std::vector<Row> rows_;
};

/// Everything the data generator needs to turn (lambda0, t) into observables.
struct PhysicsConfig {
  double eps_d = 1.0;  // air cladding
  DrudeParams drude = DrudeParams::molybdenum();
  std::optional<PermittivityTable> table;
  ModeParity parity = ModeParity::antisymmetric;
  SolverOptions solver;

  ComplexPermittivity permittivity(double lambda0) const;
};

struct SppObservables {
  double lambda_spp = 0.0;  // m
  PropagationLength length;
  Wavevector wave;
};

/// lambda0 and thickness in metres.
SppObservables observe(const PhysicsConfig& config, double lambda0, double thickness);

}  // namespace sppnet::physics
