#pragma once

#include <string>
#include <vector>

namespace freqact {

// Time-domain action sequence, row-major [horizon x dim].
// offset/scale, when non-empty, record the per-dimension affine map that took
// raw actions into this trajectory's units (raw = value * scale + offset).
struct Trajectory {
  int horizon = 0;
  int dim = 0;
  std::vector<double> values;
  std::vector<double> offset;
  std::vector<double> scale;

  Trajectory() = default;
  Trajectory(int n, int d) : horizon(n), dim(d), values((size_t)n * d, 0.0) {}

  double& at(int n, int j) { return values[(size_t)n * dim + j]; }
  double at(int n, int j) const { return values[(size_t)n * dim + j]; }
};

// Frequency-domain counterpart, row i = coefficient X_i for every dimension.
struct Spectrum {
  int horizon = 0;
  int dim = 0;
  std::vector<double> coeffs;

  Spectrum() = default;
  Spectrum(int n, int d) : horizon(n), dim(d), coeffs((size_t)n * d, 0.0) {}

  double& at(int i, int j) { return coeffs[(size_t)i * dim + j]; }
  double at(int i, int j) const { return coeffs[(size_t)i * dim + j]; }
};

// Per-dimension energy shares bucketed by coefficient-index fraction.
// energy is row-major [dim x B] with B = band_edges.size() - 1; each row sums
// to 1.
struct BandEnergyTable {
  int dim = 0;
  std::vector<double> band_edges;
  std::vector<double> energy;

  int bands() const { return (int)band_edges.size() - 1; }
  double at(int j, int b) const { return energy[(size_t)j * bands() + b]; }
};

// Shape/finiteness checks; throw DataError naming the offending entry.
void validate(const Trajectory& traj);
void validate(const Spectrum& spec);

// Unnormalized forward transform: X_i = sum_n x_n cos(pi/N (n+1/2) i).
Spectrum dct_forward(const Trajectory& traj);

// Level-k reconstruction y^k_n = 1/N [X_0 + 2 sum_{i=1}^{k-1} X_i cos(...)].
// k=0 gives the zero trajectory, k=N is lossless.
Trajectory idct_k(const Spectrum& spec, int k);

// Keeps rows 0..k-1, zeroes the rest.
Spectrum truncate(const Spectrum& spec, int k);

// Share of squared-coefficient energy held by indices 0..floor((N-1)*p/100),
// one value per dimension. A dimension with no energy reports 1.
std::vector<double> energy_proportion(const Spectrum& spec, double p);

BandEnergyTable band_energy_table(const std::vector<Trajectory>& dataset,
                                  const std::vector<double>& band_edges);

// Sum of squared entries.
double time_energy(const Trajectory& traj);

// X_0^2 + 2 sum_{i>=1} X_i^2 over all dimensions; equals N * time_energy of
// the source trajectory (Parseval for this transform pair).
double spectral_energy(const Spectrum& spec);

// Total squared second difference with reflective ends (x_{-1}=x_0,
// x_N=x_{N-1}), summed over dimensions. Nonincreasing as the reconstruction
// level drops.
double smoothness(const Trajectory& traj);

// CSV round trips render doubles with 17 significant digits (bit-faithful).
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& text);
std::string spectrum_to_csv(const Spectrum& spec);
Spectrum spectrum_from_csv(const std::string& text);
std::string band_table_to_csv(const BandEnergyTable& table);
BandEnergyTable band_table_from_csv(const std::string& text);

}  // namespace freqact
