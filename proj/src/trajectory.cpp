#include "freqact/trajectory.hpp"

#include <cmath>
#include <string>

#include "freqact/csv.hpp"
#include "freqact/errors.hpp"

namespace freqact {

namespace {

void check_shape(int horizon, int dim, size_t len, const char* what) {
  if (horizon < 1 || dim < 1)
    throw DataError(std::string(what) + ": horizon and dim must be >= 1");
  if (len != (size_t)horizon * dim)
    throw DataError(std::string(what) + ": storage size mismatch");
}

void check_finite(const std::vector<double>& v, int dim, const char* what) {
  for (size_t idx = 0; idx < v.size(); ++idx) {
    if (!std::isfinite(v[idx]))
      throw DataError(std::string(what) + ": non-finite entry at row " +
                      std::to_string(idx / dim) + ", col " +
                      std::to_string(idx % dim));
  }
}

}  // namespace

void validate(const Trajectory& traj) {
  check_shape(traj.horizon, traj.dim, traj.values.size(), "trajectory");
  check_finite(traj.values, traj.dim, "trajectory");
  if (!traj.scale.empty()) {
    if ((int)traj.scale.size() != traj.dim ||
        (int)traj.offset.size() != traj.dim)
      throw DataError("trajectory: normalization metadata length mismatch");
    for (int j = 0; j < traj.dim; ++j)
      if (!(traj.scale[j] > 0.0))
        throw DataError("trajectory: scale must be positive at dim " +
                        std::to_string(j));
  }
}

void validate(const Spectrum& spec) {
  check_shape(spec.horizon, spec.dim, spec.coeffs.size(), "spectrum");
  check_finite(spec.coeffs, spec.dim, "spectrum");
}

Spectrum dct_forward(const Trajectory& traj) {
  validate(traj);
  const int n = traj.horizon, d = traj.dim;
  Spectrum spec(n, d);
  const double w = M_PI / n;
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < n; ++t) {
      const double c = std::cos(w * (t + 0.5) * i);
      for (int j = 0; j < d; ++j) spec.at(i, j) += traj.at(t, j) * c;
    }
  }
  return spec;
}

Trajectory idct_k(const Spectrum& spec, int k) {
  validate(spec);
  const int n = spec.horizon, d = spec.dim;
  if (k < 0 || k > n)
    throw DataError("idct_k: level " + std::to_string(k) +
                    " outside [0, " + std::to_string(n) + "]");
  Trajectory traj(n, d);
  if (k == 0) return traj;
  const double w = M_PI / n;
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j < d; ++j) traj.at(t, j) = spec.at(0, j);
    for (int i = 1; i < k; ++i) {
      const double c = 2.0 * std::cos(w * (t + 0.5) * i);
      for (int j = 0; j < d; ++j) traj.at(t, j) += c * spec.at(i, j);
    }
    for (int j = 0; j < d; ++j) traj.at(t, j) /= n;
  }
  return traj;
}

Spectrum truncate(const Spectrum& spec, int k) {
  validate(spec);
  if (k < 0 || k > spec.horizon)
    throw DataError("truncate: level " + std::to_string(k) + " outside [0, " +
                    std::to_string(spec.horizon) + "]");
  Spectrum out(spec.horizon, spec.dim);
  std::copy(spec.coeffs.begin(), spec.coeffs.begin() + (size_t)k * spec.dim,
            out.coeffs.begin());
  return out;
}

std::vector<double> energy_proportion(const Spectrum& spec, double p) {
  validate(spec);
  if (!(p >= 0.0 && p <= 100.0))
    throw DataError("energy_proportion: p outside [0, 100]");
  const int n = spec.horizon, d = spec.dim;
  const int cut = (int)std::floor((n - 1) * p / 100.0);
  std::vector<double> out(d, 1.0);
  for (int j = 0; j < d; ++j) {
    double kept = 0.0, total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = spec.at(i, j) * spec.at(i, j);
      total += e;
      if (i <= cut) kept += e;
    }
    if (total > 0.0) out[j] = kept / total;
  }
  return out;
}

BandEnergyTable band_energy_table(const std::vector<Trajectory>& dataset,
                                  const std::vector<double>& band_edges) {
  if (dataset.empty()) throw DataError("band_energy_table: empty dataset");
  if (band_edges.size() < 2)
    throw DataError("band_energy_table: need at least two band edges");
  if (band_edges.front() != 0.0 || band_edges.back() != 1.0)
    throw DataError("band_energy_table: edges must run from 0 to 1");
  for (size_t b = 1; b < band_edges.size(); ++b)
    if (!(band_edges[b] > band_edges[b - 1]))
      throw DataError("band_energy_table: edges must be strictly increasing");

  const int d = dataset[0].dim;
  const int nb = (int)band_edges.size() - 1;
  BandEnergyTable table;
  table.dim = d;
  table.band_edges = band_edges;
  table.energy.assign((size_t)d * nb, 0.0);

  for (const Trajectory& traj : dataset) {
    if (traj.dim != d)
      throw DataError("band_energy_table: mixed action dimensions");
    Spectrum spec = dct_forward(traj);
    const int n = spec.horizon;
    for (int i = 0; i < n; ++i) {
      const double frac = (double)i / n;
      int b = nb - 1;
      for (int e = 1; e <= nb; ++e) {
        if (frac < band_edges[e]) {
          b = e - 1;
          break;
        }
      }
      for (int j = 0; j < d; ++j)
        table.energy[(size_t)j * nb + b] += spec.at(i, j) * spec.at(i, j);
    }
  }
  for (int j = 0; j < d; ++j) {
    double total = 0.0;
    for (int b = 0; b < nb; ++b) total += table.energy[(size_t)j * nb + b];
    if (total > 0.0) {
      for (int b = 0; b < nb; ++b) table.energy[(size_t)j * nb + b] /= total;
    } else {
      table.energy[(size_t)j * nb] = 1.0;
    }
  }
  return table;
}

double time_energy(const Trajectory& traj) {
  double s = 0.0;
  for (double v : traj.values) s += v * v;
  return s;
}

double spectral_energy(const Spectrum& spec) {
  double s = 0.0;
  for (int i = 0; i < spec.horizon; ++i) {
    const double w = (i == 0) ? 1.0 : 2.0;
    for (int j = 0; j < spec.dim; ++j)
      s += w * spec.at(i, j) * spec.at(i, j);
  }
  return s;
}

double smoothness(const Trajectory& traj) {
  const int n = traj.horizon, d = traj.dim;
  double s = 0.0;
  for (int t = 0; t < n; ++t) {
    const int tm = t > 0 ? t - 1 : 0;
    const int tp = t < n - 1 ? t + 1 : n - 1;
    for (int j = 0; j < d; ++j) {
      const double diff = traj.at(tp, j) - 2.0 * traj.at(t, j) + traj.at(tm, j);
      s += diff * diff;
    }
  }
  return s;
}

namespace {

std::string matrix_to_csv(const char* index_name, const std::vector<double>& m,
                          int rows, int cols) {
  std::string out(index_name);
  for (int j = 0; j < cols; ++j) out += ",dim" + std::to_string(j);
  out += "\n";
  for (int r = 0; r < rows; ++r) {
    out += std::to_string(r);
    for (int j = 0; j < cols; ++j)
      out += "," + csv::fmt(m[(size_t)r * cols + j]);
    out += "\n";
  }
  return out;
}

std::vector<double> matrix_from_csv(const std::string& text,
                                    const char* index_name, const char* what,
                                    int* rows, int* cols) {
  auto ls = csv::lines(text);
  if (ls.empty()) throw DataError(std::string(what) + ": empty csv");
  auto header = csv::split(ls[0]);
  if (header.size() < 2 || header[0] != index_name)
    throw DataError(std::string(what) + ": bad header '" + ls[0] + "'");
  const int d = (int)header.size() - 1;
  for (int j = 0; j < d; ++j)
    if (header[j + 1] != "dim" + std::to_string(j))
      throw DataError(std::string(what) + ": bad header column " +
                      std::to_string(j + 1));
  const int n = (int)ls.size() - 1;
  std::vector<double> m((size_t)n * d);
  for (int r = 0; r < n; ++r) {
    auto fields = csv::split(ls[r + 1]);
    const std::string ctx = std::string(what) + " row " + std::to_string(r);
    if ((int)fields.size() != d + 1)
      throw DataError(ctx + ": expected " + std::to_string(d + 1) +
                      " fields, got " + std::to_string(fields.size()));
    if (csv::parse_long(fields[0], ctx) != r)
      throw DataError(ctx + ": index out of order");
    for (int j = 0; j < d; ++j)
      m[(size_t)r * d + j] = csv::parse_double(fields[j + 1], ctx);
  }
  *rows = n;
  *cols = d;
  return m;
}

}  // namespace

std::string trajectory_to_csv(const Trajectory& traj) {
  validate(traj);
  return matrix_to_csv("t", traj.values, traj.horizon, traj.dim);
}

Trajectory trajectory_from_csv(const std::string& text) {
  Trajectory traj;
  traj.values =
      matrix_from_csv(text, "t", "trajectory", &traj.horizon, &traj.dim);
  validate(traj);
  return traj;
}

std::string spectrum_to_csv(const Spectrum& spec) {
  validate(spec);
  return matrix_to_csv("i", spec.coeffs, spec.horizon, spec.dim);
}

Spectrum spectrum_from_csv(const std::string& text) {
  Spectrum spec;
  spec.coeffs =
      matrix_from_csv(text, "i", "spectrum", &spec.horizon, &spec.dim);
  validate(spec);
  return spec;
}

std::string band_table_to_csv(const BandEnergyTable& table) {
  std::string out = "edges";
  for (double e : table.band_edges) out += "," + csv::fmt(e);
  out += "\ndim";
  for (int b = 0; b < table.bands(); ++b) out += ",band" + std::to_string(b);
  out += "\n";
  for (int j = 0; j < table.dim; ++j) {
    out += std::to_string(j);
    for (int b = 0; b < table.bands(); ++b)
      out += "," + csv::fmt(table.at(j, b));
    out += "\n";
  }
  return out;
}

BandEnergyTable band_table_from_csv(const std::string& text) {
  auto ls = csv::lines(text);
  if (ls.size() < 3) throw DataError("band table: truncated csv");
  auto edge_fields = csv::split(ls[0]);
  if (edge_fields.size() < 3 || edge_fields[0] != "edges")
    throw DataError("band table: bad edge header");
  BandEnergyTable table;
  for (size_t e = 1; e < edge_fields.size(); ++e)
    table.band_edges.push_back(
        csv::parse_double(edge_fields[e], "band table edges"));
  const int nb = (int)table.band_edges.size() - 1;
  auto col_fields = csv::split(ls[1]);
  if ((int)col_fields.size() != nb + 1 || col_fields[0] != "dim")
    throw DataError("band table: bad column header");
  table.dim = (int)ls.size() - 2;
  table.energy.assign((size_t)table.dim * nb, 0.0);
  for (int j = 0; j < table.dim; ++j) {
    auto fields = csv::split(ls[j + 2]);
    const std::string ctx = "band table row " + std::to_string(j);
    if ((int)fields.size() != nb + 1)
      throw DataError(ctx + ": field count mismatch");
    if (csv::parse_long(fields[0], ctx) != j)
      throw DataError(ctx + ": index out of order");
    for (int b = 0; b < nb; ++b)
      table.energy[(size_t)j * nb + b] = csv::parse_double(fields[b + 1], ctx);
  }
  return table;
}

}  // namespace freqact
