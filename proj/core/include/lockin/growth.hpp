#pragma once

#include <iosfwd>
#include <vector>

#include "lockin/family.hpp"

namespace lockin {

struct GrowthOptions {
  int vcc_levels = 40;
  /// Log-spaced V^CC levels between these multiples of V_bar (plus 0).
  double vcc_min_factor = 1e-3;
  double vcc_max_factor = 10.0;
  double safety_factor = 1.02;
  /// Use every n-th cycle sample.
  int sample_stride = 5;
  KktOptions kkt;
};

/// F(V^PLL, V^CC) on the family levels x V^CC grid. Rows follow the family;
/// row 0 (V^PLL = 0) bounds the growth out of the origin with the gradients
/// of the innermost cycle.
struct GrowthBound {
  std::vector<double> vpll_grid;
  std::vector<double> vcc_grid;
  MatrixXd values;  // values(i, j) = F(vpll_grid[i], vcc_grid[j]), unpadded
  double safety_factor = 1.02;
};

std::vector<double> default_vcc_grid(double V_bar, const GrowthOptions& opts = {});

/// Maximum over the cycle of grad . (-k_p f + domega, -k_i f) with the inner
/// maximum over the ellipsoid reduced to an extremum of f: the objective is
/// affine in f with slope c = -(k_p grad_1 + k_i grad_2), so the maximizer of
/// f serves for c > 0 and the minimizer for c < 0.
GrowthBound tabulate(const CycleFamily& fam, const Gauge& gauge, const CascadeModel& m,
                     const std::vector<double>& vcc_grid, const GrowthOptions& opts = {});

/// Bilinear interpolation. vcc is clamped to the grid; vpll outside
/// [0, V_bar] throws OutOfRange.
double eval_F(double vpll, double vcc, const GrowthBound& gb);

/// eval_F inflated by the safety factor: F + (sf - 1) |F|.
double eval_F_padded(double vpll, double vcc, const GrowthBound& gb);

/// Growth at one cycle sample for a given ellipsoid level (the summand of
/// the tabulated maximum).
double growth_summand(const CycleSample& sample, double vcc, const Gauge& gauge,
                      const CascadeModel& m, const ExtremalPoint* warm = nullptr,
                      ExtremalPoint* used = nullptr, const KktOptions& kkt = {});

/// CSV: vpll,vcc,F
void write_growth_csv(std::ostream& os, const GrowthBound& gb);

}  // namespace lockin
