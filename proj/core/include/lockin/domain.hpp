#pragma once

#include <iosfwd>
#include <vector>

#include "lockin/growth.hpp"

namespace lockin {

/// Estimate {V^PLL <= Phi(V^CC)} in the (V^CC, V^PLL) plane.
struct DomainEstimate {
  double V_bar = 0.0;
  double V_bar_bar = 0.0;
  /// Non-increasing table, vcc[0] = 0, phi = V_bar on [0, V_bar], phi = 0 at
  /// V_bar_bar.
  std::vector<double> vcc;
  std::vector<double> phi;
};

DomainEstimate trivial_estimate(double V_bar);

struct PhiOptions {
  /// Table spacing cap as a fraction of V_bar.
  double max_spacing_fraction = 1.0 / 200.0;
  double rtol = 1e-8;
  double atol = 1e-10;
};

/// Integrates Phi' = -F(Phi, V) / (gamma V), Phi(V_bar) = V_bar, to the right
/// with Phi clamped at V_bar; V_bar_bar is where Phi reaches 0.
/// Throws NoExtension if the clamp holds Phi at V_bar over the whole grid
/// (F < 0 there) and GridExhausted if the V^CC grid ends before Phi = 0,
/// which includes F = 0.
DomainEstimate solve_phi(const GrowthBound& gb, double gamma, double V_bar,
                         const PhiOptions& opts = {});

struct DomainRun {
  GrowthBound growth;
  DomainEstimate estimate;
  int extensions = 0;
};

/// tabulate + solve_phi; while the V^CC grid runs out first, widens the grid
/// tenfold (ten more levels each time) up to `max_extensions` times or the
/// singularity clearance.
DomainRun estimate_domain(const CycleFamily& fam, const Gauge& gauge, const CascadeModel& m,
                          GrowthOptions gopts = {}, const PhiOptions& popts = {},
                          int max_extensions = 8);

/// Phi by linear interpolation; negative beyond V_bar_bar.
double phi_at(const DomainEstimate& est, double vcc);

bool contains_levels(double vpll, double vcc, const DomainEstimate& est);

/// Membership V^PLL(dtheta, domega) <= Phi(V^CC(x)).
bool contains(PllState s, const CcState& x, const DomainEstimate& est, const CycleFamily& fam,
              const Gauge& gauge);

/// Copy with the vcc axis stretched beyond V_bar and Phi multiplied by
/// `phi_factor` (test fixture). Levels above V_bar are not capped.
DomainEstimate inflate(const DomainEstimate& est, double vcc_factor, double phi_factor);

/// CSV: vcc,phi
void write_domain_csv(std::ostream& os, const DomainEstimate& est);

/// Inverse of write_domain_csv; V_bar is phi[0] and V_bar_bar the last vcc.
DomainEstimate read_domain_csv(std::istream& is);

}  // namespace lockin
