#include "lockin/growth.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "lockin/csv.hpp"
#include "lockin/error.hpp"

namespace lockin {

namespace {

// Extremal f at s over {V^CC <= vcc} in the direction that maximizes c * f.
double extremal_f(PllState s, double vcc, double c, const Gauge& gauge, const CascadeModel& m,
                  const ExtremalPoint* warm, ExtremalPoint* used, const KktOptions& kkt) {
  if (vcc == 0.0 || c == 0.0) return eval_f(s, Vec4::Zero(), m);
  const Sense sense = c > 0.0 ? Sense::Max : Sense::Min;
  const ExtremalPoint* w = (warm != nullptr && warm->sense == sense) ? warm : nullptr;
  ExtremalPoint p = solve_kkt(s, vcc, sense, gauge, m, w, kkt);
  if (used != nullptr) *used = p;
  return p.f_value;
}

std::size_t bracket(const std::vector<double>& g, double v) {
  // Index i with g[i] <= v <= g[i+1].
  auto it = std::upper_bound(g.begin(), g.end(), v);
  std::size_t i = it == g.begin() ? 0 : static_cast<std::size_t>(it - g.begin()) - 1;
  return std::min(i, g.size() - 2);
}

}  // namespace

std::vector<double> default_vcc_grid(double V_bar, const GrowthOptions& opts) {
  std::vector<double> g{0.0};
  const int n = std::max(opts.vcc_levels, 2);
  const double lo = std::log(opts.vcc_min_factor * V_bar);
  const double hi = std::log(opts.vcc_max_factor * V_bar);
  for (int i = 0; i < n; ++i) g.push_back(std::exp(lo + (hi - lo) * i / (n - 1)));
  return g;
}

double growth_summand(const CycleSample& sample, double vcc, const Gauge& gauge,
                      const CascadeModel& m, const ExtremalPoint* warm, ExtremalPoint* used,
                      const KktOptions& kkt) {
  const Vec2 g = sample.grad;
  const double c = -(m.k_p() * g.x() + m.k_i() * g.y());
  const double f = extremal_f(sample.s, vcc, c, gauge, m, warm, used, kkt);
  return g.x() * sample.s.domega + c * f;
}

GrowthBound tabulate(const CycleFamily& fam, const Gauge& gauge, const CascadeModel& m,
                     const std::vector<double>& vcc_grid, const GrowthOptions& opts) {
  if (fam.cycles.size() < 2) throw Error(ErrorKind::EmptyFamily, "growth bound needs a family");
  if (vcc_grid.size() < 2 || vcc_grid.front() != 0.0 ||
      !std::is_sorted(vcc_grid.begin(), vcc_grid.end())) {
    throw Error(ErrorKind::ConfigInvalid, "vcc grid must start at 0 and increase");
  }
  if (vcc_grid.back() >= fam.V_safe) {
    throw Error(ErrorKind::OutOfRange, "vcc grid reaches the singularity clearance");
  }
  for (const LimitCycle& c : fam.cycles) {
    if (!c.has_grad) throw Error(ErrorKind::OutOfRange, "growth bound needs cycle gradients");
  }

  GrowthBound gb;
  gb.vcc_grid = vcc_grid;
  gb.safety_factor = opts.safety_factor;
  const std::size_t nv = fam.cycles.size();
  const std::size_t nw = vcc_grid.size();
  gb.values = MatrixXd::Constant(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nw),
                                 -std::numeric_limits<double>::infinity());
  const std::size_t stride = static_cast<std::size_t>(std::max(opts.sample_stride, 1));

  for (std::size_t k = 0; k < nv; ++k) {
    gb.vpll_grid.push_back(fam.cycles[k].V);
    // Row 0 evaluates the innermost cycle's gradients at the origin.
    const LimitCycle& src = k == 0 ? fam.cycles[1] : fam.cycles[k];
    for (std::size_t i = 0; i < src.samples.size(); i += stride) {
      CycleSample smp = src.samples[i];
      if (k == 0) smp.s = PllState{};
      ExtremalPoint warm_max, warm_min;
      bool have_max = false, have_min = false;
      for (std::size_t j = 0; j < nw; ++j) {
        const double c = -(m.k_p() * smp.grad.x() + m.k_i() * smp.grad.y());
        ExtremalPoint used;
        const ExtremalPoint* warm = c > 0.0 ? (have_max ? &warm_max : nullptr)
                                            : (have_min ? &warm_min : nullptr);
        const double v = growth_summand(smp, vcc_grid[j], gauge, m, warm, &used, opts.kkt);
        if (vcc_grid[j] > 0.0 && c != 0.0) {
          if (c > 0.0) {
            warm_max = used;
            have_max = true;
          } else {
            warm_min = used;
            have_min = true;
          }
        }
        auto& cell = gb.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
        cell = std::max(cell, v);
      }
    }
  }
  return gb;
}

double eval_F(double vpll, double vcc, const GrowthBound& gb) {
  const auto& P = gb.vpll_grid;
  const auto& W = gb.vcc_grid;
  if (!(vpll >= P.front() && vpll <= P.back())) {
    std::ostringstream os;
    os << "V^PLL " << vpll << " outside [" << P.front() << ", " << P.back() << "]";
    throw Error(ErrorKind::OutOfRange, os.str());
  }
  const double w = std::clamp(vcc, W.front(), W.back());
  const std::size_t i = bracket(P, vpll);
  const std::size_t j = bracket(W, w);
  const double a = (vpll - P[i]) / (P[i + 1] - P[i]);
  const double b = (w - W[j]) / (W[j + 1] - W[j]);
  const auto F = [&](std::size_t r, std::size_t c) {
    return gb.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  };
  return (1 - a) * (1 - b) * F(i, j) + a * (1 - b) * F(i + 1, j) + (1 - a) * b * F(i, j + 1) +
         a * b * F(i + 1, j + 1);
}

double eval_F_padded(double vpll, double vcc, const GrowthBound& gb) {
  const double F = eval_F(vpll, vcc, gb);
  return F + (gb.safety_factor - 1.0) * std::abs(F);
}

void write_growth_csv(std::ostream& os, const GrowthBound& gb) {
  write_csv_header(os, {"vpll", "vcc", "F"});
  for (std::size_t i = 0; i < gb.vpll_grid.size(); ++i) {
    for (std::size_t j = 0; j < gb.vcc_grid.size(); ++j) {
      write_csv_row(os, {gb.vpll_grid[i], gb.vcc_grid[j],
                         gb.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
    }
  }
}

}  // namespace lockin
