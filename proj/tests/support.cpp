#include "support.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace lockin::test {

namespace {

struct Bundle {
  std::unique_ptr<CascadeModel> model;
  Gauge gauge;
  std::unique_ptr<CycleFamily> family;
  std::unique_ptr<DomainRun> domain;
};

std::mutex mu;
std::map<std::string, Bundle> cache;

Bundle& bundle(const std::string& preset) {
  Bundle& b = cache[preset];
  if (!b.model) {
    b.model = std::make_unique<CascadeModel>(default_inverter_model(InverterParams::preset(preset)));
    b.gauge = build_gauge(b.model->A());
  }
  return b;
}

}  // namespace

const CascadeModel& model(const std::string& preset) {
  std::lock_guard lock(mu);
  return *bundle(preset).model;
}

const Gauge& gauge(const std::string& preset) {
  std::lock_guard lock(mu);
  return bundle(preset).gauge;
}

const CycleFamily& family(const std::string& preset) {
  std::lock_guard lock(mu);
  Bundle& b = bundle(preset);
  if (!b.family) b.family = std::make_unique<CycleFamily>(build_family(b.gauge, *b.model));
  return *b.family;
}

const DomainRun& domain(const std::string& preset) {
  const CycleFamily& fam = family(preset);
  std::lock_guard lock(mu);
  Bundle& b = bundle(preset);
  if (!b.domain) b.domain = std::make_unique<DomainRun>(estimate_domain(fam, b.gauge, *b.model));
  return *b.domain;
}

CcState random_on_ellipsoid(const Gauge& g, double V, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec4 u(n(rng), n(rng), n(rng), n(rng));
  return ellipsoid_point(g, V, u.normalized());
}

CcState random_in_ellipsoid(const Gauge& g, double V, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Radius law r^4 for a uniform fill of the 4-ball.
  const double r = std::pow(u(rng), 0.25);
  return random_on_ellipsoid(g, V * r * r, rng);
}

double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace lockin::test
