#pragma once

#include <random>

#include "lockin/domain.hpp"
#include "lockin/family.hpp"
#include "lockin/sim.hpp"

namespace lockin::test {

/// Lazily built and cached per preset ("version-I" / "version-II").
const CascadeModel& model(const std::string& preset = "version-I");
const Gauge& gauge(const std::string& preset = "version-I");
const CycleFamily& family(const std::string& preset = "version-I");
const DomainRun& domain(const std::string& preset = "version-I");

/// Uniform point in the ellipsoid {x^T P x <= V}.
CcState random_in_ellipsoid(const Gauge& g, double V, std::mt19937_64& rng);
/// Uniform point on {x^T P x = V}.
CcState random_on_ellipsoid(const Gauge& g, double V, std::mt19937_64& rng);

double rel_err(double a, double b, double floor = 1e-300);

}  // namespace lockin::test
