#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "lockin/error.hpp"

namespace lockin::cli {

using nlohmann::json;

namespace {

class LinearTestCoupling final : public PllCoupling {
 public:
  double g(double dtheta, double) const override { return std::sin(dtheta); }
  Vec2 g_grad(double dtheta, double) const override { return Vec2(std::cos(dtheta), 0.0); }
  Vec4 h(double) const override { return Vec4::Zero(); }
  Vec4 h_prime(double) const override { return Vec4::Zero(); }
};

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); }

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) invalid(where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) invalid("unknown key '" + where + "." + k + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    invalid(std::string("bad value for '") + key + "'");
  }
}

void positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) invalid(std::string(name) + " must be positive");
}

void parse_model(const json& m, RunConfig& cfg) {
  only_keys(m, "model", {"preset", "params", "plugin", "A", "k_p", "k_i"});
  if (m.contains("plugin")) {
    const std::string id = m.at("plugin").get<std::string>();
    if (id != "linear-test") invalid("unknown plugin '" + id + "'");
    LinearTestPlugin p;
    if (!m.contains("A") || !m.at("A").is_array() || m.at("A").size() != 4) {
      invalid("plugin linear-test needs a 4x4 matrix A");
    }
    for (int i = 0; i < 4; ++i) {
      const json& row = m.at("A")[i];
      if (!row.is_array() || row.size() != 4) invalid("A must be 4x4");
      for (int j = 0; j < 4; ++j) p.A(i, j) = row[j].get<double>();
    }
    read(m, "k_p", p.k_p);
    read(m, "k_i", p.k_i);
    positive(p.k_p, "k_p");
    positive(p.k_i, "k_i");
    cfg.plugin = p;
    return;
  }
  read(m, "preset", cfg.preset);
  cfg.params = InverterParams::preset(cfg.preset);
  if (!m.contains("params")) return;
  const json& q = m.at("params");
  only_keys(q, "model.params", {"kappa_p", "kappa_i", "L_f", "R_f", "i_d_ref", "i_q_ref",
                                "omega_g", "L_g", "R_g", "v_g_norm", "k_p", "k_i"});
  InverterParams& p = cfg.params;
  read(q, "kappa_p", p.kappa_p);
  read(q, "kappa_i", p.kappa_i);
  read(q, "L_f", p.L_f);
  read(q, "R_f", p.R_f);
  read(q, "i_d_ref", p.i_dq_ref.x());
  read(q, "i_q_ref", p.i_dq_ref.y());
  read(q, "omega_g", p.omega_g);
  read(q, "L_g", p.L_g);
  read(q, "R_g", p.R_g);
  read(q, "v_g_norm", p.v_g_norm);
  read(q, "k_p", p.k_p);
  read(q, "k_i", p.k_i);
  p.validate();
}

}  // namespace

RunConfig parse_config(const json& doc) {
  only_keys(doc, "config",
            {"schema_version", "model", "gauge", "family", "growth", "sim", "fixture", "output"});
  if (!doc.contains("schema_version")) invalid("missing schema_version");
  if (doc.at("schema_version") != kSchemaVersion) {
    invalid("unsupported schema_version " + doc.at("schema_version").dump());
  }
  RunConfig cfg;
  if (doc.contains("model")) parse_model(doc.at("model"), cfg);
  if (doc.contains("gauge")) {
    const json& g = doc.at("gauge");
    only_keys(g, "gauge", {"margin", "eps_margin"});
    read(g, "margin", cfg.gauge_margin);
    read(g, "eps_margin", cfg.eps_margin);
  }
  if (doc.contains("family")) {
    const json& f = doc.at("family");
    only_keys(f, "family", {"V_seed", "V_step_min", "cycle_tol", "band_margin"});
    read(f, "V_seed", cfg.family.V_seed);
    read(f, "V_step_min", cfg.family.V_step_min);
    read(f, "cycle_tol", cfg.family.cycle_tol);
    read(f, "band_margin", cfg.family.band_margin);
  }
  if (doc.contains("growth")) {
    const json& g = doc.at("growth");
    only_keys(g, "growth", {"vcc_levels", "safety_factor"});
    read(g, "vcc_levels", cfg.growth.vcc_levels);
    read(g, "safety_factor", cfg.growth.safety_factor);
  }
  if (doc.contains("sim")) {
    const json& s = doc.at("sim");
    only_keys(s, "sim", {"N", "seed", "horizon", "inset", "audit_N", "dump_trajectories", "initial"});
    read(s, "N", cfg.N);
    read(s, "seed", cfg.seed);
    read(s, "horizon", cfg.horizon);
    read(s, "inset", cfg.inset);
    read(s, "audit_N", cfg.audit_N);
    read(s, "dump_trajectories", cfg.dump_trajectories);
    if (s.contains("initial")) {
      const json& v = s.at("initial");
      if (!v.is_array() || v.size() != 6) invalid("sim.initial needs 6 numbers");
      Vec6 x;
      for (int i = 0; i < 6; ++i) x[i] = v[i].get<double>();
      cfg.initial = x;
    }
  }
  if (doc.contains("fixture")) {
    const json& x = doc.at("fixture");
    only_keys(x, "fixture", {"phi_inflation"});
    read(x, "phi_inflation", cfg.phi_inflation);
  }
  if (doc.contains("output")) cfg.output = doc.at("output").get<std::string>();

  if (!(cfg.gauge_margin > 0.0 && cfg.gauge_margin < 1.0)) invalid("gauge.margin must be in (0, 1)");
  if (!(cfg.eps_margin > 0.0 && cfg.eps_margin < 1.0)) invalid("gauge.eps_margin must be in (0, 1)");
  if (cfg.family.V_seed < 0.0) invalid("family.V_seed must be >= 0");
  positive(cfg.family.V_step_min, "family.V_step_min");
  positive(cfg.family.cycle_tol, "family.cycle_tol");
  positive(cfg.family.band_margin, "family.band_margin");
  if (cfg.growth.vcc_levels < 2) invalid("growth.vcc_levels must be >= 2");
  if (!(cfg.growth.safety_factor >= 1.0)) invalid("growth.safety_factor must be >= 1");
  if (cfg.N < 0 || cfg.audit_N < 0) invalid("sim.N and sim.audit_N must be >= 0");
  if (cfg.horizon < 0.0) invalid("sim.horizon must be >= 0 (0 picks the default)");
  if (!(cfg.inset >= 0.0 && cfg.inset < 1.0)) invalid("sim.inset must be in [0, 1)");
  positive(cfg.phi_inflation, "fixture.phi_inflation");
  cfg.family.eps_margin = cfg.eps_margin;
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    invalid(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json default_config_json(const std::string& preset) {
  const RunConfig d;
  const InverterParams p = InverterParams::preset(preset);
  return json{
      {"schema_version", kSchemaVersion},
      {"model",
       {{"preset", preset},
        {"params",
         {{"kappa_p", p.kappa_p}, {"kappa_i", p.kappa_i}, {"L_f", p.L_f}, {"R_f", p.R_f},
          {"i_d_ref", p.i_dq_ref.x()}, {"i_q_ref", p.i_dq_ref.y()}, {"omega_g", p.omega_g},
          {"L_g", p.L_g}, {"R_g", p.R_g}, {"v_g_norm", p.v_g_norm}, {"k_p", p.k_p},
          {"k_i", p.k_i}}}}},
      {"gauge", {{"margin", d.gauge_margin}, {"eps_margin", d.eps_margin}}},
      {"family",
       {{"V_seed", d.family.V_seed}, {"V_step_min", d.family.V_step_min},
        {"cycle_tol", d.family.cycle_tol}, {"band_margin", d.family.band_margin}}},
      {"growth", {{"vcc_levels", d.growth.vcc_levels}, {"safety_factor", d.growth.safety_factor}}},
      {"sim",
       {{"N", d.N}, {"seed", d.seed}, {"horizon", d.horizon}, {"inset", d.inset},
        {"audit_N", d.audit_N}, {"dump_trajectories", d.dump_trajectories}}},
      {"fixture", {{"phi_inflation", d.phi_inflation}}},
      {"output", d.output.string()},
  };
}

CascadeModel build_model(const RunConfig& cfg) {
  if (cfg.plugin) {
    return CascadeModel(cfg.plugin->A, cfg.plugin->k_p, cfg.plugin->k_i, 1.0, Vec4::Zero(),
                        std::make_shared<LinearTestCoupling>(), "linear-test");
  }
  return default_inverter_model(cfg.params);
}

}  // namespace lockin::cli
