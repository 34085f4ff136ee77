#include "elastoreg/jsoncfg.hpp"

#include "elastoreg/textio.hpp"

namespace elastoreg::jsoncfg {

namespace {

template <typename T>
void get_if_present(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

[[noreturn]] void bad(const std::string& what, const json::exception& e) {
  throw config_error("malformed " + what + ": " + e.what());
}

}  // namespace

json to_json(const net::ArchConfig& a) {
  return json{{"encoder_widths", a.encoder_widths},
              {"tnet_mlp_widths", a.tnet_mlp_widths},
              {"tnet_fc_widths", a.tnet_fc_widths},
              {"trunk_widths", a.trunk_widths},
              {"trunk_out_width", a.trunk_out_width},
              {"use_tnet", a.use_tnet},
              {"concat_transformed_coords", a.concat_transformed_coords},
              {"coord_scale", a.coord_scale},
              {"stress_scale_kPa", a.stress_scale_kPa}};
}

net::ArchConfig arch_from_json(const json& j) {
  net::ArchConfig a;
  try {
    get_if_present(j, "encoder_widths", a.encoder_widths);
    get_if_present(j, "tnet_mlp_widths", a.tnet_mlp_widths);
    get_if_present(j, "tnet_fc_widths", a.tnet_fc_widths);
    get_if_present(j, "trunk_widths", a.trunk_widths);
    get_if_present(j, "trunk_out_width", a.trunk_out_width);
    get_if_present(j, "use_tnet", a.use_tnet);
    get_if_present(j, "concat_transformed_coords", a.concat_transformed_coords);
    get_if_present(j, "coord_scale", a.coord_scale);
    get_if_present(j, "stress_scale_kPa", a.stress_scale_kPa);
  } catch (const json::exception& e) {
    bad("architecture config", e);
  }
  if (a.encoder_widths.empty() || a.trunk_widths.empty() || a.trunk_out_width < 1 ||
      a.coord_scale <= 0.0 || a.stress_scale_kPa <= 0.0) {
    throw config_error("invalid architecture config values");
  }
  return a;
}

json to_json(const elast::MaterialConfig& m) {
  return json{{"E_rigid_kPa", m.E_rigid_kPa}, {"E_soft_kPa", m.E_soft_kPa}, {"nu", m.nu}};
}

elast::MaterialConfig material_from_json(const json& j) {
  elast::MaterialConfig m;
  try {
    get_if_present(j, "E_rigid_kPa", m.E_rigid_kPa);
    get_if_present(j, "E_soft_kPa", m.E_soft_kPa);
    get_if_present(j, "nu", m.nu);
  } catch (const json::exception& e) {
    bad("material config", e);
  }
  if (m.E_rigid_kPa <= 0.0 || m.E_soft_kPa <= 0.0 || m.nu <= 0.0 || m.nu >= 0.5) {
    throw config_error("invalid material config: need E > 0 and 0 < nu < 0.5");
  }
  return m;
}

json to_json(const engine::TrainConfig& c) {
  return json{{"weight_w", c.weight_w},
              {"optimizer",
               {{"kind", c.optimizer.kind},
                {"step_size", c.optimizer.step_size},
                {"beta1", c.optimizer.beta1},
                {"beta2", c.optimizer.beta2},
                {"eps", c.optimizer.eps}}},
              {"steps", c.steps},
              {"seed", c.seed},
              {"chamfer_subset", c.chamfer_subset == engine::ChamferSubset::All ? "all" : "surface"},
              {"material", to_json(c.material)},
              {"use_pde_terms", c.use_pde_terms},
              {"pde_term_weights", c.pde_term_weights},
              {"arch", to_json(c.arch)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size}};
}

engine::TrainConfig train_config_from_json(const json& j) {
  engine::TrainConfig c;
  try {
    get_if_present(j, "weight_w", c.weight_w);
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      get_if_present(o, "kind", c.optimizer.kind);
      get_if_present(o, "step_size", c.optimizer.step_size);
      get_if_present(o, "beta1", c.optimizer.beta1);
      get_if_present(o, "beta2", c.optimizer.beta2);
      get_if_present(o, "eps", c.optimizer.eps);
    }
    get_if_present(j, "steps", c.steps);
    get_if_present(j, "seed", c.seed);
    if (j.contains("chamfer_subset")) {
      const auto s = j.at("chamfer_subset").get<std::string>();
      if (s == "all") {
        c.chamfer_subset = engine::ChamferSubset::All;
      } else if (s == "surface") {
        c.chamfer_subset = engine::ChamferSubset::Surface;
      } else {
        throw config_error("chamfer_subset must be 'all' or 'surface'");
      }
    }
    if (j.contains("material")) c.material = material_from_json(j.at("material"));
    get_if_present(j, "use_pde_terms", c.use_pde_terms);
    get_if_present(j, "pde_term_weights", c.pde_term_weights);
    if (j.contains("arch")) c.arch = arch_from_json(j.at("arch"));
    get_if_present(j, "epochs", c.epochs);
    get_if_present(j, "batch_size", c.batch_size);
  } catch (const json::exception& e) {
    bad("train config", e);
  }
  if (c.steps < 1) throw config_error("steps must be >= 1");
  if (c.weight_w <= 0.0) throw config_error("weight_w must be positive");
  if (c.optimizer.kind != "adam" && c.optimizer.kind != "sgd") {
    throw config_error("optimizer kind must be adam or sgd");
  }
  if (c.epochs < 1 || c.batch_size < 1) throw config_error("epochs and batch_size must be >= 1");
  return c;
}

json to_json(const synth::Scenario& s) {
  json j{{"name", s.name},
         {"radii", {s.radii(0), s.radii(1), s.radii(2)}},
         {"n_surface", s.n_surface},
         {"n_internal", s.n_internal},
         {"soft_fraction", s.soft_fraction},
         {"deformation", synth::to_string(s.deformation)},
         {"magnitude_mm", s.magnitude_mm},
         {"seed", s.seed},
         {"falloff_mm", s.falloff_mm},
         {"rigid_offset_mm", s.rigid_offset_mm},
         {"contact_direction",
          {s.contact_direction(0), s.contact_direction(1), s.contact_direction(2)}}};
  if (s.strain_matrix) {
    json rows = json::array();
    for (int i = 0; i < 3; ++i) {
      rows.push_back({(*s.strain_matrix)(i, 0), (*s.strain_matrix)(i, 1), (*s.strain_matrix)(i, 2)});
    }
    j["strain_matrix"] = rows;
  }
  return j;
}

synth::Scenario scenario_from_json(const json& j) {
  synth::Scenario s;
  try {
    get_if_present(j, "name", s.name);
    if (j.contains("radii")) {
      const auto r = j.at("radii").get<std::vector<double>>();
      if (r.size() != 3) throw config_error("radii must have 3 entries");
      s.radii = geom::Vec3(r[0], r[1], r[2]);
    }
    get_if_present(j, "n_surface", s.n_surface);
    get_if_present(j, "n_internal", s.n_internal);
    get_if_present(j, "soft_fraction", s.soft_fraction);
    if (j.contains("deformation")) {
      s.deformation = synth::field_kind_from_string(j.at("deformation").get<std::string>());
    }
    get_if_present(j, "magnitude_mm", s.magnitude_mm);
    get_if_present(j, "seed", s.seed);
    get_if_present(j, "falloff_mm", s.falloff_mm);
    get_if_present(j, "rigid_offset_mm", s.rigid_offset_mm);
    if (j.contains("contact_direction")) {
      const auto d = j.at("contact_direction").get<std::vector<double>>();
      if (d.size() != 3) throw config_error("contact_direction must have 3 entries");
      s.contact_direction = geom::Vec3(d[0], d[1], d[2]);
    }
    if (j.contains("strain_matrix")) {
      Eigen::Matrix3d m;
      const auto rows = j.at("strain_matrix");
      if (rows.size() != 3) throw config_error("strain_matrix must have 3 rows");
      for (int i = 0; i < 3; ++i) {
        const auto row = rows[static_cast<std::size_t>(i)].get<std::vector<double>>();
        if (row.size() != 3) throw config_error("strain_matrix rows must have 3 entries");
        for (int k = 0; k < 3; ++k) m(i, k) = row[static_cast<std::size_t>(k)];
      }
      s.strain_matrix = m;
    }
  } catch (const json::exception& e) {
    bad("scenario", e);
  }
  if (s.radii.minCoeff() <= 0.0) throw config_error("scenario radii must be positive");
  if (s.n_surface + s.n_internal < 4) throw config_error("scenario needs at least 4 points");
  if (s.soft_fraction <= 0.0 || s.soft_fraction >= 1.0) {
    throw config_error("soft_fraction must lie in (0, 1)");
  }
  return s;
}

json parse_file(const std::filesystem::path& path) {
  try {
    return json::parse(textio::read_text_file(path));
  } catch (const json::exception& e) {
    throw config_error("cannot parse JSON file " + path.string() + ": " + e.what());
  }
}

std::string config_hash(const json& j) {
  return textio::hex64(textio::fnv1a64(j.dump()));
}

}  // namespace elastoreg::jsoncfg
