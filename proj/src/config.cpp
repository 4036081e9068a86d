#include "mlmoe/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "mlmoe/presets.hpp"

namespace mlmoe {

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

void require_map(const YAML::Node& node, const std::string& path) {
  if (!node.IsMap()) throw ConfigError(path, "expected a mapping");
}

void check_keys(const YAML::Node& node, const std::string& path, const std::set<std::string>& allowed) {
  require_map(node, path);
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError(join(path, key), "unknown key");
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) throw ConfigError(path, "expected a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, "cannot convert '" + node.Scalar() + "'");
  }
}

template <typename T>
void read_opt(const YAML::Node& parent, const std::string& path, const char* key, T& out) {
  const YAML::Node node = parent[key];
  if (node) out = scalar<T>(node, join(path, key));
}

std::vector<double> double_list(const YAML::Node& node, const std::string& path) {
  if (!node.IsSequence()) throw ConfigError(path, "expected a list");
  std::vector<double> out;
  for (std::size_t i = 0; i < node.size(); ++i) out.push_back(scalar<double>(node[i], index_path(path, i)));
  return out;
}

std::vector<int> int_list(const YAML::Node& node, const std::string& path) {
  if (!node.IsSequence()) throw ConfigError(path, "expected a list");
  std::vector<int> out;
  for (std::size_t i = 0; i < node.size(); ++i) out.push_back(scalar<int>(node[i], index_path(path, i)));
  return out;
}

Interval read_interval(const YAML::Node& node, const std::string& path) {
  const auto v = double_list(node, path);
  if (v.size() != 2) throw ConfigError(path, "expected [lo, hi]");
  return {v[0], v[1]};
}

ParameterBox read_bounds(const YAML::Node& node, const std::string& path) {
  check_keys(node, path, {"gamma", "alpha", "beta", "tau", "a", "b"});
  ParameterBox box;
  if (node["gamma"]) box.gamma = read_interval(node["gamma"], join(path, "gamma"));
  if (node["alpha"]) box.alpha = read_interval(node["alpha"], join(path, "alpha"));
  if (node["beta"]) box.beta = read_interval(node["beta"], join(path, "beta"));
  if (node["tau"]) box.tau = read_interval(node["tau"], join(path, "tau"));
  if (node["a"]) box.a = read_interval(node["a"], join(path, "a"));
  if (node["b"]) box.b = read_interval(node["b"], join(path, "b"));
  try {
    box.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return box;
}

ExpertAtom read_atom(const YAML::Node& node, const std::string& path) {
  check_keys(node, path, {"gamma", "alpha", "beta", "a", "b"});
  for (const char* key : {"gamma", "alpha", "a", "b"}) {
    if (!node[key]) throw ConfigError(join(path, key), "missing");
  }
  ExpertAtom at;
  at.gamma = scalar<double>(node["gamma"], join(path, "gamma"));
  const auto alpha = double_list(node["alpha"], join(path, "alpha"));
  at.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  read_opt(node, path, "beta", at.beta);
  const auto b = double_list(node["b"], join(path, "b"));
  at.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  const YAML::Node a = node["a"];
  const std::string apath = join(path, "a");
  if (!a.IsSequence() || a.size() != b.size()) throw ConfigError(apath, "expected one slope list per class");
  at.a.resize(at.alpha.size(), static_cast<Eigen::Index>(b.size()));
  for (std::size_t l = 0; l < a.size(); ++l) {
    const auto col = double_list(a[l], index_path(apath, l));
    if (col.size() != alpha.size()) throw ConfigError(index_path(apath, l), "slope length must equal the dimension of alpha");
    for (std::size_t u = 0; u < col.size(); ++u) at.a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(l)) = col[u];
  }
  return at;
}

MixingMeasure read_model(const YAML::Node& node, std::optional<std::string>& preset) {
  const std::string path = "model";
  check_keys(node, path, {"preset", "gate", "tau", "atoms", "bounds"});
  std::optional<GateKind> gate;
  if (node["gate"]) {
    try {
      gate = parse_gate_kind(scalar<std::string>(node["gate"], "model.gate"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError("model.gate", e.what());
    }
  }
  if (node["preset"]) {
    for (const char* key : {"atoms", "tau", "bounds"}) {
      if (node[key]) throw ConfigError(join(path, key), "not allowed together with model.preset");
    }
    const std::string name = scalar<std::string>(node["preset"], "model.preset");
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ConfigError("model.preset", "unknown preset '" + name + "'");
    }
    MixingMeasure m = preset_truth(name);
    if (gate && *gate != m.gate()) {
      throw ConfigError("model.gate", "preset " + name + " uses gate " + std::string(to_string(m.gate())));
    }
    preset = name;
    return m;
  }
  if (!gate) throw ConfigError("model.gate", "missing (required without model.preset)");
  if (!node["atoms"] || !node["atoms"].IsSequence() || node["atoms"].size() == 0) {
    throw ConfigError("model.atoms", "expected a non-empty list of atoms");
  }
  std::vector<ExpertAtom> atoms;
  for (std::size_t i = 0; i < node["atoms"].size(); ++i) {
    atoms.push_back(canonicalize_expert(read_atom(node["atoms"][i], index_path("model.atoms", i))));
  }
  std::optional<double> tau;
  if (node["tau"]) tau = scalar<double>(node["tau"], "model.tau");
  ParameterBox box;
  if (node["bounds"]) box = read_bounds(node["bounds"], "model.bounds");
  try {
    return MixingMeasure(std::move(atoms), *gate, tau, box);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model", e.what());
  }
}

AscentMethod parse_solver(const std::string& name, const std::string& path) {
  if (name == "bfgs") return AscentMethod::QuasiNewton;
  if (name == "gradient_ascent") return AscentMethod::GradientAscent;
  throw ConfigError(path, "unknown solver '" + name + "' (bfgs or gradient_ascent)");
}

std::string solver_name(AscentMethod m) {
  return m == AscentMethod::QuasiNewton ? "bfgs" : "gradient_ascent";
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("malformed YAML: ") + e.what());
  }
  if (!root || root.IsNull()) throw ConfigError("", "empty configuration");
  check_keys(root, "", {"model", "sweep", "em", "init", "loss", "output"});
  if (!root["model"]) throw ConfigError("model", "missing");

  std::optional<std::string> preset;
  MixingMeasure truth = read_model(root["model"], preset);
  RunConfig cfg{SweepConfig{truth}, OutputConfig{}};
  SweepConfig& sw = cfg.sweep;
  sw.loss = default_loss_for(truth.gate());

  if (const YAML::Node s = root["sweep"]) {
    check_keys(s, "sweep", {"k_fit", "n_grid", "replications", "master_seed", "threads", "trim", "regression"});
    if (s["k_fit"]) sw.k_fit = int_list(s["k_fit"], "sweep.k_fit");
    if (const YAML::Node g = s["n_grid"]) {
      if (g.IsSequence()) {
        sw.n_grid = int_list(g, "sweep.n_grid");
      } else {
        check_keys(g, "sweep.n_grid", {"min", "max", "count"});
        for (const char* key : {"min", "max", "count"}) {
          if (!g[key]) throw ConfigError(join("sweep.n_grid", key), "missing");
        }
        try {
          sw.n_grid = log_spaced_grid(scalar<int>(g["min"], "sweep.n_grid.min"),
                                      scalar<int>(g["max"], "sweep.n_grid.max"),
                                      scalar<int>(g["count"], "sweep.n_grid.count"));
        } catch (const ConfigError&) {
          throw;
        } catch (const std::invalid_argument& e) {
          throw ConfigError("sweep.n_grid", e.what());
        }
      }
    }
    read_opt(s, "sweep", "replications", sw.replications);
    read_opt(s, "sweep", "master_seed", sw.master_seed);
    read_opt(s, "sweep", "threads", sw.threads);
    read_opt(s, "sweep", "trim", sw.trim);
    if (s["regression"]) {
      try {
        sw.regression = parse_regression_mode(scalar<std::string>(s["regression"], "sweep.regression"));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw ConfigError("sweep.regression", e.what());
      }
    }
  }
  if (const YAML::Node e = root["em"]) {
    check_keys(e, "em", {"tol", "max_iter", "m_step_solver", "m_step_inner_tol", "m_step_inner_max_iter", "backtrack_shrink"});
    read_opt(e, "em", "tol", sw.em.tol);
    read_opt(e, "em", "max_iter", sw.em.max_iter);
    if (e["m_step_solver"]) {
      sw.em.m_step_solver = parse_solver(scalar<std::string>(e["m_step_solver"], "em.m_step_solver"), "em.m_step_solver");
    }
    read_opt(e, "em", "m_step_inner_tol", sw.em.m_step_inner_tol);
    read_opt(e, "em", "m_step_inner_max_iter", sw.em.m_step_inner_max_iter);
    read_opt(e, "em", "backtrack_shrink", sw.em.backtrack_shrink);
    try {
      sw.em.validate();
    } catch (const std::invalid_argument& ex) {
      throw ConfigError("em", ex.what());
    }
  }
  if (const YAML::Node i = root["init"]) {
    check_keys(i, "init", {"scheme", "perturb_std", "cell_seed"});
    if (i["scheme"] && scalar<std::string>(i["scheme"], "init.scheme") != "perturb_truth") {
      throw ConfigError("init.scheme", "only perturb_truth is supported");
    }
    read_opt(i, "init", "perturb_std", sw.init.perturb_std);
    read_opt(i, "init", "cell_seed", sw.init.cell_seed);
    try {
      sw.init.validate();
    } catch (const std::invalid_argument& ex) {
      throw ConfigError("init", ex.what());
    }
  }
  if (const YAML::Node l = root["loss"]) {
    check_keys(l, "loss", {"name", "r"});
    int r = 2;
    read_opt(l, "loss", "r", r);
    std::string name = "D2r";
    if (l["name"]) {
      name = scalar<std::string>(l["name"], "loss.name");
    } else if (!l["r"]) {
      throw ConfigError("loss.name", "missing");
    }
    try {
      sw.loss = parse_loss(name, r);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(l["name"] ? "loss.name" : "loss.r", ex.what());
    }
    if (l["r"] && sw.loss.kind != LossKind::D2r) throw ConfigError("loss.r", "only meaningful for D2r");
  }
  if (!sw.loss.compatible_with(truth.gate())) {
    throw ConfigError("loss.name", "loss " + sw.loss.name() + " is incompatible with gate " +
                                       std::string(to_string(truth.gate())));
  }
  if (const YAML::Node o = root["output"]) {
    check_keys(o, "output", {"directory", "stem"});
    read_opt(o, "output", "directory", cfg.output.directory);
    read_opt(o, "output", "stem", cfg.output.stem);
  }
  if (cfg.output.stem.empty()) cfg.output.stem = preset ? *preset : std::string(to_string(truth.gate()));

  try {
    sw.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError("sweep", ex.what());
  }
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.key_path(), std::string(e.what()) + " (in " + path + ")");
  }
}

std::string serialize_config(const RunConfig& cfg) {
  const SweepConfig& sw = cfg.sweep;
  const MixingMeasure& m = sw.truth;
  std::ostringstream os;
  auto list = [&](const auto& v) {
    os << "[";
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(v.size()); ++i) {
      if (i) os << ", ";
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(v[0])>>) {
        os << fmt(v[i]);
      } else {
        os << v[i];
      }
    }
    os << "]";
  };
  auto interval = [&](const char* name, const Interval& iv) {
    os << "    " << name << ": [" << fmt(iv.lo) << ", " << fmt(iv.hi) << "]\n";
  };
  os << "model:\n";
  os << "  gate: " << to_string(m.gate()) << "\n";
  if (m.tau()) os << "  tau: " << fmt(*m.tau()) << "\n";
  os << "  bounds:\n";
  interval("gamma", m.bounds().gamma);
  interval("alpha", m.bounds().alpha);
  interval("beta", m.bounds().beta);
  interval("tau", m.bounds().tau);
  interval("a", m.bounds().a);
  interval("b", m.bounds().b);
  os << "  atoms:\n";
  for (const auto& at : m.atoms()) {
    os << "    - gamma: " << fmt(at.gamma) << "\n";
    os << "      alpha: ";
    list(at.alpha);
    os << "\n      beta: " << fmt(at.beta) << "\n";
    os << "      a: [";
    for (Eigen::Index l = 0; l < at.a.cols(); ++l) {
      if (l) os << ", ";
      list(Eigen::VectorXd(at.a.col(l)));
    }
    os << "]\n      b: ";
    list(at.b);
    os << "\n";
  }
  os << "sweep:\n  k_fit: ";
  list(sw.k_fit);
  os << "\n  n_grid: ";
  list(sw.n_grid);
  os << "\n  replications: " << sw.replications << "\n";
  os << "  master_seed: " << sw.master_seed << "\n";
  os << "  threads: " << sw.threads << "\n";
  os << "  trim: " << sw.trim << "\n";
  os << "  regression: " << to_string(sw.regression) << "\n";
  os << "em:\n";
  os << "  tol: " << fmt(sw.em.tol) << "\n";
  os << "  max_iter: " << sw.em.max_iter << "\n";
  os << "  m_step_solver: " << solver_name(sw.em.m_step_solver) << "\n";
  os << "  m_step_inner_tol: " << fmt(sw.em.m_step_inner_tol) << "\n";
  os << "  m_step_inner_max_iter: " << sw.em.m_step_inner_max_iter << "\n";
  os << "  backtrack_shrink: " << fmt(sw.em.backtrack_shrink) << "\n";
  os << "init:\n  scheme: perturb_truth\n";
  os << "  perturb_std: " << fmt(sw.init.perturb_std) << "\n";
  os << "  cell_seed: " << sw.init.cell_seed << "\n";
  os << "loss:\n";
  if (sw.loss.kind == LossKind::D2r) {
    os << "  name: D2r\n  r: " << sw.loss.r << "\n";
  } else {
    os << "  name: " << sw.loss.name() << "\n";
  }
  os << "output:\n";
  os << "  directory: " << quoted(cfg.output.directory) << "\n";
  os << "  stem: " << quoted(cfg.output.stem) << "\n";
  return os.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string config_digest(const RunConfig& cfg) { return sha256_hex(serialize_config(cfg)); }

}  // namespace mlmoe
