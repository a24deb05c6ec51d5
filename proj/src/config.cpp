#include "fol/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fol/error.hpp"
#include "fol/io.hpp"
#include "fol/losses.hpp"
#include "fol/mlp.hpp"
#include "fol/optimizer.hpp"

namespace fol {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  T v{};
  const char* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (ec != std::errc() || ptr != end || t.empty())
    throw ConfigError(where + ": cannot parse '" + text + "' as a number");
  return v;
}

bool parse_bool(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(where + ": expected true or false, got '" + text + "'");
}

template <class T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  bool required = false;
  std::function<void(const std::string& where, const std::string& value)> set;
  std::function<std::string()> get;
};

Field bind(const char* sec, const char* key, int& v, bool required = false) {
  return {sec, key, required, [&v](auto& w, auto& s) { v = parse_number<int>(w, s); },
          [&v] { return std::to_string(v); }};
}
Field bind(const char* sec, const char* key, std::uint64_t& v) {
  return {sec, key, false, [&v](auto& w, auto& s) { v = parse_number<std::uint64_t>(w, s); },
          [&v] { return std::to_string(v); }};
}
Field bind(const char* sec, const char* key, double& v) {
  return {sec, key, false, [&v](auto& w, auto& s) { v = parse_number<double>(w, s); },
          [&v] { return format_double(v); }};
}
Field bind(const char* sec, const char* key, bool& v) {
  return {sec, key, false, [&v](auto& w, auto& s) { v = parse_bool(w, s); },
          [&v] { return std::string(v ? "true" : "false"); }};
}
Field bind(const char* sec, const char* key, std::string& v, bool required = false) {
  return {sec, key, required, [&v](auto&, auto& s) { v = trim(s); }, [&v] { return v; }};
}
Field bind(const char* sec, const char* key, std::vector<double>& v) {
  return {sec, key, false,
          [&v](auto& w, auto& s) {
            v.clear();
            for (const auto& item : split_list(s)) v.push_back(parse_number<double>(w, item));
          },
          [&v] { return format_list(v); }};
}
Field bind(const char* sec, const char* key, std::vector<int>& v) {
  return {sec, key, false,
          [&v](auto& w, auto& s) {
            v.clear();
            for (const auto& item : split_list(s)) v.push_back(parse_number<int>(w, item));
          },
          [&v] { return format_list(v); }};
}

std::vector<Field> schema(RunConfig& c) {
  auto& m = c.mesh;
  auto& p = c.physics;
  auto& z = c.parameterization;
  auto& n = c.network;
  auto& l = c.loss;
  auto& t = c.training;
  auto& o = c.optimizer;
  auto& io = c.io;
  return {
      bind("mesh", "nx", m.nx, true),
      bind("mesh", "ny", m.ny, true),
      bind("mesh", "lx", m.lx),
      bind("mesh", "ly", m.ly),
      bind("mesh", "quad_order", m.quad_order),
      bind("physics", "kind", p.kind, true),
      bind("physics", "t_left", p.t_left),
      bind("physics", "t_right", p.t_right),
      bind("physics", "m1", p.m1),
      bind("physics", "m2", p.m2),
      bind("physics", "beta", p.beta),
      bind("physics", "nu", p.nu),
      bind("physics", "ux", p.ux),
      bind("physics", "uy", p.uy),
      bind("parameterization", "kind", z.kind),
      bind("parameterization", "value", z.value),
      bind("parameterization", "fx", z.fx),
      bind("parameterization", "fy", z.fy),
      bind("parameterization", "coefficients", z.coefficients),
      bind("parameterization", "beta", z.beta),
      bind("parameterization", "vmin", z.vmin),
      bind("parameterization", "vmax", z.vmax),
      bind("parameterization", "samples", z.samples),
      bind("parameterization", "test_samples", z.test_samples),
      bind("parameterization", "sample_lo", z.sample_lo),
      bind("parameterization", "sample_hi", z.sample_hi),
      bind("parameterization", "seed", z.seed),
      bind("network", "hidden", n.hidden),
      bind("network", "activation", n.activation),
      bind("network", "seed", n.seed),
      bind("network", "normalize_inputs", n.normalize_inputs),
      bind("loss", "physics", l.physics),
      bind("loss", "w_ph", l.w_ph),
      bind("loss", "w_bc", l.w_bc),
      bind("loss", "w_se", l.w_se),
      bind("loss", "w_db", l.w_db),
      bind("loss", "hard_bc", l.hard_bc),
      bind("training", "epochs", t.epochs),
      bind("training", "batch_size", t.batch_size),
      bind("training", "lr", t.lr),
      bind("training", "beta1", t.beta1),
      bind("training", "beta2", t.beta2),
      bind("training", "eps", t.eps),
      bind("training", "seed", t.seed),
      bind("training", "threads", t.threads),
      bind("training", "log_every", t.log_every),
      bind("optimizer", "mode", o.mode),
      bind("optimizer", "iterations", o.iterations),
      bind("optimizer", "alpha", o.alpha),
      bind("optimizer", "offset", o.offset),
      bind("optimizer", "c0", o.c0),
      bind("optimizer", "active_tol", o.active_tol),
      bind("optimizer", "fol_initial_epochs", o.fol_initial_epochs),
      bind("optimizer", "fol_epochs", o.fol_epochs),
      bind("optimizer", "w_se", o.w_se),
      bind("optimizer", "hidden", o.hidden),
      bind("io", "output_dir", io.output_dir),
      bind("io", "corpus", io.corpus),
      bind("io", "test_corpus", io.test_corpus),
      bind("io", "export_n", io.export_n),
      bind("io", "vtk", io.vtk),
      bind("io", "snapshot_every", io.snapshot_every),
  };
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

void RunConfig::validate() const {
  require(mesh.nx >= 2 && mesh.ny >= 2, "mesh.nx and mesh.ny must be at least 2");
  require(mesh.lx > 0.0 && mesh.ly > 0.0, "mesh.lx and mesh.ly must be positive");
  require(mesh.quad_order >= 1 && mesh.quad_order <= 3, "mesh.quad_order must be in 1..3");
  require(physics.kind == "thermal" || physics.kind == "nonlinear" || physics.kind == "elastic",
          "physics.kind must be thermal, nonlinear or elastic (got '" + physics.kind + "')");
  require(physics.nu > -1.0 && physics.nu < 0.5, "physics.nu must lie in (-1, 0.5)");
  const auto& z = parameterization;
  require(z.kind == "uniform" || z.kind == "fourier" || z.kind == "ellipse" || z.kind == "bc",
          "parameterization.kind must be uniform, fourier, ellipse or bc (got '" + z.kind + "')");
  require(!z.fx.empty() && !z.fy.empty(), "parameterization.fx and fy must not be empty");
  require(z.vmin < z.vmax, "parameterization.vmin must be below vmax");
  require(z.beta > 0.0, "parameterization.beta must be positive");
  require(z.value > 0.0, "parameterization.value must be positive");
  require(z.samples >= 0 && z.test_samples >= 0, "sample counts must be nonnegative");
  require(z.sample_lo < z.sample_hi, "parameterization.sample_lo must be below sample_hi");
  require(!network.hidden.empty(), "network.hidden must list at least one layer");
  for (int h : network.hidden) require(h > 0, "network.hidden widths must be positive");
  parse_activation(network.activation);
  parse_physics_loss(loss.physics);
  require(loss.w_ph >= 0 && loss.w_bc >= 0 && loss.w_se >= 0 && loss.w_db >= 0,
          "loss weights must be nonnegative");
  require(training.epochs >= 0, "training.epochs must be nonnegative");
  require(training.batch_size >= 1, "training.batch_size must be positive");
  require(training.lr > 0.0, "training.lr must be positive");
  require(training.threads >= 1, "training.threads must be at least 1");
  parse_nand_mode(optimizer.mode);
  require(optimizer.iterations >= 0, "optimizer.iterations must be nonnegative");
  require(optimizer.alpha > 0.0, "optimizer.alpha must be positive");
  require(optimizer.active_tol >= 0.0, "optimizer.active_tol must be nonnegative");
  require(optimizer.fol_initial_epochs >= 0 && optimizer.fol_epochs >= 0,
          "optimizer epoch counts must be nonnegative");
  for (int h : optimizer.hidden) require(h > 0, "optimizer.hidden widths must be positive");
  require(io.export_n >= 2, "io.export_n must be at least 2");
  require(io.snapshot_every >= 0, "io.snapshot_every must be nonnegative");
}

RunConfig parse_config_string(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  RunConfig cfg;
  auto fields = schema(cfg);
  std::map<std::string, std::map<std::string, Field*>> index;
  for (auto& f : fields) index[f.section][f.key] = &f;

  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [sec, body] : tree) {
    const auto s = index.find(sec);
    if (s == index.end()) {
      if (body.empty() && !body.data().empty())
        throw ConfigError("config: key '" + sec + "' outside a section");
      throw ConfigError("config: unknown section [" + sec + "]");
    }
    for (const auto& [key, node] : body) {
      const auto k = s->second.find(key);
      if (k == s->second.end()) throw ConfigError("config: unknown key " + sec + "." + key);
      k->second->set(sec + "." + key, node.data());
      seen.insert({sec, key});
    }
  }
  std::string missing;
  for (const auto& f : fields)
    if (f.required && !seen.count({f.section, f.key}))
      missing += (missing.empty() ? "" : ", ") + f.section + "." + f.key;
  if (!missing.empty()) throw ConfigError("config: missing required keys: " + missing);
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str());
}

void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("override '" + dotted_key + "' must be section.key");
  const std::string sec = dotted_key.substr(0, dot);
  const std::string key = dotted_key.substr(dot + 1);
  RunConfig next = cfg;
  for (auto& f : schema(next)) {
    if (f.section == sec && f.key == key) {
      f.set(dotted_key, value);
      next.validate();
      cfg = std::move(next);
      return;
    }
  }
  throw ConfigError("config: unknown key " + dotted_key);
}

std::string to_ini(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::ostringstream os;
  std::string section;
  for (const auto& f : schema(copy)) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get() << '\n';
  }
  return os.str();
}

std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
  if (!cfg.io.output_dir.empty()) return cfg.io.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return ".";
}

}  // namespace fol
