#include "datorus/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace datorus {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw ConfigInvalid("not a number: '" + s + "'");
  }
}

long long to_int(const std::string& s) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw ConfigInvalid("not an integer: '" + s + "'");
  }
}

std::string strip_brackets(const std::string& s) {
  std::string t = trim(s);
  if (t.size() < 2 || t.front() != '[' || t.back() != ']')
    throw ConfigInvalid("expected a [..] list, got '" + s + "'");
  return t.substr(1, t.size() - 2);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

std::string config_to_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "# datorus experiment configuration\n";
  os << "matrix = [";
  for (std::size_t i = 0; i < c.matrix.size(); ++i)
    os << (i ? ", " : "") << c.matrix[i];
  os << "]\n";
  os << "bump.center = [" << fmt(c.bump_center[0]) << ", " << fmt(c.bump_center[1])
     << ", " << fmt(c.bump_center[2]) << "]\n";
  os << "bump.radius = " << fmt(c.bump_radius) << "\n";
  os << "s = " << fmt(c.s) << "\n";
  os << "s_sweep = [";
  for (std::size_t i = 0; i < c.s_sweep.size(); ++i)
    os << (i ? ", " : "") << fmt(c.s_sweep[i]);
  os << "]\n";
  os << "power = " << c.power << "\n";
  os << "grid_n = " << c.grid_n << "\n";
  os << "depth = " << c.depth << "\n";
  os << "frame_iters = " << c.frame_iters << "\n";
  os << "ph.grid_n = " << c.ph_grid_n << "\n";
  os << "ph.iterations = " << c.ph_iterations << "\n";
  os << "ph.cone_angle = " << fmt(c.cone_angle) << "\n";
  os << "boxes_per_axis = " << c.boxes_per_axis << "\n";
  os << "node_step = " << fmt(c.node_step) << "\n";
  os << "gamma = " << fmt(c.gamma) << "\n";
  os << "lattice_q = " << c.lattice_q << "\n";
  os << "seed = " << c.seed << "\n";
  os << "lyapunov.count = " << c.lyapunov_count << "\n";
  os << "lyapunov.orbit = " << c.lyapunov_orbit << "\n";
  os << "correlations.count = " << c.correlations_count << "\n";
  os << "correlations.n_max = " << c.correlations_n_max << "\n";
  os << "observables = [";
  for (std::size_t i = 0; i < c.observables.size(); ++i)
    os << (i ? ", " : "") << "\"" << c.observables[i] << "\"";
  os << "]\n";
  os << "deviations.eps = " << fmt(c.deviations_eps) << "\n";
  os << "deviations.count = " << c.deviations_count << "\n";
  os << "deviations.n_list = [";
  for (std::size_t i = 0; i < c.deviations_n_list.size(); ++i)
    os << (i ? ", " : "") << c.deviations_n_list[i];
  os << "]\n";
  os << "moment.s = " << fmt(c.moment_s) << "\n";
  os << "moment.shift = " << fmt(c.moment_shift) << "\n";
  os << "moment.n_max = " << c.moment_n_max << "\n";
  os << "coupling.K = " << fmt(c.coupling.K) << "\n";
  os << "coupling.lambda = " << fmt(c.coupling.lambda) << "\n";
  os << "coupling.eps = " << fmt(c.coupling.eps) << "\n";
  os << "coupling.max_runs = " << c.coupling.max_runs << "\n";
  os << "coupling.mass_floor = " << fmt(c.coupling.mass_floor) << "\n";
  os << "coupling.n0_budget = " << c.coupling.n0_budget << "\n";
  os << "coupling.tail_levels = " << c.coupling.tail_levels << "\n";
  os << "coupling.node_step = " << fmt(c.coupling.node_step) << "\n";
  os << "coupling.pairs = " << c.coupling_pairs << "\n";
  os << "output_dir = \"" << c.output_dir << "\"\n";
  os << "threads = " << c.threads << "\n";
  return os.str();
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::map<std::string, std::function<void(const std::string&)>> setters;

  auto int_list = [](const std::string& v) {
    std::vector<std::int64_t> out;
    for (auto& tok : split(strip_brackets(v), ','))
      if (!tok.empty()) out.push_back(to_int(tok));
    return out;
  };
  auto dbl_list = [](const std::string& v) {
    std::vector<double> out;
    for (auto& tok : split(strip_brackets(v), ','))
      if (!tok.empty()) out.push_back(to_double(tok));
    return out;
  };

  setters["matrix"] = [&](const std::string& v) {
    auto m = int_list(v);
    if (m.size() != 9) throw ConfigInvalid("matrix needs 9 row-major entries");
    c.matrix = m;
  };
  setters["bump.center"] = [&](const std::string& v) {
    auto d = dbl_list(v);
    if (d.size() != 3) throw ConfigInvalid("bump.center needs 3 entries");
    c.bump_center = Vec3(d[0], d[1], d[2]);
  };
  setters["bump.radius"] = [&](const std::string& v) { c.bump_radius = to_double(v); };
  setters["s"] = [&](const std::string& v) { c.s = to_double(v); };
  setters["s_sweep"] = [&](const std::string& v) { c.s_sweep = dbl_list(v); };
  setters["power"] = [&](const std::string& v) { c.power = static_cast<int>(to_int(v)); };
  setters["grid_n"] = [&](const std::string& v) { c.grid_n = static_cast<int>(to_int(v)); };
  setters["depth"] = [&](const std::string& v) { c.depth = static_cast<int>(to_int(v)); };
  setters["frame_iters"] = [&](const std::string& v) {
    c.frame_iters = static_cast<int>(to_int(v));
  };
  setters["ph.grid_n"] = [&](const std::string& v) {
    c.ph_grid_n = static_cast<int>(to_int(v));
  };
  setters["ph.iterations"] = [&](const std::string& v) {
    c.ph_iterations = static_cast<int>(to_int(v));
  };
  setters["ph.cone_angle"] = [&](const std::string& v) { c.cone_angle = to_double(v); };
  setters["boxes_per_axis"] = [&](const std::string& v) {
    c.boxes_per_axis = static_cast<int>(to_int(v));
  };
  setters["node_step"] = [&](const std::string& v) { c.node_step = to_double(v); };
  setters["gamma"] = [&](const std::string& v) { c.gamma = to_double(v); };
  setters["lattice_q"] = [&](const std::string& v) { c.lattice_q = to_int(v); };
  setters["seed"] = [&](const std::string& v) {
    c.seed = static_cast<std::uint64_t>(to_int(v));
  };
  setters["lyapunov.count"] = [&](const std::string& v) { c.lyapunov_count = to_int(v); };
  setters["lyapunov.orbit"] = [&](const std::string& v) {
    c.lyapunov_orbit = static_cast<int>(to_int(v));
  };
  setters["correlations.count"] = [&](const std::string& v) {
    c.correlations_count = to_int(v);
  };
  setters["correlations.n_max"] = [&](const std::string& v) {
    c.correlations_n_max = static_cast<int>(to_int(v));
  };
  setters["observables"] = [&](const std::string& v) {
    c.observables.clear();
    for (auto& tok : split(strip_brackets(v), ',')) {
      std::string t = trim(tok);
      if (t.empty()) continue;
      if (t.size() >= 2 && t.front() == '"' && t.back() == '"')
        t = t.substr(1, t.size() - 2);
      c.observables.push_back(t);
    }
  };
  setters["deviations.eps"] = [&](const std::string& v) {
    c.deviations_eps = to_double(v);
  };
  setters["deviations.count"] = [&](const std::string& v) {
    c.deviations_count = to_int(v);
  };
  setters["deviations.n_list"] = [&](const std::string& v) {
    c.deviations_n_list.clear();
    for (auto x : int_list(v)) c.deviations_n_list.push_back(x);
  };
  setters["moment.s"] = [&](const std::string& v) { c.moment_s = to_double(v); };
  setters["moment.shift"] = [&](const std::string& v) { c.moment_shift = to_double(v); };
  setters["moment.n_max"] = [&](const std::string& v) {
    c.moment_n_max = static_cast<int>(to_int(v));
  };
  setters["coupling.K"] = [&](const std::string& v) { c.coupling.K = to_double(v); };
  setters["coupling.lambda"] = [&](const std::string& v) {
    c.coupling.lambda = to_double(v);
  };
  setters["coupling.eps"] = [&](const std::string& v) { c.coupling.eps = to_double(v); };
  setters["coupling.max_runs"] = [&](const std::string& v) {
    c.coupling.max_runs = static_cast<int>(to_int(v));
  };
  setters["coupling.mass_floor"] = [&](const std::string& v) {
    c.coupling.mass_floor = to_double(v);
  };
  setters["coupling.n0_budget"] = [&](const std::string& v) {
    c.coupling.n0_budget = static_cast<int>(to_int(v));
  };
  setters["coupling.tail_levels"] = [&](const std::string& v) {
    c.coupling.tail_levels = static_cast<int>(to_int(v));
  };
  setters["coupling.node_step"] = [&](const std::string& v) {
    c.coupling.node_step = to_double(v);
  };
  setters["coupling.pairs"] = [&](const std::string& v) {
    c.coupling_pairs = static_cast<int>(to_int(v));
  };
  setters["output_dir"] = [&](const std::string& v) {
    std::string t = trim(v);
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"')
      t = t.substr(1, t.size() - 2);
    c.output_dir = t;
  };
  setters["threads"] = [&](const std::string& v) {
    c.threads = static_cast<int>(to_int(v));
  };

  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigInvalid("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw ConfigInvalid("line " + std::to_string(lineno) + ": unknown key '" +
                          key + "'");
    it->second(val);
  }
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigInvalid("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

std::array<std::uint8_t, 32> config_fingerprint(const ExperimentConfig& cfg) {
  return sha256(config_to_text(cfg));
}

std::array<std::uint8_t, 32> field_fingerprint(const ExperimentConfig& cfg,
                                               double s_value) {
  std::ostringstream os;
  os << "matrix=[";
  for (auto v : cfg.matrix) os << v << ",";
  os << "];bump=[" << fmt(cfg.bump_center[0]) << "," << fmt(cfg.bump_center[1])
     << "," << fmt(cfg.bump_center[2]) << ";" << fmt(cfg.bump_radius) << "]"
     << ";s=" << fmt(s_value) << ";grid_n=" << cfg.grid_n << ";depth=" << cfg.depth;
  return sha256(os.str());
}

ObservableSpec parse_observable(const std::string& text, double gamma) {
  auto parts = split(text, ':');
  if (parts.empty()) throw ConfigInvalid("empty observable spec");
  if (parts[0] == "char") {
    if (parts.size() != 2) throw ConfigInvalid("char observable needs k1,k2,k3");
    auto k = split(parts[1], ',');
    if (k.size() != 3) throw ConfigInvalid("char observable needs 3 frequencies");
    return character_observable(Vec3i(to_int(k[0]), to_int(k[1]), to_int(k[2])),
                                gamma);
  }
  if (parts[0] == "cusp") {
    if (parts.size() < 2) throw ConfigInvalid("cusp observable needs a center");
    auto z = split(parts[1], ',');
    if (z.size() != 3) throw ConfigInvalid("cusp observable needs 3 coordinates");
    double g = parts.size() >= 3 ? to_double(parts[2]) : gamma;
    return cusp_observable(TorusPoint(Vec3(to_double(z[0]), to_double(z[1]),
                                           to_double(z[2]))),
                           g);
  }
  throw ConfigInvalid("unknown observable kind: '" + parts[0] + "'");
}

}  // namespace datorus
