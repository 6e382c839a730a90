#include "mesr/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace mesr {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    out.push_back(trim(item));
  }
  return out;
}

double to_double(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(where + ": expected a number, got '" + text + "'");
  }
  return v;
}

long long to_integer(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(where + ": expected an integer, got '" + text + "'");
  }
  return v;
}

bool to_bool(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") {
    return true;
  }
  if (t == "false" || t == "0" || t == "no" || t == "off") {
    return false;
  }
  throw ConfigError(where + ": expected a boolean, got '" + text + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

int section_id(const std::string& name, const std::string& prefix, const std::string& where) {
  const auto id = to_integer(name.substr(prefix.size()), where + ": section [" + name + "]");
  return static_cast<int>(id);
}

DailyProfile parse_profile_values(const std::vector<std::string>& items, const std::string& where) {
  if (items.size() != static_cast<std::size_t>(kHoursPerDay)) {
    throw ConfigError(where + ": profile needs " + std::to_string(kHoursPerDay) + " values, got " +
                      std::to_string(items.size()));
  }
  DailyProfile p{};
  for (std::size_t h = 0; h < items.size(); ++h) {
    p[h] = to_double(items[h], where);
  }
  return p;
}

DailyProfile read_profile_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open profile file " + path.string());
  }
  DailyProfile p{};
  std::vector<bool> seen(kHoursPerDay, false);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    line = trim(line);
    if (line.empty() || line[0] == '#') {
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 2) {
      throw ConfigError(where + ": expected 'hour,pu'");
    }
    if (cells[0] == "hour") {
      continue;
    }
    const auto hour = to_integer(cells[0], where);
    if (hour < 0 || hour >= static_cast<long long>(kHoursPerDay) ||
        seen[static_cast<std::size_t>(hour)]) {
      throw ConfigError(where + ": hour out of range or repeated");
    }
    seen[static_cast<std::size_t>(hour)] = true;
    p[static_cast<std::size_t>(hour)] = to_double(cells[1], where);
  }
  for (std::size_t h = 0; h < seen.size(); ++h) {
    if (!seen[h]) {
      throw ConfigError(path.string() + ": missing hour " + std::to_string(h));
    }
  }
  return p;
}

// Applies each key of a section through a handler table; unknown keys fail.
using Handler = std::function<void(const std::string& value, const std::string& where)>;

void apply(const pt::ptree& section, const std::string& name, const std::string& source,
           const std::map<std::string, Handler>& handlers) {
  for (const auto& [key, node] : section) {
    const std::string where = source + ": [" + name + "] " + key;
    const auto it = handlers.find(key);
    if (it == handlers.end()) {
      throw ConfigError(source + ": unknown key '" + key + "' in [" + name + "]");
    }
    it->second(node.data(), where);
  }
}

template <class T>
Handler num(T& field) {
  return [&field](const std::string& v, const std::string& where) {
    if constexpr (std::is_floating_point_v<T>) {
      field = to_double(v, where);
    } else {
      field = static_cast<T>(to_integer(v, where));
    }
  };
}

}  // namespace

ScenarioConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                            const std::string& source) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  ScenarioConfig c;
  bool have_network = false;
  std::map<int, MicrogridParams> mgs;
  std::map<int, MessParams> units;

  for (const auto& [name, section] : tree) {
    if (!section.data().empty()) {
      throw ConfigError(source + ": key '" + name + "' outside any section");
    }
    if (name == "scenario") {
      apply(section, name, source,
            {{"network",
              [&](const std::string& v, const std::string&) {
                std::filesystem::path p(trim(v));
                c.network_path = (p.is_absolute() ? p : base_dir / p).lexically_normal();
                have_network = true;
              }},
             {"horizon", num(c.horizon)},
             {"dt_h", num(c.dt_h)},
             {"return_to_depot",
              [&](const std::string& v, const std::string& w) { c.return_to_depot = to_bool(v, w); }},
             {"depot_return_penalty_per_km", num(c.depot_return_penalty_per_km)}});
    } else if (name == "costs") {
      apply(section, name, source,
            {{"battery_per_kwh", num(c.costs.battery_per_kwh)},
             {"transport_per_h", num(c.costs.transport_per_h)}});
    } else if (name == "reward") {
      apply(section, name, source,
            {{"objective", num(c.reward.objective)}, {"penalty", num(c.reward.penalty)}});
    } else if (name.rfind("microgrid.", 0) == 0) {
      const int id = section_id(name, "microgrid.", source);
      if (mgs.count(id) != 0) {
        throw ConfigError(source + ": duplicate section [" + name + "]");
      }
      MicrogridParams p;
      p.id = id;
      bool explicit_profile = false;
      std::optional<std::string> csv;
      apply(section, name, source,
            {{"dg_max_kw", num(p.dg_max_kw)},
             {"dg_max_kvar", num(p.dg_max_kvar)},
             {"dg_energy_max_kwh", num(p.dg_energy_max_kwh)},
             {"dg_energy_min_kwh", num(p.dg_energy_min_kwh)},
             {"power_factor", num(p.power_factor)},
             {"interruption_cost", num(p.interruption_cost)},
             {"generation_cost", num(p.generation_cost)},
             {"peak_load_kw", num(p.peak_load_kw)},
             {"forecast_error_std", num(p.forecast_error_std)},
             {"load_type",
              [&](const std::string& v, const std::string& w) {
                try {
                  p.load_type = parse_load_type(trim(v));
                } catch (const std::exception& e) {
                  throw ConfigError(w + ": " + e.what());
                }
              }},
             {"profile",
              [&](const std::string& v, const std::string& w) {
                p.profile = parse_profile_values(split(v, ','), w);
                explicit_profile = true;
              }},
             {"profile_csv", [&](const std::string& v, const std::string&) { csv = trim(v); }}});
      if (csv) {
        if (explicit_profile) {
          throw ConfigError(source + ": [" + name + "] sets both profile and profile_csv");
        }
        std::filesystem::path path(*csv);
        p.profile = read_profile_csv(path.is_absolute() ? path : base_dir / path);
      } else if (!explicit_profile) {
        p.profile = default_profile(p.load_type);
      }
      mgs.emplace(id, p);
    } else if (name.rfind("mess.", 0) == 0) {
      const int id = section_id(name, "mess.", source);
      if (units.count(id) != 0) {
        throw ConfigError(source + ": duplicate section [" + name + "]");
      }
      MessParams p;
      p.id = id;
      apply(section, name, source,
            {{"capacity_kwh", num(p.capacity_kwh)},
             {"max_charge_kw", num(p.max_charge_kw)},
             {"max_discharge_kw", num(p.max_discharge_kw)},
             {"eta_charge", num(p.eta_charge)},
             {"eta_discharge", num(p.eta_discharge)},
             {"soc_min", num(p.soc_min)},
             {"soc_max", num(p.soc_max)},
             {"initial_soc", num(p.initial_soc)},
             {"speed_kmh", num(p.speed_kmh)},
             {"home_depot", num(p.home_depot)}});
      units.emplace(id, p);
    } else if (name == "td3") {
      auto& h = c.td3;
      apply(section, name, source,
            {{"gamma", num(h.gamma)},
             {"tau", num(h.tau)},
             {"explore_noise", num(h.explore_noise)},
             {"target_noise", num(h.target_noise)},
             {"noise_clip", num(h.noise_clip)},
             {"policy_delay", num(h.policy_delay)},
             {"batch_size", num(h.batch_size)},
             {"buffer_capacity", num(h.buffer_capacity)},
             {"warmup_episodes", num(h.warmup_episodes)},
             {"actor_lr", num(h.actor_lr)},
             {"critic_lr", num(h.critic_lr)},
             {"precision", [&](const std::string& v, const std::string& w) {
                const std::string t = trim(v);
                if (t == "float64" || t == "double") {
                  h.precision = nn::Precision::float64;
                } else if (t == "float32" || t == "float") {
                  h.precision = nn::Precision::float32;
                } else {
                  throw ConfigError(w + ": expected float32 or float64, got '" + t + "'");
                }
              }},
             {"hidden", [&](const std::string& v, const std::string& w) {
                h.hidden.clear();
                for (const auto& item : split(v, ',')) {
                  h.hidden.push_back(static_cast<int>(to_integer(item, w)));
                }
              }}});
    } else if (name == "train") {
      auto& t = c.train;
      apply(section, name, source,
            {{"episodes", num(t.episodes)},
             {"seed", num(t.seed)},
             {"validate_every", num(t.validate_every)},
             {"validation_episodes", num(t.validation_episodes)},
             {"validation_seed", num(t.validation_seed)},
             {"evaluation_seed", num(t.evaluation_seed)},
             {"checkpoint_every", num(t.checkpoint_every)}});
    } else if (name == "oracle") {
      apply(section, name, source, {{"dg_levels", num(c.oracle.dg_levels)}});
    } else {
      throw ConfigError(source + ": unknown section [" + name + "]");
    }
  }

  if (!have_network) {
    throw ConfigError(source + ": [scenario] network is required");
  }
  if (mgs.empty()) {
    throw ConfigError(source + ": at least one [microgrid.N] section is required");
  }
  for (auto& [id, p] : mgs) {
    c.microgrids.push_back(p);
  }
  for (auto& [id, p] : units) {
    c.fleet.push_back(p);
  }
  try {
    c.td3.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": [td3] " + e.what());
  }
  if (c.train.episodes < 0 || c.train.validate_every <= 0 || c.train.validation_episodes <= 0 ||
      c.train.checkpoint_every <= 0) {
    throw ConfigError(source + ": [train] counts must be positive");
  }
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  return parse_config(in, path.parent_path(), path.string());
}

std::string serialize_config(const ScenarioConfig& c) {
  std::ostringstream os;
  os << "[scenario]\n"
     << "network = " << c.network_path.string() << "\n"
     << "horizon = " << c.horizon << "\n"
     << "dt_h = " << fmt(c.dt_h) << "\n"
     << "return_to_depot = " << (c.return_to_depot ? "true" : "false") << "\n"
     << "depot_return_penalty_per_km = " << fmt(c.depot_return_penalty_per_km) << "\n\n";
  os << "[costs]\n"
     << "battery_per_kwh = " << fmt(c.costs.battery_per_kwh) << "\n"
     << "transport_per_h = " << fmt(c.costs.transport_per_h) << "\n\n";
  os << "[reward]\n"
     << "objective = " << fmt(c.reward.objective) << "\n"
     << "penalty = " << fmt(c.reward.penalty) << "\n\n";
  for (const auto& m : c.microgrids) {
    os << "[microgrid." << m.id << "]\n"
       << "dg_max_kw = " << fmt(m.dg_max_kw) << "\n"
       << "dg_max_kvar = " << fmt(m.dg_max_kvar) << "\n"
       << "dg_energy_max_kwh = " << fmt(m.dg_energy_max_kwh) << "\n"
       << "dg_energy_min_kwh = " << fmt(m.dg_energy_min_kwh) << "\n"
       << "power_factor = " << fmt(m.power_factor) << "\n"
       << "interruption_cost = " << fmt(m.interruption_cost) << "\n"
       << "generation_cost = " << fmt(m.generation_cost) << "\n"
       << "load_type = " << to_string(m.load_type) << "\n"
       << "peak_load_kw = " << fmt(m.peak_load_kw) << "\n"
       << "forecast_error_std = " << fmt(m.forecast_error_std) << "\n"
       << "profile = ";
    for (std::size_t h = 0; h < m.profile.size(); ++h) {
      os << (h ? ", " : "") << fmt(m.profile[h]);
    }
    os << "\n\n";
  }
  for (const auto& u : c.fleet) {
    os << "[mess." << u.id << "]\n"
       << "capacity_kwh = " << fmt(u.capacity_kwh) << "\n"
       << "max_charge_kw = " << fmt(u.max_charge_kw) << "\n"
       << "max_discharge_kw = " << fmt(u.max_discharge_kw) << "\n"
       << "eta_charge = " << fmt(u.eta_charge) << "\n"
       << "eta_discharge = " << fmt(u.eta_discharge) << "\n"
       << "soc_min = " << fmt(u.soc_min) << "\n"
       << "soc_max = " << fmt(u.soc_max) << "\n"
       << "initial_soc = " << fmt(u.initial_soc) << "\n"
       << "speed_kmh = " << fmt(u.speed_kmh) << "\n"
       << "home_depot = " << u.home_depot << "\n\n";
  }
  const auto& h = c.td3;
  os << "[td3]\n"
     << "gamma = " << fmt(h.gamma) << "\n"
     << "tau = " << fmt(h.tau) << "\n"
     << "explore_noise = " << fmt(h.explore_noise) << "\n"
     << "target_noise = " << fmt(h.target_noise) << "\n"
     << "noise_clip = " << fmt(h.noise_clip) << "\n"
     << "policy_delay = " << h.policy_delay << "\n"
     << "batch_size = " << h.batch_size << "\n"
     << "buffer_capacity = " << h.buffer_capacity << "\n"
     << "warmup_episodes = " << h.warmup_episodes << "\n"
     << "actor_lr = " << fmt(h.actor_lr) << "\n"
     << "critic_lr = " << fmt(h.critic_lr) << "\n"
     << "precision = " << (h.precision == nn::Precision::float32 ? "float32" : "float64") << "\n"
     << "hidden = ";
  for (std::size_t i = 0; i < h.hidden.size(); ++i) {
    os << (i ? ", " : "") << h.hidden[i];
  }
  os << "\n\n";
  const auto& t = c.train;
  os << "[train]\n"
     << "episodes = " << t.episodes << "\n"
     << "seed = " << t.seed << "\n"
     << "validate_every = " << t.validate_every << "\n"
     << "validation_episodes = " << t.validation_episodes << "\n"
     << "validation_seed = " << t.validation_seed << "\n"
     << "evaluation_seed = " << t.evaluation_seed << "\n"
     << "checkpoint_every = " << t.checkpoint_every << "\n\n";
  os << "[oracle]\n"
     << "dg_levels = " << c.oracle.dg_levels << "\n";
  return os.str();
}

Scenario build_scenario(const ScenarioConfig& c) {
  Scenario s;
  try {
    s.network = load_network(c.network_path);
  } catch (const NetworkError& e) {
    throw ConfigError(e.what());
  }
  s.microgrids = c.microgrids;
  s.fleet = c.fleet;
  s.costs = c.costs;
  s.reward = c.reward;
  s.horizon = c.horizon;
  s.dt_h = c.dt_h;
  s.return_to_depot = c.return_to_depot;
  s.depot_return_penalty_per_km = c.depot_return_penalty_per_km;
  s.validate();
  return s;
}

TinyScenario build_tiny(const ScenarioConfig& c) {
  TinyScenario tiny{build_scenario(c), c.oracle};
  tiny.validate();
  return tiny;
}

}  // namespace mesr
