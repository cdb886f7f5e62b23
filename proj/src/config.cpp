#include "ddr/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ddr/mesh.hpp"

namespace ddr {

void StageConfig::validate() const {
  if (data_order < 1 || data_order > 8) throw ConfigError("config: data_order must be in 1..8");
  if (control_order < 0 || control_order >= label_order || label_order > 8)
    throw ConfigError("config: need control_order < label_order <= 8");
  if (data_order < control_order) throw ConfigError("config: data_order below control_order");
  if (n_labels < 1 || n_labels > icosphere_vertex_count(label_order))
    throw ConfigError("config: n_labels exceeds the label-mesh vertex count");
  if (r < 1 || fsn_channels.size() != std::size_t(r))
    throw ConfigError("config: fsn_channels must list exactly r entries");
  if (fsn_channels.back() != n_labels)
    throw ConfigError("config: fsn_channels must end at n_labels");
  if (c1 < 1) throw ConfigError("config: c1 must be positive");
  if (crf_iterations < 1) throw ConfigError("config: crf_iterations must be at least 1");
  if (epochs < 1) throw ConfigError("config: epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
}

PipelineConfig paper_profile() {
  PipelineConfig p;
  p.radius = 100.0;

  p.rotation = StageConfig{6, 0, 1, 1, 0.7, 0.0, 1, {1}, 32, 1, 100, 1e-3, 42};

  p.coarse = StageConfig{6, 2, 5, 600, 0.7, 1.5, 1, {600}, 32, 5, 100, 1e-3, 42};

  p.fine = StageConfig{6, 4, 8, 1000, 0.2, 0.6, 5, {8, 16, 64, 128, 1000}, 2, 5, 100, 1e-3, 42};

  apply_env_seed(p);
  return p;
}

PipelineConfig desk_profile() {
  PipelineConfig p;
  p.radius = 100.0;

  p.rotation = StageConfig{4, 0, 1, 1, 0.7, 0.0, 1, {1}, 16, 1, 100, 1e-3, 42};

  p.coarse = StageConfig{4, 1, 4, 150, 0.7, 1.5, 1, {150}, 8, 2, 200, 1e-3, 42};

  p.fine = StageConfig{4, 2, 5, 300, 0.2, 0.6, 1, {300}, 8, 1, 200, 1e-3, 42};

  apply_env_seed(p);
  return p;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void set_key(StageConfig& sc, const std::string& key, const std::string& value,
             const std::string& where) {
  try {
    if (key == "data_order") {
      sc.data_order = std::stoi(value);
    } else if (key == "control_order") {
      sc.control_order = std::stoi(value);
    } else if (key == "label_order") {
      sc.label_order = std::stoi(value);
    } else if (key == "n_labels") {
      sc.n_labels = std::stoul(value);
    } else if (key == "gamma") {
      sc.gamma = std::stod(value);
    } else if (key == "lambda") {
      sc.lambda = std::stod(value);
    } else if (key == "r") {
      sc.r = std::stoi(value);
    } else if (key == "fsn_channels") {
      sc.fsn_channels.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) sc.fsn_channels.push_back(std::stoul(item));
      }
    } else if (key == "c1") {
      sc.c1 = std::stoul(value);
    } else if (key == "crf_iterations") {
      sc.crf_iterations = std::stoi(value);
    } else if (key == "epochs") {
      sc.epochs = std::stoi(value);
    } else if (key == "learning_rate") {
      sc.learning_rate = std::stod(value);
    } else if (key == "seed") {
      sc.seed = std::stoull(value);
    } else {
      throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config: bad value for '" + key + "' in " + where);
  }
}

}  // namespace

PipelineConfig parse_config(std::istream& is) {
  PipelineConfig p = desk_profile();
  StageConfig* current = nullptr;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config: malformed section header: " + line);
      section = trim(line.substr(1, line.size() - 2));
      if (section == "stage.rotation") {
        current = &p.rotation;
      } else if (section == "stage.coarse") {
        current = &p.coarse;
      } else if (section == "stage.fine") {
        current = &p.fine;
      } else {
        throw ConfigError("config: unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " + std::to_string(lineno));
    if (!current)
      throw ConfigError("config: key outside a [stage.<name>] section at line " +
                        std::to_string(lineno));
    set_key(*current, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), section);
  }
  apply_env_seed(p);
  p.rotation.validate();
  p.coarse.validate();
  p.fine.validate();
  return p;
}

PipelineConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  return parse_config(is);
}

namespace {

void format_stage(std::ostream& os, const char* name, const StageConfig& sc) {
  os << "[stage." << name << "]\n";
  os << "data_order = " << sc.data_order << "\n";
  os << "control_order = " << sc.control_order << "\n";
  os << "label_order = " << sc.label_order << "\n";
  os << "n_labels = " << sc.n_labels << "\n";
  os << "gamma = " << sc.gamma << "\n";
  os << "lambda = " << sc.lambda << "\n";
  os << "r = " << sc.r << "\n";
  os << "fsn_channels = ";
  for (std::size_t i = 0; i < sc.fsn_channels.size(); ++i)
    os << (i ? "," : "") << sc.fsn_channels[i];
  os << "\n";
  os << "c1 = " << sc.c1 << "\n";
  os << "crf_iterations = " << sc.crf_iterations << "\n";
  os << "epochs = " << sc.epochs << "\n";
  os << "learning_rate = " << sc.learning_rate << "\n";
  os << "seed = " << sc.seed << "\n";
}

}  // namespace

std::string format_config(const PipelineConfig& config) {
  std::ostringstream os;
  format_stage(os, "rotation", config.rotation);
  os << "\n";
  format_stage(os, "coarse", config.coarse);
  os << "\n";
  format_stage(os, "fine", config.fine);
  return os.str();
}

void apply_env_seed(PipelineConfig& config) {
  if (const char* env = std::getenv("DDR_SEED")) {
    const std::uint64_t seed = std::strtoull(env, nullptr, 10);
    config.rotation.seed = seed;
    config.coarse.seed = seed;
    config.fine.seed = seed;
  }
}

}  // namespace ddr
