// Copyright 2026 The crpslam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "crpslam/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <variant>

namespace crpslam::io {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'T', '1'};
constexpr std::uint8_t kDtypeF32 = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) out.push_back(trim(part));
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::uint64_t parse_uint(const std::string& s, const std::string& what) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw DataError(what + ": expected an unsigned integer, got '" + s + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw DataError(what + ": integer out of range '" + s + "'");
  }
}

bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw DataError(what + ": expected true/false, got '" + s + "'");
}

std::string pad4(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

// Setting table shared by config parsing and manifest echoes.
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "config tables assume 64-bit size_t");
using Field = std::variant<double*, std::size_t*, bool*>;

std::vector<std::pair<std::string, Field>> dynamics_fields(toy::ToyDynamicsConfig& c) {
  return {{"parent_size", &c.parent_size},
          {"lam_size", &c.lam_size},
          {"boundary", &c.boundary},
          {"variables", &c.variables},
          {"velocity_x", &c.velocity_x},
          {"velocity_y", &c.velocity_y},
          {"velocity_amplitude", &c.velocity_amplitude},
          {"diffusion", &c.diffusion},
          {"damping", &c.damping},
          {"coupling", &c.coupling},
          {"diurnal_amplitude", &c.diurnal_amplitude},
          {"noise_amplitude", &c.noise_amplitude},
          {"noise_correlation", &c.noise_correlation},
          {"dt", &c.dt},
          {"dx", &c.dx},
          {"substeps", &c.substeps},
          {"steps", &c.steps},
          {"burn_in", &c.burn_in},
          {"step_hours", &c.step_hours}};
}

std::vector<std::pair<std::string, Field>> model_fields(net::ForecasterConfig& c) {
  return {{"noise_dim", &c.noise_dim},
          {"embed_dim", &c.embed_dim},
          {"bottleneck_hidden", &c.bottleneck_hidden},
          {"residual", &c.residual}};
}

std::vector<std::pair<std::string, Field>> train_fields(train::TrainConfig& c) {
  return {{"members", &c.members},
          {"batch_size", &c.batch_size},
          {"steps_per_epoch", &c.steps_per_epoch},
          {"seed", &c.seed},
          {"warmup_epochs", &c.warmup_epochs},
          {"warmup_members", &c.warmup_members},
          {"collapse_spread_floor", &c.collapse_spread_floor},
          {"collapse_patience", &c.collapse_patience},
          {"clip_norm", &c.clip_norm},
          {"beta1", &c.beta1},
          {"beta2", &c.beta2},
          {"adam_epsilon", &c.adam_epsilon},
          {"val_members", &c.val_members},
          {"val_windows", &c.val_windows},
          {"freeze_noise_encoder", &c.freeze_noise_encoder}};
}

void assign(const Field& f, const std::string& value, const std::string& what) {
  std::visit(
      [&](auto* p) {
        using P = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<P, double>) {
          *p = parse_double(value, what);
        } else if constexpr (std::is_same_v<P, bool>) {
          *p = parse_bool(value, what);
        } else {
          *p = static_cast<P>(parse_uint(value, what));
        }
      },
      f);
}

std::string render(const Field& f) {
  return std::visit(
      [](auto* p) -> std::string {
        using P = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<P, double>) {
          return format_double(*p);
        } else if constexpr (std::is_same_v<P, bool>) {
          return *p ? "true" : "false";
        } else {
          return std::to_string(*p);
        }
      },
      f);
}

void write_fields(Manifest& m, const std::string& prefix,
                  const std::vector<std::pair<std::string, Field>>& fields) {
  for (const auto& [name, f] : fields) m.set(prefix + name, render(f));
}

void read_fields(const Manifest& m, const std::string& prefix,
                 const std::vector<std::pair<std::string, Field>>& fields) {
  for (const auto& [name, f] : fields) {
    if (const auto v = m.get(prefix + name)) assign(f, *v, prefix + name);
  }
}

std::string render_stages(const std::vector<train::TrainStage>& stages) {
  std::string s;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    s += (i ? ";" : "") + std::to_string(stages[i].epochs) + ":" +
         format_double(stages[i].learning_rate) + ":" + std::to_string(stages[i].ar_steps);
  }
  return s;
}

std::vector<train::TrainStage> parse_stages(const std::string& text) {
  std::vector<train::TrainStage> stages;
  for (const auto& item : split(text, ';')) {
    if (item.empty()) continue;
    const auto parts = split(item, ':');
    if (parts.size() != 3) {
      throw ConfigError("stages: expected epochs:lr:ar_steps, got '" + item + "'");
    }
    stages.push_back({parse_uint(parts[0], "stage epochs"), parse_double(parts[1], "stage lr"),
                      parse_uint(parts[2], "stage ar_steps")});
  }
  return stages;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& p : split(text, ',')) out.push_back(parse_uint(p, what));
  return out;
}

void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) {
        throw ConfigError(dir.string() + " is not empty (use --force to overwrite)");
      }
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir);
}

void save_param_map(const fs::path& dir, const std::map<std::string, std::vector<float>>& values,
                    const std::map<std::string, Shape>& shapes) {
  fs::create_directories(dir);
  for (const auto& [name, v] : values) {
    write_file_atomic(dir / (name + ".clt"), encode_tensor(shapes.at(name), v));
  }
}

}  // namespace

// ---- raw files ----

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- tensor container ----

std::string encode_tensor(const Shape& shape, std::span<const float> values) {
  if (shape.empty() || shape.size() > 255) throw DimensionError("tensor file: rank 1..255");
  if (shape_numel(shape) != values.size()) throw DimensionError("tensor file: shape/size mismatch");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kDtypeF32));
  out.push_back(static_cast<char>(shape.size()));
  for (auto d : shape) put_u64(out, d);
  out.reserve(out.size() + 4 * values.size());
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  return out;
}

FieldTensor decode_tensor(const std::string& bytes, const std::string& what) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError(what + ": bad magic");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kDtypeF32) {
    throw DataError(what + ": unsupported dtype code " +
                    std::to_string(static_cast<unsigned>(static_cast<std::uint8_t>(bytes[4]))));
  }
  const std::size_t ndim = static_cast<std::uint8_t>(bytes[5]);
  if (ndim == 0 || bytes.size() < 6 + 8 * ndim) throw DataError(what + ": truncated header");
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) shape[i] = get_u64(bytes, 6 + 8 * i);
  const std::size_t header = 6 + 8 * ndim;
  const std::size_t n = shape_numel(shape);
  if (bytes.size() - header != 4 * n) {
    throw DataError(what + ": payload is " + std::to_string(bytes.size() - header) +
                    " bytes, shape " + shape_string(shape) + " needs " + std::to_string(4 * n));
  }
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[header + 4 * i + b]))
              << (8 * b);
    }
    values[i] = std::bit_cast<float>(bits);
  }
  try {
    return FieldTensor(std::move(shape), std::move(values));
  } catch (const DimensionError& e) {
    throw DataError(what + ": " + e.what());
  }
}

void save_tensor(const fs::path& path, const FieldTensor& tensor) {
  write_file_atomic(path, encode_tensor(tensor.shape(), tensor.values()));
}

FieldTensor load_tensor(const fs::path& path) { return decode_tensor(read_file(path), path.string()); }

// ---- manifest ----

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw DataError("manifest line " + std::to_string(line_no) + ": missing '='");
    }
    m.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return m;
}

Manifest Manifest::load(const fs::path& path) {
  try {
    return parse(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void Manifest::save(const fs::path& path) const { write_file_atomic(path, to_string()); }

std::string Manifest::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

void Manifest::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find('=') != std::string::npos || key.find('\n') != std::string::npos ||
      value.find('\n') != std::string::npos) {
    throw ContractError("manifest: invalid key or value for '" + key + "'");
  }
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void Manifest::set(const std::string& key, double value) { set(key, format_double(value)); }
void Manifest::set_int(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

std::optional<std::string> Manifest::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string Manifest::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw DataError("manifest: missing key '" + key + "'");
  return *v;
}

double Manifest::require_double(const std::string& key) const {
  return parse_double(require(key), key);
}

std::uint64_t Manifest::require_int(const std::string& key) const {
  return parse_uint(require(key), key);
}

void Manifest::check(const std::string& kind) const {
  const auto version = require_int("format_version");
  if (version != kFormatVersion) {
    throw DataError("manifest: format_version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kFormatVersion) + ")");
  }
  const auto k = require("kind");
  if (k != kind) throw DataError("manifest: kind '" + k + "', expected '" + kind + "'");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  if (s == "+inf" || s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw DataError(what + ": expected a number, got '" + s + "'");
  }
  return v;
}

// ---- configuration echoes ----

void write_domain(Manifest& m, const DomainSpec& d, const std::string& prefix) {
  m.set_int(prefix + "height", d.height);
  m.set_int(prefix + "width", d.width);
  m.set_int(prefix + "boundary", d.boundary);
  m.set_int(prefix + "state_vars", d.state_vars);
  m.set_int(prefix + "forcing_vars", d.forcing_vars);
  m.set_int(prefix + "static_vars", d.static_vars);
  m.set(prefix + "step_hours", d.step_hours);
}

DomainSpec read_domain(const Manifest& m, const std::string& prefix) {
  DomainSpec d;
  d.height = m.require_int(prefix + "height");
  d.width = m.require_int(prefix + "width");
  d.boundary = m.require_int(prefix + "boundary");
  d.state_vars = m.require_int(prefix + "state_vars");
  d.forcing_vars = m.require_int(prefix + "forcing_vars");
  d.static_vars = m.require_int(prefix + "static_vars");
  d.step_hours = m.require_double(prefix + "step_hours");
  d.validate();
  return d;
}

void write_dynamics(Manifest& m, const toy::ToyDynamicsConfig& c) {
  auto copy = c;
  write_fields(m, "dynamics.", dynamics_fields(copy));
  m.set("dynamics.advective_courant", c.advective_courant());
  m.set("dynamics.diffusive_number", c.diffusive_number());
}

toy::ToyDynamicsConfig read_dynamics(const Manifest& m) {
  toy::ToyDynamicsConfig c;
  read_fields(m, "dynamics.", dynamics_fields(c));
  return c;
}

void write_model(Manifest& m, const net::ForecasterConfig& c) {
  auto copy = c;
  write_fields(m, "model.", model_fields(copy));
  m.set("model.channels", join_sizes(c.channels));
}

net::ForecasterConfig read_model(const Manifest& m) {
  net::ForecasterConfig c;
  read_fields(m, "model.", model_fields(c));
  if (const auto v = m.get("model.channels")) c.channels = parse_sizes(*v, "model.channels");
  return c;
}

void write_train_config(Manifest& m, const train::TrainConfig& c) {
  auto copy = c;
  write_fields(m, "train.", train_fields(copy));
  m.set("train.stages", render_stages(c.stages));
  m.set("train.estimator", train::to_string(c.estimator));
  m.set("train.ar_noise", to_string(c.ar_noise));
}

train::TrainConfig read_train_config(const Manifest& m) {
  train::TrainConfig c;
  read_fields(m, "train.", train_fields(c));
  if (const auto v = m.get("train.stages")) c.stages = parse_stages(*v);
  if (const auto v = m.get("train.estimator")) c.estimator = train::parse_estimator(*v);
  if (const auto v = m.get("train.ar_noise")) c.ar_noise = parse_noise_mode(*v);
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  Manifest m;
  try {
    m = Manifest::parse(text);
  } catch (const DataError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig rc;
  auto dyn = dynamics_fields(rc.dynamics);
  auto mod = model_fields(rc.model);
  auto trn = train_fields(rc.training);
  const auto lookup = [](auto& table, const std::string& name) -> const Field* {
    for (const auto& [n, f] : table) {
      if (n == name) return &f;
    }
    return nullptr;
  };
  for (const auto& [key, value] : m.entries()) {
    const auto dot = key.find('.');
    const auto section = key.substr(0, dot);
    const auto name = dot == std::string::npos ? "" : key.substr(dot + 1);
    try {
      const Field* f = nullptr;
      if (section == "dynamics") {
        f = lookup(dyn, name);
      } else if (section == "model") {
        if (name == "channels") {
          rc.model.channels = parse_sizes(value, key);
          continue;
        }
        f = lookup(mod, name);
      } else if (section == "train") {
        if (name == "stages") {
          rc.training.stages = parse_stages(value);
          continue;
        }
        if (name == "estimator") {
          rc.training.estimator = train::parse_estimator(value);
          continue;
        }
        if (name == "ar_noise") {
          rc.training.ar_noise = parse_noise_mode(value);
          continue;
        }
        f = lookup(trn, name);
      } else if (section == "data") {
        if (name == "n_train") rc.n_train = parse_uint(value, key);
        else if (name == "n_val") rc.n_val = parse_uint(value, key);
        else if (name == "n_test") rc.n_test = parse_uint(value, key);
        else throw ConfigError("config: unknown key '" + key + "'");
        continue;
      }
      if (!f) throw ConfigError("config: unknown key '" + key + "'");
      assign(*f, value, key);
    } catch (const DataError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  return rc;
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text);
}

// ---- dataset ----

void save_dataset(const fs::path& dir, const toy::EpisodeDataset& ds, bool force) {
  if (ds.is_normalized) throw ContractError("save_dataset: expects raw-unit data");
  prepare_dir(dir, force);
  Manifest m;
  m.set_int("format_version", kFormatVersion);
  m.set("kind", "dataset");
  m.set("id", ds.id());
  m.set_int("seed", ds.seed);
  write_domain(m, ds.domain);
  write_dynamics(m, ds.dynamics);
  const std::size_t d_f = ds.domain.forcing_vars;
  const std::pair<const char*, const std::vector<Trajectory>*> splits[] = {
      {"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}};
  for (const auto& [name, trajs] : splits) {
    m.set_int(std::string("n_") + name, trajs->size());
    for (std::size_t i = 0; i < trajs->size(); ++i) {
      const auto& traj = (*trajs)[i];
      const std::string stem = std::string(name) + "/traj_" + pad4(i);
      const std::size_t steps = traj.states.size();
      const auto& s0 = traj.states.front();
      std::vector<float> states;
      states.reserve(steps * s0.numel());
      std::vector<float> forcing;
      forcing.reserve(steps * d_f);
      for (std::size_t t = 0; t < steps; ++t) {
        states.insert(states.end(), traj.states[t].values().begin(), traj.states[t].values().end());
        const auto f = traj.forcings[t];
        const std::size_t plane = f.numel() / d_f;
        for (std::size_t k = 0; k < d_f; ++k) {
          const float v = f.values()[k * plane];
          for (std::size_t p = 0; p < plane; ++p) {
            if (f.values()[k * plane + p] != v) {
              throw DataError("save_dataset: forcing channel " + std::to_string(k) +
                              " is not spatially uniform");
            }
          }
          forcing.push_back(v);
        }
      }
      write_file_atomic(dir / (stem + ".states.clt"),
                        encode_tensor({steps, s0.dim(0), s0.dim(1), s0.dim(2)}, states));
      write_file_atomic(dir / (stem + ".forcing.clt"), encode_tensor({steps, d_f}, forcing));
      const std::string key = std::string(name) + "." + pad4(i);
      m.set(key + ".start_hour", traj.start_hour);
      m.set_int(key + ".seed", traj.seed);
    }
  }
  std::vector<float> stats(ds.stats.mean);
  stats.insert(stats.end(), ds.stats.stddev.begin(), ds.stats.stddev.end());
  write_file_atomic(dir / "stats.clt", encode_tensor({2, ds.stats.mean.size()}, stats));
  save_tensor(dir / "statics.clt", ds.statics);
  m.save(dir / "manifest.txt");
}

toy::EpisodeDataset load_dataset(const fs::path& dir) {
  const auto m = Manifest::load(dir / "manifest.txt");
  m.check("dataset");
  toy::EpisodeDataset ds;
  ds.domain = read_domain(m);
  ds.dynamics = read_dynamics(m);
  ds.seed = m.require_int("seed");
  ds.statics = load_tensor(dir / "statics.clt");
  const auto& dom = ds.domain;
  if (ds.statics.shape() != Shape{dom.static_vars, dom.height, dom.width}) {
    throw DataError("dataset: statics shape " + shape_string(ds.statics.shape()));
  }
  const auto stats = load_tensor(dir / "stats.clt");
  if (stats.shape() != Shape{2, dom.state_vars}) throw DataError("dataset: stats shape");
  ds.stats.mean.assign(stats.values().begin(), stats.values().begin() + dom.state_vars);
  ds.stats.stddev.assign(stats.values().begin() + dom.state_vars, stats.values().end());

  const std::size_t plane = dom.height * dom.width;
  const std::pair<const char*, std::vector<Trajectory>*> splits[] = {
      {"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}};
  for (const auto& [name, trajs] : splits) {
    const auto n = m.require_int(std::string("n_") + name);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string stem = std::string(name) + "/traj_" + pad4(i);
      const auto states = load_tensor(dir / (stem + ".states.clt"));
      const auto forcing = load_tensor(dir / (stem + ".forcing.clt"));
      if (states.rank() != 4 || states.dim(1) != dom.state_vars || states.dim(2) != dom.height ||
          states.dim(3) != dom.width) {
        throw DataError(stem + ": states shape " + shape_string(states.shape()));
      }
      const std::size_t steps = states.dim(0);
      if (forcing.shape() != Shape{steps, dom.forcing_vars}) {
        throw DataError(stem + ": forcing shape " + shape_string(forcing.shape()));
      }
      Trajectory traj;
      const std::string key = std::string(name) + "." + pad4(i);
      traj.start_hour = m.require_double(key + ".start_hour");
      traj.seed = m.require_int(key + ".seed");
      traj.statics = ds.statics;
      const std::size_t frame = dom.state_vars * plane;
      for (std::size_t t = 0; t < steps; ++t) {
        const auto sv = states.values().subspan(t * frame, frame);
        traj.states.emplace_back(Shape{dom.state_vars, dom.height, dom.width},
                                 std::vector<float>(sv.begin(), sv.end()));
        std::vector<float> f(dom.forcing_vars * plane);
        for (std::size_t k = 0; k < dom.forcing_vars; ++k) {
          std::fill_n(f.begin() + static_cast<std::ptrdiff_t>(k * plane), plane,
                      forcing.values()[t * dom.forcing_vars + k]);
        }
        traj.forcings.emplace_back(Shape{dom.forcing_vars, dom.height, dom.width}, std::move(f));
      }
      trajs->push_back(std::move(traj));
    }
  }
  if (ds.id() != m.require("id")) {
    throw DataError("dataset: stored id " + m.require("id") + " does not match contents " +
                    ds.id());
  }
  return ds;
}

// ---- checkpoint ----

void save_params(const fs::path& dir, const net::ForecasterParams<float>& params) {
  fs::create_directories(dir);
  for (const auto& [name, t] : params.tensors) save_tensor(dir / (name + ".clt"), t);
}

net::ForecasterParams<float> load_params(const fs::path& dir, const net::ForecasterConfig& config,
                                         const DomainSpec& domain) {
  net::ForecasterParams<float> p;
  p.config = config;
  p.domain = domain;
  for (const auto& [name, shape] : net::parameter_shapes(config, domain)) {
    auto t = load_tensor(dir / (name + ".clt"));
    if (t.shape() != shape) {
      throw DataError("checkpoint: parameter " + name + " has shape " + shape_string(t.shape()) +
                      ", model expects " + shape_string(shape));
    }
    p.tensors.emplace(name, std::move(t));
  }
  p.require_finite_values();
  return p;
}

void save_checkpoint(const fs::path& dir, const train::TrainState& state,
                     const train::TrainConfig& config, const std::string& dataset_id) {
  fs::create_directories(dir);
  save_params(dir / "params", state.params);
  save_params(dir / "best", state.best_params);
  const auto shapes = net::parameter_shapes(state.params.config, state.params.domain);
  save_param_map(dir / "adam_m", state.adam.m, shapes);
  save_param_map(dir / "adam_v", state.adam.v, shapes);
  write_file_atomic(dir / "train_log.csv", state.log.to_csv());

  Manifest m;
  m.set_int("format_version", kFormatVersion);
  m.set("kind", "checkpoint");
  m.set("id", state.params.checksum());
  m.set("best_id", state.best_params.checksum());
  m.set("dataset_id", dataset_id);
  write_domain(m, state.params.domain);
  write_model(m, state.params.config);
  write_train_config(m, config);
  m.set_int("next_epoch", state.next_epoch);
  m.set("best_val_crps", state.best_val_crps);
  m.set_int("best_epoch", state.best_epoch);
  m.set_int("low_spread_streak", state.low_spread_streak);
  m.set_int("warmup_remaining", state.warmup_remaining);
  m.set_int("adam_step", state.adam.step);
  m.set_int("warnings", state.log.warnings.size());
  for (std::size_t i = 0; i < state.log.warnings.size(); ++i) {
    m.set("warning." + std::to_string(i), state.log.warnings[i]);
  }
  m.save(dir / "manifest.txt");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const auto m = Manifest::load(dir / "manifest.txt");
  m.check("checkpoint");
  Checkpoint c;
  const auto domain = read_domain(m);
  const auto model = read_model(m);
  c.config = read_train_config(m);
  c.dataset_id = m.require("dataset_id");
  c.state.params = load_params(dir / "params", model, domain).detached(true);
  c.id = c.state.params.checksum();
  if (c.id != m.require("id")) {
    throw DataError("checkpoint: parameter checksum " + c.id + " does not match manifest id");
  }
  c.state.best_params = load_params(dir / "best", model, domain);
  c.state.next_epoch = m.require_int("next_epoch");
  c.state.best_val_crps = m.require_double("best_val_crps");
  c.state.best_epoch = m.require_int("best_epoch");
  c.state.low_spread_streak = m.require_int("low_spread_streak");
  c.state.warmup_remaining = m.require_int("warmup_remaining");
  c.state.adam.step = m.require_int("adam_step");
  for (const auto* sub : {"adam_m", "adam_v"}) {
    auto& target = std::string(sub) == "adam_m" ? c.state.adam.m : c.state.adam.v;
    if (!fs::exists(dir / sub)) continue;
    for (const auto& entry : fs::directory_iterator(dir / sub)) {
      if (entry.path().extension() != ".clt") continue;
      const auto t = load_tensor(entry.path());
      target[entry.path().stem().string()] = std::vector<float>(t.values().begin(), t.values().end());
    }
  }
  c.state.log = train::TrainLog::from_csv(read_file(dir / "train_log.csv"));
  const auto n_warn = m.require_int("warnings");
  for (std::size_t i = 0; i < n_warn; ++i) {
    c.state.log.warnings.push_back(m.require("warning." + std::to_string(i)));
  }
  return c;
}

net::ForecasterParams<float> load_forecast_params(const fs::path& dir, bool prefer_best) {
  const auto m = Manifest::load(dir / "manifest.txt");
  m.check("checkpoint");
  const auto domain = read_domain(m);
  const auto model = read_model(m);
  if (prefer_best && fs::exists(dir / "best")) return load_params(dir / "best", model, domain);
  return load_params(dir / "params", model, domain);
}

// ---- forecast archive ----

std::string to_string(net::NoiseMode mode) {
  return mode == net::NoiseMode::kPerStep ? "per-step" : "per-member";
}

net::NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "per-step") return net::NoiseMode::kPerStep;
  if (s == "per-member") return net::NoiseMode::kPerMember;
  throw ConfigError("unknown noise mode '" + s + "' (expected per-step or per-member)");
}

void save_forecast(const fs::path& dir, const ForecastArchive& a) {
  if (a.forecasts.empty()) throw ContractError("save_forecast: no forecasts");
  const auto& f0 = a.forecasts.front();
  const auto& dom = f0.domain;
  const std::size_t n = f0.members(), lead = f0.lead_steps();
  const bool has_noise = !f0.noise.empty();
  const std::size_t dz = has_noise ? f0.noise[0][0].z.size() : 0;
  std::vector<float> members, noise;
  Manifest m;
  m.set_int("format_version", kFormatVersion);
  m.set("kind", "forecast");
  m.set("checkpoint_id", a.checkpoint_id);
  m.set("dataset_id", a.dataset_id);
  m.set_int("seed", a.seed);
  m.set("noise_mode", to_string(a.noise_mode));
  m.set("split", a.split);
  m.set_int("cases", a.forecasts.size());
  m.set_int("members", n);
  m.set_int("lead_steps", lead);
  m.set_int("noise_dim", dz);
  m.set("denormalized", f0.denormalized ? "true" : "false");
  write_domain(m, dom);
  std::string trajs, starts;
  for (std::size_t c = 0; c < a.forecasts.size(); ++c) {
    const auto& f = a.forecasts[c];
    f.validate();
    if (!(f.domain == dom) || f.members() != n || f.lead_steps() != lead ||
        f.noise.empty() != !has_noise || f.denormalized != f0.denormalized) {
      throw DimensionError("save_forecast: cases differ in shape");
    }
    trajs += (c ? "," : "") + std::to_string(f.trajectory);
    starts += (c ? "," : "") + std::to_string(f.start_t);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t s = 0; s < lead; ++s) {
        const auto v = f.states[k][s].values();
        members.insert(members.end(), v.begin(), v.end());
        if (has_noise) {
          const auto& z = f.noise[k][s];
          if (z.z.size() != dz || z.member != k || z.step != s) {
            throw DimensionError("save_forecast: noise record out of order");
          }
          noise.insert(noise.end(), z.z.begin(), z.z.end());
        }
      }
    }
  }
  m.set("trajectories", trajs);
  m.set("start_steps", starts);
  fs::create_directories(dir);
  write_file_atomic(dir / "members.clt",
                    encode_tensor({a.forecasts.size(), n, lead, dom.state_vars,
                                   dom.interior_height(), dom.interior_width()},
                                  members));
  if (has_noise) {
    write_file_atomic(dir / "noise.clt", encode_tensor({a.forecasts.size(), n, lead, dz}, noise));
  }
  m.save(dir / "manifest.txt");
}

ForecastArchive load_forecast(const fs::path& dir) {
  const auto m = Manifest::load(dir / "manifest.txt");
  m.check("forecast");
  ForecastArchive a;
  a.checkpoint_id = m.require("checkpoint_id");
  a.dataset_id = m.require("dataset_id");
  a.seed = m.require_int("seed");
  a.noise_mode = parse_noise_mode(m.require("noise_mode"));
  a.split = m.require("split");
  const auto dom = read_domain(m);
  const std::size_t cases = m.require_int("cases"), n = m.require_int("members"),
                    lead = m.require_int("lead_steps"), dz = m.require_int("noise_dim");
  const bool denorm = parse_bool(m.require("denormalized"), "denormalized");
  const auto trajs = parse_sizes(m.require("trajectories"), "trajectories");
  const auto starts = parse_sizes(m.require("start_steps"), "start_steps");
  if (trajs.size() != cases || starts.size() != cases) {
    throw DataError("forecast archive: case lists disagree with 'cases'");
  }
  const Shape state_shape{dom.state_vars, dom.interior_height(), dom.interior_width()};
  const auto members = load_tensor(dir / "members.clt");
  if (members.shape() != Shape{cases, n, lead, state_shape[0], state_shape[1], state_shape[2]}) {
    throw DataError("forecast archive: members.clt has shape " + shape_string(members.shape()));
  }
  std::optional<FieldTensor> noise;
  if (dz > 0) {
    noise = load_tensor(dir / "noise.clt");
    if (noise->shape() != Shape{cases, n, lead, dz}) {
      throw DataError("forecast archive: noise.clt has shape " + shape_string(noise->shape()));
    }
  }
  const std::size_t frame = shape_numel(state_shape);
  for (std::size_t c = 0; c < cases; ++c) {
    forecast::EnsembleForecast f;
    f.domain = dom;
    f.trajectory = trajs[c];
    f.start_t = starts[c];
    f.denormalized = denorm;
    f.states.assign(n, {});
    if (noise) f.noise.assign(n, {});
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t s = 0; s < lead; ++s) {
        const std::size_t idx = (c * n + k) * lead + s;
        const auto v = members.values().subspan(idx * frame, frame);
        f.states[k].emplace_back(state_shape, std::vector<float>(v.begin(), v.end()));
        if (noise) {
          net::NoiseVector z;
          z.member = k;
          z.step = s;
          const auto zv = noise->values().subspan(idx * dz, dz);
          z.z.assign(zv.begin(), zv.end());
          f.noise[k].push_back(std::move(z));
        }
      }
    }
    a.forecasts.push_back(std::move(f));
  }
  return a;
}

}  // namespace crpslam::io
