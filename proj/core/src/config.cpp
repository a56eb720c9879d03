#include "pfl/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <vector>

#include "pfl/errors.hpp"

namespace pfl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

template <typename T>
T parse_value(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw std::invalid_argument("invalid value '" + s + "'");
  return v;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

template <typename T, typename Owner>
Setter field(Owner ExperimentConfig::*part, T Owner::*member) {
  return [=](ExperimentConfig& c, const std::string& v) { (c.*part).*member = parse_value<T>(v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.feature_dim", field(&ExperimentConfig::model, &ModelConfig::feature_dim)},
      {"model.embed_dim", field(&ExperimentConfig::model, &ModelConfig::embed_dim)},
      {"model.heads", field(&ExperimentConfig::model, &ModelConfig::heads)},
      {"model.latent_tokens", field(&ExperimentConfig::model, &ModelConfig::latent_tokens)},
      {"model.encoder_layers", field(&ExperimentConfig::model, &ModelConfig::encoder_layers)},
      {"model.decoder_layers", field(&ExperimentConfig::model, &ModelConfig::decoder_layers)},
      {"model.ff_dim", field(&ExperimentConfig::model, &ModelConfig::ff_dim)},
      {"memory.fps", field(&ExperimentConfig::memory, &MemoryConfig::fps)},
      {"memory.work_seconds", field(&ExperimentConfig::memory, &MemoryConfig::work_seconds)},
      {"memory.long_seconds", field(&ExperimentConfig::memory, &MemoryConfig::long_seconds)},
      {"federation.rounds", field(&ExperimentConfig::federation, &FederationConfig::rounds)},
      {"federation.decoder_epochs",
       field(&ExperimentConfig::federation, &FederationConfig::decoder_epochs)},
      {"federation.encoder_epochs",
       field(&ExperimentConfig::federation, &FederationConfig::encoder_epochs)},
      {"federation.encoder_lr", field(&ExperimentConfig::federation, &FederationConfig::encoder_lr)},
      {"federation.fedavg_lr", field(&ExperimentConfig::federation, &FederationConfig::fedavg_lr)},
      {"federation.decoder_lr", field(&ExperimentConfig::federation, &FederationConfig::decoder_lr)},
      {"federation.select_fraction",
       field(&ExperimentConfig::federation, &FederationConfig::select_fraction)},
      {"federation.local_epochs",
       field(&ExperimentConfig::federation, &FederationConfig::local_epochs)},
      {"federation.batch_size", field(&ExperimentConfig::federation, &FederationConfig::batch_size)},
      {"federation.seed", field(&ExperimentConfig::federation, &FederationConfig::seed)},
      {"experiment.train_ratio",
       [](ExperimentConfig& c, const std::string& v) { c.train_ratio = parse_value<double>(v); }},
      {"clients",
       [](ExperimentConfig& c, const std::string& v) {
         const auto n = parse_value<std::size_t>(v);
         if (n == 0) throw std::invalid_argument("clients must be positive");
         while (c.clients.size() < n) {
           ClientStyle s;
           s.client_id = static_cast<int>(c.clients.size());
           s.style_seed = static_cast<std::uint64_t>(s.client_id);
           c.clients.push_back(s);
           c.sequences.push_back(c.sequences.empty() ? 60 : c.sequences.back());
         }
         c.clients.resize(n);
         c.sequences.resize(n);
       }},
  };
  return table;
}

void set_client_field(ExperimentConfig& c, std::size_t index, const std::string& name,
                      const std::string& v) {
  if (index >= c.clients.size())
    throw std::invalid_argument("client index " + std::to_string(index) + " >= clients (" +
                                std::to_string(c.clients.size()) + "); set 'clients' first");
  auto& s = c.clients[index];
  if (name == "permutation") {
    std::istringstream in(v);
    std::array<std::size_t, 3> p{};
    for (auto& x : p)
      if (!(in >> x)) throw std::invalid_argument("permutation needs three integers");
    std::string extra;
    if (in >> extra) throw std::invalid_argument("permutation needs three integers");
    s.gesture_permutation = p;
  } else if (name == "false_positive_rate") {
    s.false_positive_rate = parse_value<double>(v);
  } else if (name == "gesture_amplitude") {
    s.gesture_amplitude = parse_value<double>(v);
  } else if (name == "noise_sigma") {
    s.noise_sigma = parse_value<double>(v);
  } else if (name == "style_seed") {
    s.style_seed = parse_value<std::uint64_t>(v);
  } else if (name == "sequences") {
    c.sequences[index] = parse_value<std::size_t>(v);
  } else {
    throw std::invalid_argument("unknown client field '" + name + "'");
  }
}

void apply(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "federation.preset") {
    const auto seed = c.federation.seed;
    if (value == "desk")
      c.federation = FederationConfig::desk();
    else if (value == "paper-rates")
      c.federation = FederationConfig::paper_rates();
    else
      throw std::invalid_argument("unknown preset '" + value + "' (desk, paper-rates)");
    c.federation.seed = seed;
    return;
  }
  if (key.rfind("client.", 0) == 0) {
    const auto dot = key.find('.', 7);
    if (dot == std::string::npos) throw std::invalid_argument("expected client.<index>.<field>");
    const auto index = parse_value<std::size_t>(key.substr(7, dot - 7));
    set_client_field(c, index, key.substr(dot + 1), value);
    return;
  }
  const auto it = setters().find(key);
  if (it == setters().end()) throw std::invalid_argument("unknown key '" + key + "'");
  it->second(c, value);
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& in, ExperimentConfig base) {
  struct Entry {
    std::size_t line;
    std::string key, value;
  };
  std::vector<Entry> entries;
  std::string raw;
  std::size_t n = 0;
  while (std::getline(in, raw)) {
    ++n;
    const auto hash = raw.find('#');
    const auto line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(n) + ": expected 'key = value'");
    auto key = trim(std::string_view(line).substr(0, eq));
    auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(n) + ": expected 'key = value'");
    entries.push_back({n, std::move(key), std::move(value)});
  }

  // Presets first so explicit keys override them.
  std::stable_partition(entries.begin(), entries.end(),
                        [](const Entry& e) { return e.key == "federation.preset"; });
  for (const auto& e : entries) {
    try {
      apply(base, e.key, e.value);
    } catch (const std::invalid_argument& err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  try {
    base.memory.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string("memory: ") + err.what());
  }
  base.model.work_slots = base.memory.work_slots();
  base.model.long_slots = base.memory.long_slots();
  base.validate();
  return base;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_experiment_config(in, std::move(base));
}

std::string format_experiment_config(const ExperimentConfig& c) {
  std::ostringstream out;
  const auto& m = c.model;
  out << "model.feature_dim = " << m.feature_dim << '\n'
      << "model.embed_dim = " << m.embed_dim << '\n'
      << "model.heads = " << m.heads << '\n'
      << "model.latent_tokens = " << m.latent_tokens << '\n'
      << "model.encoder_layers = " << m.encoder_layers << '\n'
      << "model.decoder_layers = " << m.decoder_layers << '\n'
      << "model.ff_dim = " << m.ff_dim << '\n'
      << "memory.fps = " << c.memory.fps << '\n'
      << "memory.work_seconds = " << fmt(c.memory.work_seconds) << '\n'
      << "memory.long_seconds = " << fmt(c.memory.long_seconds) << '\n';
  const auto& f = c.federation;
  out << "federation.rounds = " << f.rounds << '\n'
      << "federation.decoder_epochs = " << f.decoder_epochs << '\n'
      << "federation.encoder_epochs = " << f.encoder_epochs << '\n'
      << "federation.encoder_lr = " << fmt(f.encoder_lr) << '\n'
      << "federation.fedavg_lr = " << fmt(f.fedavg_lr) << '\n'
      << "federation.decoder_lr = " << fmt(f.decoder_lr) << '\n'
      << "federation.select_fraction = " << fmt(f.select_fraction) << '\n'
      << "federation.local_epochs = " << f.local_epochs << '\n'
      << "federation.batch_size = " << f.batch_size << '\n'
      << "federation.seed = " << f.seed << '\n'
      << "experiment.train_ratio = " << fmt(c.train_ratio) << '\n'
      << "clients = " << c.clients.size() << '\n';
  for (std::size_t i = 0; i < c.clients.size(); ++i) {
    const auto& s = c.clients[i];
    const std::string p = "client." + std::to_string(i) + ".";
    out << p << "permutation = " << s.gesture_permutation[0] << ' ' << s.gesture_permutation[1]
        << ' ' << s.gesture_permutation[2] << '\n'
        << p << "false_positive_rate = " << fmt(s.false_positive_rate) << '\n'
        << p << "gesture_amplitude = " << fmt(s.gesture_amplitude) << '\n'
        << p << "noise_sigma = " << fmt(s.noise_sigma) << '\n'
        << p << "style_seed = " << s.style_seed << '\n'
        << p << "sequences = " << c.sequences[i] << '\n';
  }
  return out.str();
}

}  // namespace pfl
