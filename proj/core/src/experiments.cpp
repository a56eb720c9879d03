#include "pfl/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

namespace {

constexpr std::uint64_t kDataStream = 0xDA7A;
constexpr std::uint64_t kSplitStream = 0x5917;

constexpr std::array<const char*, 8> kColumns = {
    "variant", "client", "seed", "lk_precision", "llc_precision", "rlc_precision", "fp_rate",
    "macro_precision"};

std::string format_number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", *v);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::array<std::optional<double> ComparisonRow::*, 5> metric_fields() {
  return {&ComparisonRow::lk_precision, &ComparisonRow::llc_precision,
          &ComparisonRow::rlc_precision, &ComparisonRow::fp_rate,
          &ComparisonRow::macro_precision};
}

GeneratorConfig generator_for(const ExperimentConfig& config) {
  GeneratorConfig g;
  g.feature_dim = config.model.feature_dim;
  g.memory = config.memory;
  return g;
}

std::vector<ClientState> make_clients(const ExperimentConfig& config,
                                      const std::vector<ClientDataset>& datasets, bool ablate) {
  std::vector<ClientState> clients;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    clients.push_back(ClientState::make(config.clients[i].client_id,
                                        ablate ? ablate_rear_view(datasets[i]) : datasets[i],
                                        config.memory));
  }
  std::sort(clients.begin(), clients.end(),
            [](const ClientState& a, const ClientState& b) { return a.id < b.id; });
  return clients;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kPflLstr: return "pfl-lstr";
    case Variant::kFedAvg: return "fedavg";
    case Variant::kLocal: return "local";
    case Variant::kPflLstr2Cams: return "pfl-lstr-2cams";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view s) {
  for (auto v : kAllVariants)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  model.validate();
  memory.validate();
  federation.validate(clients.size());
  std::string bad;
  if (clients.size() != sequences.size()) bad += " [one sequence count per client]";
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) bad += " [0 < train_ratio < 1]";
  if (model.work_slots != memory.work_slots() || model.long_slots != memory.long_slots())
    bad += " [model slot counts match the memory]";
  if (model.feature_dim < prototype::kMinFeatureDim) bad += " [feature_dim >= 3]";
  for (std::size_t i = 0; i < clients.size(); ++i) {
    clients[i].validate();
    for (std::size_t j = 0; j < i; ++j)
      if (clients[j].client_id == clients[i].client_id) bad += " [unique client ids]";
  }
  for (auto n : sequences)
    if (n < 3) bad += " [at least 3 sequences per client]";
  if (!bad.empty()) throw ConfigError("invalid experiment config:" + bad);
}

ExperimentConfig standard_benchmark() {
  ExperimentConfig c;
  c.memory.fps = 2;
  c.model.feature_dim = 8;
  c.model.embed_dim = 16;
  c.model.heads = 2;
  c.model.latent_tokens = 4;
  c.model.encoder_layers = 1;
  c.model.decoder_layers = 1;
  c.model.ff_dim = 32;
  c.model.work_slots = c.memory.work_slots();
  c.model.long_slots = c.memory.long_slots();
  c.federation = FederationConfig::desk();

  const std::array<std::array<std::size_t, 3>, 3> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}}};
  const std::array<double, 3> fp = {0.2, 0.5, 0.3};
  const std::array<std::size_t, 3> sizes = {120, 90, 60};
  for (int i = 0; i < 3; ++i) {
    ClientStyle s;
    s.client_id = i;
    s.style_seed = static_cast<std::uint64_t>(i);
    s.gesture_permutation = perms[static_cast<std::size_t>(i)];
    s.false_positive_rate = fp[static_cast<std::size_t>(i)];
    c.clients.push_back(s);
    c.sequences.push_back(sizes[static_cast<std::size_t>(i)]);
  }
  return c;
}

std::vector<ClientDataset> make_datasets(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const auto g = generator_for(config);
  std::vector<ClientDataset> out;
  for (std::size_t i = 0; i < config.clients.size(); ++i) {
    const auto id = static_cast<std::uint64_t>(config.clients[i].client_id);
    auto ds = generate_client_dataset(config.clients[i], config.sequences[i],
                                      derive_seed(seed, {kDataStream, id}), g);
    out.push_back(split_train_test(std::move(ds), config.train_ratio,
                                   derive_seed(seed, {kSplitStream, id})));
  }
  return out;
}

std::map<int, double> heterogeneity_scores(const ExperimentConfig& config) {
  const auto g = generator_for(config);
  std::map<int, double> scores;
  for (const auto& own : config.clients) {
    ClientStyle clean = own;
    clean.noise_sigma = 0.0;
    const auto data = generate_client_dataset(clean, 300, 0, g);
    double sum = 0.0;
    std::size_t others = 0;
    for (const auto& other : config.clients) {
      if (other.client_id == own.client_id) continue;
      std::vector<Prediction> preds;
      for (const auto& s : data.sequences)
        preds.push_back({s.label, prototype_rule(other, s.frames.back(), g.feature_dim), s.scenario});
      sum += tally(preds).macro_precision.value_or(0.0);
      ++others;
    }
    scores[own.client_id] = others > 0 ? sum / static_cast<double>(others) : 1.0;
  }
  return scores;
}

int most_heterogeneous_client(const ExperimentConfig& config) {
  const auto scores = heterogeneity_scores(config);
  if (scores.empty()) throw std::invalid_argument("most_heterogeneous_client: no clients");
  auto best = scores.begin();
  for (auto it = scores.begin(); it != scores.end(); ++it)
    if (it->second < best->second) best = it;
  return best->first;
}

VariantRun run_variant(const ExperimentConfig& config, Variant variant,
                       const std::vector<ClientDataset>& datasets, std::uint64_t seed) {
  config.validate();
  if (datasets.size() != config.clients.size())
    throw std::invalid_argument("run_variant: one dataset per client required");
  const Lstr model(config.model);
  FederationConfig fed = config.federation;
  fed.seed = seed;

  const bool ablate = variant == Variant::kPflLstr2Cams;
  auto clients = make_clients(config, datasets, ablate);

  VariantRun run;
  run.variant = variant;
  switch (variant) {
    case Variant::kPflLstr:
    case Variant::kPflLstr2Cams: {
      auto result = run_training(model, fed, std::move(clients));
      for (const auto& c : result.clients)
        run.params[c.id] = compose_personalized(c.decoder, result.server.encoder).params;
      run.log = std::move(result.log);
      clients = std::move(result.clients);
      break;
    }
    case Variant::kFedAvg: {
      auto result = run_fedavg_baseline(model, fed, clients);
      run.params = std::move(result.params);
      run.log = std::move(result.log);
      break;
    }
    case Variant::kLocal: {
      auto result = run_local_baseline(model, fed, clients);
      run.params = std::move(result.params);
      run.log = std::move(result.log);
      break;
    }
  }
  for (const auto& c : clients) {
    run.reports[c.id] = evaluate(model, run.params.at(c.id), c.dataset, config.memory);
    run.split_fingerprints[c.id] = split_fingerprint(c.dataset);
  }
  return run;
}

std::vector<const ComparisonRow*> ComparisonTable::seed_rows(Variant v, int client) const {
  std::vector<const ComparisonRow*> out;
  for (const auto& r : rows)
    if (r.variant == v && r.client == client && r.seed != "mean" && r.seed != "stdev")
      out.push_back(&r);
  return out;
}

const ComparisonRow* ComparisonTable::aggregate_row(Variant v, int client,
                                                    std::string_view kind) const {
  for (const auto& r : rows)
    if (r.variant == v && r.client == client && r.seed == kind) return &r;
  return nullptr;
}

ComparisonRow row_from_report(Variant v, int client, std::string seed, const MetricsReport& r) {
  ComparisonRow row;
  row.variant = v;
  row.client = client;
  row.seed = std::move(seed);
  row.lk_precision = r.precision[0];
  row.llc_precision = r.precision[1];
  row.rlc_precision = r.precision[2];
  row.fp_rate = r.false_positive_rate;
  row.macro_precision = r.macro_precision;
  return row;
}

ComparisonTable compare(const ExperimentConfig& config, std::span<const Variant> variants,
                        std::span<const std::uint64_t> seeds) {
  if (variants.empty()) throw std::invalid_argument("compare: no variants");
  if (seeds.empty()) throw std::invalid_argument("compare: no seeds");
  config.validate();

  // runs[variant index][seed index]
  std::vector<std::vector<VariantRun>> runs(variants.size());
  for (auto seed : seeds) {
    const auto datasets = make_datasets(config, seed);
    for (std::size_t v = 0; v < variants.size(); ++v)
      runs[v].push_back(run_variant(config, variants[v], datasets, seed));
  }

  std::vector<int> ids;
  for (const auto& c : config.clients) ids.push_back(c.client_id);
  std::sort(ids.begin(), ids.end());

  ComparisonTable table;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (int id : ids) {
      const std::size_t first = table.rows.size();
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const auto& run = runs[v][s];
        table.rows.push_back(
            row_from_report(variants[v], id, std::to_string(seeds[s]), run.reports.at(id)));
        table.split_fingerprints[{variants[v], seeds[s], id}] = run.split_fingerprints.at(id);
      }
      ComparisonRow mean{variants[v], id, "mean", {}, {}, {}, {}, {}};
      ComparisonRow stdev{variants[v], id, "stdev", {}, {}, {}, {}, {}};
      for (auto field : metric_fields()) {
        std::vector<double> xs;
        for (std::size_t k = first; k < table.rows.size(); ++k)
          if (table.rows[k].*field) xs.push_back(*(table.rows[k].*field));
        if (xs.empty()) continue;
        double m = 0.0;
        for (double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        mean.*field = m;
        if (xs.size() >= 2) {
          double ss = 0.0;
          for (double x : xs) ss += (x - m) * (x - m);
          stdev.*field = std::sqrt(ss / static_cast<double>(xs.size() - 1));
        }
      }
      table.rows.push_back(std::move(mean));
      table.rows.push_back(std::move(stdev));
    }
  }
  return table;
}

void export_report(const ComparisonTable& table, std::ostream& out, ReportFormat format) {
  if (format == ReportFormat::kCsv) {
    for (std::size_t i = 0; i < kColumns.size(); ++i) out << (i ? "," : "") << kColumns[i];
    out << '\n';
    for (const auto& r : table.rows) {
      out << to_string(r.variant) << ',' << r.client << ',' << r.seed;
      for (auto field : metric_fields()) out << ',' << format_number(r.*field);
      out << '\n';
    }
    return;
  }
  for (const auto& r : table.rows) {
    nlohmann::ordered_json j;
    j[kColumns[0]] = to_string(r.variant);
    j[kColumns[1]] = r.client;
    j[kColumns[2]] = r.seed;
    std::size_t col = 3;
    for (auto field : metric_fields()) {
      if (r.*field)
        j[kColumns[col]] = *(r.*field);
      else
        j[kColumns[col]] = nullptr;
      ++col;
    }
    out << j.dump() << '\n';
  }
}

void export_report(const ComparisonTable& table, const std::filesystem::path& path,
                   ReportFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  export_report(table, out, format);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

std::optional<double> parse_number(std::string_view tok, std::size_t line) {
  if (tok.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError("invalid number '" + std::string(tok) + "'", line);
  return v;
}

Variant variant_or_throw(std::string_view s, std::size_t line) {
  const auto v = parse_variant(s);
  if (!v) throw ParseError("unknown variant '" + std::string(s) + "'", line);
  return *v;
}

}  // namespace

ComparisonTable import_report(std::istream& in, ReportFormat format) {
  ComparisonTable table;
  std::string line;
  std::size_t n = 0;
  if (format == ReportFormat::kCsv) {
    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    ++n;
    std::string header;
    for (std::size_t i = 0; i < kColumns.size(); ++i) header += (i ? "," : "") + std::string(kColumns[i]);
    if (line != header) throw ParseError("unexpected header", n);
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      std::vector<std::string_view> f;
      std::string_view rest(line);
      while (true) {
        const auto comma = rest.find(',');
        f.push_back(rest.substr(0, comma));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      if (f.size() != kColumns.size())
        throw ParseError("expected " + std::to_string(kColumns.size()) + " fields", n);
      ComparisonRow r;
      r.variant = variant_or_throw(f[0], n);
      int client = 0;
      auto [p, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), client);
      if (ec != std::errc() || p != f[1].data() + f[1].size())
        throw ParseError("invalid client id", n);
      r.client = client;
      r.seed = std::string(f[2]);
      std::size_t col = 3;
      for (auto field : metric_fields()) r.*field = parse_number(f[col++], n);
      table.rows.push_back(std::move(r));
    }
    return table;
  }
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ComparisonRow r;
      r.variant = variant_or_throw(j.at(kColumns[0]).get<std::string>(), n);
      r.client = j.at(kColumns[1]).get<int>();
      r.seed = j.at(kColumns[2]).get<std::string>();
      std::size_t col = 3;
      for (auto field : metric_fields()) {
        const auto& v = j.at(kColumns[col++]);
        if (!v.is_null()) r.*field = v.get<double>();
      }
      table.rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), n);
    }
  }
  return table;
}

}  // namespace pfl
