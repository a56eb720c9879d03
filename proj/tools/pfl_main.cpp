#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pfl/config.hpp"
#include "pfl/errors.hpp"
#include "pfl/experiments.hpp"
#include "pfl/gradcheck.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

struct Globals {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
};

void add_globals(CLI::App& app, Globals& g) {
  app.add_option("--config", g.config, "Experiment config file (key = value lines)");
  app.add_option("--seed", g.seed, "Seed for data, initialization and shuffling");
  app.add_option("--out", g.out, "Output path");
}

pfl::ExperimentConfig load_config(const Globals& g) {
  return g.config.empty() ? pfl::standard_benchmark() : pfl::load_experiment_config(g.config);
}

fs::path dataset_path(const fs::path& dir, int client) {
  return dir / ("client_" + std::to_string(client) + ".pfld");
}

std::vector<double> parse_rates(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw pfl::ConfigError("--fp-rates: invalid rate '" + tok + "'");
    }
  }
  return out;
}

struct GenData {
  std::optional<std::size_t> clients;
  std::optional<std::size_t> sequences;
  std::string out_dir;
  std::string fp_rates;
};

int run_gen_data(const Globals& g, const GenData& opt) {
  auto config = load_config(g);
  if (opt.clients) {
    if (*opt.clients == 0) throw pfl::ConfigError("--clients must be positive");
    while (config.clients.size() < *opt.clients) {
      const int id = static_cast<int>(config.clients.size());
      config.clients.push_back(pfl::ClientStyle::random(id, g.seed));
      config.sequences.push_back(config.sequences.back());
    }
    config.clients.resize(*opt.clients);
    config.sequences.resize(*opt.clients);
  }
  if (opt.sequences)
    for (auto& n : config.sequences) n = *opt.sequences;
  if (!opt.fp_rates.empty()) {
    const auto rates = parse_rates(opt.fp_rates);
    if (rates.size() != config.clients.size())
      throw pfl::ConfigError("--fp-rates: expected " + std::to_string(config.clients.size()) +
                             " rates, got " + std::to_string(rates.size()));
    for (std::size_t i = 0; i < rates.size(); ++i) config.clients[i].false_positive_rate = rates[i];
  }
  config.validate();

  const fs::path dir = opt.out_dir.empty() ? (g.out.empty() ? "data" : g.out) : opt.out_dir;
  fs::create_directories(dir);
  const auto datasets = pfl::make_datasets(config, g.seed);
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto path = dataset_path(dir, config.clients[i].client_id);
    pfl::save_dataset(datasets[i], path);
    std::cout << path.string() << ": " << datasets[i].size() << " sequences ("
              << datasets[i].train.size() << " train, " << datasets[i].test.size() << " test)\n";
  }
  std::ofstream(dir / "experiment.cfg") << pfl::format_experiment_config(config);
  return kOk;
}

std::vector<pfl::ClientDataset> datasets_for(const pfl::ExperimentConfig& config,
                                             const std::string& data_dir, std::uint64_t seed) {
  if (data_dir.empty()) return pfl::make_datasets(config, seed);
  std::vector<pfl::ClientDataset> out;
  for (const auto& c : config.clients) {
    auto ds = pfl::load_dataset(dataset_path(data_dir, c.client_id));
    if (ds.feature_dim != config.model.feature_dim)
      throw pfl::ConfigError("dataset feature_dim " + std::to_string(ds.feature_dim) +
                             " does not match model.feature_dim " +
                             std::to_string(config.model.feature_dim));
    out.push_back(std::move(ds));
  }
  return out;
}

struct Train {
  std::string variant = "pfl-lstr";
  std::string data_dir;
};

pfl::Variant variant_or_throw(const std::string& name) {
  const auto v = pfl::parse_variant(name);
  if (!v) throw pfl::ConfigError("unknown variant '" + name + "'");
  return *v;
}

int run_train(const Globals& g, const Train& opt) {
  const auto config = load_config(g);
  const auto variant = variant_or_throw(opt.variant);
  const auto datasets = datasets_for(config, opt.data_dir, g.seed);
  const auto run = pfl::run_variant(config, variant, datasets, g.seed);

  const fs::path dir = g.out.empty() ? "run" : g.out;
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw std::runtime_error("cannot write " + (dir / "train_log.jsonl").string());
  pfl::write_log(run.log, log);
  for (const auto& [id, params] : run.params)
    pfl::save_checkpoint(params, dir / ("client_" + std::to_string(id) + ".ckpt"));
  for (const auto& [id, report] : run.reports) {
    const auto row = pfl::row_from_report(variant, id, std::to_string(g.seed), report);
    std::printf("client %d macro precision %s\n", id,
                row.macro_precision ? std::to_string(*row.macro_precision).c_str() : "null");
  }
  return kOk;
}

struct Eval {
  std::string checkpoint;
  std::string data;
  bool ablate = false;
};

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

int run_eval(const Globals& g, const Eval& opt) {
  const auto config = load_config(g);
  const pfl::Lstr model(config.model);
  const auto params = pfl::load_checkpoint(opt.checkpoint);
  auto ds = pfl::load_dataset(opt.data);
  if (opt.ablate) ds = pfl::ablate_rear_view(ds);
  const auto report = pfl::evaluate(model, params, ds, config.memory);

  nlohmann::ordered_json j;
  j["samples"] = report.samples;
  j["confusion"] = report.confusion;
  j["lk_precision"] = optional_json(report.precision[0]);
  j["llc_precision"] = optional_json(report.precision[1]);
  j["rlc_precision"] = optional_json(report.precision[2]);
  j["fp_rate"] = optional_json(report.false_positive_rate);
  j["macro_precision"] = optional_json(report.macro_precision);
  const auto text = j.dump(2) + "\n";
  if (g.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(g.out);
    if (!out) throw std::runtime_error("cannot write " + g.out);
    out << text;
  }
  return kOk;
}

struct Compare {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::string format = "csv";
};

int run_compare(const Globals& g, const Compare& opt) {
  const auto config = load_config(g);
  std::vector<pfl::Variant> variants;
  if (opt.variants.empty())
    variants.assign(pfl::kAllVariants.begin(), pfl::kAllVariants.end());
  for (const auto& name : opt.variants) variants.push_back(variant_or_throw(name));
  std::vector<std::uint64_t> seeds = opt.seeds;
  if (seeds.empty()) seeds.push_back(g.seed);
  const auto format = opt.format == "csv" ? pfl::ReportFormat::kCsv : pfl::ReportFormat::kJsonLines;

  const auto table = pfl::compare(config, variants, seeds);
  if (g.out.empty())
    pfl::export_report(table, std::cout, format);
  else
    pfl::export_report(table, fs::path(g.out), format);
  return kOk;
}

int run_grad_check(const Globals& g, double tolerance) {
  const auto config = pfl::toy_model_config();
  const pfl::Lstr model(config);
  const auto params = model.init(g.seed);
  const auto batch = pfl::random_samples(config, 4, g.seed);
  const auto result = pfl::check_gradients(model, params, batch);
  std::printf("max relative error %.3e at %s[%zu] (%zu coordinates checked, %zu below floor)\n",
              result.max_rel_error, result.worst_param.c_str(), result.worst_index, result.checked,
              result.skipped);
  return result.max_rel_error <= tolerance ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized federated training of long short-term transformers", "pfl"};
  app.require_subcommand(1);
  Globals g;
  add_globals(app, g);

  auto* gen = app.add_subcommand("gen-data", "Generate per-client synthetic datasets");
  GenData gen_opt;
  add_globals(*gen, g);
  gen->add_option("--clients", gen_opt.clients, "Number of clients (extra clients get random styles)");
  gen->add_option("--sequences", gen_opt.sequences, "Sequences per client");
  gen->add_option("--out-dir", gen_opt.out_dir, "Directory for client_<id>.pfld files");
  gen->add_option("--fp-rates", gen_opt.fp_rates, "Comma-separated false-positive rate per client");

  auto* train = app.add_subcommand("train", "Train one variant and write its log and checkpoints");
  Train train_opt;
  add_globals(*train, g);
  train->add_option("--variant", train_opt.variant, "pfl-lstr, fedavg, local or pfl-lstr-2cams")
      ->capture_default_str();
  train->add_option("--data-dir", train_opt.data_dir, "Load datasets written by gen-data");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  Eval eval_opt;
  add_globals(*eval, g);
  eval->add_option("--checkpoint", eval_opt.checkpoint, "Parameter checkpoint")->required();
  eval->add_option("--data", eval_opt.data, "Dataset file")->required();
  eval->add_flag("--ablate-rear", eval_opt.ablate, "Zero the rear-view block before evaluating");

  auto* cmp = app.add_subcommand("compare", "Train and evaluate variants over seeds");
  Compare cmp_opt;
  add_globals(*cmp, g);
  cmp->add_option("--variants", cmp_opt.variants, "Variants to compare (default: all)")
      ->delimiter(',');
  cmp->add_option("--seeds", cmp_opt.seeds, "Seeds (default: --seed)")->delimiter(',');
  cmp->add_option("--format", cmp_opt.format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}))
      ->capture_default_str();

  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of a random toy model");
  double tolerance = 1e-3;
  add_globals(*grad, g);
  grad->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    if (*gen) return run_gen_data(g, gen_opt);
    if (*train) return run_train(g, train_opt);
    if (*eval) return run_eval(g, eval_opt);
    if (*cmp) return run_compare(g, cmp_opt);
    if (*grad) return run_grad_check(g, tolerance);
  } catch (const pfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
