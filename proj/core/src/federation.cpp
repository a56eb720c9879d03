#include "pfl/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

namespace {

constexpr std::uint64_t kSelectStream = 0x5E1EC7;

void check_client_order(std::span<const ClientState> clients) {
  if (clients.empty()) throw std::invalid_argument("federation needs at least one client");
  for (std::size_t i = 1; i < clients.size(); ++i)
    if (clients[i - 1].id >= clients[i].id)
      throw std::invalid_argument("clients must be sorted by unique id");
  for (const auto& c : clients)
    if (c.sample_count() == 0)
      throw std::invalid_argument("client " + std::to_string(c.id) + " has no training samples");
}

std::vector<Prediction> test_predictions(const Lstr& model, const ParamSet& params,
                                         const ClientState& client) {
  if (client.dataset.test.empty()) return {};
  return predict_sequences([&](const MemorySnapshot& m) { return model.predict(params, m); },
                           client.dataset, client.dataset.test, client.memory);
}

LogRecord make_record(std::size_t round, std::optional<int> client, double loss,
                      std::span<const Prediction> predictions) {
  LogRecord r;
  r.round = round;
  r.client = client;
  r.loss = loss;
  if (!predictions.empty()) r.precision = tally(predictions).precision;
  return r;
}

// Per-client records for `params_of(client)` plus the pooled server record.
template <typename ParamsOf>
TrainingLog evaluate_round(const Lstr& model, std::size_t round,
                           std::span<const ClientState> clients, ParamsOf params_of) {
  TrainingLog log;
  std::vector<Prediction> pooled;
  double weighted = 0.0;
  std::size_t total = 0;
  for (const auto& c : clients) {
    const ParamSet& params = params_of(c);
    const double loss = mean_loss(model, params, c.samples);
    const auto preds = test_predictions(model, params, c);
    log.push_back(make_record(round, c.id, loss, preds));
    pooled.insert(pooled.end(), preds.begin(), preds.end());
    weighted += loss * static_cast<double>(c.sample_count());
    total += c.sample_count();
  }
  log.push_back(make_record(round, std::nullopt, weighted / static_cast<double>(total), pooled));
  return log;
}

void append_client_records(std::span<ClientState> clients, const TrainingLog& log) {
  for (const auto& rec : log) {
    if (!rec.client) continue;
    for (auto& c : clients)
      if (c.id == *rec.client) c.log.push_back(rec);
  }
}

}  // namespace

void FederationConfig::validate(std::size_t clients) const {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const char* what) {
    if (!ok) bad.emplace_back(what);
  };
  check(clients >= 1, "clients >= 1");
  check(decoder_epochs >= 1, "decoder_epochs >= 1");
  check(encoder_epochs >= 1, "encoder_epochs >= 1");
  check(encoder_lr > 0.0, "encoder_lr > 0");
  check(decoder_lr > 0.0, "decoder_lr > 0");
  check(fedavg_lr > 0.0, "fedavg_lr > 0");
  check(select_fraction > 0.0 && select_fraction <= 1.0, "0 < select_fraction <= 1");
  check(batch_size >= 1, "batch_size >= 1");
  if (clients >= 1 && select_fraction > 0.0 && select_fraction <= 1.0) {
    const auto n = selected_count(clients);
    check(n >= 1 && n <= clients, "1 <= ceil(select_fraction * clients) <= clients");
  }
  if (!bad.empty()) {
    std::string msg = "invalid federation config:";
    for (const auto& b : bad) msg += " [" + b + "]";
    throw ConfigError(msg);
  }
}

std::size_t FederationConfig::selected_count(std::size_t clients) const {
  // The tolerance keeps products like 0.1 * 30 from rounding up a whole client.
  return static_cast<std::size_t>(std::ceil(select_fraction * static_cast<double>(clients) - 1e-9));
}

FederationConfig FederationConfig::paper_rates() { return FederationConfig{}; }

FederationConfig FederationConfig::desk() {
  FederationConfig c;
  c.rounds = 20;
  c.decoder_epochs = 5;
  c.encoder_epochs = 1;
  c.encoder_lr = 0.05;
  c.decoder_lr = 0.05;
  c.fedavg_lr = 0.05;
  c.local_epochs = 20;
  c.batch_size = 8;
  return c;
}

ClientState ClientState::make(int id, ClientDataset dataset, const MemoryConfig& memory) {
  dataset.validate_split();
  ClientState c;
  c.id = id;
  c.memory = memory;
  c.samples = training_samples(dataset, dataset.train, memory);
  c.dataset = std::move(dataset);
  return c;
}

std::size_t ServerState::total_samples() const {
  std::size_t n = 0;
  for (const auto& [id, count] : registry) n += count;
  return n;
}

std::uint64_t EpochSchedule::epoch_seed(std::size_t epoch) const {
  return derive_seed(seed, {static_cast<std::uint64_t>(stream), static_cast<std::uint64_t>(epoch)});
}

std::vector<Sample> training_samples(const ClientDataset& ds, std::span<const std::size_t> indices,
                                     const MemoryConfig& memory) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  MemoryState state(memory, ds.frame_width());
  for (auto i : indices) {
    const auto& seq = ds.sequences.at(i);
    state.reset();
    for (const auto& f : seq.frames) state.push(f);
    out.push_back(Sample{state.snapshot(), seq.label});
  }
  return out;
}

TrainResult train_epochs(const Lstr& model, ParamSet params, std::span<const Sample> samples,
                         PartitionSel partition, double lr, std::size_t batch_size,
                         std::size_t epochs, const EpochSchedule& schedule) {
  TrainResult result;
  if (epochs == 0) {
    result.params = std::move(params);
    return result;
  }
  if (samples.empty()) throw std::invalid_argument("train_epochs: no samples");
  if (batch_size == 0) throw std::invalid_argument("train_epochs: batch_size must be positive");

  const bool cached = partition == PartitionSel::kDecoder;
  std::vector<ContextSample> contexts;
  if (cached) {
    contexts.reserve(samples.size());
    for (const auto& s : samples) contexts.push_back({model.encode_context(params, s.memory), s.label});
  }

  std::vector<std::size_t> order(samples.size());
  std::vector<Sample> batch;
  std::vector<ContextSample> context_batch;
  for (std::size_t ep = 0; ep < epochs; ++ep) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(schedule.epoch_seed(schedule.first_epoch + ep));
    std::shuffle(order.begin(), order.end(), rng.engine());

    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      LossAndGrads lg;
      if (cached) {
        context_batch.clear();
        for (std::size_t k = begin; k < end; ++k) context_batch.push_back(contexts[order[k]]);
        lg = model.decoder_loss_and_grads(params, context_batch);
      } else {
        batch.clear();
        for (std::size_t k = begin; k < end; ++k) batch.push_back(samples[order[k]]);
        lg = model.loss_and_grads(params, batch, partition);
      }
      params = sgd_step(params, lg.grads, lr, partition);
      total += lg.loss * static_cast<double>(end - begin);
    }
    result.last_epoch_loss = total / static_cast<double>(samples.size());
  }
  result.params = std::move(params);
  return result;
}

double mean_loss(const Lstr& model, const ParamSet& params, std::span<const Sample> samples) {
  if (samples.empty()) throw std::invalid_argument("mean_loss: no samples");
  double total = 0.0;
  for (const auto& s : samples)
    total += cross_entropy(model.forward(params, s.memory), static_cast<std::size_t>(s.label));
  return total / static_cast<double>(samples.size());
}

RoundPlan select_clients(const ServerState& server, double fraction) {
  if (server.registry.empty()) throw std::invalid_argument("select_clients: no clients registered");
  std::vector<int> ids;
  for (const auto& [id, n] : server.registry) ids.push_back(id);
  FederationConfig probe;
  probe.select_fraction = fraction;
  const std::size_t m = std::clamp<std::size_t>(probe.selected_count(ids.size()), 1, ids.size());

  Rng rng(derive_seed(server.seed, {kSelectStream, server.round}));
  std::shuffle(ids.begin(), ids.end(), rng.engine());
  ids.resize(m);
  std::sort(ids.begin(), ids.end());

  RoundPlan plan;
  plan.selected = std::move(ids);
  for (int id : plan.selected) plan.selected_samples += server.registry.at(id);
  return plan;
}

ParamSet aggregate(std::span<const Candidate> candidates) {
  if (candidates.empty()) throw std::invalid_argument("aggregate: no candidates");
  std::vector<const Candidate*> order;
  for (const auto& c : candidates) order.push_back(&c);
  std::sort(order.begin(), order.end(),
            [](const Candidate* a, const Candidate* b) { return a->client_id < b->client_id; });

  const ParamSet& first = order.front()->params;
  std::size_t total = 0;
  bool identical = true;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Candidate& c = *order[i];
    if (i > 0 && c.client_id == order[i - 1]->client_id)
      throw std::invalid_argument("aggregate: duplicate client id " + std::to_string(c.client_id));
    if (c.samples == 0)
      throw std::invalid_argument("aggregate: client " + std::to_string(c.client_id) + " has zero samples");
    if (!c.params.same_layout(first))
      throw std::invalid_argument("aggregate: shape mismatch for client " + std::to_string(c.client_id));
    identical = identical && c.params.bit_equal(first);
    total += c.samples;
  }
  if (identical) return first;

  std::vector<double> weights;
  for (const auto* c : order)
    weights.push_back(static_cast<double>(c->samples) / static_cast<double>(total));

  // x0 + sum_i w_i (x_i - x0), clamped to the candidates' range.
  ParamSet out = first;
  for (auto& [name, param] : out) {
    auto dst = param.value.data();
    const auto base = first.tensor(name).data();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      double acc = 0.0;
      double lo = base[k], hi = base[k];
      for (std::size_t i = 0; i < order.size(); ++i) {
        const double x = order[i]->params.tensor(name)[k];
        acc += weights[i] * (x - base[k]);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      dst[k] = std::clamp(base[k] + acc, lo, hi);
    }
  }
  return out;
}

Candidate client_full_update(const Lstr& model, const ClientState& client, const ParamSet& global,
                             const FederationConfig& config, std::size_t epochs,
                             std::size_t first_epoch, double lr) {
  const EpochSchedule schedule{config.seed, EpochSchedule::kFull, first_epoch};
  auto r = train_epochs(model, global, client.samples, PartitionSel::kAll, lr, config.batch_size,
                        epochs, schedule);
  return Candidate{client.id, std::move(r.params), client.sample_count()};
}

TrainResult client_decoder_update(const Lstr& model, const ClientState& client,
                                  const ParamSet& encoder, const FederationConfig& config,
                                  std::size_t round) {
  if (round == 0) throw std::invalid_argument("client_decoder_update: rounds start at 1");
  const EpochSchedule schedule{config.seed, EpochSchedule::kDecoder,
                               (round - 1) * config.decoder_epochs};
  auto r = train_epochs(model, merge(encoder, client.decoder), client.samples,
                        PartitionSel::kDecoder, config.decoder_lr, config.batch_size,
                        config.decoder_epochs, schedule);
  r.params = r.params.subset(Partition::kDecoder);
  return r;
}

Candidate selected_encoder_update(const Lstr& model, const ClientState& client,
                                  const ParamSet& encoder, const ParamSet& decoder,
                                  const FederationConfig& config, std::size_t round) {
  if (round == 0) throw std::invalid_argument("selected_encoder_update: rounds start at 1");
  const EpochSchedule schedule{config.seed, EpochSchedule::kEncoder,
                               (round - 1) * config.encoder_epochs};
  auto r = train_epochs(model, merge(encoder, decoder), client.samples, PartitionSel::kEncoder,
                        config.encoder_lr, config.batch_size, config.encoder_epochs, schedule);
  return Candidate{client.id, r.params.subset(Partition::kEncoder), client.sample_count()};
}

PersonalizedModel compose_personalized(const ParamSet& decoder, const ParamSet& encoder) {
  return PersonalizedModel{merge(encoder, decoder)};
}

ServerState fedavg_init(const Lstr& model, std::span<ClientState> clients,
                        const FederationConfig& config) {
  check_client_order(clients);
  config.validate(clients.size());
  const ParamSet initial = model.init(config.seed);

  std::vector<Candidate> candidates;
  for (const auto& c : clients)
    candidates.push_back(
        client_full_update(model, c, initial, config, config.encoder_epochs, 0, config.fedavg_lr));
  const ParamSet global = aggregate(candidates);

  ServerState server;
  server.seed = config.seed;
  server.round = 1;
  server.encoder = global.subset(Partition::kEncoder);
  const ParamSet decoder = global.subset(Partition::kDecoder);
  for (auto& c : clients) {
    server.registry[c.id] = c.sample_count();
    c.decoder = decoder;
  }
  return server;
}

TrainingLog run_round(const Lstr& model, ServerState& server, std::span<ClientState> clients,
                      const FederationConfig& config) {
  if (server.round == 0) throw std::invalid_argument("run_round: server is not initialized");
  check_client_order(clients);
  config.validate(clients.size());
  if (server.registry.size() != clients.size())
    throw std::invalid_argument("run_round: client set does not match the server registry");
  for (const auto& c : clients)
    if (!server.registry.count(c.id) || server.registry.at(c.id) != c.sample_count())
      throw std::invalid_argument("run_round: client " + std::to_string(c.id) + " is not registered");

  const std::size_t t = server.round;
  std::vector<ParamSet> decoders;
  for (const auto& c : clients)
    decoders.push_back(client_decoder_update(model, c, server.encoder, config, t).params);

  const RoundPlan plan = select_clients(server, config.select_fraction);
  std::vector<Candidate> candidates;
  for (int id : plan.selected) {
    const auto pos = static_cast<std::size_t>(
        std::find_if(clients.begin(), clients.end(), [&](const ClientState& c) { return c.id == id; }) -
        clients.begin());
    candidates.push_back(
        selected_encoder_update(model, clients[pos], server.encoder, decoders[pos], config, t));
  }
  server.encoder = aggregate(candidates);
  for (std::size_t i = 0; i < clients.size(); ++i) clients[i].decoder = std::move(decoders[i]);
  server.round = t + 1;

  std::map<int, ParamSet> composed;
  for (const auto& c : clients) composed[c.id] = merge(server.encoder, c.decoder);
  auto log = evaluate_round(model, t, clients,
                            [&](const ClientState& c) -> const ParamSet& { return composed.at(c.id); });
  append_client_records(clients, log);
  return log;
}

FederationResult run_training(const Lstr& model, const FederationConfig& config,
                              std::vector<ClientState> clients) {
  FederationResult result;
  result.server = fedavg_init(model, clients, config);
  {
    std::map<int, ParamSet> composed;
    for (const auto& c : clients) composed[c.id] = merge(result.server.encoder, c.decoder);
    result.log = evaluate_round(model, 0, clients, [&](const ClientState& c) -> const ParamSet& {
      return composed.at(c.id);
    });
    append_client_records(clients, result.log);
  }
  auto rest = resume_training(model, config, std::move(result.server), std::move(clients));
  result.log.insert(result.log.end(), rest.log.begin(), rest.log.end());
  result.server = std::move(rest.server);
  result.clients = std::move(rest.clients);
  return result;
}

FederationResult resume_training(const Lstr& model, const FederationConfig& config,
                                 ServerState server, std::vector<ClientState> clients) {
  FederationResult result;
  while (server.round <= config.rounds) {
    auto log = run_round(model, server, clients, config);
    result.log.insert(result.log.end(), log.begin(), log.end());
  }
  result.server = std::move(server);
  result.clients = std::move(clients);
  return result;
}

BaselineResult run_fedavg_baseline(const Lstr& model, const FederationConfig& config,
                                   std::span<const ClientState> clients) {
  check_client_order(clients);
  config.validate(clients.size());
  BaselineResult result;
  ParamSet global = model.init(config.seed);
  for (std::size_t r = 1; r <= config.rounds; ++r) {
    std::vector<Candidate> candidates;
    for (const auto& c : clients)
      candidates.push_back(client_full_update(model, c, global, config, config.encoder_epochs,
                                              (r - 1) * config.encoder_epochs, config.fedavg_lr));
    global = aggregate(candidates);
    auto log = evaluate_round(model, r, clients,
                              [&](const ClientState&) -> const ParamSet& { return global; });
    result.log.insert(result.log.end(), log.begin(), log.end());
  }
  for (const auto& c : clients) result.params[c.id] = global;
  return result;
}

BaselineResult run_local_baseline(const Lstr& model, const FederationConfig& config,
                                  std::span<const ClientState> clients) {
  check_client_order(clients);
  config.validate(clients.size());
  BaselineResult result;
  const ParamSet initial = model.init(config.seed);
  for (const auto& c : clients) {
    auto trained = client_full_update(model, c, initial, config, config.local_epochs, 0,
                                      config.fedavg_lr);
    result.params[c.id] = std::move(trained.params);
  }
  result.log = evaluate_round(model, config.local_epochs, clients,
                              [&](const ClientState& c) -> const ParamSet& { return result.params.at(c.id); });
  return result;
}

ParamSet onboard_new_client(const Lstr& model, const ParamSet& encoder, const ClientDataset& ds,
                            std::size_t epochs, const FederationConfig& config,
                            const MemoryConfig& memory, std::uint64_t seed) {
  if (ds.train.empty()) throw std::invalid_argument("onboard_new_client: empty training split");
  const auto samples = training_samples(ds, ds.train, memory);
  const ParamSet fresh = model.init(seed).subset(Partition::kDecoder);
  const EpochSchedule schedule{seed, EpochSchedule::kOnboard, 0};
  auto r = train_epochs(model, merge(encoder, fresh), samples, PartitionSel::kDecoder,
                        config.decoder_lr, config.batch_size, epochs, schedule);
  return r.params.subset(Partition::kDecoder);
}

}  // namespace pfl
