#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfl/memory.hpp"
#include "pfl/metrics.hpp"
#include "pfl/model.hpp"
#include "pfl/param_set.hpp"
#include "pfl/synth.hpp"

namespace pfl {

struct FederationConfig {
  std::size_t rounds = 100;
  std::size_t decoder_epochs = 5;
  std::size_t encoder_epochs = 1;
  double encoder_lr = 1e-6;
  double fedavg_lr = 1e-7;
  double decoder_lr = 1e-3;
  double select_fraction = 0.5;
  std::size_t local_epochs = 1000;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming every violated constraint for `clients` clients.
  void validate(std::size_t clients) const;
  /// ceil(select_fraction * clients).
  std::size_t selected_count(std::size_t clients) const;

  /// Published schedule: 100 rounds, encoder 1e-6, all-parameter 1e-7.
  /// The decoder rate is not published and keeps its default.
  static FederationConfig paper_rates();
  /// Small-scale schedule that converges within a few rounds on the
  /// synthetic benchmark.
  static FederationConfig desk();
};

/// One line of the training log. `client` is empty for server records.
struct LogRecord {
  std::size_t round = 0;
  std::optional<int> client;
  double loss = 0.0;
  std::array<std::optional<double>, kNumClasses> precision;
};
using TrainingLog = std::vector<LogRecord>;

// JSON lines, one record per line, fields in this order:
//   {"round":1,"client":0,"loss":0.5,"precision":{"lane_keep":1.0,
//    "left_lane_change":null,"right_lane_change":0.5}}
// "client" is the string "server" for server records; null marks an
// undefined precision.
std::string to_json_line(const LogRecord& record);
LogRecord parse_log_line(const std::string& line);
void write_log(const TrainingLog& log, std::ostream& out);
TrainingLog read_log(std::istream& in);

/// Client side of the federation: owns its data and personal decoder.
struct ClientState {
  int id = 0;
  ClientDataset dataset;
  MemoryConfig memory;
  std::vector<Sample> samples;  // final-frame snapshots of the training split
  ParamSet decoder;
  TrainingLog log;

  /// Validates the split and precomputes the training snapshots.
  static ClientState make(int id, ClientDataset dataset, const MemoryConfig& memory);

  std::size_t sample_count() const { return samples.size(); }
};

/// Server side: shared encoder plus per-client sample counts. Holds no data.
struct ServerState {
  ParamSet encoder;
  std::size_t round = 0;  // index of the next round to run; 1 after warm start
  std::map<int, std::size_t> registry;
  std::uint64_t seed = 0;

  std::size_t total_samples() const;
};

struct RoundPlan {
  std::vector<int> selected;  // ascending, unique
  std::size_t selected_samples = 0;
};

/// Parameters returned by one client together with its sample count.
struct Candidate {
  int client_id = 0;
  ParamSet params;
  std::size_t samples = 0;
};

/// Concatenation of a shared encoder and a personal decoder.
struct PersonalizedModel {
  ParamSet params;

  Tensor forward(const Lstr& model, const MemorySnapshot& memory) const {
    return model.forward(params, memory);
  }
  Intention predict(const Lstr& model, const MemorySnapshot& memory) const {
    return model.predict(params, memory);
  }
};

/// Identifies the shuffle order of every training epoch. Epoch `e` of the
/// stream is shuffled with derive_seed(seed, {stream, e}), so a run split
/// into pieces reproduces an uninterrupted run exactly, and clients holding
/// identical data train identically.
struct EpochSchedule {
  enum Stream : std::uint64_t { kFull = 1, kDecoder = 2, kEncoder = 3, kOnboard = 4 };

  std::uint64_t seed = 0;
  Stream stream = kFull;
  std::size_t first_epoch = 0;

  std::uint64_t epoch_seed(std::size_t epoch) const;
};

struct TrainResult {
  ParamSet params;
  /// Mean batch loss of the last epoch; nullopt when no epoch ran.
  std::optional<double> last_epoch_loss;
};

/// Final-frame memory snapshot of each listed sequence.
std::vector<Sample> training_samples(const ClientDataset& ds, std::span<const std::size_t> indices,
                                     const MemoryConfig& memory);

/// Mini-batch SGD on `partition` for `epochs` epochs; the last batch of an
/// epoch may be short. Decoder-only training reuses encoder contexts.
TrainResult train_epochs(const Lstr& model, ParamSet params, std::span<const Sample> samples,
                         PartitionSel partition, double lr, std::size_t batch_size,
                         std::size_t epochs, const EpochSchedule& schedule);

/// Mean cross-entropy of `params` on `samples`.
double mean_loss(const Lstr& model, const ParamSet& params, std::span<const Sample> samples);

// Server side. Nothing here takes a dataset.

/// ceil(fraction * k) distinct ids drawn from a generator seeded by
/// (server.seed, server.round), sorted ascending.
RoundPlan select_clients(const ServerState& server, double fraction);
/// Sample-weighted mean of shape-identical candidates, summed in ascending
/// client-id order. Throws std::invalid_argument on an empty list, a shape
/// mismatch, or a zero sample count.
ParamSet aggregate(std::span<const Candidate> candidates);

// Client side.

/// Trains the whole model from `global` for `epochs` epochs at `lr`.
Candidate client_full_update(const Lstr& model, const ClientState& client, const ParamSet& global,
                             const FederationConfig& config, std::size_t epochs,
                             std::size_t first_epoch, double lr);
/// Decoder epochs with `encoder` frozen.
TrainResult client_decoder_update(const Lstr& model, const ClientState& client,
                                  const ParamSet& encoder, const FederationConfig& config,
                                  std::size_t round);
/// Encoder epochs with `decoder` frozen; returns the candidate encoder.
Candidate selected_encoder_update(const Lstr& model, const ClientState& client,
                                  const ParamSet& encoder, const ParamSet& decoder,
                                  const FederationConfig& config, std::size_t round);

PersonalizedModel compose_personalized(const ParamSet& decoder, const ParamSet& encoder);

/// Warm start: every client trains a copy of the initial model on all
/// parameters; the weighted average seeds the shared encoder and every
/// personal decoder. Throws std::invalid_argument without clients.
ServerState fedavg_init(const Lstr& model, std::span<ClientState> clients,
                        const FederationConfig& config);

/// One round: all decoders update against the current encoder, selected
/// clients produce encoder candidates, the server aggregates them. Appends
/// one record per client and one server record.
TrainingLog run_round(const Lstr& model, ServerState& server, std::span<ClientState> clients,
                      const FederationConfig& config);

struct FederationResult {
  ServerState server;
  std::vector<ClientState> clients;
  TrainingLog log;
};

/// Warm start followed by rounds 1..config.rounds.
FederationResult run_training(const Lstr& model, const FederationConfig& config,
                              std::vector<ClientState> clients);
/// Continues a checkpointed run up to config.rounds.
FederationResult resume_training(const Lstr& model, const FederationConfig& config,
                                 ServerState server, std::vector<ClientState> clients);

struct BaselineResult {
  std::map<int, ParamSet> params;  // per client; one shared entry per client for FedAvg
  TrainingLog log;
};

/// All clients train all parameters each round; the server averages everything.
BaselineResult run_fedavg_baseline(const Lstr& model, const FederationConfig& config,
                                   std::span<const ClientState> clients);
/// Independent all-parameter training per client for config.local_epochs
/// epochs at fedavg_lr.
BaselineResult run_local_baseline(const Lstr& model, const FederationConfig& config,
                                  std::span<const ClientState> clients);

/// Fresh decoder (initialized with `seed`) trained for `epochs` decoder
/// epochs at decoder_lr on the training split, `encoder` frozen.
/// Throws std::invalid_argument if the training split is empty.
ParamSet onboard_new_client(const Lstr& model, const ParamSet& encoder, const ClientDataset& ds,
                            std::size_t epochs, const FederationConfig& config,
                            const MemoryConfig& memory, std::uint64_t seed);

/// Server encoder, round, registry and every client decoder.
//   "PFLF" | u32 version=1 | u64 round | u64 seed | u32 clients |
//   clients x { i32 id | u64 samples | u64 len | decoder checkpoint } |
//   u64 len | encoder checkpoint
void save_federation_checkpoint(const ServerState& server, std::span<const ClientState> clients,
                                const std::filesystem::path& path);
/// Restores the server and writes each client's decoder into `clients`
/// (matched by id). Throws CheckpointError on malformed input or a client
/// set that does not match the checkpoint.
ServerState load_federation_checkpoint(const std::filesystem::path& path,
                                       std::span<ClientState> clients);

}  // namespace pfl
