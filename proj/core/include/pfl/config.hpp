#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "pfl/experiments.hpp"

namespace pfl {

// Plain key = value text, one entry per line, '#' starts a comment. Keys
// mirror the struct fields:
//
//   federation.preset = desk            # or paper-rates; applied first
//   federation.rounds = 20
//   model.embed_dim = 16
//   memory.fps = 2
//   experiment.train_ratio = 0.67
//   clients = 3                         # resizes the client list
//   client.1.permutation = 0 2 1
//   client.1.false_positive_rate = 0.5
//   client.1.sequences = 90
//
// Unknown keys, malformed lines and invalid values throw ConfigError with
// the line number in the message.
ExperimentConfig parse_experiment_config(std::istream& in,
                                         ExperimentConfig base = standard_benchmark());
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        ExperimentConfig base = standard_benchmark());

/// Every key with its current value, in a form parse_experiment_config reads back.
std::string format_experiment_config(const ExperimentConfig& config);

}  // namespace pfl
