#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "acuity/checkpoint.hpp"
#include "acuity/curriculum.hpp"
#include "acuity/dataset.hpp"

namespace acuity {

struct EpochLog {
    std::size_t epoch = 0;
    std::size_t phase = 0;
    std::string mode;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
};

/// A fresh checkpoint at epoch 0: network initialized from `seed`, training
/// stream RandomSource(seed, 1).
Checkpoint initial_checkpoint(nn::NetworkState network, const nn::HyperParams& hyper, std::uint64_t seed);

struct TrainOptions {
    /// Stop after this many completed epochs (default: the whole schedule).
    std::optional<std::size_t> stop_at;
    /// When set, phase-boundary checkpoints go here as phase_<k>_epoch_<e>.ckpt.
    std::optional<std::filesystem::path> checkpoint_dir;
    std::function<void(const EpochLog&)> on_epoch;
};

/// Continues training from checkpoint.network.epoch_counter. Epoch e draws
/// everything from run_rng.split(e): batch order and per-image transforms via
/// BatchIterator, dropout from split(2). Resuming therefore replays an
/// uninterrupted run exactly.
std::vector<EpochLog> train(Checkpoint& checkpoint, const std::vector<ImageRecord>& train_set,
                            const ProtocolSchedule& schedule, const TrainOptions& options = {});

/// Writes the training log as CSV: epoch,phase,mode,train_loss,train_acc.
std::string training_log_csv(const std::vector<EpochLog>& log);

} // namespace acuity
