#include "acuity/training.hpp"

#include <cmath>
#include <sstream>

#include "acuity/archive.hpp"
#include "acuity/errors.hpp"

namespace acuity {

Checkpoint initial_checkpoint(nn::NetworkState network, const nn::HyperParams& hyper, std::uint64_t seed) {
    hyper.validate();
    Checkpoint c;
    c.network = std::move(network);
    c.hyper = hyper;
    c.rng = RandomSource(seed, 1).state();
    return c;
}

std::vector<EpochLog> train(Checkpoint& checkpoint, const std::vector<ImageRecord>& train_set,
                            const ProtocolSchedule& schedule, const TrainOptions& options) {
    if (train_set.empty()) throw DataError("training set is empty");
    auto& net = checkpoint.network;
    const std::size_t classes = net.class_count();
    for (const auto& r : train_set)
        if (r.identity >= classes)
            throw DataError("label " + std::to_string(r.identity) + " exceeds the network's " +
                            std::to_string(classes) + " classes");

    const RandomSource run_rng(checkpoint.rng);
    const std::size_t stop = std::min(options.stop_at.value_or(schedule.total_epochs), schedule.total_epochs);
    std::vector<EpochLog> log;

    for (std::size_t epoch = net.epoch_counter; epoch < stop; ++epoch) {
        const std::size_t phase = schedule.phase_index(epoch);
        const TransformPolicy& policy = schedule.phases[phase].policy;
        const RandomSource epoch_rng = run_rng.split(epoch);
        RandomSource dropout_rng = epoch_rng.split(2);

        BatchIterator batches(train_set, checkpoint.hyper.batch_size, epoch_rng,
                              [&policy](const GrayImage& img, RandomSource& rng) { return apply_policy(policy, img, rng); });
        Batch batch;
        double loss_sum = 0.0;
        std::size_t correct = 0;
        while (batches.next(batch)) {
            const auto step = nn::train_step(net, batch.images, batch.labels, checkpoint.hyper, dropout_rng);
            if (!std::isfinite(step.loss)) throw StateError("training diverged at epoch " + std::to_string(epoch));
            loss_sum += step.loss * static_cast<double>(batch.labels.size());
            correct += step.correct;
        }
        net.epoch_counter = epoch + 1;

        EpochLog entry;
        entry.epoch = epoch;
        entry.phase = phase;
        entry.mode = to_string(policy.mode);
        entry.train_loss = loss_sum / static_cast<double>(train_set.size());
        entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
        log.push_back(entry);
        if (options.on_epoch) options.on_epoch(entry);

        if (options.checkpoint_dir && net.epoch_counter == schedule.phases[phase].end) {
            std::filesystem::create_directories(*options.checkpoint_dir);
            const auto name = "phase_" + std::to_string(phase) + "_epoch_" + std::to_string(net.epoch_counter) + ".ckpt";
            save_checkpoint(checkpoint, *options.checkpoint_dir / name);
        }
    }
    return log;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    out << "epoch,phase,mode,train_loss,train_acc\n";
    for (const auto& e : log)
        out << e.epoch << ',' << e.phase << ',' << e.mode << ',' << format_double(e.train_loss) << ','
            << format_double(e.train_accuracy) << '\n';
    return out.str();
}

} // namespace acuity
