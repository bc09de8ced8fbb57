#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acuity/curriculum.hpp"
#include "acuity/dataset.hpp"
#include "acuity/experiments.hpp"
#include "acuity/network.hpp"
#include "acuity/training.hpp"

namespace acuity::cli {

using ConfigMap = std::map<std::string, std::string>;

/// Flat key=value text. Blank lines and lines starting with '#' are skipped;
/// keys and values are trimmed. Throws ParameterError on a line without '='.
ConfigMap parse_config_text(const std::string& text);
ConfigMap read_config_file(const std::filesystem::path& path);
std::string format_config(const ConfigMap& config);

/// Fully resolved settings for one command. Keys match the long flag names.
struct RunConfig {
    ProtocolId protocol = ProtocolId::HH;
    nn::Scale scale = nn::Scale::desk;
    double epochs_scale = 1.0;
    double sigma = 4.0;
    std::vector<double> factors = default_training_factors();
    bool equalized = false;
    bool augment = true;
    double max_rotation = 25.0;
    std::uint64_t seed = 1;
    std::size_t reps = 1;
    nn::HyperParams hyper;
    std::filesystem::path data;
    std::filesystem::path out = "out";
    std::vector<std::filesystem::path> checkpoints;
    std::vector<std::size_t> layers;
    AxisKind axis = AxisKind::blur_sigma;
    std::vector<double> sigmas = default_sigmas();
    std::vector<double> shrink_factors = default_shrink_factors();
    std::size_t min_count = 100;
    std::size_t cap = 100;
    double train_fraction = 0.9;
    std::uint64_t split_seed = 1;
    std::size_t identities = 10;
    std::size_t images = 100;
    SvmOptions svm;
    /// "split": target corpus train/test; "unseen": identities dropped by the
    /// min-count filter.
    std::string transfer_source = "split";

    /// Unknown keys throw ParameterError. Missing keys keep their defaults;
    /// hyperparameter defaults depend on the scale.
    static RunConfig from_map(const ConfigMap& config);
    /// Every key, resolved.
    ConfigMap to_map() const;

    std::size_t image_size() const;
    CurriculumOptions curriculum() const;
};

/// Desk runs default to lr 0.01 and batch 32; full runs use lr 0.001, batch 128.
nn::HyperParams default_hyper(nn::Scale scale);

nn::Scale parse_scale(const std::string& text);
std::string to_string(nn::Scale scale);

/// Git blob hash: SHA-1 of "blob <size>\0" followed by the bytes, as hex.
std::string git_blob_sha1(const std::vector<std::uint8_t>& bytes);
std::string file_git_sha1(const std::filesystem::path& path);

/// A directory is ingested and its manifest cached as <out>/manifest.acm; a
/// file is loaded as a manifest.
DatasetManifest load_dataset(const RunConfig& config, std::ostream& log);

// Commands. Each writes its artifacts under config.out, embeds the resolved
// config in a run.json record, and throws on failure.

struct TrainOutcome {
    std::vector<std::filesystem::path> checkpoints;
    std::vector<std::vector<EpochLog>> logs;
};

/// Trains config.reps runs with seeds seed..seed+reps-1. With one rep the
/// artifacts go to out/, otherwise to out/seed_<s>/. When config.checkpoints
/// holds one path and reps is 1, training resumes from it.
TrainOutcome cmd_train(const RunConfig& config, std::ostream& log);

/// Aggregates the sweep over the given checkpoints (one per repetition), or,
/// with no checkpoints, trains config.reps fresh runs first.
SweepResult cmd_sweep(const RunConfig& config, std::ostream& log);

std::vector<TransferPoint> cmd_transfer(const RunConfig& config, std::ostream& log);

RfReport cmd_rf(const RunConfig& config, std::ostream& log);

std::size_t cmd_synth_data(const RunConfig& config, std::ostream& log);

std::string rf_report_json(const RfReport& report, const ConfigMap& config, const std::string& checkpoint_sha1);

} // namespace acuity::cli
