#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "acuity/archive.hpp"
#include "acuity/network.hpp"
#include "acuity/random.hpp"

namespace acuity {

/// Everything needed to resume training bit-exactly.
struct Checkpoint {
    nn::NetworkState network;
    nn::HyperParams hyper;
    RandomSource::State rng;
    /// Free-form provenance (resolved run config, protocol, seed, ...).
    std::map<std::string, std::string> metadata;

    bool operator==(const Checkpoint&) const = default;
};

std::string encode_layer(const nn::LayerSpec& spec);
nn::LayerSpec decode_layer(const std::string& text);

Archive checkpoint_to_archive(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_archive(const Archive& archive);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws VersionError, ChecksumError/TruncatedError or PersistenceError; on
/// failure nothing is returned, so no partially loaded state escapes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace acuity
