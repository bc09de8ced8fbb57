#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "acuity/image.hpp"
#include "acuity/random.hpp"

namespace acuity {

enum class ProtocolId { LH, HH, HL, LL, MIXED, PRETRAIN_MIXED, MIXED_ONLY, SHRINK_LIA, SHRINK_HIA };

inline constexpr ProtocolId kAllProtocols[] = {
    ProtocolId::LH,          ProtocolId::HH,         ProtocolId::HL,         ProtocolId::LL,        ProtocolId::MIXED,
    ProtocolId::PRETRAIN_MIXED, ProtocolId::MIXED_ONLY, ProtocolId::SHRINK_LIA, ProtocolId::SHRINK_HIA,
};

std::string to_string(ProtocolId id);
/// Accepts the upper-case ids; throws ParameterError otherwise.
ProtocolId parse_protocol(std::string_view text);

enum class DegradationMode { clear, blur, shrink, mixed_blur, coin_shrink };

std::string to_string(DegradationMode mode);

/// Shrink factors used when a coin_shrink policy shrinks.
std::vector<double> default_training_factors();

struct TransformPolicy {
    DegradationMode mode = DegradationMode::clear;
    double sigma = 0.0;   // blur, mixed_blur
    double factor = 1.0;  // shrink
    double probability = 0.5; // mixed_blur, coin_shrink
    std::vector<double> factors; // coin_shrink
    bool augment = true;
    double max_rotation_deg = 25.0;

    void validate() const;
    bool operator==(const TransformPolicy&) const = default;
};

struct Phase {
    std::size_t start = 0; // inclusive
    std::size_t end = 0;   // exclusive
    TransformPolicy policy;

    bool operator==(const Phase&) const = default;
};

struct ProtocolSchedule {
    ProtocolId protocol = ProtocolId::HH;
    std::vector<Phase> phases;
    std::size_t total_epochs = 0;

    /// Index of the phase covering `epoch`; throws ParameterError if none.
    std::size_t phase_index(std::size_t epoch) const;
    bool operator==(const ProtocolSchedule&) const = default;
};

struct CurriculumOptions {
    /// Multiplies the 500-epoch base length.
    double epochs_scale = 1.0;
    double sigma = 4.0;
    std::vector<double> factors = default_training_factors();
    bool augment = true;
    double max_rotation_deg = 25.0;
    /// PRETRAIN_MIXED only: shorten the mixed phase so the total matches the
    /// 500-epoch protocols.
    bool equalized = false;
};

/// total = max(1, round(500 * scale)); half-length phases use floor(total/2).
/// Zero-length phases are dropped.
ProtocolSchedule build_schedule(ProtocolId protocol, const CurriculumOptions& options = {});

const TransformPolicy& policy_for_epoch(const ProtocolSchedule& schedule, std::size_t epoch);

/// Augmentation (flip, rotate) draws from rng.split(0) and the degradation
/// coin and factor from rng.split(1), so protocols whose degradations are
/// identities produce the same images for the same rng.
GrayImage apply_policy(const TransformPolicy& policy, const GrayImage& image, const RandomSource& rng);

} // namespace acuity
