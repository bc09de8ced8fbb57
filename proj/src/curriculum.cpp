#include "acuity/curriculum.hpp"

#include <cmath>

#include "acuity/errors.hpp"

namespace acuity {

namespace {

constexpr std::size_t kBaseEpochs = 500;

struct ProtocolName {
    ProtocolId id;
    const char* name;
};

constexpr ProtocolName kNames[] = {
    {ProtocolId::LH, "LH"},
    {ProtocolId::HH, "HH"},
    {ProtocolId::HL, "HL"},
    {ProtocolId::LL, "LL"},
    {ProtocolId::MIXED, "MIXED"},
    {ProtocolId::PRETRAIN_MIXED, "PRETRAIN_MIXED"},
    {ProtocolId::MIXED_ONLY, "MIXED_ONLY"},
    {ProtocolId::SHRINK_LIA, "SHRINK_LIA"},
    {ProtocolId::SHRINK_HIA, "SHRINK_HIA"},
};

} // namespace

std::string to_string(ProtocolId id) {
    for (const auto& n : kNames)
        if (n.id == id) return n.name;
    throw ParameterError("unknown protocol id");
}

ProtocolId parse_protocol(std::string_view text) {
    for (const auto& n : kNames)
        if (text == n.name) return n.id;
    throw ParameterError("unknown protocol '" + std::string(text) + "'");
}

std::string to_string(DegradationMode mode) {
    switch (mode) {
    case DegradationMode::clear: return "clear";
    case DegradationMode::blur: return "blur";
    case DegradationMode::shrink: return "shrink";
    case DegradationMode::mixed_blur: return "mixed_blur";
    case DegradationMode::coin_shrink: return "coin_shrink";
    }
    throw ParameterError("unknown degradation mode");
}

std::vector<double> default_training_factors() {
    return {0.9, 0.8, 0.4, 0.2, 0.14, 0.12};
}

void TransformPolicy::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("sigma must be >= 0");
    if (!(factor > 0.0 && factor <= 1.0)) throw ParameterError("shrink factor must lie in (0, 1]");
    if (!(probability >= 0.0 && probability <= 1.0)) throw ParameterError("probability must lie in [0, 1]");
    if (!(max_rotation_deg >= 0.0)) throw ParameterError("max rotation must be >= 0");
    if (mode == DegradationMode::coin_shrink && factors.empty())
        throw ParameterError("coin_shrink needs at least one factor");
    for (double f : factors)
        if (!(f > 0.0 && f <= 1.0)) throw ParameterError("shrink factors must lie in (0, 1]");
}

std::size_t ProtocolSchedule::phase_index(std::size_t epoch) const {
    for (std::size_t i = 0; i < phases.size(); ++i)
        if (epoch >= phases[i].start && epoch < phases[i].end) return i;
    throw ParameterError("epoch " + std::to_string(epoch) + " outside schedule of " + std::to_string(total_epochs) +
                         " epochs");
}

ProtocolSchedule build_schedule(ProtocolId protocol, const CurriculumOptions& options) {
    if (!(options.epochs_scale > 0.0) || !std::isfinite(options.epochs_scale))
        throw ParameterError("epochs scale must be > 0");

    TransformPolicy base;
    base.augment = options.augment;
    base.max_rotation_deg = options.max_rotation_deg;

    TransformPolicy clear = base;
    TransformPolicy blurred = base;
    blurred.mode = DegradationMode::blur;
    blurred.sigma = options.sigma;
    TransformPolicy mixed = base;
    mixed.mode = DegradationMode::mixed_blur;
    mixed.sigma = options.sigma;
    TransformPolicy coin = base;
    coin.mode = DegradationMode::coin_shrink;
    coin.factors = options.factors;
    blurred.validate();
    if (protocol == ProtocolId::SHRINK_LIA || protocol == ProtocolId::SHRINK_HIA) coin.validate();

    const auto scaled = static_cast<std::size_t>(std::llround(static_cast<double>(kBaseEpochs) * options.epochs_scale));
    const std::size_t total = std::max<std::size_t>(1, scaled);
    const std::size_t half = total / 2;

    std::vector<std::pair<std::size_t, TransformPolicy>> pieces;
    switch (protocol) {
    case ProtocolId::LH: pieces = {{half, blurred}, {total - half, clear}}; break;
    case ProtocolId::HH: pieces = {{total, clear}}; break;
    case ProtocolId::HL: pieces = {{half, clear}, {total - half, blurred}}; break;
    case ProtocolId::LL: pieces = {{total, blurred}}; break;
    case ProtocolId::MIXED: pieces = {{total, mixed}}; break;
    case ProtocolId::PRETRAIN_MIXED: pieces = {{half, blurred}, {options.equalized ? total - half : total, mixed}}; break;
    case ProtocolId::MIXED_ONLY: pieces = {{total, mixed}}; break;
    case ProtocolId::SHRINK_LIA: pieces = {{half, blurred}, {total - half, coin}}; break;
    case ProtocolId::SHRINK_HIA: pieces = {{total, coin}}; break;
    default: throw ParameterError("unknown protocol id");
    }

    ProtocolSchedule schedule;
    schedule.protocol = protocol;
    std::size_t at = 0;
    for (auto& [length, policy] : pieces) {
        if (length == 0) continue;
        schedule.phases.push_back({at, at + length, std::move(policy)});
        at += length;
    }
    schedule.total_epochs = at;
    return schedule;
}

const TransformPolicy& policy_for_epoch(const ProtocolSchedule& schedule, std::size_t epoch) {
    return schedule.phases[schedule.phase_index(epoch)].policy;
}

GrayImage apply_policy(const TransformPolicy& policy, const GrayImage& image, const RandomSource& rng) {
    GrayImage out = image;
    if (policy.augment) {
        RandomSource augment_rng = rng.split(0);
        out = random_flip_rotate(out, augment_rng, policy.max_rotation_deg);
    }
    RandomSource coin_rng = rng.split(1);
    switch (policy.mode) {
    case DegradationMode::clear: return out;
    case DegradationMode::blur: return blur(out, policy.sigma);
    case DegradationMode::shrink: return shrink_and_center(out, policy.factor);
    case DegradationMode::mixed_blur:
        return coin_rng.bernoulli(policy.probability) ? blur(out, policy.sigma) : out;
    case DegradationMode::coin_shrink: {
        if (!coin_rng.bernoulli(policy.probability)) return out;
        if (policy.factors.empty()) throw ParameterError("coin_shrink needs at least one factor");
        const double f = policy.factors[coin_rng.below(policy.factors.size())];
        return shrink_and_center(out, f);
    }
    }
    return out;
}

} // namespace acuity
