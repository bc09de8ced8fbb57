#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "acuity/image.hpp"
#include "acuity/random.hpp"
#include "acuity/tensor.hpp"

namespace acuity {

struct ImageRecord {
    std::size_t identity = 0;
    GrayImage image;
    std::string source_path;

    bool operator==(const ImageRecord&) const = default;
};

// ---------------------------------------------------------------------------
// PGM (netpbm P5)

/// Decodes binary PGM to luminance in [0, 1] (value / maxval). 16-bit files
/// are big-endian per the netpbm format. Throws DataError on malformed input.
GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes);
GrayImage read_pgm(const std::filesystem::path& path);

/// Writes an 8-bit P5 file; pixels are clamped to [0, 1] and scaled to 255.
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

// ---------------------------------------------------------------------------
// Ingestion, filtering, splitting

struct IngestIssue {
    std::string path;
    std::string message;
};

struct IngestResult {
    std::vector<ImageRecord> records;
    /// identity id -> directory name; ids follow sorted directory order.
    std::vector<std::string> identity_names;
    std::vector<IngestIssue> report;
};

/// Reads root/<identity>/<image>.pgm, resampling each image bilinearly to
/// height x width. Unreadable files land in the report; an empty result
/// throws DataError.
IngestResult ingest_corpus(const std::filesystem::path& root, std::size_t height, std::size_t width);

struct FilterResult {
    /// Identities with >= min_count images, capped at `cap`, ids densified.
    std::vector<ImageRecord> kept;
    /// Identities below min_count, ids densified in their own label space.
    std::vector<ImageRecord> rejected;
    std::size_t kept_identities = 0;
    std::size_t rejected_identities = 0;
};

FilterResult filter_and_cap(const std::vector<ImageRecord>& records, std::size_t min_count, std::size_t cap,
                            const RandomSource& rng);

struct Split {
    std::vector<ImageRecord> train;
    std::vector<ImageRecord> test;
};

/// Stratified per identity: round(fraction * n) train images (clamped so both
/// sides get at least one), the rest test. Deterministic for a given rng.
Split split_records(const std::vector<ImageRecord>& records, double train_fraction, const RandomSource& rng);

std::size_t count_identities(const std::vector<ImageRecord>& records);

// ---------------------------------------------------------------------------
// Manifest

struct ManifestOptions {
    std::size_t min_count = 100;
    std::size_t cap = 100;
    double train_fraction = 0.9;
    std::uint64_t split_seed = 0;
};

/// Filtered, split and normalized corpus. Normalization statistics come from
/// the training split only and are applied unchanged to test and unseen.
struct DatasetManifest {
    std::vector<ImageRecord> train;
    std::vector<ImageRecord> test;
    /// Identities removed by filter_and_cap, kept for unseen-identity transfer.
    std::vector<ImageRecord> unseen;
    std::size_t n_identities = 0;
    std::size_t n_unseen_identities = 0;
    std::uint64_t split_seed = 0;
    NormalizationStats normalization;

    bool operator==(const DatasetManifest&) const = default;
};

DatasetManifest build_manifest(const std::vector<ImageRecord>& records, const ManifestOptions& options);

/// Manifest cache file: same container, header and CRC scheme as checkpoints.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Batching

using ImageTransform = std::function<GrayImage(const GrayImage&, RandomSource&)>;

struct Batch {
    Tensor images; // [N,1,H,W]
    std::vector<std::size_t> labels;
    /// Positions in the source record list.
    std::vector<std::size_t> indices;
};

/// Stacks images into an [N,1,H,W] tensor. All images must share a size.
Tensor stack_images(const std::vector<GrayImage>& images);

/// One epoch over `records`: the order is shuffled with epoch_rng.split(0);
/// record i is transformed with epoch_rng.split(1).split(i), so an image's
/// stream does not depend on its position in the shuffled order. The final
/// short batch is emitted.
class BatchIterator {
public:
    BatchIterator(const std::vector<ImageRecord>& records, std::size_t batch_size, const RandomSource& epoch_rng,
                  ImageTransform transform = {});

    /// Fills `batch` and returns true, or returns false at the end of the epoch.
    bool next(Batch& batch);
    std::size_t batch_count() const noexcept;
    const std::vector<std::size_t>& order() const noexcept { return order_; }

private:
    const std::vector<ImageRecord>& records_;
    std::size_t batch_size_;
    RandomSource transform_rng_;
    ImageTransform transform_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic faces

struct SyntheticOptions {
    std::size_t identities = 10;
    std::size_t images_per_identity = 100;
    std::size_t size = 32;
    std::uint64_t seed = 1;
};

/// Parametric face renderer: each identity draws head shape, eyes, brows,
/// nose, mouth and tone; each image jitters pose, lighting and noise.
/// Pixels lie in [0, 1]. Identity i is labelled i.
std::vector<ImageRecord> generate_synthetic_faces(const SyntheticOptions& options);

/// Writes records as root/id_XXX/img_XXXX.pgm. Returns the number of files.
std::size_t write_corpus(const std::filesystem::path& root, const std::vector<ImageRecord>& records);

} // namespace acuity
