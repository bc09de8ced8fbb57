#include "acuity/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "acuity/archive.hpp"
#include "acuity/errors.hpp"

namespace acuity {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PGM

namespace {

class PgmHeaderReader {
public:
    explicit PgmHeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::size_t number() {
        skip_space_and_comments();
        std::size_t value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_++] - '0');
            if (++digits > 9) throw DataError("PGM header value too large");
        }
        if (digits == 0) throw DataError("PGM header is malformed");
        return value;
    }

    std::size_t position() const { return pos_; }
    void skip_one_whitespace() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw DataError("PGM header is malformed");
        ++pos_;
    }
    void advance(std::size_t n) { pos_ += n; }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

} // namespace

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw DataError("not a binary PGM (P5) file");
    PgmHeaderReader r(bytes);
    r.advance(2);
    const std::size_t width = r.number();
    const std::size_t height = r.number();
    const std::size_t maxval = r.number();
    r.skip_one_whitespace();
    if (width == 0 || height == 0) throw DataError("PGM has a zero dimension");
    if (maxval == 0 || maxval > 65535) throw DataError("PGM maxval must lie in [1, 65535]");

    const std::size_t sample = maxval < 256 ? 1 : 2;
    const std::size_t start = r.position();
    if (bytes.size() - start < width * height * sample) throw DataError("PGM pixel data is truncated");

    GrayImage image(height, width);
    const double denom = static_cast<double>(maxval);
    for (std::size_t i = 0; i < width * height; ++i) {
        std::size_t v = bytes[start + i * sample];
        if (sample == 2) v = (v << 8) | bytes[start + i * sample + 1];
        if (v > maxval) throw DataError("PGM sample exceeds maxval");
        image.pixels[i] = static_cast<double>(v) / denom;
    }
    return image;
}

GrayImage read_pgm(const fs::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file(path);
    } catch (const PersistenceError& e) {
        throw DataError(e.what());
    }
    return decode_pgm(bytes);
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
    const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + image.size());
    for (double p : image.pixels)
        out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0)));
    return out;
}

void write_pgm(const fs::path& path, const GrayImage& image) {
    const auto bytes = encode_pgm(image);
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ---------------------------------------------------------------------------
// Ingestion

IngestResult ingest_corpus(const fs::path& root, std::size_t height, std::size_t width) {
    if (!fs::is_directory(root)) throw DataError("corpus root " + root.string() + " is not a directory");
    IngestResult result;

    std::vector<fs::path> identity_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) identity_dirs.push_back(entry.path());
    std::sort(identity_dirs.begin(), identity_dirs.end());

    for (const auto& dir : identity_dirs) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
        std::sort(files.begin(), files.end());

        const std::size_t id = result.identity_names.size();
        bool any = false;
        for (const auto& file : files) {
            try {
                GrayImage img = read_pgm(file);
                if (img.height != height || img.width != width) img = resize_bilinear(img, height, width);
                result.records.push_back({id, std::move(img), file.string()});
                any = true;
            } catch (const Error& e) {
                result.report.push_back({file.string(), e.what()});
            }
        }
        if (any) result.identity_names.push_back(dir.filename().string());
    }
    if (result.records.empty()) throw DataError("no readable images under " + root.string());
    return result;
}

std::size_t count_identities(const std::vector<ImageRecord>& records) {
    std::size_t n = 0;
    for (const auto& r : records) n = std::max(n, r.identity + 1);
    return n;
}

FilterResult filter_and_cap(const std::vector<ImageRecord>& records, std::size_t min_count, std::size_t cap,
                            const RandomSource& rng) {
    if (min_count > cap) throw ParameterError("min_count must not exceed cap");
    if (cap == 0) throw ParameterError("cap must be positive");

    std::map<std::size_t, std::vector<std::size_t>> by_identity;
    for (std::size_t i = 0; i < records.size(); ++i) by_identity[records[i].identity].push_back(i);

    FilterResult out;
    for (auto& [identity, members] : by_identity) {
        if (members.size() < min_count) {
            for (auto i : members) {
                out.rejected.push_back(records[i]);
                out.rejected.back().identity = out.rejected_identities;
            }
            ++out.rejected_identities;
            continue;
        }
        if (members.size() > cap) {
            RandomSource local = rng.split(identity);
            shuffle(members, local);
            members.resize(cap);
            std::sort(members.begin(), members.end());
        }
        for (auto i : members) {
            out.kept.push_back(records[i]);
            out.kept.back().identity = out.kept_identities;
        }
        ++out.kept_identities;
    }
    if (out.kept_identities == 0)
        throw DataError("no identity has at least " + std::to_string(min_count) + " images");
    return out;
}

Split split_records(const std::vector<ImageRecord>& records, double train_fraction, const RandomSource& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ParameterError("train fraction must lie in (0, 1)");
    std::map<std::size_t, std::vector<std::size_t>> by_identity;
    for (std::size_t i = 0; i < records.size(); ++i) by_identity[records[i].identity].push_back(i);

    Split split;
    for (auto& [identity, members] : by_identity) {
        if (members.size() < 2)
            throw DataError("identity " + std::to_string(identity) + " has fewer than 2 images and cannot be split");
        RandomSource local = rng.split(identity);
        shuffle(members, local);
        const auto n = static_cast<double>(members.size());
        const auto n_train = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(train_fraction * n)), 1,
                                                     members.size() - 1);
        for (std::size_t k = 0; k < members.size(); ++k)
            (k < n_train ? split.train : split.test).push_back(records[members[k]]);
    }
    return split;
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest build_manifest(const std::vector<ImageRecord>& records, const ManifestOptions& options) {
    const RandomSource root(options.split_seed);
    auto filtered = filter_and_cap(records, options.min_count, options.cap, root.split(0));
    auto split = split_records(filtered.kept, options.train_fraction, root.split(1));

    DatasetManifest m;
    m.n_identities = filtered.kept_identities;
    m.n_unseen_identities = filtered.rejected_identities;
    m.split_seed = options.split_seed;

    std::vector<GrayImage> train_images;
    train_images.reserve(split.train.size());
    for (const auto& r : split.train) train_images.push_back(r.image);
    m.normalization = compute_stats(train_images);

    auto normalize = [&](std::vector<ImageRecord> list) {
        for (auto& r : list) r.image = m.normalization.apply(r.image);
        return list;
    };
    m.train = normalize(std::move(split.train));
    m.test = normalize(std::move(split.test));
    m.unseen = normalize(std::move(filtered.rejected));
    return m;
}

namespace {

void put_records(Archive& a, const std::string& name, const std::vector<ImageRecord>& records) {
    a.set(name + ".count", std::to_string(records.size()));
    if (records.empty()) return;
    const std::size_t h = records.front().image.height, w = records.front().image.width;
    Tensor images({records.size(), h, w});
    Tensor labels({records.size()});
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& img = records[i].image;
        if (img.height != h || img.width != w) throw PersistenceError("manifest images must share one size");
        std::copy(img.pixels.begin(), img.pixels.end(), images.data().begin() + static_cast<std::ptrdiff_t>(i * h * w));
        labels[i] = static_cast<double>(records[i].identity);
        a.fields.emplace_back(name + ".path", records[i].source_path);
    }
    a.tensors.emplace_back(name + ".images", std::move(images));
    a.tensors.emplace_back(name + ".labels", std::move(labels));
}

std::vector<ImageRecord> get_records(const Archive& a, const std::string& name) {
    const std::size_t count = parse_u64(a.get(name + ".count"));
    std::vector<ImageRecord> out;
    if (count == 0) return out;
    const Tensor& images = a.tensor(name + ".images");
    const Tensor& labels = a.tensor(name + ".labels");
    const auto paths = a.get_all(name + ".path");
    if (images.rank() != 3 || images.dim(0) != count || labels.size() != count || paths.size() != count)
        throw PersistenceError("manifest section '" + name + "' is inconsistent");
    const std::size_t h = images.dim(1), w = images.dim(2);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> px(images.data().begin() + static_cast<std::ptrdiff_t>(i * h * w),
                               images.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * h * w));
        out.push_back({static_cast<std::size_t>(labels[i]), GrayImage(h, w, std::move(px)), paths[i]});
    }
    return out;
}

} // namespace

void save_manifest(const DatasetManifest& m, const fs::path& path) {
    Archive a;
    a.set("kind", "manifest");
    a.set("n_identities", std::to_string(m.n_identities));
    a.set("n_unseen_identities", std::to_string(m.n_unseen_identities));
    a.set("split_seed", std::to_string(m.split_seed));
    a.set("normalization.mean", format_double(m.normalization.mean));
    a.set("normalization.std", format_double(m.normalization.std));
    put_records(a, "train", m.train);
    put_records(a, "test", m.test);
    put_records(a, "unseen", m.unseen);
    save_archive(a, path);
}

DatasetManifest load_manifest(const fs::path& path) {
    const Archive a = load_archive(path);
    if (!a.has("kind") || a.get("kind") != "manifest") throw PersistenceError("archive is not a dataset manifest");
    DatasetManifest m;
    m.n_identities = parse_u64(a.get("n_identities"));
    m.n_unseen_identities = parse_u64(a.get("n_unseen_identities"));
    m.split_seed = parse_u64(a.get("split_seed"));
    m.normalization = {parse_double(a.get("normalization.mean")), parse_double(a.get("normalization.std"))};
    m.train = get_records(a, "train");
    m.test = get_records(a, "test");
    m.unseen = get_records(a, "unseen");
    return m;
}

// ---------------------------------------------------------------------------
// Batching

Tensor stack_images(const std::vector<GrayImage>& images) {
    if (images.empty()) throw ShapeError("cannot stack an empty image list");
    const std::size_t h = images.front().height, w = images.front().width;
    Tensor out({images.size(), 1, h, w});
    auto dst = out.data();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height != h || images[i].width != w) throw ShapeError("images in a batch must share one size");
        std::copy(images[i].pixels.begin(), images[i].pixels.end(), dst.begin() + static_cast<std::ptrdiff_t>(i * h * w));
    }
    return out;
}

BatchIterator::BatchIterator(const std::vector<ImageRecord>& records, std::size_t batch_size,
                             const RandomSource& epoch_rng, ImageTransform transform)
    : records_(records), batch_size_(batch_size), transform_rng_(epoch_rng.split(1)),
      transform_(std::move(transform)), order_(records.size()) {
    if (batch_size == 0) throw ParameterError("batch size must be >= 1");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    RandomSource order_rng = epoch_rng.split(0);
    shuffle(order_, order_rng);
}

std::size_t BatchIterator::batch_count() const noexcept {
    return (records_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(Batch& batch) {
    if (cursor_ >= order_.size()) return false;
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
    std::vector<GrayImage> images;
    images.reserve(end - cursor_);
    batch.labels.clear();
    batch.indices.clear();
    for (; cursor_ < end; ++cursor_) {
        const std::size_t i = order_[cursor_];
        const auto& rec = records_[i];
        if (transform_) {
            RandomSource local = transform_rng_.split(i);
            images.push_back(transform_(rec.image, local));
        } else {
            images.push_back(rec.image);
        }
        batch.labels.push_back(rec.identity);
        batch.indices.push_back(i);
    }
    batch.images = stack_images(images);
    return true;
}

// ---------------------------------------------------------------------------
// Synthetic faces

namespace {

struct FaceParams {
    double head_rx, head_ry;
    double eye_dx, eye_y, eye_r;
    double brow_y, brow_tilt;
    double nose_len, nose_w;
    double mouth_y, mouth_w, mouth_curve;
    double skin, hair, hair_line;
};

FaceParams draw_identity(RandomSource& rng) {
    FaceParams f;
    f.head_rx = rng.uniform(0.30, 0.42);
    f.head_ry = rng.uniform(0.38, 0.48);
    f.eye_dx = rng.uniform(0.10, 0.19);
    f.eye_y = rng.uniform(-0.14, -0.02);
    f.eye_r = rng.uniform(0.035, 0.07);
    f.brow_y = rng.uniform(0.05, 0.11);
    f.brow_tilt = rng.uniform(-0.5, 0.5);
    f.nose_len = rng.uniform(0.06, 0.18);
    f.nose_w = rng.uniform(0.02, 0.05);
    f.mouth_y = rng.uniform(0.14, 0.27);
    f.mouth_w = rng.uniform(0.07, 0.17);
    f.mouth_curve = rng.uniform(-0.08, 0.08);
    f.skin = rng.uniform(0.45, 0.85);
    f.hair = rng.uniform(0.05, 0.35);
    f.hair_line = rng.uniform(-0.38, -0.18);
    return f;
}

// Soft membership: 1 inside, 0 outside, linear over about one pixel.
double soft(double signed_distance, double pixel) {
    return std::clamp(0.5 - signed_distance / pixel, 0.0, 1.0);
}

GrayImage render_face(const FaceParams& f, std::size_t size, RandomSource& rng) {
    const double shift_x = rng.uniform(-0.05, 0.05);
    const double shift_y = rng.uniform(-0.05, 0.05);
    const double zoom = rng.uniform(0.92, 1.08);
    const double tilt = rng.uniform(-0.12, 0.12);
    const double light_gx = rng.uniform(-0.15, 0.15);
    const double light_gy = rng.uniform(-0.10, 0.10);
    const double gain = rng.uniform(0.85, 1.15);
    const double background = rng.uniform(0.1, 0.6);
    const double noise = 0.03;

    const double pixel = 1.0 / static_cast<double>(size);
    const double ct = std::cos(tilt), st = std::sin(tilt);
    GrayImage img(size, size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            // Face coordinates centred on the head, x right, y down.
            const double px = (static_cast<double>(x) + 0.5) * pixel - 0.5 - shift_x;
            const double py = (static_cast<double>(y) + 0.5) * pixel - 0.5 - shift_y;
            const double u = (ct * px + st * py) / zoom;
            const double v = (-st * px + ct * py) / zoom;

            const double head = std::hypot(u / f.head_rx, v / f.head_ry) - 1.0;
            double value = background;
            const double in_head = soft(head * std::min(f.head_rx, f.head_ry), pixel);
            double face = f.skin;
            if (v < f.hair_line) face = f.hair;

            for (double side : {-1.0, 1.0}) {
                const double ex = u - side * f.eye_dx, ey = v - f.eye_y;
                face = std::lerp(face, 0.05, soft(std::hypot(ex, ey) - f.eye_r, pixel));
                const double by = v - (f.eye_y - f.brow_y) - side * f.brow_tilt * ex;
                const double brow = std::max(std::abs(by) - 0.015, std::abs(ex) - 1.4 * f.eye_r);
                face = std::lerp(face, f.hair, soft(brow, pixel));
            }
            const double nose = std::max(std::abs(u) - f.nose_w * (v - f.eye_y) / f.nose_len,
                                         std::max(f.eye_y - v, v - (f.eye_y + f.nose_len)));
            face = std::lerp(face, f.skin * 0.6, soft(nose, pixel));
            const double mv = v - f.mouth_y - f.mouth_curve * (1.0 - (u * u) / (f.mouth_w * f.mouth_w));
            const double mouth = std::max(std::abs(mv) - 0.018, std::abs(u) - f.mouth_w);
            face = std::lerp(face, 0.15, soft(mouth, pixel));

            value = std::lerp(value, face, in_head);
            value = value * gain * (1.0 + light_gx * u * 2.0 + light_gy * v * 2.0) + rng.normal(0.0, noise);
            img.at(y, x) = std::clamp(value, 0.0, 1.0);
        }
    return img;
}

} // namespace

std::vector<ImageRecord> generate_synthetic_faces(const SyntheticOptions& options) {
    if (options.identities == 0 || options.images_per_identity == 0 || options.size < 8)
        throw ParameterError("synthetic corpus needs identities, images and size >= 8");
    const RandomSource root(options.seed);
    std::vector<ImageRecord> records;
    records.reserve(options.identities * options.images_per_identity);
    for (std::size_t id = 0; id < options.identities; ++id) {
        RandomSource identity_rng = root.split(id);
        RandomSource shape_rng = identity_rng.split(0);
        const FaceParams params = draw_identity(shape_rng);
        for (std::size_t k = 0; k < options.images_per_identity; ++k) {
            RandomSource image_rng = identity_rng.split(k + 1);
            records.push_back({id, render_face(params, options.size, image_rng),
                               "synthetic/id_" + std::to_string(id) + "/img_" + std::to_string(k)});
        }
    }
    return records;
}

std::size_t write_corpus(const fs::path& root, const std::vector<ImageRecord>& records) {
    std::map<std::size_t, std::size_t> counters;
    std::size_t written = 0;
    char dir_name[32], file_name[32];
    for (const auto& r : records) {
        std::snprintf(dir_name, sizeof dir_name, "id_%03zu", r.identity);
        std::snprintf(file_name, sizeof file_name, "img_%04zu.pgm", counters[r.identity]++);
        const fs::path dir = root / dir_name;
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw PersistenceError("cannot create " + dir.string() + ": " + ec.message());
        write_pgm(dir / file_name, r.image);
        ++written;
    }
    return written;
}

} // namespace acuity
