#include "acuity/archive.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "acuity/errors.hpp"

namespace acuity {

static_assert(std::endian::native == std::endian::little, "archive codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'C', 'U', 'R'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename T>
    void scalar(T v) {
        bytes(&v, sizeof v);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }
    const std::vector<std::uint8_t>& buffer() const { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    bool can_read(std::size_t n) const { return n <= size_ - pos_; }
    void bytes(void* p, std::size_t n) {
        if (!can_read(n)) throw TruncatedError("archive ends inside a declared field");
        std::memcpy(p, data_ + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T scalar() {
        T v;
        bytes(&v, sizeof v);
        return v;
    }
    std::size_t position() const { return pos_; }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

struct Layout {
    std::vector<std::pair<std::string, std::string>> fields;
    std::vector<std::pair<std::string, Shape>> tensors;
    std::size_t payload_offset = 0;
};

std::pair<std::string, std::string> split_field(const std::string& field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw PersistenceError("malformed header field '" + field + "'");
    return {field.substr(0, eq), field.substr(eq + 1)};
}

// Parses the header of `body` (magic and version already checked).
Layout read_layout(const std::uint8_t* body, std::size_t size) {
    Reader r(body, size);
    char magic[4];
    r.bytes(magic, 4);
    r.scalar<std::uint16_t>();
    Layout layout;
    const auto count = r.scalar<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.scalar<std::uint32_t>();
        if (!r.can_read(len)) throw TruncatedError("archive ends inside a header field");
        std::string field(len, '\0');
        r.bytes(field.data(), len);
        auto kv = split_field(field);
        if (kv.first == "tensor") {
            const auto space = kv.second.rfind(' ');
            if (space == std::string::npos) throw PersistenceError("malformed tensor field '" + field + "'");
            layout.tensors.emplace_back(kv.second.substr(0, space), parse_shape(kv.second.substr(space + 1)));
        } else {
            layout.fields.push_back(std::move(kv));
        }
    }
    layout.payload_offset = r.position();
    return layout;
}

std::size_t payload_bytes(const Layout& layout) {
    std::size_t n = 0;
    for (const auto& [name, shape] : layout.tensors) n += shape_size(shape) * sizeof(double);
    return n;
}

} // namespace

void Archive::set(std::string key, std::string value) {
    for (auto& [k, v] : fields)
        if (k == key) {
            v = std::move(value);
            return;
        }
    fields.emplace_back(std::move(key), std::move(value));
}

const std::string& Archive::get(std::string_view key) const {
    for (const auto& [k, v] : fields)
        if (k == key) return v;
    throw PersistenceError("archive has no field '" + std::string(key) + "'");
}

bool Archive::has(std::string_view key) const {
    for (const auto& [k, v] : fields)
        if (k == key) return true;
    return false;
}

std::vector<std::string> Archive::get_all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : fields)
        if (k == key) out.push_back(v);
    return out;
}

const Tensor& Archive::tensor(std::string_view name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw PersistenceError("archive has no tensor '" + std::string(name) + "'");
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) noexcept {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_archive(const Archive& archive) {
    Writer w;
    w.bytes(kMagic, 4);
    w.scalar<std::uint16_t>(Archive::kVersion);
    std::vector<std::string> header;
    for (const auto& [k, v] : archive.fields) {
        if (k.empty() || k.find('=') != std::string::npos || k == "tensor")
            throw PersistenceError("invalid header key '" + k + "'");
        header.push_back(k + "=" + v);
    }
    for (const auto& [name, t] : archive.tensors) {
        if (name.find(' ') != std::string::npos) throw PersistenceError("tensor names may not contain spaces");
        header.push_back("tensor=" + name + " " + format_shape(t.shape()));
    }
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
    for (const auto& field : header) {
        w.scalar<std::uint32_t>(static_cast<std::uint32_t>(field.size()));
        w.bytes(field.data(), field.size());
    }
    for (const auto& [name, t] : archive.tensors) w.bytes(t.data().data(), t.size() * sizeof(double));
    const auto& buf = w.buffer();
    w.scalar<std::uint32_t>(crc32(buf.data(), buf.size()));
    return w.take();
}

Archive decode_archive(const std::vector<std::uint8_t>& bytes) {
    constexpr std::size_t kMinimum = 4 + 2 + 4 + 4;
    if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        if (bytes.size() < 4) throw TruncatedError("file too short to be an archive");
        throw PersistenceError("bad magic: not an ACUR archive");
    }
    std::uint16_t version;
    std::memcpy(&version, bytes.data() + 4, sizeof version);
    if (version != Archive::kVersion)
        throw VersionError("archive format version " + std::to_string(version) + ", expected " +
                           std::to_string(Archive::kVersion));
    if (bytes.size() < kMinimum) throw TruncatedError("file too short to be an archive");

    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body, sizeof stored);
    if (crc32(bytes.data(), body) != stored) {
        // Distinguish a short file from corrupted content: a truncated file
        // declares more header or payload than it holds.
        bool truncated = false;
        try {
            const Layout layout = read_layout(bytes.data(), bytes.size());
            truncated = layout.payload_offset + payload_bytes(layout) + 4 > bytes.size();
        } catch (const TruncatedError&) {
            truncated = true;
        } catch (const Error&) {
        }
        if (truncated) throw TruncatedError("checksum mismatch: archive is truncated");
        throw ChecksumError("checksum mismatch: archive is corrupted");
    }

    const Layout layout = read_layout(bytes.data(), body);
    if (layout.payload_offset + payload_bytes(layout) != body)
        throw PersistenceError("archive payload size does not match its header");
    Archive archive;
    archive.fields = layout.fields;
    std::size_t offset = layout.payload_offset;
    for (const auto& [name, shape] : layout.tensors) {
        std::vector<double> data(shape_size(shape));
        std::memcpy(data.data(), bytes.data() + offset, data.size() * sizeof(double));
        offset += data.size() * sizeof(double);
        archive.tensors.emplace_back(name, Tensor(shape, std::move(data)));
    }
    return archive;
}

void save_archive(const Archive& archive, const std::filesystem::path& path) {
    const auto bytes = encode_archive(archive);
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Archive load_archive(const std::filesystem::path& path) {
    return decode_archive(read_file(path));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PersistenceError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw PersistenceError("write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw PersistenceError("cannot move " + tmp.string() + " into place: " + ec.message());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PersistenceError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size())
        throw ParameterError("not a number: '" + std::string(text) + "'");
    return v;
}

std::uint64_t parse_u64(std::string_view text) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size())
        throw ParameterError("not a non-negative integer: '" + std::string(text) + "'");
    return v;
}

std::string format_shape(const Shape& shape) {
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "," : "") + std::to_string(shape[i]);
    return out;
}

Shape parse_shape(std::string_view text) {
    Shape shape;
    if (text.empty()) return shape;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto end = comma == std::string_view::npos ? text.size() : comma;
        shape.push_back(parse_u64(text.substr(start, end - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return shape;
}

} // namespace acuity
