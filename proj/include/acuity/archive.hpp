#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "acuity/tensor.hpp"

namespace acuity {

/// Binary container shared by checkpoints and manifest caches:
///
///   "ACUR" | u16 version | u32 field count | (u32 length, UTF-8 "key=value")*
///   | f64 payload of every tensor in declaration order | u32 CRC-32
///
/// All integers and floats are little-endian. Tensor names and shapes travel
/// as "tensor=<name> <d0,d1,...>" header fields.
struct Archive {
    static constexpr std::uint16_t kVersion = 1;

    std::vector<std::pair<std::string, std::string>> fields;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void set(std::string key, std::string value);
    /// Throws PersistenceError when the key is absent.
    const std::string& get(std::string_view key) const;
    bool has(std::string_view key) const;
    /// All values stored under `key`, in insertion order.
    std::vector<std::string> get_all(std::string_view key) const;
    const Tensor& tensor(std::string_view name) const;
};

std::vector<std::uint8_t> encode_archive(const Archive& archive);

/// Validation order: magic, version, CRC (TruncatedError when the declared
/// layout runs past the end of the buffer, ChecksumError otherwise), layout.
Archive decode_archive(const std::vector<std::uint8_t>& bytes);

void save_archive(const Archive& archive, const std::filesystem::path& path);
Archive load_archive(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never observe a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) noexcept;

// Exact text round-trip for doubles and integers used by header fields.
std::string format_double(double v);
double parse_double(std::string_view text);
std::uint64_t parse_u64(std::string_view text);
std::string format_shape(const Shape& shape);
Shape parse_shape(std::string_view text);

} // namespace acuity
