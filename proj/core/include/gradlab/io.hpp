#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace gradlab {

using json = nlohmann::json;

// Writes to `<path>.tmp` and renames over `path`. Parent directories are created.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Throws IntegrityError if the file is missing or unreadable.
std::string read_file(const std::filesystem::path& path);

// Stable, indented JSON text with a trailing newline.
std::string dump_json(const json& value);
json read_json(const std::filesystem::path& path);

// Throws ConfigError naming `<where>.<key>` for the first key of `object`
// outside `allowed`, or for `object` itself when it is not a JSON object.
void reject_unknown_keys(const json& object, std::initializer_list<std::string_view> allowed, std::string_view where);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::string hex64(std::uint64_t value);

// Little-endian packing for the binary artifact files.
std::string pack_f64(std::span<const double> values);
std::string pack_u64(std::span<const std::uint64_t> values);
void unpack_f64(std::string_view bytes, std::span<double> out);
void unpack_u64(std::string_view bytes, std::span<std::uint64_t> out);

} // namespace gradlab
