#include "gradlab/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "gradlab/error.hpp"

namespace gradlab {

static_assert(std::endian::native == std::endian::little, "binary artifacts assume a little-endian host");

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open " + tmp.string() + " for writing");
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw Error("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IntegrityError("missing file: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string dump_json(const json& value) { return value.dump(2) + "\n"; }

json read_json(const fs::path& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IntegrityError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void reject_unknown_keys(const json& object, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!object.is_object()) {
        throw ConfigError(std::string(where) + ": expected a JSON object");
    }
    for (const auto& [key, value] : object.items()) {
        bool known = false;
        for (std::string_view a : allowed) {
            known = known || a == key;
        }
        if (!known) {
            throw ConfigError("unknown key: " + std::string(where) + "." + key);
        }
    }
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) noexcept {
    std::uint64_t h = seed;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xF];
        value >>= 4;
    }
    return out;
}

std::string pack_f64(std::span<const double> values) {
    std::string out(values.size() * sizeof(double), '\0');
    if (!values.empty()) {
        std::memcpy(out.data(), values.data(), out.size());
    }
    return out;
}

std::string pack_u64(std::span<const std::uint64_t> values) {
    std::string out(values.size() * sizeof(std::uint64_t), '\0');
    if (!values.empty()) {
        std::memcpy(out.data(), values.data(), out.size());
    }
    return out;
}

void unpack_f64(std::string_view bytes, std::span<double> out) {
    if (bytes.size() != out.size() * sizeof(double)) {
        throw IntegrityError("f64 payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(out.size() * sizeof(double)));
    }
    if (!out.empty()) {
        std::memcpy(out.data(), bytes.data(), bytes.size());
    }
}

void unpack_u64(std::string_view bytes, std::span<std::uint64_t> out) {
    if (bytes.size() != out.size() * sizeof(std::uint64_t)) {
        throw IntegrityError("u64 payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(out.size() * sizeof(std::uint64_t)));
    }
    if (!out.empty()) {
        std::memcpy(out.data(), bytes.data(), bytes.size());
    }
}

} // namespace gradlab
