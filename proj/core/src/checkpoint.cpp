#include <cstring>

#include "gradlab/error.hpp"
#include "gradlab/io.hpp"
#include "gradlab/tinylm.hpp"

namespace gradlab {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormatVersion = "1";

json shape_of(const Tensor& t, TensorId id) {
    // Bias vectors are stored as one-dimensional tensors.
    if (id == TensorId::b1 || id == TensorId::b2) {
        return json::array({t.cols});
    }
    return json::array({t.rows, t.cols});
}

std::string tensor_bytes(const ModelParams& params) {
    std::string bytes;
    for (TensorId id : kAllTensors) {
        bytes += pack_f64(params[id].data);
    }
    return bytes;
}

json manifest_of(const ModelParams& params) {
    json m;
    m["format_version"] = kFormatVersion;
    m["config"] = {{"d_embed", params.config.d_embed},
                   {"context", params.config.context},
                   {"d_hidden", params.config.d_hidden},
                   {"objective", std::string(to_string(params.config.objective))},
                   {"init_seed", params.config.init_seed}};
    m["vocabulary"] = params.vocab.words();
    json tensors = json::array();
    std::size_t offset = 0;
    for (TensorId id : kAllTensors) {
        const Tensor& t = params[id];
        const std::size_t nbytes = t.size() * sizeof(double);
        tensors.push_back({{"name", std::string(tensor_name(id))},
                           {"shape", shape_of(t, id)},
                           {"dtype", "f64"},
                           {"offset", offset},
                           {"nbytes", nbytes}});
        offset += nbytes;
    }
    m["tensors"] = tensors;
    m["total_bytes"] = offset;
    return m;
}

} // namespace

std::string content_hash(const ModelParams& params) {
    const std::string bytes = tensor_bytes(params);
    std::uint64_t h = fnv1a64(std::as_bytes(std::span(bytes.data(), bytes.size())));
    const std::string meta = manifest_of(params).dump();
    h = fnv1a64(std::as_bytes(std::span(meta.data(), meta.size())), h);
    return hex64(h);
}

void save_checkpoint(const ModelParams& params, const fs::path& dir) {
    params.validate();
    fs::create_directories(dir);
    // Tensors first: a manifest never points at a half-written payload.
    write_file_atomic(dir / "tensors.bin", tensor_bytes(params));
    write_file_atomic(dir / "manifest.json", dump_json(manifest_of(params)));
}

ModelParams load_checkpoint(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    const json m = read_json(manifest_path);
    ModelParams p;
    try {
        if (m.at("format_version").get<std::string>() != kFormatVersion) {
            throw IntegrityError(manifest_path.string() + ": unsupported format_version");
        }
        const json& c = m.at("config");
        p.config.d_embed = c.at("d_embed").get<std::size_t>();
        p.config.context = c.at("context").get<std::size_t>();
        p.config.d_hidden = c.at("d_hidden").get<std::size_t>();
        p.config.objective = objective_from_string(c.at("objective").get<std::string>());
        p.config.init_seed = c.at("init_seed").get<std::uint64_t>();
        p.config.validate();

        const auto words = m.at("vocabulary").get<std::vector<std::string>>();
        if (words.size() < Vocabulary::kSpecials.size()) {
            throw IntegrityError(manifest_path.string() + ": vocabulary lacks special tokens");
        }
        for (std::size_t i = 0; i < Vocabulary::kSpecials.size(); ++i) {
            if (words[i] != Vocabulary::kSpecials[i]) {
                throw IntegrityError(manifest_path.string() + ": special token " + std::to_string(i) + " mismatch");
            }
        }
        p.vocab = Vocabulary(std::span(words).subspan(Vocabulary::kSpecials.size()));

        // Shapes implied by config + vocabulary; the manifest must agree before any bytes are read.
        const ModelParams expected = zero_params(p.config, p.vocab);
        const json& tensors = m.at("tensors");
        if (!tensors.is_array() || tensors.size() != kTensorCount) {
            throw IntegrityError(manifest_path.string() + ": expected 5 tensors");
        }
        std::size_t offset = 0;
        for (std::size_t i = 0; i < kTensorCount; ++i) {
            const json& t = tensors[i];
            const TensorId id = kAllTensors[i];
            const Tensor& shape = expected[id];
            if (t.at("name").get<std::string>() != tensor_name(id)) {
                throw IntegrityError(manifest_path.string() + ": tensor " + std::to_string(i) + " is not " +
                                     std::string(tensor_name(id)));
            }
            if (t.at("dtype").get<std::string>() != "f64") {
                throw IntegrityError(manifest_path.string() + ": tensor " + std::string(tensor_name(id)) +
                                     " dtype is not f64");
            }
            if (t.at("shape") != shape_of(shape, id)) {
                throw IntegrityError(manifest_path.string() + ": tensor " + std::string(tensor_name(id)) +
                                     " shape mismatch");
            }
            const std::size_t nbytes = shape.size() * sizeof(double);
            if (t.at("offset").get<std::size_t>() != offset || t.at("nbytes").get<std::size_t>() != nbytes) {
                throw IntegrityError(manifest_path.string() + ": tensor " + std::string(tensor_name(id)) +
                                     " byte range mismatch");
            }
            p[id] = Tensor(shape.rows, shape.cols);
            offset += nbytes;
        }
        if (m.at("total_bytes").get<std::size_t>() != offset) {
            throw IntegrityError(manifest_path.string() + ": total_bytes mismatch");
        }

        const std::string bytes = read_file(dir / "tensors.bin");
        if (bytes.size() != offset) {
            throw IntegrityError((dir / "tensors.bin").string() + ": expected " + std::to_string(offset) +
                                 " bytes, found " + std::to_string(bytes.size()));
        }
        std::size_t cursor = 0;
        for (TensorId id : kAllTensors) {
            Tensor& t = p[id];
            const std::size_t nbytes = t.size() * sizeof(double);
            unpack_f64(std::string_view(bytes).substr(cursor, nbytes), t.data);
            cursor += nbytes;
        }
    } catch (const json::exception& e) {
        throw IntegrityError(manifest_path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw IntegrityError(manifest_path.string() + ": " + e.what());
    } catch (const VocabularyError& e) {
        throw IntegrityError(manifest_path.string() + ": " + e.what());
    }
    p.validate();
    return p;
}

} // namespace gradlab
