#include <cmath>
#include <limits>

#include "gradlab/error.hpp"
#include "gradlab/gradcore.hpp"
#include "gradlab/io.hpp"

namespace gradlab {

namespace fs = std::filesystem;

namespace {
constexpr const char* kGradiendFormat = "1";
}

void save_gradiend(const GradiendModel& gm, const fs::path& dir) {
    gm.validate();
    fs::create_directories(dir);

    std::vector<std::uint64_t> kept(gm.mask.kept.begin(), gm.mask.kept.end());
    std::string tensors = pack_f64(gm.w_enc);
    tensors += pack_f64(gm.w_dec);
    tensors += pack_f64(gm.b_dec);

    json meta;
    meta["format_version"] = kGradiendFormat;
    meta["class_neg"] = gm.class_neg;
    meta["class_pos"] = gm.class_pos;
    meta["b_enc"] = gm.b_enc;
    meta["dim"] = gm.dim();
    meta["selection"] = {{"tensors", gm.selection.names()}, {"sizes", gm.selection.sizes()}};
    meta["base_checkpoint_ref"] = gm.base_checkpoint_ref;
    meta["mask"] = {{"origin", std::string(to_string(gm.mask.origin))}, {"count", kept.size()}};
    meta["signal"] = {{"source", std::string(to_string(gm.signal.source))},
                      {"target", std::string(to_string(gm.signal.target))}};

    write_file_atomic(dir / "mask.bin", pack_u64(kept));
    write_file_atomic(dir / "tensors.bin", tensors);
    write_file_atomic(dir / "gradiend.json", dump_json(meta));
}

GradiendModel load_gradiend(const fs::path& dir) {
    const fs::path meta_path = dir / "gradiend.json";
    const json meta = read_json(meta_path);
    GradiendModel gm;
    try {
        if (meta.at("format_version").get<std::string>() != kGradiendFormat) {
            throw IntegrityError(meta_path.string() + ": unsupported format_version");
        }
        gm.class_neg = meta.at("class_neg").get<std::string>();
        gm.class_pos = meta.at("class_pos").get<std::string>();
        gm.b_enc = meta.at("b_enc").get<double>();
        gm.base_checkpoint_ref = meta.at("base_checkpoint_ref").get<std::string>();
        std::vector<TensorId> tensors;
        for (const auto& name : meta.at("selection").at("tensors")) {
            tensors.push_back(tensor_from_name(name.get<std::string>()));
        }
        gm.selection = ParamSelection(tensors, meta.at("selection").at("sizes").get<std::vector<std::size_t>>());
        gm.mask.origin = mask_origin_from_string(meta.at("mask").at("origin").get<std::string>());
        gm.signal.source = signal_from_string(meta.at("signal").at("source").get<std::string>());
        gm.signal.target = signal_from_string(meta.at("signal").at("target").get<std::string>());
        const std::size_t count = meta.at("mask").at("count").get<std::size_t>();
        if (meta.at("dim").get<std::size_t>() != count) {
            throw IntegrityError(meta_path.string() + ": dim and mask count disagree");
        }

        const std::string mask_bytes = read_file(dir / "mask.bin");
        std::vector<std::uint64_t> kept(count);
        unpack_u64(mask_bytes, kept);
        gm.mask.kept.assign(kept.begin(), kept.end());

        const std::string tensor_bytes = read_file(dir / "tensors.bin");
        const std::size_t block = count * sizeof(double);
        if (tensor_bytes.size() != 3 * block) {
            throw IntegrityError((dir / "tensors.bin").string() + ": expected " + std::to_string(3 * block) +
                                 " bytes, found " + std::to_string(tensor_bytes.size()));
        }
        gm.w_enc.resize(count);
        gm.w_dec.resize(count);
        gm.b_dec.resize(count);
        const std::string_view view(tensor_bytes);
        unpack_f64(view.substr(0, block), gm.w_enc);
        unpack_f64(view.substr(block, block), gm.w_dec);
        unpack_f64(view.substr(2 * block, block), gm.b_dec);
    } catch (const json::exception& e) {
        throw IntegrityError(meta_path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw IntegrityError(meta_path.string() + ": " + e.what());
    }
    try {
        gm.validate();
    } catch (const Error& e) {
        throw IntegrityError(dir.string() + ": " + e.what());
    }
    return gm;
}

namespace {

// JSON has no NaN; undefined correlations are written as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

} // namespace

json to_json(const TrainingTrace& trace) {
    json corr = json::array();
    for (double c : trace.correlation) {
        corr.push_back(number_or_null(c));
    }
    return json{{"seed", trace.seed},
                {"step", trace.step},
                {"loss", trace.loss},
                {"correlation", corr},
                {"best_abs_correlation", number_or_null(trace.best_abs_correlation)},
                {"best_step", trace.best_step}};
}

TrainingTrace trace_from_json(const json& j) {
    TrainingTrace t;
    try {
        t.seed = j.at("seed").get<std::uint64_t>();
        t.step = j.at("step").get<std::vector<std::size_t>>();
        t.loss = j.at("loss").get<std::vector<double>>();
        for (const auto& c : j.at("correlation")) {
            t.correlation.push_back(number_from(c));
        }
        t.best_abs_correlation = number_from(j.at("best_abs_correlation"));
        t.best_step = j.at("best_step").get<std::size_t>();
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("trace: ") + e.what());
    }
    return t;
}

} // namespace gradlab
