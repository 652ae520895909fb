#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "peep/classifier.hpp"
#include "peep/features.hpp"
#include "peep/scattering.hpp"

namespace peep {

// On-disk containers.
//  * Tensors / feature matrices: <base>.bin (raw little-endian float64) plus a
//    <base>.json sidecar describing shape and metadata.
//  * Models: a single versioned file, JSON header followed by the raw double
//    payload. Byte-stable for identical inputs.

using json = nlohmann::json;

namespace detail {

inline void write_doubles(std::ofstream& out, const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

inline void read_doubles(std::ifstream& in, double* data, std::size_t count) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
    if (!in) throw IoError("container: truncated double payload");
}

}  // namespace detail

inline void save_blob(const std::string& base, const json& header,
                      const std::vector<double>& data) {
    std::ofstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot write " + base + ".bin");
    detail::write_doubles(bin, data.data(), data.size());
    if (!bin) throw IoError("write failed: " + base + ".bin");
    write_text_file(base + ".json", header.dump(2) + "\n");
}

inline std::vector<double> load_blob(const std::string& base, json& header) {
    header = json::parse(read_text_file(base + ".json"));
    std::ifstream bin(base + ".bin", std::ios::binary | std::ios::ate);
    if (!bin) throw IoError("cannot open " + base + ".bin");
    const auto bytes = static_cast<std::size_t>(bin.tellg());
    bin.seekg(0);
    std::vector<double> data(bytes / 8);
    detail::read_doubles(bin, data.data(), data.size());
    return data;
}

inline void save_feature_matrix(const std::string& base, const FeatureMatrix& fm) {
    json h;
    h["container"] = "feature_matrix";
    h["dtype"] = "float64le";
    h["shape"] = {fm.frames(), fm.dim()};
    h["frame_hop"] = fm.frame_hop;
    h["frame_times"] = fm.frame_times;
    h["kind"] = fm.kind == FeatureKind::Jtfs ? "jtfs" : "mfcc";
    save_blob(base, h, fm.vectors.v);
}

inline FeatureMatrix load_feature_matrix(const std::string& base) {
    json h;
    auto data = load_blob(base, h);
    if (h.value("container", "") != "feature_matrix")
        throw IoError("not a feature matrix container: " + base);
    FeatureMatrix fm;
    fm.vectors.rows = h["shape"][0].get<std::size_t>();
    fm.vectors.cols = h["shape"][1].get<std::size_t>();
    if (fm.vectors.rows * fm.vectors.cols != data.size())
        throw IoError("feature matrix shape does not match payload: " + base);
    fm.vectors.v = std::move(data);
    fm.frame_hop = h["frame_hop"].get<double>();
    fm.frame_times = h["frame_times"].get<std::vector<double>>();
    fm.kind = h["kind"] == "mfcc" ? FeatureKind::Mfcc : FeatureKind::Jtfs;
    return fm;
}

inline void save_jtfs_tensor(const std::string& base, const JtfsTensor& t) {
    json h;
    h["container"] = "jtfs_tensor";
    h["dtype"] = "float64le";
    h["shape"] = {t.paths.size(), t.n_lambda_avg, t.n_frames};
    h["frame_hop"] = t.frame_hop;
    h["lambda_stride"] = t.lambda_stride;
    json paths = json::array();
    for (const auto& p : t.paths)
        paths.push_back({{"v_t", p.v_t}, {"v_f", p.v_f}, {"theta", p.theta},
                         {"mod_rate_hz", p.mod_rate_hz}});
    h["paths"] = paths;
    save_blob(base, h, t.values);
}

inline constexpr char kModelMagic[8] = {'P', 'E', 'E', 'P', 'M', 'D', 'L', '1'};

inline void save_model(const std::string& path, const TrainedModel& m) {
    json h;
    h["version"] = 1;
    h["scheme"] = m.scheme;
    h["config_hash"] = m.config_hash;
    h["dim"] = m.dim();
    h["skipped_classes"] = m.skipped_classes;
    json classes = json::array();
    for (const auto& c : m.classes)
        classes.push_back({{"label", label_name(c.label)},
                           {"c", c.c},
                           {"gamma", c.gamma},
                           {"cv_f", c.cv_f},
                           {"bias", c.svm.bias},
                           {"n_sv", c.svm.support.rows},
                           {"converged", c.svm.converged},
                           {"iterations", c.svm.iterations}});
    h["classes"] = classes;
    json th;
    for (Label t : call_types()) {
        auto gap = m.thresholds.min_gap.find(t);
        auto dur = m.thresholds.min_dur.find(t);
        if (gap == m.thresholds.min_gap.end() && dur == m.thresholds.min_dur.end()) continue;
        th[label_name(t)] = {
            {"min_gap", gap == m.thresholds.min_gap.end() ? 0.0 : gap->second},
            {"min_dur", dur == m.thresholds.min_dur.end() ? 0.0 : dur->second}};
    }
    h["thresholds"] = th;
    json degenerate = json::array();
    for (std::size_t d = 0; d < m.stats.degenerate.size(); ++d)
        if (m.stats.degenerate[d]) degenerate.push_back(d);
    h["degenerate_dims"] = degenerate;

    const std::string header = h.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model: " + path);
    out.write(kModelMagic, 8);
    const std::uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    detail::write_doubles(out, m.stats.mean.data(), m.stats.mean.size());
    detail::write_doubles(out, m.stats.std.data(), m.stats.std.size());
    for (const auto& c : m.classes) {
        detail::write_doubles(out, c.svm.dual_coef.data(), c.svm.dual_coef.size());
        detail::write_doubles(out, c.svm.support.v.data(), c.svm.support.v.size());
    }
    if (!out) throw IoError("write failed: " + path);
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
        throw IoError("not a model file: " + path);
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("truncated model header: " + path);
    const json h = json::parse(header);
    if (h.value("version", 0) != 1) throw IoError("unsupported model version in " + path);

    TrainedModel m;
    m.scheme = h.value("scheme", "");
    m.config_hash = h.value("config_hash", "");
    m.skipped_classes = h.value("skipped_classes", std::vector<std::string>{});
    if (h.contains("thresholds"))
        for (const auto& [name, jt] : h["thresholds"].items()) {
            const Label t = label_from_name(name);
            m.thresholds.min_gap[t] = jt["min_gap"].get<double>();
            m.thresholds.min_dur[t] = jt["min_dur"].get<double>();
            m.thresholds.missing[t] = false;
        }
    const auto dim = h["dim"].get<std::size_t>();
    m.stats.mean.resize(dim);
    m.stats.std.resize(dim);
    m.stats.degenerate.assign(dim, 0);
    detail::read_doubles(in, m.stats.mean.data(), dim);
    detail::read_doubles(in, m.stats.std.data(), dim);
    for (const auto& d : h["degenerate_dims"]) m.stats.degenerate[d.get<std::size_t>()] = 1;
    for (const auto& jc : h["classes"]) {
        ClassModel c;
        c.label = label_from_name(jc["label"].get<std::string>());
        c.c = jc["c"].get<double>();
        c.gamma = jc["gamma"].get<double>();
        c.cv_f = jc["cv_f"].get<double>();
        c.svm.bias = jc["bias"].get<double>();
        c.svm.gamma = c.gamma;
        c.svm.c = c.c;
        c.svm.converged = jc["converged"].get<bool>();
        c.svm.iterations = jc["iterations"].get<long>();
        const auto n_sv = jc["n_sv"].get<std::size_t>();
        c.svm.dual_coef.resize(n_sv);
        c.svm.support = Mat(n_sv, dim);
        detail::read_doubles(in, c.svm.dual_coef.data(), n_sv);
        detail::read_doubles(in, c.svm.support.v.data(), n_sv * dim);
        m.classes.push_back(std::move(c));
    }
    return m;
}

}  // namespace peep
