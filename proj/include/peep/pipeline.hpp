#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "peep/classifier.hpp"
#include "peep/config.hpp"
#include "peep/detection.hpp"
#include "peep/events.hpp"
#include "peep/evaluation.hpp"
#include "peep/features.hpp"
#include "peep/synth.hpp"
#include "peep/tensor_io.hpp"

namespace peep {

namespace fs = std::filesystem;

enum class Scheme { ScatOnly, SegScat, MfccOnly, SegMfcc };

inline Scheme scheme_from_name(const std::string& name) {
    const std::string s = lowercase(name);
    if (s == "scat-only") return Scheme::ScatOnly;
    if (s == "seg-scat") return Scheme::SegScat;
    if (s == "mfcc-only") return Scheme::MfccOnly;
    if (s == "seg-mfcc") return Scheme::SegMfcc;
    throw ValidationError("unknown scheme '" + name +
                          "' (expected scat-only, seg-scat, mfcc-only or seg-mfcc)");
}

inline std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::ScatOnly: return "scat-only";
        case Scheme::SegScat: return "seg-scat";
        case Scheme::MfccOnly: return "mfcc-only";
        default: return "seg-mfcc";
    }
}

inline bool scheme_uses_segments(Scheme s) {
    return s == Scheme::SegScat || s == Scheme::SegMfcc;
}

inline bool scheme_uses_jtfs(Scheme s) {
    return s == Scheme::ScatOnly || s == Scheme::SegScat;
}

struct DatasetItem {
    std::string subject;
    std::string audio_path;
    AudioClip clip;
    AnnotationSet ann;
};

struct Dataset {
    std::vector<DatasetItem> items;  // sorted by subject id

    std::vector<AnnotationSet> annotations_except(const std::string& held_out) const {
        std::vector<AnnotationSet> out;
        for (const auto& it : items)
            if (it.subject != held_out) out.push_back(it.ann);
        return out;
    }
};

/// Loads a manifest `path,subject_id`; annotations sit next to each WAV as
/// `<stem>.csv`.
inline Dataset load_dataset(const std::string& manifest_path, int target_rate) {
    const auto base = fs::path(manifest_path).parent_path().string();
    Dataset ds;
    for (const auto& entry : load_manifest(manifest_path, base)) {
        DatasetItem item;
        item.subject = entry.subject_id;
        item.audio_path = entry.audio_path;
        item.clip = load_audio(entry.audio_path, target_rate);
        const auto ann_path = fs::path(entry.audio_path).replace_extension(".csv").string();
        item.ann = load_annotations(ann_path, entry.subject_id, item.clip.duration());
        ds.items.push_back(std::move(item));
    }
    std::sort(ds.items.begin(), ds.items.end(),
              [](const DatasetItem& a, const DatasetItem& b) { return a.subject < b.subject; });
    for (std::size_t i = 1; i < ds.items.size(); ++i)
        if (ds.items[i].subject == ds.items[i - 1].subject)
            throw ValidationError("duplicate subject id in manifest: " + ds.items[i].subject);
    return ds;
}

// ---------------------------------------------------------------------------
// Feature engine: turns clips or clip spans into classifier-ready frames,
// with filterbanks cached per FFT size.

class FeatureEngine {
public:
    explicit FeatureEngine(const PipelineConfig& cfg)
        : q1_(static_cast<int>(cfg.integer("scattering.q1"))),
          j1_(static_cast<int>(cfg.integer("scattering.j1"))),
          q2_(static_cast<int>(cfg.integer("scattering.q2"))),
          j2_(static_cast<int>(cfg.integer("scattering.j2"))),
          qf_(static_cast<int>(cfg.integer("scattering.qf"))),
          jf_(static_cast<int>(cfg.integer("scattering.jf"))),
          t_(static_cast<int>(cfg.integer("scattering.time_avg"))),
          alpha_(static_cast<int>(cfg.integer("scattering.oversampling"))),
          hop_override_(static_cast<int>(cfg.integer("scattering.scalogram_hop"))),
          mod_lo_(cfg.real("scattering.mod_lo")),
          mod_hi_(cfg.real("scattering.mod_hi")),
          include_s1_(cfg.boolean("features.include_s1")),
          context_(static_cast<int>(cfg.integer("features.context"))),
          mfcc_context_(cfg.boolean("features.mfcc_context")) {
        lp_.spec.t = t_;
        lp_.spec.f = static_cast<int>(cfg.integer("scattering.freq_avg_octaves")) * q1_;
        lp_.spec.validate();
        jtfs_opts_.include_lowpass_fr = cfg.boolean("scattering.lowpass_fr_paths");
        mfcc_params_.frame = cfg.real("features.mfcc_frame");
        mfcc_params_.hop = cfg.real("features.mfcc_hop");
        mfcc_params_.n_coeffs = static_cast<int>(cfg.integer("features.mfcc_coeffs"));
        mfcc_params_.n_mels = static_cast<int>(cfg.integer("features.mfcc_mels"));
    }

    int output_hop() const { return t_ >> alpha_; }
    int time_avg() const { return t_; }

    /// JTFS + context features of a whole clip; frame k sits at k * hop_out.
    FeatureMatrix jtfs_full(const AudioClip& clip) {
        auto fm = jtfs_frames(clip);
        return context_stats(fm, context_);
    }

    /// JTFS + context features of [start, end) seconds inside a recording,
    /// computed on a cut that carries T of real context on each side. Frame
    /// times are relative to the segment start; at least one frame comes back.
    FeatureMatrix jtfs_segment(const AudioClip& clip, double start, double end) {
        const auto len = static_cast<std::ptrdiff_t>(clip.samples.size());
        auto a = static_cast<std::ptrdiff_t>(std::floor(start * clip.sample_rate));
        auto b = static_cast<std::ptrdiff_t>(std::ceil(end * clip.sample_rate));
        a = std::clamp<std::ptrdiff_t>(a, 0, len);
        b = std::clamp<std::ptrdiff_t>(b, a, len);

        std::ptrdiff_t lo = a - t_, hi = b + t_;
        if (lo < 0) {
            hi = std::min(len, hi - lo);
            lo = 0;
        }
        if (hi > len) {
            lo = std::max<std::ptrdiff_t>(0, lo - (hi - len));
            hi = len;
        }
        if (hi - lo < 2 * static_cast<std::ptrdiff_t>(t_))
            throw ValidationError("recording too short for segment features (needs 2T of audio)");

        AudioClip cut;
        cut.sample_rate = clip.sample_rate;
        cut.samples.assign(clip.samples.begin() + lo, clip.samples.begin() + hi);
        auto fm = jtfs_frames(cut);

        // keep frames whose position falls inside the segment
        const double seg_lo = static_cast<double>(a - lo) / clip.sample_rate;
        const double seg_hi = static_cast<double>(b - lo) / clip.sample_rate;
        std::vector<std::size_t> keep;
        for (std::size_t k = 0; k < fm.frames(); ++k)
            if (fm.frame_times[k] >= seg_lo - 1e-9 && fm.frame_times[k] < seg_hi - 1e-9)
                keep.push_back(k);
        if (keep.empty()) {
            const double mid = (seg_lo + seg_hi) / 2.0;
            std::size_t best = 0;
            for (std::size_t k = 1; k < fm.frames(); ++k)
                if (std::abs(fm.frame_times[k] - mid) < std::abs(fm.frame_times[best] - mid))
                    best = k;
            keep.push_back(best);
        }
        FeatureMatrix out;
        out.kind = fm.kind;
        out.frame_hop = fm.frame_hop;
        out.vectors = Mat(keep.size(), fm.dim());
        out.frame_times.resize(keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i) {
            std::copy(fm.vectors.row(keep[i]), fm.vectors.row(keep[i]) + fm.dim(),
                      out.vectors.row(i));
            out.frame_times[i] = fm.frame_times[keep[i]] - seg_lo;
        }
        return context_stats(out, context_);
    }

    FeatureMatrix mfcc_full(const AudioClip& clip) {
        auto fm = mfcc(clip, mfcc_params_);
        return mfcc_context_ ? context_stats(fm, context_) : fm;
    }

    FeatureMatrix mfcc_segment(const AudioClip& clip, double start, double end) {
        const auto len = static_cast<std::ptrdiff_t>(clip.samples.size());
        auto a = static_cast<std::ptrdiff_t>(std::floor(start * clip.sample_rate));
        auto b = static_cast<std::ptrdiff_t>(std::ceil(end * clip.sample_rate));
        a = std::clamp<std::ptrdiff_t>(a, 0, len);
        b = std::clamp<std::ptrdiff_t>(b, a, len);
        const auto min_len = static_cast<std::ptrdiff_t>(
            std::lround(mfcc_params_.frame * clip.sample_rate));
        if (b - a < min_len) b = std::min(len, a + min_len);
        if (b - a < min_len)
            a = std::max<std::ptrdiff_t>(0, b - min_len);

        AudioClip cut;
        cut.sample_rate = clip.sample_rate;
        cut.samples.assign(clip.samples.begin() + a, clip.samples.begin() + b);
        auto fm = mfcc(cut, mfcc_params_);
        return mfcc_context_ ? context_stats(fm, context_) : fm;
    }

    FeatureMatrix full(Scheme scheme, const AudioClip& clip) {
        return scheme_uses_jtfs(scheme) ? jtfs_full(clip) : mfcc_full(clip);
    }

    FeatureMatrix segment(Scheme scheme, const AudioClip& clip, double start, double end) {
        return scheme_uses_jtfs(scheme) ? jtfs_segment(clip, start, end)
                                        : mfcc_segment(clip, start, end);
    }

    /// Raw (pre-context) scattering products, for dumps and plots.
    std::pair<JtfsTensor, S1Matrix> raw_jtfs(const AudioClip& clip) {
        const auto scal = make_scalogram(clip);
        const auto& mod = mod_bank(scal.values.cols);
        const auto& spec = spec_bank(scal.values.rows);
        // paths outside the modulation band never survive the selection, so
        // don't spend convolutions on them; the selection below stays the
        // contract-level filter (and the empty-band error surface)
        const double scal_rate = static_cast<double>(scal.sample_rate) / scal.hop;
        Filterbank pruned = mod;
        pruned.filters.clear();
        for (const auto& f : mod.filters) {
            const double rate = f.center_frequency * scal_rate;
            if (rate >= mod_lo_ && rate <= mod_hi_) pruned.filters.push_back(f);
        }
        const Filterbank& effective = pruned.filters.empty() ? mod : pruned;
        auto tensor = jtfs(scal, effective, spec, lp_, alpha_, jtfs_opts_);
        tensor = select_modulation_band(tensor, mod_lo_, mod_hi_);
        auto s1m = s1(scal, lp_, alpha_);
        return {std::move(tensor), std::move(s1m)};
    }

private:
    FeatureMatrix jtfs_frames(const AudioClip& clip) {
        auto [tensor, s1m] = raw_jtfs(clip);
        return jtfs_feature_frames(tensor, s1m, include_s1_);
    }

    Scalogram make_scalogram(const AudioClip& clip) {
        const std::size_t n_fft = next_pow2(clip.samples.size() + 2 * static_cast<std::size_t>(t_));
        return scalogram(clip, first_bank(n_fft), t_, hop_override_, output_hop());
    }

    const Filterbank& first_bank(std::size_t n_fft) {
        auto& slot = first_banks_[n_fft];
        if (slot.filters.empty()) slot = build_temporal_filterbank(q1_, j1_, n_fft);
        return slot;
    }

    const Filterbank& mod_bank(std::size_t n_cols) {
        auto& slot = mod_banks_[n_cols];
        if (slot.filters.empty()) slot = build_temporal_filterbank(q2_, j2_, n_cols);
        return slot;
    }

    const Filterbank& spec_bank(std::size_t n_rows) {
        auto& slot = spec_banks_[n_rows];
        if (slot.filters.empty()) {
            int half_f = 0;
            SeparableLowpass::spatial_kernel(static_cast<double>(lp_.spec.f), half_f);
            const std::size_t n_fr =
                spectral_fft_size(qf_, jf_, n_rows, static_cast<std::size_t>(half_f) + 2);
            slot = build_spectral_filterbank(qf_, jf_, n_fr);
        }
        return slot;
    }

    int q1_, j1_, q2_, j2_, qf_, jf_, t_, alpha_, hop_override_;
    double mod_lo_, mod_hi_;
    bool include_s1_;
    int context_;
    bool mfcc_context_;
    SeparableLowpass lp_;
    JtfsOptions jtfs_opts_;
    MfccParams mfcc_params_;
    std::map<std::size_t, Filterbank> first_banks_, mod_banks_, spec_banks_;
};

// ---------------------------------------------------------------------------
// Detection stage wrapper.

struct DetectionResult {
    OnsetEnvelope envelope;
    std::vector<double> onsets;
    std::vector<Segment> segments;
};

inline DetectionResult run_detection(const AudioClip& clip, const PipelineConfig& cfg) {
    SuperfluxParams sp;
    sp.n_fft = static_cast<int>(cfg.integer("detection.n_fft"));
    sp.hop = static_cast<int>(cfg.integer("detection.hop"));
    sp.n_bands = static_cast<int>(cfg.integer("detection.n_bands"));
    sp.fmin = cfg.real("detection.fmin");
    sp.fmax = cfg.real("detection.fmax");
    sp.max_width = static_cast<int>(cfg.integer("detection.max_width"));
    sp.lag = static_cast<int>(cfg.integer("detection.lag"));
    PeakPickParams pp;
    pp.pre_max = cfg.real("detection.pre_max");
    pp.post_max = cfg.real("detection.post_max");
    pp.pre_avg = cfg.real("detection.pre_avg");
    pp.post_avg = cfg.real("detection.post_avg");
    pp.delta = cfg.real("detection.delta");
    pp.wait = cfg.real("detection.wait");
    SegmentParams sg;
    sg.threshold_db = cfg.real("detection.silence_db");
    sg.rms_window = cfg.real("detection.rms_window");
    sg.rms_hop = cfg.real("detection.rms_hop");

    DetectionResult out;
    out.envelope = superflux_envelope(clip, sp);
    out.onsets = pick_peaks(out.envelope, pp);
    out.segments = segment_calls(clip, out.onsets, sg);
    return out;
}

// ---------------------------------------------------------------------------
// Reports.

struct SubjectReport {
    std::string subject;
    Prf onset;
    SegmentationScores segmentation;
    std::map<Label, Prf> frame_per_class, event_per_class;
    double frame_macro = 0.0, event_macro = 0.0;
    std::vector<std::string> skipped_classes;
    std::map<std::string, GridPoint> chosen;  // per class: best C/gamma + cv F
};

struct EvalReport {
    std::string scheme;
    std::string config_hash;
    bool annotated_segments = false;
    std::vector<SubjectReport> subjects;
    std::map<Label, Prf> frame_pooled, event_pooled;
    Prf onset_pooled;
    SegmentationScores seg_pooled;
    double frame_macro = 0.0, event_macro = 0.0;
    std::vector<Label> classes_present;  // in the references

    json to_json() const {
        json j;
        j["scheme"] = scheme;
        j["config_hash"] = config_hash;
        j["annotated_segments"] = annotated_segments;
        auto prf_json = [](const Prf& p) {
            return json{{"precision", p.precision}, {"recall", p.recall}, {"f", p.f},
                        {"tp", p.tp},               {"fp", p.fp},         {"fn", p.fn}};
        };
        auto class_map = [&](const std::map<Label, Prf>& m) {
            json out;
            for (const auto& [cls, prf] : m) out[label_name(cls)] = prf_json(prf);
            return out;
        };
        j["overall"] = {{"frame", class_map(frame_pooled)},
                        {"event", class_map(event_pooled)},
                        {"frame_macro_f", frame_macro},
                        {"event_macro_f", event_macro},
                        {"onset", prf_json(onset_pooled)},
                        {"segmentation_frame", prf_json(seg_pooled.frame)},
                        {"segmentation_event", prf_json(seg_pooled.event)}};
        json present = json::array();
        for (Label c : classes_present) present.push_back(label_name(c));
        j["classes_present"] = present;
        json subs = json::array();
        for (const auto& s : subjects) {
            json js;
            js["subject"] = s.subject;
            js["onset"] = prf_json(s.onset);
            js["segmentation_frame"] = prf_json(s.segmentation.frame);
            js["segmentation_event"] = prf_json(s.segmentation.event);
            js["frame"] = class_map(s.frame_per_class);
            js["event"] = class_map(s.event_per_class);
            js["frame_macro_f"] = s.frame_macro;
            js["event_macro_f"] = s.event_macro;
            js["skipped_classes"] = s.skipped_classes;
            json chosen;
            for (const auto& [cls, gp] : s.chosen)
                chosen[cls] = {{"c", gp.c}, {"gamma", gp.gamma}, {"cv_f", gp.mean_f}};
            js["hyperparameters"] = chosen;
            subs.push_back(std::move(js));
        }
        j["subjects"] = subs;
        return j;
    }

    std::string to_text() const {
        std::ostringstream out;
        auto pct = [](double v) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%5.1f", v * 100.0);
            return std::string(buf);
        };
        out << "scheme: " << scheme << (annotated_segments ? " (annotated segments)" : "")
            << "   config: " << config_hash << "\n\n";
        out << "subject     |  onset P     R     F  |  seg-frame F  seg-event F\n";
        out << "------------+------------------------+--------------------------\n";
        for (const auto& s : subjects)
            out << "  " << s.subject << std::string(s.subject.size() < 10 ? 10 - s.subject.size() : 1, ' ')
                << "| " << pct(s.onset.precision) << " " << pct(s.onset.recall) << " "
                << pct(s.onset.f) << "  |     " << pct(s.segmentation.frame.f) << "        "
                << pct(s.segmentation.event.f) << "\n";
        out << "  total     | " << pct(onset_pooled.precision) << " " << pct(onset_pooled.recall)
            << " " << pct(onset_pooled.f) << "  |     " << pct(seg_pooled.frame.f) << "        "
            << pct(seg_pooled.event.f) << "\n\n";

        out << "recognition (pooled over subjects), F per class:\n";
        out << "            ";
        for (Label c : classes_present) out << label_name(c) << "  ";
        out << "macro\n";
        out << "  frame     ";
        for (Label c : classes_present) out << pct(frame_pooled.at(c).f) << "     ";
        out << pct(frame_macro) << "\n";
        out << "  event     ";
        for (Label c : classes_present) out << pct(event_pooled.at(c).f) << "     ";
        out << pct(event_macro) << "\n";
        return out.str();
    }
};

// ---------------------------------------------------------------------------
// The leave-one-subject-out protocol.

struct RunOptions {
    Scheme scheme = Scheme::SegScat;
    bool annotated_segments = false;
    std::string run_root = "runs";
    bool emit_plots = false;
    bool cache_features = true;
};

namespace detail {

struct SubjectFeatures {
    LabeledFrames frames;                  // training view (annotated events / full grid)
    std::vector<FeatureMatrix> test_fms;   // per test segment, or one full matrix
    std::vector<Segment> test_segments;    // aligned with test_fms for seg schemes
    std::vector<double> detected_onsets;
    std::vector<Segment> detected_segments;
    double frame_hop = 0.0;
};

inline Label label_at(const std::vector<CallEvent>& events, double t) {
    for (const auto& e : events)
        if (t >= e.onset && t < e.offset) return e.label;
    return Label::Background;
}

inline std::string feature_cache_name(const DatasetItem& item, Scheme scheme) {
    const std::uint64_t audio_hash =
        fnv1a64(item.clip.samples.data(), item.clip.samples.size() * sizeof(double));
    return item.subject + "-" + scheme_name(scheme) + "-" + to_hex(audio_hash);
}

}  // namespace detail

class ProtocolRunner {
public:
    ProtocolRunner(const Dataset& dataset, const PipelineConfig& cfg, const RunOptions& opts)
        : ds_(dataset), cfg_(cfg), opts_(opts), engine_(cfg) {
        cfg_.validate();
        if (ds_.items.size() < 2)
            throw ValidationError("protocol: leave-one-subject-out needs at least 2 subjects");
        run_dir_ = fs::path(opts_.run_root) /
                   (cfg_.hash() + "-" + scheme_name(opts_.scheme) +
                    (opts_.annotated_segments ? "-annotated" : ""));
        fs::create_directories(run_dir_ / "features");
        fs::create_directories(run_dir_ / "models");
        fs::create_directories(run_dir_ / "predictions");
        if (opts_.emit_plots) fs::create_directories(run_dir_ / "plots");
    }

    const fs::path& run_dir() const { return run_dir_; }

    EvalReport run() {
        prepare_subjects();

        EvalReport report;
        report.scheme = scheme_name(opts_.scheme);
        report.config_hash = cfg_.hash();
        report.annotated_segments = opts_.annotated_segments;

        const SvmParams base = svm_params();
        const auto c_grid = cfg_.real_list("classifier.c_grid");
        const auto gamma_grid = cfg_.real_list("classifier.gamma_grid");
        const auto folds = static_cast<int>(cfg_.integer("classifier.folds"));

        std::vector<LabeledFrames> all_frames;
        for (auto& [subject, sf] : subjects_) all_frames.push_back(sf.frames);
        const auto plans = make_splits(all_frames, static_cast<std::uint64_t>(cfg_.integer("seed")),
                                       folds);

        for (const auto& plan : plans) {
            const auto& item = item_of(plan.held_out);
            auto& sf = subjects_.at(plan.held_out);

            // normalization + training on this split's training frames
            auto data = assemble_split(all_frames, plan);
            FeatureMatrix train_view;
            train_view.vectors = data.x;
            train_view.frame_hop = sf.frame_hop;
            train_view.frame_times.assign(data.y.size(), 0.0);
            const NormStats stats = zscore_fit(train_view);
            data.x = zscore_apply(train_view, stats).vectors;

            TrainedModel model = train_one_vs_rest(data, c_grid, gamma_grid, base, folds);
            model.stats = stats;
            model.thresholds = training_thresholds(ds_.annotations_except(plan.held_out));
            model.scheme = scheme_name(opts_.scheme);
            model.config_hash = cfg_.hash();
            save_model((run_dir_ / "models" / (plan.held_out + ".peepmdl")).string(), model);

            // predict the held-out subject
            std::vector<CallEvent> predicted;
            if (scheme_uses_segments(opts_.scheme)) {
                for (std::size_t s = 0; s < sf.test_fms.size(); ++s) {
                    const auto pred = predict_frames(model, sf.test_fms[s]);
                    std::map<Label, double> sums;
                    for (std::size_t f = 0; f < pred.labels.size(); ++f)
                        for (std::size_t c = 0; c < model.classes.size(); ++c)
                            sums[model.classes[c].label] += pred.decisions.at(f, c);
                    const Label vote = majority_vote(pred.labels, sums);
                    if (vote == Label::Background) continue;
                    predicted.push_back(
                        CallEvent{sf.test_segments[s].start, sf.test_segments[s].end, vote});
                }
            } else {
                const auto pred = predict_frames(model, sf.test_fms.front());
                LabeledFrameSeq seq;
                seq.labels = pred.labels;
                seq.frame_hop = sf.test_fms.front().frame_hop;
                seq.start_time = sf.test_fms.front().frame_times.front() - seq.frame_hop / 2.0;
                auto events = fuse_frames(seq);
                for (auto& e : events) e.onset = std::max(0.0, e.onset);
                events = postprocess(events, model.thresholds.min_gap, model.thresholds.min_dur);
                predicted = std::move(events);
            }
            write_text_file((run_dir_ / "predictions" / (plan.held_out + ".csv")).string(),
                            events_to_csv(predicted));

            report.subjects.push_back(
                evaluate_subject(item, sf, model, predicted));
        }

        finalize(report);
        write_text_file((run_dir_ / "report.json").string(), report.to_json().dump(2) + "\n");
        write_text_file((run_dir_ / "report.txt").string(), report.to_text());
        return report;
    }

private:
    SvmParams svm_params() const {
        SvmParams p;
        p.tol = cfg_.real("classifier.tol");
        p.max_iter = cfg_.integer("classifier.max_iter");
        p.cache_bytes = static_cast<std::size_t>(cfg_.integer("classifier.cache_mb")) << 20;
        return p;
    }

    const DatasetItem& item_of(const std::string& subject) const {
        for (const auto& it : ds_.items)
            if (it.subject == subject) return it;
        throw ValidationError("unknown subject: " + subject);
    }

    void prepare_subjects() {
        for (const auto& item : ds_.items) {
            detail::SubjectFeatures sf;
            sf.frames.subject = item.subject;

            const auto cache_base =
                (run_dir_ / "features" / detail::feature_cache_name(item, opts_.scheme)).string();

            if (opts_.emit_plots && scheme_uses_jtfs(opts_.scheme) && !item.ann.events.empty()) {
                // path-energy series for the first annotated call, on a cut
                // wide enough for the averaging scale
                const auto& e = item.ann.events.front();
                const double half = static_cast<double>(engine_.time_avg()) / item.clip.sample_rate;
                const double mid = (e.onset + e.offset) / 2.0;
                const auto a = static_cast<std::size_t>(
                    std::max(0.0, (mid - 1.5 * half) * item.clip.sample_rate));
                const auto b = std::min(item.clip.samples.size(),
                                        a + static_cast<std::size_t>(3.0 * half *
                                                                     item.clip.sample_rate));
                if (b - a >= 2 * static_cast<std::size_t>(engine_.time_avg())) {
                    AudioClip cut;
                    cut.sample_rate = item.clip.sample_rate;
                    cut.samples.assign(item.clip.samples.begin() + static_cast<std::ptrdiff_t>(a),
                                       item.clip.samples.begin() + static_cast<std::ptrdiff_t>(b));
                    const auto [tensor, s1m] = engine_.raw_jtfs(cut);
                    write_text_file(
                        (run_dir_ / "plots" / (item.subject + "_path_energy.csv")).string(),
                        path_energies_csv(tensor));
                    write_text_file(
                        (run_dir_ / "plots" / (item.subject + "_spectrogram.csv")).string(),
                        s1_to_csv(s1m));
                }
            }

            if (scheme_uses_segments(opts_.scheme)) {
                const auto det = run_detection(item.clip, cfg_);
                sf.detected_onsets = det.onsets;
                sf.detected_segments = det.segments;
                if (opts_.emit_plots)
                    write_text_file(
                        (run_dir_ / "plots" / (item.subject + "_envelope.csv")).string(),
                        envelope_to_csv(det.envelope));

                // training side: annotated call segments, one label per segment
                std::vector<FeatureMatrix> train_fms;
                if (!load_segment_cache(cache_base + "-train", item.ann.events.size(), train_fms)) {
                    for (const auto& e : item.ann.events)
                        train_fms.push_back(
                            engine_.segment(opts_.scheme, item.clip, e.onset, e.offset));
                    save_segment_cache(cache_base + "-train", train_fms);
                }
                stack_training_frames(item, train_fms, sf);

                // test side: detected (or annotated) segments
                if (opts_.annotated_segments)
                    for (const auto& e : item.ann.events)
                        sf.test_segments.push_back(Segment{e.onset, e.offset});
                else
                    sf.test_segments = det.segments;
                if (!load_segment_cache(cache_base + "-test", sf.test_segments.size(),
                                        sf.test_fms)) {
                    for (const auto& s : sf.test_segments)
                        sf.test_fms.push_back(
                            engine_.segment(opts_.scheme, item.clip, s.start, s.end));
                    save_segment_cache(cache_base + "-test", sf.test_fms);
                }
            } else {
                FeatureMatrix fm;
                bool cached = false;
                if (opts_.cache_features && fs::exists(cache_base + "-full.json")) {
                    fm = load_feature_matrix(cache_base + "-full");
                    cached = true;
                }
                if (!cached) {
                    fm = engine_.full(opts_.scheme, item.clip);
                    if (opts_.cache_features) save_feature_matrix(cache_base + "-full", fm);
                }
                sf.frame_hop = fm.frame_hop;
                sf.frames.x = fm.vectors;
                sf.frames.y.resize(fm.frames());
                for (std::size_t f = 0; f < fm.frames(); ++f) {
                    sf.frames.y[f] = detail::label_at(item.ann.events, fm.frame_times[f]);
                    sf.frames.keys.emplace_back(0, static_cast<int>(f));
                }
                sf.test_fms.push_back(std::move(fm));
            }
            subjects_.emplace(item.subject, std::move(sf));
        }
    }

    void stack_training_frames(const DatasetItem& item, const std::vector<FeatureMatrix>& fms,
                               detail::SubjectFeatures& sf) {
        std::size_t total = 0, dim = 0;
        for (const auto& fm : fms) {
            total += fm.frames();
            dim = fm.dim();
            sf.frame_hop = fm.frame_hop;
        }
        sf.frames.x = Mat(total, dim);
        std::size_t r = 0;
        for (std::size_t s = 0; s < fms.size(); ++s)
            for (std::size_t f = 0; f < fms[s].frames(); ++f, ++r) {
                std::copy(fms[s].vectors.row(f), fms[s].vectors.row(f) + dim, sf.frames.x.row(r));
                sf.frames.y.push_back(item.ann.events[s].label);
                sf.frames.keys.emplace_back(static_cast<int>(s), static_cast<int>(f));
            }
    }

    bool load_segment_cache(const std::string& base, std::size_t expected,
                            std::vector<FeatureMatrix>& out) {
        if (!opts_.cache_features) return false;
        out.clear();
        for (std::size_t i = 0; i < expected; ++i) {
            const std::string name = base + "-" + std::to_string(i);
            if (!fs::exists(name + ".json")) return false;
            out.push_back(load_feature_matrix(name));
        }
        return true;
    }

    void save_segment_cache(const std::string& base, const std::vector<FeatureMatrix>& fms) {
        if (!opts_.cache_features) return;
        for (std::size_t i = 0; i < fms.size(); ++i)
            save_feature_matrix(base + "-" + std::to_string(i), fms[i]);
    }

    SubjectReport evaluate_subject(const DatasetItem& item, const detail::SubjectFeatures& sf,
                                   const TrainedModel& model,
                                   const std::vector<CallEvent>& predicted) {
        SubjectReport rep;
        rep.subject = item.subject;
        rep.skipped_classes = model.skipped_classes;
        for (const auto& c : model.classes)
            rep.chosen[label_name(c.label)] = GridPoint{c.c, c.gamma, c.cv_f};

        EventEvalParams ep;
        ep.onset_tol = cfg_.real("eval.event_onset_tol");
        ep.dur_ratio = cfg_.real("eval.event_dur_ratio");
        ep.criterion = lowercase(cfg_.raw("eval.event_dur_criterion")) == "overlap"
                           ? DurCriterion::Overlap
                           : DurCriterion::Ratio;
        const double grid = cfg_.real("eval.frame_grid");
        const double dur = item.clip.duration();

        std::vector<double> ref_onsets, pred_onsets;
        for (const auto& e : item.ann.events) ref_onsets.push_back(e.onset);
        if (scheme_uses_segments(opts_.scheme)) {
            pred_onsets = sf.detected_onsets;
            rep.segmentation = segmentation_eval(item.ann.events, sf.detected_segments, dur, grid, ep);
        } else {
            for (const auto& e : predicted) pred_onsets.push_back(e.onset);
            std::vector<Segment> as_segments;
            for (const auto& e : predicted) as_segments.push_back(Segment{e.onset, e.offset});
            rep.segmentation = segmentation_eval(item.ann.events, as_segments, dur, grid, ep);
        }
        rep.onset = match_onsets(ref_onsets, pred_onsets, cfg_.real("eval.onset_window"));
        rep.frame_per_class = frame_eval(item.ann.events, predicted, dur, grid);
        rep.event_per_class = event_eval(item.ann.events, predicted, ep);
        write_text_file((run_dir_ / "predictions" / (item.subject + "-matches.csv")).string(),
                        event_match_csv(item.ann.events, predicted, ep));

        // macro over classes present in this subject's references
        std::vector<double> ff, ef;
        for (Label cls : call_types()) {
            bool present = false;
            for (const auto& e : item.ann.events) present |= e.label == cls;
            if (!present) continue;
            ff.push_back(rep.frame_per_class.at(cls).f);
            ef.push_back(rep.event_per_class.at(cls).f);
        }
        rep.frame_macro = macro_f(ff);
        rep.event_macro = macro_f(ef);
        return rep;
    }

    void finalize(EvalReport& report) {
        for (Label cls : call_types()) {
            Prf frame_total, event_total;
            bool present = false;
            for (const auto& item : ds_.items)
                for (const auto& e : item.ann.events) present |= e.label == cls;
            for (const auto& s : report.subjects) {
                frame_total += s.frame_per_class.at(cls);
                event_total += s.event_per_class.at(cls);
            }
            report.frame_pooled[cls] = frame_total;
            report.event_pooled[cls] = event_total;
            if (present) report.classes_present.push_back(cls);
        }
        std::vector<double> ff, ef;
        for (Label cls : report.classes_present) {
            ff.push_back(report.frame_pooled.at(cls).f);
            ef.push_back(report.event_pooled.at(cls).f);
        }
        report.frame_macro = macro_f(ff);
        report.event_macro = macro_f(ef);
        for (const auto& s : report.subjects) {
            report.onset_pooled += s.onset;
            report.seg_pooled.frame += s.segmentation.frame;
            report.seg_pooled.event += s.segmentation.event;
        }
    }

    Dataset ds_;
    PipelineConfig cfg_;
    RunOptions opts_;
    FeatureEngine engine_;
    fs::path run_dir_;
    std::map<std::string, detail::SubjectFeatures> subjects_;
};

inline EvalReport run_protocol(const Dataset& dataset, const PipelineConfig& cfg,
                               const RunOptions& opts) {
    ProtocolRunner runner(dataset, cfg, opts);
    return runner.run();
}

// ---------------------------------------------------------------------------
// Synthetic recordings from config (the synth subcommand and the benchmarks).

inline std::vector<SynthCallSpec> random_call_specs(const PipelineConfig& cfg, Rng& rng,
                                                    int num_calls, double duration) {
    std::vector<SynthCallSpec> specs;
    const double min_gap = cfg.real("synth.min_gap");
    double t = 0.2;
    for (int i = 0; i < num_calls; ++i) {
        const bool up = rng.uniform() < cfg.real("synth.up_fraction");
        const std::string side = up ? "synth.up." : "synth.down.";
        SynthCallSpec s;
        s.direction = up ? ChirpDirection::Up : ChirpDirection::Down;
        s.f_start = rng.uniform(cfg.real(side + "f_lo"), cfg.real(side + "f_hi"));
        const double sweep = std::exp2(cfg.real(side + "sweep_octaves"));
        s.f_end = up ? s.f_start * sweep : s.f_start / sweep;
        s.duration = rng.uniform(cfg.real(side + "dur_lo"), cfg.real(side + "dur_hi"));
        s.amplitude = rng.uniform(cfg.real(side + "amp_lo"), cfg.real(side + "amp_hi"));
        s.onset = t;
        if (s.onset + s.duration + 0.1 > duration) break;
        specs.push_back(s);
        t += s.duration + min_gap +
             rng.uniform(0.0, std::max(0.05, (duration - t) / std::max(1, num_calls - i) * 0.5));
    }
    return specs;
}

inline std::pair<AudioClip, AnnotationSet> synth_from_config(const PipelineConfig& cfg,
                                                             std::uint64_t seed,
                                                             const std::string& subject) {
    Rng rng(seed);
    const auto rate = static_cast<int>(cfg.integer("audio.target_rate"));
    const double duration = cfg.real("synth.duration");
    const auto specs =
        random_call_specs(cfg, rng, static_cast<int>(cfg.integer("synth.num_calls")), duration);
    return synth_recording(specs, duration, cfg.real("synth.noise_db"), rate, rng.next_u64(),
                           subject);
}

}  // namespace peep
