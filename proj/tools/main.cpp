// peep: detect and classify animal calls in audio recordings.
//
// Subcommands cover the whole pipeline: synthesizing labeled test data,
// onset detection + segmentation, feature extraction, training, prediction,
// the full leave-one-subject-out evaluation protocol, and standalone scoring
// of event CSVs. Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "peep/pipeline.hpp"

using namespace peep;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<long> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "config file (key = value lines)");
    cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set seed=7")
        ->type_name("KEY=VALUE")
        ->type_size(1)
        ->allow_extra_args(false);
    cmd->add_option("--seed", opts.seed, "shorthand for --set seed=N");
    cmd->footer(PipelineConfig::help_text());
}

PipelineConfig make_config(const CommonOpts& opts) {
    PipelineConfig cfg;
    if (!opts.config_path.empty()) cfg = PipelineConfig::from_file(opts.config_path);
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--set expects KEY=VALUE, got '" + kv + "'");
        cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
    cfg.validate();
    return cfg;
}

std::vector<LabeledFrames> training_frames_for(const Dataset& ds, FeatureEngine& engine,
                                               Scheme scheme, const std::string& skip_subject) {
    std::vector<LabeledFrames> out;
    for (const auto& item : ds.items) {
        if (item.subject == skip_subject) continue;
        LabeledFrames lf;
        lf.subject = item.subject;
        if (scheme_uses_segments(scheme)) {
            std::vector<FeatureMatrix> fms;
            for (const auto& e : item.ann.events)
                fms.push_back(engine.segment(scheme, item.clip, e.onset, e.offset));
            std::size_t total = 0, dim = 0;
            for (const auto& fm : fms) {
                total += fm.frames();
                dim = fm.dim();
            }
            lf.x = Mat(total, dim);
            std::size_t r = 0;
            for (std::size_t s = 0; s < fms.size(); ++s)
                for (std::size_t f = 0; f < fms[s].frames(); ++f, ++r) {
                    std::copy(fms[s].vectors.row(f), fms[s].vectors.row(f) + dim, lf.x.row(r));
                    lf.y.push_back(item.ann.events[s].label);
                    lf.keys.emplace_back(static_cast<int>(s), static_cast<int>(f));
                }
        } else {
            const auto fm = engine.full(scheme, item.clip);
            lf.x = fm.vectors;
            for (std::size_t f = 0; f < fm.frames(); ++f) {
                Label lab = Label::Background;
                for (const auto& e : item.ann.events)
                    if (fm.frame_times[f] >= e.onset && fm.frame_times[f] < e.offset)
                        lab = e.label;
                lf.y.push_back(lab);
                lf.keys.emplace_back(0, static_cast<int>(f));
            }
        }
        out.push_back(std::move(lf));
    }
    return out;
}

int cmd_synth(const CommonOpts& common, const std::string& out_dir, const std::string& name,
              int n_subjects) {
    const auto cfg = make_config(common);
    fs::create_directories(out_dir);
    const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));

    std::string manifest = "path,subject_id\n";
    for (int s = 0; s < n_subjects; ++s) {
        const std::string subject = n_subjects == 1 ? name : name + std::to_string(s + 1);
        const std::string stem = subject + "__take1";
        auto [clip, ann] = synth_from_config(cfg, seed + static_cast<std::uint64_t>(s), subject);
        save_wav((fs::path(out_dir) / (stem + ".wav")).string(), clip);
        save_annotations((fs::path(out_dir) / (stem + ".csv")).string(), ann);
        manifest += stem + ".wav," + subject + "\n";
        std::cout << "wrote " << stem << ".wav (" << ann.events.size() << " calls)\n";
    }
    write_text_file((fs::path(out_dir) / "manifest.csv").string(), manifest);
    return 0;
}

int cmd_detect(const CommonOpts& common, const std::string& audio, const std::string& out_dir,
               bool emit_envelope) {
    const auto cfg = make_config(common);
    const auto clip = load_audio(audio, static_cast<int>(cfg.integer("audio.target_rate")));
    const auto det = run_detection(clip, cfg);
    fs::create_directories(out_dir);
    const std::string stem = path_stem(audio);
    write_text_file((fs::path(out_dir) / (stem + "-onsets.csv")).string(),
                    onsets_to_csv(det.onsets));
    write_text_file((fs::path(out_dir) / (stem + "-segments.csv")).string(),
                    segments_to_csv(det.segments));
    if (emit_envelope)
        write_text_file((fs::path(out_dir) / (stem + "-envelope.csv")).string(),
                        envelope_to_csv(det.envelope));
    std::cout << det.onsets.size() << " onsets, " << det.segments.size() << " segments\n";
    return 0;
}

int cmd_features(const CommonOpts& common, const std::string& audio, const std::string& kind,
                 const std::string& segments_csv, const std::string& out_base, bool dump_tensor,
                 const std::string& dump_filterbank) {
    const auto cfg = make_config(common);
    const auto clip = load_audio(audio, static_cast<int>(cfg.integer("audio.target_rate")));
    FeatureEngine engine(cfg);
    const Scheme scheme = kind == "mfcc" ? Scheme::MfccOnly : Scheme::ScatOnly;

    if (fs::path(out_base).has_parent_path())
        fs::create_directories(fs::path(out_base).parent_path());
    if (!dump_filterbank.empty() && fs::path(dump_filterbank).has_parent_path())
        fs::create_directories(fs::path(dump_filterbank).parent_path());

    if (!dump_filterbank.empty()) {
        const auto n_fft = next_pow2(clip.samples.size() +
                                     2 * static_cast<std::size_t>(cfg.integer("scattering.time_avg")));
        const auto fb = build_temporal_filterbank(static_cast<int>(cfg.integer("scattering.q1")),
                                                  static_cast<int>(cfg.integer("scattering.j1")),
                                                  n_fft);
        write_text_file(dump_filterbank, filterbank_to_csv(fb));
    }

    if (!segments_csv.empty()) {
        // one container per segment row
        const std::string text = read_text_file(segments_csv);
        std::istringstream in(text);
        std::string line;
        bool header = true;
        std::size_t idx = 0;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) continue;
            if (header) {
                if (lowercase(line) != "start,end")
                    throw ValidationError("segment CSV must start with header 'start,end'");
                header = false;
                continue;
            }
            const auto cells = split(line, ',');
            if (cells.size() != 2) throw ValidationError("segment CSV row needs 2 columns");
            const double a = std::stod(cells[0]), b = std::stod(cells[1]);
            const auto fm = engine.segment(scheme, clip, a, b);
            save_feature_matrix(out_base + "-" + std::to_string(idx), fm);
            ++idx;
        }
        std::cout << "wrote " << idx << " segment feature containers\n";
        return 0;
    }

    if (dump_tensor && scheme == Scheme::ScatOnly) {
        auto [tensor, s1m] = engine.raw_jtfs(clip);
        save_jtfs_tensor(out_base + "-tensor", tensor);
        write_text_file(out_base + "-path-energy.csv", path_energies_csv(tensor));
    }
    const auto fm = engine.full(scheme, clip);
    save_feature_matrix(out_base, fm);
    std::cout << fm.frames() << " frames x " << fm.dim() << " dims\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& manifest, const std::string& scheme_str,
              const std::string& out_model, const std::string& holdout) {
    const auto cfg = make_config(common);
    const Scheme scheme = scheme_from_name(scheme_str);
    const auto ds = load_dataset(manifest, static_cast<int>(cfg.integer("audio.target_rate")));
    FeatureEngine engine(cfg);

    const auto frames = training_frames_for(ds, engine, scheme, holdout);
    if (frames.empty()) throw ValidationError("train: no training subjects");
    auto data = assemble_all_with_folds(frames, static_cast<std::uint64_t>(cfg.integer("seed")),
                                        static_cast<int>(cfg.integer("classifier.folds")));

    FeatureMatrix view;
    view.vectors = data.x;
    view.frame_hop = 1.0;
    view.frame_times.assign(data.y.size(), 0.0);
    const auto stats = zscore_fit(view);
    data.x = zscore_apply(view, stats).vectors;

    SvmParams base;
    base.tol = cfg.real("classifier.tol");
    base.max_iter = cfg.integer("classifier.max_iter");
    base.cache_bytes = static_cast<std::size_t>(cfg.integer("classifier.cache_mb")) << 20;

    auto model = train_one_vs_rest(data, cfg.real_list("classifier.c_grid"),
                                   cfg.real_list("classifier.gamma_grid"), base,
                                   static_cast<int>(cfg.integer("classifier.folds")));
    model.stats = stats;
    model.thresholds = training_thresholds(ds.annotations_except(holdout));
    model.scheme = scheme_name(scheme);
    model.config_hash = cfg.hash();
    if (fs::path(out_model).has_parent_path())
        fs::create_directories(fs::path(out_model).parent_path());
    save_model(out_model, model);
    std::cout << "trained " << model.classes.size() << " class models -> " << out_model << "\n";
    for (const auto& c : model.classes)
        std::cout << "  " << label_name(c.label) << ": C=" << c.c << " gamma=" << c.gamma
                  << " cv_f=" << c.cv_f << (c.svm.converged ? "" : " (not converged)") << "\n";
    return 0;
}

int cmd_predict(const CommonOpts& common, const std::string& model_path, const std::string& audio,
                const std::string& out_csv) {
    const auto cfg = make_config(common);
    const auto model = load_model(model_path);
    const auto clip = load_audio(audio, static_cast<int>(cfg.integer("audio.target_rate")));
    FeatureEngine engine(cfg);
    const Scheme scheme = scheme_from_name(model.scheme);

    std::vector<CallEvent> events;
    if (scheme_uses_segments(scheme)) {
        const auto det = run_detection(clip, cfg);
        for (const auto& seg : det.segments) {
            const auto fm = engine.segment(scheme, clip, seg.start, seg.end);
            const auto pred = predict_frames(model, fm);
            std::map<Label, double> sums;
            for (std::size_t f = 0; f < pred.labels.size(); ++f)
                for (std::size_t c = 0; c < model.classes.size(); ++c)
                    sums[model.classes[c].label] += pred.decisions.at(f, c);
            const Label vote = majority_vote(pred.labels, sums);
            if (vote != Label::Background) events.push_back(CallEvent{seg.start, seg.end, vote});
        }
    } else {
        const auto fm = engine.full(scheme, clip);
        const auto pred = predict_frames(model, fm);
        LabeledFrameSeq seq;
        seq.labels = pred.labels;
        seq.frame_hop = fm.frame_hop;
        seq.start_time = fm.frame_times.front() - fm.frame_hop / 2.0;
        events = fuse_frames(seq);
        for (auto& e : events) e.onset = std::max(0.0, e.onset);
        events = postprocess(events, model.thresholds.min_gap, model.thresholds.min_dur);
    }
    if (fs::path(out_csv).has_parent_path())
        fs::create_directories(fs::path(out_csv).parent_path());
    write_text_file(out_csv, events_to_csv(events));
    std::cout << events.size() << " events -> " << out_csv << "\n";
    return 0;
}

int cmd_run(const CommonOpts& common, const std::string& manifest, const std::string& scheme_str,
            bool annotated, const std::string& run_root, bool emit_plots, bool no_cache) {
    const auto cfg = make_config(common);
    RunOptions opts;
    opts.scheme = scheme_from_name(scheme_str);
    opts.annotated_segments = annotated;
    opts.run_root = run_root;
    opts.emit_plots = emit_plots;
    opts.cache_features = !no_cache;
    const auto ds = load_dataset(manifest, static_cast<int>(cfg.integer("audio.target_rate")));
    ProtocolRunner runner(ds, cfg, opts);
    const auto report = runner.run();
    std::cout << report.to_text();
    std::cout << "\nreport: " << (runner.run_dir() / "report.json").string() << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& ref_csv, const std::string& pred_csv,
             double duration) {
    const auto cfg = make_config(common);
    const auto ref = load_annotations(ref_csv);
    const auto pred = load_annotations(pred_csv);
    EventEvalParams ep;
    ep.onset_tol = cfg.real("eval.event_onset_tol");
    ep.dur_ratio = cfg.real("eval.event_dur_ratio");
    ep.criterion = lowercase(cfg.raw("eval.event_dur_criterion")) == "overlap"
                       ? DurCriterion::Overlap
                       : DurCriterion::Ratio;
    double total = duration;
    for (const auto& e : ref.events) total = std::max(total, e.offset);
    for (const auto& e : pred.events) total = std::max(total, e.offset);

    const auto frame = frame_eval(ref.events, pred.events, total, cfg.real("eval.frame_grid"));
    const auto event = event_eval(ref.events, pred.events, ep);
    std::vector<double> ref_on, pred_on;
    for (const auto& e : ref.events) ref_on.push_back(e.onset);
    for (const auto& e : pred.events) pred_on.push_back(e.onset);
    const auto onsets = match_onsets(ref_on, pred_on, cfg.real("eval.onset_window"));

    json j;
    auto prf_json = [](const Prf& p) {
        return json{{"precision", p.precision}, {"recall", p.recall}, {"f", p.f},
                    {"tp", p.tp},               {"fp", p.fp},         {"fn", p.fn}};
    };
    std::vector<double> ff, ef;
    for (Label cls : call_types()) {
        bool present = false;
        for (const auto& e : ref.events) present |= e.label == cls;
        j["frame"][label_name(cls)] = prf_json(frame.at(cls));
        j["event"][label_name(cls)] = prf_json(event.at(cls));
        if (present) {
            ff.push_back(frame.at(cls).f);
            ef.push_back(event.at(cls).f);
        }
    }
    j["frame_macro_f"] = macro_f(ff);
    j["event_macro_f"] = macro_f(ef);
    j["onset"] = prf_json(onsets);
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"peep: animal call detection and classification"};
    app.require_subcommand(1);

    CommonOpts common;

    // synth
    auto* synth = app.add_subcommand("synth", "write synthetic labeled recordings");
    std::string out_dir = ".", name = "synth";
    int n_subjects = 1;
    add_common(synth, common);
    synth->add_option("--out", out_dir, "output directory");
    synth->add_option("--name", name, "subject name / file stem prefix");
    synth->add_option("--subjects", n_subjects, "number of recordings to synthesize")
        ->check(CLI::PositiveNumber);

    // detect
    auto* detect = app.add_subcommand("detect", "onset detection and call segmentation");
    std::string audio_path;
    bool emit_envelope = false;
    add_common(detect, common);
    detect->add_option("audio", audio_path, "input WAV file")->required();
    detect->add_option("--out", out_dir, "output directory");
    detect->add_flag("--emit-envelope", emit_envelope, "also write the onset envelope CSV");

    // features
    auto* features = app.add_subcommand("features", "extract feature containers");
    std::string kind = "jtfs", segments_csv, out_base = "features", dump_fb;
    bool dump_tensor = false;
    add_common(features, common);
    features->add_option("audio", audio_path, "input WAV file")->required();
    features->add_option("--kind", kind, "feature kind: jtfs or mfcc")
        ->check(CLI::IsMember({"jtfs", "mfcc"}));
    features->add_option("--segments", segments_csv, "segment CSV (start,end) to slice features");
    features->add_option("--out", out_base, "output container base path");
    features->add_flag("--dump-tensor", dump_tensor, "also dump the raw scattering tensor + path energies");
    features->add_option("--dump-filterbank", dump_fb, "write the first-order filterbank CSV here");

    // train
    auto* train = app.add_subcommand("train", "train a model on a dataset manifest");
    std::string manifest, scheme_str = "seg-scat", model_out = "model.peepmdl", holdout;
    add_common(train, common);
    train->add_option("--manifest", manifest, "dataset manifest CSV (path,subject_id)")->required();
    train->add_option("--scheme", scheme_str, "scat-only | seg-scat | mfcc-only | seg-mfcc");
    train->add_option("--out", model_out, "output model path");
    train->add_option("--holdout", holdout, "subject to exclude from training");

    // predict
    auto* predict = app.add_subcommand("predict", "predict events for a recording");
    std::string model_path, events_out = "events.csv";
    add_common(predict, common);
    predict->add_option("--model", model_path, "trained model file")->required();
    predict->add_option("audio", audio_path, "input WAV file")->required();
    predict->add_option("--out", events_out, "output events CSV");

    // run
    auto* run = app.add_subcommand("run", "full leave-one-subject-out evaluation");
    bool annotated = false, emit_plots = false, no_cache = false;
    std::string run_root = "runs";
    add_common(run, common);
    run->add_option("--manifest", manifest, "dataset manifest CSV (path,subject_id)")->required();
    run->add_option("--scheme", scheme_str, "scat-only | seg-scat | mfcc-only | seg-mfcc")
        ->required();
    run->add_flag("--annotated-segments", annotated,
                  "classify annotated instead of detected segments");
    run->add_option("--run-root", run_root, "directory for run artifacts");
    run->add_flag("--emit-plots", emit_plots, "write envelope/path-energy CSV series");
    run->add_flag("--no-cache", no_cache, "recompute features even if cached");

    // eval
    auto* eval = app.add_subcommand("eval", "score a prediction CSV against a reference CSV");
    std::string ref_csv, pred_csv;
    double duration = 0.0;
    add_common(eval, common);
    eval->add_option("--ref", ref_csv, "reference events CSV")->required();
    eval->add_option("--pred", pred_csv, "predicted events CSV")->required();
    eval->add_option("--duration", duration, "recording duration, s (default: last offset)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // bad arguments are validation errors
    }

    try {
        if (synth->parsed()) return cmd_synth(common, out_dir, name, n_subjects);
        if (detect->parsed()) return cmd_detect(common, audio_path, out_dir, emit_envelope);
        if (features->parsed())
            return cmd_features(common, audio_path, kind, segments_csv, out_base, dump_tensor,
                                dump_fb);
        if (train->parsed()) return cmd_train(common, manifest, scheme_str, model_out, holdout);
        if (predict->parsed()) return cmd_predict(common, model_path, audio_path, events_out);
        if (run->parsed())
            return cmd_run(common, manifest, scheme_str, annotated, run_root, emit_plots, no_cache);
        if (eval->parsed()) return cmd_eval(common, ref_csv, pred_csv, duration);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
