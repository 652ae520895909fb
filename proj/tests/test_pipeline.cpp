#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "peep/pipeline.hpp"
#include "test_util.hpp"

using namespace peep;
namespace fs = std::filesystem;

namespace {

// Scaled-down configuration so the full protocol runs in seconds: 16 kHz,
// 40-band scalogram, T = 64 ms.
PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.apply_text(R"(
audio.target_rate = 16000
scattering.q1 = 8
scattering.j1 = 5
scattering.q2 = 1
scattering.j2 = 6
scattering.qf = 1
scattering.jf = 3
scattering.time_avg = 1024
scattering.mod_hi = 60
synth.duration = 12
synth.num_calls = 8
synth.noise_db = -65
synth.up.f_lo = 900
synth.up.f_hi = 1200
synth.up.dur_lo = 0.15
synth.up.dur_hi = 0.3
synth.up.sweep_octaves = 1.0
synth.up.amp_lo = 0.2
synth.up.amp_hi = 0.5
synth.down.f_lo = 2400
synth.down.f_hi = 3200
synth.down.dur_lo = 0.25
synth.down.dur_hi = 0.45
synth.down.sweep_octaves = 1.0
synth.down.amp_lo = 0.3
synth.down.amp_hi = 0.8
detection.fmax = 7500
detection.delta = 0.5
classifier.c_grid = 10
classifier.gamma_grid = 1e-3,1e-2
)");
    cfg.validate();
    return cfg;
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "peep_pipeline_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Dataset synth_dataset(const PipelineConfig& cfg, int n_subjects, const fs::path& dir) {
    Dataset ds;
    std::string manifest = "path,subject_id\n";
    for (int s = 0; s < n_subjects; ++s) {
        const std::string subject = "bird" + std::to_string(s + 1);
        auto [clip, ann] = synth_from_config(
            cfg, static_cast<std::uint64_t>(cfg.integer("seed")) + static_cast<std::uint64_t>(s),
            subject);
        const auto stem = (dir / (subject + "__take1")).string();
        save_wav(stem + ".wav", clip, WavEncoding::Float32);
        save_annotations(stem + ".csv", ann);
        manifest += subject + "__take1.wav," + subject + "\n";
    }
    write_text_file((dir / "manifest.csv").string(), manifest);
    return load_dataset((dir / "manifest.csv").string(),
                        static_cast<int>(cfg.integer("audio.target_rate")));
}

}  // namespace

TEST_CASE("segment features carry context and at least one frame", "[pipeline]") {
    const auto cfg = small_config();
    FeatureEngine engine(cfg);
    auto [clip, ann] = synth_from_config(cfg, 5, "ctx");
    REQUIRE(!ann.events.empty());

    const auto& e = ann.events.front();
    const auto fm = engine.jtfs_segment(clip, e.onset, e.offset);
    REQUIRE(fm.frames() >= 1);
    REQUIRE(fm.dim() > 0);
    for (std::size_t k = 0; k < fm.frames(); ++k) {
        REQUIRE(fm.frame_times[k] >= -1e-9);
        REQUIRE(fm.frame_times[k] < e.duration() + 1e-9);
    }

    // a very short span still yields one frame
    const auto tiny = engine.jtfs_segment(clip, e.onset, e.onset + 0.01);
    REQUIRE(tiny.frames() == 1);

    // full-recording features share the frame geometry
    const auto full = engine.jtfs_full(clip);
    REQUIRE(full.dim() == fm.dim());
    REQUIRE(full.frame_hop == fm.frame_hop);
    REQUIRE(full.frames() == static_cast<std::size_t>(
                                 std::ceil(clip.samples.size() /
                                           static_cast<double>(engine.output_hop()))));
}

TEST_CASE("detection finds most synthetic calls at small scale", "[pipeline]") {
    const auto cfg = small_config();
    auto [clip, ann] = synth_from_config(cfg, 9, "det");
    const auto det = run_detection(clip, cfg);
    std::vector<double> ref;
    for (const auto& e : ann.events) ref.push_back(e.onset);
    const auto prf = match_onsets(ref, det.onsets, 0.15);
    REQUIRE(prf.f >= 0.8);
}

TEST_CASE("the protocol runs end to end on seg-scat and an mfcc baseline", "[pipeline]") {
    const auto cfg = small_config();
    const auto data_dir = fresh_dir("data");
    const auto ds = synth_dataset(cfg, 2, data_dir);
    REQUIRE(ds.items.size() == 2);

    RunOptions opts;
    opts.scheme = Scheme::SegScat;
    opts.run_root = (fresh_dir("runs_a")).string();
    const auto report = run_protocol(ds, cfg, opts);

    REQUIRE(report.subjects.size() == 2);
    REQUIRE(report.scheme == "seg-scat");
    REQUIRE(report.config_hash == cfg.hash());
    REQUIRE(report.classes_present ==
            std::vector<Label>{Label::Pleasure, Label::Contact});
    REQUIRE(report.onset_pooled.f > 0.5);
    REQUIRE(report.event_macro > 0.5);

    SECTION("report files and artifacts exist") {
        const auto run_dir =
            fs::path(opts.run_root) / (cfg.hash() + "-seg-scat");
        REQUIRE(fs::exists(run_dir / "report.json"));
        REQUIRE(fs::exists(run_dir / "report.txt"));
        for (const auto& item : ds.items) {
            REQUIRE(fs::exists(run_dir / "models" / (item.subject + ".peepmdl")));
            REQUIRE(fs::exists(run_dir / "predictions" / (item.subject + ".csv")));
        }
        const auto j = json::parse(read_text_file((run_dir / "report.json").string()));
        REQUIRE(j["scheme"] == "seg-scat");
        REQUIRE(j["overall"].contains("event_macro_f"));
        REQUIRE(j["subjects"].size() == 2);
    }

    SECTION("identical reruns produce byte-identical reports (cache and fresh)") {
        const auto report2 = run_protocol(ds, cfg, opts);  // cached features
        RunOptions fresh = opts;
        fresh.run_root = fresh_dir("runs_b").string();
        fresh.cache_features = false;
        const auto report3 = run_protocol(ds, cfg, fresh);

        const auto j1 = report.to_json().dump(2);
        REQUIRE(report2.to_json().dump(2) == j1);
        REQUIRE(report3.to_json().dump(2) == j1);
        REQUIRE(read_text_file(
                    (fs::path(opts.run_root) / (cfg.hash() + "-seg-scat") / "report.json").string()) ==
                read_text_file(
                    (fs::path(fresh.run_root) / (cfg.hash() + "-seg-scat") / "report.json").string()));
    }

    SECTION("annotated segments score at least as well as detected ones") {
        RunOptions ann_opts = opts;
        ann_opts.annotated_segments = true;
        ann_opts.run_root = fresh_dir("runs_c").string();
        const auto ann_report = run_protocol(ds, cfg, ann_opts);
        REQUIRE(ann_report.event_macro >= report.event_macro - 0.05);
        REQUIRE(ann_report.annotated_segments);
    }

    SECTION("the mfcc segment baseline also runs") {
        RunOptions mf = opts;
        mf.scheme = Scheme::SegMfcc;
        mf.run_root = fresh_dir("runs_d").string();
        const auto mr = run_protocol(ds, cfg, mf);
        REQUIRE(mr.scheme == "seg-mfcc");
        REQUIRE(mr.subjects.size() == 2);
    }
}

TEST_CASE("full-recording schemes label frames and fuse events", "[pipeline]") {
    auto cfg = small_config();
    cfg.set("synth.duration", "8");
    cfg.set("synth.num_calls", "5");
    cfg.validate();
    const auto data_dir = fresh_dir("data_full");
    const auto ds = synth_dataset(cfg, 2, data_dir);

    RunOptions opts;
    opts.scheme = Scheme::MfccOnly;
    opts.run_root = fresh_dir("runs_full").string();
    const auto report = run_protocol(ds, cfg, opts);
    REQUIRE(report.subjects.size() == 2);
    // full-recording frame labeling is a harder task; just require structure
    for (const auto& s : report.subjects) {
        REQUIRE(s.frame_per_class.size() == 3);
        REQUIRE(s.event_per_class.size() == 3);
    }
}

TEST_CASE("single-subject manifests are rejected by the protocol", "[pipeline]") {
    const auto cfg = small_config();
    const auto data_dir = fresh_dir("data_single");
    const auto ds = synth_dataset(cfg, 1, data_dir);
    RunOptions opts;
    opts.run_root = fresh_dir("runs_single").string();
    REQUIRE_THROWS_AS(run_protocol(ds, cfg, opts), ValidationError);
}
