#include <catch2/catch_amalgamated.hpp>

#include "peep/scattering.hpp"
#include "peep/synth.hpp"
#include "test_util.hpp"

using namespace peep;

namespace {

// Small-scale setup used across these tests: 16 kHz audio, 8 filters/octave
// over 5 octaves, T = 1024 samples (64 ms).
struct SmallSetup {
    int sr = 16000;
    Filterbank fb1;
    SeparableLowpass lp;
    int alpha = 2;

    SmallSetup() : fb1(build_temporal_filterbank(8, 5, std::size_t{1} << 15)) {
        lp = build_lowpass_2d(LowpassSpec{1024, 16});
    }

    AudioClip clip_of(std::vector<double> samples) const {
        AudioClip c;
        c.sample_rate = sr;
        c.samples = std::move(samples);
        return c;
    }

    Scalogram scal_of(const AudioClip& clip) const {
        return scalogram(clip, fb1, lp.spec.t, 0, lp.spec.t >> alpha);
    }

    Filterbank mod_bank(const Scalogram& s) const {
        return build_temporal_filterbank(1, 6, s.values.cols);
    }

    Filterbank spec_bank(std::size_t n_rows, std::size_t margin = 20) const {
        return build_spectral_filterbank(1, 3, spectral_fft_size(1, 3, n_rows, margin));
    }
};

}  // namespace

TEST_CASE("zero signal gives an all-zero scalogram, s1 and jtfs", "[scattering]") {
    SmallSetup s;
    const auto clip = s.clip_of(std::vector<double>(16000, 0.0));
    const auto scal = s.scal_of(clip);
    for (double v : scal.values.v) REQUIRE(v == 0.0);

    const auto s1m = s1(scal, s.lp, s.alpha);
    for (double v : s1m.values.v) REQUIRE(v == 0.0);

    const auto tensor = jtfs(scal, s.mod_bank(scal), s.spec_bank(scal.values.rows), s.lp, s.alpha);
    for (double v : tensor.values) REQUIRE(v == 0.0);
}

TEST_CASE("a pure tone lands in the band with the nearest center", "[scattering]") {
    SmallSetup s;
    std::vector<double> x(16000);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = 0.5 * std::sin(kTwoPi * 3000.0 * static_cast<double>(i) / s.sr);
    const auto scal = s.scal_of(s.clip_of(std::move(x)));

    // row with max energy over the valid region
    std::size_t best_row = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < scal.values.rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = scal.pad_frames; c < scal.pad_frames + scal.valid_frames; ++c)
            acc += scal.values.at(r, c);
        if (acc > best) {
            best = acc;
            best_row = r;
        }
    }
    std::size_t nearest = 0;
    double gap = 1e18;
    for (std::size_t r = 0; r < scal.lambdas_hz.size(); ++r) {
        const double d = std::abs(scal.lambdas_hz[r] - 3000.0);
        if (d < gap) {
            gap = d;
            nearest = r;
        }
    }
    REQUIRE(best_row == nearest);
    REQUIRE(std::is_sorted(scal.lambdas_hz.rbegin(), scal.lambdas_hz.rend()));
}

TEST_CASE("doubling the input exactly doubles every coefficient", "[scattering]") {
    SmallSetup s;
    Rng rng(5);
    std::vector<double> x(12000);
    for (auto& v : x) v = 0.3 * (2.0 * rng.uniform() - 1.0);
    std::vector<double> x2(x);
    for (auto& v : x2) v *= 2.0;

    const auto sc1 = s.scal_of(s.clip_of(std::move(x)));
    const auto sc2 = s.scal_of(s.clip_of(std::move(x2)));
    for (std::size_t i = 0; i < sc1.values.v.size(); ++i)
        REQUIRE(sc2.values.v[i] == 2.0 * sc1.values.v[i]);

    const auto mod = s.mod_bank(sc1);
    const auto spec = s.spec_bank(sc1.values.rows);
    const auto t1 = jtfs(sc1, mod, spec, s.lp, s.alpha);
    const auto t2 = jtfs(sc2, mod, spec, s.lp, s.alpha);
    for (std::size_t i = 0; i < t1.values.size(); ++i)
        REQUIRE(t2.values[i] == 2.0 * t1.values[i]);
}

TEST_CASE("clips shorter than twice the averaging scale are rejected", "[scattering]") {
    SmallSetup s;
    const auto clip = s.clip_of(std::vector<double>(1500, 0.1));
    REQUIRE_THROWS_AS(s.scal_of(clip), ValidationError);
}

TEST_CASE("s1 of a steady tone is flat over interior frames", "[scattering]") {
    SmallSetup s;
    std::vector<double> x(16000);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = 0.4 * std::sin(kTwoPi * 2200.0 * static_cast<double>(i) / s.sr);
    const auto scal = s.scal_of(s.clip_of(std::move(x)));
    const auto m = s1(scal, s.lp, s.alpha);

    // strongest row, frames away from the boundary transients
    std::size_t best_row = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < m.values.rows; ++r)
        if (m.values.at(r, m.values.cols / 2) > best) {
            best = m.values.at(r, m.values.cols / 2);
            best_row = r;
        }
    std::vector<double> interior;
    for (std::size_t c = 8; c + 8 < m.values.cols; ++c)
        interior.push_back(m.values.at(best_row, c));
    REQUIRE(interior.size() >= 16);
    const double cov = testutil::population_std(interior) / testutil::mean(interior);
    REQUIRE(cov < 0.02);
}

TEST_CASE("frame hop follows T / 2^alpha", "[scattering]") {
    // 44.1 kHz, T = 2^14, alpha = 2 -> 92.88 ms
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.assign(44100, 0.0);
    clip.samples[22050] = 1.0;
    const auto fb = build_temporal_filterbank(2, 4, std::size_t{1} << 17);
    const auto lp = build_lowpass_2d(LowpassSpec{1 << 14, 32});
    const auto scal = scalogram(clip, fb, lp.spec.t, 0, (1 << 14) >> 2);
    const auto m = s1(scal, lp, 2);
    REQUIRE(std::abs(m.frame_hop * 1000.0 - 92.9) <= 0.1);
    REQUIRE(m.values.cols == (44100 + 4095) / 4096);
}

TEST_CASE("spectral folding equals exact decimation", "[scattering]") {
    // band_ifft_subsampled(spec, filt, k) must equal the full-rate product
    // sampled every k: the fold identity, checked on random data
    Rng rng(17);
    const std::size_t n = 512;
    std::vector<double> x(n);
    for (auto& v : x) v = 2.0 * rng.uniform() - 1.0;
    auto spectrum = fft_real(x, n);

    const auto fb = build_temporal_filterbank(2, 3, n);
    for (const auto& filt : fb.filters) {
        std::vector<cplx> full, sub;
        detail::band_ifft_subsampled(spectrum, filt, 1, full);
        for (std::size_t k : {std::size_t{2}, std::size_t{4}, std::size_t{8}}) {
            detail::band_ifft_subsampled(spectrum, filt, k, sub);
            REQUIRE(sub.size() == n / k);
            for (std::size_t i = 0; i < sub.size(); ++i)
                REQUIRE(std::abs(sub[i] - full[i * k]) < 1e-12);
        }
    }
}

TEST_CASE("separable path equals direct 2-D convolution", "[scattering]") {
    const std::size_t n_rows = 8, n_cols = 64;
    Rng rng(23);
    Mat input(n_rows, n_cols);
    for (auto& v : input.v) v = rng.uniform();

    const auto t_bank = build_temporal_filterbank(1, 2, n_cols);
    const auto f_bank = build_spectral_filterbank(1, 1, n_rows);

    auto ifft_naive = [](const std::vector<double>& resp) {
        const std::size_t n = resp.size();
        std::vector<std::complex<double>> out(n);
        for (std::size_t t = 0; t < n; ++t) {
            std::complex<double> acc{0.0, 0.0};
            for (std::size_t k = 0; k < n; ++k) {
                const double a = kTwoPi * static_cast<double>(k) * static_cast<double>(t) /
                                 static_cast<double>(n);
                acc += resp[k] * std::complex<double>(std::cos(a), std::sin(a));
            }
            out[t] = acc / static_cast<double>(n);
        }
        return out;
    };

    for (const auto& tf : t_bank.filters) {
        for (const auto& ff : f_bank.filters) {
            const auto psi_t = tf.dense();
            const auto psi_f = ff.dense();
            const Mat got = jtfs_single_path_magnitude(input, psi_t, psi_f, 1);

            // oracle: spatial-domain circular convolution with the outer-product kernel
            const auto kt = ifft_naive(psi_t);
            const auto kf = ifft_naive(psi_f);
            double max_abs = 0.0, scale = 0.0;
            for (std::size_t r = 0; r < n_rows; ++r)
                for (std::size_t c = 0; c < n_cols; ++c) {
                    std::complex<double> acc{0.0, 0.0};
                    for (std::size_t rr = 0; rr < n_rows; ++rr)
                        for (std::size_t cc = 0; cc < n_cols; ++cc)
                            acc += input.at(rr, cc) * kt[(c - cc + n_cols) % n_cols] *
                                   kf[(r - rr + n_rows) % n_rows];
                    scale = std::max(scale, std::abs(acc));
                    max_abs = std::max(max_abs, std::abs(std::abs(acc) - got.at(r, c)));
                }
            REQUIRE(max_abs <= 1e-6 * scale);
        }
    }
}

TEST_CASE("chirp direction decides the oriented energy split", "[scattering]") {
    SmallSetup s;
    auto make = [&](ChirpDirection dir) {
        SynthCallSpec spec;
        spec.direction = dir;
        spec.f_start = dir == ChirpDirection::Up ? 800.0 : 3200.0;
        spec.f_end = dir == ChirpDirection::Up ? 3200.0 : 800.0;
        spec.duration = 0.15;
        spec.amplitude = 0.5;
        spec.onset = 0.4;
        auto [clip, ann] = synth_recording({spec}, 1.0, -80.0, s.sr, 3);
        (void)ann;
        return clip;
    };

    for (auto dir : {ChirpDirection::Up, ChirpDirection::Down}) {
        const auto scal = s.scal_of(make(dir));
        const auto tensor = jtfs(scal, s.mod_bank(scal), s.spec_bank(scal.values.rows), s.lp, s.alpha);
        const auto selected = select_modulation_band(tensor, 0.0, 60.0);
        const auto [up, down] = direction_energy(selected);
        if (dir == ChirpDirection::Up)
            REQUIRE(up >= 2.0 * down);
        else
            REQUIRE(down >= 2.0 * up);
    }
}

TEST_CASE("modulation band selection keeps only requested rates", "[scattering]") {
    SmallSetup s;
    Rng rng(31);
    std::vector<double> x(8000);
    for (auto& v : x) v = 0.2 * (2.0 * rng.uniform() - 1.0);
    const auto scal = s.scal_of(s.clip_of(std::move(x)));
    const auto tensor = jtfs(scal, s.mod_bank(scal), s.spec_bank(scal.values.rows), s.lp, s.alpha);

    SECTION("unbounded selection is the identity") {
        const auto all = select_modulation_band(tensor, 0.0, std::numeric_limits<double>::infinity());
        REQUIRE(all.paths.size() == tensor.paths.size());
        REQUIRE(all.values == tensor.values);
    }
    SECTION("an upper cutoff bounds every kept rate") {
        const auto some = select_modulation_band(tensor, 0.0, 50.0);
        REQUIRE(!some.paths.empty());
        REQUIRE(some.paths.size() < tensor.paths.size());
        for (const auto& p : some.paths) REQUIRE(p.mod_rate_hz <= 50.0);
    }
    SECTION("an impossible band is an error") {
        REQUIRE_THROWS_AS(select_modulation_band(tensor, 1e6, 1e7), ValidationError);
    }
}

TEST_CASE("shifting by one output hop shifts the frames", "[scattering]") {
    SmallSetup s;
    const int hop_out = s.lp.spec.t >> s.alpha;  // 256 samples
    SynthCallSpec spec;
    spec.f_start = 900.0;
    spec.f_end = 2100.0;
    spec.duration = 0.25;
    spec.amplitude = 0.6;
    spec.onset = 0.45;
    auto [x, ann0] = synth_recording({spec}, 1.2, -75.0, s.sr, 9);
    spec.onset = 0.45 + static_cast<double>(hop_out) / s.sr;
    auto [y, ann1] = synth_recording({spec}, 1.2, -75.0, s.sr, 9);
    (void)ann0;
    (void)ann1;

    const auto sx = s.scal_of(x);
    const auto sy = s.scal_of(y);
    const auto mod = s.mod_bank(sx);
    const auto spc = s.spec_bank(sx.values.rows);
    const auto tx = jtfs(sx, mod, spc, s.lp, s.alpha);
    const auto ty = jtfs(sy, mod, spc, s.lp, s.alpha);

    // interior frames of y at k+1 should match x at k
    const std::size_t skip = 10;
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < tx.paths.size(); ++p)
        for (std::size_t l = 0; l < tx.n_lambda_avg; ++l)
            for (std::size_t k = skip; k + skip + 1 < tx.n_frames; ++k) {
                const double a = tx.at(p, l, k);
                const double b = ty.at(p, l, k + 1);
                num += (a - b) * (a - b);
                den += a * a;
            }
    REQUIRE(den > 0.0);
    REQUIRE(std::sqrt(num / den) < 0.05);

    SECTION("a T/8 sub-hop shift barely moves the pooled coefficients") {
        spec.onset = 0.45 + static_cast<double>(s.lp.spec.t / 8) / s.sr;
        auto [z, ann2] = synth_recording({spec}, 1.2, -75.0, s.sr, 9);
        (void)ann2;
        const auto sz = s.scal_of(z);
        const auto tz = jtfs(sz, mod, spc, s.lp, s.alpha);

        auto pooled = [](const JtfsTensor& t) {
            std::vector<double> out(t.paths.size() * t.n_lambda_avg, 0.0);
            for (std::size_t p = 0; p < t.paths.size(); ++p)
                for (std::size_t l = 0; l < t.n_lambda_avg; ++l) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < t.n_frames; ++k) acc += t.at(p, l, k);
                    out[p * t.n_lambda_avg + l] = acc / static_cast<double>(t.n_frames);
                }
            return out;
        };
        REQUIRE(testutil::rel_l2_diff(pooled(tx), pooled(tz)) < 0.05);
    }
}

TEST_CASE("scattering is nonexpansive on random pairs", "[scattering][property]") {
    // exact-norm configuration: unit output hop, unit lambda stride
    const int sr = 16000;
    const auto fb = build_temporal_filterbank(8, 5, 8192);
    const auto lp = build_lowpass_2d(LowpassSpec{256, 2});
    const int alpha = 8;  // T / 2^alpha = 1 sample

    Rng rng(77);
    for (int trial = 0; trial < 6; ++trial) {
        std::vector<double> x(4096), y(4096);
        for (auto& v : x) v = 2.0 * rng.uniform() - 1.0;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + 0.3 * (2.0 * rng.uniform() - 1.0);

        AudioClip cx, cy;
        cx.sample_rate = cy.sample_rate = sr;
        cx.samples = x;
        cy.samples = y;

        const auto sx = scalogram(cx, fb, 256, 1);
        const auto sy = scalogram(cy, fb, 256, 1);
        const auto mod = build_temporal_filterbank(1, 7, sx.values.cols);
        const auto spc = build_spectral_filterbank(1, 2, spectral_fft_size(1, 2, sx.values.rows, 4));
        const auto s1x = s1(sx, lp, alpha);
        const auto s1y = s1(sy, lp, alpha);
        const auto tx = jtfs(sx, mod, spc, lp, alpha);
        const auto ty = jtfs(sy, mod, spc, lp, alpha);

        double lhs2 = 0.0;
        for (std::size_t i = 0; i < s1x.values.v.size(); ++i) {
            const double d = s1x.values.v[i] - s1y.values.v[i];
            lhs2 += d * d;
        }
        for (std::size_t i = 0; i < tx.values.size(); ++i) {
            const double d = tx.values[i] - ty.values[i];
            lhs2 += d * d;
        }
        double rhs2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) rhs2 += (x[i] - y[i]) * (x[i] - y[i]);
        REQUIRE(std::sqrt(lhs2) <= 1.05 * std::sqrt(rhs2));
    }
}
