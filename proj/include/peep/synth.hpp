#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "peep/annotations.hpp"
#include "peep/audio.hpp"
#include "peep/common.hpp"

namespace peep {

enum class ChirpDirection { Up, Down };

/// Parametric call: an exponential chirp (linear in log-frequency) with
/// Hann-shaped fade-in/out. Up-chirps stand in for pleasure calls and
/// down-chirps for contact calls in synthetic recordings.
struct SynthCallSpec {
    ChirpDirection direction = ChirpDirection::Up;
    double f_start = 2500.0;  // Hz
    double f_end = 3800.0;    // Hz
    double duration = 0.15;   // s
    double amplitude = 0.2;   // linear peak gain
    double onset = 0.0;       // s, placement inside a recording

    void validate(int sample_rate) const {
        if (duration <= 0.0) throw ValidationError("synth call: duration must be positive");
        if (amplitude < 0.0) throw ValidationError("synth call: amplitude must be >= 0");
        const double nyq = sample_rate / 2.0;
        if (f_start <= 0.0 || f_start >= nyq || f_end <= 0.0 || f_end >= nyq)
            throw ValidationError("synth call: frequencies must lie in (0, nyquist)");
        if (direction == ChirpDirection::Up && f_end <= f_start)
            throw ValidationError("synth call: up chirp requires f_end > f_start");
        if (direction == ChirpDirection::Down && f_end >= f_start)
            throw ValidationError("synth call: down chirp requires f_end < f_start");
        if (onset < 0.0) throw ValidationError("synth call: onset must be >= 0");
    }
};

/// Renders one call at the given sample rate. The instantaneous frequency
/// sweeps f_start -> f_end exponentially; peak amplitude equals
/// spec.amplitude in the un-faded middle of the call.
inline AudioClip synth_call(const SynthCallSpec& spec, int sample_rate) {
    spec.validate(sample_rate);
    const auto n = static_cast<std::size_t>(std::lround(spec.duration * sample_rate));
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.assign(std::max<std::size_t>(n, 1), 0.0);
    if (spec.amplitude == 0.0) return clip;

    const double ratio = spec.f_end / spec.f_start;
    const double log_ratio = std::log(ratio);
    const double fade = std::clamp(0.1 * spec.duration, 0.005, 0.05);

    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        double phase;
        if (std::abs(log_ratio) < 1e-12) {
            phase = kTwoPi * spec.f_start * t;
        } else {
            // integral of f(t) = f_start * ratio^(t/D)
            phase = kTwoPi * spec.f_start * spec.duration / log_ratio *
                    (std::exp(log_ratio * t / spec.duration) - 1.0);
        }
        double env = 1.0;
        if (t < fade)
            env = 0.5 * (1.0 - std::cos(kPi * t / fade));
        else if (t > spec.duration - fade)
            env = 0.5 * (1.0 - std::cos(kPi * (spec.duration - t) / fade));
        clip.samples[i] = spec.amplitude * env * std::sin(phase);
    }
    return clip;
}

/// Places non-overlapping calls over white noise. Up-chirps are annotated as
/// pleasure calls, down-chirps as contact calls.
inline std::pair<AudioClip, AnnotationSet> synth_recording(std::vector<SynthCallSpec> specs,
                                                           double total_duration,
                                                           double noise_db, int sample_rate,
                                                           std::uint64_t seed = 1,
                                                           const std::string& subject_id = "synth") {
    if (total_duration <= 0.0) throw ValidationError("synth recording: duration must be positive");
    std::sort(specs.begin(), specs.end(),
              [](const SynthCallSpec& a, const SynthCallSpec& b) { return a.onset < b.onset; });
    for (std::size_t i = 0; i < specs.size(); ++i) {
        specs[i].validate(sample_rate);
        if (specs[i].onset + specs[i].duration > total_duration + 1e-9)
            throw ValidationError("synth recording: call " + std::to_string(i) +
                                  " does not fit inside the recording");
        if (i > 0 && specs[i].onset < specs[i - 1].onset + specs[i - 1].duration)
            throw ValidationError("synth recording: calls " + std::to_string(i - 1) + " and " +
                                  std::to_string(i) + " overlap");
    }

    AudioClip clip;
    clip.sample_rate = sample_rate;
    const auto n = static_cast<std::size_t>(std::lround(total_duration * sample_rate));
    clip.samples.resize(n);
    Rng rng(seed);
    const double sigma = db_to_amp(noise_db);
    for (auto& s : clip.samples) s = sigma * rng.normal();

    AnnotationSet ann;
    ann.subject_id = subject_id;
    ann.duration = total_duration;
    for (const auto& spec : specs) {
        const AudioClip call = synth_call(spec, sample_rate);
        const auto start = static_cast<std::size_t>(std::lround(spec.onset * sample_rate));
        for (std::size_t i = 0; i < call.samples.size() && start + i < n; ++i)
            clip.samples[start + i] += call.samples[i];
        CallEvent e;
        e.onset = spec.onset;
        e.offset = std::min(spec.onset + spec.duration, total_duration);
        e.label = spec.direction == ChirpDirection::Up ? Label::Pleasure : Label::Contact;
        ann.events.push_back(e);
    }
    ann.validate();
    return {std::move(clip), std::move(ann)};
}

}  // namespace peep
