#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "peep/common.hpp"

namespace peep {

/// Mono audio buffer. Samples are dimensionless amplitudes, nominally in
/// [-1, 1]; full scale is 1.0 for dBFS conversions.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;

    double duration() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

enum class WavEncoding { Pcm16, Pcm24, Float32 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::string& s, std::uint32_t v) {
    s += static_cast<char>(v & 0xff);
    s += static_cast<char>((v >> 8) & 0xff);
    s += static_cast<char>((v >> 16) & 0xff);
    s += static_cast<char>((v >> 24) & 0xff);
}

inline void put_u16(std::string& s, std::uint16_t v) {
    s += static_cast<char>(v & 0xff);
    s += static_cast<char>((v >> 8) & 0xff);
}

}  // namespace detail

/// Raw WAV contents before downmix/resample.
struct WavData {
    std::vector<std::vector<double>> channels;
    int sample_rate = 0;
};

// Minimal RIFF/WAVE reader: PCM 16/24-bit and IEEE float 32/64-bit, any
// channel count. Unknown chunks are skipped.
inline WavData load_wav(const std::string& path) {
    std::string bytes = read_text_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    if (n < 44 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw IoError("not a RIFF/WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::size_t data_off = 0, data_len = 0;

    std::size_t off = 12;
    while (off + 8 <= n) {
        const char* id = bytes.data() + off;
        const std::uint32_t len = detail::read_u32(p + off + 4);
        const std::size_t body = off + 8;
        if (body + len > n) throw IoError("truncated WAV chunk in " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw IoError("malformed fmt chunk in " + path);
            format = detail::read_u16(p + body);
            channels = detail::read_u16(p + body + 2);
            rate = detail::read_u32(p + body + 4);
            bits = detail::read_u16(p + body + 14);
            if (format == 0xFFFE && len >= 40)  // WAVE_FORMAT_EXTENSIBLE: subformat GUID
                format = detail::read_u16(p + body + 24);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = body;
            data_len = len;
        }
        off = body + len + (len & 1);  // chunks are word-aligned
    }
    if (!have_fmt || data_off == 0) throw IoError("WAV missing fmt/data chunk: " + path);
    if (channels == 0 || rate == 0) throw IoError("WAV has invalid fmt fields: " + path);

    std::size_t bytes_per_sample;
    if (format == 1 && bits == 16) bytes_per_sample = 2;
    else if (format == 1 && bits == 24) bytes_per_sample = 3;
    else if (format == 3 && bits == 32) bytes_per_sample = 4;
    else if (format == 3 && bits == 64) bytes_per_sample = 8;
    else throw IoError("unsupported WAV encoding (format=" + std::to_string(format) +
                       ", bits=" + std::to_string(bits) + "): " + path);

    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = data_len / frame_bytes;
    if (frames == 0) throw ValidationError("WAV contains no audio samples: " + path);

    WavData out;
    out.sample_rate = static_cast<int>(rate);
    out.channels.assign(channels, std::vector<double>(frames));
    const unsigned char* d = p + data_off;
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t c = 0; c < channels; ++c) {
            const unsigned char* s = d + f * frame_bytes + c * bytes_per_sample;
            double val;
            if (bytes_per_sample == 2) {
                const auto i = static_cast<std::int16_t>(s[0] | (s[1] << 8));
                val = static_cast<double>(i) / 32768.0;
            } else if (bytes_per_sample == 3) {
                std::int32_t i = s[0] | (s[1] << 8) | (s[2] << 16);
                if (i & 0x800000) i |= ~0xFFFFFF;  // sign extend
                val = static_cast<double>(i) / 8388608.0;
            } else if (bytes_per_sample == 4) {
                float fv;
                std::memcpy(&fv, s, 4);
                val = static_cast<double>(fv);
            } else {
                double dv;
                std::memcpy(&dv, s, 8);
                val = dv;
            }
            out.channels[c][f] = val;
        }
    }
    return out;
}

inline void save_wav(const std::string& path, const AudioClip& clip,
                     WavEncoding enc = WavEncoding::Pcm16) {
    if (clip.sample_rate <= 0) throw ValidationError("save_wav: sample_rate must be positive");
    const std::size_t n = clip.samples.size();
    const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : enc == WavEncoding::Pcm24 ? 24 : 32;
    const std::uint16_t fmt = enc == WavEncoding::Float32 ? 3 : 1;
    const std::size_t bps = bits / 8;

    std::string out;
    out.reserve(44 + n * bps);
    out += "RIFF";
    detail::put_u32(out, static_cast<std::uint32_t>(36 + n * bps));
    out += "WAVE";
    out += "fmt ";
    detail::put_u32(out, 16);
    detail::put_u16(out, fmt);
    detail::put_u16(out, 1);  // mono
    detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
    detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate * bps));
    detail::put_u16(out, static_cast<std::uint16_t>(bps));
    detail::put_u16(out, bits);
    out += "data";
    detail::put_u32(out, static_cast<std::uint32_t>(n * bps));

    for (double x : clip.samples) {
        const double c = std::clamp(x, -1.0, 1.0);
        if (enc == WavEncoding::Pcm16) {
            const auto i = static_cast<std::int16_t>(
                std::clamp<long>(std::lrint(c * 32768.0), -32768, 32767));
            detail::put_u16(out, static_cast<std::uint16_t>(i));
        } else if (enc == WavEncoding::Pcm24) {
            const auto i = static_cast<std::int32_t>(
                std::clamp<long>(std::lrint(c * 8388608.0), -8388608, 8388607));
            out += static_cast<char>(i & 0xff);
            out += static_cast<char>((i >> 8) & 0xff);
            out += static_cast<char>((i >> 16) & 0xff);
        } else {
            const auto fv = static_cast<float>(c);
            std::uint32_t u;
            std::memcpy(&u, &fv, 4);
            detail::put_u32(out, u);
        }
    }
    write_text_file(path, out);
}

// Band-limited rational resampler (Kaiser-windowed sinc). Output length is
// ceil(n * to / from).
inline std::vector<double> resample(const std::vector<double>& x, int from_rate, int to_rate) {
    if (from_rate <= 0 || to_rate <= 0) throw ValidationError("resample: rates must be positive");
    if (from_rate == to_rate) return x;

    const std::uint64_t g = std::gcd<std::uint64_t>(static_cast<std::uint64_t>(from_rate),
                                                    static_cast<std::uint64_t>(to_rate));
    const double up = static_cast<double>(to_rate) / static_cast<double>(g);
    const double down = static_cast<double>(from_rate) / static_cast<double>(g);
    const double ratio = up / down;

    // cutoff slightly inside the narrower Nyquist band, in input-sample units
    const double cutoff = 0.475 * std::min(1.0, ratio);
    const double scale = std::max(1.0, 1.0 / ratio);  // kernel dilation when decimating
    const int half_taps = static_cast<int>(std::ceil(32.0 * scale));
    const double beta = 10.0;
    const double i0_beta = std::cyl_bessel_i(0.0, beta);

    const auto out_len = static_cast<std::size_t>(
        std::ceil(static_cast<double>(x.size()) * ratio - 1e-9));
    std::vector<double> y(out_len, 0.0);
    const auto n = static_cast<std::ptrdiff_t>(x.size());

    for (std::size_t j = 0; j < out_len; ++j) {
        const double t = static_cast<double>(j) / ratio;  // position in input samples
        const auto i0 = static_cast<std::ptrdiff_t>(std::ceil(t)) - half_taps;
        const auto i1 = static_cast<std::ptrdiff_t>(std::floor(t)) + half_taps;
        double acc = 0.0;
        for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, i0); i <= std::min(n - 1, i1); ++i) {
            const double d = (static_cast<double>(i) - t);
            const double u = d / (static_cast<double>(half_taps));
            if (u <= -1.0 || u >= 1.0) continue;
            const double sinc_arg = kTwoPi * cutoff * d / scale;
            const double sinc = sinc_arg == 0.0 ? 1.0 : std::sin(sinc_arg) / sinc_arg;
            const double win = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - u * u)) / i0_beta;
            acc += x[static_cast<std::size_t>(i)] * sinc * win;
        }
        y[j] = acc * 2.0 * cutoff / scale;
    }
    return y;
}

/// Loads a WAV file, downmixes to mono by channel mean, and resamples to
/// `target_rate`.
inline AudioClip load_audio(const std::string& path, int target_rate) {
    if (target_rate <= 0) throw ValidationError("load_audio: target_rate must be positive");
    WavData wav = load_wav(path);
    const std::size_t frames = wav.channels.front().size();

    AudioClip clip;
    clip.samples.resize(frames, 0.0);
    for (const auto& ch : wav.channels)
        for (std::size_t i = 0; i < frames; ++i) clip.samples[i] += ch[i];
    const double inv = 1.0 / static_cast<double>(wav.channels.size());
    for (auto& s : clip.samples) s *= inv;

    if (wav.sample_rate != target_rate)
        clip.samples = resample(clip.samples, wav.sample_rate, target_rate);
    clip.sample_rate = target_rate;
    if (clip.samples.empty()) throw ValidationError("audio is empty after load: " + path);
    return clip;
}

inline double rms(const std::vector<double>& x, std::size_t begin, std::size_t end) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end && i < x.size(); ++i) acc += x[i] * x[i];
    const std::size_t n = std::min(end, x.size()) - std::min(begin, x.size());
    return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

inline double rms(const std::vector<double>& x) { return rms(x, 0, x.size()); }

}  // namespace peep
