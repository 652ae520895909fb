#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "peep/common.hpp"

namespace peep {

// Pipeline configuration: a flat key = value document (hash comments allowed)
// with a versioned schema. Unknown keys are rejected; every key has a default
// and a one-line description, and the canonical rendering (sorted keys, all
// defaults materialized) is what gets hashed for run directories.

struct ConfigEntry {
    std::string key;
    std::string def;
    std::string description;
};

inline const std::vector<ConfigEntry>& config_schema() {
    static const std::vector<ConfigEntry> schema{
        {"config_version", "1", "schema version of this file"},
        {"seed", "42", "global random seed (synthesis, fold shuffling)"},
        {"audio.target_rate", "44100", "sample rate everything is resampled to, Hz"},

        {"synth.num_calls", "10", "calls per synthetic recording"},
        {"synth.duration", "30", "synthetic recording length, s"},
        {"synth.noise_db", "-60", "white noise floor, dBFS"},
        {"synth.min_gap", "0.5", "smallest silence between synthetic calls, s"},
        {"synth.up_fraction", "0.5", "fraction of up-chirp (pleasure-like) calls"},
        {"synth.up.f_lo", "2500", "up-chirp start frequency range low, Hz"},
        {"synth.up.f_hi", "3200", "up-chirp start frequency range high, Hz"},
        {"synth.up.sweep_octaves", "0.7", "up-chirp sweep extent, octaves"},
        {"synth.up.dur_lo", "0.10", "up-chirp duration low, s"},
        {"synth.up.dur_hi", "0.30", "up-chirp duration high, s"},
        {"synth.up.amp_lo", "0.10", "up-chirp peak amplitude low"},
        {"synth.up.amp_hi", "0.40", "up-chirp peak amplitude high"},
        {"synth.down.f_lo", "3400", "down-chirp start frequency range low, Hz"},
        {"synth.down.f_hi", "4200", "down-chirp start frequency range high, Hz"},
        {"synth.down.sweep_octaves", "0.7", "down-chirp sweep extent, octaves"},
        {"synth.down.dur_lo", "0.25", "down-chirp duration low, s"},
        {"synth.down.dur_hi", "0.50", "down-chirp duration high, s"},
        {"synth.down.amp_lo", "0.30", "down-chirp peak amplitude low"},
        {"synth.down.amp_hi", "0.90", "down-chirp peak amplitude high"},

        {"scattering.q1", "16", "first-order filters per octave"},
        {"scattering.j1", "8", "first-order octaves"},
        {"scattering.q2", "2", "temporal-modulation filters per octave"},
        {"scattering.j2", "7", "temporal-modulation octaves"},
        {"scattering.qf", "2", "spectral-modulation filters per octave"},
        {"scattering.jf", "4", "spectral-modulation octaves"},
        {"scattering.time_avg", "16384", "temporal averaging scale T, samples (power of two)"},
        {"scattering.freq_avg_octaves", "2", "spectral averaging scale F, octaves of the lambda axis"},
        {"scattering.oversampling", "2", "output hop exponent: frames every T/2^alpha samples"},
        {"scattering.mod_lo", "0", "kept temporal-modulation band low edge, Hz"},
        {"scattering.mod_hi", "50", "kept temporal-modulation band high edge, Hz"},
        {"scattering.lowpass_fr_paths", "true", "keep the theta-less lowpass-along-lambda paths"},
        {"scattering.scalogram_hop", "0", "internal scalogram hop, samples (0 = auto)"},

        {"features.include_s1", "true", "append first-order coefficients to the JTFS frames"},
        {"features.context", "5", "frames in the centered mean/std context window"},
        {"features.mfcc_frame", "0.025", "MFCC frame size, s"},
        {"features.mfcc_hop", "0.010", "MFCC hop, s"},
        {"features.mfcc_coeffs", "24", "MFCC coefficients kept"},
        {"features.mfcc_mels", "40", "mel bands under the MFCC DCT"},
        {"features.mfcc_context", "true", "apply the context window to MFCC features too"},

        {"detection.n_fft", "2048", "onset spectrogram FFT size, samples"},
        {"detection.hop", "441", "onset spectrogram hop, samples"},
        {"detection.n_bands", "138", "mel-spaced bands for the onset function"},
        {"detection.fmin", "27.5", "lowest onset band edge, Hz"},
        {"detection.fmax", "16000", "highest onset band edge, Hz"},
        {"detection.max_width", "3", "maximum-filter width along frequency, bands (odd)"},
        {"detection.lag", "1", "frames between the current and reference spectrum"},
        {"detection.pre_max", "0.03", "peak window before, s"},
        {"detection.post_max", "0.03", "peak window after, s"},
        {"detection.pre_avg", "0.10", "mean window before, s"},
        {"detection.post_avg", "0.10", "mean window after, s"},
        {"detection.delta", "1.0", "required excess of a peak over the local mean"},
        {"detection.wait", "0.03", "minimum spacing between onsets, s"},
        {"detection.silence_db", "-30", "segment threshold below the interval peak, dB"},
        {"detection.rms_window", "0.025", "segmentation RMS window, s"},
        {"detection.rms_hop", "0.010", "segmentation RMS hop, s"},

        {"classifier.c_grid", "1,10,100", "error-penalty grid"},
        {"classifier.gamma_grid", "1e-4,1e-3,1e-2", "kernel width grid"},
        {"classifier.tol", "1e-3", "dual KKT tolerance"},
        {"classifier.max_iter", "100000", "working-pair iteration cap"},
        {"classifier.cache_mb", "256", "kernel row cache, MB"},
        {"classifier.folds", "3", "stratified folds for the inner cross-validation"},

        {"eval.onset_window", "0.15", "onset matching window, s"},
        {"eval.event_onset_tol", "0.10", "event matching onset tolerance, s"},
        {"eval.event_dur_ratio", "0.5", "event matching duration criterion ratio"},
        {"eval.event_dur_criterion", "ratio", "duration rule: 'ratio' or 'overlap'"},
        {"eval.frame_grid", "0.01", "frame evaluation grid, s"},

        {"run.use_annotated_segments", "false", "evaluate on annotated instead of detected segments"},
    };
    return schema;
}

class PipelineConfig {
public:
    PipelineConfig() {
        for (const auto& e : config_schema()) values_[e.key] = e.def;
    }

    static PipelineConfig from_file(const std::string& path) {
        PipelineConfig cfg;
        cfg.apply_text(read_text_file(path), path);
        return cfg;
    }

    void apply_text(const std::string& text, const std::string& origin = "<config>") {
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ValidationError(origin + ":" + std::to_string(lineno) +
                                      ": expected 'key = value'");
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    void set(const std::string& key, const std::string& value) {
        if (values_.find(key) == values_.end())
            throw ValidationError("unknown config key: '" + key + "'");
        values_[key] = value;
    }

    const std::string& raw(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ValidationError("unknown config key: '" + key + "'");
        return it->second;
    }

    long integer(const std::string& key) const {
        try {
            std::size_t pos = 0;
            const long v = std::stol(raw(key), &pos);
            if (pos != raw(key).size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::exception&) {
            throw ValidationError("config key '" + key + "' must be an integer, got '" +
                                  raw(key) + "'");
        }
    }

    double real(const std::string& key) const {
        try {
            std::size_t pos = 0;
            const double v = std::stod(raw(key), &pos);
            if (pos != raw(key).size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::exception&) {
            throw ValidationError("config key '" + key + "' must be a number, got '" + raw(key) +
                                  "'");
        }
    }

    bool boolean(const std::string& key) const {
        const std::string v = lowercase(raw(key));
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ValidationError("config key '" + key + "' must be a boolean, got '" + raw(key) + "'");
    }

    std::vector<double> real_list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& cell : split(raw(key), ',')) {
            const std::string c = trim(cell);
            if (c.empty()) continue;
            try {
                out.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw ValidationError("config key '" + key + "' must be a comma list of numbers");
            }
        }
        if (out.empty()) throw ValidationError("config key '" + key + "' must be non-empty");
        return out;
    }

    /// Cross-field validation of every module's preconditions. Called before
    /// any work starts.
    void validate() const {
        if (integer("config_version") != 1)
            throw ValidationError("unsupported config_version (expected 1)");
        if (integer("audio.target_rate") <= 0)
            throw ValidationError("audio.target_rate must be positive");

        const long t = integer("scattering.time_avg");
        if (t <= 0 || !is_pow2(static_cast<std::size_t>(t)))
            throw ValidationError("scattering.time_avg must be a positive power of two");
        const long alpha = integer("scattering.oversampling");
        if (alpha < 0 || (t >> alpha) == 0)
            throw ValidationError("scattering.oversampling too large for scattering.time_avg");
        for (const char* k : {"scattering.q1", "scattering.j1", "scattering.q2", "scattering.j2",
                              "scattering.qf", "scattering.jf"})
            if (integer(k) < 1) throw ValidationError(std::string(k) + " must be >= 1");
        if (integer("scattering.freq_avg_octaves") < 1)
            throw ValidationError("scattering.freq_avg_octaves must be >= 1");
        if (real("scattering.mod_lo") >= real("scattering.mod_hi"))
            throw ValidationError("scattering.mod_lo must lie below scattering.mod_hi");
        const long shop = integer("scattering.scalogram_hop");
        if (shop < 0 || (shop > 0 && !is_pow2(static_cast<std::size_t>(shop))))
            throw ValidationError("scattering.scalogram_hop must be 0 or a power of two");

        if (integer("features.context") < 1 || integer("features.context") % 2 == 0)
            throw ValidationError("features.context must be odd and positive");
        if (integer("features.mfcc_coeffs") < 1 ||
            integer("features.mfcc_coeffs") > integer("features.mfcc_mels"))
            throw ValidationError("features.mfcc_coeffs must lie in [1, mfcc_mels]");
        if (real("features.mfcc_frame") <= 0 || real("features.mfcc_hop") <= 0)
            throw ValidationError("MFCC frame and hop must be positive");

        if (integer("detection.hop") <= 0 || integer("detection.hop") >= integer("detection.n_fft"))
            throw ValidationError("detection.hop must lie in (0, detection.n_fft)");
        if (integer("detection.max_width") < 1 || integer("detection.max_width") % 2 == 0)
            throw ValidationError("detection.max_width must be odd and >= 1");
        if (integer("detection.lag") < 1) throw ValidationError("detection.lag must be >= 1");
        if (real("detection.fmin") <= 0 || real("detection.fmin") >= real("detection.fmax"))
            throw ValidationError("detection band edges must satisfy 0 < fmin < fmax");

        real_list("classifier.c_grid");
        real_list("classifier.gamma_grid");
        if (real("classifier.tol") <= 0) throw ValidationError("classifier.tol must be positive");
        if (integer("classifier.folds") < 2)
            throw ValidationError("classifier.folds must be >= 2");

        if (real("eval.frame_grid") <= 0) throw ValidationError("eval.frame_grid must be positive");
        if (real("eval.event_dur_ratio") < 0 || real("eval.onset_window") < 0 ||
            real("eval.event_onset_tol") < 0)
            throw ValidationError("evaluation tolerances must be >= 0");
        const std::string crit = lowercase(raw("eval.event_dur_criterion"));
        if (crit != "ratio" && crit != "overlap")
            throw ValidationError("eval.event_dur_criterion must be 'ratio' or 'overlap'");

        if (real("synth.up_fraction") < 0.0 || real("synth.up_fraction") > 1.0)
            throw ValidationError("synth.up_fraction must lie in [0, 1]");
        if (integer("synth.num_calls") < 0) throw ValidationError("synth.num_calls must be >= 0");
        if (real("synth.duration") <= 0) throw ValidationError("synth.duration must be positive");
    }

    /// Sorted `key = value` rendering with every default materialized.
    std::string canonical_text() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
        return out.str();
    }

    std::string hash() const { return to_hex(fnv1a64(canonical_text())); }

    static std::string help_text() {
        std::ostringstream out;
        out << "Config keys (key = default  description):\n";
        for (const auto& e : config_schema()) {
            out << "  " << e.key;
            for (std::size_t i = e.key.size(); i < 34; ++i) out << ' ';
            out << "= " << e.def;
            for (std::size_t i = e.def.size(); i < 16; ++i) out << ' ';
            out << e.description << "\n";
        }
        return out.str();
    }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace peep
