#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "peep/common.hpp"

namespace peep {

/// Frame/event label. Background is only ever a frame label; events carry one
/// of the three annotated call types.
enum class Label : int { Background = 0, Pleasure = 1, Contact = 2, Uncertain = 3 };

inline const std::vector<Label>& call_types() {
    static const std::vector<Label> t{Label::Pleasure, Label::Contact, Label::Uncertain};
    return t;
}

inline std::string label_name(Label l) {
    switch (l) {
        case Label::Pleasure: return "pleasure";
        case Label::Contact: return "contact";
        case Label::Uncertain: return "uncertain";
        default: return "background";
    }
}

inline Label label_from_name(const std::string& name) {
    const std::string s = lowercase(trim(name));
    if (s == "pleasure") return Label::Pleasure;
    if (s == "contact") return Label::Contact;
    if (s == "uncertain") return Label::Uncertain;
    if (s == "background") return Label::Background;
    throw ValidationError("unknown label: '" + name + "'");
}

struct CallEvent {
    double onset = 0.0;
    double offset = 0.0;
    Label label = Label::Background;

    double duration() const { return offset - onset; }
};

struct AnnotationSet {
    std::string subject_id;
    std::vector<CallEvent> events;  // sorted by onset
    double duration = 0.0;

    void validate() const {
        for (std::size_t i = 0; i < events.size(); ++i) {
            const auto& e = events[i];
            if (e.onset < 0.0 || e.offset <= e.onset)
                throw ValidationError("annotation row " + std::to_string(i + 1) +
                                      ": offset must exceed onset");
            if (e.label == Label::Background)
                throw ValidationError("annotation row " + std::to_string(i + 1) +
                                      ": events cannot be background");
            if (duration > 0.0 && e.offset > duration + 1e-9)
                throw ValidationError("annotation row " + std::to_string(i + 1) +
                                      ": offset exceeds recording duration");
            if (i > 0 && events[i - 1].onset > e.onset)
                throw ValidationError("annotation events not sorted by onset");
        }
    }
};

/// `<subject>__<take>` filename convention; falls back to the whole stem.
inline std::string subject_from_stem(const std::string& stem) {
    const auto pos = stem.find("__");
    return pos == std::string::npos ? stem : stem.substr(0, pos);
}

inline std::string path_stem(const std::string& path) {
    std::size_t slash = path.find_last_of("/\\");
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    std::size_t dot = name.find_last_of('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

/// Parses annotation CSV `onset,offset,label`. Rows are validated and sorted
/// by onset; a violating row is reported by its 1-based data row number.
inline AnnotationSet load_annotations(const std::string& path,
                                      const std::string& subject_id = "",
                                      double duration = 0.0) {
    const std::string text = read_text_file(path);
    AnnotationSet out;
    out.subject_id = subject_id.empty() ? subject_from_stem(path_stem(path)) : subject_id;
    out.duration = duration;

    std::istringstream in(text);
    std::string line;
    bool header = true;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (header) {
            if (lowercase(line) != "onset,offset,label")
                throw ValidationError("annotation CSV must start with header 'onset,offset,label': " + path);
            header = false;
            continue;
        }
        ++row;
        const auto cells = split(line, ',');
        if (cells.size() != 3)
            throw ValidationError("annotation row " + std::to_string(row) + ": expected 3 columns");
        CallEvent e;
        try {
            e.onset = std::stod(trim(cells[0]));
            e.offset = std::stod(trim(cells[1]));
        } catch (const std::exception&) {
            throw ValidationError("annotation row " + std::to_string(row) + ": non-numeric time");
        }
        e.label = label_from_name(cells[2]);
        if (e.label == Label::Background)
            throw ValidationError("annotation row " + std::to_string(row) + ": background is not a call type");
        if (e.offset <= e.onset || e.onset < 0.0)
            throw ValidationError("annotation row " + std::to_string(row) +
                                  ": offset must exceed onset (got " + trim(cells[0]) + "," + trim(cells[1]) + ")");
        out.events.push_back(e);
    }
    if (header) throw ValidationError("annotation CSV is empty (missing header): " + path);
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const CallEvent& a, const CallEvent& b) { return a.onset < b.onset; });
    out.validate();
    return out;
}

inline std::string events_to_csv(const std::vector<CallEvent>& events) {
    std::ostringstream out;
    out << "onset,offset,label\n";
    out.precision(9);
    for (const auto& e : events)
        out << e.onset << ',' << e.offset << ',' << label_name(e.label) << '\n';
    return out.str();
}

inline void save_annotations(const std::string& path, const AnnotationSet& ann) {
    write_text_file(path, events_to_csv(ann.events));
}

struct ManifestEntry {
    std::string audio_path;
    std::string subject_id;
};

/// Manifest CSV `path,subject_id`. Relative paths resolve against `base_dir`.
inline std::vector<ManifestEntry> load_manifest(const std::string& path,
                                                const std::string& base_dir = "") {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::vector<ManifestEntry> out;
    bool header = true;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (header) {
            if (lowercase(line) != "path,subject_id")
                throw ValidationError("manifest must start with header 'path,subject_id': " + path);
            header = false;
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != 2)
            throw ValidationError("manifest row has wrong column count: " + line);
        ManifestEntry e;
        e.audio_path = trim(cells[0]);
        e.subject_id = trim(cells[1]);
        if (!base_dir.empty() && !e.audio_path.empty() && e.audio_path.front() != '/')
            e.audio_path = base_dir + "/" + e.audio_path;
        if (e.subject_id.empty()) e.subject_id = subject_from_stem(path_stem(e.audio_path));
        out.push_back(e);
    }
    return out;
}

}  // namespace peep
