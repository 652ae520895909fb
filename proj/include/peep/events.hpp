#pragma once

#include <map>
#include <vector>

#include "peep/annotations.hpp"

namespace peep {

// Frame labels <-> call events. Fusion turns maximal runs of one label into
// events; postprocessing fills small same-type gaps and prunes too-short
// events, with thresholds learned from the training annotations per call type.

struct LabeledFrameSeq {
    std::vector<Label> labels;
    double frame_hop = 0.0;  // seconds
    double start_time = 0.0;
};

/// Maximal runs of identical non-background labels become events
/// [run_start, run_end); frame i covers [i*hop, (i+1)*hop).
inline std::vector<CallEvent> fuse_frames(const LabeledFrameSeq& seq) {
    if (seq.frame_hop <= 0.0) throw ValidationError("fuse: frame hop must be positive");
    std::vector<CallEvent> out;
    std::size_t i = 0;
    while (i < seq.labels.size()) {
        if (seq.labels[i] == Label::Background) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < seq.labels.size() && seq.labels[j] == seq.labels[i]) ++j;
        CallEvent e;
        e.onset = seq.start_time + static_cast<double>(i) * seq.frame_hop;
        e.offset = seq.start_time + static_cast<double>(j) * seq.frame_hop;
        e.label = seq.labels[i];
        out.push_back(e);
        i = j;
    }
    return out;
}

using TypeThresholds = std::map<Label, double>;

struct EventThresholds {
    TypeThresholds min_gap;
    TypeThresholds min_dur;
    std::map<Label, bool> missing;  // type absent from training annotations
};

/// min_dur[type] is the shortest annotated duration of that type across the
/// training annotations; min_gap follows it. Absent types get zero and a flag.
inline EventThresholds training_thresholds(const std::vector<AnnotationSet>& training) {
    EventThresholds th;
    for (Label t : call_types()) {
        double shortest = std::numeric_limits<double>::infinity();
        for (const auto& ann : training)
            for (const auto& e : ann.events)
                if (e.label == t) shortest = std::min(shortest, e.duration());
        if (std::isfinite(shortest)) {
            th.min_dur[t] = shortest;
            th.min_gap[t] = shortest;
            th.missing[t] = false;
        } else {
            th.min_dur[t] = 0.0;
            th.min_gap[t] = 0.0;
            th.missing[t] = true;
        }
    }
    return th;
}

namespace detail {

inline double threshold_for(const TypeThresholds& th, Label t) {
    auto it = th.find(t);
    return it == th.end() ? 0.0 : it->second;
}

/// One gap-filling pass: adjacent same-type events closer than min_gap merge.
inline std::vector<CallEvent> merge_gaps(std::vector<CallEvent> events,
                                         const TypeThresholds& min_gap) {
    std::vector<CallEvent> out;
    for (auto& e : events) {
        if (!out.empty() && out.back().label == e.label &&
            e.onset - out.back().offset < threshold_for(min_gap, e.label)) {
            out.back().offset = std::max(out.back().offset, e.offset);
        } else {
            out.push_back(e);
        }
    }
    return out;
}

/// One pruning pass: events shorter than min_dur of their type vanish.
inline std::vector<CallEvent> prune_short(std::vector<CallEvent> events,
                                          const TypeThresholds& min_dur) {
    std::vector<CallEvent> out;
    for (auto& e : events)
        if (e.duration() >= threshold_for(min_dur, e.label)) out.push_back(e);
    return out;
}

}  // namespace detail

/// Gap filling then duration pruning, iterated to a fixed point (pruning can
/// expose new same-type neighbours, which the next round merges).
inline std::vector<CallEvent> postprocess(std::vector<CallEvent> events,
                                          const TypeThresholds& min_gap,
                                          const TypeThresholds& min_dur) {
    for (const auto& [t, v] : min_gap)
        if (v < 0.0) throw ValidationError("postprocess: thresholds must be >= 0");
    for (const auto& [t, v] : min_dur)
        if (v < 0.0) throw ValidationError("postprocess: thresholds must be >= 0");
    while (true) {
        auto next = detail::prune_short(detail::merge_gaps(events, min_gap), min_dur);
        const bool changed = next.size() != events.size() ||
                             !std::equal(next.begin(), next.end(), events.begin(),
                                         [](const CallEvent& a, const CallEvent& b) {
                                             return a.onset == b.onset && a.offset == b.offset &&
                                                    a.label == b.label;
                                         });
        events = std::move(next);
        if (!changed) break;
    }
    return events;
}

/// Most frequent non-background label of a segment's frames. Ties break on
/// the larger summed decision value, then on the fixed order contact,
/// pleasure, uncertain.
inline Label majority_vote(const std::vector<Label>& frames,
                           const std::map<Label, double>& decision_sums = {}) {
    if (frames.empty()) throw ValidationError("majority vote: no frames");
    std::map<Label, std::size_t> counts;
    for (Label l : frames)
        if (l != Label::Background) counts[l]++;
    if (counts.empty()) return Label::Background;

    static const std::vector<Label> tie_order{Label::Contact, Label::Pleasure, Label::Uncertain};
    Label best = Label::Background;
    std::size_t best_count = 0;
    double best_sum = -std::numeric_limits<double>::infinity();
    for (Label l : tie_order) {
        auto it = counts.find(l);
        if (it == counts.end()) continue;
        auto ds = decision_sums.find(l);
        const double sum = ds == decision_sums.end() ? 0.0 : ds->second;
        if (it->second > best_count || (it->second == best_count && sum > best_sum)) {
            best = l;
            best_count = it->second;
            best_sum = sum;
        }
    }
    return best;
}

}  // namespace peep
