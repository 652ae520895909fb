#pragma once

#include <functional>
#include <map>
#include <vector>

#include "peep/annotations.hpp"
#include "peep/detection.hpp"

namespace peep {

// Scoring: onset matching under a tolerance window, frame-based P/R/F on a
// fixed grid, and event-based P/R/F under the onset-tolerance +
// duration-criterion rule. All matchers compute maximum-cardinality bipartite
// matchings, so no greedy double counting.

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    long tp = 0;
    long fp = 0;
    long fn = 0;

    static Prf from_counts(long tp, long fp, long fn) {
        Prf out;
        out.tp = tp;
        out.fp = fp;
        out.fn = fn;
        out.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        out.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        out.f = out.precision + out.recall > 0.0
                    ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                    : 0.0;
        return out;
    }

    Prf& operator+=(const Prf& other) {
        *this = from_counts(tp + other.tp, fp + other.fp, fn + other.fn);
        return *this;
    }
};

namespace detail {

/// Kuhn's augmenting-path maximum bipartite matching. Returns the matching
/// size; `pair_of_right`, when given, receives the left partner per right
/// node (-1 if unmatched).
inline int max_matching(const std::vector<std::vector<int>>& adj, int n_right,
                        std::vector<int>* pair_of_right = nullptr) {
    std::vector<int> match_right(static_cast<std::size_t>(n_right), -1);
    std::vector<char> used;
    std::function<bool(int)> augment = [&](int u) -> bool {
        for (int v : adj[static_cast<std::size_t>(u)]) {
            if (used[static_cast<std::size_t>(v)]) continue;
            used[static_cast<std::size_t>(v)] = 1;
            if (match_right[static_cast<std::size_t>(v)] < 0 ||
                augment(match_right[static_cast<std::size_t>(v)])) {
                match_right[static_cast<std::size_t>(v)] = u;
                return true;
            }
        }
        return false;
    };
    int size = 0;
    for (std::size_t u = 0; u < adj.size(); ++u) {
        used.assign(static_cast<std::size_t>(n_right), 0);
        if (augment(static_cast<int>(u))) ++size;
    }
    if (pair_of_right) *pair_of_right = match_right;
    return size;
}

}  // namespace detail

/// Maximum-cardinality matching of onset times under |ref - pred| <= window.
inline Prf match_onsets(const std::vector<double>& ref, const std::vector<double>& pred,
                        double window = 0.15) {
    std::vector<std::vector<int>> adj(ref.size());
    for (std::size_t r = 0; r < ref.size(); ++r)
        for (std::size_t p = 0; p < pred.size(); ++p)
            if (std::abs(ref[r] - pred[p]) <= window) adj[r].push_back(static_cast<int>(p));
    const int tp = detail::max_matching(adj, static_cast<int>(pred.size()));
    return Prf::from_counts(tp, static_cast<long>(pred.size()) - tp,
                            static_cast<long>(ref.size()) - tp);
}

/// Rasterizes events onto a fixed grid (cell label = event covering the cell
/// center) and counts per-class cell hits.
inline std::map<Label, Prf> frame_eval(const std::vector<CallEvent>& ref,
                                       const std::vector<CallEvent>& pred, double total_dur,
                                       double grid = 0.01,
                                       const std::vector<Label>& classes = call_types()) {
    if (grid <= 0.0) throw ValidationError("frame eval: grid must be positive");
    const auto cells = static_cast<std::size_t>(std::ceil(total_dur / grid));
    std::vector<Label> ref_grid(cells, Label::Background), pred_grid(cells, Label::Background);
    auto paint = [&](const std::vector<CallEvent>& events, std::vector<Label>& canvas) {
        for (const auto& e : events) {
            auto lo = static_cast<std::ptrdiff_t>(std::ceil((e.onset - grid / 2.0) / grid));
            auto hi = static_cast<std::ptrdiff_t>(std::floor((e.offset - grid / 2.0 - 1e-12) / grid));
            for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, lo);
                 c <= hi && c < static_cast<std::ptrdiff_t>(cells); ++c)
                canvas[static_cast<std::size_t>(c)] = e.label;
        }
    };
    paint(ref, ref_grid);
    paint(pred, pred_grid);

    std::map<Label, Prf> out;
    for (Label cls : classes) {
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t c = 0; c < cells; ++c) {
            const bool r = ref_grid[c] == cls;
            const bool p = pred_grid[c] == cls;
            if (r && p) ++tp;
            else if (p) ++fp;
            else if (r) ++fn;
        }
        out[cls] = Prf::from_counts(tp, fp, fn);
    }
    return out;
}

enum class DurCriterion {
    Ratio,   // pred duration >= ratio * ref duration
    Overlap  // overlap length >= ratio * ref duration
};

struct EventEvalParams {
    double onset_tol = 0.10;
    double dur_ratio = 0.5;
    DurCriterion criterion = DurCriterion::Ratio;
};

/// Per-class event matching: same class, onset within tolerance, and the
/// duration criterion; maximum matching, each event used at most once.
inline std::map<Label, Prf> event_eval(const std::vector<CallEvent>& ref,
                                       const std::vector<CallEvent>& pred,
                                       const EventEvalParams& p = {},
                                       const std::vector<Label>& classes = call_types()) {
    if (p.onset_tol < 0.0 || p.dur_ratio < 0.0)
        throw ValidationError("event eval: tolerances must be >= 0");
    std::map<Label, Prf> out;
    for (Label cls : classes) {
        std::vector<const CallEvent*> r, q;
        for (const auto& e : ref)
            if (e.label == cls) r.push_back(&e);
        for (const auto& e : pred)
            if (e.label == cls) q.push_back(&e);

        std::vector<std::vector<int>> adj(r.size());
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t j = 0; j < q.size(); ++j) {
                if (std::abs(r[i]->onset - q[j]->onset) > p.onset_tol) continue;
                bool dur_ok;
                if (p.criterion == DurCriterion::Ratio) {
                    dur_ok = q[j]->duration() >= p.dur_ratio * r[i]->duration();
                } else {
                    const double overlap = std::min(r[i]->offset, q[j]->offset) -
                                           std::max(r[i]->onset, q[j]->onset);
                    dur_ok = overlap >= p.dur_ratio * r[i]->duration();
                }
                if (dur_ok) adj[i].push_back(static_cast<int>(j));
            }
        const int tp = detail::max_matching(adj, static_cast<int>(q.size()));
        out[cls] = Prf::from_counts(tp, static_cast<long>(q.size()) - tp,
                                    static_cast<long>(r.size()) - tp);
    }
    return out;
}

/// Unweighted mean of per-class F-measures.
inline double macro_f(const std::vector<double>& per_class_f) {
    if (per_class_f.empty()) return 0.0;
    double acc = 0.0;
    for (double f : per_class_f) acc += f;
    return acc / static_cast<double>(per_class_f.size());
}

inline double macro_f(const std::map<Label, Prf>& per_class) {
    std::vector<double> fs;
    for (const auto& [cls, prf] : per_class) {
        (void)cls;
        fs.push_back(prf.f);
    }
    return macro_f(fs);
}

/// Per-event match decisions under the event rule, for error analysis:
/// `side,onset,offset,label,matched,partner_onset` with one row per
/// reference and predicted event.
inline std::string event_match_csv(const std::vector<CallEvent>& ref,
                                   const std::vector<CallEvent>& pred,
                                   const EventEvalParams& p = {}) {
    std::ostringstream out;
    out << "side,onset,offset,label,matched,partner_onset\n";
    out.precision(9);
    std::vector<int> ref_partner(ref.size(), -1), pred_partner(pred.size(), -1);
    for (Label cls : call_types()) {
        std::vector<std::size_t> r, q;
        for (std::size_t i = 0; i < ref.size(); ++i)
            if (ref[i].label == cls) r.push_back(i);
        for (std::size_t j = 0; j < pred.size(); ++j)
            if (pred[j].label == cls) q.push_back(j);
        std::vector<std::vector<int>> adj(r.size());
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t j = 0; j < q.size(); ++j) {
                const auto& re = ref[r[i]];
                const auto& qe = pred[q[j]];
                if (std::abs(re.onset - qe.onset) > p.onset_tol) continue;
                const double overlap =
                    std::min(re.offset, qe.offset) - std::max(re.onset, qe.onset);
                const bool ok = p.criterion == DurCriterion::Ratio
                                    ? qe.duration() >= p.dur_ratio * re.duration()
                                    : overlap >= p.dur_ratio * re.duration();
                if (ok) adj[i].push_back(static_cast<int>(j));
            }
        std::vector<int> pair_of_right;
        detail::max_matching(adj, static_cast<int>(q.size()), &pair_of_right);
        for (std::size_t j = 0; j < q.size(); ++j) {
            if (pair_of_right[j] < 0) continue;
            ref_partner[r[static_cast<std::size_t>(pair_of_right[j])]] =
                static_cast<int>(q[j]);
            pred_partner[q[j]] = static_cast<int>(r[static_cast<std::size_t>(pair_of_right[j])]);
        }
    }
    auto row = [&](const char* side, const CallEvent& e, int partner,
                   const std::vector<CallEvent>& other) {
        out << side << ',' << e.onset << ',' << e.offset << ',' << label_name(e.label) << ','
            << (partner >= 0 ? "true" : "false") << ',';
        if (partner >= 0) out << other[static_cast<std::size_t>(partner)].onset;
        out << '\n';
    };
    for (std::size_t i = 0; i < ref.size(); ++i) row("ref", ref[i], ref_partner[i], pred);
    for (std::size_t j = 0; j < pred.size(); ++j) row("pred", pred[j], pred_partner[j], ref);
    return out.str();
}

struct SegmentationScores {
    Prf frame;
    Prf event;
};

/// Type-blind comparison of detected segments against reference events:
/// everything collapses to a single "call" class.
inline SegmentationScores segmentation_eval(const std::vector<CallEvent>& ref,
                                            const std::vector<Segment>& segments,
                                            double total_dur, double grid = 0.01,
                                            const EventEvalParams& ep = {}) {
    std::vector<CallEvent> blind_ref, blind_pred;
    for (const auto& e : ref) blind_ref.push_back(CallEvent{e.onset, e.offset, Label::Contact});
    for (const auto& s : segments)
        blind_pred.push_back(CallEvent{s.start, s.end, Label::Contact});
    const std::vector<Label> one_class{Label::Contact};
    SegmentationScores out;
    out.frame = frame_eval(blind_ref, blind_pred, total_dur, grid, one_class).at(Label::Contact);
    out.event = event_eval(blind_ref, blind_pred, ep, one_class).at(Label::Contact);
    return out;
}

}  // namespace peep
