#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "peep/annotations.hpp"
#include "peep/events.hpp"
#include "peep/features.hpp"
#include "peep/svm.hpp"

namespace peep {

// One-vs-rest Gaussian-kernel classification over frame features, with
// leave-one-subject-out splits and stratified folds for the inner
// cross-validation. A frame with no positive response from any class model
// falls back to Background.

/// Frames of one subject, in a canonical order given by `keys`
/// (group index, frame index) so fold assignment cannot depend on then
/// incidental order of computation.
struct LabeledFrames {
    std::string subject;
    Mat x;
    std::vector<Label> y;
    std::vector<std::pair<int, int>> keys;
};

struct SplitPlan {
    std::string held_out;
    std::vector<std::string> train_subjects;
    std::map<std::string, std::vector<std::uint8_t>> folds;  // per subject, 1..n_folds
};

/// One plan per subject. Within a plan, training frames are dealt into folds
/// per label group: canonical sort, seeded shuffle, round-robin. The held-out
/// subject never receives a fold.
inline std::vector<SplitPlan> make_splits(const std::vector<LabeledFrames>& subjects,
                                          std::uint64_t seed, int n_folds = 3) {
    if (subjects.size() < 2)
        throw ValidationError("splits: leave-one-subject-out needs at least 2 subjects");
    std::vector<std::size_t> order(subjects.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return subjects[a].subject < subjects[b].subject;
    });

    std::vector<SplitPlan> plans;
    for (std::size_t held : order) {
        SplitPlan plan;
        plan.held_out = subjects[held].subject;
        Rng rng(seed ^ fnv1a64(plan.held_out));

        // gather training frame references grouped by label
        struct Ref {
            std::size_t subj;
            std::size_t frame;
        };
        std::map<int, std::vector<Ref>> groups;
        for (std::size_t s : order) {
            if (s == held) continue;
            plan.train_subjects.push_back(subjects[s].subject);
            plan.folds[subjects[s].subject].assign(subjects[s].y.size(), 0);
            for (std::size_t f = 0; f < subjects[s].y.size(); ++f)
                groups[static_cast<int>(subjects[s].y[f])].push_back(Ref{s, f});
        }
        for (auto& [label, refs] : groups) {
            (void)label;
            std::sort(refs.begin(), refs.end(), [&](const Ref& a, const Ref& b) {
                return std::tie(subjects[a.subj].subject, subjects[a.subj].keys[a.frame]) <
                       std::tie(subjects[b.subj].subject, subjects[b.subj].keys[b.frame]);
            });
            rng.shuffle(refs);
            for (std::size_t i = 0; i < refs.size(); ++i)
                plan.folds[subjects[refs[i].subj].subject][refs[i].frame] =
                    static_cast<std::uint8_t>(1 + i % static_cast<std::size_t>(n_folds));
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

/// Numeric view of one split's training side, rows in canonical subject order.
struct SplitData {
    Mat x;
    std::vector<Label> y;
    std::vector<std::uint8_t> fold;
};

inline SplitData assemble_split(const std::vector<LabeledFrames>& subjects,
                                const SplitPlan& plan) {
    std::size_t total = 0, dim = 0;
    std::vector<const LabeledFrames*> train;
    for (const auto& name : plan.train_subjects)
        for (const auto& s : subjects)
            if (s.subject == name) {
                train.push_back(&s);
                total += s.y.size();
                dim = s.x.cols;
            }
    SplitData out;
    out.x = Mat(total, dim);
    out.y.reserve(total);
    out.fold.reserve(total);
    std::size_t r = 0;
    for (const auto* s : train) {
        const auto& folds = plan.folds.at(s->subject);
        for (std::size_t f = 0; f < s->y.size(); ++f, ++r) {
            std::copy(s->x.row(f), s->x.row(f) + dim, out.x.row(r));
            out.y.push_back(s->y[f]);
            out.fold.push_back(folds[f]);
        }
    }
    return out;
}

/// All subjects' frames with stratified folds and no held-out subject; used
/// when training a deployable model on a whole dataset.
inline SplitData assemble_all_with_folds(const std::vector<LabeledFrames>& subjects,
                                         std::uint64_t seed, int n_folds = 3) {
    if (subjects.empty()) throw ValidationError("folds: no subjects");
    // reuse the split machinery with a phantom held-out subject
    std::vector<LabeledFrames> padded = subjects;
    LabeledFrames phantom;
    phantom.subject = "\x7f_phantom";
    phantom.x = Mat(0, subjects.front().x.cols);
    padded.push_back(phantom);
    for (const auto& plan : make_splits(padded, seed, n_folds))
        if (plan.held_out == phantom.subject) return assemble_split(padded, plan);
    throw ValidationError("folds: internal plan construction failed");
}

struct GridPoint {
    double c = 0.0;
    double gamma = 0.0;
    double mean_f = 0.0;
};

struct GridResult {
    double best_c = 0.0;
    double best_gamma = 0.0;
    double best_f = -1.0;
    std::vector<GridPoint> points;
};

namespace detail {

inline double binary_f_measure(const std::vector<int>& truth, const std::vector<int>& pred) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (pred[i] > 0 && truth[i] > 0) ++tp;
        else if (pred[i] > 0) ++fp;
        else if (truth[i] > 0) ++fn;
    }
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace detail

/// Mean validation F-measure per (C, gamma) over the folds; the best pair
/// wins, ties go to the smaller C then the smaller gamma.
inline GridResult grid_search(const SplitData& data, Label cls, const std::vector<double>& c_grid,
                              const std::vector<double>& gamma_grid, const SvmParams& base,
                              int n_folds = 3) {
    if (c_grid.empty() || gamma_grid.empty())
        throw ValidationError("grid search: parameter grids must be non-empty");
    std::vector<double> cs = c_grid, gs = gamma_grid;
    std::sort(cs.begin(), cs.end());
    std::sort(gs.begin(), gs.end());

    GridResult out;
    for (double c : cs) {
        for (double g : gs) {
            double f_sum = 0.0;
            int f_cnt = 0;
            for (int fold = 1; fold <= n_folds; ++fold) {
                std::vector<std::size_t> tr, va;
                for (std::size_t i = 0; i < data.y.size(); ++i)
                    (data.fold[i] == fold ? va : tr).push_back(i);
                bool tr_pos = false, tr_neg = false, va_pos = false;
                for (auto i : tr) (data.y[i] == cls ? tr_pos : tr_neg) = true;
                for (auto i : va)
                    if (data.y[i] == cls) va_pos = true;
                if (!tr_pos || !tr_neg || !va_pos) continue;

                Mat xt(tr.size(), data.x.cols);
                std::vector<double> yt(tr.size());
                for (std::size_t i = 0; i < tr.size(); ++i) {
                    std::copy(data.x.row(tr[i]), data.x.row(tr[i]) + data.x.cols, xt.row(i));
                    yt[i] = data.y[tr[i]] == cls ? 1.0 : -1.0;
                }
                SvmParams p = base;
                p.c = c;
                p.gamma = g;
                const auto model = train_binary_svm(xt, yt, p);

                std::vector<int> truth, pred;
                for (auto i : va) {
                    truth.push_back(data.y[i] == cls ? 1 : -1);
                    pred.push_back(model.decision(data.x.row(i), data.x.cols) > 0.0 ? 1 : -1);
                }
                f_sum += detail::binary_f_measure(truth, pred);
                ++f_cnt;
            }
            const double mean_f = f_cnt ? f_sum / f_cnt : 0.0;
            out.points.push_back(GridPoint{c, g, mean_f});
            if (mean_f > out.best_f) {
                out.best_f = mean_f;
                out.best_c = c;
                out.best_gamma = g;
            }
        }
    }
    return out;
}

struct ClassModel {
    Label label = Label::Background;
    BinarySvmModel svm;
    double c = 0.0;
    double gamma = 0.0;
    double cv_f = 0.0;
};

struct TrainedModel {
    std::vector<ClassModel> classes;  // fixed order: pleasure, contact, uncertain
    NormStats stats;                  // fitted on this split's training frames
    EventThresholds thresholds;       // gap-fill/prune thresholds from the training annotations
    std::string scheme;
    std::string config_hash;
    std::vector<std::string> skipped_classes;

    std::size_t dim() const { return stats.mean.size(); }
};

/// Grid-searches and trains one binary model per call type present in the
/// training data; absent types are recorded as skipped.
inline TrainedModel train_one_vs_rest(const SplitData& data, const std::vector<double>& c_grid,
                                      const std::vector<double>& gamma_grid,
                                      const SvmParams& base, int n_folds = 3) {
    TrainedModel model;
    for (Label cls : call_types()) {
        bool pos = false, neg = false;
        for (auto y : data.y) (y == cls ? pos : neg) = true;
        if (!pos || !neg) {
            model.skipped_classes.push_back(label_name(cls));
            continue;
        }
        const auto grid = grid_search(data, cls, c_grid, gamma_grid, base, n_folds);
        SvmParams p = base;
        p.c = grid.best_c;
        p.gamma = grid.best_gamma;
        std::vector<double> y(data.y.size());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = data.y[i] == cls ? 1.0 : -1.0;
        ClassModel cm;
        cm.label = cls;
        cm.svm = train_binary_svm(data.x, y, p);
        cm.c = grid.best_c;
        cm.gamma = grid.best_gamma;
        cm.cv_f = grid.best_f;
        model.classes.push_back(std::move(cm));
    }
    if (model.classes.empty())
        throw ValidationError("training: no call type has both positive and negative frames");
    return model;
}

struct FramePredictions {
    std::vector<Label> labels;
    Mat decisions;  // [n_frames x n_classes], column order = model.classes
};

/// Normalizes with the model's stats, then argmax of the per-class decision
/// values; all-negative frames are Background.
inline FramePredictions predict_frames(const TrainedModel& model, const FeatureMatrix& fm) {
    if (fm.dim() != model.dim())
        throw ValidationError("predict: feature dimension does not match the model");
    const FeatureMatrix z = zscore_apply(fm, model.stats);
    FramePredictions out;
    out.labels.resize(z.frames(), Label::Background);
    out.decisions = Mat(z.frames(), model.classes.size());
    for (std::size_t f = 0; f < z.frames(); ++f) {
        double best = 0.0;
        Label best_label = Label::Background;
        for (std::size_t c = 0; c < model.classes.size(); ++c) {
            const double d = model.classes[c].svm.decision(z.vectors.row(f), z.dim());
            out.decisions.at(f, c) = d;
            if (d > 0.0 && (best_label == Label::Background || d > best)) {
                best = d;
                best_label = model.classes[c].label;
            }
        }
        out.labels[f] = best_label;
    }
    return out;
}

}  // namespace peep
