#include <catch2/catch_amalgamated.hpp>

#include "peep/evaluation.hpp"
#include "test_util.hpp"

using namespace peep;

namespace {

std::vector<CallEvent> random_events(Rng& rng, std::size_t max_count, bool typed = true) {
    std::vector<CallEvent> out;
    const std::size_t n = rng.uniform_int(max_count + 1);
    double t = rng.uniform(0.0, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
        CallEvent e;
        e.onset = t;
        e.offset = t + rng.uniform(0.05, 0.6);
        e.label = typed ? static_cast<Label>(1 + rng.uniform_int(3)) : Label::Contact;
        out.push_back(e);
        t = e.offset + rng.uniform(0.01, 0.5);
    }
    return out;
}

}  // namespace

TEST_CASE("onset matching under the tolerance window", "[evaluation]") {
    SECTION("identical lists score perfectly") {
        const auto prf = match_onsets({0.5, 1.0, 2.0}, {0.5, 1.0, 2.0});
        REQUIRE(prf.precision == 1.0);
        REQUIRE(prf.recall == 1.0);
        REQUIRE(prf.f == 1.0);
    }
    SECTION("a 100 ms offset matches inside the 150 ms window") {
        const auto prf = match_onsets({1.0}, {1.1}, 0.15);
        REQUIRE(prf.tp == 1);
        REQUIRE(prf.fp == 0);
        REQUIRE(prf.fn == 0);
    }
    SECTION("one prediction cannot claim two references") {
        const auto prf = match_onsets({1.0, 1.1}, {1.05}, 0.15);
        REQUIRE(prf.tp == 1);
        REQUIRE(prf.fn == 1);
        REQUIRE(prf.fp == 0);
    }
    SECTION("widening the window never loses matches") {
        Rng rng(2);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> ref, pred;
            for (std::size_t i = 0; i < rng.uniform_int(8); ++i) ref.push_back(rng.uniform(0.0, 5.0));
            for (std::size_t i = 0; i < rng.uniform_int(8); ++i) pred.push_back(rng.uniform(0.0, 5.0));
            std::sort(ref.begin(), ref.end());
            std::sort(pred.begin(), pred.end());
            const auto narrow = match_onsets(ref, pred, 0.1);
            const auto wide = match_onsets(ref, pred, 0.3);
            REQUIRE(wide.tp >= narrow.tp);
        }
    }
}

TEST_CASE("matchers agree with brute-force enumeration", "[evaluation][property]") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> ref, pred;
        const std::size_t nr = rng.uniform_int(8), np = rng.uniform_int(8);
        for (std::size_t i = 0; i < nr; ++i) ref.push_back(rng.uniform(0.0, 3.0));
        for (std::size_t i = 0; i < np; ++i) pred.push_back(rng.uniform(0.0, 3.0));
        std::sort(ref.begin(), ref.end());
        std::sort(pred.begin(), pred.end());
        const double w = rng.uniform(0.05, 0.5);

        const auto got = match_onsets(ref, pred, w);
        std::vector<std::vector<int>> adj(ref.size());
        for (std::size_t r = 0; r < ref.size(); ++r)
            for (std::size_t p = 0; p < pred.size(); ++p)
                if (std::abs(ref[r] - pred[p]) <= w) adj[r].push_back(static_cast<int>(p));
        REQUIRE(got.tp == testutil::brute_force_matching(adj, static_cast<int>(pred.size())));
    }
}

TEST_CASE("frame evaluation rasterizes on a fixed grid", "[evaluation]") {
    std::vector<CallEvent> ref{{0.5, 1.0, Label::Pleasure}, {2.0, 2.6, Label::Contact}};

    SECTION("perfect prediction scores one on present classes") {
        const auto scores = frame_eval(ref, ref, 4.0);
        REQUIRE(scores.at(Label::Pleasure).f == 1.0);
        REQUIRE(scores.at(Label::Contact).f == 1.0);
        REQUIRE(scores.at(Label::Uncertain).tp == 0);
    }
    SECTION("half coverage halves recall but keeps precision") {
        std::vector<CallEvent> pred{{0.5, 0.75, Label::Pleasure}, {2.0, 2.3, Label::Contact}};
        const auto scores = frame_eval(ref, pred, 4.0);
        for (Label cls : {Label::Pleasure, Label::Contact}) {
            REQUIRE(scores.at(cls).precision == 1.0);
            REQUIRE(scores.at(cls).recall == Catch::Approx(0.5).margin(0.05));
        }
    }
    SECTION("empty prediction against events gives zero scores with defined counts") {
        const auto scores = frame_eval(ref, {}, 4.0);
        REQUIRE(scores.at(Label::Pleasure).precision == 0.0);
        REQUIRE(scores.at(Label::Pleasure).recall == 0.0);
        REQUIRE(scores.at(Label::Pleasure).fp == 0);
        REQUIRE(scores.at(Label::Pleasure).fn > 0);
    }
    SECTION("swapping ref and pred swaps precision and recall") {
        Rng rng(8);
        for (int trial = 0; trial < 30; ++trial) {
            const auto a = random_events(rng, 6);
            const auto b = random_events(rng, 6);
            const auto ab = frame_eval(a, b, 6.0);
            const auto ba = frame_eval(b, a, 6.0);
            for (Label cls : call_types()) {
                REQUIRE(ab.at(cls).precision == Catch::Approx(ba.at(cls).recall));
                REQUIRE(ab.at(cls).recall == Catch::Approx(ba.at(cls).precision));
            }
        }
    }
}

TEST_CASE("event evaluation applies the onset and duration rule", "[evaluation]") {
    std::vector<CallEvent> ref{{1.0, 2.0, Label::Contact}};

    SECTION("perfect prediction") {
        const auto scores = event_eval(ref, ref);
        REQUIRE(scores.at(Label::Contact).f == 1.0);
    }
    SECTION("90 ms onset error with 60% duration is a hit") {
        std::vector<CallEvent> pred{{1.09, 1.69, Label::Contact}};
        const auto scores = event_eval(ref, pred);
        REQUIRE(scores.at(Label::Contact).tp == 1);
    }
    SECTION("90 ms onset error with 40% duration is a miss both ways") {
        std::vector<CallEvent> pred{{1.09, 1.49, Label::Contact}};
        const auto scores = event_eval(ref, pred);
        REQUIRE(scores.at(Label::Contact).tp == 0);
        REQUIRE(scores.at(Label::Contact).fp == 1);
        REQUIRE(scores.at(Label::Contact).fn == 1);
    }
    SECTION("class labels must agree") {
        std::vector<CallEvent> pred{{1.0, 2.0, Label::Pleasure}};
        const auto scores = event_eval(ref, pred);
        REQUIRE(scores.at(Label::Contact).tp == 0);
        REQUIRE(scores.at(Label::Pleasure).fp == 1);
    }
    SECTION("overlap criterion accepts a long-but-overlapping prediction") {
        // 1.5 s prediction overlapping 0.55 s of the 1 s reference
        std::vector<CallEvent> pred{{0.95, 2.45, Label::Contact}};
        EventEvalParams p;
        p.criterion = DurCriterion::Overlap;
        const auto scores = event_eval(ref, pred, p);
        REQUIRE(scores.at(Label::Contact).tp == 1);
    }
    SECTION("lowering the duration ratio never loses matches") {
        Rng rng(91);
        for (int trial = 0; trial < 40; ++trial) {
            const auto a = random_events(rng, 7);
            const auto b = random_events(rng, 7);
            EventEvalParams strict, loose;
            strict.dur_ratio = 0.8;
            loose.dur_ratio = 0.3;
            const auto s = event_eval(a, b, strict);
            const auto l = event_eval(a, b, loose);
            for (Label cls : call_types()) REQUIRE(l.at(cls).tp >= s.at(cls).tp);
        }
    }
    SECTION("event matching agrees with brute force on small instances") {
        Rng rng(7);
        for (int trial = 0; trial < 100; ++trial) {
            const auto a = random_events(rng, 8, false);
            auto b = random_events(rng, 8, false);
            // perturb some onsets toward a's to create overlaps
            for (auto& e : b)
                if (!a.empty() && rng.uniform() < 0.5) {
                    const auto& src = a[rng.uniform_int(a.size())];
                    const double len = e.duration();
                    e.onset = src.onset + rng.uniform(-0.15, 0.15);
                    e.offset = e.onset + len;
                }
            EventEvalParams p;
            const auto got = event_eval(a, b, p, {Label::Contact});

            std::vector<std::vector<int>> adj(a.size());
            for (std::size_t i = 0; i < a.size(); ++i)
                for (std::size_t j = 0; j < b.size(); ++j)
                    if (std::abs(a[i].onset - b[j].onset) <= p.onset_tol &&
                        b[j].duration() >= p.dur_ratio * a[i].duration())
                        adj[i].push_back(static_cast<int>(j));
            REQUIRE(got.at(Label::Contact).tp ==
                    testutil::brute_force_matching(adj, static_cast<int>(b.size())));
        }
    }
}

TEST_CASE("match decision export lists both sides consistently", "[evaluation]") {
    std::vector<CallEvent> ref{{1.0, 2.0, Label::Contact}, {3.0, 3.5, Label::Pleasure}};
    std::vector<CallEvent> pred{{1.05, 1.9, Label::Contact}, {5.0, 5.4, Label::Contact}};
    const std::string csv = event_match_csv(ref, pred);

    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "side,onset,offset,label,matched,partner_onset");
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    // matched contact pair points at each other
    REQUIRE(rows[0].find("ref,1,2,contact,true,1.05") == 0);
    REQUIRE(rows[1].find("pleasure,false") != std::string::npos);
    REQUIRE(rows[2].find("pred,1.05,1.9,contact,true,1") == 0);
    REQUIRE(rows[3].find("false") != std::string::npos);

    // decision counts agree with the scorer
    const auto scores = event_eval(ref, pred);
    long matched_rows = 0;
    for (const auto& r : rows)
        if (r.rfind("ref,", 0) == 0 && r.find(",true,") != std::string::npos) ++matched_rows;
    long tp = 0;
    for (Label cls : call_types()) tp += scores.at(cls).tp;
    REQUIRE(matched_rows == tp);
}

TEST_CASE("macro f averages per-class f-measures", "[evaluation]") {
    REQUIRE(macro_f(std::vector<double>{1.0, 1.0, 1.0}) == 1.0);
    REQUIRE(macro_f(std::vector<double>{0.603, 0.953, 0.220}) == Catch::Approx(0.592).margin(0.0005));
    REQUIRE(macro_f(std::vector<double>{0.105, 0.795, 0.063}) == Catch::Approx(0.321).margin(0.0005));
}

TEST_CASE("segmentation evaluation is type-blind", "[evaluation]") {
    std::vector<CallEvent> ref{{0.5, 1.0, Label::Pleasure}, {2.0, 2.5, Label::Contact}};

    SECTION("segments equal to reference spans score one") {
        const std::vector<Segment> segs{{0.5, 1.0}, {2.0, 2.5}};
        const auto scores = segmentation_eval(ref, segs, 4.0);
        REQUIRE(scores.frame.f == 1.0);
        REQUIRE(scores.event.f == 1.0);
    }
    SECTION("empty against empty is the defined degenerate zero") {
        const auto scores = segmentation_eval({}, {}, 4.0);
        REQUIRE(scores.frame.f == 0.0);
        REQUIRE(scores.frame.tp == 0);
        REQUIRE(scores.event.f == 0.0);
    }
    SECTION("adding a correct segment never lowers f, a spurious one never lifts precision") {
        const std::vector<Segment> partial{{0.5, 1.0}};
        const std::vector<Segment> full{{0.5, 1.0}, {2.0, 2.5}};
        const std::vector<Segment> noisy{{0.5, 1.0}, {2.0, 2.5}, {3.2, 3.4}};
        const auto sp = segmentation_eval(ref, partial, 4.0);
        const auto sf = segmentation_eval(ref, full, 4.0);
        const auto sn = segmentation_eval(ref, noisy, 4.0);
        REQUIRE(sf.frame.f >= sp.frame.f);
        REQUIRE(sf.event.f >= sp.event.f);
        REQUIRE(sn.frame.precision <= sf.frame.precision);
        REQUIRE(sn.event.precision <= sf.event.precision);
    }
}
