#include <catch2/catch_amalgamated.hpp>

#include "peep/config.hpp"

using namespace peep;

TEST_CASE("config defaults validate and key lookups are typed", "[config]") {
    PipelineConfig cfg;
    cfg.validate();
    REQUIRE(cfg.integer("scattering.q1") == 16);
    REQUIRE(cfg.integer("scattering.time_avg") == 16384);
    REQUIRE(cfg.real("detection.silence_db") == -30.0);
    REQUIRE(cfg.boolean("features.include_s1"));
    REQUIRE(cfg.real_list("classifier.c_grid") == std::vector<double>{1.0, 10.0, 100.0});
    REQUIRE(cfg.real_list("classifier.gamma_grid") == std::vector<double>{1e-4, 1e-3, 1e-2});
}

TEST_CASE("config text parsing accepts comments and rejects junk", "[config]") {
    PipelineConfig cfg;
    cfg.apply_text("# a comment\nseed = 7\nscattering.q1 = 8  # trailing\n");
    REQUIRE(cfg.integer("seed") == 7);
    REQUIRE(cfg.integer("scattering.q1") == 8);

    REQUIRE_THROWS_AS(cfg.apply_text("no_equals_here\n"), ValidationError);
    REQUIRE_THROWS_AS(cfg.set("not.a.key", "1"), ValidationError);
    REQUIRE_THROWS_WITH(cfg.set("scattering.qq1", "1"),
                        Catch::Matchers::ContainsSubstring("unknown config key"));
}

TEST_CASE("config validation catches module precondition violations", "[config]") {
    auto broken = [](const std::string& key, const std::string& value) {
        PipelineConfig cfg;
        cfg.set(key, value);
        return cfg;
    };
    REQUIRE_THROWS_AS(broken("scattering.time_avg", "10000").validate(), ValidationError);
    REQUIRE_THROWS_AS(broken("scattering.oversampling", "40").validate(), ValidationError);
    REQUIRE_THROWS_AS(broken("features.context", "4").validate(), ValidationError);
    REQUIRE_THROWS_AS(broken("detection.max_width", "2").validate(), ValidationError);
    REQUIRE_THROWS_AS(broken("detection.hop", "4096").validate(), ValidationError);
    REQUIRE_THROWS_AS(broken("classifier.c_grid", "").validate(), ValidationError);
    REQUIRE_THROWS_AS(broken("eval.event_dur_criterion", "sideways").validate(), ValidationError);
    REQUIRE_THROWS_AS(broken("config_version", "2").validate(), ValidationError);
    REQUIRE_THROWS_AS(broken("scattering.mod_lo", "100").validate(), ValidationError);
}

TEST_CASE("canonical text and hash are stable and order-insensitive", "[config]") {
    PipelineConfig a, b;
    a.apply_text("seed = 9\nscattering.q1 = 8\n");
    b.apply_text("scattering.q1 = 8\nseed = 9\n");
    REQUIRE(a.canonical_text() == b.canonical_text());
    REQUIRE(a.hash() == b.hash());

    PipelineConfig c;
    c.apply_text("seed = 10\n");
    REQUIRE(a.hash() != c.hash());
    REQUIRE(a.hash().size() == 16);
}

TEST_CASE("help text lists every key with its default", "[config]") {
    const std::string help = PipelineConfig::help_text();
    for (const auto& e : config_schema()) {
        REQUIRE(help.find(e.key) != std::string::npos);
        REQUIRE(help.find(e.description) != std::string::npos);
    }
}
