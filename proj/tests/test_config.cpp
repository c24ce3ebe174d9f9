#include <catch2/catch_amalgamated.hpp>

#include "shfl/config.hpp"

using namespace shfl;

TEST_CASE("defaults follow the consistently applied scenario") {
    ExperimentConfig c;
    CHECK(c.mobility.n_vehicles == 25);
    CHECK(c.mobility.comm_range == 100.0);
    CHECK(c.attack.attacker_fraction == 0.2);
    CHECK(c.security.selected_client_percentage == 0.75);
    CHECK(c.security.unblock_time == 5);
    CHECK(c.security.similarity_threshold == 0.5);
    CHECK(c.security.accuracy_weight == 1.0);
    CHECK(c.security.frequency_weight == 1.0);
    CHECK(c.security.anomaly_weight == 1.0);
    CHECK(c.attack.policy.start_round == 10);
    CHECK(c.epsilons == std::vector<double>{0.1, 0.01});
    CHECK_NOTHROW(validate(c));
}

TEST_CASE("ini round trip preserves every field") {
    ExperimentConfig c;
    c.topology = TopologyArm::NoClustering;
    c.defense = DefenseArm::CosDefense;
    c.max_rounds = 42;
    c.master_seed = 1234;
    c.epsilons = {0.2, 0.02};
    c.attack.enabled = true;
    c.attack.policy.kind = AttackPolicy::Kind::SingleRound;
    c.attack.policy.noise_mean = 1.5;
    c.attack.policy.noise_var = 0.25;
    c.training.lr = 0.07;
    c.mobility.track_length = 2500;
    c.channel.drop_prob = 0.11;
    c.grid_means = {0, 2};
    auto text = config_to_ini(c);
    auto back = parse_config_text(text);
    CHECK(config_to_ini(back) == text);
    CHECK(back.master_seed == 1234);
    CHECK(back.defense == DefenseArm::CosDefense);
    CHECK(back.attack.policy.kind == AttackPolicy::Kind::SingleRound);
    CHECK(back.grid_means == std::vector<double>{0, 2});
}

TEST_CASE("parse errors name the offending field") {
    try {
        parse_config_text("[training]\nlr = banana\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "training.lr");
    }

    try {
        parse_config_text("[training]\nwarp_speed = 9\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "training.warp_speed");
    }

    CHECK_THROWS_AS(parse_config_text("lr = 0.1\n"), ConfigError);    // no section
    CHECK_THROWS_AS(parse_config_text("[training\nlr=1\n"), ConfigError);
}

TEST_CASE("validation rejects inconsistent configurations") {
    ExperimentConfig c;
    c.topology = TopologyArm::Cbhfl;
    c.defense = DefenseArm::CosDefense;
    CHECK_THROWS_AS(validate(c), ConfigError);

    ExperimentConfig d;
    d.max_rounds = 2;
    CHECK_THROWS_AS(validate(d), ConfigError);

    ExperimentConfig e;
    e.epsilons = {0.1, -0.5};
    CHECK_THROWS_AS(validate(e), ConfigError);

    ExperimentConfig f;
    f.security.selected_client_percentage = 0.0;
    CHECK_THROWS_AS(validate(f), ConfigError);

    ExperimentConfig g;
    g.security.accuracy_weight = 0;
    g.security.frequency_weight = 0;
    g.security.anomaly_weight = 0;
    CHECK_THROWS_AS(validate(g), ConfigError);

    ExperimentConfig h;
    h.channel.drop_prob = 1.0;
    CHECK_THROWS_AS(validate(h), ConfigError);
}

TEST_CASE("comments and spacing are tolerated") {
    auto c = parse_config_text(
        "# full line comment\n"
        "[experiment]\n"
        "  max_rounds = 55   # trailing comment\n"
        "\n"
        "[security]\n"
        "unblock_time = 3\n");
    CHECK(c.max_rounds == 55);
    CHECK(c.security.unblock_time == 3);
}
