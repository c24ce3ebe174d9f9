#include <catch2/catch_amalgamated.hpp>

#include "shfl/clustering.hpp"

using namespace shfl;

namespace {

// Builds states/adjacency/scores for vehicles pinned at given positions.
struct Fixture {
    std::vector<VehicleState> states;
    std::map<int, VehicleState> by_id;
    Adjacency adj;
    std::map<int, SuitabilityScore> scores;

    Fixture(const std::vector<double>& positions, const std::vector<double>& combined,
            double range = 100.0, double track = 1000.0) {
        ChannelModel ch;
        ch.comm_range = range;
        for (std::size_t i = 0; i < positions.size(); ++i) {
            VehicleState v;
            v.id = static_cast<int>(i);
            v.position = positions[i];
            v.speed = 20.0;
            states.push_back(v);
            by_id[v.id] = v;
        }
        adj = neighbors(states, ch, track);
        for (std::size_t i = 0; i < positions.size(); ++i) {
            SuitabilityScore s;
            s.vehicle = static_cast<int>(i);
            s.combined = combined[i];
            scores[s.vehicle] = s;
        }
    }
};

}  // namespace

TEST_CASE("suitability endpoints and mixing") {
    std::map<int, VehicleState> by_id;
    for (int i = 0; i < 3; ++i) {
        VehicleState v;
        v.id = i;
        v.speed = 20.0;
        by_id[i] = v;
    }
    std::map<int, HelloPacket> hellos;
    for (int i = 0; i < 3; ++i) {
        HelloPacket h;
        h.sender = i;
        h.model_similarity = 0.6;
        hellos[i] = h;
    }

    auto same_speed = suitability(0, {1, 2}, by_id, hellos, 0.5);
    CHECK(same_speed.speed_term == Catch::Approx(1.0));
    CHECK(same_speed.similarity_term == Catch::Approx(0.6));

    by_id[1].speed = 45.0;  // |delta| = 25
    by_id[2].speed = 45.0;
    auto spread = suitability(0, {1, 2}, by_id, hellos, 0.5);
    CHECK(spread.speed_term == Catch::Approx(0.0));

    auto isolated = suitability(0, {}, by_id, hellos, 0.5);
    CHECK(isolated.speed_term == 1.0);
    CHECK(isolated.similarity_term == 0.0);

    // alpha mix: 0.5 * 0.8 + 0.5 * 0.6 = 0.7
    SuitabilityScore s;
    by_id[1].speed = 25.0;  // avg rel = 5 -> speed term 0.8
    by_id[2].speed = 25.0;
    auto mixed = suitability(0, {1, 2}, by_id, hellos, 0.5);
    CHECK(mixed.speed_term == Catch::Approx(0.8));
    CHECK(mixed.combined == Catch::Approx(0.7));
}

TEST_CASE("greedy election: highest score heads one full cluster") {
    Fixture f({100, 110, 120}, {0.9, 0.5, 0.2});
    auto a = form_clusters(f.adj, f.scores);
    CHECK(a.role_of(0) == ClusterRole::Head);
    CHECK(a.role_of(1) == ClusterRole::Member);
    CHECK(a.role_of(2) == ClusterRole::Member);
    CHECK(a.head_of.at(1) == 0);
    CHECK(a.head_of.at(2) == 0);
    CHECK(assignment_consistent(a, f.adj));
}

TEST_CASE("empty adjacency yields singleton CHs") {
    Fixture f({0, 300, 600}, {0.5, 0.5, 0.5});
    auto a = form_clusters(f.adj, f.scores);
    for (int i = 0; i < 3; ++i) CHECK(a.role_of(i) == ClusterRole::Head);
    CHECK(a.head_of.empty());
}

TEST_CASE("score ties elect the lower vehicle id") {
    Fixture f({100, 110, 120}, {0.7, 0.7, 0.1});
    auto a = form_clusters(f.adj, f.scores);
    CHECK(a.role_of(0) == ClusterRole::Head);
    CHECK(a.role_of(1) == ClusterRole::Member);
}

TEST_CASE("maintenance without topology change produces no churn") {
    Fixture f({100, 110, 120}, {0.9, 0.5, 0.2});
    auto a = form_clusters(f.adj, f.scores);
    auto [next, churn] = maintain_clusters(a, f.adj, f.scores, 2);
    CHECK(churn.empty());
    CHECK(next.role_of(0) == ClusterRole::Head);
    CHECK(next.head_of.at(1) == 0);
}

TEST_CASE("CM that drifts out of range rehomes to an in-range CH") {
    // two clusters: CH 0 with member 1, CH 2 with member 3
    Fixture before({100, 150, 400, 450}, {0.9, 0.1, 0.8, 0.1});
    auto a = form_clusters(before.adj, before.scores);
    REQUIRE(a.role_of(0) == ClusterRole::Head);
    REQUIRE(a.role_of(2) == ClusterRole::Head);
    REQUIRE(a.head_of.at(1) == 0);

    // vehicle 1 drifts next to CH 2, far from CH 0
    Fixture after({100, 430, 400, 450}, {0.9, 0.1, 0.8, 0.1});
    auto [next, churn] = maintain_clusters(a, after.adj, after.scores, 5);
    CHECK(next.role_of(1) == ClusterRole::Member);
    CHECK(next.head_of.at(1) == 2);
    REQUIRE(churn.size() == 1);
    CHECK(churn[0].vehicle == 1);
    CHECK(churn[0].round == 5);
    CHECK(churn[0].old_head == 0);
    CHECK(churn[0].new_head == 2);
    CHECK(assignment_consistent(next, after.adj));
}

TEST_CASE("CH that loses all members remains a singleton CH") {
    Fixture before({100, 150}, {0.9, 0.1});
    auto a = form_clusters(before.adj, before.scores);
    REQUIRE(a.head_of.at(1) == 0);

    Fixture after({100, 500}, {0.9, 0.1});
    auto [next, churn] = maintain_clusters(a, after.adj, after.scores, 3);
    CHECK(next.role_of(0) == ClusterRole::Head);
    CHECK(next.members.at(0).empty());
    CHECK(next.role_of(1) == ClusterRole::Head);  // isolated, crowns itself
}

TEST_CASE("stale memberless CH dissolves into an in-range cluster") {
    // round 1: everyone isolated -> three singleton CHs
    Fixture apart({0, 300, 600}, {0.9, 0.5, 0.2});
    auto a = form_clusters(apart.adj, apart.scores);

    // round 2: still apart (stale singletons), then vehicle 2 meets CH 0
    auto [b, churn_b] = maintain_clusters(a, apart.adj, apart.scores, 2);
    CHECK(churn_b.empty());

    Fixture together({0, 300, 50}, {0.9, 0.5, 0.2});
    auto [c, churn_c] = maintain_clusters(b, together.adj, together.scores, 3);
    CHECK(c.role_of(2) == ClusterRole::Member);
    CHECK(c.head_of.at(2) == 0);
    CHECK(assignment_consistent(c, together.adj));
}

TEST_CASE("blocked vehicles keep their role instead of dissolving") {
    Fixture apart({0, 300, 600}, {0.9, 0.5, 0.2});
    auto a = form_clusters(apart.adj, apart.scores);
    auto [b, _] = maintain_clusters(a, apart.adj, apart.scores, 2);

    Fixture together({0, 300, 50}, {0.9, 0.5, 0.2});
    std::set<int> blocked{2};
    auto [c, churn] = maintain_clusters(b, together.adj, together.scores, 3, &blocked);
    CHECK(c.role_of(2) == ClusterRole::Head);  // held in place
}

TEST_CASE("static topology reaches a one-round fixed point") {
    for (int trial = 0; trial < 8; ++trial) {
        Rng rng(50 + trial);
        ChannelModel ch;
        ch.comm_range = 100.0;
        auto vs = spawn_arrivals(12.0, 1, 0, 30, 1000.0, rng);
        if (vs.empty()) continue;
        std::map<int, VehicleState> by_id;
        for (auto& v : vs) by_id[v.id] = v;
        auto adj = neighbors(vs, ch, 1000.0);
        std::map<int, SuitabilityScore> scores;
        for (auto& v : vs) {
            SuitabilityScore s;
            s.vehicle = v.id;
            s.combined = rng.uniform(0.0, 1.0);
            scores[v.id] = s;
        }
        auto a = form_clusters(adj, scores);
        CHECK(assignment_consistent(a, adj));
        auto [b, churn1] = maintain_clusters(a, adj, scores, 2);
        CHECK(churn1.empty());
        auto [c, churn2] = maintain_clusters(b, adj, scores, 3);
        CHECK(churn2.empty());
        CHECK(assignment_consistent(c, adj));
    }
}
