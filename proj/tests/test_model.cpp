#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "shfl/dataset.hpp"
#include "shfl/model.hpp"

using namespace shfl;

namespace {

// Central finite differences of the cross-entropy loss, the independent
// oracle for the analytic SGD gradient.
std::vector<double> fd_gradient(const ParamVector& params, const Dataset& ds,
                                const std::vector<std::size_t>& idx, double h) {
    std::vector<double> grad(params.values.size());
    ParamVector probe = params;
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        probe.values[i] = params.values[i] + h;
        double up = cross_entropy_loss(probe, ds, idx);
        probe.values[i] = params.values[i] - h;
        double down = cross_entropy_loss(probe, ds, idx);
        probe.values[i] = params.values[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace

TEST_CASE("layout arithmetic and last layer range") {
    auto layout = make_mlp_layout(20, 16, 10);
    CHECK(layout_size(layout) == 20 * 16 + 16 + 16 * 10 + 10);  // 506
    auto p = init_model(layout, 3);
    CHECK(p.values.size() == 506);
    CHECK(p.last_layer_range.begin == 20 * 16 + 16);
    CHECK(p.last_layer_range.end == 506);
    CHECK(p.last_layer().size() == 16 * 10 + 10);

    auto q = init_model(layout, 3);
    CHECK(p.values == q.values);
    auto r = init_model(layout, 4);
    CHECK(p.values != r.values);

    CHECK_THROWS_AS(init_model({}, 0), ConfigError);
}

TEST_CASE("local_train with lr 0 is a no-op") {
    auto ds = gen_dataset(3, 4, 60, 5.0, 9);
    auto params = init_model(make_mlp_layout(4, 5, 3), 2);
    ClientData cd{0, ds.indices_of(Split::Train)};
    auto res = local_train(params, ds, cd, 0.0, 2, 8, 5);
    REQUIRE(res.has_value());
    CHECK(res->new_params.values == params.values);
    for (double u : res->update.values) CHECK(u == 0.0);
}

TEST_CASE("local_train on empty data signals no contribution") {
    auto ds = gen_dataset(3, 4, 60, 5.0, 9);
    auto params = init_model(make_mlp_layout(4, 5, 3), 2);
    ClientData empty{0, {}};
    CHECK_FALSE(local_train(params, ds, empty, 0.1, 1, 8, 5).has_value());
}

TEST_CASE("single SGD step matches central finite differences") {
    auto ds = gen_dataset(3, 4, 60, 5.0, 17);
    // toy model with one hidden unit
    auto params = init_model(make_mlp_layout(4, 1, 3), 21);
    std::vector<std::size_t> one = {ds.indices_of(Split::Train)[0]};
    double lr = 0.05;
    auto res = local_train(params, ds, {0, one}, lr, 1, 1, 5);
    REQUIRE(res.has_value());

    auto grad = fd_gradient(params, ds, one, 1e-5);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        double expect = -lr * grad[i];
        num += (res->update.values[i] - expect) * (res->update.values[i] - expect);
        den += expect * expect;
    }
    REQUIRE(den > 0);
    CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("single SGD step matches finite differences on a wider model") {
    auto ds = gen_dataset(4, 6, 80, 4.0, 3);
    auto params = init_model(make_mlp_layout(6, 5, 4), 8);
    std::vector<std::size_t> one = {ds.indices_of(Split::Train)[2]};
    double lr = 0.1;
    auto res = local_train(params, ds, {0, one}, lr, 1, 1, 6);
    REQUIRE(res.has_value());
    auto grad = fd_gradient(params, ds, one, 1e-5);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        double expect = -lr * grad[i];
        num += (res->update.values[i] - expect) * (res->update.values[i] - expect);
        den += expect * expect;
    }
    CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("training on separable data improves own accuracy") {
    auto ds = gen_dataset(2, 2, 100, 10.0, 7);
    auto params = init_model(make_mlp_layout(2, 6, 2), 15);
    ClientData cd{0, ds.indices_of(Split::Train)};
    auto res = local_train(params, ds, cd, 0.1, 20, 16, 33);
    REQUIRE(res.has_value());

    auto acc_on = [&](const ParamVector& p) {
        std::size_t ok = 0;
        for (auto i : cd.indices)
            if (predict_class(p, ds, i) == ds.labels[i]) ++ok;
        return double(ok) / cd.indices.size();
    };
    CHECK(acc_on(res->new_params) > acc_on(params));
}

TEST_CASE("local_train deterministic in seed") {
    auto ds = gen_dataset(3, 4, 90, 4.0, 2);
    auto params = init_model(make_mlp_layout(4, 5, 3), 2);
    ClientData cd{0, ds.indices_of(Split::Train)};
    auto a = local_train(params, ds, cd, 0.1, 3, 8, 77);
    auto b = local_train(params, ds, cd, 0.1, 3, 8, 77);
    auto c = local_train(params, ds, cd, 0.1, 3, 8, 78);
    CHECK(a->new_params.values == b->new_params.values);
    CHECK(a->new_params.values != c->new_params.values);
}

TEST_CASE("evaluate on constant predictor and perfect model") {
    // Hand-built dataset: 2 balanced classes, separable on feature 0.
    Dataset ds;
    ds.n_features = 1;
    ds.n_classes = 2;
    for (int i = 0; i < 20; ++i) {
        ds.features.push_back(i < 10 ? -1.0 : 1.0);
        ds.labels.push_back(i < 10 ? 0 : 1);
        ds.split.push_back(Split::Test);
    }

    auto layout = make_mlp_layout(1, 1, 2);
    ParamVector constant;
    constant.layout = layout;
    constant.values.assign(layout_size(layout), 0.0);
    constant.last_layer_range = {2, 6};
    constant.values[4] = 1.0;  // bias for class 0
    CHECK(evaluate(constant, ds, Split::Test) == 0.5);

    ParamVector perfect = constant;
    perfect.values[4] = 0.0;
    perfect.values[0] = 5.0;   // hidden weight
    perfect.values[2] = -3.0;  // class 0 weight on hidden
    perfect.values[3] = 3.0;   // class 1 weight on hidden
    CHECK(evaluate(perfect, ds, Split::Test) == 1.0);

    CHECK_THROWS_AS(evaluate(perfect, ds, Split::Train), ConfigError);
}

TEST_CASE("evaluate invariant to sample order") {
    auto ds = gen_dataset(3, 4, 90, 4.0, 5);
    auto params = init_model(make_mlp_layout(4, 5, 3), 2);
    double before = evaluate(params, ds, Split::Test);

    // permute the rows of the dataset within the test split
    Dataset shuffled = ds;
    auto test_idx = ds.indices_of(Split::Test);
    std::vector<std::size_t> rotated = test_idx;
    std::rotate(rotated.begin(), rotated.begin() + 3, rotated.end());
    for (std::size_t k = 0; k < test_idx.size(); ++k) {
        auto src = test_idx[k];
        auto dst = rotated[k];
        for (std::size_t j = 0; j < ds.n_features; ++j)
            shuffled.features[dst * ds.n_features + j] = ds.features[src * ds.n_features + j];
        shuffled.labels[dst] = ds.labels[src];
    }
    CHECK(evaluate(params, shuffled, Split::Test) == before);
}

TEST_CASE("fedavg arithmetic") {
    auto layout = make_mlp_layout(1, 1, 2);
    auto mk = [&](double v) {
        ParamVector p;
        p.layout = layout;
        p.values.assign(layout_size(layout), v);
        return p;
    };
    auto same = fedavg({{mk(3.0), 1.0}, {mk(3.0), 2.0}, {mk(3.0), 0.5}});
    for (double v : same.values) CHECK(v == Catch::Approx(3.0));

    auto mid = fedavg({{mk(0.0), 1.0}, {mk(2.0), 1.0}});
    for (double v : mid.values) CHECK(v == Catch::Approx(1.0));

    ParamVector a = mk(0.0), b = mk(0.0);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        a.values[i] = static_cast<double>(i);
        b.values[i] = 10.0 - static_cast<double>(i);
    }
    auto w = fedavg({{a, 1.0}, {b, 3.0}});
    for (std::size_t i = 0; i < w.values.size(); ++i)
        CHECK(w.values[i] == Catch::Approx(0.25 * a.values[i] + 0.75 * b.values[i]));
}

TEST_CASE("fedavg stays in the entrywise envelope") {
    auto layout = make_mlp_layout(2, 2, 2);
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<ParamVector, double>> contribs;
        std::size_t n = layout_size(layout);
        for (int c = 0; c < 4; ++c) {
            ParamVector p;
            p.layout = layout;
            p.values.resize(n);
            for (auto& v : p.values) v = rng.normal(0, 2);
            contribs.emplace_back(std::move(p), rng.uniform(0.1, 5.0));
        }
        auto avg = fedavg(contribs);
        for (std::size_t i = 0; i < n; ++i) {
            double lo = contribs[0].first.values[i], hi = lo;
            for (const auto& [p, _] : contribs) {
                lo = std::min(lo, p.values[i]);
                hi = std::max(hi, p.values[i]);
            }
            CHECK(avg.values[i] >= lo - 1e-12);
            CHECK(avg.values[i] <= hi + 1e-12);
        }
    }
}

TEST_CASE("fedavg contract violations") {
    auto layout = make_mlp_layout(1, 1, 2);
    ParamVector p;
    p.layout = layout;
    p.values.assign(layout_size(layout), 1.0);
    ParamVector shorter = p;
    shorter.values.pop_back();
    CHECK_THROWS_AS(fedavg({}), std::invalid_argument);
    CHECK_THROWS_AS(fedavg({{p, 1.0}, {shorter, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(fedavg({{p, 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(fedavg({{p, -1.0}}), std::invalid_argument);
}
