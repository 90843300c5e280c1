#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cllmrec/eval.hpp"
#include "doctest.h"

using namespace cllmrec;

namespace {

// Independent brute-force reference, written directly from the metric
// definitions without reusing any module code.
struct Reference {
    static int rank(const std::vector<int>& ranked, int target) {
        for (size_t i = 0; i < ranked.size(); ++i)
            if (ranked[i] == target) return static_cast<int>(i + 1);
        return 0;
    }
    static double hr(const std::vector<int>& ranked, int target, int K) {
        int r = rank(ranked, target);
        return r != 0 && r <= K ? 1.0 : 0.0;
    }
    static double ndcg(const std::vector<int>& ranked, int target, int K) {
        int r = rank(ranked, target);
        return r != 0 && r <= K ? std::log(2.0) / std::log(r + 1.0) : 0.0;
    }
    static double mrr(const std::vector<int>& ranked, int target, int K) {
        int r = rank(ranked, target);
        return r != 0 && r <= K ? 1.0 / r : 0.0;
    }
};

}  // namespace

TEST_CASE("hand oracles for the three metrics") {
    RankingOutcome rank1{7, {7, 1, 2}};
    CHECK(hr_at_k(rank1, 1) == 1.0);
    CHECK(ndcg_at_k(rank1, 1) == 1.0);
    CHECK(mrr_at_k(rank1, 1) == 1.0);

    RankingOutcome rank2{7, {1, 7, 2}};
    CHECK(hr_at_k(rank2, 1) == 0.0);
    CHECK(ndcg_at_k(rank2, 5) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
    CHECK(ndcg_at_k(rank2, 5) == doctest::Approx(0.6309).epsilon(1e-4));

    RankingOutcome rank3{7, {1, 2, 7, 3, 4}};
    CHECK(mrr_at_k(rank3, 5) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    RankingOutcome absent{9, {1, 2, 3}};
    CHECK(hr_at_k(absent, 5) == 0.0);
    CHECK(ndcg_at_k(absent, 5) == 0.0);
    CHECK(mrr_at_k(absent, 5) == 0.0);
    CHECK(rank_of_target(absent) == 0);

    RankingOutcome rank6{7, {1, 2, 3, 4, 5, 7}};
    CHECK(ndcg_at_k(rank6, 5) == 0.0);
}

TEST_CASE("metrics agree with brute force on 1000 random permutations") {
    std::mt19937_64 rng(123);
    std::vector<int> ids(20);
    std::iota(ids.begin(), ids.end(), 0);
    for (int it = 0; it < 1000; ++it) {
        std::shuffle(ids.begin(), ids.end(), rng);
        // target is sometimes absent from the list
        int target = static_cast<int>(rng() % 22);
        RankingOutcome outcome{target, ids};
        for (int K : {1, 3, 5, 10, 20}) {
            CHECK(hr_at_k(outcome, K) == Reference::hr(ids, target, K));
            CHECK(ndcg_at_k(outcome, K) == doctest::Approx(Reference::ndcg(ids, target, K)).epsilon(1e-12));
            CHECK(mrr_at_k(outcome, K) == Reference::mrr(ids, target, K));
        }
    }
}

TEST_CASE("structural metric properties") {
    std::mt19937_64 rng(9);
    std::vector<int> ids(15);
    std::iota(ids.begin(), ids.end(), 0);
    for (int it = 0; it < 200; ++it) {
        std::shuffle(ids.begin(), ids.end(), rng);
        RankingOutcome o{static_cast<int>(rng() % 15), ids};
        // HR monotone non-decreasing in K
        for (int K = 1; K < 15; ++K) CHECK(hr_at_k(o, K) <= hr_at_k(o, K + 1));
        // NDCG@1 = HR@1; MRR@K <= HR@K
        CHECK(ndcg_at_k(o, 1) == hr_at_k(o, 1));
        for (int K : {1, 5, 15}) {
            CHECK(mrr_at_k(o, K) <= hr_at_k(o, K));
            CHECK(hr_at_k(o, K) >= 0.0);
            CHECK(hr_at_k(o, K) <= 1.0);
            CHECK(ndcg_at_k(o, K) <= 1.0);
        }
    }
}

TEST_CASE("accumulator averages over outcomes") {
    MetricAccumulator acc;
    acc.add({1, {1, 2}}, {1, 5});  // rank 1
    acc.add({2, {1, 2}}, {1, 5});  // rank 2
    auto m = acc.means();
    CHECK(m.at("HR@1") == 0.5);
    CHECK(m.at("HR@5") == 1.0);
    CHECK(m.at("MRR@5") == doctest::Approx(0.75));
    CHECK(m.at("NDCG@5") == doctest::Approx((1.0 + 1.0 / std::log2(3.0)) / 2));
    CHECK(MetricAccumulator{}.means().empty());
}

TEST_CASE("report aggregates per-seed rows and serializes csv") {
    MetricReport report;
    report.add(1, "pref-coarse", {{"HR@1", 0.4}, {"NDCG@5", 0.6}});
    report.add(2, "pref-coarse", {{"HR@1", 0.6}, {"NDCG@5", 0.8}});
    report.add(1, "kd", {{"HR@1", 1.0}});
    auto mean = report.mean_over_seeds("pref-coarse");
    CHECK(mean.at("HR@1") == doctest::Approx(0.5));
    CHECK(mean.at("NDCG@5") == doctest::Approx(0.7));
    CHECK(report.mean_over_seeds("kd").at("HR@1") == 1.0);

    std::string csv = report.to_csv();
    CHECK(csv.find("seed,mode,metric,K,value") == 0);
    CHECK(csv.find("1,pref-coarse,HR,1,0.4") != std::string::npos);
    CHECK(csv.find("2,pref-coarse,NDCG,5,0.8") != std::string::npos);

    std::string table = report.summary_table();
    CHECK(table.find("kd:") != std::string::npos);
    CHECK(table.find("HR@1 = 1.0000") != std::string::npos);
}
