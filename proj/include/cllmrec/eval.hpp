#pragma once

#include <map>
#include <string>
#include <vector>

namespace cllmrec {

struct RankingOutcome {
    int target = -1;
    std::vector<int> ranked;  // unique ids, best first
};

// rank of target (1-based), or 0 when absent
int rank_of_target(const RankingOutcome& outcome);

double hr_at_k(const RankingOutcome& outcome, int K);
// Single-relevant-item form: 1/log2(rank+1) when rank <= K, ideal DCG = 1.
double ndcg_at_k(const RankingOutcome& outcome, int K);
double mrr_at_k(const RankingOutcome& outcome, int K);

struct MetricAccumulator {
    std::map<std::string, double> sums;
    int n = 0;

    void add(const RankingOutcome& outcome, const std::vector<int>& ks);
    std::map<std::string, double> means() const;
};

struct MetricReport {
    // rows: (seed, mode, metric, K, value)
    struct Row {
        std::uint64_t seed;
        std::string mode;
        std::string metric;
        int k;
        double value;
    };
    std::vector<Row> rows;

    void add(std::uint64_t seed, const std::string& mode, const std::map<std::string, double>& means);
    std::map<std::string, double> mean_over_seeds(const std::string& mode) const;
    std::string to_csv() const;
    std::string summary_table() const;
};

}  // namespace cllmrec
