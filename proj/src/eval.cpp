#include "cllmrec/eval.hpp"

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <set>
#include <sstream>

namespace cllmrec {

int rank_of_target(const RankingOutcome& outcome) {
    for (size_t i = 0; i < outcome.ranked.size(); ++i) {
        if (outcome.ranked[i] == outcome.target) return static_cast<int>(i) + 1;
    }
    return 0;
}

double hr_at_k(const RankingOutcome& outcome, int K) {
    int r = rank_of_target(outcome);
    return (r >= 1 && r <= K) ? 1.0 : 0.0;
}

double ndcg_at_k(const RankingOutcome& outcome, int K) {
    int r = rank_of_target(outcome);
    if (r < 1 || r > K) return 0.0;
    return 1.0 / std::log2(static_cast<double>(r) + 1.0);
}

double mrr_at_k(const RankingOutcome& outcome, int K) {
    int r = rank_of_target(outcome);
    if (r < 1 || r > K) return 0.0;
    return 1.0 / static_cast<double>(r);
}

void MetricAccumulator::add(const RankingOutcome& outcome, const std::vector<int>& ks) {
    for (int k : ks) {
        sums["HR@" + std::to_string(k)] += hr_at_k(outcome, k);
        sums["NDCG@" + std::to_string(k)] += ndcg_at_k(outcome, k);
        sums["MRR@" + std::to_string(k)] += mrr_at_k(outcome, k);
    }
    ++n;
}

std::map<std::string, double> MetricAccumulator::means() const {
    std::map<std::string, double> out;
    for (const auto& [name, sum] : sums) out[name] = n ? sum / n : 0.0;
    return out;
}

void MetricReport::add(std::uint64_t seed, const std::string& mode,
                       const std::map<std::string, double>& means) {
    for (const auto& [name, value] : means) {
        auto at = name.find('@');
        rows.push_back({seed, mode, name.substr(0, at), std::stoi(name.substr(at + 1)), value});
    }
}

std::map<std::string, double> MetricReport::mean_over_seeds(const std::string& mode) const {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& r : rows) {
        if (r.mode != mode) continue;
        auto& [sum, count] = acc[r.metric + "@" + std::to_string(r.k)];
        sum += r.value;
        ++count;
    }
    std::map<std::string, double> out;
    for (const auto& [name, sc] : acc) out[name] = sc.first / sc.second;
    return out;
}

std::string MetricReport::to_csv() const {
    std::ostringstream out;
    out << "seed,mode,metric,K,value\n";
    out << std::setprecision(10);
    for (const auto& r : rows)
        out << r.seed << "," << r.mode << "," << r.metric << "," << r.k << "," << r.value << "\n";
    return out.str();
}

std::string MetricReport::summary_table() const {
    std::set<std::string> modes;
    for (const auto& r : rows) modes.insert(r.mode);
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    for (const auto& mode : modes) {
        out << mode << ":\n";
        for (const auto& [name, value] : mean_over_seeds(mode)) {
            out << "  " << name << " = " << value << "\n";
        }
    }
    return out.str();
}

}  // namespace cllmrec
