#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace prototsnet {

// Accuracy matrix: rows are datasets, columns are methods; nullopt = missing.
struct ResultsMatrix {
    std::vector<std::string> methods;
    std::vector<std::string> datasets;
    std::vector<std::vector<std::optional<double>>> accuracy;
};

// First column is the dataset name, one column per method, empty cell or
// "N/A" marks a missing result.
ResultsMatrix parse_results_csv(const std::string& text);
ResultsMatrix load_results_csv(const std::string& path);

// Average: tied methods share the mean of the positions they occupy.
// Min: tied methods all take the best position they occupy.
// Missing entries on a dataset always share the lowest positions, using the
// same policy.
enum class TiePolicy { Average, Min };

struct RankTable {
    std::vector<std::string> methods;
    std::vector<std::string> datasets;
    std::vector<std::vector<std::optional<double>>> accuracy;
    std::vector<std::vector<double>> ranks;  // [dataset][method], 1 = best
    std::vector<double> avg_rank;
    std::vector<int> wins_ties;  // datasets where the method attains the best accuracy
};

RankTable average_ranks(const ResultsMatrix& results, TiePolicy policy = TiePolicy::Average);

// Two-tailed Nemenyi critical values q_alpha (studentized range / sqrt 2)
// for k = 2..10 and alpha in {0.05, 0.10}.
double nemenyi_q(int k, double alpha);

struct FriedmanResult {
    int k = 0;
    int n = 0;
    double alpha = 0.05;
    double chi2_f = 0.0;
    double f_f = 0.0;  // Iman-Davenport
    double q_alpha = 0.0;
    double cd = 0.0;
    std::vector<std::pair<int, int>> significant;  // method index pairs (a < b)
};

FriedmanResult friedman_nemenyi(const RankTable& table, double alpha);

std::string format_rank_report(const RankTable& table, const FriedmanResult* friedman = nullptr);

}  // namespace prototsnet
