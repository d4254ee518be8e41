#include "prototsnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace prototsnet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

// Ranks for positions [first, first + count) under the policy.
double shared_rank(int first, int count, TiePolicy policy) {
    return policy == TiePolicy::Average ? first + (count - 1) / 2.0 : static_cast<double>(first);
}

}  // namespace

ResultsMatrix parse_results_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    ResultsMatrix r;
    bool header = true;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv(line);
        if (header) {
            if (cells.size() < 3) throw std::invalid_argument("results CSV needs a dataset column and at least two methods");
            r.methods.assign(cells.begin() + 1, cells.end());
            header = false;
            continue;
        }
        if (cells.size() != r.methods.size() + 1) {
            throw std::invalid_argument("results CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                        " cells, expected " + std::to_string(r.methods.size() + 1));
        }
        r.datasets.push_back(cells[0]);
        std::vector<std::optional<double>> row;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const std::string& v = cells[c];
            if (v.empty() || v == "N/A" || v == "NA") {
                row.emplace_back();
                continue;
            }
            std::size_t used = 0;
            double x = 0.0;
            try {
                x = std::stod(v, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != v.size() || !std::isfinite(x)) {
                throw std::invalid_argument("results CSV line " + std::to_string(lineno) + ": bad value '" + v + "'");
            }
            row.emplace_back(x);
        }
        r.accuracy.push_back(std::move(row));
    }
    if (header) throw std::invalid_argument("results CSV is empty");
    return r;
}

ResultsMatrix load_results_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_results_csv(ss.str());
}

RankTable average_ranks(const ResultsMatrix& results, TiePolicy policy) {
    const int k = static_cast<int>(results.methods.size());
    if (k < 2) throw std::invalid_argument("ranking needs at least two methods");
    if (results.datasets.empty()) throw std::invalid_argument("ranking needs at least one dataset");
    if (results.accuracy.size() != results.datasets.size()) throw std::invalid_argument("row count mismatch");
    RankTable t;
    t.methods = results.methods;
    t.datasets = results.datasets;
    t.accuracy = results.accuracy;
    t.avg_rank.assign(static_cast<std::size_t>(k), 0.0);
    t.wins_ties.assign(static_cast<std::size_t>(k), 0);
    for (const auto& row : results.accuracy) {
        if (static_cast<int>(row.size()) != k) throw std::invalid_argument("column count mismatch");
        std::vector<int> present;
        for (int j = 0; j < k; ++j) {
            if (row[static_cast<std::size_t>(j)]) present.push_back(j);
        }
        std::stable_sort(present.begin(), present.end(), [&](int a, int b) { return *row[static_cast<std::size_t>(a)] > *row[static_cast<std::size_t>(b)]; });
        std::vector<double> ranks(static_cast<std::size_t>(k), 0.0);
        std::size_t i = 0;
        while (i < present.size()) {
            std::size_t e = i;
            while (e + 1 < present.size() && *row[static_cast<std::size_t>(present[e + 1])] == *row[static_cast<std::size_t>(present[i])]) ++e;
            const double r = shared_rank(static_cast<int>(i) + 1, static_cast<int>(e - i + 1), policy);
            for (std::size_t q = i; q <= e; ++q) ranks[static_cast<std::size_t>(present[q])] = r;
            if (i == 0) {
                for (std::size_t q = i; q <= e; ++q) ++t.wins_ties[static_cast<std::size_t>(present[q])];
            }
            i = e + 1;
        }
        const int missing = k - static_cast<int>(present.size());
        if (missing > 0) {
            const double r = shared_rank(static_cast<int>(present.size()) + 1, missing, policy);
            for (int j = 0; j < k; ++j) {
                if (!row[static_cast<std::size_t>(j)]) ranks[static_cast<std::size_t>(j)] = r;
            }
        }
        for (int j = 0; j < k; ++j) t.avg_rank[static_cast<std::size_t>(j)] += ranks[static_cast<std::size_t>(j)];
        t.ranks.push_back(std::move(ranks));
    }
    for (double& r : t.avg_rank) r /= static_cast<double>(t.datasets.size());
    return t;
}

double nemenyi_q(int k, double alpha) {
    static const double q05[] = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164};
    static const double q10[] = {1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920};
    if (k < 2 || k > 10) throw std::invalid_argument("Nemenyi table covers 2 to 10 methods, got " + std::to_string(k));
    if (std::abs(alpha - 0.05) < 1e-12) return q05[k - 2];
    if (std::abs(alpha - 0.10) < 1e-12) return q10[k - 2];
    throw std::invalid_argument("unsupported alpha; use 0.05 or 0.10");
}

FriedmanResult friedman_nemenyi(const RankTable& table, double alpha) {
    FriedmanResult f;
    f.k = static_cast<int>(table.methods.size());
    f.n = static_cast<int>(table.datasets.size());
    f.alpha = alpha;
    if (f.k < 3) throw std::invalid_argument("Friedman test needs at least three methods");
    if (f.n < 2) throw std::invalid_argument("Friedman test needs at least two datasets");
    f.q_alpha = nemenyi_q(f.k, alpha);
    const double k = f.k, n = f.n;
    // Centred on the mean rank; equals 12N/(k(k+1)) [sum R_j^2 - k(k+1)^2/4] when each
    // dataset's ranks sum to k(k+1)/2.
    double spread = 0.0;
    double centre = 0.0;
    for (double r : table.avg_rank) centre += r / k;
    for (double r : table.avg_rank) spread += (r - centre) * (r - centre);
    f.chi2_f = 12.0 * n / (k * (k + 1.0)) * spread;
    if (std::abs(f.chi2_f) < 1e-12) f.chi2_f = 0.0;
    const double denom = n * (k - 1.0) - f.chi2_f;
    f.f_f = denom > 0.0 ? (n - 1.0) * f.chi2_f / denom : std::numeric_limits<double>::infinity();
    f.cd = f.q_alpha * std::sqrt(k * (k + 1.0) / (6.0 * n));
    for (int a = 0; a < f.k; ++a) {
        for (int b = a + 1; b < f.k; ++b) {
            if (std::abs(table.avg_rank[static_cast<std::size_t>(a)] - table.avg_rank[static_cast<std::size_t>(b)]) > f.cd) {
                f.significant.emplace_back(a, b);
            }
        }
    }
    return f;
}

std::string format_rank_report(const RankTable& table, const FriedmanResult* friedman) {
    std::ostringstream os;
    char buf[256];
    os << "method,avg_rank,wins_ties\n";
    for (std::size_t j = 0; j < table.methods.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%s,%.4f,%d\n", table.methods[j].c_str(), table.avg_rank[j], table.wins_ties[j]);
        os << buf;
    }
    if (friedman) {
        std::snprintf(buf, sizeof buf, "friedman k=%d N=%d chi2_F=%.4f F_F=%.4f alpha=%.2f q=%.3f CD=%.4f\n", friedman->k,
                      friedman->n, friedman->chi2_f, friedman->f_f, friedman->alpha, friedman->q_alpha, friedman->cd);
        os << buf;
        if (friedman->significant.empty()) os << "significant: none\n";
        for (const auto& [a, b] : friedman->significant) {
            std::snprintf(buf, sizeof buf, "significant: %s vs %s (|diff|=%.4f)\n", table.methods[static_cast<std::size_t>(a)].c_str(),
                          table.methods[static_cast<std::size_t>(b)].c_str(),
                          std::abs(table.avg_rank[static_cast<std::size_t>(a)] - table.avg_rank[static_cast<std::size_t>(b)]));
            os << buf;
        }
    }
    return os.str();
}

}  // namespace prototsnet
