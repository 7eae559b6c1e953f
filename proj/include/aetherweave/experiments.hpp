#pragma once

// Experiment drivers behind the command-line tool. Each returns a Table
// with a fixed header; rows are formatted deterministically so reruns give
// identical bytes.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "aetherweave/analysis.hpp"
#include "aetherweave/parallel.hpp"
#include "aetherweave/simnet.hpp"

namespace aetherweave::experiments {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string csv() const {
        std::string out;
        const auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                out += cells[i];
            }
            out += '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
        return out;
    }

    void write(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + path);
        f << csv();
    }
};

/// Shortest round-trip formatting; nan/inf spelled out.
inline std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == std::trunc(x) && std::abs(x) < 1e15) return std::to_string(static_cast<std::int64_t>(x));
    char buf[32];
    double back = 0;
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::sscanf(buf, "%lf", &back) == 1 && back == x) break;
    }
    return buf;
}

inline std::string num(std::int64_t x) { return std::to_string(x); }
inline std::string num(std::size_t x) { return std::to_string(x); }

// Simulation sweeps --------------------------------------------------------

/// Runs every config on the worker pool; results keep the input order.
inline std::vector<Metrics> run_all(const std::vector<SimConfig>& cfgs, std::size_t workers) {
    std::vector<Metrics> out(cfgs.size());
    parallel_for(cfgs.size(), workers, [&](std::size_t i) { out[i] = run(cfgs[i]); });
    return out;
}

inline std::vector<SimConfig> per_seed(SimConfig base, const std::vector<std::uint64_t>& seeds) {
    std::vector<SimConfig> out;
    for (auto s : seeds) {
        base.seed = s;
        out.push_back(base);
    }
    return out;
}

/// Mean of f over rounds with round > warmup, averaged over runs.
template <class F>
double steady_mean(const std::vector<Metrics>& runs, int warmup, F&& f) {
    double sum = 0;
    std::size_t count = 0;
    for (const auto& m : runs)
        for (const auto& r : m.rounds)
            if (r.round > warmup) {
                sum += f(r);
                ++count;
            }
    return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

/// (round, appearances): honest holders of the joiner's record, mean over
/// seeds. Round 0 is the state right after the bootstrap contact.
inline Table bootstrap(SimConfig base, const std::vector<std::uint64_t>& seeds, std::size_t workers) {
    base.bootstrap = true;
    const auto runs = run_all(per_seed(base, seeds), workers);
    Table t{{"round", "appearances"}, {}};
    double init = 0;
    for (const auto& m : runs) init += static_cast<double>(m.joiner_holders_initial);
    t.rows.push_back({"0", num(init / static_cast<double>(runs.size()))});
    for (int r = 1; r <= base.rounds; ++r) {
        double sum = 0;
        for (const auto& m : runs) sum += static_cast<double>(m.rounds.at(static_cast<std::size_t>(r - 1)).joiner_holders);
        t.rows.push_back({num(std::int64_t{r}), num(sum / static_cast<double>(runs.size()))});
    }
    return t;
}

/// (round, success_rate): fraction of table entries with a current address.
inline Table churn(const SimConfig& base, const std::vector<std::uint64_t>& seeds, std::size_t workers) {
    const auto runs = run_all(per_seed(base, seeds), workers);
    Table t{{"round", "success_rate"}, {}};
    for (int r = 1; r <= base.rounds; ++r) {
        double sum = 0;
        for (const auto& m : runs) sum += m.rounds.at(static_cast<std::size_t>(r - 1)).record_correctness;
        t.rows.push_back({num(std::int64_t{r}), num(sum / static_cast<double>(runs.size()))});
    }
    return t;
}

inline std::vector<std::vector<Metrics>> alpha_sweep(SimConfig base, AdversaryKind kind, const std::vector<double>& alphas,
                                                     const std::vector<std::uint64_t>& seeds, std::size_t workers) {
    std::vector<SimConfig> cfgs;
    base.adversary = kind;
    for (double a : alphas) {
        base.alpha = a;
        for (const auto& c : per_seed(base, seeds)) cfgs.push_back(c);
    }
    const auto flat = run_all(cfgs, workers);
    std::vector<std::vector<Metrics>> out(alphas.size());
    for (std::size_t i = 0; i < flat.size(); ++i) out[i / seeds.size()].push_back(flat[i]);
    return out;
}

/// (alpha, quality) under the silent adversary.
inline Table table_quality(const SimConfig& base, const std::vector<double>& alphas,
                           const std::vector<std::uint64_t>& seeds, int warmup, std::size_t workers) {
    const auto runs = alpha_sweep(base, AdversaryKind::silent, alphas, seeds, workers);
    Table t{{"alpha", "quality"}, {}};
    for (std::size_t i = 0; i < alphas.size(); ++i)
        t.rows.push_back({num(alphas[i]), num(steady_mean(runs[i], warmup, [](const RoundMetrics& r) { return r.table_quality; }))});
    return t;
}

/// (alpha, honest_repr, adv_repr) under the filtering adversary.
inline Table filtering(const SimConfig& base, const std::vector<double>& alphas, const std::vector<std::uint64_t>& seeds,
                       int warmup, std::size_t workers) {
    const auto runs = alpha_sweep(base, AdversaryKind::filtering, alphas, seeds, workers);
    Table t{{"alpha", "honest_repr", "adv_repr"}, {}};
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        const double h = steady_mean(runs[i], warmup, [](const RoundMetrics& r) { return r.honest_repr; });
        const double a = steady_mean(runs[i], warmup, [](const RoundMetrics& r) { return r.adv_repr; });
        t.rows.push_back({num(alphas[i]), num(h), num(a)});
    }
    return t;
}

/// (round, cdf): fraction of (k, seed) runs whose violator was caught by
/// the end of each round.
inline Table slashing(SimConfig base, const std::vector<std::size_t>& ks, const std::vector<std::uint64_t>& seeds,
                      std::size_t workers) {
    base.adversary = AdversaryKind::oversampler;
    base.stop_on_detection = true;
    std::vector<SimConfig> cfgs;
    for (auto k : ks) {
        base.oversample_k = k;
        for (const auto& c : per_seed(base, seeds)) cfgs.push_back(c);
    }
    const auto runs = run_all(cfgs, workers);
    Table t{{"round", "cdf"}, {}};
    for (int r = 1; r <= base.rounds; ++r) {
        std::size_t hit = 0;
        for (const auto& m : runs) hit += m.detection_round && *m.detection_round <= r;
        t.rows.push_back({num(std::int64_t{r}), num(static_cast<double>(hit) / static_cast<double>(runs.size()))});
    }
    return t;
}

/// (round, flag_rate_a, flag_rate_b) for a partitioned run, mean over seeds.
inline Table partition(SimConfig base, const std::vector<std::uint64_t>& seeds, std::size_t workers) {
    if (base.partition_fraction > 0 && base.adversary == AdversaryKind::none) base.adversary = AdversaryKind::partition;
    const auto runs = run_all(per_seed(base, seeds), workers);
    Table t{{"round", "flag_rate_a", "flag_rate_b"}, {}};
    for (int r = 1; r <= base.rounds; ++r) {
        double a = 0, b = 0;
        for (const auto& m : runs) {
            a += m.rounds.at(static_cast<std::size_t>(r - 1)).flag_rate_a;
            b += m.rounds.at(static_cast<std::size_t>(r - 1)).flag_rate_b;
        }
        const auto k = static_cast<double>(runs.size());
        t.rows.push_back({num(std::int64_t{r}), num(a / k), num(b / k)});
    }
    return t;
}

// Analysis tables ----------------------------------------------------------

/// (s, q_thresh, q_high, v_high) for s = s_min, s_min + step, ..., s_max.
inline Table meanfield(double n, double alpha, double s_min, double s_max, double s_step) {
    if (!(s_step > 0)) throw std::invalid_argument("s_step must be positive");
    Table t{{"s", "q_thresh", "q_high", "v_high"}, {}};
    const auto steps = static_cast<std::size_t>(std::floor((s_max - s_min) / s_step + 1e-9));
    for (std::size_t i = 0; i <= steps; ++i) {
        const double s = s_min + static_cast<double>(i) * s_step;
        const auto r = analysis::mean_field(analysis::AnalysisParams::with_alpha(n, s, alpha));
        t.rows.push_back({num(s), num(r.q_thresh), num(r.q_high), num(r.v_high)});
    }
    return t;
}

/// (n, fp_exact, fn_exact, fp_chernoff, fn_chernoff), one row per n.
inline Table bounds(analysis::AnalysisParams p, const std::vector<double>& ns) {
    Table t{{"n", "fp_exact", "fn_exact", "fp_chernoff", "fn_chernoff"}, {}};
    for (double n : ns) {
        p.n = n;
        const auto e = analysis::detection_error_probs(p);
        t.rows.push_back({num(n), num(e.fp_exact), num(e.fn_exact), num(e.fp_chernoff), num(e.fn_chernoff)});
    }
    return t;
}

enum class CutSweep { k, theta };

/// First column k or theta, then log10 of the success probability per
/// overlay degree. For the k sweep a last column holds ln C(|H|, k).
inline Table cutattack(analysis::AnalysisParams p, CutSweep sweep, const std::vector<double>& values,
                       const std::vector<double>& degrees, std::size_t fixed_k, std::size_t trials, std::uint64_t seed,
                       analysis::NoFlagRule rule, std::size_t workers) {
    Table t;
    t.header.push_back(sweep == CutSweep::k ? "k" : "theta");
    for (double d : degrees) t.header.push_back("success_log10_d" + num(d));
    if (sweep == CutSweep::k) t.header.push_back("log_cuts");
    for (double v : values) {
        std::size_t k = fixed_k;
        if (sweep == CutSweep::k)
            k = static_cast<std::size_t>(v);
        else
            p.theta = v;
        std::vector<std::string> row{sweep == CutSweep::k ? num(k) : num(v)};
        for (double d : degrees) {
            p.overlay_degree = d;
            const auto e = analysis::cut_attack(p, k, trials, seed, rule, workers);
            row.push_back(num(e.probability > 0 ? std::log10(e.probability) : -std::numeric_limits<double>::infinity()));
        }
        if (sweep == CutSweep::k) row.push_back(num(analysis::log_cut_count(p, k)));
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace aetherweave::experiments
