// aw: experiment runner. See README.md for subcommands, keys and CSV layouts.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aetherweave/analysis.hpp"
#include "aetherweave/experiments.hpp"
#include "aetherweave/parallel.hpp"
#include "aetherweave/simnet.hpp"

#ifndef AW_VERSION
#define AW_VERSION "unknown"
#endif

namespace {

namespace aw = aetherweave;
namespace ex = aetherweave::experiments;
namespace an = aetherweave::analysis;

constexpr int kConfigError = 2;

struct ConfigError : std::runtime_error {
    std::string key;
    ConfigError(std::string k, const std::string& msg) : std::runtime_error(k + ": " + msg), key(std::move(k)) {}
};

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::istringstream is(item);
        T v{};
        if (!(is >> v) || !(is >> std::ws).eof()) throw ConfigError(key, "bad list element '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError(key, "empty list");
    return out;
}

struct Common {
    std::string out = ".";
    std::uint64_t seed = 1;
    std::string seeds;
    std::string version, command;

    void add(CLI::App& app) {
        app.add_option("--out", out, "Output directory")->capture_default_str();
        app.add_option("--seed", seed, "Seed (used when seeds is empty)")->capture_default_str();
        app.add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
        app.add_option("--version", version, "Binary version (manifest only)")->group("");
        app.add_option("--command", command, "Subcommand (manifest only)")->group("");
    }

    std::vector<std::uint64_t> seed_list() const {
        return seeds.empty() ? std::vector<std::uint64_t>{seed} : parse_list<std::uint64_t>("seeds", seeds);
    }
};

struct SimOptions {
    std::string kind;
    aw::SimConfig cfg;
    std::string adversary = "none", mode = "seed";
    std::string alphas = "0.1,0.2,0.3,0.4,0.5,0.6,0.7";
    std::string ks = "2,3,4";
    std::optional<double> theta;
    double gamma = 0.9;
    int warmup = 10;
    bool from_adversary = false;

    SimOptions() {
        cfg.n = 10000;
        cfg.rounds = 30;
    }

    void add(CLI::App& app) {
        app.add_option("--kind", kind, "Experiment")
            ->required()
            ->check(CLI::IsMember({"bootstrap", "churn", "table-quality", "filtering", "slashing", "partition"}));
        app.add_option("--n", cfg.n, "Number of nodes")->capture_default_str()->check(CLI::Range(2, 1 << 24));
        app.add_option("--s", cfg.s, "Slice parameter s")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--alpha", cfg.alpha, "Adversarial fraction")->capture_default_str()->check(CLI::Range(0.0, 0.999999));
        app.add_option("--alphas", alphas, "Alpha sweep (table-quality, filtering)")->capture_default_str();
        app.add_option("--rounds", cfg.rounds, "Rounds")->capture_default_str()->check(CLI::Range(1, 1000000));
        app.add_option("--round-length", cfg.round_length, "Round length (ms)")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--delay-min", cfg.delay_min, "Minimum delay (ms)")->capture_default_str()->check(CLI::NonNegativeNumber);
        app.add_option("--delay-max", cfg.delay_max, "Maximum delay (ms)")->capture_default_str()->check(CLI::NonNegativeNumber);
        app.add_option("--churn", cfg.churn_rate, "Address changes per round")->capture_default_str();
        app.add_option("--adversary", adversary, "Adversary (churn, partition kinds)")
            ->capture_default_str()
            ->check(CLI::IsMember({"none", "silent", "filtering", "oversampler", "partition"}));
        app.add_option("--oversample-k", ks, "Commitments per round (slashing)")->capture_default_str();
        app.add_option("--theta", theta, "Detection threshold (default: balanced)")->check(CLI::Range(0.0, 1.0));
        app.add_option("--gamma", gamma, "Healthy reachability for the balanced threshold")
            ->capture_default_str()
            ->check(CLI::Range(0.0, 1.0));
        app.add_option("--mode", mode, "Retrieval mode")->capture_default_str()->check(CLI::IsMember({"seed", "full"}));
        app.add_option("--table-slack", cfg.table_cap_slack, "Table cap slack")->capture_default_str()->check(CLI::NonNegativeNumber);
        app.add_option("--commit-history", cfg.commit_history, "Commitments kept per record")->capture_default_str();
        app.add_option("--record-expiry", cfg.record_expiry, "Record expiry (ms)")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--epoch-rounds", cfg.epoch_rounds, "Rounds per epoch")->capture_default_str();
        app.add_option("--partition", cfg.partition_fraction, "Side-A fraction of honest nodes")
            ->capture_default_str()
            ->check(CLI::Range(0.0, 0.999999));
        app.add_option("--from-adversary", from_adversary, "Bootstrap from an adversarial contact")->capture_default_str();
        app.add_option("--warmup", warmup, "Rounds excluded from steady-state means")->capture_default_str()->check(CLI::NonNegativeNumber);
    }

    aw::SimConfig resolve() {
        cfg.adversary = *aw::parse_adversary(adversary);
        cfg.mode = mode == "full" ? aw::RetrievalMode::full_table : aw::RetrievalMode::seed_in_request;
        cfg.bootstrap_from_adversary = from_adversary;
        if (!theta) {
            auto p = an::AnalysisParams::with_alpha(static_cast<double>(cfg.n), cfg.s, cfg.alpha);
            p.gamma = gamma;
            if (!(p.phi < gamma)) throw ConfigError("gamma", "must exceed (1+alpha)/2");
            theta = an::balanced_theta(p);
        }
        cfg.theta = *theta;
        return cfg;
    }
};

/// Checks a SimConfig, mapping failures to the key most likely at fault.
void check_sim(const aw::SimConfig& c) {
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        static const std::vector<std::pair<std::string, std::string>> hints{
            {"delay", "delay-max"}, {"round_length", "round-length"}, {"epoch", "epoch-rounds"},
            {"alpha", "alpha"},     {"oversample", "oversample-k"},   {"partition", "partition"},
            {"churn", "churn"},     {"honest", "alpha"},              {"n must", "n"}};
        for (const auto& [needle, key] : hints)
            if (msg.find(needle) != std::string::npos) throw ConfigError(key, msg);
        throw ConfigError("n", msg);
    }
}

std::string manifest_text(const CLI::App& app, const std::string& command,
                          const std::map<std::string, std::string>& overrides) {
    std::ostringstream os;
    os << "version=" << AW_VERSION << "\n";
    os << "command=" << command << "\n";
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config" || name == "version" || name == "command") continue;
        std::string value;
        if (auto it = overrides.find(name); it != overrides.end())
            value = it->second;
        else if (opt->count() > 0)
            value = opt->as<std::string>();
        else
            value = opt->get_default_str();
        if (value.empty() && !opt->get_required()) continue;
        // Lists are quoted so the config reader keeps them as one value.
        if (value.find(',') != std::string::npos) value = '"' + value + '"';
        os << name << "=" << value << "\n";
    }
    return os.str();
}

void write_outputs(const std::string& dir, const std::string& stem, const ex::Table& table, const std::string& manifest) {
    table.write(dir + "/" + stem + ".csv");
    std::ofstream f(dir + "/" + stem + ".manifest", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write manifest in " + dir);
    f << manifest;
}

void prepare_out(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw ConfigError("out", "cannot create directory " + dir);
    const auto probe = std::filesystem::path(dir) / ".aw-write-test";
    {
        std::ofstream f(probe);
        if (!f) throw ConfigError("out", "directory not writable: " + dir);
    }
    std::filesystem::remove(probe, ec);
}

int usage(std::ostream& os, int code) {
    os << "usage: aw <simulate|meanfield|bounds|cutattack|report> [--config FILE] [--key value ...]\n"
          "       aw <subcommand> --help\n";
    return code;
}

int run(int argc, char** argv) {
    if (argc < 2) return usage(std::cerr, kConfigError);
    const std::string sub = argv[1];
    if (sub == "-h" || sub == "--help") return usage(std::cout, 0);
    if (sub == "--version") {
        std::cout << AW_VERSION << "\n";
        return 0;
    }

    CLI::App app{"aw " + sub, "aw " + sub};
    app.set_config("--config", "", "key=value file; flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);
    Common common;
    common.add(app);
    const std::size_t workers = aw::worker_count();

    SimOptions sim;
    double mf_n = 10000, mf_alpha = 1.0 / 3.0, s_min = 1, s_max = 8, s_step = 0.25;
    std::string b_ns = "10000,100000,1000000";
    double alpha = 0.25, s = 4, gamma = 0.9, delta = 0.25;
    std::optional<double> theta;
    std::string sweep = "theta", ks = "1,2,5,10,20,50,100", thetas = "0.76,0.78,0.8,0.82,0.84,0.86,0.88,0.9",
                degrees = "25,50,75,100", rule = "delta";
    std::size_t fixed_k = 1, trials = 5000;
    double ca_n = 10000;

    if (sub == "simulate") {
        sim.add(app);
    } else if (sub == "meanfield") {
        app.add_option("--n", mf_n, "Number of nodes")->capture_default_str()->check(CLI::Range(1.0, 1e12));
        app.add_option("--alpha", mf_alpha, "Adversarial fraction")->capture_default_str()->check(CLI::Range(0.0, 0.999999));
        app.add_option("--s-min", s_min, "Smallest s")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--s-max", s_max, "Largest s")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--s-step", s_step, "Step in s")->capture_default_str()->check(CLI::PositiveNumber);
    } else if (sub == "bounds") {
        app.add_option("--n", b_ns, "Comma-separated network sizes")->capture_default_str();
        app.add_option("--alpha", alpha, "Adversarial fraction")->capture_default_str()->check(CLI::Range(0.0, 0.999999));
        app.add_option("--s", s, "Slice parameter s")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--gamma", gamma, "Healthy reachability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
        app.add_option("--theta", theta, "Detection threshold (default: balanced)")->check(CLI::Range(0.0, 1.0));
    } else if (sub == "cutattack") {
        alpha = 0.5;
        app.add_option("--n", ca_n, "Number of nodes")->capture_default_str()->check(CLI::Range(2.0, 1e12));
        app.add_option("--s", s, "Slice parameter s")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--alpha", alpha, "Adversarial fraction")->capture_default_str()->check(CLI::Range(0.0, 0.999999));
        app.add_option("--delta", delta, "Overlay tolerance")->capture_default_str()->check(CLI::Range(0.0, 1.0));
        app.add_option("--theta", theta, "Threshold for the k sweep (default 0.9)")->check(CLI::Range(0.0, 1.0));
        app.add_option("--sweep", sweep, "Swept variable")->capture_default_str()->check(CLI::IsMember({"k", "theta"}));
        app.add_option("--ks", ks, "Cut sizes for the k sweep")->capture_default_str();
        app.add_option("--thetas", thetas, "Thresholds for the theta sweep")->capture_default_str();
        app.add_option("--k", fixed_k, "Cut size for the theta sweep")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--degrees", degrees, "Overlay degrees")->capture_default_str();
        app.add_option("--trials", trials, "Trials per point")->capture_default_str()->check(CLI::PositiveNumber);
        app.add_option("--rule", rule, "Success rule: noflag >= delta*k or >= (1-delta)*k")
            ->capture_default_str()
            ->check(CLI::IsMember({"delta", "one-minus-delta"}));
    } else if (sub == "report") {
        app.add_option("--trials", trials, "Cut-attack trials per point")->capture_default_str()->check(CLI::PositiveNumber);
    } else {
        std::cerr << "error: unknown subcommand '" << sub << "'\n";
        return usage(std::cerr, kConfigError);
    }

    try {
        app.parse(argc - 1, argv + 1);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }

    try {
        if (!common.command.empty() && common.command != sub)
            throw ConfigError("command", "manifest is for '" + common.command + "'");
        const auto seeds = common.seed_list();
        prepare_out(common.out);
        std::map<std::string, std::string> resolved;

        if (sub == "simulate") {
            aw::SimConfig cfg = sim.resolve();
            resolved["theta"] = ex::num(cfg.theta);
            ex::Table t;
            if (sim.kind == "bootstrap") {
                check_sim(cfg);
                t = ex::bootstrap(cfg, seeds, workers);
            } else if (sim.kind == "churn") {
                check_sim(cfg);
                t = ex::churn(cfg, seeds, workers);
            } else if (sim.kind == "table-quality" || sim.kind == "filtering") {
                const auto as = parse_list<double>("alphas", sim.alphas);
                for (double a : as) {
                    aw::SimConfig c = cfg;
                    c.alpha = a;
                    if (a < 0 || a >= 1) throw ConfigError("alphas", "alpha out of range");
                    check_sim(c);
                }
                t = sim.kind == "filtering" ? ex::filtering(cfg, as, seeds, sim.warmup, workers)
                                            : ex::table_quality(cfg, as, seeds, sim.warmup, workers);
            } else if (sim.kind == "slashing") {
                const auto kv = parse_list<std::size_t>("oversample-k", sim.ks);
                for (auto k : kv)
                    if (k < 2) throw ConfigError("oversample-k", "must be >= 2");
                aw::SimConfig c = cfg;
                c.adversary = aw::AdversaryKind::oversampler;
                c.oversample_k = kv.front();
                check_sim(c);
                t = ex::slashing(cfg, kv, seeds, workers);
            } else {
                if (!(cfg.partition_fraction > 0)) throw ConfigError("partition", "must be > 0 for kind=partition");
                check_sim(cfg);
                t = ex::partition(cfg, seeds, workers);
            }
            write_outputs(common.out, sim.kind, t, manifest_text(app, sub, resolved));
        } else if (sub == "meanfield") {
            if (s_max < s_min) throw ConfigError("s-max", "must be >= s-min");
            write_outputs(common.out, "meanfield", ex::meanfield(mf_n, mf_alpha, s_min, s_max, s_step),
                          manifest_text(app, sub, resolved));
        } else if (sub == "bounds") {
            const auto ns = parse_list<double>("n", b_ns);
            auto p = an::AnalysisParams::with_alpha(ns.front(), s, alpha);
            p.gamma = gamma;
            if (!(p.phi < gamma)) throw ConfigError("gamma", "must exceed (1+alpha)/2");
            p.theta = theta ? *theta : an::balanced_theta(p);
            if (!(p.phi < p.theta && p.theta < p.gamma)) throw ConfigError("theta", "need (1+alpha)/2 < theta < gamma");
            for (double n : ns)
                if (!(n >= 1) || s / std::sqrt(n) > 1) throw ConfigError("n", "need n >= 1 and s <= sqrt(n)");
            resolved["theta"] = ex::num(p.theta);
            write_outputs(common.out, "bounds", ex::bounds(p, ns), manifest_text(app, sub, resolved));
        } else if (sub == "cutattack") {
            auto p = an::AnalysisParams::with_alpha(ca_n, s, alpha);
            p.delta = delta;
            p.theta = theta ? *theta : 0.9;
            resolved["theta"] = ex::num(p.theta);
            if (s / std::sqrt(ca_n) > 1) throw ConfigError("s", "need s <= sqrt(n)");
            const auto degs = parse_list<double>("degrees", degrees);
            for (double d : degs)
                if (d < 0) throw ConfigError("degrees", "must be >= 0");
            const auto r = rule == "delta" ? an::NoFlagRule::delta_fraction : an::NoFlagRule::one_minus_delta_fraction;
            const auto max_k = static_cast<std::size_t>(std::floor((1 - alpha) * ca_n)) / 2;
            ex::Table t;
            if (sweep == "k") {
                const auto kv = parse_list<double>("ks", ks);
                for (double k : kv)
                    if (k < 1 || k > static_cast<double>(max_k) || k != std::floor(k)) throw ConfigError("ks", "k out of range");
                t = ex::cutattack(p, ex::CutSweep::k, kv, degs, fixed_k, trials, seeds.front(), r, workers);
            } else {
                if (fixed_k > max_k) throw ConfigError("k", "k out of range");
                const auto tv = parse_list<double>("thetas", thetas);
                t = ex::cutattack(p, ex::CutSweep::theta, tv, degs, fixed_k, trials, seeds.front(), r, workers);
            }
            write_outputs(common.out, "cutattack", t, manifest_text(app, sub, resolved));
        } else {
            // report: the analysis tables at default parameters plus a summary.
            auto bp = an::AnalysisParams::with_alpha(1e4, 4, 0.25);
            bp.theta = 0.75;
            const auto bt = ex::bounds(bp, {1e4, 1e5, 1e6});
            const auto mt = ex::meanfield(1e4, 1.0 / 3.0, 1, 8, 0.25);
            auto cp = an::AnalysisParams::with_alpha(1e4, 4, 0.5);
            const auto ct = ex::cutattack(cp, ex::CutSweep::theta, {0.76, 0.8, 0.84, 0.88, 0.9}, {25, 50, 75, 100}, 1,
                                          trials, seeds.front(), an::NoFlagRule::delta_fraction, workers);
            const std::string man = manifest_text(app, sub, resolved);
            write_outputs(common.out, "report_bounds", bt, man);
            write_outputs(common.out, "report_meanfield", mt, man);
            write_outputs(common.out, "report_cutattack", ct, man);
            std::ofstream f(common.out + "/report.txt", std::ios::binary);
            if (!f) throw ConfigError("out", "cannot write report.txt");
            f << "version " << AW_VERSION << "\n";
            f << "balanced theta (alpha=0.25, gamma=0.9): " << ex::num(an::balanced_theta(bp)) << "\n";
            f << "R0 threshold s* (alpha=1/3): " << ex::num(an::r0_threshold_s(1.0 / 3.0)) << "\n";
            f << "\nbounds (alpha=0.25, s=4, gamma=0.9, theta=0.75)\n" << bt.csv();
            f << "\nmeanfield (n=1e4, alpha=1/3)\n" << mt.csv();
            f << "\ncut attack (n=1e4, s=4, alpha=0.5, delta=0.25, k=1)\n" << ct.csv();
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
