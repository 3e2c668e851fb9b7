#include "edgechain/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "edgechain/harness.hpp"

namespace edgechain::cli {

namespace fs = std::filesystem;
using harness::ExperimentConfig;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kAuditFailed = 2;

struct SimOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    std::vector<double> betas;
    std::vector<std::string> schedulers;
    std::vector<double> scales;
    std::optional<Timeslot> timeslots;
    unsigned jobs = 0;
    bool full_audit = false;
};

void add_sim_options(CLI::App* cmd, SimOptions& o) {
    cmd->add_option("--config", o.config_path, "JSON config file (comments allowed)");
    cmd->add_option("--out", o.out_dir, std::string("Output directory (else $") + kOutEnv + ")");
    cmd->add_option("--seed", o.seed, "Single seed, replaces the config's seed list");
    cmd->add_option("--seeds", o.seeds, "Seed list, e.g. 1,2,3")->delimiter(',');
    cmd->add_option("--beta", o.betas, "Priority factor (sweep-beta: list)")->delimiter(',');
    cmd->add_option("--scheduler", o.schedulers, "pricing, fcfs or priority (compare/scale: list)")
        ->delimiter(',');
    cmd->add_option("--scale", o.scales, "Capacity fraction of W (scale: list)")->delimiter(',');
    cmd->add_option("--timeslots", o.timeslots, "Timeslots per run");
    cmd->add_option("--jobs", o.jobs, "Worker threads for independent runs (0 = all cores)");
    cmd->add_flag("--full-audit", o.full_audit, "Replay the chain after every sweep cell");
}

ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) return ExperimentConfig{};
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read config " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Config, path + ": " + e.what());
    }
    return harness::config_from_json(j);
}

admission::Scheduler parse_scheduler(const std::string& s) {
    try {
        return admission::scheduler_from_string(s);
    } catch (const Error& e) {
        throw Error(ErrorCode::Config, std::string("--scheduler: ") + e.what());
    }
}

template <typename T>
const T& single(const std::vector<T>& v, const char* flag) {
    if (v.size() != 1) throw Error(ErrorCode::Config, std::string(flag) + ": expected a single value");
    return v.front();
}

/// Loads the config and applies the flags that mean the same everywhere.
ExperimentConfig resolve(const SimOptions& o) {
    ExperimentConfig c = load_config(o.config_path);
    if (!o.seeds.empty()) c.seeds = o.seeds;
    if (o.seed) c.seeds = {*o.seed};
    if (o.timeslots) c.timeslots = *o.timeslots;
    return c;
}

fs::path output_dir(const SimOptions& o, const std::string& sub) {
    if (!o.out_dir.empty()) return o.out_dir;
    if (const char* env = std::getenv(kOutEnv); env && *env) return env;
    return fs::path("edgechain-out") / sub;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out || !(out << text) || !out.flush()) throw Error(ErrorCode::Io, "cannot write " + p.string());
}

/// Creates the output directory and records what is about to run, before
/// any simulation work happens.
void prepare_output(const fs::path& dir, const std::string& sub, const SimOptions& o,
                    const ExperimentConfig& c) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
    json manifest = {{"tool", "edgechain"},
                     {"version", kVersion},
                     {"subcommand", sub},
                     {"config_path", o.config_path},
                     {"output_dir", dir.string()},
                     {"seeds", c.seeds}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    write_text(dir / "config.json", harness::to_json(c).dump(2) + "\n");
}

std::string pct(double x) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * x << '%';
    return s.str();
}

int report_audits(std::span<const harness::SweepRow> rows, std::ostream& err) {
    std::size_t bad = 0;
    for (const auto& r : rows) bad += r.audit_ok ? 0 : 1;
    if (bad == 0) return kOk;
    err << "audit failed in " << bad << " run(s)\n";
    return kAuditFailed;
}

int cmd_run(const SimOptions& o, std::ostream& out, std::ostream& err) {
    ExperimentConfig c = resolve(o);
    if (!o.betas.empty()) c.pricing.beta = single(o.betas, "--beta");
    if (!o.schedulers.empty()) c.scheduler = parse_scheduler(single(o.schedulers, "--scheduler"));
    if (!o.scales.empty()) c.resource_scale = single(o.scales, "--scale");
    c.validate();
    const fs::path dir = output_dir(o, "run");
    prepare_output(dir, "run", o, c);

    harness::RunOptions ro;
    ro.out_dir = dir;
    ro.jobs = o.jobs;
    ro.full_audit = true;
    const auto res = harness::run_experiment(c, ro);
    out << "seed  submitted  accepted  acceptance  blocked  blocks  audit\n";
    for (const auto& r : res.runs) {
        const auto& m = r.metrics;
        out << std::left << std::setw(6) << r.seed << std::setw(11) << m.submitted << std::setw(10)
            << m.accepted << std::setw(12) << pct(m.acceptance_rate()) << std::setw(9) << m.blocked_devices
            << std::setw(8) << m.blocks << (r.audit.ok() ? "ok" : "FAIL") << '\n';
        for (const auto& f : r.audit.failures) err << "seed " << r.seed << ": " << f << '\n';
    }
    out << "mean acceptance " << pct(res.mean_acceptance()) << "\nartifacts in " << dir.string() << '\n';
    return res.audits_ok() ? kOk : kAuditFailed;
}

harness::RunOptions sweep_options(const SimOptions& o) {
    harness::RunOptions ro;
    ro.jobs = o.jobs;
    ro.full_audit = o.full_audit;
    return ro;
}

template <typename Key>
std::map<Key, double> means(std::span<const harness::SweepRow> rows, Key (*key)(const harness::SweepRow&)) {
    std::map<Key, std::pair<double, int>> acc;
    for (const auto& r : rows) {
        auto& a = acc[key(r)];
        a.first += r.acceptance_rate;
        ++a.second;
    }
    std::map<Key, double> out;
    for (const auto& [k, a] : acc) out[k] = a.first / a.second;
    return out;
}

int cmd_sweep_beta(const SimOptions& o, std::ostream& out, std::ostream& err) {
    ExperimentConfig c = resolve(o);
    if (!o.betas.empty()) c.beta_values = o.betas;
    if (!o.schedulers.empty()) c.scheduler = parse_scheduler(single(o.schedulers, "--scheduler"));
    if (!o.scales.empty()) c.resource_scale = single(o.scales, "--scale");
    c.validate();
    const fs::path dir = output_dir(o, "sweep-beta");
    prepare_output(dir, "sweep-beta", o, c);

    const auto rows = harness::beta_sweep(c, c.beta_values, sweep_options(o));
    std::ostringstream csv;
    harness::write_beta_csv(csv, rows);
    write_text(dir / "beta_sweep.csv", csv.str());

    const auto m = means<double>(rows, [](const harness::SweepRow& r) { return r.beta; });
    double best = -1, best_beta = 0;
    out << "beta   mean acceptance\n";
    for (const auto& [b, a] : m) {
        out << std::left << std::setw(7) << decimal_text(b) << pct(a) << '\n';
        if (a > best) best = a, best_beta = b;
    }
    out << "maximum at beta " << decimal_text(best_beta) << "\nwrote " << (dir / "beta_sweep.csv").string()
        << '\n';
    return report_audits(rows, err);
}

std::vector<admission::Scheduler> schedulers_or_all(const SimOptions& o) {
    if (o.schedulers.empty()) {
        return {admission::Scheduler::Pricing, admission::Scheduler::FCFS, admission::Scheduler::Priority};
    }
    std::vector<admission::Scheduler> out;
    for (const auto& s : o.schedulers) out.push_back(parse_scheduler(s));
    return out;
}

int cmd_compare(const SimOptions& o, std::ostream& out, std::ostream& err) {
    ExperimentConfig c = resolve(o);
    if (!o.betas.empty()) c.pricing.beta = single(o.betas, "--beta");
    if (!o.scales.empty()) c.resource_scale = single(o.scales, "--scale");
    const auto scheds = schedulers_or_all(o);
    c.validate();
    const fs::path dir = output_dir(o, "compare");
    prepare_output(dir, "compare", o, c);

    const auto rows = harness::scheduler_comparison(c, scheds, sweep_options(o));
    std::ostringstream csv;
    harness::write_scheduler_csv(csv, rows);
    write_text(dir / "scheduler_cmp.csv", csv.str());
    const auto m = means<int>(rows, [](const harness::SweepRow& r) { return static_cast<int>(r.scheduler); });
    out << "scheduler  mean acceptance (beta " << decimal_text(c.pricing.beta) << ")\n";
    for (auto s : scheds) {
        out << std::left << std::setw(11) << admission::to_string(s) << pct(m.at(static_cast<int>(s))) << '\n';
    }
    out << "wrote " << (dir / "scheduler_cmp.csv").string() << '\n';
    return report_audits(rows, err);
}

int cmd_scale(const SimOptions& o, std::ostream& out, std::ostream& err) {
    ExperimentConfig c = resolve(o);
    if (!o.betas.empty()) c.pricing.beta = single(o.betas, "--beta");
    if (!o.scales.empty()) c.scale_values = o.scales;
    const auto scheds = schedulers_or_all(o);
    c.validate();
    const fs::path dir = output_dir(o, "scale");
    prepare_output(dir, "scale", o, c);

    const auto rows = harness::scale_sweep(c, c.scale_values, scheds, sweep_options(o));
    std::ostringstream csv;
    harness::write_scale_csv(csv, rows);
    write_text(dir / "scale_sweep.csv", csv.str());

    std::map<std::pair<double, int>, std::pair<double, int>> acc;
    for (const auto& r : rows) {
        auto& a = acc[{r.scale, static_cast<int>(r.scheduler)}];
        a.first += r.acceptance_rate;
        ++a.second;
    }
    out << "scale  ";
    for (auto s : scheds) out << std::left << std::setw(10) << admission::to_string(s);
    out << '\n';
    for (double sc : c.scale_values) {
        out << std::left << std::setw(7) << decimal_text(sc);
        for (auto s : scheds) {
            const auto& a = acc[{sc, static_cast<int>(s)}];
            out << std::setw(10) << pct(a.second ? a.first / a.second : 0.0);
        }
        out << '\n';
    }
    out << "wrote " << (dir / "scale_sweep.csv").string() << '\n';
    return report_audits(rows, err);
}

int cmd_replay(const std::string& chain_path, std::string state_path, std::ostream& out, std::ostream& err) {
    std::error_code ec;
    if (!fs::exists(chain_path, ec)) throw Error(ErrorCode::Io, "no such file " + chain_path);
    if (fs::file_size(chain_path, ec) == 0 && !ec) throw Error(ErrorCode::MalformedRecord, "chain file is empty");
    std::ifstream in(chain_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + chain_path);
    if (state_path.empty()) {
        const auto sibling = fs::path(chain_path).parent_path() / "state.json";
        if (fs::exists(sibling, ec)) state_path = sibling.string();
    }

    auto fail = [&](const std::string& why) {
        out << "audit: FAIL\n";
        err << why << '\n';
        return kAuditFailed;
    };

    std::optional<ledger::Chain> chain;
    try {
        chain.emplace(ledger::Chain::read(in));
    } catch (const std::exception& e) {
        return fail(std::string("unreadable chain: ") + e.what());
    }
    const auto v = chain->validate();
    if (!v.valid) {
        return fail("chain invalid at height " +
                    (v.first_bad_height ? std::to_string(*v.first_bad_height) : std::string("?")) + ": " +
                    v.reason);
    }
    std::unique_ptr<contracts::Engine> engine;
    try {
        engine = contracts::Engine::replay(*chain);
    } catch (const std::exception& e) {
        return fail(std::string("replay failed: ") + e.what());
    }

    const auto* reg = engine->registration();
    std::size_t devices = 0, blocked = 0, legacy = 0;
    long credit_sum = 0;
    int credit_min = std::numeric_limits<int>::max();
    if (reg) {
        for (const auto& [addr, rec] : reg->records()) {
            ++devices;
            blocked += rec.is_blocked ? 1 : 0;
            legacy += rec.attributes.legacy ? 1 : 0;
            credit_sum += rec.credit;
            credit_min = std::min(credit_min, rec.credit);
        }
    }
    out << "blocks        " << chain->length() << '\n'
        << "transactions  " << chain->total_transactions() << '\n'
        << "devices       " << devices << " (" << legacy << " legacy, " << blocked << " blocked)\n";
    if (devices) {
        out << "credit        min " << credit_min << ", mean "
            << decimal_text(static_cast<double>(credit_sum) / static_cast<double>(devices)) << '\n';
    }
    out << "coins         " << engine->total_coins().to_string() << " in circulation, "
        << engine->total_minted().to_string() << " minted\n"
        << "edge revenue  " << engine->balance(engine->edge_server()).to_string() << '\n';
    if (const auto* alloc = engine->allocation()) out << "requests      " << alloc->size() << '\n';

    if (engine->total_coins() != engine->total_minted()) return fail("coin conservation violated");
    if (!state_path.empty()) {
        std::ifstream sin(state_path);
        json recorded;
        try {
            recorded = json::parse(sin);
        } catch (const json::exception& e) {
            return fail("unreadable state file " + state_path + ": " + e.what());
        }
        if (!recorded.contains("state") || recorded["state"] != engine->snapshot()) {
            return fail("replayed state differs from " + state_path);
        }
        out << "state         matches " << state_path << '\n';
    }
    out << "audit: PASS\n";
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Permissioned edge-resource ledger and admission simulator", "edgechain"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SimOptions o;
    auto* run_cmd = app.add_subcommand("run", "Run one experiment per seed and write all artifacts");
    auto* beta_cmd = app.add_subcommand("sweep-beta", "Acceptance rate over a grid of beta values");
    auto* cmp_cmd = app.add_subcommand("compare", "Pricing vs FCFS vs priority scheduling");
    auto* scale_cmd = app.add_subcommand("scale", "Acceptance rate as capacity shrinks");
    for (auto* c : {run_cmd, beta_cmd, cmp_cmd, scale_cmd}) add_sim_options(c, o);

    std::string chain_path, state_path;
    auto* replay_cmd = app.add_subcommand("replay", "Validate a chain file and rebuild its state");
    replay_cmd->add_option("chain", chain_path, "chain.jsonl")->required();
    replay_cmd->add_option("--state", state_path, "state.json to compare against (default: sibling file)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kError;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(o, out, err);
        if (beta_cmd->parsed()) return cmd_sweep_beta(o, out, err);
        if (cmp_cmd->parsed()) return cmd_compare(o, out, err);
        if (scale_cmd->parsed()) return cmd_scale(o, out, err);
        if (replay_cmd->parsed()) return cmd_replay(chain_path, state_path, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.code() == ErrorCode::Consistency ? kAuditFailed : kError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kError;
    }
    return kError;
}

}  // namespace edgechain::cli
