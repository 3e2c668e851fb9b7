#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgechain/admission.hpp"
#include "edgechain/contracts.hpp"
#include "edgechain/credit.hpp"
#include "edgechain/edgepool.hpp"
#include "edgechain/ledger.hpp"
#include "edgechain/registry.hpp"

namespace edgechain::harness {

/// Seedable generator with a fixed algorithm: std::mt19937_64, whose output
/// sequence is pinned by the C++ standard, plus rejection sampling for
/// integer ranges. Streams are identical on every conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform over [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Uniform over [0, 1) with 53 random bits.
    double uniform01();
    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::mt19937_64 engine_;
};

struct IntRange {
    std::int64_t min = 0;
    std::int64_t max = 0;
    bool operator==(const IntRange&) const = default;
};

/// Demand ranges per resource (cpu, memory, storage, bandwidth) and the
/// lifetime range of one priority level.
struct LevelProfile {
    std::array<IntRange, kResourceTypes> demand;
    IntRange lifetime;
    bool operator==(const LevelProfile&) const = default;
};

/// The request parameter table: levels 1..4 at indices 0..3.
std::array<LevelProfile, 4> default_level_profiles();

struct ExperimentConfig {
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    Timeslot timeslots = 2000;
    IntRange requests_per_slot{5, 15};
    admission::PricingParams pricing{100.0, 1.35};
    ResourceVector capacity{{300, 250, 250, 250}};
    double resource_scale = 1.0;
    admission::Scheduler scheduler = admission::Scheduler::Pricing;
    std::array<LevelProfile, 4> levels = default_level_profiles();
    std::array<double, 4> level_weights{1, 1, 1, 1};

    std::size_t devices_per_level = 25;
    /// Devices that fire `greedy_burst` extra requests every slot.
    std::size_t greedy_devices = 0;
    std::size_t greedy_burst = 3;
    std::size_t legacy_devices = 8;
    std::size_t compromised_legacy = 1;
    Timeslot compromise_onset = 200;
    double legacy_activity_rate = 0.5;
    /// Optional replayable activity stream; replaces generated activity.
    std::string activity_file;
    /// Optional explicit device fleet (JSON list of attribute records with
    /// "level"); replaces the generated non-legacy fleet.
    std::string fleet_file;
    /// Descriptive data rates in bytes per slot; they scale activity sizes.
    std::map<std::string, double> app_rates{
        {"blockchain", 0.54 * 1024}, {"face-recognition", 1.64 * 1024 * 1024}, {"nlp", 8.12 * 1024}};

    credit::CreditPolicy credit;
    registry::RegistrationPolicy registration;
    int difficulty_bits = 12;
    std::size_t max_block_txs = 208;
    Coins edge_reserve = Coins::from_cents(100'000'000);
    /// Extra slots a request denied as infeasible waits before it is dropped.
    Timeslot carry_over_slots = 0;
    bool record_trace = false;

    /// Grids used by the sweep presets.
    std::vector<double> beta_values;
    std::vector<double> scale_values{1.0, 0.8, 0.6, 0.4};

    ExperimentConfig();
    ResourceVector scaled_capacity() const { return capacity * resource_scale; }
    /// Throws Error(Config) naming the offending key.
    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing optional keys keep their defaults; "system.alpha" and
/// "system.capacity" are required. Throws Error(Config) naming the key.
ExperimentConfig config_from_json(const nlohmann::json& j);

struct FleetDevice {
    DeviceAttributes attributes;
    int level = 4;
    bool greedy = false;
    bool compromised = false;
    /// Alternate destinations used by legacy devices.
    std::vector<std::string> destinations;
};

/// Non-legacy devices (devices_per_level per level) followed by the legacy ones.
std::vector<FleetDevice> build_fleet(const ExperimentConfig& config);

struct WorkloadProfile {
    IntRange requests_per_slot;
    std::array<LevelProfile, 4> levels;
    std::array<double, 4> level_weights{1, 1, 1, 1};
    std::array<std::vector<Address>, 4> devices;
    std::vector<std::pair<Address, int>> greedy;
    std::size_t greedy_burst = 0;
};

/// Draws the slot-t batch: a count from requests_per_slot, then per request
/// a level (by weight), a device of that level, integer demands and a
/// lifetime from the level's ranges. Greedy devices append their bursts.
std::vector<admission::ResourceRequest> generate_batch(Rng& rng, const WorkloadProfile& profile,
                                                       Timeslot t);

struct MetricsReport {
    std::size_t submitted = 0;
    std::size_t accepted = 0;
    std::size_t denied = 0;
    std::map<std::string, std::size_t> denied_by_reason;
    std::array<std::size_t, 4> submitted_by_level{};
    std::array<std::size_t, 4> accepted_by_level{};
    double price_sum = 0;
    ResourceVector utilization_sum;
    std::size_t slots = 0;
    std::size_t blocked_devices = 0;
    std::size_t malformed_activity = 0;
    std::size_t blocked_activity_drops = 0;
    std::size_t blocks = 0;
    std::size_t transactions = 0;
    std::size_t block_bytes_min = 0;
    std::size_t block_bytes_max = 0;
    double block_bytes_mean = 0;
    std::size_t max_block_txs_seen = 0;

    double acceptance_rate() const;
    double level_acceptance(int level) const;
    double mean_price() const;
    ResourceVector mean_utilization() const;
    nlohmann::json to_json() const;
};

struct AuditReport {
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

/// One step of the activity workflow, for ordering checks.
struct WorkflowStep {
    Timeslot t;
    std::string step;
    std::string request_id;
};

struct DecisionRecord {
    Timeslot t;
    admission::ResourceRequest request;
    admission::AdmissionDecision decision;
};

/// The simulated edge site: miner node, contract engine, registry, pool and
/// credit book, driven one timeslot at a time.
class World {
public:
    World(const ExperimentConfig& config, std::uint64_t seed);
    ~World();
    World(const World&) = delete;
    World& operator=(const World&) = delete;

    /// Generates the slot's batch and legacy activity, then runs the pipeline.
    void run_timeslot(Timeslot t);
    /// release -> proxy -> blocked gate -> credit -> exhaustion -> admit ->
    /// reserve and charge -> mine.
    void run_timeslot(Timeslot t, std::vector<admission::ResourceRequest> batch,
                      std::vector<registry::ActivityEvent> activity);
    /// Mines until the pending pool is empty and gathers chain statistics.
    void finish(bool block_stats = true);

    AuditReport audit(bool replay = true) const;

    const ExperimentConfig& config() const { return config_; }
    const MetricsReport& metrics() const { return metrics_; }
    const std::vector<FleetDevice>& fleet() const { return fleet_; }
    ledger::Node& node() { return *node_; }
    const ledger::Chain& chain() const { return node_->chain(); }
    contracts::Engine& engine() { return *engine_; }
    const contracts::Engine& engine() const { return *engine_; }
    registry::Registry& registry() { return *registry_; }
    edgepool::Pool& pool() { return pool_; }
    const edgepool::Pool& pool() const { return pool_; }
    credit::CreditBook& credit() { return credit_; }
    const std::vector<WorkflowStep>& workflow() const { return workflow_; }
    const std::vector<DecisionRecord>& decisions() const { return decisions_; }
    const std::vector<admission::TraceStep>& trace() const { return trace_; }
    std::size_t price_evaluations() const { return price_evaluations_; }

    void write_decisions(std::ostream& out) const;
    void write_utilization(std::ostream& out) const;
    void write_credit_trajectory(std::ostream& out) const;

private:
    struct Pending {
        admission::ResourceRequest request;
        int credit_delta = 0;
        Timeslot deadline = 0;
        bool evaluated = false;
    };

    std::vector<registry::ActivityEvent> generate_activity(Timeslot t);
    credit::ApplyOutcome settle_credit(const Address& device, int delta, Timeslot t);
    void deny_unrecorded(Timeslot t, const admission::ResourceRequest& r);
    void decide(Timeslot t, const admission::ResourceRequest& r, const admission::AdmissionDecision& d);
    void note_trajectory(Timeslot t, const Address& device);
    void mine_all();

    ExperimentConfig config_;
    Rng workload_rng_;
    Rng activity_rng_;
    std::vector<FleetDevice> fleet_;
    std::map<Address, std::size_t> fleet_index_;
    WorkloadProfile workload_;
    std::unique_ptr<ledger::Node> node_;
    std::unique_ptr<contracts::Engine> engine_;
    std::unique_ptr<registry::Registry> registry_;
    Address allocation_contract_;
    edgepool::Pool pool_;
    credit::CreditBook credit_;
    std::map<Address, double> thresholds_;
    std::vector<Pending> carried_;
    std::vector<registry::ActivityEvent> scripted_activity_;
    std::size_t scripted_cursor_ = 0;
    MetricsReport metrics_;
    std::vector<WorkflowStep> workflow_;
    std::vector<DecisionRecord> decisions_;
    std::vector<admission::TraceStep> trace_;
    std::size_t price_evaluations_ = 0;
    std::vector<std::pair<Timeslot, ResourceVector>> utilization_;
    std::vector<std::tuple<Timeslot, Address, int, Coins>> trajectory_;
};

struct RunOptions {
    /// When set, artifacts of each run go to out_dir/seed-<seed>/.
    std::optional<std::filesystem::path> out_dir;
    /// Replay the whole chain during the post-run audit.
    bool full_audit = true;
    /// Worker threads for independent cells; 0 means hardware concurrency.
    unsigned jobs = 0;
};

struct RunResult {
    std::uint64_t seed = 0;
    MetricsReport metrics;
    AuditReport audit;
};

/// Runs one seed end to end and audits it.
RunResult run_single(const ExperimentConfig& config, std::uint64_t seed, const RunOptions& options = {});

struct ExperimentResult {
    std::vector<RunResult> runs;
    double mean_acceptance() const;
    bool audits_ok() const;
};

/// Runs every seed of the config. With an out_dir, also writes
/// metrics.csv there.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

struct SweepRow {
    double beta = 0;
    double scale = 1;
    admission::Scheduler scheduler = admission::Scheduler::Pricing;
    std::uint64_t seed = 0;
    double acceptance_rate = 0;
    bool audit_ok = true;
};

/// beta, seed, acceptance_rate
std::vector<SweepRow> beta_sweep(const ExperimentConfig& base, std::span<const double> betas,
                                 const RunOptions& options = {});
/// scheduler, seed, acceptance_rate
std::vector<SweepRow> scheduler_comparison(const ExperimentConfig& base,
                                           std::span<const admission::Scheduler> schedulers,
                                           const RunOptions& options = {});
/// scale, scheduler, seed, acceptance_rate
std::vector<SweepRow> scale_sweep(const ExperimentConfig& base, std::span<const double> scales,
                                  std::span<const admission::Scheduler> schedulers,
                                  const RunOptions& options = {});

void write_beta_csv(std::ostream& out, std::span<const SweepRow> rows);
void write_scheduler_csv(std::ostream& out, std::span<const SweepRow> rows);
void write_scale_csv(std::ostream& out, std::span<const SweepRow> rows);

/// 1.00, 1.05, ..., 3.00
std::vector<double> default_beta_grid();

}  // namespace edgechain::harness
