#include "edgechain/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace edgechain::harness {

using admission::AdmissionDecision;
using admission::DenyReason;
using admission::ResourceRequest;
using admission::Verdict;
using nlohmann::json;

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw Error(ErrorCode::Config, "empty integer range");
    const std::uint64_t n = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    if (n == 0) return static_cast<std::int64_t>(next());  // full 64-bit range
    const std::uint64_t threshold = (0 - n) % n;
    while (true) {
        const std::uint64_t x = next();
        if (x >= threshold) return lo + static_cast<std::int64_t>(x % n);
    }
}

double Rng::uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::array<LevelProfile, 4> default_level_profiles() {
    auto uniform = [](std::int64_t lo, std::int64_t hi, IntRange life) {
        LevelProfile p;
        p.demand.fill({lo, hi});
        p.lifetime = life;
        return p;
    };
    LevelProfile l2;
    l2.demand = {IntRange{10, 15}, IntRange{5, 10}, IntRange{5, 10}, IntRange{1, 10}};
    l2.lifetime = {1, 5};
    return {uniform(1, 5, {1, 5}), l2, uniform(1, 5, {1, 5}), uniform(1, 3, {1, 3})};
}

std::vector<double> default_beta_grid() {
    std::vector<double> out;
    for (int i = 0; i <= 40; ++i) out.push_back(std::round((1.0 + 0.05 * i) * 100.0) / 100.0);
    return out;
}

ExperimentConfig::ExperimentConfig() : beta_values(default_beta_grid()) {}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw Error(ErrorCode::Config, key + ": " + why);
    };
    if (seeds.empty()) fail("seeds", "at least one seed is required");
    if (timeslots < 0) fail("timeslots", "must be >= 0");
    if (requests_per_slot.min < 0 || requests_per_slot.min > requests_per_slot.max) {
        fail("requests_per_slot", "need 0 <= min <= max");
    }
    if (!(pricing.alpha > 1)) fail("system.alpha", "must be > 1, got " + decimal_text(pricing.alpha));
    if (!(pricing.beta >= 1)) fail("system.beta", "must be >= 1, got " + decimal_text(pricing.beta));
    if (!capacity.nonnegative()) fail("system.capacity", "must be nonnegative");
    if (!(resource_scale > 0)) fail("system.resource_scale", "must be > 0");
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const std::string key = "levels[" + std::to_string(l) + "]";
        for (const auto& r : levels[l].demand) {
            if (r.min < 0 || r.min > r.max) fail(key + ".demand", "need 0 <= min <= max");
        }
        if (levels[l].lifetime.min < 1 || levels[l].lifetime.min > levels[l].lifetime.max) {
            fail(key + ".lifetime", "need 1 <= min <= max");
        }
        if (!(level_weights[l] >= 0)) fail("level_weights", "must be nonnegative");
    }
    if (!(std::accumulate(level_weights.begin(), level_weights.end(), 0.0) > 0)) {
        fail("level_weights", "at least one weight must be positive");
    }
    if (fleet_file.empty() && devices_per_level == 0) fail("fleet.devices_per_level", "must be >= 1");
    if (greedy_devices > 4 * devices_per_level) {
        fail("fleet.greedy_devices", "more greedy devices than devices");
    }
    if (compromised_legacy > legacy_devices) {
        fail("fleet.compromised_legacy", "exceeds legacy_devices");
    }
    if (!(legacy_activity_rate >= 0 && legacy_activity_rate <= 1)) {
        fail("fleet.legacy_activity_rate", "must be within [0, 1]");
    }
    try {
        credit.validate();
    } catch (const Error& e) {
        fail("credit", e.what());
    }
    if (difficulty_bits < 0 || difficulty_bits > 32) fail("ledger.difficulty_bits", "must be 0..32");
    if (max_block_txs == 0) fail("ledger.max_block_txs", "must be >= 1");
    if (edge_reserve < Coins{}) fail("ledger.edge_reserve", "must be >= 0");
    if (registration.initial_coins < Coins{}) fail("registration.initial_coins", "must be >= 0");
    if (registration.default_priority < 1 || registration.default_priority > 4) {
        fail("registration.default_priority", "must be 1..4");
    }
    if (carry_over_slots < 0) fail("carry_over_slots", "must be >= 0");
    for (double b : beta_values) {
        if (!(b >= 1)) fail("beta_values", "every beta must be >= 1");
    }
    for (double s : scale_values) {
        if (!(s > 0)) fail("scale_values", "every scale must be > 0");
    }
}

// ---------------------------------------------------------------- workload

namespace {

Range to_range(const IntRange& r) {
    return {static_cast<double>(r.min), static_cast<double>(r.max)};
}

std::string mac_for(std::size_t k, int prefix) {
    char buf[18];
    std::snprintf(buf, sizeof buf, "02:%02x:00:%02x:%02x:%02x", prefix,
                  static_cast<unsigned>((k >> 16) & 0xff), static_cast<unsigned>((k >> 8) & 0xff),
                  static_cast<unsigned>(k & 0xff));
    return buf;
}

std::vector<FleetDevice> load_fleet_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read fleet file " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Config, "fleet file " + path + ": " + e.what());
    }
    if (!j.is_array()) throw Error(ErrorCode::Config, "fleet file must hold a JSON array");
    std::vector<FleetDevice> out;
    for (const auto& item : j) {
        FleetDevice d;
        try {
            d.attributes = DeviceAttributes::from_json(item.at("attributes"));
            d.level = item.value("level", 4);
            d.greedy = item.value("greedy", false);
            d.compromised = item.value("compromised", false);
            d.destinations = item.value("destinations", std::vector<std::string>{});
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Config, "fleet file entry: " + std::string(e.what()));
        }
        if (d.level < 1 || d.level > 4) throw Error(ErrorCode::Config, "fleet file: level must be 1..4");
        if (auto why = d.attributes.problem(); !why.empty()) {
            throw Error(ErrorCode::Config, "fleet file: " + why);
        }
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace

std::vector<FleetDevice> build_fleet(const ExperimentConfig& config) {
    std::vector<std::string> apps;
    for (const auto& [name, rate] : config.app_rates) apps.push_back(name);
    if (apps.empty()) apps.push_back("");

    std::vector<FleetDevice> out;
    if (!config.fleet_file.empty()) {
        out = load_fleet_file(config.fleet_file);
    } else {
        std::size_t k = 0;
        for (int level = 1; level <= 4; ++level) {
            const auto& prof = config.levels[level - 1];
            for (std::size_t i = 0; i < config.devices_per_level; ++i, ++k) {
                FleetDevice d;
                d.level = level;
                auto& a = d.attributes;
                a.account_address = derive_address("device/" + std::to_string(k));
                a.network_port = 40000 + static_cast<int>(k % 20000);
                a.io_data_types = {"telemetry"};
                a.cpu_request = to_range(prof.demand[0]);
                a.memory_request = to_range(prof.demand[1]);
                a.storage_request = to_range(prof.demand[2]);
                a.bandwidth_request = to_range(prof.demand[3]);
                a.mac_address = mac_for(k, 1);
                a.allowed_destinations = {"edge-server"};
                a.app_profile = apps[k % apps.size()];
                out.push_back(std::move(d));
            }
        }
        // Spread greedy devices round-robin over the levels.
        for (std::size_t g = 0; g < config.greedy_devices; ++g) {
            out[(g % 4) * config.devices_per_level + g / 4].greedy = true;
        }
    }
    for (std::size_t j = 0; j < config.legacy_devices; ++j) {
        FleetDevice d;
        d.level = config.registration.default_priority;
        d.compromised = j < config.compromised_legacy;
        auto& a = d.attributes;
        a.account_address = derive_address("legacy/" + std::to_string(j));
        a.network_port = 5683;
        a.io_data_types = {"sensor"};
        a.mac_address = mac_for(j, 2);
        a.legacy = true;
        a.app_profile = apps[j % apps.size()];
        d.destinations = {"cloud-" + std::to_string(j) + ".example:443", "ntp.example:123"};
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<ResourceRequest> generate_batch(Rng& rng, const WorkloadProfile& profile, Timeslot t) {
    std::vector<ResourceRequest> out;
    const auto count = rng.uniform_int(profile.requests_per_slot.min, profile.requests_per_slot.max);
    const double total_weight =
        std::accumulate(profile.level_weights.begin(), profile.level_weights.end(), 0.0);
    const bool uniform_levels = std::all_of(profile.level_weights.begin(), profile.level_weights.end(),
                                            [&](double w) { return w == profile.level_weights[0]; });
    std::size_t seq = 0;

    auto draw = [&](int level, const Address& device) {
        const auto& lp = profile.levels[level - 1];
        ResourceRequest r;
        r.request_id = derive_address("request/" + std::to_string(t) + "/" + std::to_string(seq++));
        r.device = device;
        for (std::size_t j = 0; j < kResourceTypes; ++j) {
            r.demand[j] = static_cast<double>(rng.uniform_int(lp.demand[j].min, lp.demand[j].max));
        }
        r.priority = level;
        r.lifetime = rng.uniform_int(lp.lifetime.min, lp.lifetime.max);
        r.arrival = t;
        out.push_back(std::move(r));
    };

    for (std::int64_t i = 0; i < count; ++i) {
        int level = 1;
        if (uniform_levels) {
            level = static_cast<int>(rng.uniform_int(1, 4));
        } else {
            double x = rng.uniform01() * total_weight;
            level = 4;
            for (int l = 0; l < 4; ++l) {
                if (x < profile.level_weights[l]) {
                    level = l + 1;
                    break;
                }
                x -= profile.level_weights[l];
            }
        }
        const auto& pool = profile.devices[level - 1];
        if (pool.empty()) continue;
        const auto pick = rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1);
        draw(level, pool[static_cast<std::size_t>(pick)]);
    }
    for (const auto& [device, level] : profile.greedy) {
        for (std::size_t b = 0; b < profile.greedy_burst; ++b) draw(level, device);
    }
    return out;
}

// ----------------------------------------------------------------- metrics

double MetricsReport::acceptance_rate() const {
    return submitted ? static_cast<double>(accepted) / static_cast<double>(submitted) : 0.0;
}

double MetricsReport::level_acceptance(int level) const {
    const auto s = submitted_by_level.at(level - 1);
    return s ? static_cast<double>(accepted_by_level[level - 1]) / static_cast<double>(s) : 0.0;
}

double MetricsReport::mean_price() const {
    return accepted ? price_sum / static_cast<double>(accepted) : 0.0;
}

ResourceVector MetricsReport::mean_utilization() const {
    return slots ? utilization_sum * (1.0 / static_cast<double>(slots)) : ResourceVector{};
}

json MetricsReport::to_json() const {
    json levels = json::array();
    for (int l = 1; l <= 4; ++l) {
        levels.push_back({{"level", l},
                          {"submitted", submitted_by_level[l - 1]},
                          {"accepted", accepted_by_level[l - 1]},
                          {"acceptance_rate", level_acceptance(l)}});
    }
    const auto u = mean_utilization();
    return {{"submitted", submitted},
            {"accepted", accepted},
            {"denied", denied},
            {"acceptance_rate", acceptance_rate()},
            {"denied_by_reason", denied_by_reason},
            {"levels", levels},
            {"mean_price", mean_price()},
            {"mean_utilization", {u[0], u[1], u[2], u[3]}},
            {"blocked_devices", blocked_devices},
            {"activity", {{"malformed", malformed_activity}, {"blocked_drops", blocked_activity_drops}}},
            {"chain",
             {{"blocks", blocks},
              {"transactions", transactions},
              {"max_block_txs", max_block_txs_seen},
              {"block_bytes", {{"min", block_bytes_min}, {"max", block_bytes_max}, {"mean", block_bytes_mean}}}}}};
}

// ------------------------------------------------------------------- world

namespace {

std::vector<registry::ActivityEvent> load_activity(const std::string& path, std::size_t& malformed) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read activity file " + path);
    std::vector<registry::ActivityEvent> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (auto e = registry::parse_activity_line(line)) {
            out.push_back(*e);
        } else {
            ++malformed;
        }
    }
    return out;
}

json request_args(const ResourceRequest& r) {
    std::array<std::string, kResourceTypes> demand;
    for (std::size_t j = 0; j < kResourceTypes; ++j) demand[j] = decimal_text(r.demand[j]);
    return {{"arrival", r.arrival},   {"demand", demand},     {"device", r.device},
            {"lifetime", r.lifetime}, {"priority", r.priority}, {"request_id", r.request_id}};
}

}  // namespace

World::World(const ExperimentConfig& config, std::uint64_t seed)
    : config_(config),
      workload_rng_(seed),
      activity_rng_(seed ^ 0x9e3779b97f4a7c15ULL),
      pool_(config.scaled_capacity()),
      credit_(config.credit) {
    config_.validate();
    fleet_ = build_fleet(config_);

    const Address edge = derive_address("edge-server");
    const Address proxy = derive_address("proxy");
    ledger::GenesisConfig g;
    g.difficulty_bits = config_.difficulty_bits;
    g.miner = edge;
    g.max_block_txs = config_.max_block_txs;
    g.initial_accounts = {{edge, config_.edge_reserve}, {proxy, Coins{}}};
    node_ = std::make_unique<ledger::Node>(edge, ledger::NodeRole::FullMiner,
                                           ledger::Chain::init_genesis(g));
    engine_ = std::make_unique<contracts::Engine>(node_->chain(), edge);

    auto reg_policy = config_.registration;
    reg_policy.initial_credit = config_.credit.initial_credit;
    registry_ = std::make_unique<registry::Registry>(*engine_, proxy, reg_policy);
    allocation_contract_ = engine_->deploy(contracts::CodeId::AllocationContract,
                                           Authority::EdgeServer, edge);

    const ResourceVector total = pool_.total();
    for (std::size_t i = 0; i < fleet_.size(); ++i) {
        const auto& d = fleet_[i];
        const Address& addr = d.attributes.account_address;
        if (!fleet_index_.emplace(addr, i).second) {
            throw Error(ErrorCode::Config, "duplicate device address " + addr);
        }
        if (d.attributes.legacy) {
            registry_->add_legacy_profile(d.attributes, d.level);
            continue;
        }
        registry_->register_device(d.attributes, Authority::Device, addr, d.level, 0);
        credit_.open(addr);
        double thr = std::numeric_limits<double>::infinity();
        try {
            thr = credit::price_threshold(d.attributes.max_demand(), total, d.level, config_.pricing,
                                          config_.credit);
        } catch (const Error&) {
            // Registered maximum exceeds W; the price rule cannot trigger.
        }
        thresholds_[addr] = thr;
        workload_.devices[d.level - 1].push_back(addr);
        if (d.greedy) workload_.greedy.emplace_back(addr, d.level);
    }
    workload_.requests_per_slot = config_.requests_per_slot;
    workload_.levels = config_.levels;
    workload_.level_weights = config_.level_weights;
    workload_.greedy_burst = config_.greedy_burst;

    if (!config_.activity_file.empty()) {
        scripted_activity_ = load_activity(config_.activity_file, metrics_.malformed_activity);
    }
    mine_all();
}

World::~World() = default;

std::vector<registry::ActivityEvent> World::generate_activity(Timeslot t) {
    std::vector<registry::ActivityEvent> out;
    if (!config_.activity_file.empty()) {
        while (scripted_cursor_ < scripted_activity_.size() &&
               scripted_activity_[scripted_cursor_].timeslot <= t) {
            out.push_back(scripted_activity_[scripted_cursor_++]);
        }
        return out;
    }
    for (const auto& d : fleet_) {
        if (!d.attributes.legacy) continue;
        if (!activity_rng_.bernoulli(config_.legacy_activity_rate)) continue;
        registry::ActivityEvent e;
        e.device = d.attributes.account_address;
        e.port = d.attributes.network_port;
        e.destination = d.destinations.empty()
                            ? std::string("edge-server")
                            : d.destinations[static_cast<std::size_t>(activity_rng_.uniform_int(
                                  0, static_cast<std::int64_t>(d.destinations.size()) - 1))];
        if (d.compromised && t >= config_.compromise_onset && activity_rng_.bernoulli(0.5)) {
            e.port = 6667;
            e.destination = "198.51.100.7:6667";
        }
        double rate = 1024.0;
        if (auto it = config_.app_rates.find(d.attributes.app_profile); it != config_.app_rates.end()) {
            rate = it->second;
        }
        e.bytes = static_cast<std::int64_t>(std::llround(rate * (0.5 + activity_rng_.uniform01())));
        e.timeslot = t;
        out.push_back(std::move(e));
    }
    return out;
}

void World::run_timeslot(Timeslot t) {
    // Workload and activity draw from separate streams, so outcomes never
    // shift the request sequence.
    auto batch = generate_batch(workload_rng_, workload_, t);
    auto activity = generate_activity(t);
    run_timeslot(t, std::move(batch), std::move(activity));
}

credit::ApplyOutcome World::settle_credit(const Address& device, int delta, Timeslot t) {
    auto out = credit_.apply_delta(device, delta);
    if (out.credit_after != out.credit_before) {
        registry_->set_credit(device, out.credit_after, Authority::EdgeServer, t);
        if (out.block) registry_->set_blocked(device, true, Authority::EdgeServer, t);
        note_trajectory(t, device);
    }
    return out;
}

void World::note_trajectory(Timeslot t, const Address& device) {
    trajectory_.emplace_back(t, device, credit_.at(device).credit, engine_->balance(device));
}

void World::decide(Timeslot t, const ResourceRequest& r, const AdmissionDecision& d) {
    auto res = engine_->invoke({engine_->edge_server(), allocation_contract_, "decide",
                                {{"request_id", r.request_id},
                                 {"verdict", admission::to_string(d.verdict)},
                                 {"price", d.price ? decimal_text(*d.price) : std::string()},
                                 {"reason", d.accepted() ? "" : admission::to_string(d.reason)}},
                                Authority::EdgeServer, t});
    if (!res.ok()) throw Error(ErrorCode::Consistency, "decide " + r.request_id + ": " + res.reason);
    workflow_.push_back({t, d.accepted() ? "accept" : "deny", r.request_id});
    decisions_.push_back({t, r, d});
    if (d.accepted()) {
        ++metrics_.accepted;
        ++metrics_.accepted_by_level[r.priority - 1];
        metrics_.price_sum += d.price.value_or(0.0);
    } else {
        ++metrics_.denied;
        ++metrics_.denied_by_reason[admission::to_string(d.reason)];
    }
}

void World::deny_unrecorded(Timeslot t, const ResourceRequest& r) {
    AdmissionDecision d{r.request_id, Verdict::Deny, std::nullopt, DenyReason::UnknownDevice};
    decisions_.push_back({t, r, d});
    workflow_.push_back({t, "deny", r.request_id});
    ++metrics_.denied;
    ++metrics_.denied_by_reason[admission::to_string(d.reason)];
}

void World::mine_all() {
    while (!node_->chain().pending().empty()) node_->mine_pending();
}

void World::run_timeslot(Timeslot t, std::vector<ResourceRequest> batch,
                         std::vector<registry::ActivityEvent> activity) {
    const Address& edge = engine_->edge_server();

    // 1. Expired allocations return their resources and coins.
    for (const auto& a : pool_.release_expired(t)) {
        const Coins back = credit::coin_return(a.coins_charged, a.credit_delta, credit_.policy());
        if (back > Coins{}) {
            auto r = engine_->refund(a.device, back, Authority::EdgeServer, t);
            if (!r.ok()) throw Error(ErrorCode::Consistency, "refund failed: " + r.reason);
        }
        auto r = engine_->invoke({edge, allocation_contract_, "release",
                                  {{"request_id", a.request_id}, {"refund", back.to_string()}},
                                  Authority::EdgeServer, t});
        if (!r.ok()) throw Error(ErrorCode::Consistency, "release failed: " + r.reason);
        workflow_.push_back({t, "release", a.request_id});
        note_trajectory(t, a.device);
    }

    // 2. Legacy traffic through the proxy; violations cost credit.
    const auto report = registry_->proxy_observe(activity, [&](const registry::ObservedActivity& o) {
        const Address& dev = o.event.device;
        if (!credit_.contains(dev)) credit_.open(dev);
        const int delta = credit_.evaluate_activity(dev, o.violations);
        if (delta != 0) settle_credit(dev, delta, t);
    });
    metrics_.malformed_activity += report.malformed;
    metrics_.blocked_activity_drops += report.blocked_drops;

    // 3. Submission: requests carried from earlier slots come first.
    std::vector<Pending> live = std::move(carried_);
    carried_.clear();
    for (auto& r : batch) {
        ++metrics_.submitted;
        const DeviceRecord* rec = registry_->stored(r.device);
        if (!rec) {
            r.priority = std::clamp(r.priority, 1, 4);
            ++metrics_.submitted_by_level[r.priority - 1];
            deny_unrecorded(t, r);
            continue;
        }
        r.priority = rec->priority;
        ++metrics_.submitted_by_level[r.priority - 1];
        const Authority who = rec->attributes.legacy ? Authority::Proxy : Authority::Device;
        const Address caller = rec->attributes.legacy ? registry_->proxy() : r.device;
        auto res = engine_->invoke({caller, allocation_contract_, "submit_request", request_args(r), who, t});
        if (!res.ok()) {
            deny_unrecorded(t, r);
            continue;
        }
        live.push_back({std::move(r), 0, t + config_.carry_over_slots, false});
    }

    // 4. Blocked devices are turned away before pricing; 5. the rest are scored.
    std::vector<Pending> eligible;
    for (auto& p : live) {
        const auto& r = p.request;
        if (registry_->stored(r.device)->is_blocked) {
            decide(t, r, {r.request_id, Verdict::Deny, std::nullopt, DenyReason::Blocked});
            continue;
        }
        if (!p.evaluated) {
            p.evaluated = true;
            double price = 0;
            if (r.demand.fits_within(pool_.available())) {
                price = admission::total_price(r.demand, pool_.available(), r.priority, config_.pricing);
            }
            if (!credit_.contains(r.device)) credit_.open(r.device);
            auto thr = thresholds_.find(r.device);
            const auto ev = credit_.evaluate_request(
                r, price, thr == thresholds_.end() ? std::numeric_limits<double>::infinity() : thr->second);
            p.credit_delta = ev.delta;
            if (settle_credit(r.device, ev.delta, t).block) {
                decide(t, r, {r.request_id, Verdict::Deny, std::nullopt, DenyReason::Blocked});
                continue;
            }
        }
        eligible.push_back(std::move(p));
    }

    auto finish_denial = [&](Pending& p, DenyReason reason) {
        const bool capacity = reason == DenyReason::Infeasible || reason == DenyReason::Exhausted;
        if (capacity && p.deadline > t) {
            carried_.push_back(std::move(p));
            return;
        }
        decide(t, p.request, {p.request.request_id, Verdict::Deny, std::nullopt, reason});
    };

    std::vector<ResourceRequest> requests;
    requests.reserve(eligible.size());
    for (const auto& p : eligible) requests.push_back(p.request);

    // 6. Exhaustion gate.
    if (!requests.empty() && pool_.is_exhausted(requests)) {
        for (auto& p : eligible) finish_denial(p, DenyReason::Exhausted);
    } else if (!requests.empty()) {
        // 7. Admission with the coin balance as payment gate.
        std::map<Address, Coins> committed;
        admission::AdmissionOptions opts;
        opts.record_trace = config_.record_trace;
        opts.gate = [&](const ResourceRequest& r, double price) {
            const Coins cost = Coins::from_double(price);
            Coins& spent = committed[r.device];
            if (engine_->balance(r.device) - spent < cost) return false;
            spent += cost;
            return true;
        };
        auto result = admission::run_scheduler(config_.scheduler, requests, pool_.available(),
                                               config_.pricing, opts);
        price_evaluations_ += result.price_evaluations;
        if (config_.record_trace) {
            trace_.insert(trace_.end(), result.trace.begin(), result.trace.end());
        }
        std::map<std::string, Pending*> by_id;
        for (auto& p : eligible) by_id[p.request.request_id] = &p;

        // 8. Accept, reserve, charge; in that order.
        for (const auto& d : result.decisions) {
            Pending& p = *by_id.at(d.request_id);
            if (!d.accepted()) {
                finish_denial(p, d.reason);
                continue;
            }
            decide(t, p.request, d);
            const Coins cost = Coins::from_double(*d.price);
            pool_.reserve(d, p.request, t, cost, p.credit_delta);
            workflow_.push_back({t, "reserve", d.request_id});
            if (cost > Coins{}) {
                auto r = engine_->charge(p.request.device, cost, Authority::EdgeServer, t);
                if (!r.ok()) throw Error(ErrorCode::Consistency, "charge failed: " + r.reason);
            }
            workflow_.push_back({t, "charge", d.request_id});
            note_trajectory(t, p.request.device);
        }
    }

    if (!pool_.accounting_holds()) throw Error(ErrorCode::Consistency, "pool accounting broken");

    // 9. Everything recorded this slot goes into blocks.
    mine_all();
    const auto u = pool_.utilization();
    metrics_.utilization_sum = metrics_.utilization_sum + u;
    ++metrics_.slots;
    utilization_.emplace_back(t, u);
}

void World::finish(bool block_stats) {
    // Requests still waiting on carry-over are settled as denied.
    for (auto& p : carried_) {
        decide(p.deadline, p.request,
               {p.request.request_id, Verdict::Deny, std::nullopt, DenyReason::Infeasible});
    }
    carried_.clear();
    mine_all();
    const auto& chain = node_->chain();
    metrics_.blocks = chain.length();
    metrics_.transactions = chain.total_transactions();
    metrics_.blocked_devices = 0;
    for (const auto& [addr, rec] : engine_->registration()->records()) {
        if (rec.is_blocked) ++metrics_.blocked_devices;
    }
    metrics_.max_block_txs_seen = 0;
    for (const auto& b : chain.blocks()) {
        metrics_.max_block_txs_seen = std::max(metrics_.max_block_txs_seen, b.txs.size());
    }
    if (block_stats && chain.length() > 1) {
        std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0, sum = 0;
        for (std::size_t h = 1; h < chain.length(); ++h) {
            const std::size_t n = chain.blocks()[h].serialize().size();
            lo = std::min(lo, n);
            hi = std::max(hi, n);
            sum += n;
        }
        metrics_.block_bytes_min = lo;
        metrics_.block_bytes_max = hi;
        metrics_.block_bytes_mean = static_cast<double>(sum) / static_cast<double>(chain.length() - 1);
    }
}

AuditReport World::audit(bool replay) const {
    AuditReport out;
    auto fail = [&](std::string s) { out.failures.push_back(std::move(s)); };
    const auto& chain = node_->chain();

    if (!chain.pending().empty()) fail("unmined transactions remain");
    if (replay) {
        const auto v = chain.validate();
        if (!v.valid) fail("chain invalid: " + v.reason);
        try {
            auto rebuilt = contracts::Engine::replay(chain);
            if (rebuilt->snapshot() != engine_->snapshot()) fail("replayed state differs from live state");
        } catch (const Error& e) {
            fail(std::string("replay failed: ") + e.what());
        }
    }
    if (engine_->total_coins() != engine_->total_minted()) fail("coin conservation violated");
    for (const auto& [addr, bal] : engine_->balances()) {
        if (bal < Coins{}) fail("negative balance for " + addr);
    }
    if (metrics_.accepted + metrics_.denied + carried_.size() != metrics_.submitted) {
        fail("accepted + denied != submitted");
    }
    if (!pool_.accounting_holds()) fail("pool accounting broken");

    for (const auto& [addr, rec] : engine_->registration()->records()) {
        if (!credit_.contains(addr)) {
            if (rec.credit != credit_.policy().initial_credit || rec.is_blocked) {
                fail("registry credit without credit account: " + addr);
            }
            continue;
        }
        const int c = credit_.at(addr).credit;
        if (c != rec.credit) fail("credit mismatch for " + addr);
        if (c < 0 || c > credit_.policy().max_credit) fail("credit out of bounds for " + addr);
        if (rec.is_blocked != (c == 0)) fail("blocked flag disagrees with credit for " + addr);
    }

    // accept -> reserve -> charge, at most once each.
    std::map<std::string, int> stage;
    for (const auto& s : workflow_) {
        int& st = stage[s.request_id];
        if (s.step == "accept") {
            if (st != 0) fail("second decision for " + s.request_id);
            st = 1;
        } else if (s.step == "deny") {
            if (st != 0) fail("second decision for " + s.request_id);
            st = -1;
        } else if (s.step == "reserve") {
            if (st != 1) fail("reserve without accept for " + s.request_id);
            st = 2;
        } else if (s.step == "charge") {
            if (st != 2) fail("charge without reserve for " + s.request_id);
            st = 3;
        } else if (s.step == "release") {
            if (st != 3) fail("release of unheld allocation " + s.request_id);
            st = 4;
        }
    }
    return out;
}

void World::write_decisions(std::ostream& out) const {
    for (const auto& rec : decisions_) {
        const auto& r = rec.request;
        json j = {{"t", rec.t},
                  {"request_id", r.request_id},
                  {"device", r.device},
                  {"level", r.priority},
                  {"demand", {r.demand[0], r.demand[1], r.demand[2], r.demand[3]}},
                  {"lifetime", r.lifetime},
                  {"verdict", admission::to_string(rec.decision.verdict)},
                  {"reason", rec.decision.accepted() ? "" : admission::to_string(rec.decision.reason)}};
        if (rec.decision.price) j["price"] = *rec.decision.price;
        out << j.dump() << '\n';
    }
}

void World::write_utilization(std::ostream& out) const {
    out << "timeslot,cpu,memory,storage,bandwidth\n";
    for (const auto& [t, u] : utilization_) {
        out << t;
        for (std::size_t j = 0; j < kResourceTypes; ++j) out << ',' << decimal_text(u[j]);
        out << '\n';
    }
}

void World::write_credit_trajectory(std::ostream& out) const {
    out << "timeslot,device,credit,balance\n";
    for (const auto& [t, dev, c, bal] : trajectory_) {
        out << t << ',' << dev << ',' << c << ',' << bal.to_string() << '\n';
    }
}

// ------------------------------------------------------------------ runner

namespace {

template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn fn) {
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i; (i = next++) < n;) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
                next = n;
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void write_file(const std::filesystem::path& p, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
    body(out);
    if (!out) throw Error(ErrorCode::Io, "write failed: " + p.string());
}

}  // namespace

RunResult run_single(const ExperimentConfig& config, std::uint64_t seed, const RunOptions& options) {
    World w(config, seed);
    for (Timeslot t = 0; t < config.timeslots; ++t) w.run_timeslot(t);
    w.finish(options.out_dir.has_value());
    RunResult res{seed, w.metrics(), w.audit(options.full_audit)};

    if (options.out_dir) {
        const auto dir = *options.out_dir / ("seed-" + std::to_string(seed));
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
        write_file(dir / "chain.jsonl", [&](std::ostream& o) { w.chain().write(o); });
        write_file(dir / "events.jsonl", [&](std::ostream& o) { w.engine().write_events(o); });
        write_file(dir / "decisions.jsonl", [&](std::ostream& o) { w.write_decisions(o); });
        write_file(dir / "credit_traj.csv", [&](std::ostream& o) { w.write_credit_trajectory(o); });
        write_file(dir / "utilization.csv", [&](std::ostream& o) { w.write_utilization(o); });
        write_file(dir / "state.json", [&](std::ostream& o) {
            json audit = json::array();
            for (const auto& f : res.audit.failures) audit.push_back(f);
            o << json{{"seed", seed},
                      {"metrics", res.metrics.to_json()},
                      {"audit", {{"ok", res.audit.ok()}, {"failures", audit}}},
                      {"state", w.engine().snapshot()}}
                     .dump(2)
              << '\n';
        });
        if (config.record_trace) {
            write_file(dir / "trace.jsonl", [&](std::ostream& o) {
                for (const auto& s : w.trace()) {
                    json cands = json::array();
                    for (const auto& [id, price] : s.candidates) cands.push_back({id, price});
                    o << json{{"available", {s.available[0], s.available[1], s.available[2], s.available[3]}},
                              {"candidates", cands},
                              {"chosen", s.chosen},
                              {"chosen_price", s.chosen_price},
                              {"payment_refused", s.payment_refused}}
                             .dump()
                      << '\n';
                }
            });
        }
    }
    return res;
}

double ExperimentResult::mean_acceptance() const {
    if (runs.empty()) return 0.0;
    double s = 0;
    for (const auto& r : runs) s += r.metrics.acceptance_rate();
    return s / static_cast<double>(runs.size());
}

bool ExperimentResult::audits_ok() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.audit.ok(); });
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    config.validate();
    ExperimentResult out;
    out.runs.resize(config.seeds.size());
    parallel_for(config.seeds.size(), options.jobs,
                 [&](std::size_t i) { out.runs[i] = run_single(config, config.seeds[i], options); });
    if (options.out_dir) {
        write_file(*options.out_dir / "metrics.csv", [&](std::ostream& o) {
            o << "seed,submitted,accepted,denied,acceptance_rate,mean_price,blocked_devices,blocks,"
                 "transactions,block_bytes_mean,audit_ok\n";
            for (const auto& r : out.runs) {
                const auto& m = r.metrics;
                o << r.seed << ',' << m.submitted << ',' << m.accepted << ',' << m.denied << ','
                  << decimal_text(m.acceptance_rate()) << ',' << decimal_text(m.mean_price()) << ','
                  << m.blocked_devices << ',' << m.blocks << ',' << m.transactions << ','
                  << decimal_text(m.block_bytes_mean) << ',' << (r.audit.ok() ? 1 : 0) << '\n';
            }
        });
    }
    return out;
}

namespace {

std::vector<SweepRow> run_cells(std::vector<std::pair<ExperimentConfig, SweepRow>> cells,
                                const RunOptions& options) {
    for (const auto& c : cells) c.first.validate();
    RunOptions cell_opts = options;
    cell_opts.out_dir.reset();
    std::vector<SweepRow> rows(cells.size());
    parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
        auto& [cfg, row] = cells[i];
        const auto r = run_single(cfg, row.seed, cell_opts);
        row.acceptance_rate = r.metrics.acceptance_rate();
        row.audit_ok = r.audit.ok();
        rows[i] = row;
    });
    return rows;
}

}  // namespace

std::vector<SweepRow> beta_sweep(const ExperimentConfig& base, std::span<const double> betas,
                                 const RunOptions& options) {
    std::vector<std::pair<ExperimentConfig, SweepRow>> cells;
    for (double b : betas) {
        for (auto seed : base.seeds) {
            ExperimentConfig c = base;
            c.pricing.beta = b;
            cells.push_back({std::move(c), SweepRow{b, base.resource_scale, base.scheduler, seed}});
        }
    }
    return run_cells(std::move(cells), options);
}

std::vector<SweepRow> scheduler_comparison(const ExperimentConfig& base,
                                           std::span<const admission::Scheduler> schedulers,
                                           const RunOptions& options) {
    std::vector<std::pair<ExperimentConfig, SweepRow>> cells;
    for (auto s : schedulers) {
        for (auto seed : base.seeds) {
            ExperimentConfig c = base;
            c.scheduler = s;
            cells.push_back({std::move(c), SweepRow{base.pricing.beta, base.resource_scale, s, seed}});
        }
    }
    return run_cells(std::move(cells), options);
}

std::vector<SweepRow> scale_sweep(const ExperimentConfig& base, std::span<const double> scales,
                                  std::span<const admission::Scheduler> schedulers,
                                  const RunOptions& options) {
    std::vector<std::pair<ExperimentConfig, SweepRow>> cells;
    for (double sc : scales) {
        for (auto s : schedulers) {
            for (auto seed : base.seeds) {
                ExperimentConfig c = base;
                c.resource_scale = sc;
                c.scheduler = s;
                cells.push_back({std::move(c), SweepRow{base.pricing.beta, sc, s, seed}});
            }
        }
    }
    return run_cells(std::move(cells), options);
}

void write_beta_csv(std::ostream& out, std::span<const SweepRow> rows) {
    out << "beta,seed,acceptance_rate\n";
    for (const auto& r : rows) {
        out << decimal_text(r.beta) << ',' << r.seed << ',' << decimal_text(r.acceptance_rate) << '\n';
    }
}

void write_scheduler_csv(std::ostream& out, std::span<const SweepRow> rows) {
    out << "scheduler,seed,acceptance_rate\n";
    for (const auto& r : rows) {
        out << admission::to_string(r.scheduler) << ',' << r.seed << ','
            << decimal_text(r.acceptance_rate) << '\n';
    }
}

void write_scale_csv(std::ostream& out, std::span<const SweepRow> rows) {
    out << "scale,scheduler,seed,acceptance_rate\n";
    for (const auto& r : rows) {
        out << decimal_text(r.scale) << ',' << admission::to_string(r.scheduler) << ',' << r.seed << ','
            << decimal_text(r.acceptance_rate) << '\n';
    }
}

}  // namespace edgechain::harness
