#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgechain/common.hpp"

namespace edgechain::admission {

/// alpha is the basic price constant, beta the priority influence factor.
struct PricingParams {
    double alpha = 100.0;
    double beta = 1.35;

    /// Throws Error(Config) unless alpha > 1 and beta >= 1.
    void validate() const;
};

struct ResourceRequest {
    std::string request_id;
    Address device;
    ResourceVector demand;
    /// 1 (urgent) .. 4 (tolerant), inherited from the device record.
    int priority = 1;
    Timeslot lifetime = 1;
    Timeslot arrival = 0;
};

enum class Verdict { Accept, Deny };

enum class DenyReason {
    None,
    /// Some component of the demand exceeds what is currently available.
    Infeasible,
    Blocked,
    InsufficientCoins,
    /// The pool could not serve any request of the batch.
    Exhausted,
    UnknownDevice,
};

const char* to_string(Verdict v);
const char* to_string(DenyReason r);

struct AdmissionDecision {
    std::string request_id;
    Verdict verdict = Verdict::Deny;
    std::optional<double> price;
    DenyReason reason = DenyReason::None;

    bool accepted() const { return verdict == Verdict::Accept; }
};

/// One round of the greedy loop: the priced feasible candidates and the pick.
struct TraceStep {
    ResourceVector available;
    std::vector<std::pair<std::string, double>> candidates;
    std::string chosen;
    double chosen_price = 0;
    /// The payment gate refused the cheapest candidate.
    bool payment_refused = false;
};

struct AdmissionResult {
    /// In decision order; exactly one entry per request of the batch.
    std::vector<AdmissionDecision> decisions;
    ResourceVector remaining;
    std::size_t accepted = 0;
    /// Number of total_price evaluations performed.
    std::size_t price_evaluations = 0;
    std::vector<TraceStep> trace;

    const AdmissionDecision* find(const std::string& request_id) const;
};

/// Consulted before a request is accepted at `price`; returning false denies
/// the request with InsufficientCoins and leaves capacity untouched.
using PaymentGate = std::function<bool(const ResourceRequest&, double price)>;

struct AdmissionOptions {
    PaymentGate gate;
    bool record_trace = false;
};

/// alpha^(r/c) * beta^level. r = 0 yields beta^level for any c.
/// Throws Error(Infeasible) when c = 0 < r.
double unit_price(double r, double c, int level, const PricingParams& params);

/// beta^level * sum_j r_j * alpha^(r_j / c_j); zero-demand components add 0.
/// Throws Error(Infeasible) if the demand does not fit `available`.
double total_price(const ResourceVector& demand, const ResourceVector& available, int level,
                   const PricingParams& params);

/// Greedy request admission: each round denies the requests that no longer
/// fit, prices the rest against the current availability and accepts the
/// cheapest, until nothing fits. Ties go to the earlier arrival, then the
/// smaller request id.
AdmissionResult admit(std::span<const ResourceRequest> batch, ResourceVector available,
                      const PricingParams& params, const AdmissionOptions& options = {});

/// Arrival order, accepting whatever still fits.
AdmissionResult admit_fcfs(std::span<const ResourceRequest> batch, ResourceVector available,
                           const PricingParams& params, const AdmissionOptions& options = {});

/// Like FCFS after a stable sort by priority level, level 1 first.
AdmissionResult admit_priority(std::span<const ResourceRequest> batch, ResourceVector available,
                               const PricingParams& params, const AdmissionOptions& options = {});

enum class Scheduler { Pricing, FCFS, Priority };

const char* to_string(Scheduler s);
/// Accepts "pricing", "fcfs", "priority" (case-insensitive). Throws Error(Config).
Scheduler scheduler_from_string(std::string_view s);

AdmissionResult run_scheduler(Scheduler s, std::span<const ResourceRequest> batch,
                              ResourceVector available, const PricingParams& params,
                              const AdmissionOptions& options = {});

}  // namespace edgechain::admission
