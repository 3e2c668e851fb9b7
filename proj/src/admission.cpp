#include "edgechain/admission.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace edgechain::admission {

void PricingParams::validate() const {
    if (!(alpha > 1.0)) {
        throw Error(ErrorCode::Config, "alpha must be > 1, got " + decimal_text(alpha));
    }
    if (!(beta >= 1.0)) {
        throw Error(ErrorCode::Config, "beta must be >= 1, got " + decimal_text(beta));
    }
}

const char* to_string(Verdict v) { return v == Verdict::Accept ? "Accept" : "Deny"; }

const char* to_string(DenyReason r) {
    switch (r) {
        case DenyReason::None: return "None";
        case DenyReason::Infeasible: return "Infeasible";
        case DenyReason::Blocked: return "Blocked";
        case DenyReason::InsufficientCoins: return "InsufficientCoins";
        case DenyReason::Exhausted: return "Exhausted";
        case DenyReason::UnknownDevice: return "UnknownDevice";
    }
    return "?";
}

const AdmissionDecision* AdmissionResult::find(const std::string& request_id) const {
    for (const auto& d : decisions) {
        if (d.request_id == request_id) return &d;
    }
    return nullptr;
}

double unit_price(double r, double c, int level, const PricingParams& params) {
    const double priority_factor = std::pow(params.beta, level);
    if (r == 0) return priority_factor;
    if (c <= 0) {
        throw Error(ErrorCode::Infeasible, "unit price requested with no available resource");
    }
    return std::pow(params.alpha, r / c) * priority_factor;
}

double total_price(const ResourceVector& demand, const ResourceVector& available, int level,
                   const PricingParams& params) {
    if (!demand.fits_within(available)) {
        throw Error(ErrorCode::Infeasible, "demand " + demand.to_string() + " exceeds available " +
                                               available.to_string());
    }
    double sum = 0;
    for (std::size_t j = 0; j < kResourceTypes; ++j) {
        const double r = demand[j];
        if (r == 0) continue;  // also covers r = c = 0
        sum += r * std::pow(params.alpha, r / available[j]);
    }
    return std::pow(params.beta, level) * sum;
}

namespace {

AdmissionDecision accept(const ResourceRequest& r, double price) {
    return {r.request_id, Verdict::Accept, price, DenyReason::None};
}

AdmissionDecision deny(const ResourceRequest& r, DenyReason why, std::optional<double> price = {}) {
    return {r.request_id, Verdict::Deny, price, why};
}

bool earlier(const ResourceRequest& a, const ResourceRequest& b) {
    if (a.arrival != b.arrival) return a.arrival < b.arrival;
    return a.request_id < b.request_id;
}

/// Scans `order` once, accepting every request that still fits.
AdmissionResult scan_in_order(std::span<const ResourceRequest> batch,
                              const std::vector<std::size_t>& order, ResourceVector available,
                              const PricingParams& params, const AdmissionOptions& options) {
    AdmissionResult out;
    for (std::size_t idx : order) {
        const auto& req = batch[idx];
        if (!req.demand.fits_within(available)) {
            out.decisions.push_back(deny(req, DenyReason::Infeasible));
            continue;
        }
        const double price = total_price(req.demand, available, req.priority, params);
        ++out.price_evaluations;
        if (options.gate && !options.gate(req, price)) {
            out.decisions.push_back(deny(req, DenyReason::InsufficientCoins, price));
            continue;
        }
        out.decisions.push_back(accept(req, price));
        available = available - req.demand;
        ++out.accepted;
    }
    out.remaining = available;
    return out;
}

}  // namespace

AdmissionResult admit(std::span<const ResourceRequest> batch, ResourceVector available,
                      const PricingParams& params, const AdmissionOptions& options) {
    AdmissionResult out;
    std::vector<std::size_t> queue(batch.size());
    std::iota(queue.begin(), queue.end(), 0);

    while (!queue.empty()) {
        // Deny whatever no longer fits; availability only shrinks within a
        // batch, so a denied request could never become feasible again.
        std::vector<std::size_t> feasible;
        feasible.reserve(queue.size());
        for (std::size_t idx : queue) {
            if (batch[idx].demand.fits_within(available)) {
                feasible.push_back(idx);
            } else {
                out.decisions.push_back(deny(batch[idx], DenyReason::Infeasible));
            }
        }
        if (feasible.empty()) break;

        TraceStep step;
        if (options.record_trace) step.available = available;
        std::size_t best = feasible.front();
        double best_price = 0;
        bool first = true;
        for (std::size_t idx : feasible) {
            const auto& req = batch[idx];
            const double price = total_price(req.demand, available, req.priority, params);
            ++out.price_evaluations;
            if (options.record_trace) step.candidates.emplace_back(req.request_id, price);
            if (first || price < best_price ||
                (price == best_price && earlier(req, batch[best]))) {
                best = idx;
                best_price = price;
                first = false;
            }
        }

        const auto& chosen = batch[best];
        const bool paid = !options.gate || options.gate(chosen, best_price);
        if (paid) {
            out.decisions.push_back(accept(chosen, best_price));
            available = available - chosen.demand;
            ++out.accepted;
        } else {
            out.decisions.push_back(deny(chosen, DenyReason::InsufficientCoins, best_price));
        }
        if (options.record_trace) {
            step.chosen = chosen.request_id;
            step.chosen_price = best_price;
            step.payment_refused = !paid;
            out.trace.push_back(std::move(step));
        }
        feasible.erase(std::find(feasible.begin(), feasible.end(), best));
        queue = std::move(feasible);
    }
    out.remaining = available;
    return out;
}

AdmissionResult admit_fcfs(std::span<const ResourceRequest> batch, ResourceVector available,
                           const PricingParams& params, const AdmissionOptions& options) {
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return batch[a].arrival < batch[b].arrival; });
    return scan_in_order(batch, order, available, params, options);
}

AdmissionResult admit_priority(std::span<const ResourceRequest> batch, ResourceVector available,
                               const PricingParams& params, const AdmissionOptions& options) {
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (batch[a].priority != batch[b].priority) return batch[a].priority < batch[b].priority;
        return batch[a].arrival < batch[b].arrival;
    });
    return scan_in_order(batch, order, available, params, options);
}

const char* to_string(Scheduler s) {
    switch (s) {
        case Scheduler::Pricing: return "pricing";
        case Scheduler::FCFS: return "fcfs";
        case Scheduler::Priority: return "priority";
    }
    return "?";
}

Scheduler scheduler_from_string(std::string_view s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "pricing") return Scheduler::Pricing;
    if (lower == "fcfs") return Scheduler::FCFS;
    if (lower == "priority") return Scheduler::Priority;
    throw Error(ErrorCode::Config, "unknown scheduler '" + std::string(s) +
                                       "' (expected pricing, fcfs or priority)");
}

AdmissionResult run_scheduler(Scheduler s, std::span<const ResourceRequest> batch,
                              ResourceVector available, const PricingParams& params,
                              const AdmissionOptions& options) {
    switch (s) {
        case Scheduler::Pricing: return admit(batch, available, params, options);
        case Scheduler::FCFS: return admit_fcfs(batch, available, params, options);
        case Scheduler::Priority: return admit_priority(batch, available, params, options);
    }
    throw Error(ErrorCode::Config, "unknown scheduler");
}

}  // namespace edgechain::admission
