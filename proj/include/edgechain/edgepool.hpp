#pragma once

#include <span>
#include <string>
#include <vector>

#include "edgechain/admission.hpp"
#include "edgechain/common.hpp"

namespace edgechain::edgepool {

struct Allocation {
    std::string request_id;
    Address device;
    ResourceVector demand;
    Timeslot start = 0;
    /// Occupies slots start .. start + lifetime - 1.
    Timeslot lifetime = 1;
    Coins coins_charged;
    /// Credit change of the originating request, settled on release.
    int credit_delta = 0;

    Timeslot end() const { return start + lifetime; }
};

/// Edge resource pool: total capacity W, availability C and the live
/// allocations, with C = W - sum of live demands.
class Pool {
public:
    /// Throws Error(Config) on a negative capacity.
    explicit Pool(ResourceVector total);

    const ResourceVector& total() const { return total_; }
    const ResourceVector& available() const { return available_; }
    const std::vector<Allocation>& live() const { return live_; }

    /// Throws Error(Duplicate) for a request id already live and
    /// Error(Consistency) if the decision is not an accept for this request
    /// or the demand no longer fits.
    const Allocation& reserve(const admission::AdmissionDecision& decision,
                              const admission::ResourceRequest& request, Timeslot now,
                              Coins charged = {}, int credit_delta = 0);

    /// Removes every allocation with start + lifetime <= now, in reserve order.
    std::vector<Allocation> release_expired(Timeslot now);

    /// True iff no request of the batch fits; vacuously true when empty.
    bool is_exhausted(std::span<const admission::ResourceRequest> batch) const;

    /// Fraction of each resource in use.
    ResourceVector utilization() const;
    /// available + sum(live demands) == total, within rounding.
    bool accounting_holds() const;

private:
    ResourceVector total_;
    ResourceVector available_;
    std::vector<Allocation> live_;
};

}  // namespace edgechain::edgepool
