#include "edgechain/edgepool.hpp"

#include <algorithm>
#include <cmath>

namespace edgechain::edgepool {

Pool::Pool(ResourceVector total) : total_(total), available_(total) {
    if (!total.nonnegative()) throw Error(ErrorCode::Config, "pool capacity must be nonnegative");
}

const Allocation& Pool::reserve(const admission::AdmissionDecision& decision,
                                const admission::ResourceRequest& request, Timeslot now,
                                Coins charged, int credit_delta) {
    if (!decision.accepted() || decision.request_id != request.request_id) {
        throw Error(ErrorCode::Consistency, "reserve without a matching accept for " + request.request_id);
    }
    if (std::any_of(live_.begin(), live_.end(),
                    [&](const Allocation& a) { return a.request_id == request.request_id; })) {
        throw Error(ErrorCode::Duplicate, "request " + request.request_id + " already holds resources");
    }
    if (!request.demand.nonnegative() || !request.demand.fits_within(available_)) {
        throw Error(ErrorCode::Consistency, "admission/pool drift: " + request.demand.to_string() +
                                                " does not fit " + available_.to_string());
    }
    if (request.lifetime < 1) throw Error(ErrorCode::Consistency, "allocation lifetime below 1");
    available_ = available_ - request.demand;
    live_.push_back({request.request_id, request.device, request.demand, now, request.lifetime,
                     charged, credit_delta});
    return live_.back();
}

std::vector<Allocation> Pool::release_expired(Timeslot now) {
    std::vector<Allocation> released;
    std::vector<Allocation> kept;
    for (auto& a : live_) {
        if (a.end() <= now) {
            released.push_back(std::move(a));
        } else {
            kept.push_back(std::move(a));
        }
    }
    live_ = std::move(kept);
    if (!released.empty()) {
        // Recompute rather than add back, so rounding cannot accumulate.
        available_ = total_;
        for (const auto& a : live_) available_ = available_ - a.demand;
    }
    return released;
}

bool Pool::is_exhausted(std::span<const admission::ResourceRequest> batch) const {
    return std::none_of(batch.begin(), batch.end(), [&](const admission::ResourceRequest& r) {
        return r.demand.fits_within(available_);
    });
}

ResourceVector Pool::utilization() const {
    ResourceVector u;
    for (std::size_t j = 0; j < kResourceTypes; ++j) {
        u[j] = total_[j] > 0 ? (total_[j] - available_[j]) / total_[j] : 0.0;
    }
    return u;
}

bool Pool::accounting_holds() const {
    ResourceVector sum = available_;
    for (const auto& a : live_) sum = sum + a.demand;
    for (std::size_t j = 0; j < kResourceTypes; ++j) {
        if (available_[j] < -1e-9 || available_[j] > total_[j] + 1e-9) return false;
        if (std::abs(sum[j] - total_[j]) > 1e-9 * std::max(1.0, total_[j])) return false;
    }
    return true;
}

}  // namespace edgechain::edgepool
