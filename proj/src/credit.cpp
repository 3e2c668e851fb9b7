#include "edgechain/credit.hpp"

#include <algorithm>
#include <cmath>

namespace edgechain::credit {

void CreditPolicy::validate() const {
    if (initial_credit < 0 || initial_credit > max_credit) {
        throw Error(ErrorCode::Config, "credit: need 0 <= initial_credit <= max_credit");
    }
    if (eta < 0) throw Error(ErrorCode::Config, "credit: eta must be nonnegative");
    if (freq_window < 1) throw Error(ErrorCode::Config, "credit: freq_window must be >= 1");
    if (freq_limit < 0) throw Error(ErrorCode::Config, "credit: freq_limit must be nonnegative");
    if (delta_good < 0) throw Error(ErrorCode::Config, "credit: delta_good must be >= 0");
    if (delta_bad > 0) throw Error(ErrorCode::Config, "credit: delta_bad must be <= 0");
    if (price_threshold_factor <= 0) {
        throw Error(ErrorCode::Config, "credit: price_threshold_factor must be positive");
    }
    if (return_cap_multiple < 1) {
        throw Error(ErrorCode::Config, "credit: return_cap_multiple must be >= 1");
    }
}

double price_threshold(const ResourceVector& max_demand, const ResourceVector& total, int level,
                       const admission::PricingParams& pricing, const CreditPolicy& policy) {
    return policy.price_threshold_factor * admission::total_price(max_demand, total, level, pricing);
}

RequestEvaluation evaluate_request(CreditAccount& account, const admission::ResourceRequest& request,
                                   double price, double threshold, const CreditPolicy& policy) {
    if (account.blocked()) {
        throw Error(ErrorCode::Blocked, "device " + account.device + " is blocked");
    }
    auto& history = account.request_history;
    const Timeslot horizon = request.arrival - policy.freq_window;
    while (!history.empty() && history.front().first <= horizon) history.pop_front();
    history.emplace_back(request.arrival, request.request_id);

    RequestEvaluation out;
    if (price > threshold) out.violations.push_back(Violation::PriceExceeded);
    if (history.size() > static_cast<std::size_t>(policy.freq_limit)) {
        out.violations.push_back(Violation::FrequencyExceeded);
    }
    for (auto v : out.violations) ++account.violations[v];
    out.delta = out.violations.empty()
                    ? policy.delta_good
                    : policy.delta_bad * static_cast<int>(out.violations.size());
    return out;
}

int evaluate_activity(std::span<const Violation> violations, const CreditPolicy& policy) {
    return policy.delta_bad * static_cast<int>(violations.size());
}

ApplyOutcome apply_delta(CreditAccount& account, int delta, const CreditPolicy& policy) {
    ApplyOutcome out;
    out.credit_before = account.credit;
    account.credit = std::clamp(account.credit + delta, 0, policy.max_credit);
    out.credit_after = account.credit;
    out.block = out.credit_before > 0 && out.credit_after == 0;
    return out;
}

Coins coin_return(Coins charged, int delta, const CreditPolicy& policy) {
    const Coins raw = charged + Coins::from_double(delta * policy.eta);
    const Coins cap = Coins::from_double(charged.to_double() * policy.return_cap_multiple) +
                      Coins::from_double(policy.eta * policy.delta_good);
    return std::clamp(raw, Coins{}, std::max(cap, Coins{}));
}

CreditBook::CreditBook(CreditPolicy policy) : policy_(policy) { policy_.validate(); }

CreditAccount& CreditBook::open(const Address& device) {
    auto [it, inserted] = accounts_.try_emplace(device);
    if (inserted) {
        it->second.device = device;
        it->second.credit = policy_.initial_credit;
    }
    return it->second;
}

CreditAccount& CreditBook::at(const Address& device) {
    auto it = accounts_.find(device);
    if (it == accounts_.end()) {
        throw Error(ErrorCode::UnknownDevice, "no credit account for " + device);
    }
    return it->second;
}

const CreditAccount& CreditBook::at(const Address& device) const {
    return const_cast<CreditBook*>(this)->at(device);
}

RequestEvaluation CreditBook::evaluate_request(const admission::ResourceRequest& request,
                                               double price, double threshold) {
    return credit::evaluate_request(at(request.device), request, price, threshold, policy_);
}

int CreditBook::evaluate_activity(const Address& device, std::span<const Violation> violations) {
    auto& acct = at(device);
    for (auto v : violations) ++acct.violations[v];
    return credit::evaluate_activity(violations, policy_);
}

ApplyOutcome CreditBook::apply_delta(const Address& device, int delta) {
    return credit::apply_delta(at(device), delta, policy_);
}

}  // namespace edgechain::credit
