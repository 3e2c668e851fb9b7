#pragma once

#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "edgechain/admission.hpp"
#include "edgechain/common.hpp"
#include "edgechain/registry.hpp"

namespace edgechain::credit {

using registry::Violation;

struct CreditPolicy {
    int initial_credit = 100;
    int max_credit = 100;
    /// Coins returned per unit of credit change.
    double eta = 1.0;
    /// P_thres = factor * price of the registered max demand at full capacity.
    double price_threshold_factor = 1.5;
    int freq_limit = 10;
    Timeslot freq_window = 10;
    int delta_good = 1;
    int delta_bad = -10;
    /// Coin return cap is return_cap_multiple * charged + eta * delta_good.
    double return_cap_multiple = 1.0;

    /// Throws Error(Config).
    void validate() const;
};

struct CreditAccount {
    Address device;
    int credit = 0;
    /// (arrival, request id) of the requests inside the frequency window.
    std::deque<std::pair<Timeslot, std::string>> request_history;
    std::map<Violation, std::size_t> violations;

    bool blocked() const { return credit == 0; }
};

struct RequestEvaluation {
    int delta = 0;
    std::vector<Violation> violations;
};

struct ApplyOutcome {
    int credit_before = 0;
    int credit_after = 0;
    /// The account just reached zero and the device must be blocked.
    bool block = false;
};

/// Price threshold of a device whose registered max demand is `max_demand`.
double price_threshold(const ResourceVector& max_demand, const ResourceVector& total, int level,
                       const admission::PricingParams& pricing, const CreditPolicy& policy);

/// Scores one request: PriceExceeded when price > threshold, FrequencyExceeded
/// when the device sent more than freq_limit requests within the last
/// freq_window slots (this one included). Records the request in the history.
/// Throws Error(Blocked) for an account at zero credit.
RequestEvaluation evaluate_request(CreditAccount& account, const admission::ResourceRequest& request,
                                   double price, double threshold, const CreditPolicy& policy);

/// Port and destination violations cost delta_bad each; conformant
/// activity earns nothing.
int evaluate_activity(std::span<const Violation> violations, const CreditPolicy& policy);

/// Adds delta, clamped to [0, max_credit].
ApplyOutcome apply_delta(CreditAccount& account, int delta, const CreditPolicy& policy);

/// charged + delta * eta, floored at 0 and capped at
/// return_cap_multiple * charged + eta * delta_good.
Coins coin_return(Coins charged, int delta, const CreditPolicy& policy);

/// Credit accounts keyed by device. Unknown devices raise Error(UnknownDevice).
class CreditBook {
public:
    explicit CreditBook(CreditPolicy policy = {});

    const CreditPolicy& policy() const { return policy_; }
    CreditAccount& open(const Address& device);
    bool contains(const Address& device) const { return accounts_.contains(device); }
    CreditAccount& at(const Address& device);
    const CreditAccount& at(const Address& device) const;
    const std::map<Address, CreditAccount>& accounts() const { return accounts_; }

    RequestEvaluation evaluate_request(const admission::ResourceRequest& request, double price,
                                       double threshold);
    int evaluate_activity(const Address& device, std::span<const Violation> violations);
    ApplyOutcome apply_delta(const Address& device, int delta);

private:
    CreditPolicy policy_;
    std::map<Address, CreditAccount> accounts_;
};

}  // namespace edgechain::credit
