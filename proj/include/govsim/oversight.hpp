#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "govsim/accounting.hpp"
#include "govsim/core.hpp"
#include "govsim/jsonl.hpp"
#include "govsim/sha256.hpp"

namespace govsim::oversight {

// ---------------------------------------------------------------------------
// Enforcement state machine
// ---------------------------------------------------------------------------

enum class State { active, flagged, throttled, suspended, terminated };

inline const std::vector<State>& all_states() {
    static const std::vector<State> v{State::active, State::flagged, State::throttled,
                                      State::suspended, State::terminated};
    return v;
}

inline std::string to_string(State s) {
    switch (s) {
        case State::active: return "active";
        case State::flagged: return "flagged";
        case State::throttled: return "throttled";
        case State::suspended: return "suspended";
        case State::terminated: return "terminated";
    }
    throw Error("bad State");
}

enum class SignalKind {
    compliant,
    follow_up,                 // low-confidence classification
    mismatch,                  // declaration inconsistent with observation
    unreported_threshold_event,
    attestation_failure,
    kyc_denied,
    directive_suspend,         // regulator order
    directive_resolve          // regulator order: step back toward active
};

inline const std::vector<SignalKind>& all_signal_kinds() {
    static const std::vector<SignalKind> v{
        SignalKind::compliant,       SignalKind::follow_up,
        SignalKind::mismatch,        SignalKind::unreported_threshold_event,
        SignalKind::attestation_failure, SignalKind::kyc_denied,
        SignalKind::directive_suspend,   SignalKind::directive_resolve};
    return v;
}

inline std::string to_string(SignalKind k) {
    switch (k) {
        case SignalKind::compliant: return "compliant";
        case SignalKind::follow_up: return "follow_up";
        case SignalKind::mismatch: return "mismatch";
        case SignalKind::unreported_threshold_event: return "unreported_threshold_event";
        case SignalKind::attestation_failure: return "attestation_failure";
        case SignalKind::kyc_denied: return "kyc_denied";
        case SignalKind::directive_suspend: return "directive_suspend";
        case SignalKind::directive_resolve: return "directive_resolve";
    }
    throw Error("bad SignalKind");
}

struct Signal {
    SignalKind kind = SignalKind::compliant;
    Seconds t = 0;
    std::string detail;
};

// What a signal kind does to the state machine. The policy is data so a
// deployment can re-map signals without touching the machine itself.
enum class Response { none, flag, throttle, suspend, step_toward_active };

inline std::string to_string(Response r) {
    switch (r) {
        case Response::none: return "none";
        case Response::flag: return "flag";
        case Response::throttle: return "throttle";
        case Response::suspend: return "suspend";
        case Response::step_toward_active: return "step_toward_active";
    }
    throw Error("bad Response");
}

inline Response response_from_string(const std::string& s) {
    for (auto r : {Response::none, Response::flag, Response::throttle, Response::suspend,
                   Response::step_toward_active})
        if (to_string(r) == s) return r;
    throw ValidationError("unknown enforcement response '" + s + "'");
}

struct EnforcementPolicy {
    std::map<SignalKind, Response> responses = {
        {SignalKind::compliant, Response::none},
        {SignalKind::follow_up, Response::flag},
        {SignalKind::mismatch, Response::throttle},
        {SignalKind::unreported_threshold_event, Response::throttle},
        {SignalKind::attestation_failure, Response::flag},
        {SignalKind::kyc_denied, Response::suspend},
        {SignalKind::directive_suspend, Response::suspend},
        {SignalKind::directive_resolve, Response::step_toward_active},
    };
    Seconds violation_window_s = 30 * 86400.0; // repeated-violation lookback
    int escalation_throttle_count = 2;         // throttles in window before termination
    double throttle_multiplier = 0.5;          // capacity factor while throttled
};

struct EnforcementState {
    std::string customer_id;
    State state = State::active;
    Seconds since = 0;
    std::string cause = "initial";
};

struct Transition {
    State from = State::active;
    State to = State::active;
    bool changed = false;
    bool report_to_regulator = false;
    double capacity_multiplier = 1.0;
    std::string cause;
};

// One machine per customer; transitions are serialized per customer and only
// move along the documented graph:
//   flag:    active -> flagged (never downgrades a stricter state)
//   throttle: active/flagged/throttled -> throttled, escalating to terminated
//             after `escalation_throttle_count` throttles inside the window
//   suspend: anything except terminated -> suspended
//   resolve: one step back toward active; terminated is terminal
class EnforcementEngine {
public:
    explicit EnforcementEngine(EnforcementPolicy policy = {}) : policy_(std::move(policy)) {}

    void register_customer(const std::string& customer_id, Seconds t = 0) {
        if (states_.count(customer_id)) return;
        EnforcementState s;
        s.customer_id = customer_id;
        s.since = t;
        states_.emplace(customer_id, Record{s, {}});
    }

    const EnforcementState& state(const std::string& customer_id) const {
        auto it = states_.find(customer_id);
        if (it == states_.end()) throw DataError("unknown customer '" + customer_id + "'");
        return it->second.state;
    }

    double capacity_multiplier(const std::string& customer_id) const {
        switch (state(customer_id).state) {
            case State::active:
            case State::flagged:
                return 1.0;
            case State::throttled:
                return policy_.throttle_multiplier;
            case State::suspended:
            case State::terminated:
                return 0.0;
        }
        throw Error("bad State");
    }

    Transition evaluate(const std::string& customer_id, const Signal& signal) {
        auto it = states_.find(customer_id);
        if (it == states_.end()) throw DataError("unknown customer '" + customer_id + "'");
        auto& rec = it->second;
        auto resp_it = policy_.responses.find(signal.kind);
        const Response response =
            resp_it != policy_.responses.end() ? resp_it->second : Response::none;

        Transition tr;
        tr.from = rec.state.state;
        tr.to = tr.from;
        tr.cause = to_string(signal.kind) + (signal.detail.empty() ? "" : ":" + signal.detail);

        switch (response) {
            case Response::none:
                break;
            case Response::flag:
                if (tr.from == State::active) tr.to = State::flagged;
                break;
            case Response::throttle:
                if (tr.from == State::active || tr.from == State::flagged ||
                    tr.from == State::throttled) {
                    auto& times = rec.throttle_times;
                    times.push_back(signal.t);
                    const Seconds cutoff = signal.t - policy_.violation_window_s;
                    times.erase(std::remove_if(times.begin(), times.end(),
                                               [&](Seconds t) { return t < cutoff; }),
                                times.end());
                    tr.to = static_cast<int>(times.size()) >= policy_.escalation_throttle_count
                                ? State::terminated
                                : State::throttled;
                    tr.report_to_regulator = true;
                }
                break;
            case Response::suspend:
                if (tr.from != State::terminated) tr.to = State::suspended;
                tr.report_to_regulator = true;
                break;
            case Response::step_toward_active:
                switch (tr.from) {
                    case State::active: break;
                    case State::flagged: tr.to = State::active; break;
                    case State::throttled: tr.to = State::flagged; break;
                    case State::suspended: tr.to = State::throttled; break;
                    case State::terminated: break; // terminal
                }
                break;
        }

        tr.changed = tr.to != tr.from;
        if (tr.changed) {
            rec.state.state = tr.to;
            rec.state.since = signal.t;
            rec.state.cause = tr.cause;
        }
        tr.capacity_multiplier = capacity_multiplier(customer_id);
        return tr;
    }

    std::vector<EnforcementState> all() const {
        std::vector<EnforcementState> out;
        for (const auto& [id, rec] : states_) out.push_back(rec.state);
        return out;
    }

    const EnforcementPolicy& policy() const { return policy_; }

private:
    struct Record {
        EnforcementState state;
        std::vector<Seconds> throttle_times;
    };
    EnforcementPolicy policy_;
    std::map<std::string, Record> states_;
};

// The documented transition graph, for exhaustive safety checks.
inline bool edge_allowed(State from, State to) {
    if (from == to) return true;
    switch (from) {
        case State::active:
            return to == State::flagged || to == State::throttled || to == State::suspended ||
                   to == State::terminated;
        case State::flagged:
            return to == State::active || to == State::throttled || to == State::suspended ||
                   to == State::terminated;
        case State::throttled:
            return to == State::flagged || to == State::suspended || to == State::terminated;
        case State::suspended:
            return to == State::throttled;
        case State::terminated:
            return false;
    }
    throw Error("bad State");
}

// ---------------------------------------------------------------------------
// Simulated attestation: shared-key MACs standing in for TEE quotes.
// ---------------------------------------------------------------------------

enum class ClaimKind { eval_was_run, dataset_id_used, ops_consumed };

inline std::string to_string(ClaimKind k) {
    switch (k) {
        case ClaimKind::eval_was_run: return "eval_was_run";
        case ClaimKind::dataset_id_used: return "dataset_id_used";
        case ClaimKind::ops_consumed: return "ops_consumed";
    }
    throw Error("bad ClaimKind");
}

inline ClaimKind claim_kind_from_string(const std::string& s) {
    for (auto k : {ClaimKind::eval_was_run, ClaimKind::dataset_id_used, ClaimKind::ops_consumed})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown claim kind '" + s + "'");
}

struct AttestedClaim {
    std::string customer_id;
    ClaimKind claim_kind = ClaimKind::eval_was_run;
    std::string payload; // serialized JSON object
    std::string mac;     // hex HMAC-SHA256 over kind + payload
};

using KeyRegistry = std::map<std::string, std::string>; // customer -> shared key

inline std::string claim_mac(const std::string& key, ClaimKind kind, const std::string& payload) {
    return hmac_sha256_hex(key, to_string(kind) + "\x1f" + payload);
}

inline AttestedClaim make_attested_claim(const std::string& customer_id, ClaimKind kind,
                                         const std::string& payload, const std::string& key) {
    return {customer_id, kind, payload, claim_mac(key, kind, payload)};
}

struct ClaimVerification {
    bool accepted = false;
    std::string reason;
    json content; // parsed payload when accepted
};

inline ClaimVerification verify_attested_claim(const AttestedClaim& claim,
                                               const KeyRegistry& keys) {
    auto it = keys.find(claim.customer_id);
    if (it == keys.end())
        throw DataError("no attestation key registered for customer '" + claim.customer_id + "'");
    ClaimVerification v;
    const std::string expected = claim_mac(it->second, claim.claim_kind, claim.payload);
    if (!mac_equal(expected, claim.mac)) {
        v.accepted = false;
        v.reason = "mac_verification_failed";
        return v;
    }
    v.accepted = true;
    v.content = json::parse(claim.payload, nullptr, false);
    if (v.content.is_discarded()) {
        v.accepted = false;
        v.reason = "payload_not_json";
    }
    return v;
}

// Capacity restriction applied to a customer's subsequent allocations: a
// throttled customer's theoretical budget per wall-clock hour scales by the
// policy multiplier; suspended and terminated customers get nothing.
inline accounting::ComputeEstimate apply_capacity_multiplier(accounting::ComputeEstimate est,
                                                             double multiplier) {
    est.ops_point *= multiplier;
    est.ops_lower *= multiplier;
    est.ops_upper *= multiplier;
    est.peak_rate_ops_per_sec *= multiplier;
    return est;
}

// Cross-checks an accepted ops_consumed claim against an independent counters
// estimate; disagreement beyond the tolerance is a mismatch signal.
inline std::optional<Signal> cross_check_ops_claim(Ops claimed_ops,
                                                   const accounting::ComputeEstimate& estimate,
                                                   Seconds t, double tolerance = 0.10) {
    const Ops reference = estimate.ops_point;
    const double denom = std::max(reference, 1.0);
    if (std::abs(claimed_ops - reference) / denom > tolerance) {
        Signal s;
        s.kind = SignalKind::mismatch;
        s.t = t;
        s.detail = "ops_consumed claim deviates from counters estimate";
        return s;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string enforcement_event_line(const std::string& customer_id, const Transition& tr,
                                          Seconds t) {
    JsonWriter w;
    w.begin_obj();
    w.kv("kind", "enforcement_event");
    w.kv("customer_id", customer_id);
    w.kv("t", t);
    w.kv("from", to_string(tr.from));
    w.kv("to", to_string(tr.to));
    w.kv("cause", tr.cause);
    w.kv_bool("report_to_regulator", tr.report_to_regulator);
    w.kv("capacity_multiplier", tr.capacity_multiplier);
    w.end_obj();
    return w.take();
}

// Regulator report: customer identity is hashed unless the report is issued
// under warrant.
inline std::string regulator_report_line(const std::string& report_kind,
                                         const std::string& customer_id, bool under_warrant,
                                         const std::string& salt,
                                         const accounting::ComputeEstimate& evidence, Seconds t) {
    JsonWriter w;
    w.begin_obj();
    w.kv("kind", "regulator_report");
    w.kv("report_kind", report_kind);
    if (under_warrant) {
        w.kv("customer", customer_id);
    } else {
        const auto digest = Sha256::digest(salt + "\x1f" + customer_id);
        w.kv("customer_tag", to_hex(digest.data(), 16));
    }
    w.kv("t", t);
    w.key("evidence").begin_obj();
    accounting::write_estimate_fields(w, evidence);
    w.end_obj();
    w.end_obj();
    return w.take();
}

} // namespace govsim::oversight
