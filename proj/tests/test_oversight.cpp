#include <doctest.h>

#include "govsim/oversight.hpp"

using namespace govsim;
using namespace govsim::oversight;

namespace {

EnforcementEngine engine_in_state(State target, const std::string& customer = "c") {
    EnforcementEngine e;
    e.register_customer(customer);
    switch (target) {
        case State::active:
            break;
        case State::flagged:
            e.evaluate(customer, {SignalKind::follow_up, 1});
            break;
        case State::throttled:
            e.evaluate(customer, {SignalKind::mismatch, 1});
            break;
        case State::suspended:
            e.evaluate(customer, {SignalKind::directive_suspend, 1});
            break;
        case State::terminated:
            e.evaluate(customer, {SignalKind::mismatch, 1});
            e.evaluate(customer, {SignalKind::mismatch, 2});
            break;
    }
    REQUIRE(e.state(customer).state == target);
    return e;
}

} // namespace

TEST_SUITE("oversight") {

TEST_CASE("compliant signals keep the customer active with full capacity") {
    EnforcementEngine e;
    e.register_customer("c");
    const auto tr = e.evaluate("c", {SignalKind::compliant, 5});
    CHECK(tr.from == State::active);
    CHECK(tr.to == State::active);
    CHECK(!tr.changed);
    CHECK(!tr.report_to_regulator);
    CHECK(e.capacity_multiplier("c") == 1.0);
}

TEST_CASE("unreported threshold event throttles and reports") {
    EnforcementEngine e;
    e.register_customer("c");
    const auto tr = e.evaluate("c", {SignalKind::unreported_threshold_event, 10});
    CHECK(tr.to == State::throttled);
    CHECK(tr.report_to_regulator);
    CHECK(e.capacity_multiplier("c") == 0.5);
}

TEST_CASE("kyc denial suspends") {
    EnforcementEngine e;
    e.register_customer("c");
    const auto tr = e.evaluate("c", {SignalKind::kyc_denied, 3});
    CHECK(tr.to == State::suspended);
    CHECK(e.capacity_multiplier("c") == 0.0);
}

TEST_CASE("follow_up flags, and a later resolution steps back to active") {
    EnforcementEngine e;
    e.register_customer("c");
    CHECK(e.evaluate("c", {SignalKind::follow_up, 1}).to == State::flagged);
    CHECK(e.evaluate("c", {SignalKind::directive_resolve, 2}).to == State::active);
}

TEST_CASE("two throttles inside the window terminate") {
    EnforcementEngine e;
    e.register_customer("c");
    CHECK(e.evaluate("c", {SignalKind::mismatch, 0}).to == State::throttled);
    CHECK(e.evaluate("c", {SignalKind::mismatch, 86400}).to == State::terminated);
    // Terminal: nothing moves it.
    for (auto k : all_signal_kinds()) CHECK(e.evaluate("c", {k, 1e6}).to == State::terminated);
    CHECK(e.capacity_multiplier("c") == 0.0);
}

TEST_CASE("throttles outside the violation window do not escalate") {
    EnforcementPolicy policy;
    policy.violation_window_s = 1000;
    EnforcementEngine e(policy);
    e.register_customer("c");
    CHECK(e.evaluate("c", {SignalKind::mismatch, 0}).to == State::throttled);
    CHECK(e.evaluate("c", {SignalKind::mismatch, 5000}).to == State::throttled);
    CHECK(e.evaluate("c", {SignalKind::mismatch, 5100}).to == State::terminated);
}

TEST_CASE("resolution works one step at a time") {
    auto e = engine_in_state(State::suspended);
    CHECK(e.evaluate("c", {SignalKind::directive_resolve, 10}).to == State::throttled);
    CHECK(e.evaluate("c", {SignalKind::directive_resolve, 11}).to == State::flagged);
    CHECK(e.evaluate("c", {SignalKind::directive_resolve, 12}).to == State::active);
    CHECK(e.evaluate("c", {SignalKind::directive_resolve, 13}).to == State::active);
}

TEST_CASE("exhaustive (state, signal) enumeration stays on the documented graph") {
    for (auto start : all_states()) {
        for (auto kind : all_signal_kinds()) {
            auto e = engine_in_state(start);
            const auto tr = e.evaluate("c", {kind, 100});
            CHECK(edge_allowed(tr.from, tr.to));
            CHECK(tr.from == start);
        }
    }
}

TEST_CASE("flag never downgrades a stricter state") {
    for (auto start : {State::throttled, State::suspended, State::terminated}) {
        auto e = engine_in_state(start);
        CHECK(e.evaluate("c", {SignalKind::follow_up, 50}).to == start);
    }
}

TEST_CASE("unknown customer is an error") {
    EnforcementEngine e;
    CHECK_THROWS_AS(e.evaluate("ghost", {SignalKind::compliant, 0}), DataError);
    CHECK_THROWS_AS(e.state("ghost"), DataError);
}

TEST_CASE("valid mac accepted, tampered payload rejected") {
    KeyRegistry keys{{"c", "super-secret-key"}};
    const auto claim = make_attested_claim("c", ClaimKind::eval_was_run,
                                           R"({"eval":"safety-suite-3","passed":true})",
                                           keys.at("c"));
    const auto ok = verify_attested_claim(claim, keys);
    CHECK(ok.accepted);
    CHECK(ok.content["eval"] == "safety-suite-3");

    auto tampered = claim;
    tampered.payload[2] ^= 0x01; // one-bit flip
    const auto bad = verify_attested_claim(tampered, keys);
    CHECK(!bad.accepted);
    CHECK(bad.reason == "mac_verification_failed");

    auto wrong_kind = claim;
    wrong_kind.claim_kind = ClaimKind::ops_consumed;
    CHECK(!verify_attested_claim(wrong_kind, keys).accepted);
}

TEST_CASE("unknown attestation key is an error") {
    KeyRegistry keys;
    const AttestedClaim claim{"nobody", ClaimKind::eval_was_run, "{}", "00"};
    CHECK_THROWS_AS(verify_attested_claim(claim, keys), DataError);
}

TEST_CASE("accepted ops claim inconsistent with counters raises a mismatch") {
    accounting::ComputeEstimate counters;
    counters.method = accounting::Method::counters;
    counters.ops_point = counters.ops_lower = counters.ops_upper = 1e20;

    CHECK(!cross_check_ops_claim(1.05e20, counters, 7).has_value()); // within 10%
    const auto signal = cross_check_ops_claim(1.2e20, counters, 7);  // >10% off
    REQUIRE(signal.has_value());
    CHECK(signal->kind == SignalKind::mismatch);
}

TEST_CASE("throttling halves the next theoretical budget exactly") {
    EnforcementEngine e;
    e.register_customer("c");
    e.evaluate("c", {SignalKind::unreported_threshold_event, 10});
    REQUIRE(e.state("c").state == State::throttled);

    accounting::ComputeEstimate hour;
    hour.method = accounting::Method::theoretical;
    hour.ops_point = 4 * 6.3e14 * 3600.0; // one node-hour of allocation
    hour.ops_upper = hour.ops_point;
    hour.peak_rate_ops_per_sec = 4 * 6.3e14;
    const auto throttled = apply_capacity_multiplier(hour, e.capacity_multiplier("c"));
    CHECK(throttled.ops_point == 0.5 * hour.ops_point); // exact halving
    CHECK(throttled.peak_rate_ops_per_sec == 0.5 * hour.peak_rate_ops_per_sec);

    e.evaluate("c", {SignalKind::directive_suspend, 20});
    CHECK(apply_capacity_multiplier(hour, e.capacity_multiplier("c")).ops_point == 0);
}

TEST_CASE("regulator report hashes the customer unless under warrant") {
    accounting::ComputeEstimate ev;
    ev.ops_point = ev.ops_upper = 2e26;
    const auto hashed = regulator_report_line("unreported_training_run_over_threshold",
                                              "secret-customer", false, "salt", ev, 9);
    CHECK(hashed.find("secret-customer") == std::string::npos);
    CHECK(json::parse(hashed).contains("customer_tag"));
    const auto named = regulator_report_line("unreported_training_run_over_threshold",
                                             "secret-customer", true, "salt", ev, 9);
    CHECK(json::parse(named)["customer"] == "secret-customer");
}

} // TEST_SUITE
