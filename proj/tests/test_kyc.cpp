#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "govsim/kyc.hpp"
#include "govsim/rng.hpp"

using namespace govsim;
using namespace govsim::kyc;

namespace {

CustomerAccount make_account(const std::string& id, const std::string& name, bool foreign = false,
                             std::vector<std::string> owners = {}) {
    CustomerAccount a;
    a.customer_id = id;
    a.legal_name = name;
    a.jurisdiction = foreign ? "XZ" : "US";
    a.beneficial_owner_ids = std::move(owners);
    a.id_documents = {{"passport", "chk-" + id}};
    a.payment_instrument = "tok-" + id;
    a.is_foreign = foreign;
    return a;
}

} // namespace

TEST_SUITE("kyc") {

TEST_CASE("name normalization folds case, whitespace and diacritics") {
    CHECK(normalize_name("  Acme   Compute  ") == "acme compute");
    CHECK(normalize_name("ACME Compute") == "acme compute");
    CHECK(normalize_name("Acmé Computè") == "acme compute");
    CHECK(normalize_name("AcmÉ COMPUTE") == "acme compute");
}

TEST_CASE("ownership: an account with no owners is its own ultimate owner") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Alpha");
    const auto r = resolve_beneficial_owners(reg["a"], reg);
    REQUIRE(r.ultimate_owners.size() == 1);
    CHECK(r.ultimate_owners[0] == "a");
}

TEST_CASE("ownership: chains resolve transitively") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Alpha", false, {"b"});
    reg["b"] = make_account("b", "Beta", false, {"c"});
    reg["c"] = make_account("c", "Gamma");
    const auto r = resolve_beneficial_owners(reg["a"], reg);
    REQUIRE(r.ultimate_owners.size() == 1);
    CHECK(r.ultimate_owners[0] == "c");
    CHECK(r.all_owners == std::vector<std::string>{"b", "c"});
}

TEST_CASE("ownership: diamond dedupes the ultimate owner") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Alpha", false, {"b", "c"});
    reg["b"] = make_account("b", "Beta", false, {"d"});
    reg["c"] = make_account("c", "Gamma", false, {"d"});
    reg["d"] = make_account("d", "Delta");
    const auto r = resolve_beneficial_owners(reg["a"], reg);
    REQUIRE(r.ultimate_owners.size() == 1);
    CHECK(r.ultimate_owners[0] == "d");
}

TEST_CASE("ownership: cycles are a data error") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Alpha", false, {"b"});
    reg["b"] = make_account("b", "Beta", false, {"a"});
    CHECK_THROWS_AS(resolve_beneficial_owners(reg["a"], reg), DataError);
}

TEST_CASE("verification: domestic, small, clean -> basic") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Quiet Lab");
    const auto out = verify_identity(reg["a"], 1e15, {}, reg);
    CHECK(out.tier == RiskTier::basic);
}

TEST_CASE("verification: foreign below frontier capacity -> elevated") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Far Compute", true);
    const auto out = verify_identity(reg["a"], 1e15, {}, reg);
    CHECK(out.tier == RiskTier::elevated);
}

TEST_CASE("verification: foreign frontier request with undocumented owner -> edd_required") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Shell Compute", true, {"ghost"});
    // "ghost" is not in the registry: undocumented beneficial owner.
    const auto out = verify_identity(reg["a"], 2e19, {}, reg);
    CHECK(out.tier == RiskTier::edd_required);
    bool saw_capacity = false, saw_undocumented = false;
    for (const auto& r : out.reasons) {
        if (r == "frontier_capacity_request") saw_capacity = true;
        if (r == "beneficial_owner_undocumented") saw_undocumented = true;
    }
    CHECK(saw_capacity);
    CHECK(saw_undocumented);
}

TEST_CASE("verification: domestic documented frontier request stays basic") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Big Honest Lab");
    const auto out = verify_identity(reg["a"], 2e19, {}, reg);
    CHECK(out.tier == RiskTier::basic);
}

TEST_CASE("verification: entity-list hit via a beneficial owner -> denied") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Front Org", false, {"b"});
    reg["b"] = make_account("b", "Mid Holdings", false, {"c"});
    reg["c"] = make_account("c", "Bad Actor Group");
    EntityList list;
    list.version = "v1";
    list.entries = {{"bad actor group", ""}};
    const auto out = verify_identity(reg["a"], 1e15, list, reg);
    CHECK(out.tier == RiskTier::denied);
    REQUIRE(!out.reasons.empty());
    CHECK(out.reasons[0].find("entity_list_hit_owner") == 0);
}

TEST_CASE("verification: direct entity-list hit respects jurisdiction scoping") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Dual Name Corp", true);
    reg["a"].jurisdiction = "XZ";
    EntityList scoped;
    scoped.version = "v1";
    scoped.entries = {{"Dual Name Corp", "QQ"}}; // different jurisdiction
    CHECK(verify_identity(reg["a"], 1e15, scoped, reg).tier == RiskTier::elevated);
    scoped.entries = {{"Dual Name Corp", "XZ"}};
    CHECK(verify_identity(reg["a"], 1e15, scoped, reg).tier == RiskTier::denied);
}

TEST_CASE("verification: no documents is incomplete, not a tier") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Paperless");
    reg["a"].id_documents.clear();
    CHECK_THROWS_AS(verify_identity(reg["a"], 1e15, {}, reg), DataError);
}

TEST_CASE("adding entity-list entries is monotone toward denied") {
    AccountRegistry reg;
    reg["a"] = make_account("a", "Acme Compute", true, {"b"});
    reg["b"] = make_account("b", "Parent Co");
    const std::vector<std::string> names = {"Unrelated One", "Parent Co", "Acme Compute",
                                            "Unrelated Two"};
    EntityList list;
    list.version = "v1";
    int prev = -1;
    // Severity may only ratchet up as the list grows.
    for (const auto& n : names) {
        list.entries.push_back({n, ""});
        const int sev = severity(verify_identity(reg["a"], 2e19, list, reg).tier);
        CHECK(sev >= prev);
        prev = sev;
    }
    CHECK(prev == severity(RiskTier::denied));
}

TEST_CASE("entity list serialization round-trips and loads from a file") {
    EntityList list;
    list.version = "2026-02";
    list.entries = {{"Bad Actor Group", "XZ"}, {"Shady Offshore", ""}};
    const auto parsed = entity_list_from_json(json::parse(entity_list_to_json(list)));
    CHECK(parsed.version == list.version);
    REQUIRE(parsed.entries.size() == 2);
    CHECK(parsed.entries[0].name_pattern == "Bad Actor Group");
    CHECK(parsed.entries[1].jurisdiction == "");

    const auto path =
        (std::filesystem::temp_directory_path() / "govsim_entity_list.json").string();
    std::ofstream(path) << entity_list_to_json(list);
    const auto loaded = load_entity_list(path);
    CHECK(loaded.version == "2026-02");
    CHECK(loaded.matches("bad actor group", "XZ"));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_entity_list(path), ValidationError);
}

} // TEST_SUITE
