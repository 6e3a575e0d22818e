#include <doctest.h>

#include <algorithm>
#include <set>

#include "support.hpp"

using namespace eae;
using namespace eae::corpus;
using testsupport::TempDir;
using testsupport::write_file;

namespace {

const char* kOneRecord =
    R"({"doc_key": "k1", "sentences": [["Troops", "shelled", "the", "town", "."], ["Many", "fled", "."]],)"
    R"( "evt_triggers": [[1, 1, [["conflict.attack.artilleryattack", 1.0]]]],)"
    R"( "gold_evt_links": [[[1, 1], [0, 0], "evt001arg01attacker"], [[1, 1], [2, 3], "evt001arg02target"]]})";

}  // namespace

TEST_CASE("load_rams maps one record to one document with its event and links") {
    TempDir dir;
    write_file(dir / "one.jsonl", std::string(kOneRecord) + "\n");
    const auto res = load_rams(dir / "one.jsonl");
    REQUIRE(res.documents.size() == 1);
    const auto& d = res.documents[0];
    CHECK(d.doc_id == "k1");
    CHECK(d.dataset == Dataset::rams);
    CHECK(d.sentences.size() == 2);
    CHECK(d.token_count() == 8);
    CHECK(d.text == "Troops shelled the town . Many fled .");
    REQUIRE(d.events.size() == 1);
    const auto& ev = d.events[0];
    CHECK(ev.event_type == "conflict.attack.artilleryattack");
    REQUIRE(ev.trigger);
    CHECK(ev.trigger->text == "shelled");
    CHECK(ev.trigger->span == Span{1, 2, SpanUnit::token});
    REQUIRE(ev.arguments.size() == 2);
    CHECK(ev.arguments[0] == GoldArgument{"attacker", "Troops", Span{0, 1, SpanUnit::token}});
    CHECK(ev.arguments[1] == GoldArgument{"target", "the town", Span{2, 4, SpanUnit::token}});
    CHECK(validate_document(d).empty());
    CHECK(res.event_types == std::set<std::string>{"conflict.attack.artilleryattack"});
}

TEST_CASE("load_rams edge cases") {
    TempDir dir;
    SUBCASE("empty file") {
        write_file(dir / "e.jsonl", "");
        CHECK(load_rams(dir / "e.jsonl").documents.empty());
    }
    SUBCASE("truncated JSON fails on line 1 in strict mode") {
        write_file(dir / "t.jsonl", R"({"doc_key": "k1", "sentences": [["a")");
        try {
            load_rams(dir / "t.jsonl");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.line_no() == 1);
        }
    }
    SUBCASE("lenient mode skips bad lines and counts them") {
        write_file(dir / "m.jsonl", std::string(kOneRecord) + "\n{broken\n" +
                                        R"({"doc_key": "k2", "sentences": [["x"]], "evt_triggers": [[0, 0, [["t", 1]]]]})" + "\n");
        try {
            load_rams(dir / "m.jsonl");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.line_no() == 2);
        }
        LoadOptions opts;
        opts.lenient = true;
        const auto res = load_rams(dir / "m.jsonl", opts);
        CHECK(res.documents.size() == 2);
        CHECK(res.skipped == 1);
        CHECK(res.warnings.size() == 1);
    }
    SUBCASE("argument span outside the document is malformed") {
        write_file(dir / "o.jsonl",
                   R"({"doc_key": "k", "sentences": [["a", "b"]], "evt_triggers": [[0, 0, [["t", 1]]]], "gold_evt_links": [[[0, 0], [1, 5], "evt1arg1x"]]})");
        CHECK_THROWS_AS(load_rams(dir / "o.jsonl"), FormatError);
    }
    SUBCASE("duplicate doc_key") {
        write_file(dir / "d.jsonl", std::string(kOneRecord) + "\n" + kOneRecord + "\n");
        CHECK_THROWS_AS(load_rams(dir / "d.jsonl"), FormatError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_rams(dir / "nope.jsonl"), IoError); }
    SUBCASE("windows line endings") {
        write_file(dir / "w.jsonl", std::string(kOneRecord) + "\r\n");
        CHECK(load_rams(dir / "w.jsonl").documents.size() == 1);
    }
}

TEST_CASE("load_docee normal split of three records") {
    TempDir dir;
    write_file(dir / "s.json", R"([
      {"id": "a", "title": "Flood", "text": "Rivers rose in Hunan.", "event_type": "Floods", "domain": "disaster",
       "arguments": [{"role": "Location", "text": "Hunan", "start": 15, "end": 20}]},
      {"title": "Quake", "text": "A quake hit.", "event_type": "Earthquakes", "arguments": []},
      {"id": "c", "title": "", "text": "Vote held.", "event_type": "Elections", "arguments": [{"type": "Date", "text": "today"}]}
    ])");
    const auto res = load_docee(dir / "s.json", DocEESetting::normal);
    REQUIRE(res.documents.size() == 3);
    for (const auto& d : res.documents) {
        CHECK(d.dataset == Dataset::docee);
        REQUIRE(d.events.size() == 1);
        CHECK_FALSE(d.events[0].trigger.has_value());
    }
    const auto& a = res.documents[0];
    CHECK(a.text == "Flood\n\nRivers rose in Hunan.");
    CHECK(a.domain_tag == std::optional<std::string>("disaster"));
    // "Flood" (5) + blank line (2) shifts the body offsets by 7.
    REQUIRE(a.events[0].arguments[0].span);
    CHECK(*a.events[0].arguments[0].span == Span{22, 27, SpanUnit::character});
    CHECK(a.text.substr(22, 5) == "Hunan");
    CHECK(res.documents[1].doc_id == "docee-000001");
    CHECK(res.documents[2].text == "Vote held.");
    CHECK(res.documents[2].events[0].arguments[0].role == "Date");
    CHECK(res.event_types == std::set<std::string>{"Floods", "Earthquakes", "Elections"});
    CHECK(validate_corpus(res.documents).empty());
}

TEST_CASE("load_docee splits and errors") {
    TempDir dir;
    SUBCASE("empty file") {
        write_file(dir / "e.json", "");
        CHECK(load_docee(dir / "e.json", DocEESetting::normal).documents.empty());
    }
    SUBCASE("cross split absent") {
        std::filesystem::create_directories(dir / "normal");
        write_file(dir / "normal" / "test.json", "[]");
        CHECK(load_docee(dir.path(), DocEESetting::normal).documents.empty());
        CHECK_THROWS_AS(load_docee(dir.path(), DocEESetting::cross_domain), SettingError);
    }
    SUBCASE("directory layout picks the requested split") {
        const auto res = load_docee(testsupport::fixtures() / "docee", DocEESetting::cross_domain);
        CHECK(res.documents.size() == 2);
        CHECK(res.event_types.count("Protests") == 1);
    }
    SUBCASE("not an array") {
        write_file(dir / "o.json", "{}");
        CHECK_THROWS_AS(load_docee(dir / "o.json", DocEESetting::normal), FormatError);
    }
    SUBCASE("bad record strict vs lenient") {
        write_file(dir / "b.json", R"([{"title": "t", "text": "x", "event_type": "E", "arguments": []}, {"title": 3}])");
        CHECK_THROWS_AS(load_docee(dir / "b.json", DocEESetting::normal), FormatError);
        LoadOptions opts;
        opts.lenient = true;
        const auto res = load_docee(dir / "b.json", DocEESetting::normal, opts);
        CHECK(res.documents.size() == 1);
        CHECK(res.skipped == 1);
    }
}

TEST_CASE("sample_subset") {
    std::vector<Document> docs;
    for (int i = 0; i < 800; ++i) docs.push_back(testsupport::docee_doc("d" + std::to_string(i), "t", "E"));

    SUBCASE("deterministic and without replacement") {
        const auto a = sample_subset(docs, 200, 7);
        const auto b = sample_subset(docs, 200, 7);
        CHECK(a == b);
        std::set<std::string> ids;
        for (const auto& d : a) ids.insert(d.doc_id);
        CHECK(ids.size() == 200);
        CHECK(sample_subset(docs, 200, 8) != a);
    }
    SUBCASE("independent of input order") {
        auto shuffled = docs;
        std::reverse(shuffled.begin(), shuffled.end());
        CHECK(sample_subset(shuffled, 50, 3) == sample_subset(docs, 50, 3));
    }
    SUBCASE("smaller draws are prefixes of larger ones") {
        const auto big = sample_subset(docs, 300, 11);
        const auto small = sample_subset(docs, 120, 11);
        CHECK(std::equal(small.begin(), small.end(), big.begin()));
    }
    SUBCASE("exhaustive draw is a permutation") {
        std::vector<Document> five(docs.begin(), docs.begin() + 5);
        const auto s = sample_subset(five, 5, 42);
        std::set<std::string> ids;
        for (const auto& d : s) ids.insert(d.doc_id);
        CHECK(ids == std::set<std::string>{"d0", "d1", "d2", "d3", "d4"});
    }
    SUBCASE("pinned order") {
        // From tests/oracles/sample_order.py, an independent mt19937_64.
        std::vector<Document> ten(docs.begin(), docs.begin() + 10);
        const auto s = sample_subset(ten, 10, 7);
        std::string order;
        for (const auto& d : s) order += d.doc_id + " ";
        CHECK(order == "d0 d7 d4 d9 d3 d1 d2 d8 d6 d5 ");
    }
    SUBCASE("errors") {
        std::vector<Document> three(docs.begin(), docs.begin() + 3);
        CHECK_THROWS_AS(sample_subset(three, 4, 1), SampleError);
        CHECK_THROWS_AS(sample_subset(three, 0, 1), SampleError);
    }
}

TEST_CASE("validate_document") {
    TempDir dir;
    write_file(dir / "one.jsonl", std::string(kOneRecord) + "\n");
    auto d = load_rams(dir / "one.jsonl").documents.at(0);
    CHECK(validate_document(d).empty());

    SUBCASE("argument span past the end") {
        d.events[0].arguments[0].span = Span{3, 99, SpanUnit::token};
        const auto issues = validate_document(d);
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].kind == IssueKind::out_of_bounds);
    }
    SUBCASE("character span past the text") {
        auto e = testsupport::docee_doc("x", "short", "E", {{"Place", "short", Span{0, 6, SpanUnit::character}}});
        const auto issues = validate_document(e);
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].kind == IssueKind::out_of_bounds);
    }
    SUBCASE("empty role") {
        d.events[0].arguments[1].role = "  ";
        const auto issues = validate_document(d);
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].kind == IssueKind::empty_role);
    }
    SUBCASE("trigger rules per dataset") {
        d.events[0].trigger.reset();
        CHECK(validate_document(d).at(0).kind == IssueKind::missing_trigger);
        auto e = testsupport::docee_doc("x", "text", "E");
        e.events[0].trigger = Trigger{"text", Span{0, 4, SpanUnit::character}};
        CHECK(validate_document(e).at(0).kind == IssueKind::unexpected_trigger);
    }
    SUBCASE("duplicate ids at corpus level") {
        const auto issues = validate_corpus({d, d});
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].kind == IssueKind::duplicate_doc_id);
    }
}

TEST_CASE("dump round-trip reproduces the documents") {
    TempDir dir;
    auto rams = load_rams(testsupport::fixtures() / "rams_small.jsonl").documents;
    auto docee = load_docee(testsupport::fixtures() / "docee", DocEESetting::normal).documents;
    std::vector<Document> all = rams;
    all.insert(all.end(), docee.begin(), docee.end());
    write_dump(dir / "dump.jsonl", all);
    const auto back = load_dump(dir / "dump.jsonl");
    CHECK(back == all);
    // Stable bytes: re-dumping gives the same file.
    write_dump(dir / "dump2.jsonl", back);
    CHECK(testsupport::read_file(dir / "dump.jsonl") == testsupport::read_file(dir / "dump2.jsonl"));
    CHECK(dump_line(all[0]).find("\"schema\":1") != std::string::npos);
}
