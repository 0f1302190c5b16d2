#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "vemr/emr.hpp"
#include "vemr/emr_json.hpp"
#include "vemr/error.hpp"

using namespace vemr;
using namespace std::chrono;

namespace {

const emr::Schema& schema() {
    static const auto s = emr::load_schema(std::string(VEMR_DATA_DIR) + "/schema/emr_schema.json");
    return s;
}

} // namespace

TEST_CASE("shipped schema passes its self check") {
    const auto& s = schema();
    CHECK_NOTHROW(s.self_check());
    REQUIRE(s.sections().size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(s.sections()[i].kind == emr::kAllSections[i]);
    CHECK(s.find("bmi")->unit == emr::Unit::KgPerM2);
    CHECK(s.find("urine_albumin")->kind == emr::FieldKind::Ordinal);
    CHECK(s.find("nope") == nullptr);
    CHECK(s.section(emr::SectionKind::PastPregnancy).extensible);
}

TEST_CASE("schema rejects duplicate ids and numeric fields without units") {
    const std::string dup = R"({"version":"t/1","sections":[
        {"kind":"personal_medical_history","label":"P","fields":[{"id":"a","label":"A","kind":"boolean"}]},
        {"kind":"family_history","label":"F","fields":[{"id":"a","label":"A","kind":"boolean"}]},
        {"kind":"socio_economic_history","label":"S","fields":[]},
        {"kind":"past_pregnancy","label":"Pa","fields":[]},
        {"kind":"present_pregnancy","label":"Pr","fields":[]},
        {"kind":"proposed_plan","label":"Pl","fields":[]}]})";
    CHECK_THROWS_AS(emr::parse_schema(dup), ValidationError);
    const std::string unitless = R"({"version":"t/1","sections":[
        {"kind":"personal_medical_history","label":"P","fields":[{"id":"w","label":"W","kind":"numeric"}]},
        {"kind":"family_history","label":"F","fields":[]},
        {"kind":"socio_economic_history","label":"S","fields":[]},
        {"kind":"past_pregnancy","label":"Pa","fields":[]},
        {"kind":"present_pregnancy","label":"Pr","fields":[]},
        {"kind":"proposed_plan","label":"Pl","fields":[]}]})";
    CHECK_THROWS_AS(emr::parse_schema(unitless), ValidationError);
}

TEST_CASE("blank documents are valid and all no-information") {
    const auto doc = emr::blank_document(schema());
    CHECK(emr::validate_document(doc, schema()).ok());
    CHECK(doc.values.size() == schema().size());
    for (const auto& [id, v] : doc.values) CHECK(emr::is_no_information(v));
}

TEST_CASE("validation reports kind mismatches, unknown fields and missing provenance") {
    auto doc = emr::blank_document(schema());
    doc.values["bmi"] = emr::Numeric{30.0, emr::Unit::Kg};
    doc.provenance["bmi"] = emr::Provenance::Deterministic;
    doc.values["smoking"] = emr::Denied{};
    doc.values["made_up"] = emr::Denied{};
    const auto r = emr::validate_document(doc, schema());
    std::vector<std::string> ids;
    for (const auto& v : r.violations) ids.push_back(v.field_id);
    CHECK(ids == std::vector<std::string>{"smoking", "bmi", "made_up"});
}

TEST_CASE("vitals invariants") {
    CHECK(emr::validate_vitals({154, 90, 150, 95, 37, 88}).empty());
    CHECK(emr::validate_vitals({}).empty());
    CHECK(emr::validate_vitals({-1.0, {}, {}, {}, {}, {}}).size() == 1);
    CHECK(emr::validate_vitals({{}, {}, 80, 90, {}, {}}) == std::vector<std::string>{"systolic must exceed diastolic"});
}

TEST_CASE("canonical equality folds text but keeps kinds apart") {
    CHECK(emr::canonically_equal(emr::Text{"  Cephalic"}, emr::Text{"cephalic "}));
    CHECK(emr::canonically_equal(emr::Affirmed{std::string("Mild")}, emr::Affirmed{std::string("mild")}));
    CHECK_FALSE(emr::canonically_equal(emr::Affirmed{}, emr::Denied{}));
    CHECK_FALSE(emr::canonically_equal(emr::NoInformation{}, emr::Denied{}));
    CHECK_FALSE(emr::canonically_equal(emr::Text{"cephalic"}, emr::Text{"breech"}));
    CHECK_FALSE(emr::canonically_equal(emr::Numeric{1, emr::Unit::Kg}, emr::Numeric{1, emr::Unit::Cm}));
}

TEST_CASE("value displays") {
    CHECK(emr::display(emr::NoInformation{}) == "No Info");
    CHECK(emr::display(emr::Affirmed{}) == "Yes");
    CHECK(emr::display(emr::Denied{}) == "No");
    CHECK(emr::display(emr::Numeric{36, emr::Unit::Cm}) == "36 cm");
    CHECK(emr::display(emr::Numeric{37.9, emr::Unit::KgPerM2}) == "37.9 kg/m2");
    CHECK(emr::display(emr::Date{year(2024) / 1 / 10}) == "2024-01-10");
    CHECK(emr::grade_from_string("1+") == emr::DipstickGrade::Plus1);
    CHECK(emr::grade_from_string("nil") == emr::DipstickGrade::Negative);
    CHECK(emr::grade_from_string("plus2") == emr::DipstickGrade::Plus2);
    CHECK_FALSE(emr::grade_from_string("5+").has_value());
}

TEST_CASE("serialize and parse round-trip on random documents, byte-stable") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        auto doc = testing::random_document(schema(), rng);
        doc.additional_info[emr::SectionKind::PresentPregnancy] = "Mild back ache at night.";
        const auto text = emr::serialize(doc, schema());
        const auto back = emr::parse(text, schema());
        CHECK(back == doc);
        CHECK(emr::serialize(back, schema()) == text);
    }
}

TEST_CASE("parse errors name the offending path") {
    auto doc = emr::blank_document(schema());
    doc.values["bmi"] = emr::Numeric{37.9, emr::Unit::KgPerM2};
    doc.provenance["bmi"] = emr::Provenance::Deterministic;
    auto j = emr::document_to_json(doc, schema());
    j["sections"][4]["fields"][24]["value"]["unit"] = "furlongs";
    try {
        emr::parse(j.dump(), schema());
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.path().find("sections[4].fields[24]") != std::string::npos);
    }

    const auto text = emr::serialize(doc, schema());
    const auto cut = text.find("present_pregnancy");
    REQUIRE(cut != std::string::npos);
    try {
        emr::parse(text.substr(0, cut + 200), schema());
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.path().find("present_pregnancy") != std::string::npos);
    }
}

TEST_CASE("diff is in schema order and rejects mixed versions") {
    std::mt19937_64 rng(3);
    const auto a = testing::random_document(schema(), rng);
    const auto b = testing::perturb(a, schema(), 0.3, rng);
    const auto diffs = emr::diff_documents(a, b, schema());
    REQUIRE(diffs.size() == schema().size());
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        CHECK(diffs[i].field_id == schema().specs()[i].id);
        CHECK(diffs[i].equal == testing::naive_equal(a.value(diffs[i].field_id), b.value(diffs[i].field_id)));
    }
    auto c = b;
    c.schema_version = "other/2";
    CHECK_THROWS_AS(emr::diff_documents(a, c, schema()), ValidationError);
}

TEST_CASE("edits apply in order, mark provenance, reject bad ids and kinds") {
    const auto doc = emr::blank_document(schema());
    const auto edited = emr::apply_edits(
        doc, {{"presentation", emr::Text{"breech"}}, {"presentation", emr::Text{"cephalic"}}}, schema());
    CHECK(std::get<emr::Text>(edited.value("presentation")).text == "cephalic");
    CHECK(edited.provenance.at("presentation") == emr::Provenance::ClinicianEdited);
    CHECK_THROWS_AS(emr::apply_edits(doc, {{"nope", emr::Denied{}}}, schema()), ValidationError);
    CHECK_THROWS_AS(emr::apply_edits(doc, {{"bmi", emr::Denied{}}}, schema()), ValidationError);
}

TEST_CASE("vitals JSON round-trip") {
    const emr::VitalSigns v{154, 90, 150, 95, 37.0, 88};
    CHECK(emr::vitals_from_json(emr::vitals_to_json(v)) == v);
    const emr::VitalSigns partial{154, {}, {}, {}, {}, {}};
    CHECK(emr::vitals_from_json(emr::vitals_to_json(partial)) == partial);
}
