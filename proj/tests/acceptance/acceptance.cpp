// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 on any
// failure. Tolerances and limits are fixed here.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "model_check.hpp"
#include "oracles.hpp"
#include "vemr/app.hpp"
#include "vemr/eval.hpp"
#include "vemr/rules.hpp"
#include "walkthrough.hpp"

using namespace vemr;
namespace tst = vemr::testing;

namespace {

constexpr double kExact = 1e-12;
constexpr double kThresholdBudgetS = 1.0;
constexpr double kWerBudgetS = 30.0;
constexpr double kModelCheckBudgetS = 120.0;
constexpr std::size_t kModelCheckSequences = 10000;
constexpr std::size_t kModelCheckEvents = 40;

const std::string kData = VEMR_DATA_DIR;
const std::string kCorpus = std::string(VEMR_FIXTURE_DIR) + "/corpus";

const emr::Schema& schema() {
    static const auto s = emr::load_schema(kData + "/schema/emr_schema.json");
    return s;
}

const lexicon::Lexicon& lex() {
    static const auto l = lexicon::load_lexicon_file(kData + "/lexicon/medical_dictionary.txt");
    return l;
}

struct Outcome {
    bool pass = true;
    std::ostringstream note;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) note << "failed: " << what << "; ";
        pass = pass && ok;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string join(const std::vector<std::string>& w) {
    std::string out;
    for (const auto& x : w) out += (out.empty() ? "" : " ") + x;
    return out;
}

bool near(double a, double b) { return std::fabs(a - b) <= kExact; }

std::string run_cli(const std::string& args, int& status) {
    const std::string cmd = std::string(VEMR_CLI_PATH) + " --resources " + kData + " " + args + " 2>&1";
    std::string out;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) {
        status = -1;
        return out;
    }
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
    const int st = pclose(p);
    status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return out;
}

// 1. Each threshold below, at and above its boundary, plus blood-pressure
//    combinations, against a hand-written expectation table.
void threshold_matrix(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto shipped = rules::load_rules(kData + "/rules/thresholds.json");
    struct Row {
        const char* parameter;
        double below, at, above;
        bool fires_below, fires_at, fires_above;
        const char* rule;
    };
    const Row table[] = {
        {"bp_systolic", 139.9, 140, 140.1, false, false, true, "hypertension"},
        {"bp_diastolic", 89.9, 90, 90.1, false, false, true, "hypertension"},
        {"bmi", 29.9, 30, 30.1, false, false, true, "obesity"},
        {"hemoglobin", 10.9, 11, 11.1, true, false, false, "anemia"},
        {"random_blood_glucose", 159.9, 160, 160.1, false, true, true, "hyperglycemia"},
        {"hba1c", 6.9, 7, 7.1, false, true, true, "elevated_hba1c"},
        {"urine_albumin", 1, 2, 3, false, true, true, "proteinuria"},   // trace, 1+, 2+
        {"urine_glucose", 2, 3, 4, false, true, true, "glycosuria"},    // 1+, 2+, 3+
    };
    std::size_t checked = 0;
    auto fired = [&](const rules::Measurements& m) {
        std::vector<std::string> ids;
        for (const auto& f : rules::evaluate_thresholds(m, shipped)) ids.push_back(f.rule_id);
        return ids;
    };
    for (const auto& r : table) {
        const std::pair<double, bool> points[] = {{r.below, r.fires_below}, {r.at, r.fires_at}, {r.above, r.fires_above}};
        for (const auto& [v, expect] : points) {
            const auto got = fired({{r.parameter, v}});
            o.require(got == (expect ? std::vector<std::string>{r.rule} : std::vector<std::string>{}),
                      std::string(r.parameter) + "=" + std::to_string(v));
            ++checked;
        }
    }
    const std::pair<std::pair<double, double>, bool> bp[] = {
        {{150, 80}, true}, {{130, 95}, true}, {{150, 95}, true}, {{140, 90}, false}, {{120, 80}, false}};
    for (const auto& [p, expect] : bp) {
        const auto got = fired({{"bp_systolic", p.first}, {"bp_diastolic", p.second}});
        o.require(got == (expect ? std::vector<std::string>{"hypertension"} : std::vector<std::string>{}),
                  "bp " + std::to_string(p.first) + "/" + std::to_string(p.second));
        ++checked;
    }
    o.require(fired({}).empty(), "absent measurements");
    const double s = seconds_since(t0);
    o.require(s < kThresholdBudgetS, "runtime");
    o.note << checked << " cases in " << s << " s (limit " << kThresholdBudgetS << " s)";
}

// 2. Word error rate equals an independent edit distance.
void wer_oracle(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20240903);
    std::size_t mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        auto ref = tst::random_words(rng, 12);
        if (ref.empty()) ref.push_back("w0");
        const auto hyp = tst::random_words(rng, 12);
        const auto got = eval::wer(join(ref), join(hyp), {}, nullptr);
        const double expect = static_cast<double>(tst::edit_distance_oracle(ref, hyp)) / static_cast<double>(ref.size());
        if (!near(got.wer, expect)) ++mismatches;
    }
    const double s = seconds_since(t0);
    o.require(mismatches == 0, std::to_string(mismatches) + " mismatching pairs");
    o.require(s < kWerBudgetS, "runtime");
    o.note << "1000 pairs, " << mismatches << " mismatches, " << s << " s (limit " << kWerBudgetS << " s)";
}

// 3. The repeated-sentence transcript.
void repeated_sentence(Outcome& o) {
    const auto pairs = eval::load_wer_pairs(kCorpus);
    const eval::WerPair* p302 = nullptr;
    for (const auto& p : pairs)
        if (p.id == "P302") p302 = &p;
    o.require(p302 != nullptr, "P302 present in corpus");
    if (!p302) return;
    eval::NormalizationOptions collapse;
    collapse.collapse_repetitions = true;
    const double off = eval::wer(p302->reference, p302->hypothesis, {}, nullptr).wer;
    const double on = eval::wer(p302->reference, p302->hypothesis, collapse, nullptr).wer;
    o.require(near(off, 2.00), "2.00 without collapse");
    o.require(near(on, 0.00), "0.00 with collapse");
    o.note << "P302 WER " << off << " without collapse, " << on << " with";
}

// 4. Roman-Urdu spelling variants.
void spelling_variants(Outcome& o) {
    eval::NormalizationOptions canon;
    canon.roman_urdu_canonicalize = true;
    const std::vector<std::string> variants{"kertay", "krte", "krtay", "krty", "karte", "kartay"};
    std::size_t pairs = 0;
    for (const auto& a : variants)
        for (const auto& b : variants) {
            if (a == b) continue;
            const auto ref = "wo kaam " + a + " hain";
            const auto hyp = "wo kaam " + b + " hain";
            o.require(eval::wer(ref, hyp, canon, &lex()).wer == 0.0, a + "/" + b + " with canonicalization");
            o.require(eval::wer(ref, hyp, {}, &lex()).wer > 0.0, a + "/" + b + " without canonicalization");
            ++pairs;
        }
    o.note << pairs << " variant pairs";
}

// 5. Field accuracy equals a naive count.
void field_accuracy(Outcome& o) {
    std::mt19937_64 rng(77);
    std::size_t mismatches = 0;
    for (int i = 0; i < 500; ++i) {
        const auto truth = tst::random_document(schema(), rng);
        const auto system = tst::perturb(truth, schema(), std::uniform_real_distribution<double>(0, 0.5)(rng), rng);
        if (!near(eval::field_accuracy(system, truth, schema()).accuracy(), tst::naive_accuracy(system, truth, schema())))
            ++mismatches;
        o.require(eval::field_accuracy(truth, truth, schema()).accuracy() == 1.0, "identical documents score 1.0");
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " mismatching pairs");
    o.note << "500 pairs, " << mismatches << " mismatches";
}

// 6. Workflow invariants under random operation sequences.
void model_check(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    tst::ModelCheckOptions opts;
    opts.sequences = kModelCheckSequences;
    opts.max_events = kModelCheckEvents;
    opts.seed = 1;
    const auto r = tst::run_model_check(opts);
    const double s = seconds_since(t0);
    for (const auto& v : r.violations) o.require(false, v);
    o.require(r.sequences == kModelCheckSequences, "sequence count");
    o.require(s < kModelCheckBudgetS, "runtime");
    o.note << r.sequences << " sequences, " << r.operations << " operations (" << r.accepted << " accepted), "
           << r.finalized << " finalized, " << r.violations.size() << " violations, " << s << " s (limit "
           << kModelCheckBudgetS << " s)";
}

// 7. End-to-end visit over the network API, twice.
void end_to_end(Outcome& o) {
    std::vector<tst::WalkthroughResult> runs;
    for (int i = 0; i < 2; ++i) {
        app::Runtime rt(tst::mock_config(tst::temp_dir("acceptance-e2e")));
        tst::LocalServer server(rt.service());
        tst::HttpClient api("127.0.0.1", server.port());
        runs.push_back(tst::new_patient_walkthrough(api, *rt.mock_speech()));
    }
    const auto doc = emr::parse(runs[0].canonical_emr, schema());
    o.require(runs[0].final_session["state"] == "finalized", "visit finalized");
    o.require(emr::validate_document(doc, schema()).ok(), "EMR validates");
    // The recordings affirm exactly these; every other yes/no field is unmentioned or negated.
    const std::set<std::string> affirmed{"consanguineous_marriage", "patient_family_diabetes",
                                         "husband_family_hypertension"};
    std::size_t denied = 0;
    for (const auto& spec : schema().specs()) {
        if (spec.kind != emr::FieldKind::Boolean) continue;
        const auto& v = doc.value(spec.id);
        if (affirmed.count(spec.id)) {
            o.require(std::holds_alternative<emr::Affirmed>(v), spec.id + " is Yes");
        } else {
            o.require(std::holds_alternative<emr::Denied>(v), spec.id + " is No");
            ++denied;
        }
    }
    for (const char* id : {"cardiac_problem", "recurrent_uti", "endocrine_dysfunction", "nausea", "contractions"})
        o.require(std::holds_alternative<emr::Denied>(doc.value(id)), std::string(id) + " (never mentioned) is No");
    o.require(runs[0].canonical_emr == runs[1].canonical_emr, "canonical EMR identical across runs");
    o.require(runs[0].snapshot == runs[1].snapshot, "visit snapshot identical across runs");
    o.note << runs[0].states.size() << " API calls, " << runs[0].canonical_emr.size() << " EMR bytes, "
           << denied << " yes/no fields recorded as No";
}

// 8. Gestational age and due date against a day-stepping calendar; BMI.
void calendar(Outcome& o) {
    using namespace std::chrono;
    std::mt19937_64 rng(8);
    std::size_t mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        tst::CivilDate lmp{std::uniform_int_distribution<int>(1990, 2040)(rng), std::uniform_int_distribution<int>(1, 12)(rng), 1};
        lmp.day = std::uniform_int_distribution<int>(1, tst::days_in_month(lmp.year, lmp.month))(rng);
        const int gap = std::uniform_int_distribution<int>(0, 300)(rng);
        const auto on = tst::add_days_oracle(lmp, gap);
        const auto edd = tst::add_days_oracle(lmp, 280);
        const auto g = rules::gestation(year(lmp.year) / lmp.month / lmp.day, year(on.year) / on.month / on.day);
        const long days = tst::days_between_oracle(lmp, on);
        if (g.weeks != days / 7 || g.days != days % 7 || g.edd != year(edd.year) / edd.month / edd.day) ++mismatches;
    }
    const double bmi = rules::compute_bmi(90, 154);
    o.require(mismatches == 0, std::to_string(mismatches) + " mismatching dates");
    o.require(bmi == 37.9, "BMI 90 kg / 154 cm is 37.9");
    o.note << "1000 dates, " << mismatches << " mismatches, BMI " << bmi;
}

// 9. Evaluation command output is reproducible.
void reproducible_reports(Outcome& o) {
    const std::vector<std::string> commands{"eval wer", "eval wer --collapse-repetitions --canonicalize", "eval accuracy",
                                            "eval categorize", "eval flags", "eval cross-model"};
    std::size_t bytes = 0;
    for (const auto& c : commands) {
        for (const std::string fmt : {"text", "json"}) {
            int s1 = 0, s2 = 0;
            const auto a = run_cli(c + " " + kCorpus + " --format " + fmt, s1);
            const auto b = run_cli(c + " " + kCorpus + " --format " + fmt, s2);
            o.require(s1 == 0 && s2 == 0, c + " exits 0");
            o.require(!a.empty() && a == b, c + " --format " + fmt + " identical");
            bytes += a.size();
            if (c == "eval cross-model" && fmt == "text")
                o.require(a.find("mock-llm-a") != std::string::npos && a.find("mock-llm-b") != std::string::npos,
                          "cross-model table has both backends");
        }
    }
    o.note << commands.size() * 2 << " reports, " << bytes << " bytes each run";
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
        {"threshold matrix", threshold_matrix},
        {"word error rate equals edit-distance oracle", wer_oracle},
        {"repeated sentence 2.00 / 0.00", repeated_sentence},
        {"Roman-Urdu variants", spelling_variants},
        {"field accuracy equals naive count", field_accuracy},
        {"workflow model check", model_check},
        {"end-to-end visit over HTTP", end_to_end},
        {"gestation, due date and BMI", calendar},
        {"reproducible evaluation reports", reproducible_reports},
    };
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " ("
                  << o.note.str() << ")" << std::endl;
    }
    return all ? 0 : 1;
}
