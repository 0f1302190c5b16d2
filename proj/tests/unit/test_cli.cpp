#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sys/wait.h>

#include "vemr/app.hpp"
#include "vemr/text.hpp"
#include "walkthrough.hpp"

using namespace vemr;
using namespace vemr::testing;
namespace fs = std::filesystem;

namespace {

const std::string kCorpus = std::string(VEMR_FIXTURE_DIR) + "/corpus";

struct Run {
    int status = -1;
    std::string out;
};

Run vemr_cli(const std::string& args) {
    const std::string cmd = std::string(VEMR_CLI_PATH) + " --resources " + VEMR_DATA_DIR + " " + args + " 2>/dev/null";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

} // namespace

TEST_CASE("every eval report is byte-identical across runs") {
    for (const std::string sub : {"wer", "wer --collapse-repetitions --canonicalize", "accuracy", "categorize", "flags",
                                  "cross-model"}) {
        for (const std::string fmt : {"text", "json"}) {
            const auto a = vemr_cli("eval " + sub + " " + kCorpus + " --format " + fmt);
            const auto b = vemr_cli("eval " + sub + " " + kCorpus + " --format " + fmt);
            CAPTURE(sub);
            CHECK(a.status == 0);
            CHECK_FALSE(a.out.empty());
            CHECK(a.out == b.out);
            if (fmt == "json") CHECK(Json::accept(a.out));
        }
    }
}

TEST_CASE("wer report reflects the normalization switches") {
    const auto off = Json::parse(vemr_cli("eval wer " + kCorpus + " --format json").out);
    const auto on = Json::parse(vemr_cli("eval wer " + kCorpus + " --collapse-repetitions --format json").out);
    CHECK(off["normalization"]["collapse_repetitions"] == false);
    CHECK(on["normalization"]["collapse_repetitions"] == true);
    CHECK(off["pairs"][2]["id"] == "P302");
    CHECK(off["pairs"][2]["wer"].get<double>() == doctest::Approx(2.0));
    CHECK(on["pairs"][2]["wer"].get<double>() == 0.0);
}

TEST_CASE("cross-model table lists both backends and every section") {
    const auto r = vemr_cli("eval cross-model " + kCorpus);
    REQUIRE(r.status == 0);
    CHECK(r.out.find("mock-llm-a") != std::string::npos);
    CHECK(r.out.find("mock-llm-b") != std::string::npos);
    CHECK(r.out.find("Family History") != std::string::npos);
    CHECK(r.out.find("Overall Accuracy") != std::string::npos);
}

TEST_CASE("reports can be written to a file") {
    const auto out = temp_dir("cli-out") + "/reports/acc.txt";
    CHECK(vemr_cli("eval accuracy " + kCorpus + " --out " + out).status == 0);
    CHECK(text::read_file(out) == vemr_cli("eval accuracy " + kCorpus).out);
}

TEST_CASE("bad input exits non-zero") {
    CHECK(vemr_cli("eval wer /nonexistent/corpus").status != 0);
    CHECK(vemr_cli("eval wer " + kCorpus + " --format xml").status != 0);
    CHECK(vemr_cli("eval").status != 0);
    CHECK(vemr_cli("frobnicate").status != 0);

    const auto dir = temp_dir("cli-bad-corpus");
    fs::copy(kCorpus, dir + "/c", fs::copy_options::recursive);
    text::write_file(dir + "/c/patients/P205/truth_emr.json", "{ not json");
    CHECK(vemr_cli("eval accuracy " + dir + "/c").status != 0);

    const auto cfg = dir + "/config.json";
    text::write_file(cfg, "{\"unknown_key\": 1}");
    CHECK(vemr_cli("--config " + cfg + " eval wer " + kCorpus).status != 0);
}

TEST_CASE("import-corpus validates and refuses a second import under the same name") {
    const auto store = temp_dir("cli-import");
    const auto r = vemr_cli("--data-dir " + store + " import-corpus " + kCorpus + " --name fixture");
    CHECK(r.status == 0);
    CHECK(r.out.find("3 patients") != std::string::npos);
    CHECK(fs::exists(store + "/corpora/fixture/patients/P302/hypothesis.txt"));
    CHECK(vemr_cli("--data-dir " + store + " import-corpus " + kCorpus + " --name fixture").status != 0);
}

TEST_CASE("export-visit and import-visit move a finalized visit between stores") {
    const auto src = temp_dir("cli-export-src");
    {
        app::Runtime rt(mock_config(src));
        InProcessClient api(rt.service());
        new_patient_walkthrough(api, *rt.mock_speech());
    }
    const auto archive = temp_dir("cli-export") + "/visit.json";
    REQUIRE(vemr_cli("--data-dir " + src + " export-visit MR-000302-v1 --out " + archive).status == 0);
    const auto anon = vemr_cli("--data-dir " + src + " export-visit MR-000302-v1 --anonymize");
    CHECK(anon.status == 0);
    CHECK(anon.out.find("Ayesha") == std::string::npos);

    const auto dst = temp_dir("cli-export-dst");
    const auto r = vemr_cli("--data-dir " + dst + " import-visit " + archive);
    CHECK(r.status == 0);
    CHECK(r.out == "imported visit MR-000302-v1\n");
    CHECK(vemr_cli("--data-dir " + dst + " import-visit " + archive).status != 0);
    CHECK(vemr_cli("--data-dir " + src + " export-visit MR-404-v1").status != 0);
}
