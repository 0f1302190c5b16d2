// OpenMP kernels against their serial reference implementations.
//
//   build/bench/vemr_bench --benchmark_filter=Wer

#include <benchmark/benchmark.h>

#include <random>

#include "vemr/eval.hpp"
#include "vemr/retrieval.hpp"
#include "vemr/transcript.hpp"

using namespace vemr;

namespace {

const std::string kData = VEMR_DATA_DIR;

const emr::Schema& schema() {
    static const auto s = emr::load_schema(kData + "/schema/emr_schema.json");
    return s;
}

const retrieval::Index& index() {
    static const auto idx = retrieval::index_corpus(retrieval::load_corpus_dir(kData + "/guidelines"));
    return idx;
}

std::vector<eval::WerPair> wer_pairs(std::size_t n) {
    static const std::vector<std::string> vocab{"patient", "has", "no", "fever", "blood", "pressure", "is",
                                                "normal", "sugar", "kertay", "krte", "hain", "pain", "mild"};
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1), len(20, 200);
    auto sentence = [&] {
        std::string s;
        for (std::size_t i = len(rng); i > 0; --i) s += vocab[word(rng)] + " ";
        return s;
    };
    std::vector<eval::WerPair> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({"p" + std::to_string(i), sentence(), sentence()});
    return out;
}

std::vector<eval::DocumentPair> document_pairs(std::size_t n) {
    const auto base = eval::load_document_pairs(std::string(VEMR_FIXTURE_DIR) + "/corpus", schema());
    std::vector<eval::DocumentPair> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(base[i % base.size()]);
    return out;
}

const char* kQuery = "blood pressure above 140 hemoglobin below 11 iron folic acid urine protein referral";

void Retrieve(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(retrieval::retrieve(kQuery, index(), 5));
}
void RetrieveSerial(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(retrieval::retrieve_serial(kQuery, index(), 5));
}

void WerBatch(benchmark::State& st) {
    const auto pairs = wer_pairs(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(eval::wer_batch(pairs, {}, nullptr));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
void WerBatchSerial(benchmark::State& st) {
    const auto pairs = wer_pairs(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(eval::wer_batch_serial(pairs, {}, nullptr));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void FieldAccuracyBatch(benchmark::State& st) {
    const auto pairs = document_pairs(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(eval::field_accuracy_batch(pairs, schema()));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
void FieldAccuracyBatchSerial(benchmark::State& st) {
    const auto pairs = document_pairs(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(eval::field_accuracy_batch_serial(pairs, schema()));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void Transcribe(benchmark::State& st, bool parallel) {
    const auto speech = transcript::MockSpeechBackend::from_fixture_file(kData + "/mock/speech_fixtures.json");
    const auto rec = transcript::make_recording(speech.fixture_audio("new_pmh"));
    transcript::TranscribeOptions opts;
    opts.parallel = parallel;
    for (auto _ : st)
        benchmark::DoNotOptimize(
            transcript::transcribe_section(rec, speech, emr::SectionKind::PersonalMedicalHistory, opts));
}

} // namespace

BENCHMARK(Retrieve);
BENCHMARK(RetrieveSerial);
BENCHMARK(WerBatch)->Arg(64)->Arg(1024);
BENCHMARK(WerBatchSerial)->Arg(64)->Arg(1024);
BENCHMARK(FieldAccuracyBatch)->Arg(64)->Arg(1024);
BENCHMARK(FieldAccuracyBatchSerial)->Arg(64)->Arg(1024);
BENCHMARK_CAPTURE(Transcribe, parallel, true);
BENCHMARK_CAPTURE(Transcribe, serial, false);

BENCHMARK_MAIN();
