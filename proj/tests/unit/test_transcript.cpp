#include <doctest.h>

#include <random>

#include "vemr/audio.hpp"
#include "vemr/error.hpp"
#include "vemr/text.hpp"
#include "vemr/transcript.hpp"

using namespace vemr;
using namespace vemr::transcript;

namespace {

const MockSpeechBackend& fixtures() {
    static const auto m = MockSpeechBackend::from_fixture_file(std::string(VEMR_DATA_DIR) + "/mock/speech_fixtures.json");
    return m;
}

/// Echoes the segment index, failing on one of them.
class FlakyBackend : public SpeechBackend {
public:
    FlakyBackend(std::size_t fail_at, bool retryable) : fail_at_(fail_at), retryable_(retryable) {
        caps_.id = "flaky";
        caps_.max_segment_s = 10.0;
    }
    const SpeechCapabilities& capabilities() const override { return caps_; }
    SpeechResponse transcribe(const SpeechRequest& r) const override {
        if (r.segment->index == fail_at_) throw BackendError("boom", retryable_);
        return {"seg" + std::to_string(r.segment->index), std::nullopt};
    }

private:
    SpeechCapabilities caps_;
    std::size_t fail_at_;
    bool retryable_;
};

audio::PcmAudio tone(double seconds, std::vector<std::pair<double, double>> gaps = {}) {
    audio::SynthSpec s;
    s.seconds = seconds;
    s.silences = std::move(gaps);
    return audio::synthesize(s);
}

} // namespace

TEST_CASE("WAV encode and decode round-trip; bad containers rejected") {
    const auto a = tone(0.5);
    const auto b = audio::decode_wav(audio::encode_wav(a));
    CHECK(b.sample_rate == a.sample_rate);
    CHECK(b.samples == a.samples);
    CHECK_THROWS_AS(audio::decode_wav("RIFF....WAVEjunk"), ValidationError);
    CHECK_THROWS_AS(make_recording(audio::encode_wav(audio::PcmAudio{})), ValidationError);
}

TEST_CASE("segments tile the recording and respect the maximum length") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        const double secs = std::uniform_real_distribution<double>(0.2, 95.0)(rng);
        std::vector<std::pair<double, double>> gaps;
        for (int g = 0; g < 3; ++g) {
            const double at = std::uniform_real_distribution<double>(0.0, secs)(rng);
            gaps.emplace_back(at, at + std::uniform_real_distribution<double>(0.0, 0.8)(rng));
        }
        const auto pcm = tone(secs, gaps);
        SegmentationPolicy p;
        const auto segs = segment_audio(pcm, p);
        std::size_t total = 0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            CHECK(segs[i].index == i);
            CHECK(segs[i].duration_s <= p.max_s + 1e-9);
            CHECK(segs[i].offset_s == doctest::Approx(static_cast<double>(total) / pcm.sample_rate));
            total += audio::decode_wav(segs[i].bytes).samples.size();
        }
        CHECK(total == pcm.samples.size());
    }
}

TEST_CASE("cut lands inside a pause near the window end, forced without one") {
    const auto with_pause = segment_audio(tone(40.0, {{27.0, 27.6}}));
    REQUIRE(with_pause.size() == 2);
    CHECK(with_pause[0].duration_s > 27.0);
    CHECK(with_pause[0].duration_s < 27.6);
    const auto without = segment_audio(tone(40.0));
    REQUIRE(without.size() == 2);
    CHECK(without[0].duration_s == doctest::Approx(30.0));
}

TEST_CASE("fixture transcription joins segments in order, parallel equals serial") {
    const auto rec = make_recording(fixtures().fixture_audio("new_pmh"));
    TranscribeOptions serial;
    serial.parallel = false;
    const auto a = transcribe_section(rec, fixtures(), emr::SectionKind::PersonalMedicalHistory);
    const auto b = transcribe_section(rec, fixtures(), emr::SectionKind::PersonalMedicalHistory, serial);
    CHECK(a == b);
    REQUIRE(a.segments.size() == 2);
    CHECK(a.raw_text.rfind("Patient blood group", 0) == 0);
    CHECK(a.collapsed_text.size() < a.raw_text.size());
    CHECK(a.backend_id == "mock-asr");
    CHECK(transcript_from_json(transcript_to_json(a)) == a);
}

TEST_CASE("unknown audio is refused by the mock") {
    const auto rec = make_recording(audio::encode_wav(tone(1.0)));
    CHECK_THROWS_AS(transcribe_section(rec, fixtures(), emr::SectionKind::FamilyHistory), BackendError);
}

TEST_CASE("failed segment reports its offset and the completed prefix") {
    const auto rec = make_recording(audio::encode_wav(tone(35.0)));
    for (bool parallel : {true, false}) {
        TranscribeOptions o;
        o.parallel = parallel;
        try {
            transcribe_section(rec, FlakyBackend(2, true), emr::SectionKind::PresentPregnancy, o);
            FAIL("expected a failure");
        } catch (const TranscriptionError& e) {
            CHECK(e.retryable());
            CHECK(e.failed_offset_s() == doctest::Approx(20.0));
            REQUIRE(e.completed().size() == 2);
            CHECK(e.completed()[1].text == "seg1");
        }
    }
    try {
        transcribe_section(rec, FlakyBackend(0, false), emr::SectionKind::PresentPregnancy);
        FAIL("expected a failure");
    } catch (const TranscriptionError& e) {
        CHECK_FALSE(e.retryable());
        CHECK(e.completed().empty());
    }
}

TEST_CASE("repetition collapse") {
    CHECK(collapse_repetitions("surgical history is not significant surgical history is not significant "
                               "surgical history is not significant") == "surgical history is not significant");
    CHECK(collapse_repetitions("no no no pain") == "no pain");
    CHECK(collapse_repetitions("a b a b c c") == "a b c");
    CHECK(collapse_repetitions("  untouched   spacing ") == "  untouched   spacing ");
    CHECK(collapse_repetitions("x y x") == "x y x");
    CHECK(collapse_repetitions("a a", 8, 3) == "a a");
    CHECK_THROWS_AS(collapse_repetitions("a", 0), ValidationError);
}

TEST_CASE("collapse is idempotent and never leaves an adjacent repeat") {
    std::mt19937_64 rng(99);
    const char* vocab[] = {"a", "b", "c"};
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<std::string> words;
        const int n = std::uniform_int_distribution<int>(0, 16)(rng);
        for (int i = 0; i < n; ++i) words.emplace_back(vocab[std::uniform_int_distribution<int>(0, 2)(rng)]);
        const auto once = collapse_repetitions(text::join(words, " "));
        CHECK(collapse_repetitions(once) == once);
        const auto toks = text::split_whitespace(once);
        for (std::size_t k = 1; k <= 8; ++k)
            for (std::size_t i = 0; i + 2 * k <= toks.size(); ++i)
                CHECK_FALSE(std::equal(toks.begin() + i, toks.begin() + i + k, toks.begin() + i + k));
    }
}
