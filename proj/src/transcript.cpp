#include "vemr/transcript.hpp"

#include <omp.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>

#include "vemr/digest.hpp"
#include "vemr/http_client.hpp"
#include "vemr/json.hpp"
#include "vemr/text.hpp"

namespace vemr::transcript {

// ---------------------------------------------------------------------------
// Segmentation

namespace {

audio::PcmAudio slice(const audio::PcmAudio& src, std::size_t from, std::size_t to) {
    audio::PcmAudio out;
    out.sample_rate = src.sample_rate;
    out.samples.assign(src.samples.begin() + static_cast<std::ptrdiff_t>(from),
                       src.samples.begin() + static_cast<std::ptrdiff_t>(to));
    return out;
}

// Sample index of the midpoint of the longest silent run in [lo, hi), or
// nullopt when no run reaches the minimum length.
std::optional<std::size_t> best_silence_cut(const audio::PcmAudio& a, std::size_t lo, std::size_t hi,
                                            const SegmentationPolicy& p) {
    const auto frame = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(p.frame_s * a.sample_rate)));
    const double threshold = p.silence_rms * 32768.0;
    const auto min_frames = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(p.min_silence_s / p.frame_s)));

    std::size_t best_len = 0, best_begin = 0;
    std::size_t run_len = 0, run_begin = lo;
    for (std::size_t f = lo; f + frame <= hi; f += frame) {
        double energy = 0.0;
        for (std::size_t i = f; i < f + frame; ++i) energy += static_cast<double>(a.samples[i]) * a.samples[i];
        const bool silent = std::sqrt(energy / static_cast<double>(frame)) < threshold;
        if (silent) {
            if (run_len == 0) run_begin = f;
            ++run_len;
            // Ties go to the later run so segments stay as long as allowed.
            if (run_len >= best_len) {
                best_len = run_len;
                best_begin = run_begin;
            }
        } else {
            run_len = 0;
        }
    }
    if (best_len < min_frames) return std::nullopt;
    return best_begin + (best_len * frame) / 2;
}

} // namespace

std::vector<AudioSegment> segment_audio(const audio::PcmAudio& recording, const SegmentationPolicy& policy) {
    if (!(policy.max_s > 0.0)) throw ValidationError("max segment length must be positive", "max_s");
    if (recording.samples.empty() || recording.sample_rate <= 0)
        throw ValidationError("zero-length recording", "audio");

    const std::size_t rate = static_cast<std::size_t>(recording.sample_rate);
    const auto max_samples = static_cast<std::size_t>(std::floor(policy.max_s * static_cast<double>(rate)));
    const auto lookback = static_cast<std::size_t>(
        std::floor(std::min(policy.lookback_s, policy.max_s) * static_cast<double>(rate)));
    const std::size_t total = recording.samples.size();

    std::vector<AudioSegment> out;
    std::size_t start = 0;
    while (start < total) {
        std::size_t end = total;
        if (total - start > max_samples) {
            end = start + max_samples;
            if (auto cut = best_silence_cut(recording, end - lookback, end, policy); cut && *cut > start) end = *cut;
        }
        AudioSegment seg;
        seg.index = out.size();
        seg.offset_s = static_cast<double>(start) / static_cast<double>(rate);
        seg.duration_s = static_cast<double>(end - start) / static_cast<double>(rate);
        seg.bytes = audio::encode_wav(slice(recording, start, end));
        out.push_back(std::move(seg));
        start = end;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mock backend

MockSpeechBackend::MockSpeechBackend(std::string id) {
    caps_.id = std::move(id);
    caps_.languages = {"ur-Latn", "en"};
    caps_.max_segment_s = 30.0;
    caps_.deterministic = true;
}

void MockSpeechBackend::add_recording(const std::string& digest, std::vector<std::string> texts) {
    by_digest_[digest] = std::move(texts);
}

MockSpeechBackend MockSpeechBackend::from_fixture_file(const std::string& path) {
    Json j;
    try {
        j = Json::parse(text::read_file(path));
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("speech fixtures: ") + e.what(), path);
    }
    const auto base = std::filesystem::path(path).parent_path();
    MockSpeechBackend mock(j.value("backend_id", std::string("mock-asr")));
    for (const auto& f : j.at("fixtures")) {
        const auto id = f.at("id").get<std::string>();
        std::string wav;
        const auto& a = f.at("audio");
        if (a.contains("synth")) {
            const auto& s = a.at("synth");
            audio::SynthSpec spec;
            spec.seconds = s.at("seconds").get<double>();
            spec.freq_hz = s.value("freq_hz", 440.0);
            spec.amplitude = s.value("amplitude", 0.3);
            for (const auto& gap : s.value("silences", Json::array()))
                spec.silences.emplace_back(gap.at(0).get<double>(), gap.at(1).get<double>());
            wav = audio::encode_wav(audio::synthesize(spec));
        } else {
            wav = text::read_file((base / a.at("file").get<std::string>()).string());
        }
        std::vector<std::string> segs;
        for (const auto& s : f.at("segments")) segs.push_back(s.get<std::string>());
        mock.add_recording(sha256_hex(wav), std::move(segs));
        mock.audio_by_fixture_[id] = std::move(wav);
    }
    return mock;
}

const std::string& MockSpeechBackend::fixture_audio(const std::string& fixture_id) const {
    auto it = audio_by_fixture_.find(fixture_id);
    if (it == audio_by_fixture_.end()) throw NotFoundError("no speech fixture " + fixture_id);
    return it->second;
}

std::vector<std::string> MockSpeechBackend::fixture_ids() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : audio_by_fixture_) out.push_back(k);
    return out;
}

SpeechResponse MockSpeechBackend::transcribe(const SpeechRequest& request) const {
    auto it = by_digest_.find(request.recording_id);
    if (it == by_digest_.end())
        throw BackendError("mock backend has no script for recording " + request.recording_id, false);
    const auto idx = request.segment->index;
    if (idx >= it->second.size())
        throw BackendError("mock script too short for segment " + std::to_string(idx), false);
    return {it->second[idx], 1.0};
}

// ---------------------------------------------------------------------------
// Remote backend

namespace {

class HttpSpeechBackend : public SpeechBackend {
public:
    explicit HttpSpeechBackend(HttpSpeechConfig cfg) : cfg_(std::move(cfg)) {
        caps_.id = cfg_.id;
        caps_.languages = {cfg_.language};
        caps_.max_segment_s = 30.0;
        caps_.deterministic = false;
    }

    const SpeechCapabilities& capabilities() const override { return caps_; }

    SpeechResponse transcribe(const SpeechRequest& request) const override {
        std::map<std::string, std::string> headers{{"X-Language-Hint", request.language_hint}};
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            headers["Authorization"] = std::string("Bearer ") + key;
        auto res = net::post(cfg_.endpoint, request.segment->bytes, "audio/wav", headers, cfg_.timeout_s);
        if (res.status >= 500 || res.status == 429)
            throw BackendError("speech endpoint returned " + std::to_string(res.status), true);
        if (res.status != 200)
            throw BackendError("speech endpoint rejected segment: HTTP " + std::to_string(res.status), false);
        try {
            auto j = Json::parse(res.body);
            SpeechResponse out{j.at("text").get<std::string>(), std::nullopt};
            if (j.contains("confidence") && j["confidence"].is_number()) out.confidence = j["confidence"].get<double>();
            return out;
        } catch (const Json::exception& e) {
            throw BackendError(std::string("malformed speech response: ") + e.what(), false);
        }
    }

private:
    HttpSpeechConfig cfg_;
    SpeechCapabilities caps_;
};

} // namespace

std::unique_ptr<SpeechBackend> make_http_speech_backend(const HttpSpeechConfig& config) {
    if (config.endpoint.empty()) throw ValidationError("speech endpoint not configured", "endpoint");
    return std::make_unique<HttpSpeechBackend>(config);
}

// ---------------------------------------------------------------------------
// Section transcription

Recording make_recording(std::string_view wav_bytes) {
    Recording r{sha256_hex(wav_bytes), audio::decode_wav(wav_bytes)};
    if (r.pcm.samples.empty()) throw ValidationError("zero-length recording", "audio");
    return r;
}

SectionTranscript transcribe_section(const Recording& recording, const SpeechBackend& backend,
                                     emr::SectionKind section, const TranscribeOptions& options) {
    auto policy = options.segmentation;
    policy.max_s = std::min(policy.max_s, backend.capabilities().max_segment_s);
    const auto segments = segment_audio(recording.pcm, policy);
    const auto n = static_cast<std::ptrdiff_t>(segments.size());

    struct Outcome {
        std::optional<SpeechResponse> response;
        std::string error;
        bool retryable = false;
    };
    std::vector<Outcome> outcomes(segments.size());

    auto run_one = [&](std::ptrdiff_t i) {
        SpeechRequest req{recording.id, &segments[static_cast<std::size_t>(i)], options.language_hint};
        auto& out = outcomes[static_cast<std::size_t>(i)];
        try {
            out.response = backend.transcribe(req);
        } catch (const BackendError& e) {
            out.error = e.what();
            out.retryable = e.retryable();
        } catch (const std::exception& e) {
            out.error = e.what();
            out.retryable = true;
        }
    };

    if (options.parallel && n > 1) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i) run_one(i);
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            run_one(i);
            if (!outcomes[static_cast<std::size_t>(i)].response) break;
        }
    }

    SectionTranscript t;
    t.section = section;
    t.backend_id = backend.capabilities().id;
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& o = outcomes[i];
        if (!o.response) {
            throw TranscriptionError("segment at offset " + std::to_string(segments[i].offset_s) +
                                         "s failed: " + o.error,
                                     o.retryable, segments[i].offset_s, t.segments);
        }
        t.segments.push_back({segments[i].index, segments[i].offset_s, segments[i].duration_s, o.response->text});
        texts.push_back(o.response->text);
    }
    t.raw_text = text::join(texts, " ");
    t.collapsed_text = collapse_repetitions(t.raw_text);
    return t;
}

// ---------------------------------------------------------------------------
// Repetition collapse

std::string collapse_repetitions(std::string_view input, std::size_t max_ngram, std::size_t min_repeats) {
    if (max_ngram < 1) throw ValidationError("max_ngram must be >= 1", "max_ngram");
    if (min_repeats < 2) throw ValidationError("min_repeats must be >= 2", "min_repeats");

    auto tokens = text::split_whitespace(input);
    bool changed = false;
    bool again = true;
    while (again) {
        again = false;
        const std::size_t size = tokens.size();
        for (std::size_t n = std::min(max_ngram, size / min_repeats); n >= 1 && !again; --n) {
            for (std::size_t i = 0; i + n * min_repeats <= size; ++i) {
                std::size_t copies = 1;
                while (i + (copies + 1) * n <= size &&
                       std::equal(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                  tokens.begin() + static_cast<std::ptrdiff_t>(i + n),
                                  tokens.begin() + static_cast<std::ptrdiff_t>(i + copies * n)))
                    ++copies;
                if (copies >= min_repeats) {
                    tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(i + n),
                                 tokens.begin() + static_cast<std::ptrdiff_t>(i + copies * n));
                    changed = again = true;
                    break;
                }
            }
        }
    }
    return changed ? text::join(tokens, " ") : std::string(input);
}

Json transcript_to_json(const SectionTranscript& t) {
    Json segs = Json::array();
    for (const auto& s : t.segments)
        segs.push_back({{"index", s.index}, {"offset_s", s.offset_s}, {"duration_s", s.duration_s}, {"text", s.text}});
    return {{"section", emr::to_string(t.section)},
            {"backend_id", t.backend_id},
            {"raw_text", t.raw_text},
            {"collapsed_text", t.collapsed_text},
            {"segments", std::move(segs)}};
}

SectionTranscript transcript_from_json(const Json& j) {
    try {
        SectionTranscript t;
        auto sec = emr::section_from_string(j.at("section").get<std::string>());
        if (!sec) throw ParseError("unknown section", "section");
        t.section = *sec;
        t.backend_id = j.value("backend_id", std::string());
        t.raw_text = j.at("raw_text").get<std::string>();
        t.collapsed_text = j.value("collapsed_text", collapse_repetitions(t.raw_text));
        for (const auto& s : j.value("segments", Json::array()))
            t.segments.push_back({s.at("index").get<std::size_t>(), s.at("offset_s").get<double>(),
                                  s.at("duration_s").get<double>(), s.at("text").get<std::string>()});
        return t;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("transcript: ") + e.what(), "transcript");
    }
}

} // namespace vemr::transcript
