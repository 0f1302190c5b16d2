#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vemr/audio.hpp"
#include "vemr/emr.hpp"
#include "vemr/error.hpp"
#include "vemr/json.hpp"

namespace vemr::transcript {

struct AudioSegment {
    std::size_t index = 0;
    double offset_s = 0.0;
    double duration_s = 0.0;
    std::string bytes; // WAV-encoded slice
};

/// Chunking policy. Cut points prefer the longest silence inside the last
/// `lookback_s` of a full window; with no silence the cut is forced at max_s.
struct SegmentationPolicy {
    double max_s = 30.0;
    double lookback_s = 5.0;
    double frame_s = 0.01;
    double silence_rms = 0.01;   // fraction of full scale
    double min_silence_s = 0.05; // shortest run that counts as a pause
};

std::vector<AudioSegment> segment_audio(const audio::PcmAudio& recording,
                                        const SegmentationPolicy& policy = {});

// ---------------------------------------------------------------------------
// Speech backend adapter

struct SpeechCapabilities {
    std::string id;
    std::vector<std::string> languages;
    double max_segment_s = 30.0;
    bool deterministic = false;
};

struct SpeechRequest {
    std::string recording_id; // content digest of the uploaded recording
    const AudioSegment* segment = nullptr;
    std::string language_hint;
};

struct SpeechResponse {
    std::string text;
    std::optional<double> confidence;
};

/// Implementations must tolerate concurrent `transcribe` calls. Transport
/// problems raise BackendError(retryable=true); a segment the backend refuses
/// raises BackendError(retryable=false).
class SpeechBackend {
public:
    virtual ~SpeechBackend() = default;
    virtual const SpeechCapabilities& capabilities() const = 0;
    virtual SpeechResponse transcribe(const SpeechRequest& request) const = 0;
};

/// Scripted backend: recordings are recognized by content digest and answered
/// with fixture text, one string per segment.
class MockSpeechBackend : public SpeechBackend {
public:
    explicit MockSpeechBackend(std::string id = "mock-asr");

    void add_recording(const std::string& recording_digest, std::vector<std::string> segment_texts);

    /// Fixture file: {"backend_id": ..., "fixtures": [{"id", "audio": {"synth": {...}} |
    /// {"file": path}, "segments": [...]}]}. Relative paths resolve against
    /// the fixture file's directory.
    static MockSpeechBackend from_fixture_file(const std::string& path);

    /// WAV bytes of a fixture, for clients that need to upload it.
    const std::string& fixture_audio(const std::string& fixture_id) const;
    std::vector<std::string> fixture_ids() const;

    const SpeechCapabilities& capabilities() const override { return caps_; }
    SpeechResponse transcribe(const SpeechRequest& request) const override;

private:
    SpeechCapabilities caps_;
    std::map<std::string, std::vector<std::string>> by_digest_;
    std::map<std::string, std::string> audio_by_fixture_;
};

/// Remote adapter: POSTs each WAV segment to `endpoint` and expects
/// {"text": ..., "confidence": ...}. Bearer token read from `api_key_env`.
struct HttpSpeechConfig {
    std::string id = "remote-asr";
    std::string endpoint; // e.g. http://host:port/transcribe
    std::string api_key_env = "VEMR_ASR_API_KEY";
    double timeout_s = 30.0;
    std::string language = "ur-Latn";
};

std::unique_ptr<SpeechBackend> make_http_speech_backend(const HttpSpeechConfig& config);

// ---------------------------------------------------------------------------
// Transcripts

struct SegmentText {
    std::size_t index = 0;
    double offset_s = 0.0;
    double duration_s = 0.0;
    std::string text;
    bool operator==(const SegmentText&) const = default;
};

struct SectionTranscript {
    emr::SectionKind section = emr::SectionKind::PersonalMedicalHistory;
    std::string raw_text;
    std::string collapsed_text;
    std::vector<SegmentText> segments;
    std::string backend_id;
    bool operator==(const SectionTranscript&) const = default;
};

Json transcript_to_json(const SectionTranscript& t);
/// Throws ParseError on malformed input.
SectionTranscript transcript_from_json(const Json& j);

/// Raised when a segment fails. `completed` holds the segments, in offset
/// order, that finished before the first failing one.
class TranscriptionError : public BackendError {
public:
    TranscriptionError(const std::string& message, bool retryable, double failed_offset_s,
                       std::vector<SegmentText> completed)
        : BackendError(message, retryable), failed_offset_s_(failed_offset_s),
          completed_(std::move(completed)) {}

    double failed_offset_s() const noexcept { return failed_offset_s_; }
    const std::vector<SegmentText>& completed() const noexcept { return completed_; }

private:
    double failed_offset_s_;
    std::vector<SegmentText> completed_;
};

struct Recording {
    std::string id; // content digest
    audio::PcmAudio pcm;
};

/// Parses WAV bytes into a Recording whose id is the SHA-256 of the bytes.
/// Throws ValidationError for undecodable or zero-length audio.
Recording make_recording(std::string_view wav_bytes);

struct TranscribeOptions {
    SegmentationPolicy segmentation;
    std::string language_hint = "ur-Latn";
    bool parallel = true; // segments dispatched concurrently, assembled in order
};

SectionTranscript transcribe_section(const Recording& recording, const SpeechBackend& backend,
                                     emr::SectionKind section, const TranscribeOptions& options = {});

/// Reduces every maximal run of a consecutively repeated whitespace-token
/// n-gram (n <= max_ngram, at least min_repeats copies) to one copy. Larger
/// n first, leftmost first, repeated to a fixed point. Text without such runs
/// is returned byte-for-byte.
std::string collapse_repetitions(std::string_view text, std::size_t max_ngram = 8,
                                 std::size_t min_repeats = 2);

} // namespace vemr::transcript
