#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vemr::audio {

/// Mono 16-bit PCM.
struct PcmAudio {
    int sample_rate = 16000;
    std::vector<std::int16_t> samples;

    double duration_s() const noexcept {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

/// Decodes a RIFF/WAVE container holding mono 16-bit PCM. Throws
/// ValidationError for anything else.
PcmAudio decode_wav(std::string_view bytes);
std::string encode_wav(const PcmAudio& audio);

/// Deterministic test/fixture signal: a sine tone with exact-zero gaps.
struct SynthSpec {
    double seconds = 1.0;
    double freq_hz = 440.0;
    double amplitude = 0.3; // fraction of full scale
    std::vector<std::pair<double, double>> silences; // [from_s, to_s)
    int sample_rate = 16000;
};

PcmAudio synthesize(const SynthSpec& spec);

} // namespace vemr::audio
