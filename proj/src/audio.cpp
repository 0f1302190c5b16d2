#include "vemr/audio.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "vemr/error.hpp"

namespace vemr::audio {

namespace {

std::uint32_t read_u32(std::string_view b, std::size_t at) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}

std::uint16_t read_u16(std::string_view b, std::size_t at) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                      static_cast<unsigned char>(b[at + 1]) << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

} // namespace

PcmAudio decode_wav(std::string_view b) {
    if (b.size() < 12 || b.substr(0, 4) != "RIFF" || b.substr(8, 4) != "WAVE")
        throw ValidationError("undecodable audio: not a RIFF/WAVE container", "audio");
    PcmAudio out;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= b.size()) {
        auto id = b.substr(pos, 4);
        std::size_t size = read_u32(b, pos + 4);
        std::size_t body = pos + 8;
        if (body + size > b.size()) throw ValidationError("undecodable audio: truncated chunk", "audio");
        if (id == "fmt ") {
            if (size < 16) throw ValidationError("undecodable audio: short fmt chunk", "audio");
            auto format = read_u16(b, body);
            auto channels = read_u16(b, body + 2);
            out.sample_rate = static_cast<int>(read_u32(b, body + 4));
            auto bits = read_u16(b, body + 14);
            if (format != 1 || channels != 1 || bits != 16)
                throw ValidationError("unsupported audio: expected mono 16-bit PCM", "audio");
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw ValidationError("undecodable audio: data before fmt", "audio");
            out.samples.resize(size / 2);
            for (std::size_t i = 0; i < out.samples.size(); ++i)
                out.samples[i] = static_cast<std::int16_t>(read_u16(b, body + 2 * i));
            return out;
        }
        pos = body + size + (size & 1);
    }
    throw ValidationError("undecodable audio: no data chunk", "audio");
}

std::string encode_wav(const PcmAudio& audio) {
    const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVE";
    out += "fmt ";
    put_u32(out, 16);
    put_u16(out, 1);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(audio.sample_rate * 2));
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_bytes);
    for (auto s : audio.samples) put_u16(out, static_cast<std::uint16_t>(s));
    return out;
}

PcmAudio synthesize(const SynthSpec& spec) {
    PcmAudio out;
    out.sample_rate = spec.sample_rate;
    const auto n = static_cast<std::size_t>(std::llround(spec.seconds * spec.sample_rate));
    out.samples.resize(n);
    const double amp = spec.amplitude * 32767.0;
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / spec.sample_rate;
        bool silent = false;
        for (const auto& [from, to] : spec.silences) {
            auto a = static_cast<std::size_t>(std::llround(from * spec.sample_rate));
            auto z = static_cast<std::size_t>(std::llround(to * spec.sample_rate));
            if (i >= a && i < z) {
                silent = true;
                break;
            }
        }
        out.samples[i] = silent ? 0
                                : static_cast<std::int16_t>(std::lround(
                                      amp * std::sin(2.0 * std::numbers::pi * spec.freq_hz * t)));
    }
    return out;
}

} // namespace vemr::audio
