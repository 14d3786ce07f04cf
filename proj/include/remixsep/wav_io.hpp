#pragma once

#include <string>

#include "remixsep/signals.hpp"

namespace remixsep {

// Mono WAV only. Reads 16-bit PCM (scaled to [-1, 1)) or 32-bit IEEE float;
// writes 32-bit float.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace remixsep
