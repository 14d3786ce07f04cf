#include "remixsep/wav_io.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace remixsep {

namespace {

template <typename T>
T read_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf;
  in.read(reinterpret_cast<char*>(buf.data()), sizeof(T));
  if (!in) throw std::runtime_error("wav: truncated file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  std::array<unsigned char, sizeof(T)> buf;
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf.data()), sizeof(T));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw std::runtime_error("wav: not RIFF: " + path);
  read_le<std::uint32_t>(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw std::runtime_error("wav: not WAVE: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  Waveform w;

  while (in.read(tag, 4)) {
    const std::uint32_t chunk_size = read_le<std::uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      sample_rate = read_le<std::uint32_t>(in);
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      bits = read_le<std::uint16_t>(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav: data before fmt: " + path);
      if (channels != 1) throw std::runtime_error("wav: only mono supported: " + path);
      w.sample_rate = static_cast<int>(sample_rate);
      if (format == 1 && bits == 16) {
        const std::size_t n = chunk_size / 2;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          const auto v = static_cast<std::int16_t>(read_le<std::uint16_t>(in));
          w.samples[i] = static_cast<double>(v) / 32768.0;
        }
      } else if (format == 3 && bits == 32) {
        const std::size_t n = chunk_size / 4;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          const std::uint32_t u = read_le<std::uint32_t>(in);
          float f;
          std::memcpy(&f, &u, 4);
          w.samples[i] = static_cast<double>(f);
        }
      } else {
        throw std::runtime_error("wav: unsupported format (need PCM16 or float32): " + path);
      }
      return w;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw std::runtime_error("wav: no data chunk: " + path);
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 4);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 3);  // IEEE float
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * 4);
  write_le<std::uint16_t>(out, 4);
  write_le<std::uint16_t>(out, 32);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double s : w.samples) {
    const float f = static_cast<float>(s);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    write_le<std::uint32_t>(out, u);
  }
  if (!out) throw std::runtime_error("wav: write failed: " + path);
}

}  // namespace remixsep
