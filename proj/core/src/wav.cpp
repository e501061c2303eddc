#include "flowtse/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace flowtse {

namespace {

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 24) & 0xff);
}

void put_u16(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  if (data.size() < 44 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const char* id = reinterpret_cast<const char*>(data.data() + pos);
    const uint32_t len = read_u32(data.data() + pos + 4);
    if (std::memcmp(id, "fmt ", 4) == 0 && len >= 16) {
      format = read_u16(data.data() + pos + 8);
      channels = read_u16(data.data() + pos + 10);
      rate = read_u32(data.data() + pos + 12);
      bits = read_u16(data.data() + pos + 22);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<size_t>(len, data.size() - data_off);
    }
    pos += 8 + len + (len & 1);
  }
  if (data_off == 0) throw std::runtime_error("read_wav: no data chunk in " + path);
  if (channels == 0 || rate == 0) throw std::runtime_error("read_wav: bad fmt chunk in " + path);

  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw std::runtime_error("read_wav: only PCM16 and float32 supported: " + path);

  const size_t bytes_per_sample = bits / 8;
  const size_t n_frames = data_len / (bytes_per_sample * channels);
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n_frames);
  const uint8_t* p = data.data() + data_off;
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const uint8_t* sp = p + (i * channels + c) * bytes_per_sample;
      if (pcm16) {
        int16_t s;
        std::memcpy(&s, sp, 2);
        acc += s / 32768.0;
      } else {
        float s;
        std::memcpy(&s, sp, 4);
        acc += s;
      }
    }
    w.samples[i] = acc / channels;
  }
  return w;
}

Waveform load_audio(const std::string& path, int target_rate) {
  return resample_linear(read_wav(path), target_rate);
}

void write_wav(const std::string& path, const Waveform& w, WavEncoding enc) {
  const bool f32 = (enc == WavEncoding::kFloat32);
  const uint16_t bits = f32 ? 32 : 16;
  const uint32_t byte_rate = w.sample_rate * bits / 8;
  const uint32_t data_len = static_cast<uint32_t>(w.samples.size() * bits / 8);

  std::vector<uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, f32 ? 3 : 1);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(w.sample_rate));
  put_u32(out, byte_rate);
  put_u16(out, static_cast<uint16_t>(bits / 8));
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (double s : w.samples) {
    if (f32) {
      float v = static_cast<float>(s);
      uint8_t b[4];
      std::memcpy(b, &v, 4);
      out.insert(out.end(), b, b + 4);
    } else {
      double clamped = std::max(-1.0, std::min(1.0, s));
      int16_t v = static_cast<int16_t>(std::lrint(clamped * 32767.0));
      put_u16(out, static_cast<uint16_t>(v));
    }
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_wav: cannot open " + path);
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("write_wav: write failed: " + path);
}

}  // namespace flowtse
