#include "flowtse/melfile.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace flowtse {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'F', 'T', 'S', 'E', 'M', 'E', 'L', '1'};
}

void write_mel_file(const std::string& path, const MelSpectrogram& mel,
                    const FeatureConfig& feat) {
  json header = {{"rows", mel.frames.rows()},
                 {"cols", mel.frames.cols()},
                 {"features",
                  {{"sample_rate", feat.sample_rate},
                   {"n_fft", feat.n_fft},
                   {"hop", feat.hop},
                   {"n_mels", feat.n_mels},
                   {"log_floor", feat.log_floor}}},
                 {"feature_hash", feat.hash()}};
  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_mel_file: cannot open " + path);
  out.write(kMagic, 8);
  const uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  out.write(reinterpret_cast<const char*>(mel.frames.data()),
            static_cast<std::streamsize>(mel.frames.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write_mel_file: write failed: " + path);
}

MelSpectrogram read_mel_file(const std::string& path, const FeatureConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_mel_file: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("read_mel_file: bad magic in " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(hs);
  if (header.at("feature_hash").get<uint64_t>() != expected.hash())
    throw std::runtime_error("read_mel_file: feature config mismatch in " + path);

  MelSpectrogram mel;
  mel.n_mels = expected.n_mels;
  mel.hop = expected.hop;
  mel.sample_rate = expected.sample_rate;
  mel.frames.resize(header.at("rows").get<Eigen::Index>(),
                    header.at("cols").get<Eigen::Index>());
  in.read(reinterpret_cast<char*>(mel.frames.data()),
          static_cast<std::streamsize>(mel.frames.size() * sizeof(double)));
  if (!in) throw std::runtime_error("read_mel_file: truncated data in " + path);
  return mel;
}

}  // namespace flowtse
