#include "remixsep/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace remixsep {

namespace {
constexpr char kMagic[8] = {'R', 'M', 'S', 'E', 'P', 'C', 'K', '1'};
using json = nlohmann::json;

json model_to_json(const SeparatorConfig& c) {
  return json{{"n_out", c.n_out},
              {"feature", c.feature == FeatureKind::log_magnitude ? "log_magnitude" : "magnitude"},
              {"hidden_width", c.hidden_width},
              {"n_blocks", c.n_blocks},
              {"mask_activation", c.mask_activation == MaskActivation::sigmoid ? "sigmoid" : "relu"},
              {"zero_init_output", c.zero_init_output},
              {"conv_kernel", c.conv_kernel},
              {"fft_size", c.stft.fft_size},
              {"win_size", c.stft.win_size},
              {"hop", c.stft.hop}};
}

SeparatorConfig model_from_json(const json& j) {
  SeparatorConfig c;
  c.n_out = j.at("n_out").get<int>();
  c.feature = j.at("feature").get<std::string>() == "magnitude" ? FeatureKind::magnitude
                                                                : FeatureKind::log_magnitude;
  c.hidden_width = j.at("hidden_width").get<int>();
  c.n_blocks = j.at("n_blocks").get<int>();
  c.mask_activation = j.at("mask_activation").get<std::string>() == "relu"
                          ? MaskActivation::relu
                          : MaskActivation::sigmoid;
  c.zero_init_output = j.at("zero_init_output").get<bool>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.stft.fft_size = j.at("fft_size").get<int>();
  c.stft.win_size = j.at("win_size").get<int>();
  c.stft.hop = j.at("hop").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterVector& params,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  json header{{"config_hash", meta.config_hash},
              {"epoch", meta.epoch},
              {"val_score", meta.val_score},
              {"model", model_to_json(meta.model)},
              {"total", params.index->total}};
  auto idx = json::array();
  for (const auto& e : params.index->entries)
    idx.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}});
  header["index"] = idx;
  const std::string hs = header.dump();
  const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

std::pair<ParameterVector, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  std::string hs(len, '\0');
  in.read(hs.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);
  const json header = json::parse(hs);

  auto idx = std::make_shared<ParamIndex>();
  for (const auto& e : header.at("index")) {
    ParamEntry pe;
    pe.name = e.at("name").get<std::string>();
    pe.rows = e.at("rows").get<std::size_t>();
    pe.cols = e.at("cols").get<std::size_t>();
    pe.offset = idx->total;
    idx->total += pe.size();
    idx->entries.push_back(std::move(pe));
  }
  if (idx->total != header.at("total").get<std::size_t>())
    throw std::runtime_error("checkpoint: index/total mismatch in " + path);

  ParameterVector p;
  p.index = idx;
  p.values.resize(idx->total);
  in.read(reinterpret_cast<char*>(p.values.data()),
          static_cast<std::streamsize>(idx->total * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated payload in " + path);

  CheckpointMeta meta;
  meta.config_hash = header.at("config_hash").get<std::uint64_t>();
  meta.epoch = header.at("epoch").get<int>();
  meta.val_score = header.at("val_score").get<double>();
  meta.model = model_from_json(header.at("model"));
  return {std::move(p), meta};
}

}  // namespace remixsep
