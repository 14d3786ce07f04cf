#include "remixsep/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "remixsep/rng.hpp"

namespace remixsep {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

std::string tristate_str(const std::optional<bool>& v) {
  if (!v.has_value()) return "auto";
  return *v ? "true" : "false";
}

std::optional<bool> parse_tristate(const std::string& v, const std::string& key) {
  if (v == "auto") return std::nullopt;
  return parse_bool(v, key);
}

}  // namespace

CorpusSpec DataConfig::split_spec(const std::string& split) const {
  CorpusSpec spec;
  spec.duration_s = duration_s;
  spec.sample_rate = sample_rate;
  spec.k_min = k_min;
  spec.k_max = k_max;
  spec.snr_lo_db = snr_lo_db;
  spec.snr_hi_db = snr_hi_db;
  if (split == "train") {
    spec.num_examples = num_train;
    spec.seed = seed;
  } else if (split == "valid") {
    spec.num_examples = num_val;
    spec.seed = splitmix64(seed ^ 0x56414cULL);
  } else if (split == "test") {
    spec.num_examples = num_test;
    spec.seed = splitmix64(seed ^ 0x544553ULL);
  } else {
    throw std::invalid_argument("unknown split: " + split);
  }
  return spec;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, std::function<void(const std::string&)>> setters;

  auto set_int = [](int& dst) {
    return [&dst](const std::string& v) { dst = std::stoi(v); };
  };
  auto set_double = [](double& dst) {
    return [&dst](const std::string& v) { dst = std::stod(v); };
  };
  auto set_u64 = [](std::uint64_t& dst) {
    return [&dst](const std::string& v) { dst = std::stoull(v); };
  };

  setters["data.num_train"] = set_int(cfg.data.num_train);
  setters["data.num_val"] = set_int(cfg.data.num_val);
  setters["data.num_test"] = set_int(cfg.data.num_test);
  setters["data.duration_s"] = set_double(cfg.data.duration_s);
  setters["data.sample_rate"] = set_int(cfg.data.sample_rate);
  setters["data.k_min"] = set_int(cfg.data.k_min);
  setters["data.k_max"] = set_int(cfg.data.k_max);
  setters["data.snr_lo_db"] = set_double(cfg.data.snr_lo_db);
  setters["data.snr_hi_db"] = set_double(cfg.data.snr_hi_db);
  setters["data.seed"] = set_u64(cfg.data.seed);

  setters["model.n_out"] = set_int(cfg.model.n_out);
  setters["model.feature"] = [&](const std::string& v) {
    if (v == "log_magnitude") cfg.model.feature = FeatureKind::log_magnitude;
    else if (v == "magnitude") cfg.model.feature = FeatureKind::magnitude;
    else throw std::invalid_argument("config: bad model.feature: " + v);
  };
  setters["model.hidden_width"] = set_int(cfg.model.hidden_width);
  setters["model.n_blocks"] = set_int(cfg.model.n_blocks);
  setters["model.mask_activation"] = [&](const std::string& v) {
    if (v == "sigmoid") cfg.model.mask_activation = MaskActivation::sigmoid;
    else if (v == "relu") cfg.model.mask_activation = MaskActivation::relu;
    else throw std::invalid_argument("config: bad model.mask_activation: " + v);
  };
  setters["model.zero_init_output"] = [&](const std::string& v) {
    cfg.model.zero_init_output = parse_bool(v, "model.zero_init_output");
  };
  setters["model.conv_kernel"] = set_int(cfg.model.conv_kernel);
  setters["model.fft_size"] = set_int(cfg.model.stft.fft_size);
  setters["model.win_size"] = set_int(cfg.model.stft.win_size);
  setters["model.hop"] = set_int(cfg.model.stft.hop);

  setters["train.method"] = [&](const std::string& v) {
    cfg.train.method = train_method_from_string(v);
  };
  setters["train.alpha"] = set_double(cfg.train.alpha);
  setters["train.epochs"] = set_int(cfg.train.epochs);
  setters["train.batch_size"] = set_int(cfg.train.batch_size);
  setters["train.lr_peak"] = set_double(cfg.train.lr_peak);
  setters["train.lr_floor"] = set_double(cfg.train.lr_floor);
  setters["train.warmup_steps"] = set_int(cfg.train.warmup_steps);
  setters["train.constant_epochs"] = set_int(cfg.train.constant_epochs);
  setters["train.decay_factor"] = set_double(cfg.train.decay_factor);
  setters["train.decay_every_epochs"] = set_int(cfg.train.decay_every_epochs);
  setters["train.grad_clip_norm"] = set_double(cfg.train.grad_clip_norm);
  setters["train.weight_decay"] = set_double(cfg.train.weight_decay);
  setters["train.seed"] = set_u64(cfg.train.seed);
  setters["train.use_channel_shuffle"] = [&](const std::string& v) {
    cfg.train.use_channel_shuffle = parse_tristate(v, "train.use_channel_shuffle");
  };
  setters["train.avoid_same_mixture"] = [&](const std::string& v) {
    cfg.train.avoid_same_mixture = parse_tristate(v, "train.avoid_same_mixture");
  };
  setters["train.mixit_b_prime"] = set_int(cfg.train.mixit_b_prime);
  setters["train.sparsity_finetune_frac"] = set_double(cfg.train.sparsity_finetune_frac);
  setters["train.finetune_from"] = [&](const std::string& v) { cfg.train.finetune_from = v; };
  setters["train.log_plans"] = [&](const std::string& v) {
    cfg.train.log_plans = parse_bool(v, "train.log_plans");
  };
  setters["train.checkpoint_ring"] = set_int(cfg.train.checkpoint_ring);
  setters["train.write_epoch_checkpoints"] = [&](const std::string& v) {
    cfg.train.write_epoch_checkpoints = parse_bool(v, "train.write_epoch_checkpoints");
  };
  setters["train.tau"] = set_double(cfg.train.loss.tau);
  setters["train.sparsity_weight"] = set_double(cfg.train.loss.sparsity_weight);
  setters["train.zero_ref_mode"] = [&](const std::string& v) {
    if (v == "skip") cfg.train.loss.zero_ref_mode = ZeroRefMode::skip;
    else if (v == "soft_threshold") cfg.train.loss.zero_ref_mode = ZeroRefMode::soft_threshold;
    else throw std::invalid_argument("config: bad train.zero_ref_mode: " + v);
  };

  setters["eval.batch_size"] = set_int(cfg.eval.batch_size);
  setters["output_dir"] = [&](const std::string& v) { cfg.output_dir = v; };

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw std::invalid_argument("config: unknown key at line " + std::to_string(lineno) + ": " + key);
    try {
      it->second(value);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad value for " + key + ": " + value);
    }
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream o;
  o << "data.num_train = " << cfg.data.num_train << "\n";
  o << "data.num_val = " << cfg.data.num_val << "\n";
  o << "data.num_test = " << cfg.data.num_test << "\n";
  o << "data.duration_s = " << fmt_double(cfg.data.duration_s) << "\n";
  o << "data.sample_rate = " << cfg.data.sample_rate << "\n";
  o << "data.k_min = " << cfg.data.k_min << "\n";
  o << "data.k_max = " << cfg.data.k_max << "\n";
  o << "data.snr_lo_db = " << fmt_double(cfg.data.snr_lo_db) << "\n";
  o << "data.snr_hi_db = " << fmt_double(cfg.data.snr_hi_db) << "\n";
  o << "data.seed = " << cfg.data.seed << "\n";
  o << "model.n_out = " << cfg.model.n_out << "\n";
  o << "model.feature = "
    << (cfg.model.feature == FeatureKind::log_magnitude ? "log_magnitude" : "magnitude") << "\n";
  o << "model.hidden_width = " << cfg.model.hidden_width << "\n";
  o << "model.n_blocks = " << cfg.model.n_blocks << "\n";
  o << "model.mask_activation = "
    << (cfg.model.mask_activation == MaskActivation::sigmoid ? "sigmoid" : "relu") << "\n";
  o << "model.zero_init_output = " << (cfg.model.zero_init_output ? "true" : "false") << "\n";
  o << "model.conv_kernel = " << cfg.model.conv_kernel << "\n";
  o << "model.fft_size = " << cfg.model.stft.fft_size << "\n";
  o << "model.win_size = " << cfg.model.stft.win_size << "\n";
  o << "model.hop = " << cfg.model.stft.hop << "\n";
  o << "train.method = " << to_string(cfg.train.method) << "\n";
  o << "train.alpha = " << fmt_double(cfg.train.alpha) << "\n";
  o << "train.epochs = " << cfg.train.epochs << "\n";
  o << "train.batch_size = " << cfg.train.batch_size << "\n";
  o << "train.lr_peak = " << fmt_double(cfg.train.lr_peak) << "\n";
  o << "train.lr_floor = " << fmt_double(cfg.train.lr_floor) << "\n";
  o << "train.warmup_steps = " << cfg.train.warmup_steps << "\n";
  o << "train.constant_epochs = " << cfg.train.constant_epochs << "\n";
  o << "train.decay_factor = " << fmt_double(cfg.train.decay_factor) << "\n";
  o << "train.decay_every_epochs = " << cfg.train.decay_every_epochs << "\n";
  o << "train.grad_clip_norm = " << fmt_double(cfg.train.grad_clip_norm) << "\n";
  o << "train.weight_decay = " << fmt_double(cfg.train.weight_decay) << "\n";
  o << "train.seed = " << cfg.train.seed << "\n";
  o << "train.use_channel_shuffle = " << tristate_str(cfg.train.use_channel_shuffle) << "\n";
  o << "train.avoid_same_mixture = " << tristate_str(cfg.train.avoid_same_mixture) << "\n";
  o << "train.mixit_b_prime = " << cfg.train.mixit_b_prime << "\n";
  o << "train.sparsity_finetune_frac = " << fmt_double(cfg.train.sparsity_finetune_frac) << "\n";
  o << "train.finetune_from = " << cfg.train.finetune_from << "\n";
  o << "train.log_plans = " << (cfg.train.log_plans ? "true" : "false") << "\n";
  o << "train.checkpoint_ring = " << cfg.train.checkpoint_ring << "\n";
  o << "train.write_epoch_checkpoints = "
    << (cfg.train.write_epoch_checkpoints ? "true" : "false") << "\n";
  o << "train.tau = " << fmt_double(cfg.train.loss.tau) << "\n";
  o << "train.sparsity_weight = " << fmt_double(cfg.train.loss.sparsity_weight) << "\n";
  o << "train.zero_ref_mode = "
    << (cfg.train.loss.zero_ref_mode == ZeroRefMode::skip ? "skip" : "soft_threshold") << "\n";
  o << "eval.batch_size = " << cfg.eval.batch_size << "\n";
  o << "output_dir = " << cfg.output_dir << "\n";
  return o.str();
}

}  // namespace remixsep
