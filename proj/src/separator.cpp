#include "remixsep/separator.hpp"

#include <cmath>
#include <stdexcept>

#include "remixsep/rng.hpp"

namespace remixsep {

namespace {

constexpr double kFeatEps = 1e-8;
constexpr double kLnEps = 1e-5;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// resolved parameter views for one forward/backward pass
struct Weights {
  const double* w_in;
  const double* b_in;
  struct Block {
    const double* w_ff;
    const double* b_ff;
    const double* wa;
    const double* ba;
    const double* wg;
    const double* bg;
    const double* gamma;
    const double* beta;
  };
  std::vector<Block> blocks;
  const double* w_out;
  const double* b_out;
};

Weights resolve(const ParameterVector& p, int n_blocks) {
  Weights w;
  w.w_in = p.at("input_proj.weight");
  w.b_in = p.at("input_proj.bias");
  for (int i = 0; i < n_blocks; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    w.blocks.push_back({p.at(pre + "ff.weight"), p.at(pre + "ff.bias"),
                        p.at(pre + "conv_a.weight"), p.at(pre + "conv_a.bias"),
                        p.at(pre + "conv_g.weight"), p.at(pre + "conv_g.bias"),
                        p.at(pre + "ln.gamma"), p.at(pre + "ln.beta")});
  }
  w.w_out = p.at("mask_head.weight");
  w.b_out = p.at("mask_head.bias");
  return w;
}

struct GradViews {
  double* w_in;
  double* b_in;
  struct Block {
    double* w_ff;
    double* b_ff;
    double* wa;
    double* ba;
    double* wg;
    double* bg;
    double* gamma;
    double* beta;
  };
  std::vector<Block> blocks;
  double* w_out;
  double* b_out;
};

GradViews resolve_grad(double* g, const ParamIndex& idx, int n_blocks) {
  GradViews v;
  v.w_in = g + idx.at("input_proj.weight").offset;
  v.b_in = g + idx.at("input_proj.bias").offset;
  for (int i = 0; i < n_blocks; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    v.blocks.push_back({g + idx.at(pre + "ff.weight").offset, g + idx.at(pre + "ff.bias").offset,
                        g + idx.at(pre + "conv_a.weight").offset,
                        g + idx.at(pre + "conv_a.bias").offset,
                        g + idx.at(pre + "conv_g.weight").offset,
                        g + idx.at(pre + "conv_g.bias").offset,
                        g + idx.at(pre + "ln.gamma").offset, g + idx.at(pre + "ln.beta").offset});
  }
  v.w_out = g + idx.at("mask_head.weight").offset;
  v.b_out = g + idx.at("mask_head.bias").offset;
  return v;
}

// y[f] = W x[f] + b for all frames; W is rows x cols
void linear_forward(const double* W, const double* b, const double* x, double* y,
                    std::size_t frames, std::size_t rows, std::size_t cols) {
  for (std::size_t f = 0; f < frames; ++f) {
    const double* xf = x + f * cols;
    double* yf = y + f * rows;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* wr = W + r * cols;
      double acc = b[r];
      for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * xf[c];
      yf[r] = acc;
    }
  }
}

// depthwise temporal conv, zero padded, kernel k centered at k/2
void dwconv_forward(const double* w, const double* b, const double* x, double* y,
                    std::size_t frames, std::size_t H, int K) {
  const int C = K / 2;
  for (std::size_t f = 0; f < frames; ++f) {
    double* yf = y + f * H;
    for (std::size_t c = 0; c < H; ++c) yf[c] = b[c];
    for (int k = 0; k < K; ++k) {
      const long long src = static_cast<long long>(f) + k - C;
      if (src < 0 || src >= static_cast<long long>(frames)) continue;
      const double* xs = x + static_cast<std::size_t>(src) * H;
      const double* wk = w + static_cast<std::size_t>(k) * H;
      for (std::size_t c = 0; c < H; ++c) yf[c] += wk[c] * xs[c];
    }
  }
}

}  // namespace

void validate(const SeparatorConfig& cfg) {
  if (cfg.n_out < 2) throw std::invalid_argument("separator: n_out must be >= 2");
  if (cfg.n_blocks < 1) throw std::invalid_argument("separator: n_blocks must be >= 1");
  if (cfg.hidden_width < 1) throw std::invalid_argument("separator: hidden_width must be >= 1");
  if (cfg.conv_kernel < 1 || cfg.conv_kernel % 2 == 0)
    throw std::invalid_argument("separator: conv_kernel must be odd");
  validate_stft_params(cfg.stft);
}

std::size_t spectrum_bins(const SeparatorConfig& cfg) {
  return static_cast<std::size_t>(cfg.stft.fft_size) / 2 + 1;
}

const ParamEntry& ParamIndex::at(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw std::invalid_argument("unknown parameter: " + name);
}

bool ParamIndex::same_as(const ParamIndex& other) const {
  if (total != other.total || entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = other.entries[i];
    if (a.name != b.name || a.offset != b.offset || a.rows != b.rows || a.cols != b.cols)
      return false;
  }
  return true;
}

std::shared_ptr<const ParamIndex> build_param_index(const SeparatorConfig& cfg) {
  validate(cfg);
  const std::size_t H = static_cast<std::size_t>(cfg.hidden_width);
  const std::size_t Fb = spectrum_bins(cfg);
  const std::size_t K = static_cast<std::size_t>(cfg.conv_kernel);
  const std::size_t O = static_cast<std::size_t>(cfg.n_out) * Fb;

  auto idx = std::make_shared<ParamIndex>();
  auto add = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    idx->entries.push_back({name, idx->total, rows, cols});
    idx->total += rows * cols;
  };
  add("input_proj.weight", H, Fb);
  add("input_proj.bias", H, 1);
  for (int i = 0; i < cfg.n_blocks; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    add(pre + "ff.weight", H, H);
    add(pre + "ff.bias", H, 1);
    add(pre + "conv_a.weight", K, H);
    add(pre + "conv_a.bias", H, 1);
    add(pre + "conv_g.weight", K, H);
    add(pre + "conv_g.bias", H, 1);
    add(pre + "ln.gamma", H, 1);
    add(pre + "ln.beta", H, 1);
  }
  add("mask_head.weight", O, H);
  add("mask_head.bias", O, 1);
  return idx;
}

SeparatorModel::SeparatorModel(SeparatorConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  bins_ = spectrum_bins(cfg_);
  index_ = build_param_index(cfg_);
}

ParameterVector SeparatorModel::init_params(std::uint64_t seed) const {
  Rng rng = Rng::derive(seed, 0x5e9a7a70);
  ParameterVector p;
  p.index = index_;
  p.values.assign(index_->total, 0.0);
  for (const auto& e : index_->entries) {
    double* dst = p.at(e);
    const bool is_weight = e.name.ends_with("weight");
    if (e.name.ends_with("ln.gamma")) {
      std::fill_n(dst, e.size(), 1.0);
    } else if (is_weight) {
      if (e.name == "mask_head.weight" && cfg_.zero_init_output) continue;  // stays zero
      const double s = std::sqrt(6.0 / static_cast<double>(e.rows + e.cols));
      for (std::size_t i = 0; i < e.size(); ++i) dst[i] = rng.uniform(-s, s);
    }
    // biases and ln.beta stay zero
  }
  return p;
}

SourceStack mixture_consistency(const SourceStack& raw, const WaveBatch& mix) {
  if (raw.batch != mix.batch || raw.length != mix.length)
    throw std::invalid_argument("mixture_consistency: shape mismatch");
  const std::size_t B = raw.batch, N = raw.channels, T = raw.length;
  SourceStack out(B, N, T, raw.sample_rate);
  std::vector<double> resid(T);
  for (std::size_t b = 0; b < B; ++b) {
    const double* x = mix.item(b);
    for (std::size_t t = 0; t < T; ++t) resid[t] = x[t];
    for (std::size_t n = 0; n < N; ++n) {
      const double* r = raw.chan(b, n);
      for (std::size_t t = 0; t < T; ++t) resid[t] -= r[t];
    }
    const double inv_n = 1.0 / static_cast<double>(N);
    for (std::size_t n = 0; n < N; ++n) {
      const double* r = raw.chan(b, n);
      double* o = out.chan(b, n);
      for (std::size_t t = 0; t < T; ++t) o[t] = r[t] + resid[t] * inv_n;
    }
  }
  return out;
}

SourceStack SeparatorModel::separate(const ParameterVector& params, const WaveBatch& batch,
                                     SeparatorTape* tape, ExecPolicy policy) const {
  if (!params.index || !params.index->same_as(*index_))
    throw std::invalid_argument("separate: parameter index mismatch");
  if (batch.length < static_cast<std::size_t>(cfg_.stft.win_size))
    throw std::invalid_argument("separate: batch shorter than the analysis window");

  const std::size_t B = batch.batch, T = batch.length;
  const std::size_t N = static_cast<std::size_t>(cfg_.n_out);
  const std::size_t H = static_cast<std::size_t>(cfg_.hidden_width);
  const std::size_t Fb = bins_;
  const Weights w = resolve(params, cfg_.n_blocks);

  SourceStack raw(B, N, T, batch.sample_rate);
  if (tape) tape->items.assign(B, ItemTape{});

  parallel_for(B, policy, [&](std::size_t b) {
    Waveform item{std::vector<double>(batch.item(b), batch.item(b) + T), batch.sample_rate};
    Spectrogram X = stft(item, cfg_.stft);
    const std::size_t Fr = X.frames;

    std::vector<double> feat(Fr * Fb);
    for (std::size_t f = 0; f < Fr; ++f)
      for (std::size_t k = 0; k < Fb; ++k) {
        const double mag = std::abs(X.data[f * Fb + k]);
        feat[f * Fb + k] = cfg_.feature == FeatureKind::log_magnitude ? std::log(mag + kFeatEps) : mag;
      }

    std::vector<double> h(Fr * H);
    linear_forward(w.w_in, w.b_in, feat.data(), h.data(), Fr, H, Fb);

    ItemTape* it = tape ? &tape->items[b] : nullptr;
    if (it) {
      it->feat = feat;
      it->h_in = h;
      it->blocks.resize(cfg_.n_blocks);
    }

    std::vector<double> z1(Fr * H), u(Fr * H), a(Fr * H), g(Fr * H), s(Fr * H);
    for (int blk = 0; blk < cfg_.n_blocks; ++blk) {
      const auto& bw = w.blocks[blk];
      linear_forward(bw.w_ff, bw.b_ff, h.data(), z1.data(), Fr, H, H);
      for (std::size_t i = 0; i < Fr * H; ++i) u[i] = z1[i] > 0.0 ? z1[i] : 0.0;
      dwconv_forward(bw.wa, bw.ba, u.data(), a.data(), Fr, H, cfg_.conv_kernel);
      dwconv_forward(bw.wg, bw.bg, u.data(), g.data(), Fr, H, cfg_.conv_kernel);
      for (std::size_t i = 0; i < Fr * H; ++i) s[i] = h[i] + a[i] * sigmoid(g[i]);

      ItemTape::BlockTape* bt = it ? &it->blocks[blk] : nullptr;
      if (bt) {
        bt->z1 = z1;
        bt->u = u;
        bt->a = a;
        bt->g = g;
        bt->s = s;
        bt->mean.resize(Fr);
        bt->inv_std.resize(Fr);
      }
      for (std::size_t f = 0; f < Fr; ++f) {
        const double* sf = s.data() + f * H;
        double mean = 0.0;
        for (std::size_t c = 0; c < H; ++c) mean += sf[c];
        mean /= static_cast<double>(H);
        double var = 0.0;
        for (std::size_t c = 0; c < H; ++c) {
          const double d = sf[c] - mean;
          var += d * d;
        }
        var /= static_cast<double>(H);
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        double* hf = h.data() + f * H;
        for (std::size_t c = 0; c < H; ++c)
          hf[c] = bw.gamma[c] * ((sf[c] - mean) * inv) + bw.beta[c];
        if (bt) {
          bt->mean[f] = mean;
          bt->inv_std[f] = inv;
        }
      }
      if (bt) bt->h_out = h;
    }

    const std::size_t O = N * Fb;
    std::vector<double> logits(Fr * O);
    linear_forward(w.w_out, w.b_out, h.data(), logits.data(), Fr, O, H);

    std::vector<double> mask(N * Fr * Fb);
    for (std::size_t f = 0; f < Fr; ++f)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < Fb; ++k) {
          const double l = logits[f * O + n * Fb + k];
          mask[(n * Fr + f) * Fb + k] =
              cfg_.mask_activation == MaskActivation::sigmoid ? sigmoid(l) : (l > 0.0 ? l : 0.0);
        }
    if (it) {
      it->spec = X;
      it->logits = logits;
      it->mask = mask;
    }

    Spectrogram Sn;
    Sn.frames = Fr;
    Sn.bins = Fb;
    Sn.params = cfg_.stft;
    Sn.data.resize(Fr * Fb);
    for (std::size_t n = 0; n < N; ++n) {
      const double* m = mask.data() + n * Fr * Fb;
      for (std::size_t i = 0; i < Fr * Fb; ++i) Sn.data[i] = X.data[i] * m[i];
      Waveform wn = istft(Sn, T, batch.sample_rate);
      std::copy_n(wn.samples.data(), T, raw.chan(b, n));
    }
  });

  SourceStack out = mixture_consistency(raw, batch);
  for (double v : out.data)
    if (!std::isfinite(v))
      throw std::runtime_error("separator: non-finite activations (training divergence)");
  return out;
}

void SeparatorModel::backward(const ParameterVector& params, const WaveBatch& batch,
                              const SeparatorTape& tape, const SourceStack& grad_out,
                              std::vector<double>& grad, ExecPolicy policy) const {
  const std::size_t B = batch.batch, T = batch.length;
  const std::size_t N = static_cast<std::size_t>(cfg_.n_out);
  const std::size_t H = static_cast<std::size_t>(cfg_.hidden_width);
  const std::size_t Fb = bins_;
  const int K = cfg_.conv_kernel;
  const int C = K / 2;
  if (tape.items.size() != B) throw std::invalid_argument("backward: tape/batch mismatch");
  if (grad.size() != index_->total) grad.assign(index_->total, 0.0);
  const Weights w = resolve(params, cfg_.n_blocks);

  // per-item gradients, reduced in item order afterwards
  std::vector<std::vector<double>> item_grad(B);

  parallel_for(B, policy, [&](std::size_t b) {
    item_grad[b].assign(index_->total, 0.0);
    GradViews gv = resolve_grad(item_grad[b].data(), *index_, cfg_.n_blocks);
    const ItemTape& it = tape.items[b];
    const std::size_t Fr = it.spec.frames;
    const std::size_t O = N * Fb;

    // mixture consistency: graw_n = gout_n - mean_m gout_m
    std::vector<double> gmean(T, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      const double* g = grad_out.chan(b, n);
      for (std::size_t t = 0; t < T; ++t) gmean[t] += g[t];
    }
    const double inv_n = 1.0 / static_cast<double>(N);
    for (std::size_t t = 0; t < T; ++t) gmean[t] *= inv_n;

    // through istft into mask gradients
    std::vector<double> gmask(N * Fr * Fb);
    std::vector<double> graw(T);
    for (std::size_t n = 0; n < N; ++n) {
      const double* g = grad_out.chan(b, n);
      for (std::size_t t = 0; t < T; ++t) graw[t] = g[t] - gmean[t];
      Spectrogram GS = istft_adjoint(graw.data(), T, Fr, cfg_.stft);
      double* gm = gmask.data() + n * Fr * Fb;
      for (std::size_t i = 0; i < Fr * Fb; ++i) {
        const auto& X = it.spec.data[i];
        const auto& G = GS.data[i];
        gm[i] = X.real() * G.real() + X.imag() * G.imag();
      }
    }

    // mask activation
    std::vector<double> glogits(Fr * O);
    for (std::size_t f = 0; f < Fr; ++f)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < Fb; ++k) {
          const double gm = gmask[(n * Fr + f) * Fb + k];
          const std::size_t li = f * O + n * Fb + k;
          if (cfg_.mask_activation == MaskActivation::sigmoid) {
            const double m = it.mask[(n * Fr + f) * Fb + k];
            glogits[li] = gm * m * (1.0 - m);
          } else {
            glogits[li] = it.logits[li] > 0.0 ? gm : 0.0;
          }
        }

    // mask head
    const std::vector<double>& h_last =
        cfg_.n_blocks > 0 ? it.blocks.back().h_out : it.h_in;
    std::vector<double> gh(Fr * H, 0.0);
    for (std::size_t f = 0; f < Fr; ++f) {
      const double* gl = glogits.data() + f * O;
      const double* hf = h_last.data() + f * H;
      double* ghf = gh.data() + f * H;
      for (std::size_t r = 0; r < O; ++r) {
        const double g = gl[r];
        if (g == 0.0) continue;
        double* wrow = gv.w_out + r * H;
        const double* wsrc = w.w_out + r * H;
        gv.b_out[r] += g;
        for (std::size_t c = 0; c < H; ++c) {
          wrow[c] += g * hf[c];
          ghf[c] += g * wsrc[c];
        }
      }
    }

    // blocks in reverse
    std::vector<double> gs(Fr * H), gu(Fr * H), ga(Fr * H), gg(Fr * H), gz1(Fr * H);
    for (int blk = cfg_.n_blocks - 1; blk >= 0; --blk) {
      const auto& bw = w.blocks[blk];
      auto& bg = gv.blocks[blk];
      const auto& bt = it.blocks[blk];
      const std::vector<double>& h_prev = blk > 0 ? it.blocks[blk - 1].h_out : it.h_in;

      // layer norm backward
      for (std::size_t f = 0; f < Fr; ++f) {
        const double* ghf = gh.data() + f * H;
        const double* sf = bt.s.data() + f * H;
        const double mean = bt.mean[f];
        const double inv = bt.inv_std[f];
        double dot_gx = 0.0, sum_g = 0.0;
        for (std::size_t c = 0; c < H; ++c) {
          const double xhat = (sf[c] - mean) * inv;
          const double gxh = ghf[c] * bw.gamma[c];
          bg.gamma[c] += ghf[c] * xhat;
          bg.beta[c] += ghf[c];
          sum_g += gxh;
          dot_gx += gxh * xhat;
        }
        const double inv_h = 1.0 / static_cast<double>(H);
        double* gsf = gs.data() + f * H;
        for (std::size_t c = 0; c < H; ++c) {
          const double xhat = (sf[c] - mean) * inv;
          const double gxh = ghf[c] * bw.gamma[c];
          gsf[c] = inv * (gxh - sum_g * inv_h - xhat * dot_gx * inv_h);
        }
      }

      // gated conv backward: v = a * sigmoid(g)
      for (std::size_t i = 0; i < Fr * H; ++i) {
        const double sg = sigmoid(bt.g[i]);
        ga[i] = gs[i] * sg;
        gg[i] = gs[i] * bt.a[i] * sg * (1.0 - sg);
      }
      std::fill(gu.begin(), gu.end(), 0.0);
      for (std::size_t f = 0; f < Fr; ++f) {
        const double* gaf = ga.data() + f * H;
        const double* ggf = gg.data() + f * H;
        for (int k = 0; k < K; ++k) {
          const long long src = static_cast<long long>(f) + k - C;
          if (src < 0 || src >= static_cast<long long>(Fr)) continue;
          const double* uf = bt.u.data() + static_cast<std::size_t>(src) * H;
          double* guf = gu.data() + static_cast<std::size_t>(src) * H;
          const double* wak = bw.wa + static_cast<std::size_t>(k) * H;
          const double* wgk = bw.wg + static_cast<std::size_t>(k) * H;
          double* gwak = bg.wa + static_cast<std::size_t>(k) * H;
          double* gwgk = bg.wg + static_cast<std::size_t>(k) * H;
          for (std::size_t c = 0; c < H; ++c) {
            gwak[c] += gaf[c] * uf[c];
            gwgk[c] += ggf[c] * uf[c];
            guf[c] += gaf[c] * wak[c] + ggf[c] * wgk[c];
          }
        }
        for (std::size_t c = 0; c < H; ++c) {
          bg.ba[c] += gaf[c];
          bg.bg[c] += ggf[c];
        }
      }

      // relu + feed-forward backward; residual adds gs to the block input
      for (std::size_t i = 0; i < Fr * H; ++i) gz1[i] = bt.z1[i] > 0.0 ? gu[i] : 0.0;
      std::vector<double> gh_prev(Fr * H, 0.0);
      for (std::size_t f = 0; f < Fr; ++f) {
        const double* gzf = gz1.data() + f * H;
        const double* hp = h_prev.data() + f * H;
        double* ghp = gh_prev.data() + f * H;
        for (std::size_t r = 0; r < H; ++r) {
          const double g = gzf[r];
          bg.b_ff[r] += g;
          if (g == 0.0) continue;
          double* wrow = bg.w_ff + r * H;
          const double* wsrc = bw.w_ff + r * H;
          for (std::size_t c = 0; c < H; ++c) {
            wrow[c] += g * hp[c];
            ghp[c] += g * wsrc[c];
          }
        }
      }
      for (std::size_t i = 0; i < Fr * H; ++i) gh[i] = gh_prev[i] + gs[i];
    }

    // input projection
    for (std::size_t f = 0; f < Fr; ++f) {
      const double* ghf = gh.data() + f * H;
      const double* ff = it.feat.data() + f * Fb;
      for (std::size_t r = 0; r < H; ++r) {
        const double g = ghf[r];
        gv.b_in[r] += g;
        if (g == 0.0) continue;
        double* wrow = gv.w_in + r * Fb;
        for (std::size_t c = 0; c < Fb; ++c) wrow[c] += g * ff[c];
      }
    }
  });

  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += item_grad[b][i];
}

std::uint64_t config_hash(const SeparatorConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  mix(static_cast<std::uint64_t>(cfg.n_out));
  mix(static_cast<std::uint64_t>(cfg.feature == FeatureKind::log_magnitude ? 1 : 2));
  mix(static_cast<std::uint64_t>(cfg.hidden_width));
  mix(static_cast<std::uint64_t>(cfg.n_blocks));
  mix(static_cast<std::uint64_t>(cfg.mask_activation == MaskActivation::sigmoid ? 1 : 2));
  mix(static_cast<std::uint64_t>(cfg.zero_init_output ? 1 : 0));
  mix(static_cast<std::uint64_t>(cfg.conv_kernel));
  mix(static_cast<std::uint64_t>(cfg.stft.fft_size));
  mix(static_cast<std::uint64_t>(cfg.stft.win_size));
  mix(static_cast<std::uint64_t>(cfg.stft.hop));
  return h;
}

}  // namespace remixsep
