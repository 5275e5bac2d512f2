/**
 * \file network.cpp
 * \brief Forward and reverse-mode passes of the feature network.
 */
#include "hero/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "hero/error.hpp"

namespace hero {

int Architecture::descriptor_dim() const {
  int d = 0;
  for (int c : encoder_channels) d += c;
  return d;
}

std::string Architecture::to_json() const {
  nlohmann::json j;
  j["in_channels"] = in_channels;
  j["encoder_channels"] = encoder_channels;
  j["cell_size"] = cell_size;
  j["temperature"] = temperature;
  j["bn_momentum"] = bn_momentum;
  j["bn_eps"] = bn_eps;
  j["descriptor_dim"] = descriptor_dim();
  return j.dump();
}

Architecture Architecture::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Architecture a;
    a.in_channels = j.at("in_channels").get<int>();
    a.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    a.cell_size = j.at("cell_size").get<int>();
    a.temperature = j.at("temperature").get<double>();
    a.bn_momentum = j.at("bn_momentum").get<double>();
    a.bn_eps = j.at("bn_eps").get<double>();
    if (j.contains("descriptor_dim") && j["descriptor_dim"].get<int>() != a.descriptor_dim())
      throw ParseError("architecture: descriptor_dim inconsistent with encoder_channels");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("architecture descriptor: ") + e.what());
  }
}

namespace {

class SliceAllocator {
 public:
  ParamSlice take(std::size_t n) {
    ParamSlice s{next_, n};
    next_ += n;
    return s;
  }
  std::size_t total() const { return next_; }

 private:
  std::size_t next_ = 0;
};

ConvSpec make_conv(SliceAllocator& alloc, int cin, int cout, int kernel, bool bias) {
  ConvSpec c;
  c.cin = cin;
  c.cout = cout;
  c.kernel = kernel;
  c.weight = alloc.take(static_cast<std::size_t>(cout) * cin * kernel * kernel);
  if (bias) c.bias = alloc.take(static_cast<std::size_t>(cout));
  return c;
}

NormSpec make_norm(SliceAllocator& params, SliceAllocator& buffers, int channels) {
  NormSpec n;
  n.channels = channels;
  n.gamma = params.take(channels);
  n.beta = params.take(channels);
  n.running_mean = buffers.take(channels);
  n.running_var = buffers.take(channels);
  return n;
}

BlockSpec make_block(SliceAllocator& params, SliceAllocator& buffers, int cin, int cout) {
  BlockSpec b;
  b.conv1 = make_conv(params, cin, cout, 3, false);
  b.norm1 = make_norm(params, buffers, cout);
  b.conv2 = make_conv(params, cout, cout, 3, false);
  b.norm2 = make_norm(params, buffers, cout);
  return b;
}

}  // namespace

FeatureModel::FeatureModel(Architecture arch) : arch_(std::move(arch)) {
  const int E = arch_.num_blocks();
  if (E < 1) throw std::invalid_argument("FeatureModel: need at least one encoder block");
  if (!(arch_.temperature > 0.0)) throw std::invalid_argument("FeatureModel: temperature must be > 0");
  const auto& ch = arch_.encoder_channels;
  SliceAllocator params, buffers;
  for (int i = 0; i < E; ++i)
    encoder_.push_back(make_block(params, buffers, i == 0 ? arch_.in_channels : ch[i - 1], ch[i]));
  decoder_.push_back(make_block(params, buffers, ch[E - 1], ch[E - 1]));
  for (int j = 1; j < E; ++j)
    decoder_.push_back(make_block(params, buffers, ch[E - j] + ch[E - 1 - j], ch[E - 1 - j]));
  detector_head_ = make_conv(params, ch[0], 1, 1, true);
  weight_head_ = make_conv(params, ch[0], 3, 1, true);
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.total()));
  buffers_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(buffers.total()));
  auto set_var = [&](const NormSpec& n) {
    buffers_.segment(n.running_var.offset, n.running_var.size).setOnes();
  };
  for (const auto& b : encoder_) set_var(b.norm1), set_var(b.norm2);
  for (const auto& b : decoder_) set_var(b.norm1), set_var(b.norm2);
}

FeatureModel FeatureModel::random(const Architecture& arch, std::uint64_t seed) {
  FeatureModel m(arch);
  std::mt19937_64 rng(seed);
  auto init_conv = [&](const ConvSpec& c, double gain) {
    std::normal_distribution<double> nd(0.0, gain * std::sqrt(2.0 / (c.cin * c.kernel * c.kernel)));
    for (std::size_t i = 0; i < c.weight.size; ++i) m.params_(c.weight.offset + i) = nd(rng);
  };
  auto init_norm = [&](const NormSpec& n) {
    m.params_.segment(n.gamma.offset, n.gamma.size).setOnes();
  };
  for (const auto* blocks : {&m.encoder_, &m.decoder_})
    for (const auto& b : *blocks) {
      init_conv(b.conv1, 1.0);
      init_norm(b.norm1);
      init_conv(b.conv2, 1.0);
      init_norm(b.norm2);
    }
  init_conv(m.detector_head_, 1.0);
  init_conv(m.weight_head_, 0.1);
  return m;
}

DenseMaps DenseMaps::zeros_like(const DenseMaps& o) {
  DenseMaps z;
  z.size = o.size;
  z.detector = Tensor(o.detector.channels(), o.size, o.size);
  z.weight = Tensor(o.weight.channels(), o.size, o.size);
  z.descriptor = Tensor(o.descriptor.channels(), o.size, o.size);
  return z;
}

namespace nn {

namespace {

using WeightMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using GradMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// cols(ci*9 + ky*3 + kx, y*W + x) = in(ci, y+ky-1, x+kx-1), zero outside.
void im2col3(const Tensor& in, Act& cols) {
  const int C = in.channels(), H = in.height, W = in.width;
  cols.resize(C * 9, H * W);
  for (int ci = 0; ci < C; ++ci) {
    const double* src = in.data.row(ci).data();
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = cols.row((ci * 3 + ky) * 3 + kx).data();
        const int dy = ky - 1, dx = kx - 1;
        const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          double* d = dst + y * W;
          if (sy < 0 || sy >= H) {
            std::fill(d, d + W, 0.0);
            continue;
          }
          const double* s = src + sy * W + dx;
          std::fill(d, d + x_lo, 0.0);
          std::copy(s + x_lo, s + x_hi, d + x_lo);
          std::fill(d + x_hi, d + W, 0.0);
        }
      }
  }
}

struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<double> t;
};

// Half-pixel-centre bilinear taps, clamped at the borders.
AxisTaps axis_taps(int in, int out) {
  AxisTaps a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.t.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = std::min(static_cast<int>(s), in - 1);
    a.i0[o] = i0;
    a.i1[o] = std::min(i0 + 1, in - 1);
    a.t[o] = s - i0;
  }
  return a;
}

}  // namespace

Tensor conv_forward(const Tensor& in, const ConvSpec& conv, const Eigen::VectorXd& params) {
  const int K = conv.cin * conv.kernel * conv.kernel;
  const WeightMap Wm(params.data() + conv.weight.offset, conv.cout, K);
  Tensor out(conv.cout, in.height, in.width);
  if (conv.kernel == 1) {
    out.data.noalias() = Wm * in.data;
  } else {
    thread_local Act cols;
    im2col3(in, cols);
    out.data.noalias() = Wm * cols;
  }
  if (conv.bias.size > 0)
    for (int c = 0; c < conv.cout; ++c) out.data.row(c).array() += params(conv.bias.offset + c);
  return out;
}

Tensor conv_backward(const Tensor& in, const Tensor& dout, const ConvSpec& conv,
                     const Eigen::VectorXd& params, Eigen::VectorXd& grad) {
  const int K = conv.cin * conv.kernel * conv.kernel;
  const WeightMap Wm(params.data() + conv.weight.offset, conv.cout, K);
  GradMap dW(grad.data() + conv.weight.offset, conv.cout, K);
  if (conv.bias.size > 0)
    grad.segment(conv.bias.offset, conv.bias.size) += dout.data.rowwise().sum();
  Tensor din(conv.cin, in.height, in.width);
  if (conv.kernel == 1) {
    dW.noalias() += dout.data * in.data.transpose();
    din.data.noalias() = Wm.transpose() * dout.data;
  } else {
    thread_local Act cols;
    im2col3(in, cols);
    dW.noalias() += dout.data * cols.transpose();
    // The input adjoint is a 3x3 correlation of dout with the flipped, transposed kernel.
    Act Wr(conv.cin, conv.cout * 9);
    for (int co = 0; co < conv.cout; ++co)
      for (int ci = 0; ci < conv.cin; ++ci)
        for (int k = 0; k < 9; ++k) Wr(ci, co * 9 + 8 - k) = Wm(co, ci * 9 + k);
    im2col3(dout, cols);
    din.data.noalias() = Wr * cols;
  }
  return din;
}

Tensor maxpool2(const Tensor& in, std::vector<int>* argmax) {
  const int C = in.channels(), H = in.height / 2, W = in.width / 2;
  Tensor out(C, H, W);
  if (argmax) argmax->assign(static_cast<std::size_t>(C) * H * W, 0);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        int best = (2 * y) * in.width + 2 * x;
        double bv = in.data(c, best);
        for (int k = 1; k < 4; ++k) {
          const int idx = (2 * y + k / 2) * in.width + 2 * x + k % 2;
          if (in.data(c, idx) > bv) {
            bv = in.data(c, idx);
            best = idx;
          }
        }
        out.data(c, y * W + x) = bv;
        if (argmax) (*argmax)[(static_cast<std::size_t>(c) * H + y) * W + x] = best;
      }
  return out;
}

Tensor maxpool2_backward(const Tensor& dout, const std::vector<int>& argmax, int h, int w) {
  const int C = dout.channels(), HW = dout.height * dout.width;
  Tensor din(C, h, w);
  for (int c = 0; c < C; ++c)
    for (int p = 0; p < HW; ++p) din.data(c, argmax[static_cast<std::size_t>(c) * HW + p]) += dout.data(c, p);
  return din;
}

Tensor resize_bilinear(const Tensor& in, int h, int w) {
  if (h == in.height && w == in.width) return in;
  const AxisTaps ty = axis_taps(in.height, h), tx = axis_taps(in.width, w);
  Tensor out(in.channels(), h, w);
  for (int c = 0; c < in.channels(); ++c) {
    const double* s = in.data.row(c).data();
    double* d = out.data.row(c).data();
    for (int y = 0; y < h; ++y) {
      const double* r0 = s + ty.i0[y] * in.width;
      const double* r1 = s + ty.i1[y] * in.width;
      const double wy = ty.t[y];
      for (int x = 0; x < w; ++x) {
        const double wx = tx.t[x];
        const double top = (1.0 - wx) * r0[tx.i0[x]] + wx * r0[tx.i1[x]];
        const double bot = (1.0 - wx) * r1[tx.i0[x]] + wx * r1[tx.i1[x]];
        d[y * w + x] = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

Tensor resize_bilinear_backward(const Tensor& dout, int h, int w) {
  if (h == dout.height && w == dout.width) return dout;
  const AxisTaps ty = axis_taps(h, dout.height), tx = axis_taps(w, dout.width);
  Tensor din(dout.channels(), h, w);
  for (int c = 0; c < dout.channels(); ++c) {
    const double* g = dout.data.row(c).data();
    double* d = din.data.row(c).data();
    for (int y = 0; y < dout.height; ++y) {
      double* r0 = d + ty.i0[y] * w;
      double* r1 = d + ty.i1[y] * w;
      const double wy = ty.t[y];
      for (int x = 0; x < dout.width; ++x) {
        const double gv = g[y * dout.width + x];
        const double wx = tx.t[x];
        r0[tx.i0[x]] += (1.0 - wy) * (1.0 - wx) * gv;
        r0[tx.i1[x]] += (1.0 - wy) * wx * gv;
        r1[tx.i0[x]] += wy * (1.0 - wx) * gv;
        r1[tx.i1[x]] += wy * wx * gv;
      }
    }
  }
  return din;
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {

struct NormCache {
  std::vector<Tensor> xhat;
  Eigen::VectorXd inv_std;
  NormMode mode = NormMode::kTrain;
};

struct BlockTape {
  std::vector<Tensor> x, r1, r2;
  NormCache n1, n2;
};

}  // namespace

struct Tape::State {
  int size = 0;
  std::vector<BlockTape> enc, dec;
  std::vector<std::vector<std::vector<int>>> pool_argmax;  // [level][image]
};

Tape::Tape() = default;
Tape::~Tape() = default;
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;
void Tape::clear() { state_.reset(); }
void Tape::reset(std::unique_ptr<State> s) { state_ = std::move(s); }

namespace {

using Batch = std::vector<Tensor>;

Batch batch_norm(const Batch& x, const NormSpec& spec, const Eigen::VectorXd& params,
                 Eigen::VectorXd* running, const Architecture& arch, NormMode mode, NormCache* cache) {
  const int C = spec.channels;
  Eigen::VectorXd mean(C), var(C);
  if (mode == NormMode::kTrain) {
    double count = 0.0;
    mean.setZero();
    var.setZero();
    for (const auto& t : x) {
      mean += t.data.rowwise().sum();
      count += t.data.cols();
    }
    mean /= count;
    for (const auto& t : x) var += (t.data.colwise() - mean).array().square().matrix().rowwise().sum();
    var /= count;
    if (running) {
      const double m = arch.bn_momentum;
      const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
      running->segment(spec.running_mean.offset, C) =
          (1.0 - m) * running->segment(spec.running_mean.offset, C) + m * mean;
      running->segment(spec.running_var.offset, C) =
          (1.0 - m) * running->segment(spec.running_var.offset, C) + m * unbias * var;
    }
  } else {
    mean = running->segment(spec.running_mean.offset, C);
    var = running->segment(spec.running_var.offset, C);
  }
  const Eigen::VectorXd inv_std = (var.array() + arch.bn_eps).rsqrt();
  const auto gamma = params.segment(spec.gamma.offset, C);
  const auto beta = params.segment(spec.beta.offset, C);
  Batch y;
  y.reserve(x.size());
  if (cache) {
    cache->xhat.clear();
    cache->inv_std = inv_std;
    cache->mode = mode;
  }
  for (const auto& t : x) {
    Tensor xh(C, t.height, t.width);
    xh.data = (t.data.colwise() - mean).array().colwise() * inv_std.array();
    Tensor out(C, t.height, t.width);
    out.data = (xh.data.array().colwise() * gamma.array()).colwise() + beta.array();
    y.push_back(std::move(out));
    if (cache) cache->xhat.push_back(std::move(xh));
  }
  return y;
}

Batch batch_norm_backward(const Batch& dy, const NormSpec& spec, const Eigen::VectorXd& params,
                          const NormCache& cache, Eigen::VectorXd& grad) {
  const int C = spec.channels;
  const auto gamma = params.segment(spec.gamma.offset, C);
  Eigen::VectorXd dgamma = Eigen::VectorXd::Zero(C), dbeta = Eigen::VectorXd::Zero(C);
  Eigen::VectorXd sum_dxhat = Eigen::VectorXd::Zero(C), sum_dxhat_xhat = Eigen::VectorXd::Zero(C);
  double count = 0.0;
  for (std::size_t b = 0; b < dy.size(); ++b) {
    const Act& g = dy[b].data;
    const Act& xh = cache.xhat[b].data;
    dgamma += g.cwiseProduct(xh).rowwise().sum();
    dbeta += g.rowwise().sum();
    count += g.cols();
  }
  sum_dxhat = dbeta.cwiseProduct(gamma);
  sum_dxhat_xhat = dgamma.cwiseProduct(gamma);
  grad.segment(spec.gamma.offset, C) += dgamma;
  grad.segment(spec.beta.offset, C) += dbeta;

  Batch dx;
  dx.reserve(dy.size());
  for (std::size_t b = 0; b < dy.size(); ++b) {
    Tensor d(C, dy[b].height, dy[b].width);
    const Act dxhat = dy[b].data.array().colwise() * gamma.array();
    if (cache.mode == NormMode::kTrain) {
      const Eigen::ArrayXd mean_dxhat = sum_dxhat.array() / count;
      const Eigen::ArrayXd mean_dxhat_xhat = sum_dxhat_xhat.array() / count;
      d.data = ((dxhat.array().colwise() - mean_dxhat) -
                cache.xhat[b].data.array().colwise() * mean_dxhat_xhat)
                   .colwise() *
               cache.inv_std.array();
    } else {
      d.data = dxhat.array().colwise() * cache.inv_std.array();
    }
    dx.push_back(std::move(d));
  }
  return dx;
}

void relu_inplace(Batch& x) {
  for (auto& t : x) t.data = t.data.cwiseMax(0.0);
}

void relu_backward_inplace(Batch& d, const Batch& out) {
  for (std::size_t b = 0; b < d.size(); ++b) d[b].data = (out[b].data.array() > 0.0).select(d[b].data, 0.0);
}

Batch block_forward(const Batch& x, const BlockSpec& spec, const Eigen::VectorXd& params,
                    Eigen::VectorXd* running, const Architecture& arch, NormMode mode, BlockTape* tape) {
  Batch z;
  for (const auto& t : x) z.push_back(nn::conv_forward(t, spec.conv1, params));
  Batch r1 = batch_norm(z, spec.norm1, params, running, arch, mode, tape ? &tape->n1 : nullptr);
  relu_inplace(r1);
  z.clear();
  for (const auto& t : r1) z.push_back(nn::conv_forward(t, spec.conv2, params));
  Batch r2 = batch_norm(z, spec.norm2, params, running, arch, mode, tape ? &tape->n2 : nullptr);
  relu_inplace(r2);
  if (tape) {
    tape->x = x;
    tape->r1 = r1;
    tape->r2 = r2;
  }
  return r2;
}

Batch block_backward(Batch dr2, const BlockSpec& spec, const Eigen::VectorXd& params,
                     const BlockTape& tape, Eigen::VectorXd& grad) {
  relu_backward_inplace(dr2, tape.r2);
  Batch dz2 = batch_norm_backward(dr2, spec.norm2, params, tape.n2, grad);
  Batch dr1;
  for (std::size_t b = 0; b < dz2.size(); ++b)
    dr1.push_back(nn::conv_backward(tape.r1[b], dz2[b], spec.conv2, params, grad));
  relu_backward_inplace(dr1, tape.r1);
  Batch dz1 = batch_norm_backward(dr1, spec.norm1, params, tape.n1, grad);
  Batch dx;
  for (std::size_t b = 0; b < dz1.size(); ++b)
    dx.push_back(nn::conv_backward(tape.x[b], dz1[b], spec.conv1, params, grad));
  return dx;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out(a.channels() + b.channels(), a.height, a.width);
  out.data.topRows(a.channels()) = a.data;
  out.data.bottomRows(b.channels()) = b.data;
  return out;
}

std::vector<DenseMaps> forward_impl(const FeatureModel& model, const std::vector<const Grid*>& images,
                                    NormMode mode, Eigen::VectorXd* running, Tape* tape) {
  const Architecture& arch = model.architecture();
  const int E = arch.num_blocks();
  if (images.empty()) return {};
  const int S = static_cast<int>(images.front()->rows());
  for (const Grid* g : images)
    if (g->rows() != S || g->cols() != S)
      throw std::invalid_argument("forward: batch images must be square and equally sized");
  if (S % arch.size_divisor() != 0)
    throw SizeIndivisible("forward: image size " + std::to_string(S) + " not divisible by " +
                          std::to_string(arch.size_divisor()));
  if (arch.in_channels != 1) throw std::invalid_argument("forward: only single-channel input is supported");

  auto state = tape ? std::make_unique<Tape::State>() : nullptr;
  if (state) {
    state->size = S;
    state->enc.resize(E);
    state->dec.resize(E);
    state->pool_argmax.resize(E);
  }
  const Eigen::VectorXd& params = model.params();

  Batch x;
  for (const Grid* g : images) {
    Tensor t(1, S, S);
    t.data = Eigen::Map<const Act>(g->data(), 1, static_cast<Eigen::Index>(S) * S);
    x.push_back(std::move(t));
  }

  std::vector<Batch> enc_out(E);
  for (int i = 0; i < E; ++i) {
    Batch in;
    if (i == 0) {
      in = std::move(x);
    } else {
      if (state) state->pool_argmax[i].resize(images.size());
      for (std::size_t b = 0; b < images.size(); ++b)
        in.push_back(nn::maxpool2(enc_out[i - 1][b], state ? &state->pool_argmax[i][b] : nullptr));
    }
    enc_out[i] = block_forward(in, model.encoder()[i], params, running, arch, mode,
                               state ? &state->enc[i] : nullptr);
  }

  Batch dec = block_forward(enc_out[E - 1], model.decoder()[0], params, running, arch, mode,
                            state ? &state->dec[0] : nullptr);
  for (int j = 1; j < E; ++j) {
    const Batch& skip = enc_out[E - 1 - j];
    Batch in;
    for (std::size_t b = 0; b < images.size(); ++b)
      in.push_back(concat(nn::resize_bilinear(dec[b], skip[b].height, skip[b].width), skip[b]));
    dec = block_forward(in, model.decoder()[j], params, running, arch, mode,
                        state ? &state->dec[j] : nullptr);
  }

  std::vector<DenseMaps> out(images.size());
  const int D = arch.descriptor_dim();
  for (std::size_t b = 0; b < images.size(); ++b) {
    DenseMaps& m = out[b];
    m.size = S;
    m.detector = nn::conv_forward(dec[b], model.detector_head(), params);
    m.weight = nn::conv_forward(dec[b], model.weight_head(), params);
    m.descriptor = Tensor(D, S, S);
    int row = 0;
    for (int i = 0; i < E; ++i) {
      const Tensor up = nn::resize_bilinear(enc_out[i][b], S, S);
      m.descriptor.data.middleRows(row, up.channels()) = up.data;
      row += up.channels();
    }
  }
  if (tape) tape->reset(std::move(state));
  return out;
}

}  // namespace

std::vector<DenseMaps> forward(FeatureModel& model, const std::vector<const Grid*>& images, NormMode mode,
                               Tape* tape) {
  Eigen::VectorXd* running = &model.buffers();
  return forward_impl(model, images, mode, running, tape);
}

DenseMaps forward_inference(const FeatureModel& model, const Grid& image) {
  Eigen::VectorXd running = model.buffers();
  return forward_impl(model, {&image}, NormMode::kInference, &running, nullptr).front();
}

Eigen::VectorXd backprop(const FeatureModel& model, Tape& tape, const std::vector<DenseMaps>& adjoints) {
  if (tape.empty()) throw NoForwardTape("backprop: no recorded forward pass");
  const Tape::State& st = *tape.state();
  const Architecture& arch = model.architecture();
  const Eigen::VectorXd& params = model.params();
  const int E = arch.num_blocks();
  const std::size_t N = st.enc.front().x.size();
  if (adjoints.size() != N) throw std::invalid_argument("backprop: adjoint batch size mismatch");
  const int S = st.size;

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.num_params()));

  // Gradient wrt each encoder block output, accumulated from all consumers.
  std::vector<Batch> d_enc(E);
  for (int i = 0; i < E; ++i)
    for (std::size_t b = 0; b < N; ++b) {
      const Tensor& o = st.enc[i].r2[b];
      d_enc[i].emplace_back(o.channels(), o.height, o.width);
    }

  Batch d_dec;
  for (std::size_t b = 0; b < N; ++b) {
    const Tensor& head_in = st.dec[E - 1].r2[b];
    Tensor d = nn::conv_backward(head_in, adjoints[b].detector, model.detector_head(), params, grad);
    d.data += nn::conv_backward(head_in, adjoints[b].weight, model.weight_head(), params, grad).data;
    d_dec.push_back(std::move(d));

    int row = 0;
    for (int i = 0; i < E; ++i) {
      const Tensor& o = st.enc[i].r2[b];
      Tensor slice(o.channels(), S, S);
      slice.data = adjoints[b].descriptor.data.middleRows(row, o.channels());
      row += o.channels();
      d_enc[i][b].data += nn::resize_bilinear_backward(slice, o.height, o.width).data;
    }
  }

  for (int j = E - 1; j >= 1; --j) {
    Batch dx = block_backward(std::move(d_dec), model.decoder()[j], params, st.dec[j], grad);
    const int skip_level = E - 1 - j;
    Batch d_prev;
    for (std::size_t b = 0; b < N; ++b) {
      const Tensor& prev = st.dec[j - 1].r2[b];
      const int cp = prev.channels();
      Tensor d_up(cp, dx[b].height, dx[b].width);
      d_up.data = dx[b].data.topRows(cp);
      d_enc[skip_level][b].data += dx[b].data.bottomRows(dx[b].channels() - cp);
      d_prev.push_back(nn::resize_bilinear_backward(d_up, prev.height, prev.width));
    }
    d_dec = std::move(d_prev);
  }
  {
    Batch dx = block_backward(std::move(d_dec), model.decoder()[0], params, st.dec[0], grad);
    for (std::size_t b = 0; b < N; ++b) d_enc[E - 1][b].data += dx[b].data;
  }

  for (int i = E - 1; i >= 0; --i) {
    Batch dx = block_backward(std::move(d_enc[i]), model.encoder()[i], params, st.enc[i], grad);
    if (i == 0) break;
    for (std::size_t b = 0; b < N; ++b) {
      const Tensor& below = st.enc[i - 1].r2[b];
      d_enc[i - 1][b].data += nn::maxpool2_backward(dx[b], st.pool_argmax[i][b], below.height, below.width).data;
    }
  }
  return grad;
}

}  // namespace hero
