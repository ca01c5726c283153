#include "qagen/toy_lm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "qagen/error.hpp"
#include "qagen/rng.hpp"

namespace qagen {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Row = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Blocks per layer: attention is wq, wk, wv, wo; feed-forward is w1, b1, w2, b2.
constexpr std::size_t kEncBlocks = 8;
constexpr std::size_t kDecBlocks = 12;

struct AttnWeights {
  CMap wq, wk, wv, wo;
};
struct AttnGrads {
  MMap wq, wk, wv, wo;
};
struct FfnWeights {
  CMap w1, b1, w2, b2;
};
struct FfnGrads {
  MMap w1, b1, w2, b2;
};

struct AttnCache {
  Mat xq, xkv, q, k, v, o;
  std::vector<Mat> probs;
};

struct FfnCache {
  Mat x, h;
};

struct EncLayerCache {
  AttnCache attn;
  FfnCache ffn;
};

struct DecLayerCache {
  AttnCache self_attn, cross_attn;
  FfnCache ffn;
};

void softmax_rows(Mat& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const double e = s(i, j) == kNegInf ? 0.0 : std::exp(s(i, j) - mx);
      s(i, j) = e;
      sum += e;
    }
    s.row(i) /= sum;
  }
}

// Scaled dot-product attention over already-projected q, k, v.
Mat attend(const Mat& q, const Mat& k, const Mat& v, std::size_t heads, bool causal,
           std::vector<Mat>* probs) {
  const auto d = q.cols();
  const auto dh = d / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat o(q.rows(), d);
  if (probs) probs->clear();
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * dh;
    Mat s = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
    if (causal) {
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < s.cols(); ++j) s(i, j) = kNegInf;
      }
    }
    softmax_rows(s);
    o.middleCols(c0, dh) = s * v.middleCols(c0, dh);
    if (probs) probs->push_back(std::move(s));
  }
  return o;
}

Mat mha_forward(const Mat& xq, const Mat& xkv, const AttnWeights& w, std::size_t heads,
                bool causal, AttnCache* cache) {
  Mat q = xq * w.wq;
  Mat k = xkv * w.wk;
  Mat v = xkv * w.wv;
  std::vector<Mat> probs;
  Mat o = attend(q, k, v, heads, causal, cache ? &probs : nullptr);
  Mat out = o * w.wo;
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
    cache->probs = std::move(probs);
  }
  return out;
}

// Accumulates parameter gradients; adds input gradients into dxq and dxkv
// (which may alias for self-attention).
void mha_backward(const Mat& dout, const AttnCache& c, const AttnWeights& w, AttnGrads& g,
                  std::size_t heads, Mat& dxq, Mat& dxkv) {
  g.wo.noalias() += c.o.transpose() * dout;
  const Mat d_o = dout * w.wo.transpose();
  const auto d = c.q.cols();
  const auto dh = d / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat dq = Mat::Zero(c.q.rows(), d);
  Mat dk = Mat::Zero(c.k.rows(), d);
  Mat dv = Mat::Zero(c.v.rows(), d);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * dh;
    const Mat& p = c.probs[h];
    const Mat d_oh = d_o.middleCols(c0, dh);
    const Mat dp = d_oh * c.v.middleCols(c0, dh).transpose();
    dv.middleCols(c0, dh) = p.transpose() * d_oh;
    Mat ds = p.cwiseProduct(dp);
    const Eigen::VectorXd rows = ds.rowwise().sum();
    ds -= p.cwiseProduct(rows.replicate(1, p.cols()));
    ds *= scale;
    dq.middleCols(c0, dh) = ds * c.k.middleCols(c0, dh);
    dk.middleCols(c0, dh) = ds.transpose() * c.q.middleCols(c0, dh);
  }
  g.wq.noalias() += c.xq.transpose() * dq;
  g.wk.noalias() += c.xkv.transpose() * dk;
  g.wv.noalias() += c.xkv.transpose() * dv;
  dxq.noalias() += dq * w.wq.transpose();
  dxkv.noalias() += dk * w.wk.transpose();
  dxkv.noalias() += dv * w.wv.transpose();
}

Mat ffn_forward(const Mat& x, const FfnWeights& w, FfnCache* cache) {
  Mat z = x * w.w1;
  z.rowwise() += w.b1.row(0);
  Mat h = z.array().tanh().matrix();
  Mat y = h * w.w2;
  y.rowwise() += w.b2.row(0);
  if (cache) {
    cache->x = x;
    cache->h = std::move(h);
  }
  return y;
}

void ffn_backward(const Mat& dy, const FfnCache& c, const FfnWeights& w, FfnGrads& g, Mat& dx) {
  g.w2.noalias() += c.h.transpose() * dy;
  g.b2.row(0) += dy.colwise().sum();
  const Mat dh = dy * w.w2.transpose();
  const Mat dz = dh.cwiseProduct((1.0 - c.h.array().square()).matrix());
  g.w1.noalias() += c.x.transpose() * dz;
  g.b1.row(0) += dz.colwise().sum();
  dx.noalias() += dz * w.w1.transpose();
}

std::vector<ToyEncDecLM::Block> build_layout(const ToyLMConfig& c, std::size_t vocab) {
  std::vector<ToyEncDecLM::Block> blocks;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t r, std::size_t k) {
    blocks.push_back({std::move(name), offset, r, k});
    offset += r * k;
  };
  const std::size_t d = c.dim;
  const std::size_t f = c.ffn_dim;
  add("tok_emb", vocab, d);
  add("enc_pos", c.max_context, d);
  add("dec_pos", c.max_target, d);
  auto attn = [&](const std::string& p) {
    for (const char* n : {"wq", "wk", "wv", "wo"}) add(p + "." + n, d, d);
  };
  auto ffn = [&](const std::string& p) {
    add(p + ".w1", d, f);
    add(p + ".b1", 1, f);
    add(p + ".w2", f, d);
    add(p + ".b2", 1, d);
  };
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    attn(p + ".self");
    ffn(p + ".ffn");
  }
  for (std::size_t l = 0; l < c.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    attn(p + ".self");
    attn(p + ".cross");
    ffn(p + ".ffn");
  }
  add("out.w", d, vocab);
  add("out.b", 1, vocab);
  return blocks;
}

struct ToyState final : EncoderState {
  Mat memory;
  // Cross-attention keys and values per decoder layer.
  std::vector<Mat> cross_k, cross_v;
};

}  // namespace

void ToyLMConfig::validate() const {
  if (dim == 0 || dim > 64) throw std::invalid_argument("toy LM dim must be in [1, 64]");
  if (heads == 0 || dim % heads != 0) throw std::invalid_argument("toy LM heads must divide dim");
  if (encoder_layers == 0 || encoder_layers > 2 || decoder_layers == 0 || decoder_layers > 2) {
    throw std::invalid_argument("toy LM layer counts must be 1 or 2");
  }
  if (ffn_dim == 0) throw std::invalid_argument("toy LM ffn_dim must be positive");
  if (max_context == 0 || max_target == 0) {
    throw std::invalid_argument("toy LM position tables must be non-empty");
  }
}

struct ToyEncDecLM::Impl {
  const ToyEncDecLM& m;
  std::span<const double> p;

  CMap view(std::size_t b) const {
    const Block& blk = m.blocks_[b];
    return CMap(p.data() + blk.offset, static_cast<Eigen::Index>(blk.rows),
                static_cast<Eigen::Index>(blk.cols));
  }
  static MMap gview(const ToyEncDecLM& m, std::span<double> g, std::size_t b) {
    const Block& blk = m.blocks_[b];
    return MMap(g.data() + blk.offset, static_cast<Eigen::Index>(blk.rows),
                static_cast<Eigen::Index>(blk.cols));
  }

  std::size_t enc_base(std::size_t l) const { return 3 + l * kEncBlocks; }
  std::size_t dec_base(std::size_t l) const {
    return 3 + m.config_.encoder_layers * kEncBlocks + l * kDecBlocks;
  }
  std::size_t out_base() const { return dec_base(m.config_.decoder_layers); }

  AttnWeights attn(std::size_t b) const { return {view(b), view(b + 1), view(b + 2), view(b + 3)}; }
  FfnWeights ffn(std::size_t b) const { return {view(b), view(b + 1), view(b + 2), view(b + 3)}; }
  static AttnGrads attn_g(const ToyEncDecLM& m, std::span<double> g, std::size_t b) {
    return {gview(m, g, b), gview(m, g, b + 1), gview(m, g, b + 2), gview(m, g, b + 3)};
  }
  static FfnGrads ffn_g(const ToyEncDecLM& m, std::span<double> g, std::size_t b) {
    return {gview(m, g, b), gview(m, g, b + 1), gview(m, g, b + 2), gview(m, g, b + 3)};
  }

  Mat embed(std::span<const TokenId> ids, std::size_t pos_block) const {
    const CMap emb = view(0);
    const CMap pos = view(pos_block);
    Mat x(static_cast<Eigen::Index>(ids.size()), emb.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      x.row(r) = emb.row(ids[i]) + pos.row(r);
    }
    return x;
  }

  Mat encoder(std::span<const TokenId> ctx, std::vector<EncLayerCache>* caches) const {
    Mat x = embed(ctx, 1);
    const std::size_t heads = m.config_.heads;
    for (std::size_t l = 0; l < m.config_.encoder_layers; ++l) {
      const std::size_t b = enc_base(l);
      EncLayerCache* c = caches ? &(*caches)[l] : nullptr;
      Mat x1 = x + mha_forward(x, x, attn(b), heads, false, c ? &c->attn : nullptr);
      x = x1 + ffn_forward(x1, ffn(b + 4), c ? &c->ffn : nullptr);
    }
    return x;
  }

  // Hidden states of the top decoder layer for every input position.
  Mat decoder(std::span<const TokenId> dec_in, const Mat& memory, const ToyState* state,
              std::vector<DecLayerCache>* caches) const {
    Mat y = embed(dec_in, 2);
    const std::size_t heads = m.config_.heads;
    for (std::size_t l = 0; l < m.config_.decoder_layers; ++l) {
      const std::size_t b = dec_base(l);
      DecLayerCache* c = caches ? &(*caches)[l] : nullptr;
      Mat y1 = y + mha_forward(y, y, attn(b), heads, true, c ? &c->self_attn : nullptr);
      Mat cross;
      if (state) {
        const AttnWeights w = attn(b + 4);
        const Mat q = y1 * w.wq;
        cross = attend(q, state->cross_k[l], state->cross_v[l], heads, false, nullptr) * w.wo;
      } else {
        cross = mha_forward(y1, memory, attn(b + 4), heads, false, c ? &c->cross_attn : nullptr);
      }
      Mat y2 = y1 + cross;
      y = y2 + ffn_forward(y2, ffn(b + 8), c ? &c->ffn : nullptr);
    }
    return y;
  }
};

ToyEncDecLM::ToyEncDecLM(Vocabulary vocab, ToyLMConfig config)
    : vocab_(std::move(vocab)), config_(config) {
  config_.validate();
  blocks_ = build_layout(config_, vocab_.size());
  const Block& last = blocks_.back();
  params_.assign(last.offset + last.rows * last.cols, 0.0);

  Rng rng(splitmix64(config_.init_seed));
  for (const Block& b : blocks_) {
    const bool bias = b.rows == 1;
    if (bias) continue;
    const bool table = b.name == "tok_emb" || b.name == "enc_pos" || b.name == "dec_pos";
    const double stdev = 1.0 / std::sqrt(static_cast<double>(table ? b.cols : b.rows));
    for (std::size_t i = 0; i < b.rows * b.cols; ++i) params_[b.offset + i] = stdev * rng.normal();
  }
}

bool ToyEncDecLM::all_finite() const {
  for (double v : params_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

TokenSequence clip_context(std::span<const TokenId> context, std::size_t max_context) {
  if (context.empty()) return {special::kPad};
  const std::size_t n = std::min(context.size(), max_context);
  return TokenSequence(context.begin(), context.begin() + static_cast<std::ptrdiff_t>(n));
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab) {
  for (TokenId t : ids) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary");
    }
  }
}

}  // namespace

std::unique_ptr<EncoderState> ToyEncDecLM::encode(std::span<const TokenId> context) const {
  const TokenSequence ctx = clip_context(context, config_.max_context);
  check_ids(ctx, vocab_.size());
  Impl impl{*this, params_};
  auto state = std::make_unique<ToyState>();
  state->memory = impl.encoder(ctx, nullptr);
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    const AttnWeights w = impl.attn(impl.dec_base(l) + 4);
    state->cross_k.push_back(state->memory * w.wk);
    state->cross_v.push_back(state->memory * w.wv);
  }
  return state;
}

Distribution ToyEncDecLM::next_distribution(const EncoderState& state,
                                            std::span<const TokenId> prefix) const {
  const auto& s = dynamic_cast<const ToyState&>(state);
  if (prefix.size() + 1 > config_.max_target) {
    throw std::out_of_range("decoder prefix exceeds max_target positions");
  }
  check_ids(prefix, vocab_.size());
  TokenSequence dec_in;
  dec_in.reserve(prefix.size() + 1);
  dec_in.push_back(special::kBos);
  dec_in.insert(dec_in.end(), prefix.begin(), prefix.end());
  Impl impl{*this, params_};
  const Mat y = impl.decoder(dec_in, s.memory, &s, nullptr);
  const std::size_t ob = impl.out_base();
  Row logits = y.row(y.rows() - 1) * impl.view(ob);
  logits += impl.view(ob + 1).row(0);
  const double mx = logits.maxCoeff();
  std::vector<double> probs(static_cast<std::size_t>(logits.cols()));
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(logits(static_cast<Eigen::Index>(i)) - mx);
    sum += probs[i];
  }
  for (double& v : probs) v /= sum;
  return Distribution(std::move(probs));
}

double ToyEncDecLM::loss_and_gradient(const SeqPair& example, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient size mismatch");
  if (example.target.empty()) throw std::invalid_argument("empty training target");
  if (example.target.size() > config_.max_target) {
    throw std::invalid_argument("training target exceeds max_target");
  }
  const TokenSequence ctx = clip_context(example.context, config_.max_context);
  check_ids(ctx, vocab_.size());
  check_ids(example.target, vocab_.size());
  TokenSequence dec_in{special::kBos};
  dec_in.insert(dec_in.end(), example.target.begin(), example.target.end() - 1);

  Impl impl{*this, params_};
  std::vector<EncLayerCache> enc_cache(config_.encoder_layers);
  std::vector<DecLayerCache> dec_cache(config_.decoder_layers);
  const Mat memory = impl.encoder(ctx, &enc_cache);
  const Mat y = impl.decoder(dec_in, memory, nullptr, &dec_cache);

  const std::size_t ob = impl.out_base();
  Mat logits = y * impl.view(ob);
  logits.rowwise() += impl.view(ob + 1).row(0);

  // Softmax cross-entropy; dlogits = softmax - onehot.
  double loss = 0.0;
  Mat dlogits = logits;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double mx = logits.row(t).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      dlogits(t, j) = std::exp(logits(t, j) - mx);
      sum += dlogits(t, j);
    }
    const auto label = static_cast<Eigen::Index>(example.target[static_cast<std::size_t>(t)]);
    loss -= logits(t, label) - mx - std::log(sum);
    dlogits.row(t) /= sum;
    dlogits(t, label) -= 1.0;
  }

  MMap g_out_w = Impl::gview(*this, grad, ob);
  MMap g_out_b = Impl::gview(*this, grad, ob + 1);
  g_out_w.noalias() += y.transpose() * dlogits;
  g_out_b.row(0) += dlogits.colwise().sum();
  Mat dy = dlogits * impl.view(ob).transpose();

  Mat dmemory = Mat::Zero(memory.rows(), memory.cols());
  const std::size_t heads = config_.heads;
  for (std::size_t l = config_.decoder_layers; l-- > 0;) {
    const std::size_t b = impl.dec_base(l);
    const DecLayerCache& c = dec_cache[l];
    FfnGrads fg = Impl::ffn_g(*this, grad, b + 8);
    Mat dy2 = dy;
    ffn_backward(dy, c.ffn, impl.ffn(b + 8), fg, dy2);
    AttnGrads cg = Impl::attn_g(*this, grad, b + 4);
    Mat dy1 = dy2;
    mha_backward(dy2, c.cross_attn, impl.attn(b + 4), cg, heads, dy1, dmemory);
    AttnGrads sg = Impl::attn_g(*this, grad, b);
    Mat dy0 = dy1;
    mha_backward(dy1, c.self_attn, impl.attn(b), sg, heads, dy0, dy0);
    dy = std::move(dy0);
  }

  MMap g_emb = Impl::gview(*this, grad, 0);
  MMap g_dec_pos = Impl::gview(*this, grad, 2);
  for (std::size_t i = 0; i < dec_in.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    g_emb.row(dec_in[i]) += dy.row(r);
    g_dec_pos.row(r) += dy.row(r);
  }

  Mat dx = std::move(dmemory);
  for (std::size_t l = config_.encoder_layers; l-- > 0;) {
    const std::size_t b = impl.enc_base(l);
    const EncLayerCache& c = enc_cache[l];
    FfnGrads fg = Impl::ffn_g(*this, grad, b + 4);
    Mat dx1 = dx;
    ffn_backward(dx, c.ffn, impl.ffn(b + 4), fg, dx1);
    AttnGrads ag = Impl::attn_g(*this, grad, b);
    Mat dx0 = dx1;
    mha_backward(dx1, c.attn, impl.attn(b), ag, heads, dx0, dx0);
    dx = std::move(dx0);
  }
  MMap g_enc_pos = Impl::gview(*this, grad, 1);
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    g_emb.row(ctx[i]) += dx.row(r);
    g_enc_pos.row(r) += dx.row(r);
  }
  return loss;
}

double ToyEncDecLM::loss(const SeqPair& example) const {
  const auto lp = sequence_logprob(*this, example.context, example.target);
  double total = 0.0;
  for (double v : lp) total -= v;
  return total;
}

double mean_token_nll(const ToyEncDecLM& lm, std::span<const SeqPair> data) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : data) {
    total += lm.loss(ex);
    tokens += ex.target.size();
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

TrainResult train_mle(ToyEncDecLM& lm, std::span<const SeqPair> data, const TrainConfig& config) {
  TrainResult result;
  if (data.empty()) throw std::invalid_argument("train_mle: empty training data");
  if (config.batch_size == 0) throw std::invalid_argument("train_mle: batch_size must be positive");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].target.empty() || data[i].target.size() > lm.config().max_target ||
        data[i].context.size() > lm.config().max_context) {
      throw std::invalid_argument("train_mle: example " + std::to_string(i) +
                                  " is empty or exceeds the configured max length");
    }
  }
  std::size_t total_tokens = 0;
  for (const auto& ex : data) total_tokens += ex.target.size();

  auto params = lm.parameters();
  std::vector<double> grad(params.size());
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::size_t step = 0;
  std::size_t batch_index = 0;

  std::vector<std::size_t> order(data.size());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = derive_stream(config.seed, "train-epoch", e);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < end; ++i) batch_loss += lm.loss_and_gradient(data[order[i]], grad);
      bool finite = std::isfinite(batch_loss);
      for (std::size_t i = 0; finite && i < grad.size(); ++i) finite = std::isfinite(grad[i]);
      if (!finite) {
        throw TrainingError("non-finite loss at batch " + std::to_string(batch_index) +
                            " (epoch " + std::to_string(e) + ")");
      }
      epoch_loss += batch_loss;
      ++step;
      if (config.optimizer == Optimizer::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
        continue;
      }
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * grad[i];
        m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * grad[i] * grad[i];
        params[i] -= config.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + kEps);
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(total_tokens));
  }
  return result;
}

std::string checkpoint_json(const ToyEncDecLM& lm) {
  using nlohmann::json;
  const ToyLMConfig& c = lm.config();
  json j;
  j["format"] = "qagen-toy-encdec";
  j["version"] = kCheckpointVersion;
  j["config"] = {{"dim", c.dim},
                 {"heads", c.heads},
                 {"encoder_layers", c.encoder_layers},
                 {"decoder_layers", c.decoder_layers},
                 {"ffn_dim", c.ffn_dim},
                 {"max_context", c.max_context},
                 {"max_target", c.max_target},
                 {"init_seed", c.init_seed}};
  j["vocab"] = lm.vocab().tokens();
  json params = json::object();
  const auto p = lm.parameters();
  for (const auto& b : lm.blocks()) {
    params[b.name] = std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                         p.begin() + static_cast<std::ptrdiff_t>(b.offset + b.rows * b.cols));
  }
  j["params"] = std::move(params);
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

ToyEncDecLM checkpoint_from_json(const std::string& json_text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("format") != "qagen-toy-encdec") throw FormatError("checkpoint: unknown format");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw FormatError("checkpoint: unsupported version " + j.at("version").dump());
    }
    const json& jc = j.at("config");
    ToyLMConfig c;
    c.dim = jc.at("dim");
    c.heads = jc.at("heads");
    c.encoder_layers = jc.at("encoder_layers");
    c.decoder_layers = jc.at("decoder_layers");
    c.ffn_dim = jc.at("ffn_dim");
    c.max_context = jc.at("max_context");
    c.max_target = jc.at("max_target");
    c.init_seed = jc.at("init_seed");
    ToyEncDecLM lm(Vocabulary(j.at("vocab").get<std::vector<std::string>>()), c);
    auto p = lm.parameters();
    for (const auto& b : lm.blocks()) {
      const auto values = j.at("params").at(b.name).get<std::vector<double>>();
      if (values.size() != b.rows * b.cols) {
        throw FormatError("checkpoint: block '" + b.name + "' has wrong size");
      }
      std::copy(values.begin(), values.end(), p.begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
    if (!lm.all_finite()) throw FormatError("checkpoint: non-finite parameters");
    return lm;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ToyEncDecLM& lm, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << checkpoint_json(lm);
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ToyEncDecLM load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace qagen
