#include "oscar/encoder.hpp"

#include <cmath>
#include <string>

namespace oscar {

namespace {

constexpr double kLayerNormEps = 1e-12;

Matrix layer_norm(const Matrix& x, const LayerNormParams& p, LayerNormCache& cache) {
  const Index d = x.rows(), n = x.cols();
  cache.normalized.resize(d, n);
  cache.inv_std.resize(n);
  Matrix y(d, n);
  for (Index j = 0; j < n; ++j) {
    const double mean = x.col(j).mean();
    const double var = (x.col(j).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std(j) = inv;
    cache.normalized.col(j) = (x.col(j).array() - mean) * inv;
    y.col(j) = cache.normalized.col(j).cwiseProduct(p.gamma) + p.beta;
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormParams& p, const LayerNormCache& cache,
                           LayerNormParams& grads) {
  const Index d = dy.rows(), n = dy.cols();
  grads.gamma += dy.cwiseProduct(cache.normalized).rowwise().sum();
  grads.beta += dy.rowwise().sum();
  Matrix dx(d, n);
  for (Index j = 0; j < n; ++j) {
    const Vector dxhat = dy.col(j).cwiseProduct(p.gamma);
    const double mean_d = dxhat.mean();
    const double mean_dx = dxhat.dot(cache.normalized.col(j)) / static_cast<double>(d);
    dx.col(j) = cache.inv_std(j) * (dxhat.array() - mean_d - cache.normalized.col(j).array() * mean_dx).matrix();
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void softmax_columns(Matrix& s) {
  for (Index j = 0; j < s.cols(); ++j) {
    const double mx = s.col(j).maxCoeff();
    s.col(j) = (s.col(j).array() - mx).exp();
    s.col(j) /= s.col(j).sum();
  }
}

Matrix affine(const Matrix& w, const Vector& b, const Matrix& x) {
  Matrix y = w * x;
  y.colwise() += b;
  return y;
}

LayerNormParams ln_zeros(Index d) { return {Vector::Zero(d), Vector::Zero(d)}; }
LayerNormParams ln_unit(Index d) { return {Vector::Ones(d), Vector::Zero(d)}; }

}  // namespace

void EncoderConfig::validate() const {
  if (hidden <= 0 || heads <= 0 || hidden % heads != 0)
    throw EncoderError("encoder.hidden must be a positive multiple of encoder.heads");
  if (max_len < 2) throw EncoderError("encoder.max_len must be at least 2");
  if (feed_forward <= 0) throw EncoderError("encoder.ff must be positive");
  if (vocab_size == 0) throw EncoderError("encoder vocabulary is empty");
}

EncoderParams EncoderParams::zeros(const EncoderConfig& cfg) {
  const Index d = cfg.hidden, v = static_cast<Index>(cfg.vocab_size), ff = cfg.feed_forward;
  EncoderParams p;
  p.token_embedding = Matrix::Zero(d, v);
  p.position_embedding = Matrix::Zero(d, static_cast<Index>(cfg.max_len));
  p.ln_embed = ln_zeros(d);
  p.layers.resize(cfg.layers);
  for (auto& l : p.layers) {
    l.wq = l.wk = l.wv = l.wo = Matrix::Zero(d, d);
    l.bq = l.bk = l.bv = l.bo = Vector::Zero(d);
    l.ln_attn = ln_zeros(d);
    l.w1 = Matrix::Zero(ff, d);
    l.b1 = Vector::Zero(ff);
    l.w2 = Matrix::Zero(d, ff);
    l.b2 = Vector::Zero(d);
    l.ln_ffn = ln_zeros(d);
  }
  p.out_weight = Matrix::Zero(v, d);
  p.out_bias = Vector::Zero(v);
  return p;
}

EncoderParams EncoderParams::random(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderParams p = zeros(cfg);
  std::normal_distribution<double> normal(0.0, 0.02);
  auto fill = [&](Matrix& m) {
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
  };
  fill(p.token_embedding);
  fill(p.position_embedding);
  p.ln_embed = ln_unit(cfg.hidden);
  for (auto& l : p.layers) {
    fill(l.wq);
    fill(l.wk);
    fill(l.wv);
    fill(l.wo);
    fill(l.w1);
    fill(l.w2);
    l.ln_attn = ln_unit(cfg.hidden);
    l.ln_ffn = ln_unit(cfg.hidden);
  }
  fill(p.out_weight);
  return p;
}

std::vector<TensorRef> EncoderParams::tensors() {
  std::vector<TensorRef> t{tensor_ref("embedding.token", token_embedding),
                           tensor_ref("embedding.position", position_embedding),
                           tensor_ref("embedding.ln.gamma", ln_embed.gamma),
                           tensor_ref("embedding.ln.beta", ln_embed.beta)};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    t.push_back(tensor_ref(pre + "attn.wq", l.wq));
    t.push_back(tensor_ref(pre + "attn.bq", l.bq));
    t.push_back(tensor_ref(pre + "attn.wk", l.wk));
    t.push_back(tensor_ref(pre + "attn.bk", l.bk));
    t.push_back(tensor_ref(pre + "attn.wv", l.wv));
    t.push_back(tensor_ref(pre + "attn.bv", l.bv));
    t.push_back(tensor_ref(pre + "attn.wo", l.wo));
    t.push_back(tensor_ref(pre + "attn.bo", l.bo));
    t.push_back(tensor_ref(pre + "attn.ln.gamma", l.ln_attn.gamma));
    t.push_back(tensor_ref(pre + "attn.ln.beta", l.ln_attn.beta));
    t.push_back(tensor_ref(pre + "ffn.w1", l.w1));
    t.push_back(tensor_ref(pre + "ffn.b1", l.b1));
    t.push_back(tensor_ref(pre + "ffn.w2", l.w2));
    t.push_back(tensor_ref(pre + "ffn.b2", l.b2));
    t.push_back(tensor_ref(pre + "ffn.ln.gamma", l.ln_ffn.gamma));
    t.push_back(tensor_ref(pre + "ffn.ln.beta", l.ln_ffn.beta));
  }
  t.push_back(tensor_ref("mlm.weight", out_weight));
  t.push_back(tensor_ref("mlm.bias", out_bias));
  return t;
}

Encoder::Encoder(EncoderConfig cfg, EncoderParams params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

void Encoder::forward(const std::vector<TokenId>& ids, EncoderCache& cache) const {
  const Index n = static_cast<Index>(ids.size());
  if (ids.empty()) throw EncoderError("cannot encode an empty sequence");
  if (ids.size() > cfg_.max_len)
    throw EncoderError("sequence of length " + std::to_string(ids.size()) + " exceeds encoder.max_len " +
                       std::to_string(cfg_.max_len));
  const Index d = cfg_.hidden, heads = cfg_.heads, dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  cache.ids = ids;
  Matrix emb(d, n);
  for (Index i = 0; i < n; ++i) {
    const TokenId id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
      throw EncoderError("token ID " + std::to_string(id) + " outside the vocabulary");
    emb.col(i) = params_.token_embedding.col(id) + params_.position_embedding.col(i);
  }
  cache.hidden.assign(1, layer_norm(emb, params_.ln_embed, cache.ln_embed));
  cache.layers.resize(cfg_.layers);

  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const auto& p = params_.layers[l];
    auto& c = cache.layers[l];
    c.input = cache.hidden.back();
    c.q = affine(p.wq, p.bq, c.input);
    c.k = affine(p.wk, p.bk, c.input);
    c.v = affine(p.wv, p.bv, c.input);
    c.probs.resize(static_cast<std::size_t>(heads));
    c.context.resize(d, n);
    for (Index h = 0; h < heads; ++h) {
      Matrix s = c.k.middleRows(h * dk, dk).transpose() * c.q.middleRows(h * dk, dk) * scale;
      softmax_columns(s);
      c.context.middleRows(h * dk, dk) = c.v.middleRows(h * dk, dk) * s;
      c.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    c.attn_out = layer_norm(c.input + affine(p.wo, p.bo, c.context), p.ln_attn, c.ln_attn);
    c.ff_pre = affine(p.w1, p.b1, c.attn_out);
    c.ff_act = c.ff_pre.unaryExpr([](double x) { return gelu(x); });
    cache.hidden.push_back(layer_norm(c.attn_out + affine(p.w2, p.b2, c.ff_act), p.ln_ffn, c.ln_ffn));
  }
}

Matrix Encoder::logits(const EncoderCache& cache, const std::vector<std::size_t>& positions) const {
  const Matrix& top = cache.hidden.back();
  Matrix selected(top.rows(), static_cast<Index>(positions.size()));
  for (std::size_t k = 0; k < positions.size(); ++k) selected.col(static_cast<Index>(k)) = top.col(static_cast<Index>(positions[k]));
  return affine(params_.out_weight, params_.out_bias, selected);
}

void Encoder::backward(const EncoderCache& cache, const std::vector<std::size_t>& positions, const Matrix& d_logits,
                       const std::vector<Matrix>& hidden_grads, EncoderParams& grads) const {
  const Index d = cfg_.hidden, heads = cfg_.heads, dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const Matrix& top = cache.hidden.back();
  const Index n = top.cols();
  auto injected = [&](std::size_t level) -> const Matrix* {
    if (hidden_grads.empty()) return nullptr;
    const Matrix& g = hidden_grads.at(level);
    return g.size() == 0 ? nullptr : &g;
  };

  Matrix dh = Matrix::Zero(d, n);
  if (!positions.empty()) {
    Matrix selected(d, static_cast<Index>(positions.size()));
    for (std::size_t k = 0; k < positions.size(); ++k) selected.col(static_cast<Index>(k)) = top.col(static_cast<Index>(positions[k]));
    grads.out_weight.noalias() += d_logits * selected.transpose();
    grads.out_bias += d_logits.rowwise().sum();
    const Matrix d_sel = params_.out_weight.transpose() * d_logits;
    for (std::size_t k = 0; k < positions.size(); ++k) dh.col(static_cast<Index>(positions[k])) += d_sel.col(static_cast<Index>(k));
  }
  if (const Matrix* g = injected(cfg_.layers)) dh += *g;

  for (std::size_t l = cfg_.layers; l-- > 0;) {
    const auto& p = params_.layers[l];
    const auto& c = cache.layers[l];
    auto& g = grads.layers[l];

    const Matrix d_res2 = layer_norm_backward(dh, p.ln_ffn, c.ln_ffn, g.ln_ffn);
    g.w2.noalias() += d_res2 * c.ff_act.transpose();
    g.b2 += d_res2.rowwise().sum();
    const Matrix d_pre = (p.w2.transpose() * d_res2).cwiseProduct(c.ff_pre.unaryExpr([](double x) { return gelu_grad(x); }));
    g.w1.noalias() += d_pre * c.attn_out.transpose();
    g.b1 += d_pre.rowwise().sum();
    const Matrix d_attn_out = d_res2 + p.w1.transpose() * d_pre;

    const Matrix d_res1 = layer_norm_backward(d_attn_out, p.ln_attn, c.ln_attn, g.ln_attn);
    g.wo.noalias() += d_res1 * c.context.transpose();
    g.bo += d_res1.rowwise().sum();
    const Matrix d_context = p.wo.transpose() * d_res1;

    Matrix dq(d, n), dk_(d, n), dv(d, n);
    for (Index h = 0; h < heads; ++h) {
      const Matrix& probs = c.probs[static_cast<std::size_t>(h)];
      const auto d_out = d_context.middleRows(h * dk, dk);
      dv.middleRows(h * dk, dk) = d_out * probs.transpose();
      const Matrix d_probs = c.v.middleRows(h * dk, dk).transpose() * d_out;
      Matrix d_scores = probs.cwiseProduct(d_probs);
      const Eigen::RowVectorXd col_dot = d_scores.colwise().sum();
      d_scores -= probs * col_dot.asDiagonal();
      dq.middleRows(h * dk, dk) = scale * (c.k.middleRows(h * dk, dk) * d_scores);
      dk_.middleRows(h * dk, dk) = scale * (c.q.middleRows(h * dk, dk) * d_scores.transpose());
    }
    g.wq.noalias() += dq * c.input.transpose();
    g.wk.noalias() += dk_ * c.input.transpose();
    g.wv.noalias() += dv * c.input.transpose();
    g.bq += dq.rowwise().sum();
    g.bk += dk_.rowwise().sum();
    g.bv += dv.rowwise().sum();
    dh = d_res1 + p.wq.transpose() * dq + p.wk.transpose() * dk_ + p.wv.transpose() * dv;
    if (const Matrix* extra = injected(l)) dh += *extra;
  }

  const Matrix d_emb = layer_norm_backward(dh, params_.ln_embed, cache.ln_embed, grads.ln_embed);
  for (Index i = 0; i < n; ++i) {
    grads.token_embedding.col(cache.ids[static_cast<std::size_t>(i)]) += d_emb.col(i);
    grads.position_embedding.col(i) += d_emb.col(i);
  }
}

double cross_entropy(const Matrix& logits, const std::vector<TokenId>& targets, Matrix& d_logits) {
  d_logits.resize(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    const Vector e = (logits.col(j).array() - mx).exp();
    const double z = e.sum();
    const TokenId t = targets[static_cast<std::size_t>(j)];
    loss += -(logits(t, j) - mx - std::log(z));
    d_logits.col(j) = e / z;
    d_logits(t, j) -= 1.0;
  }
  return loss;
}

}  // namespace oscar
