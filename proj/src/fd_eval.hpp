#pragma once

// Value-only re-evaluation of every objective in extended precision.
// grad_check uses this as its finite-difference oracle: the model and the
// analytic gradients stay 64-bit, while the central differences are taken on
// an 80-bit recomputation so the difference quotient is not drowned by
// double-rounding noise. Deliberately independent of the production forward
// code: a formula mismatch between the two paths shows up as a check failure.

#include <cmath>
#include <vector>

#include "lotcrs/mat.hpp"
#include "lotcrs/neuralcore.hpp"
#include "lotcrs/objectives.hpp"

namespace lotcrs::objectives::detail {

template <typename S>
struct XMat {
  int rows = 0, cols = 0;
  std::vector<S> a;
  XMat() = default;
  XMat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, S(0)) {}
  S* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const S* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
};

template <typename S>
XMat<S> promote(const Mat& m) {
  XMat<S> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.a.size(); ++i) out.a[i] = static_cast<S>(m.a[i]);
  return out;
}

template <typename S>
S dot_x(const S* x, const S* y, int n) {
  S s = 0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename S>
void softmax_x(S* x, int n) {
  S mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  S z = 0;
  for (int i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    z += x[i];
  }
  for (int i = 0; i < n; ++i) x[i] /= z;
}

template <typename S>
S lse_x(const std::vector<S>& x) {
  S mx = x[0];
  for (S v : x) mx = std::max(mx, v);
  S z = 0;
  for (S v : x) z += std::exp(v - mx);
  return mx + std::log(z);
}

template <typename S>
XMat<S> matmul_x(const XMat<S>& a, const XMat<S>& b) {
  XMat<S> c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const S aik = a.row(i)[k];
      if (aik == S(0)) continue;
      const S* brow = b.row(k);
      S* crow = c.row(i);
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// Model parameters promoted once per evaluation.
template <typename S>
struct XParams {
  XMat<S> tok_emb, enc_wq, enc_wk, enc_wv, enc_wo, dec_wq, dec_wk, dec_wv, dec_wo,
      out_head, item_emb, w1, w2, pos;
  int d;
  explicit XParams(const neural::Model& m)
      : tok_emb(promote<S>(m.p.tok_emb)),
        enc_wq(promote<S>(m.p.enc_wq)),
        enc_wk(promote<S>(m.p.enc_wk)),
        enc_wv(promote<S>(m.p.enc_wv)),
        enc_wo(promote<S>(m.p.enc_wo)),
        dec_wq(promote<S>(m.p.dec_wq)),
        dec_wk(promote<S>(m.p.dec_wk)),
        dec_wv(promote<S>(m.p.dec_wv)),
        dec_wo(promote<S>(m.p.dec_wo)),
        out_head(promote<S>(m.p.out_head)),
        item_emb(promote<S>(m.p.item_emb)),
        w1(promote<S>(m.p.w1)),
        w2(promote<S>(m.p.w2)),
        pos(promote<S>(m.pos)),
        d(m.dims.d) {}
};

template <typename S>
XMat<S> attention_out_x(const XMat<S>& x, const XMat<S>& wq, const XMat<S>& wk,
                        const XMat<S>& wv, const XMat<S>& wo, bool causal) {
  const int n = x.rows;
  const int d = x.cols;
  XMat<S> q = matmul_x(x, wq), k = matmul_x(x, wk), v = matmul_x(x, wv);
  const S scale = S(1) / std::sqrt(static_cast<S>(d));
  XMat<S> attn(n, n);
  for (int i = 0; i < n; ++i) {
    const int limit = causal ? i + 1 : n;
    std::vector<S> row(static_cast<std::size_t>(limit));
    for (int j = 0; j < limit; ++j) row[static_cast<std::size_t>(j)] = scale * dot_x(q.row(i), k.row(j), d);
    softmax_x(row.data(), limit);
    for (int j = 0; j < limit; ++j) attn.row(i)[j] = row[static_cast<std::size_t>(j)];
  }
  XMat<S> z = matmul_x(attn, v);
  XMat<S> out = matmul_x(z, wo);
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += x.a[i];
  return out;
}

template <typename S>
XMat<S> encode_out_x(const XParams<S>& p, const std::vector<int>& ids) {
  const int n = static_cast<int>(ids.size());
  XMat<S> x(n, p.d);
  for (int i = 0; i < n; ++i) {
    const S* emb = p.tok_emb.row(ids[static_cast<std::size_t>(i)]);
    const S* pos = p.pos.row(i);
    for (int j = 0; j < p.d; ++j) x.row(i)[j] = emb[j] + pos[j];
  }
  return attention_out_x(x, p.enc_wq, p.enc_wk, p.enc_wv, p.enc_wo, false);
}

template <typename S>
XMat<S> decode_out_x(const XParams<S>& p, const XMat<S>& prompts,
                     const std::vector<int>& ids) {
  const int np = prompts.rows;
  const int n = np + static_cast<int>(ids.size());
  XMat<S> x(n, p.d);
  for (int i = 0; i < n; ++i) {
    const S* pos = p.pos.row(i);
    if (i < np) {
      const S* pr = prompts.row(i);
      for (int j = 0; j < p.d; ++j) x.row(i)[j] = pr[j] + pos[j];
    } else {
      const S* emb = p.tok_emb.row(ids[static_cast<std::size_t>(i - np)]);
      for (int j = 0; j < p.d; ++j) x.row(i)[j] = emb[j] + pos[j];
    }
  }
  return attention_out_x(x, p.dec_wq, p.dec_wk, p.dec_wv, p.dec_wo, true);
}

template <typename S>
std::vector<S> logits_x(const XParams<S>& p, const S* state) {
  const int vocab = p.out_head.cols;
  std::vector<S> logits(static_cast<std::size_t>(vocab), S(0));
  for (int dd = 0; dd < p.d; ++dd) {
    const S s = state[dd];
    if (s == S(0)) continue;
    const S* head = p.out_head.row(dd);
    for (int v = 0; v < vocab; ++v) logits[static_cast<std::size_t>(v)] += s * head[v];
  }
  return logits;
}

template <typename S>
std::vector<S> fuse_user_x(const XParams<S>& p, const std::vector<S>& u,
                           const XMat<S>& retrieved, S gamma) {
  const int d = p.d;
  const int k = retrieved.rows;
  std::vector<S> uw(static_cast<std::size_t>(d), S(0));
  for (int a = 0; a < d; ++a) {
    const S ua = u[static_cast<std::size_t>(a)];
    if (ua == S(0)) continue;
    const S* wrow = p.w1.row(a);
    for (int b = 0; b < d; ++b) uw[static_cast<std::size_t>(b)] += ua * wrow[b];
  }
  std::vector<S> alpha(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) alpha[static_cast<std::size_t>(j)] = dot_x(uw.data(), retrieved.row(j), d);
  softmax_x(alpha.data(), k);
  std::vector<S> fused = u;
  for (int j = 0; j < k; ++j) {
    const S w = gamma * alpha[static_cast<std::size_t>(j)];
    const S* r = retrieved.row(j);
    for (int t = 0; t < d; ++t) fused[static_cast<std::size_t>(t)] += w * r[t];
  }
  return fused;
}

template <typename S>
XMat<S> fuse_prompt_x(const XParams<S>& p, const XMat<S>& states, const XMat<S>& retrieved,
                      bool first_only) {
  XMat<S> fused = states;
  const int last = first_only ? 1 : states.rows;
  for (int row = 0; row < last; ++row) {
    std::vector<S> h(states.row(row), states.row(row) + p.d);
    // same cross-attention as fuse_user with gamma = 1 and W2
    std::vector<S> hw(static_cast<std::size_t>(p.d), S(0));
    for (int a = 0; a < p.d; ++a) {
      const S ha = h[static_cast<std::size_t>(a)];
      if (ha == S(0)) continue;
      const S* wrow = p.w2.row(a);
      for (int b = 0; b < p.d; ++b) hw[static_cast<std::size_t>(b)] += ha * wrow[b];
    }
    std::vector<S> beta(static_cast<std::size_t>(retrieved.rows));
    for (int j = 0; j < retrieved.rows; ++j) beta[static_cast<std::size_t>(j)] = dot_x(hw.data(), retrieved.row(j), p.d);
    softmax_x(beta.data(), retrieved.rows);
    for (int j = 0; j < retrieved.rows; ++j) {
      const S* r = retrieved.row(j);
      for (int t = 0; t < p.d; ++t) fused.row(row)[t] += beta[static_cast<std::size_t>(j)] * r[t];
    }
  }
  return fused;
}

template <typename S>
S dmp_val_x(const XParams<S>& p, const MaskedBatch& batch) {
  S loss = 0;
  for (const auto& seq : batch.seqs) {
    const XMat<S> out = encode_out_x(p, seq.corrupted_ids);
    for (std::size_t t = 0; t < seq.masked_positions.size(); ++t) {
      const auto logits = logits_x(p, out.row(seq.masked_positions[t]));
      loss += lse_x(logits) - logits[static_cast<std::size_t>(seq.gold_tokens[t])];
    }
  }
  return loss;
}

template <typename S>
S cosine_x(const S* x, const S* y, int d) {
  const S nx = std::sqrt(dot_x(x, x, d));
  const S ny = std::sqrt(dot_x(y, y, d));
  return dot_x(x, y, d) / (nx * ny);
}

template <typename S>
S cca_val_x(const XParams<S>& p, const PairBatch& batch) {
  const int B = static_cast<int>(batch.pairs.size());
  XMat<S> h1(B, p.d), h2(B, p.d);
  for (int b = 0; b < B; ++b) {
    const XMat<S> o1 = encode_out_x(p, batch.pairs[static_cast<std::size_t>(b)].first);
    const XMat<S> o2 = encode_out_x(p, batch.pairs[static_cast<std::size_t>(b)].second);
    for (int t = 0; t < p.d; ++t) {
      h1.row(b)[t] = o1.row(0)[t];
      h2.row(b)[t] = o2.row(0)[t];
    }
  }
  const S tau = static_cast<S>(batch.tau);
  S loss = 0;
  for (int b = 0; b < B; ++b) {
    std::vector<S> logits;
    S pos = 0;
    for (int c = 0; c < B; ++c) {
      const S s = cosine_x(h1.row(b), h2.row(c), p.d) / tau;
      if (c == b) pos = s;
      if (!batch.include_positive && c == b) continue;
      logits.push_back(s);
    }
    loss += lse_x(logits) - pos;
  }
  return loss / static_cast<S>(B);
}

template <typename S>
std::pair<S, S> rec_val_x(const XParams<S>& p, const RecBatch& batch) {
  const S floor = static_cast<S>(1e-12);
  S ce_total = 0, kl_total = 0;
  const int items = p.item_emb.rows;
  for (const auto& inst : batch.instances) {
    const XMat<S> out = encode_out_x(p, inst.ids);
    std::vector<S> u(out.row(0), out.row(0) + p.d);
    std::vector<S> fused = u;
    if (inst.retrieved.rows > 0) {
      fused = fuse_user_x(p, u, promote<S>(inst.retrieved), static_cast<S>(batch.gamma));
    }
    std::vector<S> probs(static_cast<std::size_t>(items));
    for (int i = 0; i < items; ++i) probs[static_cast<std::size_t>(i)] = dot_x(fused.data(), p.item_emb.row(i), p.d);
    softmax_x(probs.data(), items);

    if (batch.binary_ce_mode) {
      for (int i = 0; i < items; ++i) {
        const bool gold = std::find(inst.gold_rows.begin(), inst.gold_rows.end(), i) !=
                          inst.gold_rows.end();
        const S y = gold ? S(1) : S(0);
        const S pr = probs[static_cast<std::size_t>(i)];
        ce_total -= y * std::log(std::max(pr, floor)) +
                    (S(1) - y) * std::log(std::max(S(1) - pr, floor));
      }
    } else {
      for (int row : inst.gold_rows) {
        ce_total -= std::log(std::max(probs[static_cast<std::size_t>(row)], floor));
      }
    }
    if (!inst.soft.empty()) {
      for (int i = 0; i < items; ++i) {
        const S q = static_cast<S>(inst.soft[static_cast<std::size_t>(i)]);
        if (q <= S(0)) continue;
        kl_total += q * (std::log(q) - std::log(std::max(probs[static_cast<std::size_t>(i)], floor)));
      }
    }
  }
  return {ce_total, kl_total};
}

template <typename S>
S gen_val_x(const XParams<S>& p, const GenBatch& batch) {
  S loss = 0;
  for (const auto& inst : batch.instances) {
    const XMat<S> states = encode_out_x(p, inst.ctx_ids);
    XMat<S> prompts = states;
    if (inst.retrieved.rows > 0) {
      prompts = fuse_prompt_x(p, states, promote<S>(inst.retrieved), batch.first_position_only);
    }
    std::vector<int> dec_ids = inst.ctx_ids;
    dec_ids.insert(dec_ids.end(), inst.resp_ids.begin(), inst.resp_ids.end());
    const XMat<S> out = decode_out_x(p, prompts, dec_ids);
    const int np = prompts.rows;
    const int lc = static_cast<int>(inst.ctx_ids.size());
    for (std::size_t j = 0; j < inst.resp_ids.size(); ++j) {
      const auto logits = logits_x(p, out.row(np + lc + static_cast<int>(j) - 1));
      loss += lse_x(logits) - logits[static_cast<std::size_t>(inst.resp_ids[j])];
    }
  }
  return loss / static_cast<S>(batch.instances.size());
}

template <typename S>
S eval_loss_x(LossKind kind, const neural::Model& m, const GradCheckBatch& batch) {
  if (kind == LossKind::kQuadraticProbe) {
    S loss = 0;
    for (const auto& f : neural::param_fields()) {
      const Mat& mat = m.p.*(f.member);
      for (double v : mat.a) loss += static_cast<S>(v) * static_cast<S>(v);
    }
    return loss;
  }
  const XParams<S> p(m);
  switch (kind) {
    case LossKind::kDmp:
      return dmp_val_x(p, batch.masked);
    case LossKind::kCca:
      return cca_val_x(p, batch.pairs);
    case LossKind::kRecCe:
      return rec_val_x(p, batch.rec).first;
    case LossKind::kSoftKl:
      return rec_val_x(p, batch.rec).second;
    case LossKind::kJointRec: {
      const auto parts = rec_val_x(p, batch.rec);
      return parts.first + static_cast<S>(batch.lambda1) * parts.second +
             static_cast<S>(batch.lambda2) * cca_val_x(p, batch.pairs);
    }
    case LossKind::kGenNll:
      return gen_val_x(p, batch.gen);
    default:
      return S(0);
  }
}

}  // namespace lotcrs::objectives::detail
