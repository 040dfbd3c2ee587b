#include "lotcrs/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lotcrs/errors.hpp"
#include "lotcrs/logging.hpp"
#include "lotcrs/retrieval.hpp"
#include "lotcrs/text.hpp"

#include "fd_eval.hpp"

namespace lotcrs::objectives {

using neural::Model;
using neural::ParamSet;
using neural::Vocabulary;

namespace {

constexpr double kProbFloor = 1e-12;

double log_sum_exp(std::span<const double> x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

void note_clamp(ClampStats* clamps) {
  if (clamps != nullptr) ++clamps->events;
}

}  // namespace

// --- masking -----------------------------------------------------------------

std::set<std::string> item_attr_tokens(const corpus::Conversation& conv,
                                       const corpus::ItemCatalog& catalog) {
  std::set<std::string> out;
  for (const auto& turn : conv.turns) {
    for (const auto& attr : turn.attributes) {
      for (const auto& tok : tokenize_text(attr)) {
        if (!is_special_token(tok)) out.insert(tok);
      }
    }
    for (const auto& id : turn.items) {
      for (const auto& tok : tokenize_text(catalog.at(id).name)) {
        if (!is_special_token(tok)) out.insert(tok);
      }
    }
  }
  return out;
}

std::vector<int> eligible_positions(const std::vector<int>& ids, const Vocabulary& vocab,
                                    const std::set<std::string>& eligible_tokens) {
  std::vector<int> out;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const std::string& tok = vocab.token_of(ids[p]);
    if (is_special_token(tok)) continue;
    if (eligible_tokens.count(tok) > 0) out.push_back(static_cast<int>(p));
  }
  return out;
}

std::vector<int> bernoulli_positions(const std::vector<int>& eligible, double mask_rate,
                                     Rng& rng) {
  if (mask_rate <= 0.0 || mask_rate > 1.0) {
    throw ArgumentError("mask_rate must lie in (0, 1]");
  }
  std::vector<int> out;
  for (int p : eligible) {
    if (rng.bernoulli(mask_rate)) out.push_back(p);
  }
  return out;
}

MaskedSequence mask_tokens(const std::vector<int>& ids, const std::vector<int>& eligible,
                           double mask_rate, Rng& rng) {
  if (eligible.empty()) throw ArgumentError("mask_tokens: empty eligible position set");
  std::vector<int> chosen = bernoulli_positions(eligible, mask_rate, rng);
  if (chosen.empty()) {
    chosen.push_back(eligible[rng.index(eligible.size())]);
  }
  MaskedSequence seq;
  seq.corrupted_ids = ids;
  for (int p : chosen) {
    seq.masked_positions.push_back(p);
    seq.gold_tokens.push_back(ids[static_cast<std::size_t>(p)]);
    seq.corrupted_ids[static_cast<std::size_t>(p)] = Vocabulary::kMask;
  }
  return seq;
}

// --- pure losses ----------------------------------------------------------------

double binary_ce(const Mat& probs, const Mat& labels, Mat* dprobs, ClampStats* clamps) {
  if (probs.rows != labels.rows || probs.cols != labels.cols) {
    throw ArgumentError("binary_ce: shape mismatch");
  }
  double loss = 0.0;
  for (int j = 0; j < probs.rows; ++j) {
    for (int i = 0; i < probs.cols; ++i) {
      const double p = probs(j, i);
      if (p < 0.0 || p > 1.0) throw ArgumentError("binary_ce: probability outside [0,1]");
      const double y = labels(j, i);
      const bool lo_clamped = p < kProbFloor;
      const bool hi_clamped = (1.0 - p) < kProbFloor;
      if (lo_clamped || hi_clamped) note_clamp(clamps);
      loss -= y * std::log(std::max(p, kProbFloor)) +
              (1.0 - y) * std::log(std::max(1.0 - p, kProbFloor));
      if (dprobs != nullptr) {
        double g = 0.0;
        if (!lo_clamped) g -= y / p;
        if (!hi_clamped) g += (1.0 - y) / (1.0 - p);
        (*dprobs)(j, i) = g;
      }
    }
  }
  return loss;
}

double softmax_ce(const Mat& probs, const Mat& labels, Mat* dprobs, ClampStats* clamps) {
  if (probs.rows != labels.rows || probs.cols != labels.cols) {
    throw ArgumentError("softmax_ce: shape mismatch");
  }
  double loss = 0.0;
  for (int j = 0; j < probs.rows; ++j) {
    for (int i = 0; i < probs.cols; ++i) {
      const double y = labels(j, i);
      if (dprobs != nullptr) (*dprobs)(j, i) = 0.0;
      if (y == 0.0) continue;
      const double p = probs(j, i);
      const bool clamped = p < kProbFloor;
      if (clamped) note_clamp(clamps);
      loss -= y * std::log(std::max(p, kProbFloor));
      if (dprobs != nullptr && !clamped) (*dprobs)(j, i) = -y / p;
    }
  }
  return loss;
}

double kl_soft_labels(const Mat& soft, const Mat& probs, Mat* dprobs, ClampStats* clamps) {
  if (probs.rows != soft.rows || probs.cols != soft.cols) {
    throw ArgumentError("kl_soft_labels: shape mismatch");
  }
  double loss = 0.0;
  for (int j = 0; j < probs.rows; ++j) {
    for (int i = 0; i < probs.cols; ++i) {
      const double q = soft(j, i);
      if (dprobs != nullptr) (*dprobs)(j, i) = 0.0;
      if (q <= 0.0) continue;  // 0 ln 0 = 0
      const double p = probs(j, i);
      const bool clamped = p < kProbFloor;
      if (clamped) note_clamp(clamps);
      loss += q * (std::log(q) - std::log(std::max(p, kProbFloor)));
      if (dprobs != nullptr && !clamped) (*dprobs)(j, i) = -q / p;
    }
  }
  return loss;
}

double joint_rec_loss(double ce, double soft, double cca, double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) {
    throw ArgumentError("joint_rec_loss: negative loss weight");
  }
  return ce + lambda1 * soft + lambda2 * cca;
}

double info_nce(const Mat& h1, const Mat& h2, double tau, bool include_positive,
                Mat* dh1, Mat* dh2) {
  if (h1.rows != h2.rows || h1.cols != h2.cols) throw ArgumentError("info_nce: shape mismatch");
  const int B = h1.rows;
  const int d = h1.cols;
  if (B < 2) throw ArgumentError("info_nce: batch must hold at least 2 pairs");
  if (tau <= 0.0) throw ArgumentError("info_nce: temperature must be positive");

  std::vector<double> n1(static_cast<std::size_t>(B)), n2(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    n1[static_cast<std::size_t>(b)] = norm(h1.row(b));
    n2[static_cast<std::size_t>(b)] = norm(h2.row(b));
    if (n1[static_cast<std::size_t>(b)] == 0.0 || n2[static_cast<std::size_t>(b)] == 0.0) {
      throw NumericError("info_nce: zero-norm representation");
    }
  }
  Mat sim(B, B);
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < B; ++c) {
      sim(b, c) = dot(h1.row(b), h2.row(c)) /
                  (n1[static_cast<std::size_t>(b)] * n2[static_cast<std::size_t>(c)]);
    }
  }

  double loss = 0.0;
  Mat dsim(B, B);  // dL/dsim
  for (int b = 0; b < B; ++b) {
    std::vector<double> logits;
    std::vector<int> cols;
    for (int c = 0; c < B; ++c) {
      if (!include_positive && c == b) continue;
      logits.push_back(sim(b, c) / tau);
      cols.push_back(c);
    }
    loss += log_sum_exp(logits) - sim(b, b) / tau;
    if (dh1 != nullptr || dh2 != nullptr) {
      std::vector<double> p = logits;
      softmax_inplace(p);
      for (std::size_t t = 0; t < cols.size(); ++t) {
        dsim(b, cols[t]) += p[t] / tau;
      }
      dsim(b, b) -= 1.0 / tau;
    }
  }
  loss /= B;

  if (dh1 != nullptr || dh2 != nullptr) {
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < B; ++c) {
        const double g = dsim(b, c) / B;
        if (g == 0.0) continue;
        const double inv = 1.0 / (n1[static_cast<std::size_t>(b)] * n2[static_cast<std::size_t>(c)]);
        const double s = sim(b, c);
        if (dh1 != nullptr) {
          auto d1 = dh1->row(b);
          auto x = h1.row(b);
          auto y = h2.row(c);
          const double xs = s / (n1[static_cast<std::size_t>(b)] * n1[static_cast<std::size_t>(b)]);
          for (int t = 0; t < d; ++t) d1[t] += g * (y[t] * inv - xs * x[t]);
        }
        if (dh2 != nullptr) {
          auto d2 = dh2->row(c);
          auto x = h1.row(b);
          auto y = h2.row(c);
          const double ys = s / (n2[static_cast<std::size_t>(c)] * n2[static_cast<std::size_t>(c)]);
          for (int t = 0; t < d; ++t) d2[t] += g * (x[t] * inv - ys * y[t]);
        }
      }
    }
  }
  return loss;
}

// --- model-path losses -------------------------------------------------------------

double dmp_loss(const Model& m, const MaskedBatch& batch, ParamSet* grads) {
  double loss = 0.0;
  for (const auto& seq : batch.seqs) {
    if (seq.masked_positions.empty()) throw ArgumentError("dmp_loss: sequence without masks");
    const auto cache = neural::encode_forward(m, seq.corrupted_ids);
    Mat d_out;
    if (grads != nullptr) d_out = Mat(cache.out.rows, cache.out.cols);
    for (std::size_t t = 0; t < seq.masked_positions.size(); ++t) {
      const int p = seq.masked_positions[t];
      const int gold = seq.gold_tokens[t];
      auto state = cache.out.row(p);
      std::vector<double> logits = neural::project_logits(m, state);
      if (!std::isfinite(logits[static_cast<std::size_t>(gold)])) {
        throw NumericError("dmp_loss: non-finite logits");
      }
      loss += log_sum_exp(logits) - logits[static_cast<std::size_t>(gold)];
      if (grads != nullptr) {
        std::vector<double> dlogits = logits;
        softmax_inplace(dlogits);
        dlogits[static_cast<std::size_t>(gold)] -= 1.0;
        auto drow = d_out.row(p);
        for (int dd = 0; dd < m.dims.d; ++dd) {
          auto head = m.p.out_head.row(dd);
          auto ghead = grads->out_head.row(dd);
          double acc = 0.0;
          const double sdd = state[dd];
          for (int v = 0; v < m.dims.vocab; ++v) {
            acc += head[v] * dlogits[static_cast<std::size_t>(v)];
            ghead[v] += sdd * dlogits[static_cast<std::size_t>(v)];
          }
          drow[dd] += acc;
        }
      }
    }
    if (grads != nullptr) {
      neural::encode_backward(m, seq.corrupted_ids, cache, d_out, *grads);
    }
  }
  if (!std::isfinite(loss)) throw NumericError("dmp_loss: non-finite loss");
  return loss;
}

double cca_loss(const Model& m, const PairBatch& batch, ParamSet* grads, double scale) {
  const int B = static_cast<int>(batch.pairs.size());
  if (B < 2) throw ArgumentError("cca_loss: need at least 2 pairs");
  std::vector<neural::AttnCache> c1(static_cast<std::size_t>(B)), c2(static_cast<std::size_t>(B));
  Mat h1(B, m.dims.d), h2(B, m.dims.d);
  for (int b = 0; b < B; ++b) {
    c1[static_cast<std::size_t>(b)] = neural::encode_forward(m, batch.pairs[static_cast<std::size_t>(b)].first);
    c2[static_cast<std::size_t>(b)] = neural::encode_forward(m, batch.pairs[static_cast<std::size_t>(b)].second);
    auto r1 = c1[static_cast<std::size_t>(b)].out.row(0);
    auto r2 = c2[static_cast<std::size_t>(b)].out.row(0);
    std::copy(r1.begin(), r1.end(), h1.row(b).begin());
    std::copy(r2.begin(), r2.end(), h2.row(b).begin());
  }
  Mat dh1, dh2;
  if (grads != nullptr) {
    dh1 = Mat(B, m.dims.d);
    dh2 = Mat(B, m.dims.d);
  }
  const double loss = info_nce(h1, h2, batch.tau, batch.include_positive,
                               grads != nullptr ? &dh1 : nullptr,
                               grads != nullptr ? &dh2 : nullptr);
  if (grads != nullptr) {
    for (int b = 0; b < B; ++b) {
      Mat d_out1(c1[static_cast<std::size_t>(b)].out.rows, m.dims.d);
      axpy(d_out1.row(0), scale, dh1.row(b));
      neural::encode_backward(m, batch.pairs[static_cast<std::size_t>(b)].first,
                              c1[static_cast<std::size_t>(b)], d_out1, *grads);
      Mat d_out2(c2[static_cast<std::size_t>(b)].out.rows, m.dims.d);
      axpy(d_out2.row(0), scale, dh2.row(b));
      neural::encode_backward(m, batch.pairs[static_cast<std::size_t>(b)].second,
                              c2[static_cast<std::size_t>(b)], d_out2, *grads);
    }
  }
  return loss;
}

std::vector<double> preference_probs(const Model& m, std::span<const double> fused) {
  std::vector<double> logits(static_cast<std::size_t>(m.dims.items));
  for (int i = 0; i < m.dims.items; ++i) {
    logits[static_cast<std::size_t>(i)] = dot(fused, m.p.item_emb.row(i));
  }
  softmax_inplace(logits);
  return logits;
}

RecLossParts rec_loss(const Model& m, const RecBatch& batch, double ce_weight,
                      double kl_weight, ParamSet* grads, ClampStats* clamps) {
  const int n = static_cast<int>(batch.instances.size());
  if (n == 0) throw ArgumentError("rec_loss: empty batch");
  RecLossParts parts;
  parts.probs = Mat(n, m.dims.items);

  for (int j = 0; j < n; ++j) {
    const RecInstance& inst = batch.instances[static_cast<std::size_t>(j)];
    if (inst.gold_rows.empty()) throw ArgumentError("rec_loss: instance without gold items");
    if (!inst.soft.empty() && static_cast<int>(inst.soft.size()) != m.dims.items) {
      throw ArgumentError("rec_loss: soft label width mismatch");
    }
    const auto cache = neural::encode_forward(m, inst.ids);
    auto u = cache.out.row(0);
    const bool fuse = inst.retrieved.rows > 0;
    retrieval::FuseUserResult fr;
    std::vector<double> fused;
    if (fuse) {
      fr = retrieval::fuse_user(u, inst.retrieved, m.p.w1, batch.gamma);
      fused = fr.fused;
    } else {
      fused.assign(u.begin(), u.end());
    }

    std::vector<double> probs = preference_probs(m, fused);
    std::copy(probs.begin(), probs.end(), parts.probs.row(j).begin());

    std::vector<double> dprobs(probs.size(), 0.0);
    // CE over this row.
    double ce = 0.0;
    if (batch.binary_ce_mode) {
      for (int i = 0; i < m.dims.items; ++i) {
        const double p = probs[static_cast<std::size_t>(i)];
        const bool gold = std::find(inst.gold_rows.begin(), inst.gold_rows.end(), i) !=
                          inst.gold_rows.end();
        const double y = gold ? 1.0 : 0.0;
        const bool lo = p < kProbFloor;
        const bool hi = (1.0 - p) < kProbFloor;
        if (lo || hi) note_clamp(clamps);
        ce -= y * std::log(std::max(p, kProbFloor)) +
              (1.0 - y) * std::log(std::max(1.0 - p, kProbFloor));
        double g = 0.0;
        if (!lo) g -= y / p;
        if (!hi) g += (1.0 - y) / (1.0 - p);
        dprobs[static_cast<std::size_t>(i)] += ce_weight * g;
      }
    } else {
      for (int row : inst.gold_rows) {
        const double p = probs[static_cast<std::size_t>(row)];
        const bool lo = p < kProbFloor;
        if (lo) note_clamp(clamps);
        ce -= std::log(std::max(p, kProbFloor));
        if (!lo) dprobs[static_cast<std::size_t>(row)] += ce_weight * (-1.0 / p);
      }
    }
    parts.ce += ce;

    if (!inst.soft.empty()) {
      double kl = 0.0;
      for (int i = 0; i < m.dims.items; ++i) {
        const double q = inst.soft[static_cast<std::size_t>(i)];
        if (q <= 0.0) continue;
        const double p = probs[static_cast<std::size_t>(i)];
        const bool lo = p < kProbFloor;
        if (lo) note_clamp(clamps);
        kl += q * (std::log(q) - std::log(std::max(p, kProbFloor)));
        if (!lo) dprobs[static_cast<std::size_t>(i)] += kl_weight * (-q / p);
      }
      parts.soft_kl += kl;
    }

    if (grads != nullptr) {
      std::vector<double> dlogits(probs.size());
      softmax_backward(probs, dprobs, dlogits);
      std::vector<double> d_fused(static_cast<std::size_t>(m.dims.d), 0.0);
      for (int i = 0; i < m.dims.items; ++i) {
        const double g = dlogits[static_cast<std::size_t>(i)];
        if (g == 0.0) continue;
        axpy(d_fused, g, m.p.item_emb.row(i));
        axpy(grads->item_emb.row(i), g, std::span<const double>(fused));
      }
      Mat d_out(cache.out.rows, m.dims.d);
      if (fuse) {
        retrieval::fuse_user_backward(u, inst.retrieved, m.p.w1, batch.gamma, fr, d_fused,
                                      d_out.row(0), grads->w1);
      } else {
        axpy(d_out.row(0), 1.0, std::span<const double>(d_fused));
      }
      neural::encode_backward(m, inst.ids, cache, d_out, *grads);
    }
  }
  if (!std::isfinite(parts.ce) || !std::isfinite(parts.soft_kl)) {
    throw NumericError("rec_loss: non-finite loss");
  }
  return parts;
}

double gen_nll_loss(const Model& m, const GenBatch& batch, ParamSet* grads) {
  const int n = static_cast<int>(batch.instances.size());
  if (n == 0) throw ArgumentError("gen_nll_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;

  for (const auto& inst : batch.instances) {
    if (inst.resp_ids.empty()) throw ArgumentError("gen_nll_loss: empty response");
    if (inst.ctx_ids.empty()) throw ArgumentError("gen_nll_loss: empty context");
    const auto enc = neural::encode_forward(m, inst.ctx_ids);
    const Mat& states = enc.out;
    const bool fuse = inst.retrieved.rows > 0;
    retrieval::FusePromptResult fp;
    const Mat* prompts = &states;
    if (fuse) {
      fp = retrieval::fuse_prompt(states, inst.retrieved, m.p.w2, batch.first_position_only);
      prompts = &fp.fused;
    }
    std::vector<int> dec_ids = inst.ctx_ids;
    dec_ids.insert(dec_ids.end(), inst.resp_ids.begin(), inst.resp_ids.end());
    const auto dec = neural::decode_forward(m, *prompts, dec_ids);
    const int np = dec.n_prompt;
    const int lc = static_cast<int>(inst.ctx_ids.size());

    Mat d_states;
    if (grads != nullptr) d_states = Mat(dec.attn.out.rows, m.dims.d);
    for (std::size_t j = 0; j < inst.resp_ids.size(); ++j) {
      const int gold = inst.resp_ids[j];
      const int state_row = np + lc + static_cast<int>(j) - 1;
      auto state = dec.attn.out.row(state_row);
      std::vector<double> logits = neural::project_logits(m, state);
      if (!std::isfinite(logits[static_cast<std::size_t>(gold)])) {
        throw NumericError("gen_nll_loss: non-finite logits");
      }
      loss += inv_n * (log_sum_exp(logits) - logits[static_cast<std::size_t>(gold)]);
      if (grads != nullptr) {
        std::vector<double> dlogits = logits;
        softmax_inplace(dlogits);
        dlogits[static_cast<std::size_t>(gold)] -= 1.0;
        for (double& v : dlogits) v *= inv_n;
        auto drow = d_states.row(state_row);
        for (int dd = 0; dd < m.dims.d; ++dd) {
          auto head = m.p.out_head.row(dd);
          auto ghead = grads->out_head.row(dd);
          double acc = 0.0;
          const double sdd = state[dd];
          for (int v = 0; v < m.dims.vocab; ++v) {
            acc += head[v] * dlogits[static_cast<std::size_t>(v)];
            ghead[v] += sdd * dlogits[static_cast<std::size_t>(v)];
          }
          drow[dd] += acc;
        }
      }
    }
    if (grads != nullptr) {
      Mat d_prompts(np, m.dims.d);
      neural::decode_backward(m, dec_ids, dec, d_states, *grads, &d_prompts);
      Mat d_enc(states.rows, m.dims.d);
      if (fuse) {
        retrieval::fuse_prompt_backward(states, inst.retrieved, m.p.w2,
                                        batch.first_position_only, fp, d_prompts, d_enc,
                                        grads->w2);
      } else {
        axpy(d_enc, 1.0, d_prompts);
      }
      neural::encode_backward(m, inst.ctx_ids, enc, d_enc, *grads);
    }
  }
  if (!std::isfinite(loss)) throw NumericError("gen_nll_loss: non-finite loss");
  return loss;
}

// --- pair sampling ---------------------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> sample_contrastive_pairs(
    const std::vector<corpus::Conversation>& sim_corpus, std::size_t batch_size, Rng& rng) {
  if (batch_size < 2) throw ArgumentError("sample_contrastive_pairs: batch must be >= 2");
  std::map<std::string, std::vector<std::size_t>> by_target;
  for (std::size_t i = 0; i < sim_corpus.size(); ++i) {
    if (sim_corpus[i].target_items.empty()) continue;
    by_target[sim_corpus[i].target_items.front()].push_back(i);
  }
  std::vector<std::string> items;
  items.reserve(by_target.size());
  for (const auto& [id, rows] : by_target) items.push_back(id);
  rng.shuffle(items);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& id : items) {
    if (pairs.size() == batch_size) break;
    const auto& rows = by_target[id];
    if (rows.size() < 2) {
      log::warn("contrastive sampling: item '" + id + "' has fewer than 2 conversations, skipped");
      continue;
    }
    const std::size_t a = rng.index(rows.size());
    std::size_t b = rng.index(rows.size() - 1);
    if (b >= a) ++b;
    pairs.emplace_back(rows[a], rows[b]);
  }
  if (pairs.size() < batch_size) {
    throw ValidationError("sample_contrastive_pairs: only " + std::to_string(pairs.size()) +
                          " eligible items for batch of " + std::to_string(batch_size));
  }
  return pairs;
}

// --- gradient checking ---------------------------------------------------------------

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kQuadraticProbe: return "quadratic_probe";
    case LossKind::kDmp: return "dmp";
    case LossKind::kCca: return "cca";
    case LossKind::kRecCe: return "rec_ce";
    case LossKind::kSoftKl: return "soft_kl";
    case LossKind::kJointRec: return "joint_rec";
    case LossKind::kGenNll: return "gen_nll";
  }
  return "?";
}

namespace {

std::vector<int> random_word_ids(const Model& m, int len, Rng& rng) {
  std::vector<int> ids;
  ids.push_back(Vocabulary::kCls);
  for (int i = 1; i < len; ++i) {
    ids.push_back(5 + static_cast<int>(rng.index(static_cast<std::size_t>(m.dims.vocab - 5))));
  }
  return ids;
}

Mat random_mat(int rows, int cols, Rng& rng, double range) {
  Mat out(rows, cols);
  for (double& v : out.a) v = rng.uniform(-range, range);
  return out;
}

}  // namespace

GradCheckBatch make_gradcheck_batch(LossKind kind, const Model& m, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck.batch"));
  GradCheckBatch batch;
  switch (kind) {
    case LossKind::kQuadraticProbe:
      break;
    case LossKind::kDmp: {
      for (int s = 0; s < 4; ++s) {
        const auto ids = random_word_ids(m, 12, rng);
        MaskedSequence seq;
        seq.corrupted_ids = ids;
        std::vector<int> positions = {1 + static_cast<int>(rng.index(4)),
                                      5 + static_cast<int>(rng.index(3)),
                                      8 + static_cast<int>(rng.index(3))};
        for (int p : positions) {
          seq.masked_positions.push_back(p);
          seq.gold_tokens.push_back(ids[static_cast<std::size_t>(p)]);
          seq.corrupted_ids[static_cast<std::size_t>(p)] = Vocabulary::kMask;
        }
        batch.masked.seqs.push_back(std::move(seq));
      }
      break;
    }
    case LossKind::kCca: {
      batch.pairs.tau = 0.2;
      for (int b = 0; b < 3; ++b) {
        batch.pairs.pairs.emplace_back(random_word_ids(m, 10, rng), random_word_ids(m, 10, rng));
      }
      break;
    }
    case LossKind::kRecCe:
    case LossKind::kSoftKl:
    case LossKind::kJointRec: {
      batch.rec.gamma = 0.7;
      for (int j = 0; j < 3; ++j) {
        RecInstance inst;
        inst.ids = random_word_ids(m, 10, rng);
        inst.retrieved = random_mat(2, m.dims.d, rng, 1.0);
        inst.gold_rows = {static_cast<int>(rng.index(static_cast<std::size_t>(m.dims.items)))};
        inst.soft.resize(static_cast<std::size_t>(m.dims.items));
        double z = 0.0;
        for (double& v : inst.soft) {
          v = 0.05 + rng.uniform();
          z += v;
        }
        for (double& v : inst.soft) v /= z;
        batch.rec.instances.push_back(std::move(inst));
      }
      if (kind == LossKind::kJointRec) {
        batch.pairs.tau = 0.2;
        for (int b = 0; b < 2; ++b) {
          batch.pairs.pairs.emplace_back(random_word_ids(m, 8, rng), random_word_ids(m, 8, rng));
        }
      }
      break;
    }
    case LossKind::kGenNll: {
      for (int j = 0; j < 2; ++j) {
        GenInstance inst;
        inst.ctx_ids = random_word_ids(m, 8, rng);
        inst.resp_ids.clear();
        for (int t = 0; t < 5; ++t) {
          inst.resp_ids.push_back(
              5 + static_cast<int>(rng.index(static_cast<std::size_t>(m.dims.vocab - 5))));
        }
        inst.retrieved = random_mat(2, m.dims.d, rng, 1.0);
        batch.gen.instances.push_back(std::move(inst));
      }
      break;
    }
  }
  return batch;
}

namespace {

double eval_loss(LossKind kind, const Model& m, const GradCheckBatch& batch,
                 ParamSet* grads) {
  switch (kind) {
    case LossKind::kQuadraticProbe: {
      double loss = 0.0;
      for (const auto& f : neural::param_fields()) {
        const Mat& p = m.p.*(f.member);
        for (std::size_t i = 0; i < p.a.size(); ++i) {
          loss += p.a[i] * p.a[i];
          if (grads != nullptr) (grads->*(f.member)).a[i] += 2.0 * p.a[i];
        }
      }
      return loss;
    }
    case LossKind::kDmp:
      return dmp_loss(m, batch.masked, grads);
    case LossKind::kCca:
      return cca_loss(m, batch.pairs, grads, 1.0);
    case LossKind::kRecCe:
      return rec_loss(m, batch.rec, 1.0, 0.0, grads).ce;
    case LossKind::kSoftKl:
      return rec_loss(m, batch.rec, 0.0, 1.0, grads).soft_kl;
    case LossKind::kJointRec: {
      const auto parts = rec_loss(m, batch.rec, 1.0, batch.lambda1, grads);
      const double cca = cca_loss(m, batch.pairs, grads, batch.lambda2);
      return joint_rec_loss(parts.ce, parts.soft_kl, cca, batch.lambda1, batch.lambda2);
    }
    case LossKind::kGenNll:
      return gen_nll_loss(m, batch.gen, grads);
  }
  throw ArgumentError("unknown loss kind");
}

}  // namespace

double grad_check(LossKind kind, Model& m, const GradCheckBatch& batch, double epsilon,
                  int n_coords, std::uint64_t coord_seed) {
  ParamSet grads = neural::make_grads(m);
  const double loss = eval_loss(kind, m, batch, &grads);
  if (!std::isfinite(loss)) throw NumericError("grad_check: non-finite loss");
  Rng rng(derive_seed(coord_seed, "gradcheck.coords"));
  return neural::fd_max_rel_error(
      m,
      [&](const Model& model) -> long double {
        return detail::eval_loss_x<long double>(kind, model, batch);
      },
      grads, epsilon, n_coords, rng);
}

}  // namespace lotcrs::objectives
