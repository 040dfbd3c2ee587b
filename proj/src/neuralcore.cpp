#include "lotcrs/neuralcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "lotcrs/errors.hpp"
#include "lotcrs/text.hpp"

namespace lotcrs::neural {

int Vocabulary::id_of(const std::string& tok) const {
  auto it = ids.find(tok);
  return it == ids.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) throw ArgumentError("token id " + std::to_string(id) + " out of range");
  return tokens[static_cast<std::size_t>(id)];
}

Vocabulary build_vocabulary(const std::vector<std::span<const corpus::Conversation>>& corpora) {
  std::set<std::string> words;
  for (const auto& span : corpora) {
    for (const auto& conv : span) {
      for (const auto& turn : conv.turns) {
        for (const auto& tok : turn.tokens) {
          if (!is_special_token(tok)) words.insert(tok);
        }
        for (const auto& attr : turn.attributes) {
          for (const auto& tok : tokenize_text(attr)) {
            if (!is_special_token(tok)) words.insert(tok);
          }
        }
      }
    }
  }
  Vocabulary v;
  v.tokens = {kClsToken, kSepToken, kMaskToken, kItemToken, kUnkToken};
  v.tokens.insert(v.tokens.end(), words.begin(), words.end());
  for (std::size_t i = 0; i < v.tokens.size(); ++i) {
    v.ids.emplace(v.tokens[i], static_cast<int>(i));
  }
  return v;
}

Vocabulary build_vocabulary(const std::vector<corpus::Conversation>& convs) {
  return build_vocabulary(std::vector<std::span<const corpus::Conversation>>{
      std::span<const corpus::Conversation>(convs)});
}

std::span<const NamedParam> param_fields() {
  static const NamedParam kFields[] = {
      {"tok_emb", &ParamSet::tok_emb},   {"enc_wq", &ParamSet::enc_wq},
      {"enc_wk", &ParamSet::enc_wk},     {"enc_wv", &ParamSet::enc_wv},
      {"enc_wo", &ParamSet::enc_wo},     {"dec_wq", &ParamSet::dec_wq},
      {"dec_wk", &ParamSet::dec_wk},     {"dec_wv", &ParamSet::dec_wv},
      {"dec_wo", &ParamSet::dec_wo},     {"out_head", &ParamSet::out_head},
      {"item_emb", &ParamSet::item_emb}, {"w1", &ParamSet::w1},
      {"w2", &ParamSet::w2},
  };
  return kFields;
}

Mat sinusoidal_positions(int length, int d) {
  Mat pos(length, d);
  for (int p = 0; p < length; ++p) {
    for (int j = 0; j < d; ++j) {
      const int pair = j - (j % 2);
      const double rate = std::pow(10000.0, static_cast<double>(pair) / d);
      const double angle = static_cast<double>(p) / rate;
      pos(p, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pos;
}

namespace {

void shape_params(ParamSet& p, const ModelDims& dims) {
  p.tok_emb = Mat(dims.vocab, dims.d);
  for (Mat ParamSet::* m : {&ParamSet::enc_wq, &ParamSet::enc_wk, &ParamSet::enc_wv,
                            &ParamSet::enc_wo, &ParamSet::dec_wq, &ParamSet::dec_wk,
                            &ParamSet::dec_wv, &ParamSet::dec_wo, &ParamSet::w1,
                            &ParamSet::w2}) {
    p.*m = Mat(dims.d, dims.d);
  }
  p.out_head = Mat(dims.d, dims.vocab);
  p.item_emb = Mat(dims.items, dims.d);
}

}  // namespace

Model make_model(const ModelDims& dims, Vocabulary vocab,
                 std::vector<std::string> item_ids, std::uint64_t init_seed,
                 double init_range) {
  if (dims.d <= 0 || dims.vocab <= 0) throw ArgumentError("make_model: bad dimensions");
  if (dims.vocab != vocab.size()) throw ArgumentError("make_model: vocab size mismatch");
  if (dims.items != static_cast<int>(item_ids.size())) {
    throw ArgumentError("make_model: item count mismatch");
  }
  Model m;
  m.dims = dims;
  m.vocab = std::move(vocab);
  m.item_ids = std::move(item_ids);
  shape_params(m.p, dims);
  Rng rng(derive_seed(init_seed, "init"));
  for (const auto& f : param_fields()) {
    Mat& mat = m.p.*(f.member);
    for (double& v : mat.a) v = rng.uniform(-init_range, init_range);
  }
  m.pos = sinusoidal_positions(dims.dec_max_len, dims.d);
  return m;
}

ParamSet make_grads(const Model& m) {
  ParamSet g;
  shape_params(g, m.dims);
  return g;
}

void zero_grads(ParamSet& g) {
  for (const auto& f : param_fields()) (g.*(f.member)).zero();
}

std::vector<int> tokenize(const corpus::Conversation& conv, const Vocabulary& vocab,
                          int max_len) {
  if (max_len < 2) throw ArgumentError("tokenize: max_len must be at least 2");
  std::vector<int> body;
  for (const auto& turn : conv.turns) {
    for (const auto& tok : turn.tokens) body.push_back(vocab.id_of(tok));
    body.push_back(Vocabulary::kSep);
  }
  std::vector<int> ids;
  ids.push_back(Vocabulary::kCls);
  const std::size_t keep = static_cast<std::size_t>(max_len - 1);
  if (body.size() > keep) {
    ids.insert(ids.end(), body.end() - static_cast<std::ptrdiff_t>(keep), body.end());
  } else {
    ids.insert(ids.end(), body.begin(), body.end());
  }
  return ids;
}

namespace {

constexpr double kMaskedScore = -1e30;

// out = x + softmax(x Wq (x Wk)^T / sqrt(d)) x Wv Wo, optionally causal.
AttnCache attention_forward(const Mat& x, const Mat& wq, const Mat& wk, const Mat& wv,
                            const Mat& wo, bool causal) {
  AttnCache c;
  c.x = x;
  c.q = matmul(x, wq);
  c.k = matmul(x, wk);
  c.v = matmul(x, wv);
  const int n = x.rows;
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols));
  c.attn = Mat(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      c.attn(i, j) = (causal && j > i) ? kMaskedScore : scale * dot(c.q.row(i), c.k.row(j));
    }
    softmax_inplace(c.attn.row(i));
    if (causal) {
      // exp(kMaskedScore - max) underflows to exactly 0; make it explicit.
      for (int j = i + 1; j < n; ++j) c.attn(i, j) = 0.0;
    }
  }
  c.z = matmul(c.attn, c.v);
  c.out = matmul(c.z, wo);
  axpy(c.out, 1.0, x);
  return c;
}

// Accumulates weight gradients and returns d_loss/d_x (residual included).
Mat attention_backward(const AttnCache& c, const Mat& wq, const Mat& wk, const Mat& wv,
                       const Mat& wo, const Mat& d_out, Mat& dwq, Mat& dwk, Mat& dwv,
                       Mat& dwo) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.x.cols));
  Mat dx = d_out;  // residual path
  Mat dz = matmul_nt(d_out, wo);
  axpy(dwo, 1.0, matmul_tn(c.z, d_out));
  Mat dattn = matmul_nt(dz, c.v);
  Mat dv = matmul_tn(c.attn, dz);
  Mat ds(c.attn.rows, c.attn.cols);
  for (int i = 0; i < c.attn.rows; ++i) {
    softmax_backward(c.attn.row(i), dattn.row(i), ds.row(i));
  }
  for (double& v : ds.a) v *= scale;
  Mat dq = matmul(ds, c.k);
  Mat dk = matmul_tn(ds, c.q);
  axpy(dx, 1.0, matmul_nt(dq, wq));
  axpy(dx, 1.0, matmul_nt(dk, wk));
  axpy(dx, 1.0, matmul_nt(dv, wv));
  axpy(dwq, 1.0, matmul_tn(c.x, dq));
  axpy(dwk, 1.0, matmul_tn(c.x, dk));
  axpy(dwv, 1.0, matmul_tn(c.x, dv));
  return dx;
}

void check_ids(const Model& m, const std::vector<int>& ids) {
  for (int id : ids) {
    if (id < 0 || id >= m.dims.vocab) {
      throw ArgumentError("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

}  // namespace

AttnCache encode_forward(const Model& m, const std::vector<int>& ids) {
  check_ids(m, ids);
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw ArgumentError("encode_forward: empty sequence");
  if (n > m.pos.rows) throw ArgumentError("encode_forward: sequence longer than position table");
  Mat x(n, m.dims.d);
  for (int i = 0; i < n; ++i) {
    auto xi = x.row(i);
    auto emb = m.p.tok_emb.row(ids[static_cast<std::size_t>(i)]);
    auto pos = m.pos.row(i);
    for (int j = 0; j < m.dims.d; ++j) xi[j] = emb[j] + pos[j];
  }
  return attention_forward(x, m.p.enc_wq, m.p.enc_wk, m.p.enc_wv, m.p.enc_wo, false);
}

EncodedContext encode_context(const Model& m, const std::vector<int>& ids) {
  AttnCache c = encode_forward(m, ids);
  EncodedContext out;
  out.cls.assign(c.out.row(0).begin(), c.out.row(0).end());
  out.token_states = std::move(c.out);
  return out;
}

void encode_backward(const Model& m, const std::vector<int>& ids, const AttnCache& c,
                     const Mat& d_out, ParamSet& grads) {
  Mat dx = attention_backward(c, m.p.enc_wq, m.p.enc_wk, m.p.enc_wv, m.p.enc_wo, d_out,
                              grads.enc_wq, grads.enc_wk, grads.enc_wv, grads.enc_wo);
  for (int i = 0; i < dx.rows; ++i) {
    axpy(grads.tok_emb.row(ids[static_cast<std::size_t>(i)]), 1.0, dx.row(i));
  }
}

DecCache decode_forward(const Model& m, const Mat& prompts, const std::vector<int>& ids) {
  check_ids(m, ids);
  const int np = prompts.rows;
  const int nt = static_cast<int>(ids.size());
  const int n = np + nt;
  if (n == 0) throw ArgumentError("decode_forward: empty input");
  if (n > m.dims.dec_max_len) {
    throw ArgumentError("decode_forward: prompt+token length " + std::to_string(n) +
                        " exceeds decoder max " + std::to_string(m.dims.dec_max_len));
  }
  if (np > 0 && prompts.cols != m.dims.d) throw ArgumentError("decode_forward: prompt width mismatch");
  Mat x(n, m.dims.d);
  for (int i = 0; i < n; ++i) {
    auto xi = x.row(i);
    auto pos = m.pos.row(i);
    if (i < np) {
      auto pr = prompts.row(i);
      for (int j = 0; j < m.dims.d; ++j) xi[j] = pr[j] + pos[j];
    } else {
      auto emb = m.p.tok_emb.row(ids[static_cast<std::size_t>(i - np)]);
      for (int j = 0; j < m.dims.d; ++j) xi[j] = emb[j] + pos[j];
    }
  }
  DecCache c;
  c.n_prompt = np;
  c.attn = attention_forward(x, m.p.dec_wq, m.p.dec_wk, m.p.dec_wv, m.p.dec_wo, true);
  return c;
}

void decode_backward(const Model& m, const std::vector<int>& ids, const DecCache& c,
                     const Mat& d_states, ParamSet& grads, Mat* d_prompts) {
  Mat dx = attention_backward(c.attn, m.p.dec_wq, m.p.dec_wk, m.p.dec_wv, m.p.dec_wo,
                              d_states, grads.dec_wq, grads.dec_wk, grads.dec_wv,
                              grads.dec_wo);
  for (int i = 0; i < dx.rows; ++i) {
    if (i < c.n_prompt) {
      if (d_prompts != nullptr) axpy(d_prompts->row(i), 1.0, dx.row(i));
    } else {
      axpy(grads.tok_emb.row(ids[static_cast<std::size_t>(i - c.n_prompt)]), 1.0, dx.row(i));
    }
  }
}

Mat decode_logits(const Model& m, const Mat& prompts, const std::vector<int>& ids) {
  if (ids.empty()) throw ArgumentError("decode_logits: empty token sequence");
  DecCache c = decode_forward(m, prompts, ids);
  const int nt = static_cast<int>(ids.size());
  Mat logits(nt, m.dims.vocab);
  for (int j = 0; j < nt; ++j) {
    auto state = c.attn.out.row(c.n_prompt + j);
    auto out = logits.row(j);
    for (int v = 0; v < m.dims.vocab; ++v) out[v] = 0.0;
    for (int dd = 0; dd < m.dims.d; ++dd) {
      const double s = state[dd];
      if (s == 0.0) continue;
      auto head = m.p.out_head.row(dd);
      for (int v = 0; v < m.dims.vocab; ++v) out[v] += s * head[v];
    }
  }
  return logits;
}

std::vector<double> project_logits(const Model& m, std::span<const double> state) {
  std::vector<double> logits(static_cast<std::size_t>(m.dims.vocab), 0.0);
  for (int dd = 0; dd < m.dims.d; ++dd) {
    const double s = state[static_cast<std::size_t>(dd)];
    if (s == 0.0) continue;
    auto head = m.p.out_head.row(dd);
    for (int v = 0; v < m.dims.vocab; ++v) logits[static_cast<std::size_t>(v)] += s * head[v];
  }
  return logits;
}

AdamState make_adam(const Model& m) {
  AdamState st;
  shape_params(st.m, m.dims);
  shape_params(st.v, m.dims);
  return st;
}

void adam_step(Model& model, const ParamSet& grads, AdamState& st, const AdamConfig& cfg) {
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (const auto& f : param_fields()) {
    Mat& p = model.p.*(f.member);
    const Mat& g = grads.*(f.member);
    Mat& mm = st.m.*(f.member);
    Mat& vv = st.v.*(f.member);
    for (std::size_t i = 0; i < p.a.size(); ++i) {
      mm.a[i] = cfg.beta1 * mm.a[i] + (1.0 - cfg.beta1) * g.a[i];
      vv.a[i] = cfg.beta2 * vv.a[i] + (1.0 - cfg.beta2) * g.a[i] * g.a[i];
      const double mhat = mm.a[i] / bc1;
      const double vhat = vv.a[i] / bc2;
      p.a[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    if (!all_finite(p)) {
      throw NumericError(std::string("non-finite values in ") + f.name + " after update");
    }
  }
}

std::uint64_t params_checksum(const Model& m) {
  std::uint64_t h = fnv1a64("lotcrs-params");
  h = fnv1a64(&m.dims, sizeof(m.dims), h);
  for (const auto& f : param_fields()) {
    const Mat& mat = m.p.*(f.member);
    h = fnv1a64(mat.a.data(), mat.a.size() * sizeof(double), h);
  }
  return h;
}

// --- checkpoint io ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'O', 'T', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint: short read");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint: short read");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string get_str(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw IoError("checkpoint: short read");
  return s;
}

}  // namespace

void save_checkpoint(const CheckpointData& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  put_str(out, ckpt.stage);
  put_str(out, ckpt.config_json);
  const auto& m = ckpt.model;
  put_u32(out, static_cast<std::uint32_t>(m.dims.d));
  put_u32(out, static_cast<std::uint32_t>(m.dims.vocab));
  put_u32(out, static_cast<std::uint32_t>(m.dims.items));
  put_u32(out, static_cast<std::uint32_t>(m.dims.max_len));
  put_u32(out, static_cast<std::uint32_t>(m.dims.dec_max_len));
  put_u32(out, static_cast<std::uint32_t>(m.vocab.tokens.size()));
  for (const auto& t : m.vocab.tokens) put_str(out, t);
  put_u32(out, static_cast<std::uint32_t>(m.item_ids.size()));
  for (const auto& id : m.item_ids) put_str(out, id);
  put_u32(out, static_cast<std::uint32_t>(param_fields().size()));
  for (const auto& f : param_fields()) {
    const Mat& mat = m.p.*(f.member);
    put_str(out, f.name);
    put_u32(out, static_cast<std::uint32_t>(mat.rows));
    put_u32(out, static_cast<std::uint32_t>(mat.cols));
    out.write(reinterpret_cast<const char*>(mat.a.data()),
              static_cast<std::streamsize>(mat.a.size() * sizeof(double)));
  }
  put_u64(out, params_checksum(m));
  if (!out) throw IoError("checkpoint write failed for '" + path + "'");
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("'" + path + "' is not a lotcrs checkpoint");
  }
  CheckpointData ckpt;
  ckpt.stage = get_str(in);
  ckpt.config_json = get_str(in);
  Model& m = ckpt.model;
  m.dims.d = static_cast<int>(get_u32(in));
  m.dims.vocab = static_cast<int>(get_u32(in));
  m.dims.items = static_cast<int>(get_u32(in));
  m.dims.max_len = static_cast<int>(get_u32(in));
  m.dims.dec_max_len = static_cast<int>(get_u32(in));
  const std::uint32_t n_tokens = get_u32(in);
  m.vocab.tokens.reserve(n_tokens);
  for (std::uint32_t i = 0; i < n_tokens; ++i) m.vocab.tokens.push_back(get_str(in));
  for (std::size_t i = 0; i < m.vocab.tokens.size(); ++i) {
    m.vocab.ids.emplace(m.vocab.tokens[i], static_cast<int>(i));
  }
  const std::uint32_t n_items = get_u32(in);
  for (std::uint32_t i = 0; i < n_items; ++i) m.item_ids.push_back(get_str(in));
  if (m.dims.vocab != m.vocab.size() || m.dims.items != static_cast<int>(m.item_ids.size())) {
    throw IoError("checkpoint '" + path + "': header/vocabulary mismatch");
  }
  const std::uint32_t n_params = get_u32(in);
  if (n_params != param_fields().size()) {
    throw IoError("checkpoint '" + path + "': unexpected parameter count");
  }
  shape_params(m.p, m.dims);
  for (const auto& f : param_fields()) {
    const std::string name = get_str(in);
    if (name != f.name) throw IoError("checkpoint '" + path + "': parameter order mismatch");
    const int rows = static_cast<int>(get_u32(in));
    const int cols = static_cast<int>(get_u32(in));
    Mat& mat = m.p.*(f.member);
    if (rows != mat.rows || cols != mat.cols) {
      throw IoError("checkpoint '" + path + "': shape mismatch for " + name);
    }
    if (!in.read(reinterpret_cast<char*>(mat.a.data()),
                 static_cast<std::streamsize>(mat.a.size() * sizeof(double)))) {
      throw IoError("checkpoint '" + path + "': short read in " + name);
    }
  }
  const std::uint64_t stored = get_u64(in);
  m.pos = sinusoidal_positions(m.dims.dec_max_len, m.dims.d);
  if (stored != params_checksum(m)) {
    throw IoError("checkpoint '" + path + "': checksum mismatch");
  }
  return ckpt;
}

double fd_max_rel_error(Model& m, const std::function<long double(const Model&)>& loss,
                        const ParamSet& analytic, double epsilon, int n_coords,
                        Rng& rng) {
  const auto fields = param_fields();
  std::size_t total = 0;
  for (std::size_t fi = 0; fi < fields.size(); ++fi) {
    total += (m.p.*(fields[fi].member)).a.size();
  }
  double max_rel = 0.0;
  for (int c = 0; c < n_coords; ++c) {
    std::size_t flat = rng.index(total);
    std::size_t fi = 0;
    while (flat >= (m.p.*(fields[fi].member)).a.size()) {
      flat -= (m.p.*(fields[fi].member)).a.size();
      ++fi;
    }
    double& theta = (m.p.*(fields[fi].member)).a[flat];
    const double g = (analytic.*(fields[fi].member)).a[flat];
    const double saved = theta;
    theta = saved + epsilon;
    const long double lp = loss(m);
    theta = saved - epsilon;
    const long double lm = loss(m);
    theta = saved;
    if (!std::isfinite(static_cast<double>(lp)) || !std::isfinite(static_cast<double>(lm))) {
      throw NumericError("fd_max_rel_error: non-finite loss");
    }
    const double fd = static_cast<double>((lp - lm) / (2.0L * static_cast<long double>(epsilon)));
    const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace lotcrs::neural
