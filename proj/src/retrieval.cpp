#include "lotcrs/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lotcrs/errors.hpp"
#include "lotcrs/text.hpp"

namespace lotcrs::retrieval {

using corpus::Conversation;
using neural::Model;
using neural::Vocabulary;

DenseIndex::DenseIndex(Mat vectors, std::vector<std::string> ids,
                       std::vector<std::vector<int>> payloads, PayloadKind kind,
                       std::uint64_t model_checksum)
    : vectors_(std::move(vectors)),
      ids_(std::move(ids)),
      payloads_(std::move(payloads)),
      kind_(kind),
      checksum_(model_checksum) {
  if (vectors_.rows < 1) throw ArgumentError("DenseIndex: empty index");
  if (ids_.size() != static_cast<std::size_t>(vectors_.rows) ||
      payloads_.size() != ids_.size()) {
    throw ArgumentError("DenseIndex: id/payload row mismatch");
  }
  unit_ = vectors_;
  for (int r = 0; r < unit_.rows; ++r) {
    const double n = norm(unit_.row(r));
    if (n == 0.0) {
      throw NumericError("DenseIndex: zero-norm vector for '" + ids_[static_cast<std::size_t>(r)] + "'");
    }
    for (double& v : unit_.row(r)) v /= n;
  }
}

namespace {

std::vector<int> response_payload(const corpus::Utterance& response,
                                  const corpus::ItemCatalog& catalog,
                                  const Vocabulary& vocab) {
  std::vector<std::vector<std::string>> names;
  names.reserve(catalog.size());
  for (const auto& item : catalog.items()) names.push_back(tokenize_text(item.name));
  const auto masked = replace_token_spans(response.tokens, names, kItemToken);
  std::vector<int> ids;
  ids.reserve(masked.size());
  for (const auto& tok : masked) ids.push_back(vocab.id_of(tok));
  return ids;
}

}  // namespace

DenseIndex build_index(const std::vector<Conversation>& sim_corpus, const Model& model,
                       PayloadKind kind, const corpus::ItemCatalog& catalog) {
  if (sim_corpus.empty()) throw ArgumentError("build_index: empty corpus");
  Mat vectors(static_cast<int>(sim_corpus.size()), model.dims.d);
  std::vector<std::string> ids;
  std::vector<std::vector<int>> payloads;
  ids.reserve(sim_corpus.size());
  payloads.reserve(sim_corpus.size());
  int row = 0;
  for (const auto& conv : sim_corpus) {
    auto split = corpus::split_context(conv);
    if (!split) {
      throw ValidationError("build_index: conversation '" + conv.id +
                            "' has no recommender turn");
    }
    const auto ctx_ids = neural::tokenize(split->context, model.vocab, model.dims.max_len);
    const auto encoded = neural::encode_context(model, ctx_ids);
    if (norm(encoded.cls) == 0.0) {
      throw NumericError("build_index: zero-norm representation for '" + conv.id + "'");
    }
    std::copy(encoded.cls.begin(), encoded.cls.end(), vectors.row(row).begin());
    ids.push_back(conv.id);
    if (kind == PayloadKind::kResponseRepr) {
      payloads.push_back(response_payload(split->response, catalog, model.vocab));
    } else {
      payloads.emplace_back();
    }
    ++row;
  }
  return DenseIndex(std::move(vectors), std::move(ids), std::move(payloads), kind,
                    neural::params_checksum(model));
}

RetrievalResult topk(const DenseIndex& index, std::span<const double> query, int k) {
  if (k <= 0) throw ArgumentError("topk: k must be positive");
  if (static_cast<int>(query.size()) != index.dim()) throw ArgumentError("topk: query dimension mismatch");
  const double qn = norm(query);
  if (qn == 0.0) throw NumericError("topk: zero-norm query");

  std::vector<ScoredEntry> scored;
  scored.reserve(static_cast<std::size_t>(index.size()));
  for (int r = 0; r < index.size(); ++r) {
    const double s = dot(index.unit_vector(r), query) / qn;
    scored.push_back({r, index.id(r), s});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.row < b.row;
  });
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  scored.resize(keep);
  return RetrievalResult{std::move(scored)};
}

Mat gather_vectors(const DenseIndex& index, const RetrievalResult& result) {
  Mat out(static_cast<int>(result.entries.size()), index.dim());
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    auto src = index.vector(result.entries[i].row);
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(i)).begin());
  }
  return out;
}

// --- persistence -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'O', 'T', 'I', 'D', 'X', '1', '\0'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("index file: short read");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_str(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in) {
  const auto n = get_u64(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IoError("index file: short read");
  }
  return s;
}

}  // namespace

void save_index(const DenseIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write index '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, static_cast<std::uint64_t>(index.size()));
  put_u64(out, static_cast<std::uint64_t>(index.dim()));
  put_u64(out, index.payload_kind() == PayloadKind::kUserRepr ? 0 : 1);
  put_u64(out, index.model_checksum());
  for (int r = 0; r < index.size(); ++r) {
    put_str(out, index.id(r));
    auto v = index.vector(r);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    const auto& payload = index.payload(r);
    put_u64(out, payload.size());
    for (int tok : payload) put_u64(out, static_cast<std::uint64_t>(tok));
  }
  if (!out) throw IoError("index write failed for '" + path + "'");
}

DenseIndex load_index(const std::string& path, const neural::Model* expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index '" + path + "'");
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("'" + path + "' is not a lotcrs index");
  }
  const auto n = static_cast<int>(get_u64(in));
  const auto d = static_cast<int>(get_u64(in));
  const auto kind = get_u64(in) == 0 ? PayloadKind::kUserRepr : PayloadKind::kResponseRepr;
  const std::uint64_t checksum = get_u64(in);
  if (expect != nullptr && checksum != neural::params_checksum(*expect)) {
    throw IoError("index '" + path + "' was built from a different checkpoint");
  }
  Mat vectors(n, d);
  std::vector<std::string> ids;
  std::vector<std::vector<int>> payloads;
  for (int r = 0; r < n; ++r) {
    ids.push_back(get_str(in));
    if (!in.read(reinterpret_cast<char*>(vectors.row(r).data()),
                 static_cast<std::streamsize>(static_cast<std::size_t>(d) * sizeof(double)))) {
      throw IoError("index '" + path + "': short vector read");
    }
    const auto plen = get_u64(in);
    std::vector<int> payload;
    payload.reserve(plen);
    for (std::uint64_t i = 0; i < plen; ++i) payload.push_back(static_cast<int>(get_u64(in)));
    payloads.push_back(std::move(payload));
  }
  return DenseIndex(std::move(vectors), std::move(ids), std::move(payloads), kind, checksum);
}

// --- fusion -------------------------------------------------------------------

FuseUserResult fuse_user(std::span<const double> u, const Mat& retrieved, const Mat& w1,
                         double gamma) {
  const int d = static_cast<int>(u.size());
  if (retrieved.rows < 1) throw ArgumentError("fuse_user: need at least one retrieved vector");
  if (retrieved.cols != d || w1.rows != d || w1.cols != d) {
    throw ArgumentError("fuse_user: dimension mismatch");
  }
  FuseUserResult f;
  // t_j = u^T W1 u'_j
  std::vector<double> uw(static_cast<std::size_t>(d), 0.0);
  for (int a = 0; a < d; ++a) {
    const double ua = u[static_cast<std::size_t>(a)];
    if (ua == 0.0) continue;
    auto wrow = w1.row(a);
    for (int b = 0; b < d; ++b) uw[static_cast<std::size_t>(b)] += ua * wrow[b];
  }
  f.alpha.resize(static_cast<std::size_t>(retrieved.rows));
  for (int j = 0; j < retrieved.rows; ++j) {
    f.alpha[static_cast<std::size_t>(j)] = dot(uw, retrieved.row(j));
  }
  softmax_inplace(f.alpha);
  f.fused.assign(u.begin(), u.end());
  for (int j = 0; j < retrieved.rows; ++j) {
    axpy(f.fused, gamma * f.alpha[static_cast<std::size_t>(j)], retrieved.row(j));
  }
  return f;
}

void fuse_user_backward(std::span<const double> u, const Mat& retrieved, const Mat& w1,
                        double gamma, const FuseUserResult& f,
                        std::span<const double> d_fused, std::span<double> du, Mat& dw1) {
  const int d = static_cast<int>(u.size());
  const int k = retrieved.rows;
  axpy(du, 1.0, d_fused);
  std::vector<double> dalpha(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    dalpha[static_cast<std::size_t>(j)] = gamma * dot(d_fused, retrieved.row(j));
  }
  std::vector<double> dt(static_cast<std::size_t>(k));
  softmax_backward(f.alpha, dalpha, dt);
  // t_j = u^T W1 u'_j: dt flows into u and W1.
  std::vector<double> dt_r(static_cast<std::size_t>(d), 0.0);  // sum_j dt_j u'_j
  for (int j = 0; j < k; ++j) {
    axpy(dt_r, dt[static_cast<std::size_t>(j)], retrieved.row(j));
  }
  for (int a = 0; a < d; ++a) {
    du[static_cast<std::size_t>(a)] += dot(w1.row(a), dt_r);
    const double ua = u[static_cast<std::size_t>(a)];
    if (ua != 0.0) axpy(dw1.row(a), ua, std::span<const double>(dt_r));
  }
}

FusePromptResult fuse_prompt(const Mat& states, const Mat& retrieved, const Mat& w2,
                             bool first_position_only) {
  if (retrieved.rows < 1) throw ArgumentError("fuse_prompt: need at least one retrieved vector");
  if (retrieved.cols != states.cols || w2.rows != states.cols || w2.cols != states.cols) {
    throw ArgumentError("fuse_prompt: dimension mismatch");
  }
  FusePromptResult f;
  f.fused = states;
  f.beta = Mat(states.rows, retrieved.rows);
  const int last = first_position_only ? 1 : states.rows;
  for (int p = 0; p < last; ++p) {
    auto one = fuse_user(states.row(p), retrieved, w2, 1.0);
    std::copy(one.fused.begin(), one.fused.end(), f.fused.row(p).begin());
    std::copy(one.alpha.begin(), one.alpha.end(), f.beta.row(p).begin());
  }
  return f;
}

void fuse_prompt_backward(const Mat& states, const Mat& retrieved, const Mat& w2,
                          bool first_position_only, const FusePromptResult& f,
                          const Mat& d_fused, Mat& d_states, Mat& dw2) {
  const int last = first_position_only ? 1 : states.rows;
  for (int p = 0; p < last; ++p) {
    FuseUserResult row;
    row.alpha.assign(f.beta.row(p).begin(), f.beta.row(p).end());
    fuse_user_backward(states.row(p), retrieved, w2, 1.0, row, d_fused.row(p),
                       d_states.row(p), dw2);
  }
  for (int p = last; p < states.rows; ++p) {
    axpy(d_states.row(p), 1.0, d_fused.row(p));
  }
}

}  // namespace lotcrs::retrieval
