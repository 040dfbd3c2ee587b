#include "lotcrs/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "lotcrs/errors.hpp"
#include "lotcrs/logging.hpp"
#include "lotcrs/text.hpp"

namespace lotcrs::pipeline {

using corpus::Conversation;
using corpus::ItemCatalog;
using neural::CheckpointData;
using neural::Model;
using nlohmann::json;

// --- config -------------------------------------------------------------------

void TrainConfig::validate() const {
  if (d <= 0) throw ArgumentError("config: d must be positive");
  if (max_len < 2 || dec_max_len < 2) throw ArgumentError("config: sequence caps too small");
  if (lr_pretrain <= 0 || lr_teacher <= 0 || lr_rec <= 0 || lr_gen <= 0) {
    throw ArgumentError("config: learning rates must be positive");
  }
  if (batch_pretrain < 2 || batch_rec < 2 || batch_gen < 2) {
    throw ArgumentError("config: batch sizes must be at least 2");
  }
  if (lambda1 < 0 || lambda2 < 0) throw ArgumentError("config: lambda weights must be non-negative");
  if (mask_rate <= 0.0 || mask_rate > 1.0) throw ArgumentError("config: mask_rate must lie in (0,1]");
  if (tau <= 0.0) throw ArgumentError("config: tau must be positive");
  if (retrieval_k < 0) throw ArgumentError("config: retrieval_k must be non-negative");
  if (tail_threshold < 1) throw ArgumentError("config: tail_threshold must be positive");
  if (tfidf_k < 1) throw ArgumentError("config: tfidf_k must be positive");
  if (target_freq < 1) throw ArgumentError("config: target_freq must be positive");
  if (gen_max_new_tokens < 1) throw ArgumentError("config: gen_max_new_tokens must be positive");
}

json TrainConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["d"] = d;
  j["max_len"] = max_len;
  j["dec_max_len"] = dec_max_len;
  j["init_range"] = init_range;
  j["epochs_pretrain"] = epochs_pretrain;
  j["epochs_teacher"] = epochs_teacher;
  j["epochs_rec"] = epochs_rec;
  j["epochs_gen"] = epochs_gen;
  j["batch_pretrain"] = batch_pretrain;
  j["batch_rec"] = batch_rec;
  j["batch_gen"] = batch_gen;
  j["lr_pretrain"] = lr_pretrain;
  j["lr_teacher"] = lr_teacher;
  j["lr_rec"] = lr_rec;
  j["lr_gen"] = lr_gen;
  j["lambda1"] = lambda1;
  j["lambda2"] = lambda2;
  j["gamma"] = gamma;
  j["retrieval_k"] = retrieval_k;
  j["mask_rate"] = mask_rate;
  j["tau"] = tau;
  j["cca_include_positive"] = cca_include_positive;
  j["rec_binary_ce"] = rec_binary_ce;
  j["prompt_first_position_only"] = prompt_first_position_only;
  j["tail_threshold"] = tail_threshold;
  j["tfidf_k"] = tfidf_k;
  j["target_freq"] = target_freq;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["adam_eps"] = adam_eps;
  j["gen_max_new_tokens"] = gen_max_new_tokens;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig cfg;
  const json defaults = cfg.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) {
      throw ArgumentError("config: unknown key '" + key + "'");
    }
    (void)value;
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.d = j.value("d", cfg.d);
  cfg.max_len = j.value("max_len", cfg.max_len);
  cfg.dec_max_len = j.value("dec_max_len", cfg.dec_max_len);
  cfg.init_range = j.value("init_range", cfg.init_range);
  cfg.epochs_pretrain = j.value("epochs_pretrain", cfg.epochs_pretrain);
  cfg.epochs_teacher = j.value("epochs_teacher", cfg.epochs_teacher);
  cfg.epochs_rec = j.value("epochs_rec", cfg.epochs_rec);
  cfg.epochs_gen = j.value("epochs_gen", cfg.epochs_gen);
  cfg.batch_pretrain = j.value("batch_pretrain", cfg.batch_pretrain);
  cfg.batch_rec = j.value("batch_rec", cfg.batch_rec);
  cfg.batch_gen = j.value("batch_gen", cfg.batch_gen);
  cfg.lr_pretrain = j.value("lr_pretrain", cfg.lr_pretrain);
  cfg.lr_teacher = j.value("lr_teacher", cfg.lr_teacher);
  cfg.lr_rec = j.value("lr_rec", cfg.lr_rec);
  cfg.lr_gen = j.value("lr_gen", cfg.lr_gen);
  cfg.lambda1 = j.value("lambda1", cfg.lambda1);
  cfg.lambda2 = j.value("lambda2", cfg.lambda2);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.retrieval_k = j.value("retrieval_k", cfg.retrieval_k);
  cfg.mask_rate = j.value("mask_rate", cfg.mask_rate);
  cfg.tau = j.value("tau", cfg.tau);
  cfg.cca_include_positive = j.value("cca_include_positive", cfg.cca_include_positive);
  cfg.rec_binary_ce = j.value("rec_binary_ce", cfg.rec_binary_ce);
  cfg.prompt_first_position_only =
      j.value("prompt_first_position_only", cfg.prompt_first_position_only);
  cfg.tail_threshold = j.value("tail_threshold", cfg.tail_threshold);
  cfg.tfidf_k = j.value("tfidf_k", cfg.tfidf_k);
  cfg.target_freq = j.value("target_freq", cfg.target_freq);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
  cfg.gen_max_new_tokens = j.value("gen_max_new_tokens", cfg.gen_max_new_tokens);
  cfg.validate();
  return cfg;
}

std::uint64_t TrainConfig::fingerprint() const { return fnv1a64(to_json().dump()); }

void write_metrics(const MetricLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics '" + path + "'");
  for (const auto& row : log) {
    json j;
    j["epoch"] = row.epoch;
    j["loss_name"] = row.name;
    j["value"] = row.value;
    out << j.dump() << "\n";
  }
}

// --- shared helpers -------------------------------------------------------------

namespace {

std::vector<std::string> catalog_ids(const ItemCatalog& catalog) {
  std::vector<std::string> ids;
  ids.reserve(catalog.size());
  for (const auto& item : catalog.items()) ids.push_back(item.id);
  return ids;
}

neural::ModelDims dims_for(const TrainConfig& cfg, int vocab, int items) {
  neural::ModelDims dims;
  dims.d = cfg.d;
  dims.vocab = vocab;
  dims.items = items;
  dims.max_len = cfg.max_len;
  dims.dec_max_len = cfg.dec_max_len;
  return dims;
}

neural::AdamConfig adam_for(const TrainConfig& cfg, double lr) {
  neural::AdamConfig a;
  a.lr = lr;
  a.beta1 = cfg.adam_beta1;
  a.beta2 = cfg.adam_beta2;
  a.eps = cfg.adam_eps;
  return a;
}

// Instance-level view shared by the stages.
struct Instance {
  Conversation context;
  corpus::Utterance response;
  std::vector<int> gold_rows;
};

std::vector<Instance> build_instances(const std::vector<Conversation>& convs,
                                      const std::vector<std::string>& item_ids) {
  std::map<std::string, int> row_of;
  for (std::size_t i = 0; i < item_ids.size(); ++i) row_of[item_ids[i]] = static_cast<int>(i);
  std::vector<Instance> out;
  for (const auto& conv : convs) {
    auto split = corpus::split_context(conv);
    if (!split || conv.target_items.empty()) {
      log::warn("conversation '" + conv.id + "' yields no training instance, skipped");
      continue;
    }
    Instance inst;
    inst.context = std::move(split->context);
    inst.response = std::move(split->response);
    for (const auto& id : conv.target_items) {
      auto it = row_of.find(id);
      if (it == row_of.end()) {
        throw ValidationError("conversation '" + conv.id + "' targets unknown item '" + id + "'");
      }
      inst.gold_rows.push_back(it->second);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

objectives::PairBatch make_pair_batch(
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
    const std::vector<std::vector<int>>& ctx_ids, double tau, bool include_positive) {
  objectives::PairBatch batch;
  batch.tau = tau;
  batch.include_positive = include_positive;
  for (const auto& [a, b] : pairs) {
    batch.pairs.emplace_back(ctx_ids[a], ctx_ids[b]);
  }
  return batch;
}

std::size_t eligible_pair_items(const std::vector<Conversation>& corpus_convs) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : corpus_convs) {
    if (!c.target_items.empty()) ++counts[c.target_items.front()];
  }
  std::size_t eligible = 0;
  for (const auto& [id, n] : counts) {
    if (n >= 2) ++eligible;
  }
  return eligible;
}

}  // namespace

// --- pre-training ----------------------------------------------------------------

StageResult pretrain(const std::vector<Conversation>& sim_corpus, const ItemCatalog& catalog,
                     const TrainConfig& cfg, const std::vector<Conversation>* extra_vocab) {
  cfg.validate();
  if (sim_corpus.empty()) throw ArgumentError("pretrain: empty simulated corpus");

  std::vector<std::span<const Conversation>> corpora = {sim_corpus};
  if (extra_vocab != nullptr) corpora.push_back(*extra_vocab);
  auto vocab = neural::build_vocabulary(corpora);

  Model model = make_model(dims_for(cfg, vocab.size(), static_cast<int>(catalog.size())),
                           std::move(vocab), catalog_ids(catalog),
                           derive_seed(cfg.seed, "pretrain.init"), cfg.init_range);

  // Precompute the token views used every epoch.
  const std::size_t n = sim_corpus.size();
  std::vector<std::vector<int>> full_ids(n), ctx_ids(n), eligible(n);
  for (std::size_t i = 0; i < n; ++i) {
    full_ids[i] = neural::tokenize(sim_corpus[i], model.vocab, model.dims.max_len);
    auto split = corpus::split_context(sim_corpus[i]);
    if (!split) throw ValidationError("pretrain: conversation '" + sim_corpus[i].id + "' has no recommendation");
    ctx_ids[i] = neural::tokenize(split->context, model.vocab, model.dims.max_len);
    const auto tokens = objectives::item_attr_tokens(sim_corpus[i], catalog);
    eligible[i] = objectives::eligible_positions(full_ids[i], model.vocab, tokens);
    if (eligible[i].empty()) {
      throw ValidationError("pretrain: conversation '" + sim_corpus[i].id +
                            "' has no item or attribute tokens to mask");
    }
  }

  const std::size_t pair_budget = eligible_pair_items(sim_corpus);
  if (pair_budget < 2) {
    throw ValidationError("pretrain: contrastive pairing needs >= 2 items with >= 2 conversations");
  }
  const std::size_t cca_batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_pretrain), pair_budget);

  auto adam = neural::make_adam(model);
  const auto adam_cfg = adam_for(cfg, cfg.lr_pretrain);
  auto grads = neural::make_grads(model);
  MetricLog metrics;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs_pretrain; ++epoch) {
    auto shuffle_rng = derive_rng(cfg.seed, "pretrain.shuffle", static_cast<std::uint64_t>(epoch));
    auto mask_rng = derive_rng(cfg.seed, "pretrain.mask", static_cast<std::uint64_t>(epoch));
    auto pair_rng = derive_rng(cfg.seed, "pretrain.pairs", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double dmp_sum = 0.0, cca_sum = 0.0;
    int steps = 0;
    for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(cfg.batch_pretrain)) {
      const std::size_t end = std::min(n, at + static_cast<std::size_t>(cfg.batch_pretrain));
      objectives::MaskedBatch masked;
      for (std::size_t i = at; i < end; ++i) {
        const std::size_t c = order[i];
        masked.seqs.push_back(
            objectives::mask_tokens(full_ids[c], eligible[c], cfg.mask_rate, mask_rng));
      }
      const auto pair_rows = objectives::sample_contrastive_pairs(sim_corpus, cca_batch, pair_rng);
      const auto pair_batch =
          make_pair_batch(pair_rows, ctx_ids, cfg.tau, cfg.cca_include_positive);

      neural::zero_grads(grads);
      const double dmp = objectives::dmp_loss(model, masked, &grads);
      const double cca = objectives::cca_loss(model, pair_batch, &grads, 1.0);
      neural::adam_step(model, grads, adam, adam_cfg);
      dmp_sum += dmp;
      cca_sum += cca;
      ++steps;
    }
    metrics.push_back({epoch, "dmp", dmp_sum / steps});
    metrics.push_back({epoch, "cca", cca_sum / steps});
    metrics.push_back({epoch, "total", (dmp_sum + cca_sum) / steps});
  }

  StageResult result;
  result.ckpt = CheckpointData{std::move(model), "pretrained", cfg.to_json().dump()};
  result.metrics = std::move(metrics);
  return result;
}

// --- teacher --------------------------------------------------------------------

StageResult train_teacher(const std::vector<Conversation>& sim_corpus,
                          const ItemCatalog& catalog, const TrainConfig& cfg) {
  cfg.validate();
  if (sim_corpus.empty()) throw ArgumentError("train_teacher: empty simulated corpus");
  auto vocab = neural::build_vocabulary(sim_corpus);
  Model model = make_model(dims_for(cfg, vocab.size(), static_cast<int>(catalog.size())),
                           std::move(vocab), catalog_ids(catalog),
                           derive_seed(cfg.seed, "teacher.init"), cfg.init_range);

  const auto instances = build_instances(sim_corpus, model.item_ids);
  if (instances.empty()) throw ValidationError("train_teacher: no usable instances");
  std::vector<std::vector<int>> ctx_ids(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    ctx_ids[i] = neural::tokenize(instances[i].context, model.vocab, model.dims.max_len);
  }

  auto adam = neural::make_adam(model);
  const auto adam_cfg = adam_for(cfg, cfg.lr_teacher);
  auto grads = neural::make_grads(model);
  MetricLog metrics;

  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs_teacher; ++epoch) {
    auto shuffle_rng = derive_rng(cfg.seed, "teacher.shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    double ce_sum = 0.0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_rec)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_rec));
      objectives::RecBatch batch;
      batch.gamma = 0.0;
      batch.binary_ce_mode = false;  // plain softmax CE for the teacher
      for (std::size_t i = at; i < end; ++i) {
        objectives::RecInstance inst;
        inst.ids = ctx_ids[order[i]];
        inst.gold_rows = instances[order[i]].gold_rows;
        batch.instances.push_back(std::move(inst));
      }
      neural::zero_grads(grads);
      const auto parts = objectives::rec_loss(model, batch, 1.0, 0.0, &grads);
      neural::adam_step(model, grads, adam, adam_cfg);
      ce_sum += parts.ce;
    }
    metrics.push_back({epoch, "ce", ce_sum / static_cast<double>(instances.size())});
  }

  StageResult result;
  result.ckpt = CheckpointData{std::move(model), "teacher", cfg.to_json().dump()};
  result.metrics = std::move(metrics);
  return result;
}

// --- recommendation fine-tuning ----------------------------------------------------

std::vector<std::vector<double>> teacher_soft_labels(const Model& teacher,
                                                     const std::vector<Conversation>& contexts) {
  std::vector<std::vector<double>> rows;
  rows.reserve(contexts.size());
  for (const auto& ctx : contexts) {
    const auto ids = neural::tokenize(ctx, teacher.vocab, teacher.dims.max_len);
    const auto enc = neural::encode_context(teacher, ids);
    rows.push_back(objectives::preference_probs(teacher, enc.cls));
  }
  return rows;
}

StageResult finetune_recommendation(const std::vector<Conversation>& real_train,
                                    const std::vector<Conversation>& sim_corpus,
                                    const retrieval::DenseIndex& sim_index,
                                    const Model& teacher,
                                    const CheckpointData& pretrained,
                                    const TrainConfig& cfg) {
  cfg.validate();
  Model model = pretrained.model;  // continue from the pre-trained weights
  if (sim_index.model_checksum() != neural::params_checksum(model)) {
    throw ValidationError("finetune_recommendation: index was built from a different checkpoint");
  }
  if (cfg.lambda1 > 0.0 && teacher.item_ids != model.item_ids) {
    throw ValidationError("finetune_recommendation: teacher and model disagree on the item set");
  }

  const auto instances = build_instances(real_train, model.item_ids);
  if (instances.empty()) throw ValidationError("finetune_recommendation: no usable instances");
  const std::size_t n = instances.size();

  std::vector<std::vector<int>> ctx_ids(n);
  std::vector<Conversation> contexts;
  contexts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ctx_ids[i] = neural::tokenize(instances[i].context, model.vocab, model.dims.max_len);
    contexts.push_back(instances[i].context);
  }

  // Soft labels from the frozen teacher, computed once.
  std::vector<std::vector<double>> soft;
  if (cfg.lambda1 > 0.0) soft = teacher_soft_labels(teacher, contexts);

  // Context views of the simulated corpus for the CCA term.
  std::vector<std::vector<int>> sim_ctx_ids;
  std::size_t cca_batch = 0;
  if (cfg.lambda2 > 0.0) {
    sim_ctx_ids.resize(sim_corpus.size());
    for (std::size_t i = 0; i < sim_corpus.size(); ++i) {
      auto split = corpus::split_context(sim_corpus[i]);
      if (!split) throw ValidationError("finetune_recommendation: simulated conversation without recommendation");
      sim_ctx_ids[i] = neural::tokenize(split->context, model.vocab, model.dims.max_len);
    }
    const std::size_t budget = eligible_pair_items(sim_corpus);
    if (budget < 2) throw ValidationError("finetune_recommendation: CCA needs >= 2 eligible items");
    cca_batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_rec), budget);
  }

  auto adam = neural::make_adam(model);
  const auto adam_cfg = adam_for(cfg, cfg.lr_rec);
  auto grads = neural::make_grads(model);
  MetricLog metrics;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs_rec; ++epoch) {
    auto shuffle_rng = derive_rng(cfg.seed, "ftrec.shuffle", static_cast<std::uint64_t>(epoch));
    auto pair_rng = derive_rng(cfg.seed, "ftrec.pairs", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double ce_sum = 0.0, kl_sum = 0.0, cca_sum = 0.0;
    for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(cfg.batch_rec)) {
      const std::size_t end = std::min(n, at + static_cast<std::size_t>(cfg.batch_rec));
      objectives::RecBatch batch;
      batch.gamma = cfg.gamma;
      batch.binary_ce_mode = cfg.rec_binary_ce;
      for (std::size_t i = at; i < end; ++i) {
        const std::size_t idx = order[i];
        objectives::RecInstance inst;
        inst.ids = ctx_ids[idx];
        inst.gold_rows = instances[idx].gold_rows;
        if (cfg.lambda1 > 0.0) inst.soft = soft[idx];
        if (cfg.gamma != 0.0 && cfg.retrieval_k > 0) {
          const auto enc = neural::encode_context(model, inst.ids);
          const auto hits = retrieval::topk(sim_index, enc.cls, cfg.retrieval_k);
          inst.retrieved = retrieval::gather_vectors(sim_index, hits);
        }
        batch.instances.push_back(std::move(inst));
      }
      neural::zero_grads(grads);
      const auto parts = objectives::rec_loss(model, batch, 1.0, cfg.lambda1, &grads);
      double cca = 0.0;
      if (cfg.lambda2 > 0.0) {
        const auto pair_rows = objectives::sample_contrastive_pairs(sim_corpus, cca_batch, pair_rng);
        const auto pair_batch =
            make_pair_batch(pair_rows, sim_ctx_ids, cfg.tau, cfg.cca_include_positive);
        cca = objectives::cca_loss(model, pair_batch, &grads, cfg.lambda2);
      }
      neural::adam_step(model, grads, adam, adam_cfg);
      ce_sum += parts.ce;
      kl_sum += parts.soft_kl;
      cca_sum += cca;
    }
    const double dn = static_cast<double>(n);
    metrics.push_back({epoch, "ce", ce_sum / dn});
    metrics.push_back({epoch, "soft", kl_sum / dn});
    metrics.push_back({epoch, "cca", cca_sum / dn});
    metrics.push_back(
        {epoch, "total", (ce_sum + cfg.lambda1 * kl_sum + cfg.lambda2 * cca_sum) / dn});
  }

  StageResult result;
  result.ckpt = CheckpointData{std::move(model), "finetuned_rec", cfg.to_json().dump()};
  result.metrics = std::move(metrics);
  return result;
}

// --- ranking / recommendation --------------------------------------------------------

std::vector<std::string> rank_items(const Model& model, std::span<const double> fused, int k) {
  if (k <= 0) throw ArgumentError("rank_items: k must be positive");
  struct Scored {
    double logit;
    const std::string* id;
  };
  std::vector<Scored> scored;
  scored.reserve(static_cast<std::size_t>(model.dims.items));
  for (int i = 0; i < model.dims.items; ++i) {
    scored.push_back({dot(fused, model.p.item_emb.row(i)), &model.item_ids[static_cast<std::size_t>(i)]});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.logit != b.logit) return a.logit > b.logit;
    return *a.id < *b.id;
  });
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  std::vector<std::string> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(*scored[i].id);
  return out;
}

std::vector<std::string> recommend(const Conversation& context, const Model& model,
                                   const retrieval::DenseIndex* sim_index, int k_items,
                                   double gamma, int retrieval_k) {
  if (k_items <= 0) throw ArgumentError("recommend: k_items must be positive");
  const auto ids = neural::tokenize(context, model.vocab, model.dims.max_len);
  const auto enc = neural::encode_context(model, ids);
  std::vector<double> fused = enc.cls;
  if (sim_index != nullptr && gamma != 0.0 && retrieval_k > 0) {
    const auto hits = retrieval::topk(*sim_index, enc.cls, retrieval_k);
    const Mat retrieved = retrieval::gather_vectors(*sim_index, hits);
    fused = retrieval::fuse_user(enc.cls, retrieved, model.p.w1, gamma).fused;
  }
  return rank_items(model, fused, k_items);
}

// --- generation fine-tuning ------------------------------------------------------------

std::vector<std::string> mask_item_names(const std::vector<std::string>& tokens,
                                         const ItemCatalog& catalog) {
  std::vector<std::vector<std::string>> names;
  names.reserve(catalog.size());
  for (const auto& item : catalog.items()) names.push_back(tokenize_text(item.name));
  return replace_token_spans(tokens, names, kItemToken);
}

StageResult finetune_generation(const std::vector<Conversation>& real_train,
                                const retrieval::DenseIndex& response_index,
                                const CheckpointData& pretrained, const ItemCatalog& catalog,
                                const TrainConfig& cfg) {
  cfg.validate();
  Model model = pretrained.model;
  if (response_index.model_checksum() != neural::params_checksum(model)) {
    throw ValidationError("finetune_generation: index was built from a different checkpoint");
  }

  const auto instances = build_instances(real_train, model.item_ids);
  if (instances.empty()) throw ValidationError("finetune_generation: no usable instances");
  const std::size_t n = instances.size();

  std::vector<std::vector<int>> ctx_ids(n), resp_ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    ctx_ids[i] = neural::tokenize(instances[i].context, model.vocab, model.dims.max_len);
    const auto masked = mask_item_names(instances[i].response.tokens, catalog);
    for (const auto& tok : masked) resp_ids[i].push_back(model.vocab.id_of(tok));
    resp_ids[i].push_back(neural::Vocabulary::kSep);  // supervised stop token
  }

  auto adam = neural::make_adam(model);
  const auto adam_cfg = adam_for(cfg, cfg.lr_gen);
  auto grads = neural::make_grads(model);
  MetricLog metrics;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs_gen; ++epoch) {
    auto shuffle_rng = derive_rng(cfg.seed, "ftgen.shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    double gen_sum = 0.0;
    int steps = 0;
    for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(cfg.batch_gen)) {
      const std::size_t end = std::min(n, at + static_cast<std::size_t>(cfg.batch_gen));
      objectives::GenBatch batch;
      batch.first_position_only = cfg.prompt_first_position_only;
      for (std::size_t i = at; i < end; ++i) {
        const std::size_t idx = order[i];
        objectives::GenInstance inst;
        inst.ctx_ids = ctx_ids[idx];
        inst.resp_ids = resp_ids[idx];
        if (cfg.retrieval_k > 0) {
          const auto enc = neural::encode_context(model, inst.ctx_ids);
          const auto hits = retrieval::topk(response_index, enc.cls, cfg.retrieval_k);
          inst.retrieved = retrieval::gather_vectors(response_index, hits);
        }
        batch.instances.push_back(std::move(inst));
      }
      neural::zero_grads(grads);
      const double gen = objectives::gen_nll_loss(model, batch, &grads);
      neural::adam_step(model, grads, adam, adam_cfg);
      gen_sum += gen;
      ++steps;
    }
    metrics.push_back({epoch, "gen", gen_sum / steps});
  }

  StageResult result;
  result.ckpt = CheckpointData{std::move(model), "finetuned_gen", cfg.to_json().dump()};
  result.metrics = std::move(metrics);
  return result;
}

// --- response generation -----------------------------------------------------------------

std::string fill_item_slots(const std::string& template_text,
                            const std::vector<std::string>& names) {
  const std::string slot = kItemToken;
  std::string out = template_text;
  std::size_t from = 0;
  std::size_t rank = 0;
  while (true) {
    const std::size_t at = out.find(slot, from);
    if (at == std::string::npos) break;
    if (names.empty()) {
      log::warn("fill_item_slots: [ITEM] slot with no recommendations, left unfilled");
      break;
    }
    const std::string& name = names[rank % names.size()];
    out.replace(at, slot.size(), name);
    from = at + name.size();
    ++rank;
  }
  return out;
}

std::string generate_response(const Conversation& context, const Model& gen_model,
                              const retrieval::DenseIndex* response_index,
                              const std::vector<std::string>& ranked_items,
                              const ItemCatalog& catalog, const TrainConfig& cfg) {
  const auto ctx_ids = neural::tokenize(context, gen_model.vocab, gen_model.dims.max_len);
  const auto enc = neural::encode_forward(gen_model, ctx_ids);
  const Mat& states = enc.out;
  Mat prompts = states;
  if (response_index != nullptr && cfg.retrieval_k > 0) {
    std::vector<double> cls(states.row(0).begin(), states.row(0).end());
    const auto hits = retrieval::topk(*response_index, cls, cfg.retrieval_k);
    const Mat retrieved = retrieval::gather_vectors(*response_index, hits);
    prompts = retrieval::fuse_prompt(states, retrieved, gen_model.p.w2,
                                     cfg.prompt_first_position_only)
                  .fused;
  }

  std::vector<int> ids = ctx_ids;
  std::vector<std::string> generated;
  for (int step = 0; step < cfg.gen_max_new_tokens; ++step) {
    if (prompts.rows + static_cast<int>(ids.size()) >= gen_model.dims.dec_max_len) break;
    const auto dec = neural::decode_forward(gen_model, prompts, ids);
    const int last_row = dec.n_prompt + static_cast<int>(ids.size()) - 1;
    const auto logits = neural::project_logits(gen_model, dec.attn.out.row(last_row));
    int best = 0;
    for (int v = 1; v < gen_model.dims.vocab; ++v) {
      if (logits[static_cast<std::size_t>(v)] > logits[static_cast<std::size_t>(best)]) best = v;
    }
    if (best == neural::Vocabulary::kSep) break;
    ids.push_back(best);
    generated.push_back(gen_model.vocab.token_of(best));
  }

  const std::string template_text = join_tokens(generated);
  if (template_text.empty()) {
    log::warn("generate_response: degenerate empty decode for '" + context.id + "'");
    return "";
  }
  std::vector<std::string> names;
  names.reserve(ranked_items.size());
  for (const auto& id : ranked_items) names.push_back(catalog.at(id).name);
  return fill_item_slots(template_text, names);
}

}  // namespace lotcrs::pipeline
