#include "lotcrs/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "lotcrs/corpus.hpp"
#include "lotcrs/errors.hpp"
#include "lotcrs/logging.hpp"
#include "lotcrs/metrics.hpp"
#include "lotcrs/neuralcore.hpp"
#include "lotcrs/objectives.hpp"
#include "lotcrs/pipeline.hpp"
#include "lotcrs/retrieval.hpp"
#include "lotcrs/simulator.hpp"
#include "lotcrs/text.hpp"

namespace lotcrs::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using pipeline::TrainConfig;

namespace {

// Options every subcommand shares; flags override the config file, which
// overrides the built-in defaults.
struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<double> lambda1, lambda2, gamma;
  std::optional<int> retrieval_k;
  std::optional<double> mask_rate, tau;
  std::optional<int> tail_threshold;
};

enum class Stage { kNone, kPretrain, kTeacher, kRec, kGen };

void add_common(CLI::App* cmd, CommonOpts* opts) {
  cmd->add_option("--config", opts->config_path, "JSON config file");
  cmd->add_option("--seed", opts->seed, "RNG seed");
  cmd->add_option("--epochs", opts->epochs, "epochs for this stage");
  cmd->add_option("--batch-size", opts->batch_size, "batch size for this stage");
  cmd->add_option("--lr", opts->lr, "learning rate for this stage");
  cmd->add_option("--lambda1", opts->lambda1, "label-smoothness weight");
  cmd->add_option("--lambda2", opts->lambda2, "contrastive weight");
  cmd->add_option("--gamma", opts->gamma, "retrieved-representation weight");
  cmd->add_option("--retrieval-k", opts->retrieval_k, "retrieved neighbours per query");
  cmd->add_option("--mask-rate", opts->mask_rate, "masking probability");
  cmd->add_option("--tau", opts->tau, "contrastive temperature");
  cmd->add_option("--tail-threshold", opts->tail_threshold, "tail frequency cutoff");
}

TrainConfig resolve_config(const CommonOpts& opts, Stage stage,
                           const std::string& base_json = "") {
  TrainConfig cfg;
  if (!base_json.empty()) {
    cfg = TrainConfig::from_json(json::parse(base_json));
  }
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw IoError("cannot open config file '" + opts.config_path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ParseError("config file '" + opts.config_path + "' is not a JSON object");
    }
    json merged = cfg.to_json();
    TrainConfig::from_json(j);  // reject unknown keys against the schema
    for (const auto& [key, value] : j.items()) merged[key] = value;
    cfg = TrainConfig::from_json(merged);
  }
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.lambda1) cfg.lambda1 = *opts.lambda1;
  if (opts.lambda2) cfg.lambda2 = *opts.lambda2;
  if (opts.gamma) cfg.gamma = *opts.gamma;
  if (opts.retrieval_k) cfg.retrieval_k = *opts.retrieval_k;
  if (opts.mask_rate) cfg.mask_rate = *opts.mask_rate;
  if (opts.tau) cfg.tau = *opts.tau;
  if (opts.tail_threshold) cfg.tail_threshold = *opts.tail_threshold;
  switch (stage) {
    case Stage::kPretrain:
      if (opts.epochs) cfg.epochs_pretrain = *opts.epochs;
      if (opts.batch_size) cfg.batch_pretrain = *opts.batch_size;
      if (opts.lr) cfg.lr_pretrain = *opts.lr;
      break;
    case Stage::kTeacher:
      if (opts.epochs) cfg.epochs_teacher = *opts.epochs;
      if (opts.batch_size) cfg.batch_rec = *opts.batch_size;
      if (opts.lr) cfg.lr_teacher = *opts.lr;
      break;
    case Stage::kRec:
      if (opts.epochs) cfg.epochs_rec = *opts.epochs;
      if (opts.batch_size) cfg.batch_rec = *opts.batch_size;
      if (opts.lr) cfg.lr_rec = *opts.lr;
      break;
    case Stage::kGen:
      if (opts.epochs) cfg.epochs_gen = *opts.epochs;
      if (opts.batch_size) cfg.batch_gen = *opts.batch_size;
      if (opts.lr) cfg.lr_gen = *opts.lr;
      break;
    case Stage::kNone:
      break;
  }
  cfg.validate();
  return cfg;
}

void write_snapshot(const fs::path& out_dir, const std::string& command,
                    const json& paths, const TrainConfig& cfg) {
  json snap;
  snap["command"] = command;
  snap["paths"] = paths;
  snap["train_config"] = cfg.to_json();
  std::ofstream out(out_dir / "config.json", std::ios::binary);
  if (!out) throw IoError("cannot write config snapshot under '" + out_dir.string() + "'");
  out << snap.dump(2) << "\n";
}

fs::path prepare_out_dir(const std::string& out) {
  if (out.empty()) throw ArgumentError("--out is required");
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

// --- subcommand bodies -------------------------------------------------------------

int cmd_stats(const std::string& catalog_path, const std::string& conv_path,
              std::ostream& out) {
  const auto catalog = corpus::load_catalog(catalog_path);
  const auto convs = corpus::load_conversations(conv_path, catalog);
  const auto stats = corpus::compute_stats(convs, catalog);
  out << "dialogs: " << stats.n_dialogs << "\n";
  out << "utterances: " << stats.n_utterances << "\n";
  out << "items: " << stats.n_items << "\n";
  return 0;
}

int cmd_simulate(const std::string& catalog_path, const std::string& templates_path,
                 const std::string& lexicon_path, int target_freq_flag,
                 const CommonOpts& opts, const std::string& out_path, std::ostream& out) {
  TrainConfig cfg = resolve_config(opts, Stage::kNone);
  if (target_freq_flag > 0) cfg.target_freq = target_freq_flag;
  const auto out_dir = prepare_out_dir(out_path);
  const auto catalog = corpus::load_catalog(catalog_path);
  const auto templates = templates_path.empty() ? simulator::default_templates()
                                                : simulator::load_templates(templates_path);
  std::optional<std::set<std::string>> lexicon;
  if (!lexicon_path.empty()) {
    std::ifstream in(lexicon_path);
    if (!in) throw IoError("cannot open lexicon '" + lexicon_path + "'");
    lexicon.emplace();
    std::string word;
    while (in >> word) lexicon->insert(word);
  }
  const auto attrs = simulator::extract_attributes(catalog, cfg.tfidf_k, lexicon);
  const auto corpus_out =
      simulator::simulate_balanced_corpus(catalog, attrs, templates, cfg.target_freq, cfg.seed);
  corpus::save_conversations(corpus_out, (out_dir / "sim.jsonl").string());
  {
    std::ofstream attr_out(out_dir / "attributes.jsonl", std::ios::binary);
    for (const auto& [id, as] : attrs) {
      json j;
      j["id"] = id;
      json ranked = json::array();
      for (const auto& [tok, score] : as.ranked) ranked.push_back({tok, score});
      j["attributes"] = std::move(ranked);
      attr_out << j.dump() << "\n";
    }
  }
  json paths;
  paths["catalog"] = catalog_path;
  if (!templates_path.empty()) paths["templates"] = templates_path;
  if (!lexicon_path.empty()) paths["lexicon"] = lexicon_path;
  write_snapshot(out_dir, "simulate", paths, cfg);
  out << "simulated " << corpus_out.size() << " conversations over " << catalog.size()
      << " items\n";
  return 0;
}

int cmd_pretrain(const std::string& sim_path, const std::string& catalog_path,
                 const std::string& conv_path, const CommonOpts& opts,
                 const std::string& out_path, std::ostream& out) {
  const TrainConfig cfg = resolve_config(opts, Stage::kPretrain);
  const auto out_dir = prepare_out_dir(out_path);
  const auto catalog = corpus::load_catalog(catalog_path);
  const auto sim = corpus::load_conversations(sim_path, catalog);
  std::vector<corpus::Conversation> extra;
  if (!conv_path.empty()) extra = corpus::load_conversations(conv_path, catalog);
  auto result = pipeline::pretrain(sim, catalog, cfg, conv_path.empty() ? nullptr : &extra);
  neural::save_checkpoint(result.ckpt, (out_dir / "pretrained.ckpt").string());
  pipeline::write_metrics(result.metrics, (out_dir / "metrics.jsonl").string());
  json paths;
  paths["sim_corpus"] = sim_path;
  paths["catalog"] = catalog_path;
  if (!conv_path.empty()) paths["conversations"] = conv_path;
  write_snapshot(out_dir, "pretrain", paths, cfg);
  out << "pretrained checkpoint written to " << (out_dir / "pretrained.ckpt").string() << "\n";
  return 0;
}

int cmd_train_teacher(const std::string& sim_path, const std::string& catalog_path,
                      const CommonOpts& opts, const std::string& out_path,
                      std::ostream& out) {
  const TrainConfig cfg = resolve_config(opts, Stage::kTeacher);
  const auto out_dir = prepare_out_dir(out_path);
  const auto catalog = corpus::load_catalog(catalog_path);
  const auto sim = corpus::load_conversations(sim_path, catalog);
  auto result = pipeline::train_teacher(sim, catalog, cfg);
  neural::save_checkpoint(result.ckpt, (out_dir / "teacher.ckpt").string());
  pipeline::write_metrics(result.metrics, (out_dir / "metrics.jsonl").string());
  json paths;
  paths["sim_corpus"] = sim_path;
  paths["catalog"] = catalog_path;
  write_snapshot(out_dir, "train-teacher", paths, cfg);
  out << "teacher checkpoint written to " << (out_dir / "teacher.ckpt").string() << "\n";
  return 0;
}

int cmd_finetune_rec(const std::string& ckpt_path, const std::string& teacher_path,
                     const std::string& conv_path, const std::string& sim_path,
                     const std::string& catalog_path, const CommonOpts& opts,
                     const std::string& out_path, std::ostream& out) {
  auto pretrained = neural::load_checkpoint(ckpt_path);
  const TrainConfig cfg = resolve_config(opts, Stage::kRec, pretrained.config_json);
  const auto out_dir = prepare_out_dir(out_path);
  const auto catalog = corpus::load_catalog(catalog_path);
  const auto real = corpus::load_conversations(conv_path, catalog);
  const auto sim = corpus::load_conversations(sim_path, catalog);
  auto teacher = neural::load_checkpoint(teacher_path);

  const auto index =
      retrieval::build_index(sim, pretrained.model, retrieval::PayloadKind::kUserRepr, catalog);
  retrieval::save_index(index, (out_dir / "user_index.idx").string());
  auto result =
      pipeline::finetune_recommendation(real, sim, index, teacher.model, pretrained, cfg);
  neural::save_checkpoint(result.ckpt, (out_dir / "finetuned_rec.ckpt").string());
  pipeline::write_metrics(result.metrics, (out_dir / "metrics.jsonl").string());
  json paths;
  paths["checkpoint"] = ckpt_path;
  paths["teacher"] = teacher_path;
  paths["conversations"] = conv_path;
  paths["sim_corpus"] = sim_path;
  paths["catalog"] = catalog_path;
  write_snapshot(out_dir, "finetune-rec", paths, cfg);
  out << "recommendation checkpoint written to " << (out_dir / "finetuned_rec.ckpt").string()
      << "\n";
  return 0;
}

int cmd_finetune_gen(const std::string& ckpt_path, const std::string& conv_path,
                     const std::string& sim_path, const std::string& catalog_path,
                     const CommonOpts& opts, const std::string& out_path,
                     std::ostream& out) {
  auto pretrained = neural::load_checkpoint(ckpt_path);
  const TrainConfig cfg = resolve_config(opts, Stage::kGen, pretrained.config_json);
  const auto out_dir = prepare_out_dir(out_path);
  const auto catalog = corpus::load_catalog(catalog_path);
  const auto real = corpus::load_conversations(conv_path, catalog);
  const auto sim = corpus::load_conversations(sim_path, catalog);

  const auto index = retrieval::build_index(sim, pretrained.model,
                                            retrieval::PayloadKind::kResponseRepr, catalog);
  retrieval::save_index(index, (out_dir / "response_index.idx").string());
  auto result = pipeline::finetune_generation(real, index, pretrained, catalog, cfg);
  neural::save_checkpoint(result.ckpt, (out_dir / "finetuned_gen.ckpt").string());
  pipeline::write_metrics(result.metrics, (out_dir / "metrics.jsonl").string());
  json paths;
  paths["checkpoint"] = ckpt_path;
  paths["conversations"] = conv_path;
  paths["sim_corpus"] = sim_path;
  paths["catalog"] = catalog_path;
  write_snapshot(out_dir, "finetune-gen", paths, cfg);
  out << "generation checkpoint written to " << (out_dir / "finetuned_gen.ckpt").string()
      << "\n";
  return 0;
}

int cmd_evaluate(const std::string& rec_path, const std::string& gen_path,
                 const std::string& user_index_path, const std::string& response_index_path,
                 const std::string& conv_path, const std::string& train_conv_path,
                 const std::string& catalog_path, const CommonOpts& opts,
                 const std::string& out_path, std::ostream& out) {
  auto rec = neural::load_checkpoint(rec_path);
  const TrainConfig cfg = resolve_config(opts, Stage::kNone, rec.config_json);
  const auto out_dir = prepare_out_dir(out_path);
  const auto catalog = corpus::load_catalog(catalog_path);
  const auto test = corpus::load_conversations(conv_path, catalog);
  const auto train = corpus::load_conversations(train_conv_path, catalog);
  const auto freq = corpus::frequency_table(train, catalog, cfg.tail_threshold);

  std::optional<retrieval::DenseIndex> user_index;
  if (!user_index_path.empty()) {
    user_index.emplace(retrieval::load_index(user_index_path));
  }
  std::optional<neural::CheckpointData> gen;
  std::optional<retrieval::DenseIndex> response_index;
  if (!gen_path.empty()) {
    gen.emplace(neural::load_checkpoint(gen_path));
    if (!response_index_path.empty()) {
      response_index.emplace(retrieval::load_index(response_index_path, &gen->model));
    }
  }

  metrics::EvalInputs inputs;
  inputs.rec_model = &rec.model;
  inputs.user_index = user_index ? &*user_index : nullptr;
  inputs.gen_model = gen ? &gen->model : nullptr;
  inputs.response_index = response_index ? &*response_index : nullptr;
  const auto report =
      metrics::evaluate_model(inputs, test, catalog, freq, {1, 10, 50}, cfg);

  {
    std::ofstream report_out(out_dir / "report.json", std::ios::binary);
    report_out << report.to_json().dump(2) << "\n";
  }
  json paths;
  paths["rec_checkpoint"] = rec_path;
  if (!gen_path.empty()) paths["gen_checkpoint"] = gen_path;
  if (!user_index_path.empty()) paths["user_index"] = user_index_path;
  if (!response_index_path.empty()) paths["response_index"] = response_index_path;
  paths["conversations"] = conv_path;
  paths["train_conversations"] = train_conv_path;
  paths["catalog"] = catalog_path;
  write_snapshot(out_dir, "evaluate", paths, cfg);
  out << report.render_table();
  return 0;
}

int cmd_chat(const std::string& rec_path, const std::string& gen_path,
             const std::string& user_index_path, const std::string& response_index_path,
             const std::string& catalog_path, const CommonOpts& opts, std::istream& in,
             std::ostream& out) {
  auto rec = neural::load_checkpoint(rec_path);
  auto gen = neural::load_checkpoint(gen_path);
  const TrainConfig cfg = resolve_config(opts, Stage::kNone, rec.config_json);
  const auto catalog = corpus::load_catalog(catalog_path);
  const auto user_index = retrieval::load_index(user_index_path);
  const auto response_index = retrieval::load_index(response_index_path, &gen.model);

  // Attribute vocabulary for tagging user turns.
  std::set<std::string> attr_tokens;
  bool have_file_attrs = false;
  for (const auto& item : catalog.items()) {
    for (const auto& attr : item.attributes) {
      have_file_attrs = true;
      for (const auto& tok : tokenize_text(attr)) attr_tokens.insert(tok);
    }
  }
  if (!have_file_attrs) {
    for (const auto& [id, as] : simulator::extract_attributes(catalog, cfg.tfidf_k)) {
      for (const auto& [tok, score] : as.ranked) attr_tokens.insert(tok);
    }
  }
  std::vector<std::pair<std::vector<std::string>, std::string>> name_tokens;
  for (const auto& item : catalog.items()) {
    name_tokens.emplace_back(tokenize_text(item.name), item.id);
  }
  std::sort(name_tokens.begin(), name_tokens.end(),
            [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

  corpus::Conversation conv;
  conv.id = "chat";
  std::string line;
  while (true) {
    out << "seeker> " << std::flush;
    if (!std::getline(in, line)) break;
    if (line == "/quit") break;
    if (line == "/reset") {
      conv.turns.clear();
      out << "(context cleared)\n";
      continue;
    }
    if (line.empty()) continue;

    corpus::Utterance turn;
    turn.role = corpus::Role::kSeeker;
    turn.tokens = tokenize_text(line);
    if (turn.tokens.empty()) continue;
    for (const auto& tok : turn.tokens) {
      if (attr_tokens.count(tok) > 0) turn.attributes.push_back(tok);
    }
    for (const auto& [toks, id] : name_tokens) {
      if (toks.empty() || toks.size() > turn.tokens.size()) continue;
      for (std::size_t i = 0; i + toks.size() <= turn.tokens.size(); ++i) {
        if (std::equal(toks.begin(), toks.end(), turn.tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
          turn.items.push_back(id);
          break;
        }
      }
    }
    conv.turns.push_back(std::move(turn));

    const auto ranked =
        pipeline::recommend(conv, rec.model, &user_index, 3, cfg.gamma, cfg.retrieval_k);
    out << "top-3:";
    for (const auto& id : ranked) out << " " << catalog.at(id).name << " [" << id << "]";
    out << "\n";
    const std::string response = pipeline::generate_response(conv, gen.model, &response_index,
                                                             ranked, catalog, cfg);
    out << "recommender> " << response << "\n";

    corpus::Utterance reply;
    reply.role = corpus::Role::kRecommender;
    reply.tokens = tokenize_text(response.empty() ? "." : response);
    if (!ranked.empty()) reply.items.push_back(ranked.front());
    conv.turns.push_back(std::move(reply));
  }
  out << "bye\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out) {
  CLI::App app{"desk-scale long-tail conversational recommender"};
  app.require_subcommand(1);

  // stats
  auto* stats = app.add_subcommand("stats", "corpus statistics");
  std::string st_catalog, st_convs;
  stats->add_option("--catalog", st_catalog)->required();
  stats->add_option("--conversations", st_convs)->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "build the balanced simulated corpus");
  std::string si_catalog, si_templates, si_lexicon, si_out;
  int si_target_freq = 0;
  CommonOpts si_opts;
  simulate->add_option("--catalog", si_catalog)->required();
  simulate->add_option("--templates", si_templates);
  simulate->add_option("--lexicon", si_lexicon);
  simulate->add_option("--target-freq", si_target_freq);
  simulate->add_option("--out", si_out)->required();
  add_common(simulate, &si_opts);

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "masked + contrastive pre-training");
  std::string pt_sim, pt_catalog, pt_convs, pt_out;
  CommonOpts pt_opts;
  pretrain->add_option("--sim-corpus", pt_sim)->required();
  pretrain->add_option("--catalog", pt_catalog)->required();
  pretrain->add_option("--conversations", pt_convs);
  pretrain->add_option("--out", pt_out)->required();
  add_common(pretrain, &pt_opts);

  // train-teacher
  auto* teacher = app.add_subcommand("train-teacher", "teacher on the simulated corpus");
  std::string tc_sim, tc_catalog, tc_out;
  CommonOpts tc_opts;
  teacher->add_option("--sim-corpus", tc_sim)->required();
  teacher->add_option("--catalog", tc_catalog)->required();
  teacher->add_option("--out", tc_out)->required();
  add_common(teacher, &tc_opts);

  // finetune-rec
  auto* ftrec = app.add_subcommand("finetune-rec", "retrieval-augmented recommendation fine-tuning");
  std::string fr_ckpt, fr_teacher, fr_convs, fr_sim, fr_catalog, fr_out;
  CommonOpts fr_opts;
  ftrec->add_option("--checkpoint", fr_ckpt)->required();
  ftrec->add_option("--teacher", fr_teacher)->required();
  ftrec->add_option("--conversations", fr_convs)->required();
  ftrec->add_option("--sim-corpus", fr_sim)->required();
  ftrec->add_option("--catalog", fr_catalog)->required();
  ftrec->add_option("--out", fr_out)->required();
  add_common(ftrec, &fr_opts);

  // finetune-gen
  auto* ftgen = app.add_subcommand("finetune-gen", "prompt-fused response generation fine-tuning");
  std::string fg_ckpt, fg_convs, fg_sim, fg_catalog, fg_out;
  CommonOpts fg_opts;
  ftgen->add_option("--checkpoint", fg_ckpt)->required();
  ftgen->add_option("--conversations", fg_convs)->required();
  ftgen->add_option("--sim-corpus", fg_sim)->required();
  ftgen->add_option("--catalog", fg_catalog)->required();
  ftgen->add_option("--out", fg_out)->required();
  add_common(ftgen, &fg_opts);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "long-tail metric suite on a test split");
  std::string ev_rec, ev_gen, ev_user_idx, ev_resp_idx, ev_convs, ev_train, ev_catalog, ev_out;
  CommonOpts ev_opts;
  evaluate->add_option("--rec-checkpoint", ev_rec)->required();
  evaluate->add_option("--gen-checkpoint", ev_gen);
  evaluate->add_option("--user-index", ev_user_idx);
  evaluate->add_option("--response-index", ev_resp_idx);
  evaluate->add_option("--conversations", ev_convs)->required();
  evaluate->add_option("--train-conversations", ev_train)->required();
  evaluate->add_option("--catalog", ev_catalog)->required();
  evaluate->add_option("--out", ev_out)->required();
  add_common(evaluate, &ev_opts);

  // chat
  auto* chat = app.add_subcommand("chat", "interactive recommendation REPL");
  std::string ch_rec, ch_gen, ch_user_idx, ch_resp_idx, ch_catalog;
  CommonOpts ch_opts;
  chat->add_option("--rec-checkpoint", ch_rec)->required();
  chat->add_option("--gen-checkpoint", ch_gen)->required();
  chat->add_option("--user-index", ch_user_idx)->required();
  chat->add_option("--response-index", ch_resp_idx)->required();
  chat->add_option("--catalog", ch_catalog)->required();
  add_common(chat, &ch_opts);

  std::vector<std::string> argv = args;
  argv.insert(argv.begin(), "lotcrs");
  std::vector<const char*> raw;
  raw.reserve(argv.size());
  for (const auto& a : argv) raw.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      out << app.help();
      return 0;
    }
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (stats->parsed()) return cmd_stats(st_catalog, st_convs, out);
    if (simulate->parsed()) {
      return cmd_simulate(si_catalog, si_templates, si_lexicon, si_target_freq, si_opts,
                          si_out, out);
    }
    if (pretrain->parsed()) return cmd_pretrain(pt_sim, pt_catalog, pt_convs, pt_opts, pt_out, out);
    if (teacher->parsed()) return cmd_train_teacher(tc_sim, tc_catalog, tc_opts, tc_out, out);
    if (ftrec->parsed()) {
      return cmd_finetune_rec(fr_ckpt, fr_teacher, fr_convs, fr_sim, fr_catalog, fr_opts,
                              fr_out, out);
    }
    if (ftgen->parsed()) {
      return cmd_finetune_gen(fg_ckpt, fg_convs, fg_sim, fg_catalog, fg_opts, fg_out, out);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(ev_rec, ev_gen, ev_user_idx, ev_resp_idx, ev_convs, ev_train,
                          ev_catalog, ev_opts, ev_out, out);
    }
    if (chat->parsed()) {
      return cmd_chat(ch_rec, ch_gen, ch_user_idx, ch_resp_idx, ch_catalog, ch_opts, in, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "usage error: no command\n";
  return 2;
}

}  // namespace lotcrs::cli
