#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "docenc/checkpoint.hpp"
#include "docenc/config.hpp"
#include "docenc/pretrain.hpp"
#include "docenc/synth.hpp"
#include "docenc/tasks.hpp"

namespace fs = std::filesystem;
using namespace docenc;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string preset;
  std::string out_dir = "out";
  int64_t seed = -1;
};

Config assemble_config(const CommonFlags& cf) {
  Config cfg;
  if (!cf.config_path.empty())
    cfg = Config::from_file(cf.config_path);
  else if (cf.preset == "paper")
    cfg = Config::paper();
  else
    cfg = Config::desk();
  if (!cf.preset.empty() && cf.config_path.empty())
    cfg.preset = cf.preset;
  if (cf.seed >= 0) cfg.seed = static_cast<uint64_t>(cf.seed);
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& cf) {
  cmd->add_option("--config", cf.config_path, "JSON config file");
  cmd->add_option("--preset", cf.preset, "desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", cf.seed, "RNG seed");
  cmd->add_option("--out", cf.out_dir, "output directory");
}

int run_pretrain(const CommonFlags& cf, const std::string& corpus_path,
                 const std::string& objective, const std::string& arch,
                 const std::string& resume_path, int64_t epochs, int64_t max_steps,
                 int64_t checkpoint_every, double lr) {
  Config cfg = assemble_config(cf);
  if (!objective.empty()) cfg.objective = parse_objective(objective);
  if (!arch.empty()) cfg.arch = parse_arch(arch);
  if (epochs >= 0) cfg.run.epochs = static_cast<size_t>(epochs);
  if (max_steps >= 0) cfg.run.max_steps = static_cast<uint64_t>(max_steps);
  if (checkpoint_every >= 0) cfg.run.checkpoint_every = static_cast<size_t>(checkpoint_every);
  if (lr > 0) cfg.optim.lr = static_cast<real>(lr);
  check_pairing(cfg.objective, cfg.arch);

  auto loaded = load_corpus(corpus_path, cfg.block_kind);
  for (const auto& e : loaded.errors) std::cerr << "warning: " << e << "\n";
  if (loaded.skipped_empty)
    std::cerr << "warning: skipped " << loaded.skipped_empty << " empty documents\n";
  if (loaded.docs.empty()) throw DataError("no usable documents in " + corpus_path);

  std::optional<Checkpoint> resume;
  Vocabulary vocab;
  if (!resume_path.empty()) {
    resume = Checkpoint::load(resume_path);
    vocab = vocab_from_checkpoint(*resume);
  } else {
    std::vector<Document> truncated;
    truncated.reserve(loaded.docs.size());
    for (const auto& d : loaded.docs)
      truncated.push_back(truncate(d, cfg.limits.max_blocks, cfg.limits.max_tokens_per_block,
                                   cfg.limits.max_total_tokens));
    vocab = Vocabulary::build(truncated, cfg.limits.vocab_size);
  }

  fs::create_directories(cf.out_dir);
  std::ofstream log(cf.out_dir + "/loss_log.jsonl", std::ios::app);
  if (!log) throw DataError("cannot write loss log in " + cf.out_dir);
  const std::string ckpt_path = cf.out_dir + "/checkpoint.bin";
  PretrainResult res = pretrain_run(cfg, loaded.docs, vocab, &log, ckpt_path,
                                    resume ? &*resume : nullptr);
  vocab.save(cf.out_dir + "/vocab.txt");
  if (res.empty_doc_warnings)
    std::cerr << "warning: " << res.empty_doc_warnings
              << " documents yielded no predictions\n";
  std::cout << "pretrain done: steps=" << res.steps << " mean_loss=" << res.last_epoch_mean
            << " checkpoint=" << ckpt_path << "\n";
  return 0;
}

int run_finetune(const CommonFlags& cf, const std::string& task, const std::string& train_path,
                 const std::string& dev_path, const std::string& init,
                 const std::string& from_path, int64_t epochs, double lr) {
  Config cfg = assemble_config(cf);
  if (!task.empty()) cfg.task = parse_task(task);
  if (epochs >= 0) cfg.run.epochs = static_cast<size_t>(epochs);
  if (lr > 0) cfg.optim.lr = static_cast<real>(lr);
  InitScope scope = parse_init_scope(init);

  std::optional<Checkpoint> from;
  if (!from_path.empty()) {
    from = Checkpoint::load(from_path);
    // Fine-tuning keeps the encoder architecture it was pretrained with.
    Config pre = Config::from_json_text(from->config_json);
    cfg.arch = pre.arch;
    cfg.encoder = pre.encoder;
  } else if (scope != InitScope::none) {
    throw ConfigError("--init " + init + " requires --from CHECKPOINT");
  }

  TaskData train = load_task_data(cfg.task, train_path, cfg.limits);
  TaskData dev;
  if (!dev_path.empty()) dev = load_task_data(cfg.task, dev_path, cfg.limits);

  fs::create_directories(cf.out_dir);
  std::ofstream log(cf.out_dir + "/train_log.jsonl");
  FinetuneResult res = finetune_run(cfg, train, dev, scope, from ? &*from : nullptr, &log);
  const std::string ckpt_path = cf.out_dir + "/checkpoint.bin";
  res.best.save(ckpt_path);
  std::ofstream mlog(cf.out_dir + "/metrics.jsonl");
  for (const auto& rep : res.per_epoch) mlog << rep.to_json_line() << "\n";
  std::cout << res.best_dev.table();
  std::cout << "finetune done: steps=" << res.steps << " checkpoint=" << ckpt_path << "\n";
  return 0;
}

int run_eval(const std::string& from_path, const std::string& task,
             const std::string& data_path, bool zero_shot) {
  Checkpoint cp = Checkpoint::load(from_path);
  Config cfg = Config::from_json_text(cp.config_json);
  if (!task.empty()) cfg.task = parse_task(task);
  if (zero_shot) cfg.task = TaskKind::retrieval;

  TaskData data = load_task_data(cfg.task, data_path, cfg.limits);
  TaskModel model = build_task_model(cfg);
  if (zero_shot) {
    // Frozen pretrained encoder; mixer and feature head never used.
    auto names = model.store.names_with_prefix(scope_prefixes(cfg.arch, InitScope::global_scope));
    cp.restore_into(model.store, names);
  } else {
    std::vector<std::string> names;
    for (const auto& [n, t] : model.store.items()) names.push_back(n);
    cp.restore_into(model.store, names);
  }

  Vocabulary vocab = Vocabulary::build(
      [&] {
        std::vector<Document> docs;
        for (const auto& ex : data.seg) docs.push_back(ex.doc);
        for (const auto& ex : data.ret) docs.push_back(ex.doc);
        for (const auto& ex : data.summ) docs.push_back(ex.doc);
        return docs;
      }(),
      cfg.limits.vocab_size);

  MetricReport rep;
  switch (cfg.task) {
    case TaskKind::segmentation: rep = eval_seg(model, data.seg, vocab); break;
    case TaskKind::retrieval: rep = eval_retrieval(model, data.ret, vocab, zero_shot); break;
    case TaskKind::summarization: rep = eval_summ(model, data.summ, vocab); break;
  }
  std::cout << rep.to_json_line() << "\n" << rep.table();
  return 0;
}

int run_synth(const CommonFlags& cf, const std::string& task, int64_t count) {
  const auto n = static_cast<size_t>(count);
  const auto seed = cf.seed >= 0 ? static_cast<uint64_t>(cf.seed) : 1;
  if (task == "planted") {
    synth::write_planted_files(cf.out_dir, n, seed);
  } else {
    synth::write_files(parse_task(task), cf.out_dir, n, seed);
  }
  std::cout << "wrote " << task << " data to " << cf.out_dir << "\n";
  return 0;
}

int run_inspect(const std::string& path) {
  Checkpoint cp = Checkpoint::load(path);
  std::cout << "version: " << Checkpoint::kVersion << "\n";
  for (const auto& [k, v] : cp.meta) {
    if (k == "vocab")
      std::cout << "meta." << k << ": <" << v.size() << " bytes>\n";
    else
      std::cout << "meta." << k << ": " << v << "\n";
  }
  size_t total = 0;
  for (const auto& [name, t] : cp.tensors) {
    std::cout << name << "  " << shape_str(t.shape()) << "\n";
    total += t.numel();
  }
  std::cout << cp.tensors.size() << " tensors, " << total << " values\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical document encoder toolkit"};
  app.require_subcommand(1);

  CommonFlags cf;
  std::string corpus_path, objective, arch, resume_path;
  std::string task, train_path, dev_path, init = "none", from_path, data_path;
  int64_t epochs = -1, max_steps = -1, checkpoint_every = -1, count = 100;
  double lr = -1;
  bool zero_shot = false;
  std::string inspect_path;

  auto* pre = app.add_subcommand("pretrain", "pre-train an encoder on an unlabeled corpus");
  add_common(pre, cf);
  pre->add_option("--corpus", corpus_path, "line-JSON corpus")->required();
  pre->add_option("--objective", objective, "local-lm | g-lm | local-mlm | g-mlm");
  pre->add_option("--arch", arch, "bi-hlstm | lr-hlstm");
  pre->add_option("--resume", resume_path, "checkpoint to resume from");
  pre->add_option("--epochs", epochs);
  pre->add_option("--max-steps", max_steps);
  pre->add_option("--checkpoint-every", checkpoint_every);
  pre->add_option("--lr", lr);

  auto* fin = app.add_subcommand("finetune", "fine-tune on labeled task data");
  add_common(fin, cf);
  fin->add_option("--task", task, "segmentation | retrieval | summarization");
  fin->add_option("--train", train_path)->required();
  fin->add_option("--dev", dev_path);
  fin->add_option("--init", init, "none | local | global");
  fin->add_option("--from", from_path, "pretrained checkpoint");
  fin->add_option("--epochs", epochs);
  fin->add_option("--lr", lr);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on task data");
  ev->add_option("--from", from_path)->required();
  ev->add_option("--task", task);
  ev->add_option("--data", data_path)->required();
  ev->add_flag("--zero-shot", zero_shot, "dot-product retrieval with frozen encoder");

  auto* sy = app.add_subcommand("synth", "generate synthetic task data");
  add_common(sy, cf);
  sy->add_option("--task", task, "segmentation | retrieval | summarization | planted")
      ->required();
  sy->add_option("--count", count);

  auto* insp = app.add_subcommand("inspect", "print a checkpoint's directory");
  insp->add_option("checkpoint", inspect_path)->required();

  try {
    app.parse(argc, argv);
    if (pre->parsed())
      return run_pretrain(cf, corpus_path, objective, arch, resume_path, epochs, max_steps,
                          checkpoint_every, lr);
    if (fin->parsed())
      return run_finetune(cf, task, train_path, dev_path, init, from_path, epochs, lr);
    if (ev->parsed()) return run_eval(from_path, task, data_path, zero_shot);
    if (sy->parsed()) return run_synth(cf, task, count);
    if (insp->parsed()) return run_inspect(inspect_path);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const IncompatError& e) {
    std::cerr << "incompatible: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
