#include "docenc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace docenc {

using json = nlohmann::json;

std::string to_string(Arch a) { return a == Arch::bi_hlstm ? "bi-hlstm" : "lr-hlstm"; }

std::string to_string(Objective o) {
  switch (o) {
    case Objective::local_lm: return "local-lm";
    case Objective::g_lm: return "g-lm";
    case Objective::local_mlm: return "local-mlm";
    case Objective::g_mlm: return "g-mlm";
  }
  return "?";
}

std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::segmentation: return "segmentation";
    case TaskKind::retrieval: return "retrieval";
    case TaskKind::summarization: return "summarization";
  }
  return "?";
}

std::string to_string(InitScope s) {
  switch (s) {
    case InitScope::none: return "none";
    case InitScope::local: return "local";
    case InitScope::global_scope: return "global";
  }
  return "?";
}

Arch parse_arch(const std::string& s) {
  if (s == "bi-hlstm" || s == "bi") return Arch::bi_hlstm;
  if (s == "lr-hlstm" || s == "lr") return Arch::lr_hlstm;
  throw ConfigError("unknown architecture: " + s);
}

Objective parse_objective(const std::string& s) {
  if (s == "local-lm") return Objective::local_lm;
  if (s == "g-lm") return Objective::g_lm;
  if (s == "local-mlm") return Objective::local_mlm;
  if (s == "g-mlm") return Objective::g_mlm;
  throw ConfigError("unknown objective: " + s);
}

TaskKind parse_task(const std::string& s) {
  if (s == "segmentation" || s == "seg") return TaskKind::segmentation;
  if (s == "retrieval" || s == "ret") return TaskKind::retrieval;
  if (s == "summarization" || s == "summ") return TaskKind::summarization;
  throw ConfigError("unknown task: " + s);
}

InitScope parse_init_scope(const std::string& s) {
  if (s == "none") return InitScope::none;
  if (s == "local") return InitScope::local;
  if (s == "global") return InitScope::global_scope;
  throw ConfigError("unknown init scope: " + s);
}

bool is_mlm(Objective o) {
  return o == Objective::local_mlm || o == Objective::g_mlm;
}

void check_pairing(Objective o, Arch a) {
  if (is_mlm(o) && a != Arch::bi_hlstm)
    throw ConfigError("objective " + to_string(o) +
                      " requires arch bi-hlstm: masked objectives have no directionality "
                      "constraint and pair with the bidirectional encoder");
  if (!is_mlm(o) && a != Arch::lr_hlstm)
    throw ConfigError("objective " + to_string(o) +
                      " requires arch lr-hlstm: language-model objectives need the "
                      "uni-directionality constraint");
}

Config Config::desk() {
  Config c;
  c.preset = "desk";
  return c;  // struct defaults are the desk preset
}

Config Config::paper() {
  Config c;
  c.preset = "paper";
  c.encoder.embed_dim = 512;
  c.encoder.local_hidden = 1024;
  c.encoder.global_hidden = 1024;
  c.encoder.local_layers = 2;
  c.encoder.global_layers = 2;
  c.encoder.char_embed = 16;
  c.encoder.char_widths = {1, 2, 3, 4, 5, 6, 7};
  c.encoder.char_filters = {32, 32, 64, 128, 256, 512, 1024};
  c.head_hidden = 512;
  c.limits.max_blocks = 75;
  c.limits.max_tokens_per_block = 75;
  c.limits.max_total_tokens = 5000;
  c.limits.vocab_size = 250000;
  c.limits.mask_rate = static_cast<real>(0.2);
  return c;
}

void Config::validate() const {
  encoder.validate();
  if (limits.mask_rate <= 0 || limits.mask_rate > 1)
    throw ConfigError("mask_rate must be in (0, 1]");
  if (limits.vocab_size < 4) throw ConfigError("vocab_size must be at least 4");
  if (head_hidden == 0) throw ConfigError("head_hidden must be positive");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& ctx) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown config key: " + (ctx.empty() ? "" : ctx + ".") + it.key());
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Config Config::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config is not a JSON object");
  if (!j.contains("preset")) throw ConfigError("config requires a \"preset\" key");
  const auto preset = j.at("preset").get<std::string>();
  Config c;
  if (preset == "desk")
    c = Config::desk();
  else if (preset == "paper")
    c = Config::paper();
  else
    throw ConfigError("unknown preset: " + preset);

  reject_unknown(j, {"preset", "seed", "arch", "objective", "task", "block_kind", "encoder",
                     "head_hidden", "limits", "optim", "run"},
                 "");
  maybe(j, "seed", c.seed);
  if (j.contains("arch")) c.arch = parse_arch(j.at("arch").get<std::string>());
  if (j.contains("objective")) c.objective = parse_objective(j.at("objective").get<std::string>());
  if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
  if (j.contains("block_kind")) {
    const auto bk = j.at("block_kind").get<std::string>();
    if (bk == "sentence")
      c.block_kind = BlockKind::sentence;
    else if (bk == "paragraph")
      c.block_kind = BlockKind::paragraph;
    else
      throw ConfigError("unknown block_kind: " + bk);
  }
  maybe(j, "head_hidden", c.head_hidden);
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    reject_unknown(e, {"embed_dim", "local_hidden", "global_hidden", "local_layers",
                       "global_layers", "char_embed", "char_widths", "char_filters"},
                   "encoder");
    maybe(e, "embed_dim", c.encoder.embed_dim);
    maybe(e, "local_hidden", c.encoder.local_hidden);
    maybe(e, "global_hidden", c.encoder.global_hidden);
    maybe(e, "local_layers", c.encoder.local_layers);
    maybe(e, "global_layers", c.encoder.global_layers);
    maybe(e, "char_embed", c.encoder.char_embed);
    maybe(e, "char_widths", c.encoder.char_widths);
    maybe(e, "char_filters", c.encoder.char_filters);
  }
  if (j.contains("limits")) {
    const json& l = j.at("limits");
    reject_unknown(l, {"max_blocks", "max_tokens_per_block", "max_total_tokens", "vocab_size",
                       "mask_rate"},
                   "limits");
    maybe(l, "max_blocks", c.limits.max_blocks);
    maybe(l, "max_tokens_per_block", c.limits.max_tokens_per_block);
    maybe(l, "max_total_tokens", c.limits.max_total_tokens);
    maybe(l, "vocab_size", c.limits.vocab_size);
    maybe(l, "mask_rate", c.limits.mask_rate);
  }
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    reject_unknown(o, {"lr", "beta1", "beta2", "eps"}, "optim");
    maybe(o, "lr", c.optim.lr);
    maybe(o, "beta1", c.optim.beta1);
    maybe(o, "beta2", c.optim.beta2);
    maybe(o, "eps", c.optim.eps);
  }
  if (j.contains("run")) {
    const json& r = j.at("run");
    reject_unknown(r, {"epochs", "max_steps", "checkpoint_every", "clip_norm"}, "run");
    maybe(r, "epochs", c.run.epochs);
    maybe(r, "max_steps", c.run.max_steps);
    maybe(r, "checkpoint_every", c.run.checkpoint_every);
    maybe(r, "clip_norm", c.run.clip_norm);
  }
  c.validate();
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return from_json_text(os.str());
}

std::string Config::to_json_text() const {
  json j;
  j["preset"] = preset;
  j["seed"] = seed;
  j["arch"] = to_string(arch);
  j["objective"] = to_string(objective);
  j["task"] = to_string(task);
  j["block_kind"] = block_kind == BlockKind::sentence ? "sentence" : "paragraph";
  j["head_hidden"] = head_hidden;
  j["encoder"] = {{"embed_dim", encoder.embed_dim},
                  {"local_hidden", encoder.local_hidden},
                  {"global_hidden", encoder.global_hidden},
                  {"local_layers", encoder.local_layers},
                  {"global_layers", encoder.global_layers},
                  {"char_embed", encoder.char_embed},
                  {"char_widths", encoder.char_widths},
                  {"char_filters", encoder.char_filters}};
  j["limits"] = {{"max_blocks", limits.max_blocks},
                 {"max_tokens_per_block", limits.max_tokens_per_block},
                 {"max_total_tokens", limits.max_total_tokens},
                 {"vocab_size", limits.vocab_size},
                 {"mask_rate", limits.mask_rate}};
  j["optim"] = {{"lr", optim.lr}, {"beta1", optim.beta1}, {"beta2", optim.beta2},
                {"eps", optim.eps}};
  j["run"] = {{"epochs", run.epochs},
              {"max_steps", run.max_steps},
              {"checkpoint_every", run.checkpoint_every},
              {"clip_norm", run.clip_norm}};
  return j.dump(2);
}

}  // namespace docenc
