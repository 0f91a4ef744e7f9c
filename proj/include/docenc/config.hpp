#pragma once

#include <string>

#include "docenc/corpus.hpp"
#include "docenc/encoder.hpp"
#include "docenc/tensor.hpp"

namespace docenc {

enum class Arch { bi_hlstm, lr_hlstm };
enum class Objective { local_lm, g_lm, local_mlm, g_mlm };
enum class TaskKind { segmentation, retrieval, summarization };
enum class InitScope { none, local, global_scope };

std::string to_string(Arch a);
std::string to_string(Objective o);
std::string to_string(TaskKind t);
std::string to_string(InitScope s);
Arch parse_arch(const std::string& s);
Objective parse_objective(const std::string& s);
TaskKind parse_task(const std::string& s);
InitScope parse_init_scope(const std::string& s);

// MLM objectives require the bidirectional encoder, LM objectives the
// uni-directional halves. Throws ConfigError on a violation.
void check_pairing(Objective o, Arch a);
bool is_mlm(Objective o);

struct Limits {
  size_t max_blocks = 20;
  size_t max_tokens_per_block = 20;
  size_t max_total_tokens = 400;
  size_t vocab_size = 2000;
  real mask_rate = static_cast<real>(0.2);
};

struct RunConfig {
  size_t epochs = 2;
  uint64_t max_steps = 0;  // 0 = no cap
  size_t checkpoint_every = 0;
  real clip_norm = static_cast<real>(5.0);
};

struct Config {
  std::string preset = "desk";
  uint64_t seed = 1;
  Arch arch = Arch::bi_hlstm;
  Objective objective = Objective::g_mlm;
  TaskKind task = TaskKind::segmentation;
  BlockKind block_kind = BlockKind::sentence;
  EncoderConfig encoder;
  size_t head_hidden = 32;
  Limits limits;
  AdamConfig optim;
  RunConfig run;

  static Config desk();
  static Config paper();
  // Parse a JSON config file. A "preset" key is required and expanded first;
  // unknown keys are rejected.
  static Config from_json_text(const std::string& text);
  static Config from_file(const std::string& path);

  std::string to_json_text() const;
  void validate() const;
};

}  // namespace docenc
