#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tome/encoder.hpp"
#include "tome/memtable.hpp"
#include "tome/objectives.hpp"

namespace tome {

struct OptimizerConfig {
    double lr = 1e-3;  // desk-scale default; the reference setup uses 1e-4
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;  // skipped for layer norm and bias tensors
    double clip_norm = 1.0;      // global gradient norm
    int warmup_steps = 0;        // linear warmup, then linear decay
    int total_steps = 0;         // 0: constant learning rate after warmup
};

// AdamW with decoupled weight decay, global-norm clipping and a linear
// warmup/decay schedule.
class AdamW {
public:
    AdamW(const EncoderConfig& cfg, OptimizerConfig opt);

    void step(EncoderParams<float>& params, const EncoderParams<float>& grads);

    double last_lr() const { return last_lr_; }
    double last_grad_norm() const { return last_grad_norm_; }
    int steps_taken() const { return t_; }

private:
    OptimizerConfig opt_;
    EncoderParams<float> m_, v_;
    int t_ = 0;
    double last_lr_ = 0.0;
    double last_grad_norm_ = 0.0;
};

struct TrainOptions {
    int steps = 50;
    int batch_passages = 32;
    int max_mentions = 24;  // subsampling threshold (batch average)
    std::uint64_t seed = 0;
    OptimizerConfig optimizer;
    PretrainOptions pretrain;
    int coref_min_entity_freq = 0;  // 0: every linked mention joins coref
    // Stage 2 only: seed the entity head from the key head so initial queries
    // land near the memory keys produced by the same trunk.
    bool init_entity_head_from_key = true;
    int memory_shards = 1;  // stage 2: shards over the external memory
};

struct StepLog {
    int step = 0;
    LossReport report;
};

// Stage 1: batch-TOME with in-batch memory over greedy entity-overlap
// clusters; one cluster per step, rotating.
std::vector<StepLog> train_stage1(EncoderParams<float>& params, const EncoderConfig& cfg,
                                  const std::vector<AnnotatedPassage>& corpus, const TrainOptions& opt);

// Stage 2: frozen external memory, random batches, entity prediction term.
std::vector<StepLog> train_stage2(EncoderParams<float>& params, const EncoderConfig& cfg,
                                  const std::vector<AnnotatedPassage>& corpus, const MentionMemory& memory,
                                  const TrainOptions& opt);

void write_step_log(const std::string& path, const std::vector<StepLog>& logs, bool entity_term);

}  // namespace tome
