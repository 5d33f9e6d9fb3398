#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dd/checkpoint.hpp"
#include "dd/config.hpp"
#include "dd/dataset.hpp"
#include "dd/distill.hpp"
#include "dd/model.hpp"
#include "dd/schedule.hpp"

namespace dd {

// CLI entry: args without the program name, e.g. {"distill", "--config",
// "run.cfg"}. Returns the process exit status: 0 success, 2 usage or
// malformed config, 1 runtime failure.
int run_command(const std::vector<std::string>& args);

// Subcommand bodies; throw on failure. Exposed so tests can drive runs
// through the exact production path without spawning processes.
void cmd_train_teacher(const KeyValueConfig& kv);
void cmd_distill(const KeyValueConfig& kv);
void cmd_synthesize(const KeyValueConfig& kv);
void cmd_sample(const KeyValueConfig& kv);
void cmd_eval(const KeyValueConfig& kv);
void cmd_ablate(const KeyValueConfig& kv);

// ---------------------------------------------------------------------------
// Building blocks shared by the subcommands and the acceptance suite.
// ---------------------------------------------------------------------------

struct EvalSetup {
    bool enabled = true;
    std::size_t every = 0;  // iterations between metric evaluations; 0 = final only
    std::size_t samples = 1000;
    std::size_t final_samples = 5000;
    int n_steps = 50;
    SamplerKind sampler = SamplerKind::Ancestral;
    std::size_t projections = 128;
    std::string primary = "sw";  // metric written into metrics.csv ("sw" | "fgd")
    Dataset reference;
};

struct EvalPoint {
    double sw = 0.0;
    double fgd = 0.0;
    bool has_fgd = false;
};

// Generates `count` samples from the model (fresh per-iteration stream
// derived from the master seed, so matched iterations across runs compare
// like for like) and scores them against the reference.
EvalPoint evaluate_model(const DenoiserModel<float>& model, const NoiseSchedule& sched, const EvalSetup& ev,
                         std::uint64_t master_seed, std::uint64_t iteration, std::size_t count);

struct SyntheticSetup {
    std::size_t n = 0;  // 0: derive from the teacher-forward budget iterations*batch/n_steps
    int n_steps = 50;
    SamplerKind sampler = SamplerKind::Ancestral;
    double real_fraction = 0.0;     // data-limited baseline when > 0
    const Dataset* real = nullptr;  // required when real_fraction > 0
};

struct DistillOutcome {
    double final_sw = 0.0;
    double final_fgd = 0.0;
    std::uint64_t teacher_fwd_total = 0;
    std::filesystem::path checkpoint_dir;
    std::filesystem::path metrics_path;
    std::filesystem::path eval_path;
};

// One distillation run (any strategy) writing metrics.csv, eval.csv and the
// final checkpoint under out_dir. For the synthetic_dataset strategy the
// teacher budget is spent up front on dataset synthesis.
DistillOutcome run_distill_core(const std::filesystem::path& out_dir, std::uint64_t master_seed,
                                const DenoiserModel<float>& teacher, const NoiseSchedule& sched,
                                const DenoiserSpec& student_spec, AdamConfig opt, const DistillConfig& dcfg,
                                const EvalSetup& eval, const SyntheticSetup* synth,
                                const Checkpoint* resume, std::size_t checkpoint_every = 0);

struct TeacherOutcome {
    double final_loss_simple = 0.0;
    std::filesystem::path checkpoint_dir;
    std::filesystem::path metrics_path;
};

TeacherOutcome run_teacher_core(const std::filesystem::path& out_dir, std::uint64_t master_seed,
                                const Dataset& data, const NoiseSchedule& sched, const DenoiserSpec& spec,
                                AdamConfig opt, double lambda, LossMode mode, std::size_t batch,
                                std::size_t iterations, std::size_t checkpoint_every, const EvalSetup& eval,
                                const Checkpoint* resume);

// data.* section -> dataset (procedural kinds or data.file).
Dataset dataset_from_config(const KeyValueConfig& kv, std::uint64_t default_seed);
DenoiserSpec spec_from_config(const KeyValueConfig& kv, const std::string& prefix, const Shape* default_input);
AdamConfig adam_from_config(const KeyValueConfig& kv);
DistillConfig distill_from_config(const KeyValueConfig& kv);
EvalSetup eval_from_config(const KeyValueConfig& kv, std::uint64_t master_seed, std::size_t iterations,
                           const std::string& default_primary, int horizon);

}  // namespace dd
