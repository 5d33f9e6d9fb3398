#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dd/adam.hpp"
#include "dd/dataset.hpp"
#include "dd/model.hpp"
#include "dd/rng.hpp"
#include "dd/sampler.hpp"
#include "dd/schedule.hpp"

namespace dd {

enum class Strategy { SyntheticDataset, Iterative, Shuffled, Dynamic };

Strategy strategy_from_name(const std::string& s);
std::string strategy_name(Strategy s);

// Pool of noisy samples mid-way through the teacher's reverse chain. Row i
// of `states` sits at noise level ts[i] in [1, T]. Capacity is fixed after
// initialization.
struct SamplePool {
    Tensor<float> states;  // [capacity, sample_dims...]
    std::vector<int> ts;
    double rho = 0.0;
    std::uint64_t generation = 0;

    std::size_t capacity() const { return ts.size(); }
    std::size_t sample_numel() const { return ts.empty() ? 0 : states.numel() / ts.size(); }
};

struct DistillConfig {
    Strategy strategy = Strategy::Dynamic;
    double rho = 0.4;
    std::size_t batch = 64;
    double lambda = 0.001;
    LossMode loss_mode = LossMode::Hybrid;
    std::size_t iterations = 20000;
};

// Assigns each noise sample a target level drawn uniformly from [1, T] and
// runs the teacher T - t_i reverse steps on it, batching the active rows at
// each level. Total teacher evaluations: sum of (T - t_i).
SamplePool shuffle_denoise(const Tensor<float>& noise_batch, const DenoiserModel<float>& teacher,
                           const NoiseSchedule& sched, CounterRng& rng);

// Builds the initial pool for one strategy:
//   iterative          capacity = batch, every item at t = T
//   shuffled           capacity = batch, shuffle-denoised
//   dynamic            capacity = round(rho T batch), shuffle-denoised in
//                      chunks of `batch` to bound memory
// Throws ArgumentError when round(rho T batch) < batch for the dynamic
// strategy.
SamplePool init_pool(const DistillConfig& cfg, const DenoiserModel<float>& teacher, const NoiseSchedule& sched,
                     CounterRng& rng);

// Scratch for repeated subset selection without re-allocating the index
// permutation. Keeping it optional leaves the one-shot call sites simple.
struct SelectScratch {
    std::vector<std::size_t> ident;
    std::vector<std::size_t> swaps;
};

// b distinct indices, uniform without replacement, deterministic given the
// stream. b == capacity returns all indices in order without consuming
// randomness.
std::vector<std::size_t> select_subset(std::size_t capacity, std::size_t b, CounterRng& rng,
                                       SelectScratch* scratch = nullptr);

struct IterationStats {
    double loss = 0.0;
    double simple = 0.0;
    double vlb = 0.0;
    bool has_vlb = false;
    std::uint64_t teacher_evals = 0;  // teacher forwards consumed this iteration
    std::vector<int> selected_ts;     // noise levels of the trained batch
};

// Runs the teacher-to-student objective over a sample pool: select a batch,
// one teacher step per selected item (the same forward provides the
// distillation targets), one optimizer step on the student, then write the
// denoised states back with t decremented; items that reach t = 0 restart
// as fresh noise at t = T.
class Distiller {
public:
    Distiller(const DenoiserModel<float>& teacher, DenoiserModel<float>& student, AdamConfig opt,
              DistillConfig cfg, const NoiseSchedule& sched);

    void init(Streams& streams) { pool_ = init_pool(cfg_, teacher_, sched_, streams.noise); }
    void adopt_pool(SamplePool pool);

    IterationStats iterate(Streams& streams);

    const SamplePool& pool() const { return pool_; }
    const DistillConfig& config() const { return cfg_; }
    AdamState<float>& optimizer() { return opt_; }
    DenoiserModel<float>& student() { return student_; }
    const DenoiserModel<float>& teacher() const { return teacher_; }

private:
    const DenoiserModel<float>& teacher_;
    DenoiserModel<float>& student_;
    DistillConfig cfg_;
    const NoiseSchedule& sched_;
    AdamState<float> opt_;
    SamplePool pool_;
    SelectScratch scratch_;

    Graph<float> graph_;
    DenoiserBinding binding_;
    LossNodes loss_;
    NodeId in_teacher_eps_ = kNoNode;
    NodeId in_teacher_vraw_ = kNoNode;
    NodeId in_logvar_lo_ = kNoNode;
    NodeId in_logvar_span_ = kNoNode;
    NodeId in_coef_a_ = kNoNode;
    NodeId in_coef_c_ = kNoNode;
};

// Draws n samples from the teacher along a respaced chain and wraps them as
// a dataset (the data-free baseline's training set).
Dataset synthesize_dataset(const DenoiserModel<float>& teacher, const NoiseSchedule& sched, std::size_t n,
                           SamplerKind sampler, int n_steps, CounterRng& rng, const std::string& kind_label);

}  // namespace dd
