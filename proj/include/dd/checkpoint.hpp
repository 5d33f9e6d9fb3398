#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dd/adam.hpp"
#include "dd/distill.hpp"
#include "dd/model.hpp"
#include "dd/rng.hpp"
#include "dd/schedule.hpp"
#include "dd/tensor.hpp"

namespace dd {

// On-disk checkpoint: manifest.txt (key = value) plus one tensor blob per
// named parameter under params/. Optional training state (optimizer
// moments, RNG stream positions, sample pool) makes resumption bit-exact.
struct Checkpoint {
    DenoiserSpec spec;
    std::map<std::string, Tensor<float>> params;
    std::string schedule_kind = "linear";
    int schedule_T = 0;
    std::uint64_t iteration = 0;

    bool has_opt = false;
    AdamConfig opt_cfg;
    std::uint64_t opt_step = 0;
    std::map<std::string, Tensor<float>> opt_m, opt_v;

    bool has_streams = false;
    Streams streams;

    bool has_pool = false;
    SamplePool pool;
};

void save_checkpoint(const Checkpoint& ck, const std::string& dir);

// Loads a checkpoint; if `expected` is given, the stored spec must match it
// exactly (no silent coercion between architectures or sizes).
Checkpoint load_checkpoint(const std::string& dir, const DenoiserSpec* expected = nullptr);

DenoiserModel<float> model_from_checkpoint(const Checkpoint& ck);
NoiseSchedule schedule_from_checkpoint(const Checkpoint& ck);

}  // namespace dd
