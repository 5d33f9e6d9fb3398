#pragma once

#include <cstdint>

#include "dd/adam.hpp"
#include "dd/dataset.hpp"
#include "dd/diffusion.hpp"
#include "dd/distill.hpp"
#include "dd/model.hpp"
#include "dd/rng.hpp"
#include "dd/schedule.hpp"

namespace dd {

// Standard data-based training: per iteration draw (x0, t, eps), corrupt x0
// one-shot, minimize the denoising objective. Batch indices come from the
// data stream; t and eps from the noise stream.
class DenoisingTrainer {
public:
    DenoisingTrainer(DenoiserModel<float>& model, AdamConfig opt, double lambda, LossMode mode,
                     std::size_t batch, const NoiseSchedule& sched);

    LossParts step(const Dataset& data, Streams& streams);

    AdamState<float>& optimizer() { return opt_; }
    DenoiserModel<float>& model() { return model_; }

private:
    DenoiserModel<float>& model_;
    double lambda_;
    LossMode mode_;
    std::size_t batch_;
    const NoiseSchedule& sched_;
    AdamState<float> opt_;

    Graph<float> graph_;
    DenoiserBinding binding_;
    LossNodes loss_;
};

}  // namespace dd
