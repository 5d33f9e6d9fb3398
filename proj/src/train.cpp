#include "dd/train.hpp"

#include "dd/errors.hpp"

namespace dd {

DenoisingTrainer::DenoisingTrainer(DenoiserModel<float>& model, AdamConfig opt, double lambda, LossMode mode,
                                   std::size_t batch, const NoiseSchedule& sched)
    : model_(model), lambda_(lambda), mode_(mode), batch_(batch), sched_(sched), opt_(opt) {
    if (batch_ < 1) throw ArgumentError("batch size must be >= 1");
    if (lambda_ < 0.0) throw ArgumentError("lambda must be >= 0");
    binding_ = build_denoiser_graph(graph_, model_.spec(), batch_);
    Shape bdims = model_.spec().input_dims;
    bdims.insert(bdims.begin(), batch_);
    NodeId eps_true = graph_.input("eps_true", bdims);
    NodeId post_mean = graph_.input("post_mean", bdims);
    NodeId post_logvar = graph_.input("post_logvar", bdims);
    NodeId lo = graph_.input("logvar_lo", bdims);
    NodeId span = graph_.input("logvar_span", bdims);
    NodeId ca = graph_.input("coef_a", bdims);
    NodeId cc = graph_.input("coef_c", bdims);
    loss_ = build_denoising_loss(graph_, binding_.eps, binding_.v, binding_.x, eps_true, post_mean, post_logvar,
                                 lo, span, ca, cc, static_cast<float>(lambda_), mode_, batch_);
}

LossParts DenoisingTrainer::step(const Dataset& data, Streams& streams) {
    if (data.size() == 0) throw ArgumentError("training dataset is empty");
    if (data.sample_dims != model_.spec().input_dims)
        throw ShapeError("dataset sample dims " + shape_str(data.sample_dims) + " vs model input " +
                         shape_str(model_.spec().input_dims));
    std::vector<std::size_t> idx(batch_);
    for (auto& i : idx) i = streams.data.uniform_int(data.size());
    Tensor<float> x0 = data.gather(idx);
    std::vector<int> ts(batch_);
    for (auto& t : ts) t = 1 + static_cast<int>(streams.noise.uniform_int(static_cast<std::uint64_t>(sched_.T)));
    Tensor<float> eps = Tensor<float>::zeros(x0.dims);
    fill_normal(eps, streams.noise);
    Tensor<float> xt = q_sample(x0, std::span<const int>(ts), eps, sched_);

    Tensor<float> temb = time_embedding_batch<float>(ts, model_.spec().time_dim, sched_.model_horizon);
    LossCoefs<float> coefs = make_loss_coefs<float>(ts, x0.dims, sched_);
    auto [post_mean, post_logvar] = posterior_mean_logvar(x0, xt, std::span<const int>(ts), sched_);

    Graph<float>::NamedTensors in;
    in["x"] = &xt;
    in["temb"] = &temb;
    in["eps_true"] = &eps;
    in["post_mean"] = &post_mean;
    in["post_logvar"] = &post_logvar;
    in["logvar_lo"] = &coefs.logvar_lo;
    in["logvar_span"] = &coefs.logvar_span;
    in["coef_a"] = &coefs.coef_a;
    in["coef_c"] = &coefs.coef_c;
    for (const auto& [name, id] : binding_.params) in[name] = &model_.params().at(name);
    graph_.evaluate(in);
    graph_.backward(loss_.loss);
    opt_.update(model_.params(), graph_.input_gradients());

    LossParts parts;
    parts.loss = static_cast<double>(graph_.value(loss_.loss).data[0]);
    parts.simple = static_cast<double>(graph_.value(loss_.simple).data[0]);
    if (mode_ == LossMode::Hybrid) {
        parts.vlb = static_cast<double>(graph_.value(loss_.vlb).data[0]);
        parts.has_vlb = true;
    }
    return parts;
}

}  // namespace dd
