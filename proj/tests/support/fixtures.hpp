#pragma once

#include "scadyg/cli.hpp"
#include "scadyg/synthetic.hpp"
#include "scadyg/trainer.hpp"

namespace fixture {

using namespace scadyg;

/// The decay-planted learning fixture: 50 nodes, 5000 interactions, 20 steps.
struct Planted {
    tgraph::TemporalGraph graph;
    ttr::StepPartition partition;
    tgraph::ChronoSplit split;
    tgraph::SynthParams truth;
};

inline Planted planted(std::uint64_t data_seed = 1, std::size_t d_e = 8) {
    tgraph::SynthParams sp;
    sp.pattern = tgraph::SynthPattern::decay_planted;
    sp.n = 50;
    sp.k = 5000;
    sp.seed = data_seed;
    auto syn = tgraph::generate_synthetic(sp);
    Planted f;
    f.truth = syn.params;
    const auto raw_part = ttr::partition_by_count(syn.graph, 20);
    const auto raw_split = tgraph::chronological_split(syn.graph, raw_part);
    f.graph = tgraph::normalize_features(syn.graph, d_e,
                                         std::pair{raw_part.origin, raw_part.boundary(raw_split.train.last_step)});
    f.partition = ttr::partition_by_count(f.graph, 20);
    f.split = tgraph::chronological_split(f.graph, f.partition);
    return f;
}

/// Rate magnitude on the scale of the planted decay (one step = 50 time units).
inline constexpr double kPlantedGamma0 = 0.05;

inline train::TrainConfig planted_train_config(std::uint64_t seed) {
    train::TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.clip_norm = 1.0;
    cfg.max_epochs = 40;
    cfg.patience = 20;
    cfg.seed = seed;
    cfg.eval.seed = mix_seed(seed, 0xe7a1);
    return cfg;
}

struct PlantedRun {
    ttr::MessageCache cache;
    train::TrainResult result;
};

inline PlantedRun run_planted(const Planted& f, hyper::Ablation mode, std::uint64_t seed,
                              std::optional<train::TrainConfig> cfg_override = {}, std::size_t hops = 1) {
    const auto pc = hyper::ablation_config(mode);
    const auto d_e = f.graph.d_e();
    const auto enc = pc.adjust(timecode::default_schedule(d_e, kPlantedGamma0), -kPlantedGamma0);
    PlantedRun run;
    run.cache = ttr::precompute_all(f.graph, f.partition, enc, hops);
    hyper::ModelShape shape;
    shape.d_m = run.cache.d_m();
    shape.hypernet = pc.hypernet;
    auto params = hyper::init_params(shape, seed);
    train::TrainInputs in{f.graph, run.cache, f.split};
    run.result = train::train(in, std::move(params), cfg_override.value_or(planted_train_config(seed)));
    return run;
}

}  // namespace fixture
