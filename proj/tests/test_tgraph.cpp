#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "scadyg/partition.hpp"
#include "scadyg/synthetic.hpp"
#include "support/oracles.hpp"

using namespace scadyg;
using namespace scadyg::tgraph;

namespace {

TemporalGraph parse(const std::string& text, EdgeListSchema schema = {}) {
    std::istringstream in(text);
    return parse_edge_list(in, schema, "test");
}

}  // namespace

TEST(EdgeList, ParsesThreeRowsWithoutFeatures) {
    const auto g = parse("0,1,1.0\n1,2,2.0\n0,2,3.0\n");
    EXPECT_EQ(g.n_nodes, 3u);
    EXPECT_EQ(g.n_interactions(), 3u);
    EXPECT_EQ(g.d_e(), 0u);
    EXPECT_EQ(g.src, (std::vector<NodeId>{0, 1, 0}));
    EXPECT_EQ(g.dst, (std::vector<NodeId>{1, 2, 2}));
    EXPECT_EQ(g.time, (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(EdgeList, EmptyFileIsAnError) {
    try {
        parse("# only a comment\n\n");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("no interactions"), std::string::npos);
    }
}

TEST(EdgeList, OutOfOrderRowsGiveTheSortedGraph) {
    const auto sorted = parse("a,b,1\nb,c,2\na,c,3\n");
    const auto shuffled = parse("a,c,3\na,b,1\nb,c,2\n");
    ASSERT_EQ(sorted.n_interactions(), shuffled.n_interactions());
    for (std::size_t j = 0; j < sorted.n_interactions(); ++j) {
        EXPECT_EQ(sorted.id_map[sorted.src[j]], shuffled.id_map[shuffled.src[j]]);
        EXPECT_EQ(sorted.id_map[sorted.dst[j]], shuffled.id_map[shuffled.dst[j]]);
        EXPECT_EQ(sorted.time[j], shuffled.time[j]);
    }
}

TEST(EdgeList, TiesKeepFileOrder) {
    const auto g = parse("x,y,5\np,q,5\nm,n,5\n");
    EXPECT_EQ(g.id_map[g.src[0]], "x");
    EXPECT_EQ(g.id_map[g.src[1]], "p");
    EXPECT_EQ(g.id_map[g.src[2]], "m");
}

TEST(EdgeList, ReportsLineNumbers) {
    try {
        parse("0,1,1\n0,1,oops\n");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("test:2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse("0,1,nan\n"), DataError);
    EXPECT_THROW(parse("0,1,inf\n"), DataError);
    EXPECT_THROW(parse("0,1,1,0.5\n0,1,2\n"), DataError);
    EXPECT_THROW(parse("0,1\n"), DataError);
}

TEST(EdgeList, FeaturesCommentsHeaderAndDelimiter) {
    EdgeListSchema schema;
    schema.delimiter = '\t';
    schema.skip_header = true;
    const auto g = parse("src\tdst\tts\tf\n# skip\n7\t9\t1.5\t0.25\n9\t7\t2.5\t0.75\n", schema);
    EXPECT_EQ(g.n_nodes, 2u);
    EXPECT_EQ(g.d_e(), 1u);
    EXPECT_EQ(g.edge_feats(1, 0), 0.75);
    EXPECT_EQ(g.id_map, (std::vector<std::string>{"7", "9"}));
}

TEST(EdgeList, WriterRoundTripPreservesEverything) {
    const auto g = oracle::random_graph(12, 60, 3, 5);
    std::ostringstream out;
    write_edge_list(g, out);
    const auto back = parse(out.str());
    ASSERT_EQ(back.n_interactions(), g.n_interactions());
    for (std::size_t j = 0; j < g.n_interactions(); ++j) {
        EXPECT_EQ(back.id_map[back.src[j]], g.id_map[g.src[j]]);
        EXPECT_EQ(back.id_map[back.dst[j]], g.id_map[g.dst[j]]);
        EXPECT_EQ(back.time[j], g.time[j]);
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(back.edge_feats(j, c), g.edge_feats(j, c));
    }
}

TEST(GraphCache, BinaryRoundTripIsExact) {
    const auto g = normalize_features(oracle::random_graph(20, 100, 2, 9), 4);
    auto r = BinaryReader(encode_graph(g).buffer(), "mem");
    const auto back = decode_graph(r);
    EXPECT_EQ(back.n_nodes, g.n_nodes);
    EXPECT_EQ(back.src, g.src);
    EXPECT_EQ(back.dst, g.dst);
    EXPECT_EQ(back.time, g.time);
    EXPECT_EQ(back.edge_feats, g.edge_feats);
    EXPECT_EQ(back.node_feats, g.node_feats);
    EXPECT_EQ(back.id_map, g.id_map);
}

TEST(GraphCache, RejectsWrongMagicAndTruncation) {
    const auto g = oracle::random_graph(5, 10, 1, 1);
    auto bytes = encode_graph(g).buffer();
    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    auto r1 = BinaryReader(truncated, "mem");
    EXPECT_THROW(decode_graph(r1), DataError);
    bytes[0] = 'X';
    auto r2 = BinaryReader(bytes, "mem");
    EXPECT_THROW(decode_graph(r2), DataError);
}

TEST(Normalize, ReplicatesSingleFeatureToEight) {
    auto g = make_graph(2, {0}, {1}, {1.0}, Matrix{{0.5}});
    const auto n = normalize_features(g, 8);
    ASSERT_EQ(n.d_e(), 8u);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(n.edge_feats(0, c), 0.5);
    EXPECT_EQ(n.d_v(), 8u);
    for (double v : n.node_feats.flat()) EXPECT_EQ(v, 1.0);
}

TEST(Normalize, FullWidthIsIdentity) {
    const auto g = oracle::random_graph(6, 20, 8, 3);
    const auto n = normalize_features(g, 8);
    EXPECT_EQ(n.edge_feats, g.edge_feats);
    EXPECT_EQ(n.node_feats, g.node_feats);
}

TEST(Normalize, TimestampFeatureIsMinMaxScaled) {
    auto g = make_graph(2, {0, 1, 0}, {1, 0, 1}, {0.0, 5.0, 10.0});
    const auto n = normalize_features(g, 2);
    EXPECT_EQ(n.edge_feats, (Matrix{{0.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}}));
}

TEST(Normalize, TimestampFeatureClampsOutsideTrainingRange) {
    auto g = make_graph(2, {0, 1, 0}, {1, 0, 1}, {0.0, 5.0, 10.0});
    const auto n = normalize_features(g, 1, std::pair{0.0, 4.0});
    EXPECT_EQ(n.edge_feats(1, 0), 1.0);
    EXPECT_EQ(n.edge_feats(2, 0), 1.0);
}

TEST(Normalize, CyclicReplicationOfWiderFeatures) {
    auto g = make_graph(2, {0}, {1}, {1.0}, Matrix{{1.0, 2.0, 3.0}});
    const auto n = normalize_features(g, 7);
    EXPECT_EQ(n.edge_feats, (Matrix{{1, 2, 3, 1, 2, 3, 1}}));
}

TEST(Normalize, RefusesWiderThanTarget) {
    const auto g = oracle::random_graph(3, 4, 5, 1);
    EXPECT_THROW(normalize_features(g, 4), UsageError);
}

TEST(Split, TenStepsGoSevenOneTwo) {
    const auto g = oracle::random_graph(5, 200, 1, 2, 10.0);
    const auto part = ttr::partition(g, (g.t_max() - g.t_min()) / 10.0 * (1 + 1e-12));
    ASSERT_EQ(part.steps(), 10u);
    const auto s = chronological_split(g, part);
    EXPECT_EQ(s.train.first_step, 1u);
    EXPECT_EQ(s.train.last_step, 7u);
    EXPECT_EQ(s.val.first_step, 8u);
    EXPECT_EQ(s.val.last_step, 8u);
    EXPECT_EQ(s.test.first_step, 9u);
    EXPECT_EQ(s.test.last_step, 10u);
}

TEST(Split, HundredStepsGoSeventyFifteenFifteen) {
    const auto g = oracle::random_graph(5, 500, 1, 2);
    const auto part = ttr::partition_by_count(g, 100);
    const auto s = chronological_split(g, part);
    EXPECT_EQ(s.train.steps(), 70u);
    EXPECT_EQ(s.val.steps(), 15u);
    EXPECT_EQ(s.test.steps(), 15u);
}

TEST(Split, TwoStepsIsAnError) {
    const auto g = oracle::random_graph(5, 20, 1, 2);
    EXPECT_THROW(chronological_split(g, ttr::partition_by_count(g, 2)), UsageError);
}

TEST(Split, StepAlignedAndChronological) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = oracle::random_graph(10, 300, 1, seed, 50.0, true, true);
        const auto part = ttr::partition_by_count(g, 3 + seed % 17);
        const auto s = chronological_split(g, part);
        EXPECT_EQ(s.train.begin, 0u);
        EXPECT_EQ(s.train.end, s.val.begin);
        EXPECT_EQ(s.val.end, s.test.begin);
        EXPECT_EQ(s.test.end, g.n_interactions());
        if (s.train.end > s.train.begin && s.val.end > s.val.begin) {
            EXPECT_LT(g.time[s.train.end - 1], g.time[s.val.begin]);
        }
        if (s.val.end > s.val.begin && s.test.end > s.test.begin) {
            EXPECT_LT(g.time[s.val.end - 1], g.time[s.test.begin]);
        }
    }
}

TEST(Synthetic, DeterministicForSeed) {
    const auto a = generate_synthetic(10, 100, SynthPattern::uniform, 7);
    const auto b = generate_synthetic(10, 100, SynthPattern::uniform, 7);
    EXPECT_EQ(a.graph.src, b.graph.src);
    EXPECT_EQ(a.graph.dst, b.graph.dst);
    EXPECT_EQ(a.graph.time, b.graph.time);
    const auto c = generate_synthetic(10, 100, SynthPattern::decay_planted, 7);
    const auto d = generate_synthetic(10, 100, SynthPattern::decay_planted, 7);
    EXPECT_EQ(c.graph.dst, d.graph.dst);
}

TEST(Synthetic, TwoNodesOneInteraction) {
    const auto s = generate_synthetic(2, 1, SynthPattern::uniform, 0);
    ASSERT_EQ(s.graph.n_interactions(), 1u);
    EXPECT_NE(s.graph.src[0], s.graph.dst[0]);
    EXPECT_LT(std::max(s.graph.src[0], s.graph.dst[0]), 2u);
}

TEST(Synthetic, RejectsBadSizes) {
    EXPECT_THROW(generate_synthetic(1, 5, SynthPattern::uniform, 0), UsageError);
    EXPECT_THROW(generate_synthetic(5, 0, SynthPattern::uniform, 0), UsageError);
}

namespace {

// Lift of destination choice by the age of the candidate's last activity:
// P(chosen | age bucket) * (n - 1). Uniform destinations give lift 1.
std::vector<double> recency_lift(const TemporalGraph& g, const std::vector<double>& edges) {
    const auto buckets = edges.size() - 1;
    std::vector<double> chosen(buckets, 0), seen(buckets, 0), last(g.n_nodes, -1.0);
    for (std::size_t j = 0; j < g.n_interactions(); ++j) {
        const double t = g.time[j];
        for (NodeId v = 0; v < g.n_nodes; ++v) {
            if (v == g.src[j] || last[v] < 0) continue;
            const double age = t - last[v];
            for (std::size_t b = 0; b < buckets; ++b) {
                if (age >= edges[b] && age < edges[b + 1]) {
                    seen[b] += 1;
                    chosen[b] += v == g.dst[j];
                }
            }
        }
        last[g.src[j]] = t;
        last[g.dst[j]] = t;
    }
    std::vector<double> lift(buckets, 0.0);
    for (std::size_t b = 0; b < buckets; ++b)
        lift[b] = seen[b] > 0 ? chosen[b] / seen[b] * static_cast<double>(g.n_nodes - 1) : -1.0;
    return lift;
}

}  // namespace

TEST(Synthetic, DecayPlantedFavoursRecentlyActiveNodes) {
    SynthParams p;
    p.pattern = SynthPattern::decay_planted;
    p.n = 50;
    p.k = 20000;
    p.seed = 3;
    const auto lift = recency_lift(generate_synthetic(p).graph, {0, 5, 20, 60, 200});
    EXPECT_GT(lift[0], 1.2);
    for (std::size_t b = 0; b + 1 < lift.size(); ++b) EXPECT_GT(lift[b], lift[b + 1]) << "bucket " << b;

    p.pattern = SynthPattern::uniform;
    const auto flat = recency_lift(generate_synthetic(p).graph, {0, 5});
    EXPECT_NEAR(flat[0], 1.0, 0.05);
}

TEST(Synthetic, UniformDestinationsAreUniform) {
    const auto g = generate_synthetic(20, 20000, SynthPattern::uniform, 11).graph;
    std::vector<double> count(20, 0);
    for (auto v : g.dst) count[v] += 1;
    double chi2 = 0.0;
    const double expect = 1000.0;
    for (double c : count) chi2 += (c - expect) * (c - expect) / expect;
    EXPECT_LT(chi2, 43.8);  // chi-square 19 dof, p = 0.001
}

TEST(Filter, KeepsNodesAndFeatures) {
    const auto g = normalize_features(oracle::random_graph(9, 40, 2, 4), 2);
    const auto f = filter_interactions(g, [&](std::size_t j) { return j % 2 == 0; });
    EXPECT_EQ(f.n_nodes, g.n_nodes);
    EXPECT_EQ(f.node_feats, g.node_feats);
    EXPECT_EQ(f.n_interactions(), 20u);
    EXPECT_EQ(f.edge_feats.row(3)[1], g.edge_feats.row(6)[1]);
    EXPECT_NO_THROW(f.validate());
}
