#include "sinkbisim/io.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

using namespace sinkbisim;

TEST(Io, DoubleRoundTrip) {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 1e308, 0.0}) EXPECT_EQ(parse_double(format_double(x)), x);
    EXPECT_EQ(format_double(kInfiniteLambda), "inf");
    EXPECT_TRUE(std::isinf(parse_double("inf")));
    EXPECT_TRUE(std::isnan(parse_double("nan")));
    EXPECT_THROW(parse_double("1.5x"), std::invalid_argument);
}

TEST(Io, MdpJsonRoundTrip) {
    EnvConfig c;
    c.family = Family::random_chain;
    c.num_states = 30;
    c.num_classes = 6;
    c.num_actions = 4;
    c.perturbation = 0.05;
    const GeneratedMdp g = generate(c, 9);
    const GeneratedMdp back = mdp_from_json(Json::parse(mdp_to_json(g).dump()));
    ASSERT_EQ(back.mdp.num_actions(), 4u);
    for (std::size_t a = 0; a < 4; ++a) EXPECT_EQ(back.mdp.transition(a), g.mdp.transition(a));
    EXPECT_EQ(back.mdp.rewards(), g.mdp.rewards());
    EXPECT_EQ(back.mdp.gamma(), g.mdp.gamma());
    EXPECT_EQ(back.ec_labels, g.ec_labels);
    EXPECT_EQ(back.family, g.family);
    Json bad = mdp_to_json(g);
    bad["format"] = "other";
    EXPECT_THROW(mdp_from_json(bad), std::invalid_argument);
}

TEST(Io, ConfigRoundTripAndValidation) {
    ApiConfig c;
    c.env.family = Family::dense;
    c.bisim.lambda = kInfiniteLambda;
    c.bisim.p = 2.0;
    c.alpha.mode = AlphaMode::decay;
    c.alpha.alpha_min = 0.01;
    c.partition = PartitionMode::pam;
    c.pam_k = 25;
    c.sinkhorn.mode = SinkhornOptions::Mode::log_domain;
    const Json j = config_to_json(c);
    EXPECT_EQ(j["lambda"], "inf");
    const ApiConfig back = config_from_json(Json::parse(j.dump()));
    EXPECT_EQ(config_to_json(back), j);
    EXPECT_TRUE(std::isinf(back.bisim.lambda));
    Json unknown = j;
    unknown["lamda"] = 1.0;
    EXPECT_THROW(config_from_json(unknown), std::invalid_argument);
    Json zero = j;
    zero["alpha_mode"] = "fixed";
    zero["alpha"] = 0.0;
    EXPECT_THROW(config_from_json(zero), std::invalid_argument);
    const ApiConfig minimal = config_from_json(Json::parse(R"({"gamma": 0.8})"));
    EXPECT_EQ(minimal.bisim.c_T, 0.8);
}

TEST(Io, CsvQuotingRoundTrip) {
    std::ostringstream out;
    write_csv_row(out, {"a", "b,c", "say \"hi\"", "line\nbreak", ""});
    write_csv_row(out, {"1", "2", "3", "4", "5"});
    std::istringstream in(out.str());
    const auto rows = read_csv(in);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (CsvRow{"a", "b,c", "say \"hi\"", "line\nbreak", ""}));
    std::istringstream lf("x,y\n1,2\n");
    EXPECT_EQ(read_csv(lf).size(), 2u);
    std::istringstream broken("\"open");
    EXPECT_THROW(read_csv(broken), std::invalid_argument);
}

TEST(Io, StepCsvSchema) {
    const auto& h = step_csv_header();
    const std::vector<std::string> core{"step",   "seed",           "gap_vstar",      "metric_value_gap", "num_partitions",
                                        "alpha_k", "delta_achieved", "sinkhorn_iters", "wall_ms",          "metric_sup_change"};
    ASSERT_GE(h.size(), core.size());
    EXPECT_TRUE(std::equal(core.begin(), core.end(), h.begin()));
    StepRecord r;
    r.step = 4;
    r.seed = 2;
    r.gap_vstar = 0.125;
    std::ostringstream out;
    write_step_csv(out, {r});
    std::istringstream in(out.str());
    const CsvTable t = read_csv_table(in);
    EXPECT_EQ(t.header, h);
    EXPECT_EQ(t.numbers("gap_vstar").front(), 0.125);
    EXPECT_TRUE(std::isnan(t.numbers("nmi").front()));
}

TEST(Io, ReportMatchesHandComputedMeanAndStderr) {
    const std::vector<std::vector<double>> gaps{{1.0, 0.5}, {2.0, 0.25}, {4.0, 1.0}};
    std::vector<CsvTable> tables;
    for (std::size_t s = 0; s < gaps.size(); ++s) {
        std::vector<StepRecord> recs;
        for (std::size_t k = 0; k < 2; ++k) {
            StepRecord r;
            r.step = k;
            r.seed = s;
            r.gap_vstar = gaps[s][k];
            r.nmi = s == 0 ? 0.5 : std::numeric_limits<double>::quiet_NaN();
            recs.push_back(r);
        }
        std::ostringstream out;
        write_step_csv(out, recs);
        std::istringstream in(out.str());
        tables.push_back(read_csv_table(in));
    }
    const StepReport rep = aggregate_steps(tables);
    ASSERT_EQ(rep.steps, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(rep.counts, (std::vector<std::size_t>{3, 3}));
    const auto col = static_cast<std::size_t>(
        std::find(rep.columns.begin(), rep.columns.end(), "gap_vstar") - rep.columns.begin());
    for (std::size_t k = 0; k < 2; ++k) {
        const double m = (gaps[0][k] + gaps[1][k] + gaps[2][k]) / 3.0;
        double ss = 0.0;
        for (const auto& g : gaps) ss += (g[k] - m) * (g[k] - m);
        EXPECT_NEAR(rep.mean[k][col], m, 1e-15);
        EXPECT_NEAR(rep.stderr_[k][col], std::sqrt(ss / 2.0) / std::sqrt(3.0), 1e-15);
    }
    const auto nc = static_cast<std::size_t>(std::find(rep.columns.begin(), rep.columns.end(), "nmi") - rep.columns.begin());
    EXPECT_EQ(rep.mean[0][nc], 0.5);
    std::ostringstream out;
    write_report_csv(out, rep);
    std::istringstream in(out.str());
    const CsvTable t = read_csv_table(in);
    EXPECT_EQ(t.numbers("gap_vstar_mean")[1], rep.mean[1][col]);
}

TEST(Io, ManifestAndSeeds) {
    RunManifest m;
    m.experiment_id = "x";
    m.seeds = {1, 2};
    const Json j = m.to_json();
    EXPECT_EQ(j["csv_schema"], kStepCsvSchema);
    EXPECT_EQ(j["nmi_normalization"], "arithmetic");
    EXPECT_EQ(parse_seeds("3..5"), (std::vector<std::uint64_t>{3, 4, 5}));
    EXPECT_EQ(parse_seeds("7"), (std::vector<std::uint64_t>{7}));
    EXPECT_EQ(parse_seeds("1,4,9"), (std::vector<std::uint64_t>{1, 4, 9}));
    EXPECT_THROW(parse_seeds("5..3"), std::invalid_argument);
    EXPECT_THROW(parse_seeds("1,x"), std::invalid_argument);
}

TEST(Io, SaveAndLoadFiles) {
    const auto dir = std::filesystem::temp_directory_path() / "sinkbisim_io_test";
    std::filesystem::create_directories(dir);
    const GeneratedMdp g = gen_ring_sparse(20, 4, 1);
    save_mdp((dir / "m.json").string(), g);
    EXPECT_EQ(load_mdp((dir / "m.json").string()).mdp.transition(0), g.mdp.transition(0));
    std::filesystem::remove_all(dir);
}
