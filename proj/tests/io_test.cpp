#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "difflab/difflab.hpp"
#include "support/test_support.hpp"

using namespace difflab;

namespace {
std::string tmp_path(const std::string& name) {
  return std::string(::testing::TempDir()) + "/" + name;
}

Checkpoint tiny_trained_checkpoint(std::uint64_t seed) {
  Gmm blob;
  blob.weights = {1.0};
  blob.means = {{0.5, -0.5}};
  blob.vars = {{0.7, 0.7}};
  Dataset data = generate_gmm_dataset(blob, 200, seed);
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.batch_size = 8;
  cfg.T = 12;
  cfg.beta_end = 0.3;
  cfg.hidden = {8, 8};
  cfg.seed = seed;
  DiffusionTrainResult res = train_diffusion(cfg, data);
  Checkpoint c;
  c.kind = "diffusion";
  c.denoiser = res.model;
  c.schedule = res.schedule;
  c.seed = seed;
  c.train_config = {{"steps", cfg.steps}};
  return c;
}
}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  Checkpoint c = tiny_trained_checkpoint(21);
  const std::string path = tmp_path("ckpt_roundtrip.json");
  save_checkpoint(path, c);
  Checkpoint back = load_checkpoint(path);

  ASSERT_TRUE(back.denoiser.has_value());
  ASSERT_EQ(back.denoiser->mlp.layers.size(), c.denoiser->mlp.layers.size());
  for (std::size_t li = 0; li < c.denoiser->mlp.layers.size(); ++li) {
    const MlpLayer& a = c.denoiser->mlp.layers[li];
    const MlpLayer& b = back.denoiser->mlp.layers[li];
    ASSERT_TRUE(a.w.same_shape(b.w));
    for (std::size_t k = 0; k < a.w.size(); ++k) EXPECT_EQ(a.w[k], b.w[k]);
    for (std::size_t k = 0; k < a.b.size(); ++k) EXPECT_EQ(a.b[k], b.b[k]);
  }
  ASSERT_TRUE(back.schedule.has_value());
  for (int t = 1; t <= c.schedule->T; ++t) {
    EXPECT_EQ(back.schedule->abar(t), c.schedule->abar(t));
    EXPECT_EQ(back.schedule->abar_c(t), c.schedule->abar_c(t));
  }
  EXPECT_EQ(back.seed, c.seed);
}

TEST(Checkpoint, TruncatedFileIsParseError) {
  Checkpoint c = tiny_trained_checkpoint(22);
  const std::string path = tmp_path("ckpt_trunc.json");
  save_checkpoint(path, c);
  std::string bytes = read_file_bytes(path);
  std::ofstream f(path, std::ios::binary);
  f << bytes.substr(0, bytes.size() / 2);
  f.close();
  EXPECT_THROW(load_checkpoint(path), CheckpointParseError);
}

TEST(Checkpoint, VersionMismatchIsDistinctError) {
  Checkpoint c = tiny_trained_checkpoint(23);
  json j = checkpoint_to_json(c);
  j["format_version"] = 99;
  const std::string path = tmp_path("ckpt_version.json");
  std::ofstream(path) << j.dump();
  EXPECT_THROW(load_checkpoint(path), CheckpointVersionError);
}

TEST(Checkpoint, ShapeInconsistencyIsDistinctError) {
  Checkpoint c = tiny_trained_checkpoint(24);
  json j = checkpoint_to_json(c);
  j["denoiser"]["mlp"]["layers"][0]["w"]["shape"] = {3, 3};
  const std::string path = tmp_path("ckpt_shape.json");
  std::ofstream(path) << j.dump();
  EXPECT_THROW(load_checkpoint(path), CheckpointShapeError);
}

TEST(Checkpoint, ReloadedModelSamplesIdentically) {
  Checkpoint c = tiny_trained_checkpoint(25);
  const std::string path = tmp_path("ckpt_sample.json");
  save_checkpoint(path, c);
  Checkpoint back = load_checkpoint(path);

  Rng a(99), b(99);
  auto sa = ancestral_sample(*c.denoiser, *c.schedule, 6, a).samples;
  auto sb = ancestral_sample(*back.denoiser, *back.schedule, 6, b).samples;
  for (int i = 0; i < 6; ++i)
    for (int d = 0; d < 2; ++d) EXPECT_EQ(sa[i][d], sb[i][d]);
}

TEST(Dataset, GmmSampleMeanNearOrigin) {
  Gmm g;
  g.weights = {1.0};
  g.means = {{0.0, 0.0}};
  g.vars = {{1.0, 1.0}};
  Dataset d = generate_gmm_dataset(g, 100000, 31);
  double m0 = 0.0, m1 = 0.0;
  for (const Vec& p : d.points) {
    m0 += p[0];
    m1 += p[1];
  }
  m0 /= d.size();
  m1 /= d.size();
  EXPECT_LT(std::sqrt(m0 * m0 + m1 * m1), 0.02);
}

TEST(Dataset, SameSeedSameBytes) {
  Gmm g;
  g.weights = {0.5, 0.5};
  g.means = {{-1.0, 0.0}, {1.0, 0.0}};
  g.vars = {{0.4, 0.4}, {0.4, 0.4}};
  Dataset a = generate_gmm_dataset(g, 500, 7);
  Dataset b = generate_gmm_dataset(g, 500, 7);
  EXPECT_EQ(dataset_csv(a), dataset_csv(b));
}

TEST(Dataset, LabelFrequenciesMatchWeights) {
  LabeledGmm lg;
  lg.gmm.weights = {0.7, 0.3};
  lg.gmm.means = {{-2.0, 0.0}, {2.0, 0.0}};
  lg.gmm.vars = {{0.4, 0.4}, {0.4, 0.4}};
  lg.labels = {0, 1};
  const int n = 50000;
  Dataset d = generate_labeled_gmm_dataset(lg, n, 33);
  long c0 = 0;
  for (int y : d.labels) c0 += (y == 0);
  const double se = std::sqrt(0.7 * 0.3 / n);
  EXPECT_NEAR(c0 / static_cast<double>(n), 0.7, 3.0 * se);
}

TEST(Dataset, CsvRoundTripBitwise) {
  Dataset d = generate_two_moons_dataset(0.05, 100, 35);
  const std::string path = tmp_path("moons.csv");
  write_dataset_csv(d, path);
  Dataset back = read_dataset_csv(path);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.points[i][0], d.points[i][0]);
    EXPECT_EQ(back.points[i][1], d.points[i][1]);
    EXPECT_EQ(back.labels[i], d.labels[i]);
  }
}

TEST(Svg, EmptyScatterIsValidSvg) {
  SvgPlot plot({-1, 1, -1, 1});
  plot.add_scatter({});
  const std::string svg = plot.str();
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("<rect"), std::string::npos);  // axes frame
  EXPECT_NE(svg.find("<text"), std::string::npos);  // tick labels
}

TEST(Svg, DeterministicBytes) {
  auto render = [] {
    SvgPlot plot({-2, 2, -2, 2});
    plot.add_scatter({{0.1, 0.2}, {-1.0, 1.5}}, nullptr, 2.5);
    plot.add_quiver(quiver_geometry(
        [](const Vec& x) {
          return Vec{-x[0], -x[1]};
        },
        {-2, 2, -2, 2}, 5, 5));
    return plot.str();
  };
  EXPECT_EQ(render(), render());
}

TEST(Svg, NonTwoDimensionalRejected) {
  SvgPlot plot({-1, 1, -1, 1});
  EXPECT_THROW(plot.add_scatter({{1.0, 2.0, 3.0}}), ContractViolation);
}

TEST(Svg, QuiverOfStandardNormalPointsTowardOrigin) {
  auto arrows = quiver_geometry(
      [](const Vec& x) {
        return Vec{-x[0], -x[1]};
      },
      {-3, 3, -3, 3}, 9, 9);
  for (const QuiverArrow& a : arrows) {
    const double r2 = a.pos[0] * a.pos[0] + a.pos[1] * a.pos[1];
    if (r2 < 1e-9) continue;
    EXPECT_LT(a.pos[0] * a.dir[0] + a.pos[1] * a.dir[1], 0.0);
  }
}

TEST(Svg, ContoursTrackLevelSets) {
  // Standard normal log density: the level curve at -0.5 log(2pi) - r^2/2
  // is the circle of radius r.
  const double r = 1.5;
  const double level = -std::log(2.0 * M_PI) - r * r / 2.0;
  auto segments = contour_geometry(
      [](const Vec& x) {
        return -std::log(2.0 * M_PI) - (x[0] * x[0] + x[1] * x[1]) / 2.0;
      },
      {-3, 3, -3, 3}, 60, {level});
  ASSERT_GT(segments.size(), 20u);
  for (const auto& seg : segments)
    for (const Vec& p : seg)
      EXPECT_NEAR(std::sqrt(p[0] * p[0] + p[1] * p[1]), r, 0.05);
}

TEST(Trajectory, JsonlDeterministic) {
  Trajectory t;
  t.seed = 5;
  t.states = {{0, 2.0, {0.1, 0.2}}, {1, 1.0, {0.3, -0.4}}};
  EXPECT_EQ(trajectory_jsonl(t), trajectory_jsonl(t));
  EXPECT_NE(trajectory_jsonl(t).find("\"level\":2.0"), std::string::npos);
}

TEST(Manifest, HashIsStable) {
  EXPECT_EQ(fnv1a64_hex("difflab"), fnv1a64_hex("difflab"));
  EXPECT_NE(fnv1a64_hex("a"), fnv1a64_hex("b"));
}
