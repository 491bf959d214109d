#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "sparsevote/io.hpp"

using namespace sparsevote;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sparsevote_test_" + name);
}

std::vector<DataShard> tiny_shards() {
  ProblemSpec spec;
  spec.d = 6;
  spec.K = 2;
  spec.n = 5;
  spec.M = 3;
  auto shards = sample_shards(spec);
  sample_responses(shards, make_theta_star(spec, 0.5, 1).theta_star, 1.0, 2);
  return shards;
}

}  // namespace

TEST(Container, ShardsRoundTrip) {
  const auto shards = tiny_shards();
  const auto path = temp_path("shards.bin");
  io::save_shards(path, shards);
  const auto back = io::load_shards(path);
  ASSERT_EQ(back.size(), shards.size());
  for (std::size_t m = 0; m < shards.size(); ++m) {
    EXPECT_EQ(back[m].machine_id, shards[m].machine_id);
    EXPECT_EQ(back[m].X, shards[m].X);
    EXPECT_EQ(back[m].y, shards[m].y);
  }
  std::filesystem::remove(path);
}

TEST(Container, TruthAndPrecisionRoundTrip) {
  ProblemSpec spec;
  spec.d = 12;
  spec.K = 3;
  auto gt = make_theta_star(spec, 0.4, 9);
  gt.c_omega = 1.25;
  const auto t = io::decode_truth(io::encode_truth(gt));
  EXPECT_EQ(t.theta_star, gt.theta_star);
  EXPECT_EQ(t.support, gt.support);
  EXPECT_EQ(t.theta_min, gt.theta_min);
  EXPECT_EQ(t.c_omega, gt.c_omega);

  const auto shards = tiny_shards();
  const auto p = estimate_precision(shards[0].X, 0.3, NodewiseScale::paper_2n);
  const auto q = io::decode_precision(io::encode_precision(p));
  EXPECT_EQ(q.dense(), p.dense());
  EXPECT_EQ(q.tau_sq, p.tau_sq);
  EXPECT_EQ(q.scale, p.scale);
  EXPECT_EQ(q.lambda_omega, p.lambda_omega);
}

TEST(Container, RejectsWrongKindAndCorruption) {
  const auto bytes = io::encode_shards(tiny_shards());
  EXPECT_THROW(io::decode_truth(bytes), Error);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(io::decode_shards(bad), Error);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(io::decode_shards(longer), Error);
  EXPECT_THROW(io::decode_shards(std::span(bytes.data(), bytes.size() - 1)), Error);
  EXPECT_THROW(io::load_shards(temp_path("does_not_exist.bin")), Error);
}

TEST(Csv, ShardRoundTripIsExact) {
  const auto shards = tiny_shards();
  std::stringstream ss;
  io::write_shard_csv(ss, shards[1]);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "x_1,x_2,x_3,x_4,x_5,x_6,y");
  const auto back = io::read_shard_csv(ss, 1);
  EXPECT_EQ(back.X, shards[1].X);
  EXPECT_EQ(back.y, shards[1].y);
}

TEST(Csv, SweepTableColumns) {
  SweepRow row;
  row.axis = "r";
  row.value = 0.8;
  row.scheme = "thresh_votes";
  row.f_mean = 1;
  row.reps = 100;
  std::stringstream ss;
  io::write_sweep_csv(ss, std::span(&row, 1));
  const auto rows = io::read_csv_rows(ss);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(std::string(io::sweep_csv_header()),
            "axis,value,scheme,f_mean,f_se,l2_mean,l2_se,oracle_l2_mean,bits_r1_mean,bits_r2_mean,reps");
  EXPECT_EQ(rows[0].at("scheme"), "thresh_votes");
  EXPECT_EQ(std::stod(rows[0].at("value")), 0.8);
  EXPECT_EQ(rows[0].at("reps"), "100");
}

TEST(Json, RecordFields) {
  ExperimentRecord r;
  r.rep = 4;
  r.scheme = "bnm21";
  r.s_hat = {1, 5};
  r.round2_failed = true;
  r.fusion.rule = "majority";
  const auto j = io::to_json(r);
  EXPECT_EQ(j["rep"], 4);
  EXPECT_EQ(j["S_hat"], nlohmann::json::array({1, 5}));
  EXPECT_EQ(j["flags"]["round2_failed"], true);
  EXPECT_EQ(j["fusion"]["rule"], "majority");
  EXPECT_FALSE(j.contains("grid_value"));
  const auto rep = io::to_json(theory::thm3_regime(5000, 0.9, 0));
  EXPECT_TRUE(rep["feasible"].get<bool>());
}

TEST(Config, ParsesKeysAndComments) {
  ExperimentConfig cfg;
  std::istringstream is(
      "# experiment\n"
      "d = 1000\n"
      "K=25   # sparsity\n"
      "machines = 40\n"
      "scheme = top_L_signs\n"
      "L = 125\n"
      "sigma = 2.5\n"
      "precision_reuse = true\n"
      "second_round = gram_exact\n"
      "\n");
  io::apply_config_stream(cfg, is);
  EXPECT_EQ(cfg.spec.d, 1000);
  EXPECT_EQ(cfg.spec.K, 25);
  EXPECT_EQ(cfg.spec.M, 40);
  EXPECT_EQ(cfg.scheme, Scheme::top_L_signs);
  EXPECT_EQ(cfg.L, 125);
  EXPECT_EQ(cfg.spec.sigma, 2.5);
  EXPECT_TRUE(cfg.precision_reuse);
  EXPECT_EQ(cfg.second_round, SecondRound::gram_exact);
  io::apply_config_value(cfg, "sigma", "from_r");
  EXPECT_FALSE(cfg.spec.sigma.has_value());
}

TEST(Config, RejectsBadInput) {
  ExperimentConfig cfg;
  EXPECT_THROW(io::apply_config_value(cfg, "nonsense", "1"), Error);
  EXPECT_THROW(io::apply_config_value(cfg, "d", "many"), Error);
  EXPECT_THROW(io::apply_config_value(cfg, "scheme", "magic"), Error);
  EXPECT_THROW(io::apply_config_value(cfg, "fixed_design", "maybe"), Error);
  std::istringstream is("d 10\n");
  EXPECT_THROW(io::apply_config_stream(cfg, is), Error);
}
