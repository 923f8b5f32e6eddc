#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "palab/io.hpp"

using namespace palab;

namespace {

Config parse_text(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, SectionsCommentsAndBareKeys) {
  const Config c = parse_text("seed = 7\n# comment\n[model]\nalpha = 0.3\n; other comment\n\n[scale]\nn=500\n");
  EXPECT_EQ(c.get("run.seed"), "7");
  EXPECT_EQ(c.get("model.alpha"), "0.3");
  EXPECT_EQ(c.get("scale.n"), "500");
  EXPECT_FALSE(c.get("model.mu").has_value());
  EXPECT_THROW(parse_text("[model\nalpha=1\n"), ParameterError);
  EXPECT_THROW(parse_text("[model]\nalpha=1\nalpha=2\n"), ParameterError);
}

TEST(Config, RoundTripIsLossless) {
  ExperimentConfig e;
  e.model.alpha = 0.1 + 0.2;
  e.model.mu = 1.0 / 3.0;
  e.model.rho0 = 0.04999999999999999;
  e.model.branch2 = {Rational{1, 3}, Rational{2, 3}};
  e.seed = 123456789012345ULL;
  e.workers = 3;
  e.scale.eps = 0.0123456789;
  e.scale.samples = 777;
  std::istringstream in(e.to_config().dump());
  const ExperimentConfig f = ExperimentConfig::from_config(Config::parse(in));
  EXPECT_EQ(f.model.alpha, e.model.alpha);
  EXPECT_EQ(f.model.mu, e.model.mu);
  EXPECT_EQ(f.model.rho0, e.model.rho0);
  EXPECT_EQ(f.model.branch2[1].num, 2);
  EXPECT_EQ(f.seed, e.seed);
  EXPECT_EQ(f.workers, 3u);
  EXPECT_EQ(f.scale.eps, e.scale.eps);
  EXPECT_EQ(f.scale.samples, 777);
  EXPECT_EQ(f.to_config().dump(), e.to_config().dump());
}

TEST(Config, Overrides) {
  Config c;
  c.apply_override("model.alpha=0.35");
  c.apply_override("seed=9");
  const ExperimentConfig e = ExperimentConfig::from_config(c);
  EXPECT_EQ(e.model.alpha, 0.35);
  EXPECT_EQ(e.seed, 9u);
  EXPECT_THROW(c.apply_override("novalue"), ParameterError);
  EXPECT_THROW(c.apply_override("=3"), ParameterError);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  auto from = [](const std::string& t) { return ExperimentConfig::from_config(parse_text(t)); };
  EXPECT_THROW(from("[model]\nbeta = 1\n"), ParameterError);
  EXPECT_THROW(from("[model]\nalpha = abc\n"), ParameterError);
  EXPECT_THROW(from("[model]\nalpha = 0.2x\n"), ParameterError);
  EXPECT_THROW(from("[model]\nmatrix = 1 1 3\n"), ParameterError);
  EXPECT_THROW(from("[model]\nslowdown = maybe\n"), ParameterError);
  EXPECT_THROW(from("[scale]\nsamples = -5\n"), ParameterError);
  EXPECT_THROW(from("workers = 0\n"), ParameterError);
  EXPECT_THROW(from("[model]\ncut = 1/0 0\n"), ParameterError);
  EXPECT_THROW(Config::load("/nonexistent/dir/x.ini"), IoError);
}

TEST(Files, CsvAndSvg) {
  const auto dir = (std::filesystem::temp_directory_path() / "palab_io_test").string();
  ensure_dir(dir);
  write_csv(dir + "/t.csv", {"n", "v"}, {{1, 0.5}, {2, 1.0 / 3.0}});
  EXPECT_EQ(slurp(dir + "/t.csv"), "n,v\n1,0.5\n2,0.33333333333333331\n");
  PlotSpec spec;
  spec.title = "tail";
  spec.ylabel = "P";
  spec.series.push_back({"data", {1, 10, 100}, {1, 0.1, 0.01}, false});
  spec.series.push_back({"fit", {1, 100}, {1, 0.01}, true});
  const std::string svg = svg_plot(spec);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("polyline"), std::string::npos);
  EXPECT_NE(svg.find("tail"), std::string::npos);
  EXPECT_THROW(write_text("/nonexistent/dir/x.txt", "x"), IoError);
  std::filesystem::remove_all(dir);
}
