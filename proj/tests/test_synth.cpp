#include <doctest.h>

#include <cmath>
#include <map>

#include "snob/errors.hpp"
#include "snob/metrics.hpp"
#include "snob/norm_model.hpp"
#include "snob/rng.hpp"
#include "snob/synth.hpp"
#include "test_util.hpp"

using namespace snob;

namespace {

PlantedSpec small_spec(std::uint64_t seed, double coupling) {
  PlantedSpec spec;
  spec.occupations = {{"ajob", 0.2}, {"bjob", 0.5}, {"cjob", 0.8}};
  spec.docs_per_occupation = 500;
  spec.coupling = coupling;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("generation is byte-identical for a fixed seed") {
  testutil::TempDir dir("synth-det");
  for (int run = 0; run < 2; ++run) {
    save_corpus(generate_planted_corpus(small_spec(99, 0.5)),
                dir.file("c" + std::to_string(run) + ".jsonl"));
  }
  std::ifstream a(dir.file("c0.jsonl")), b(dir.file("c1.jsonl"));
  std::string sa((std::istreambuf_iterator<char>(a)),
                 std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)),
                 std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(!sa.empty());

  Corpus c1 = generate_planted_corpus(small_spec(99, 0.5));
  Corpus c2 = generate_planted_corpus(small_spec(100, 0.5));
  bool differs = false;
  for (std::size_t i = 0; i < c1.size() && !differs; ++i) {
    differs = c1.biographies()[i].tokens != c2.biographies()[i].tokens;
  }
  CHECK(differs);
}

TEST_CASE("empirical group shares match the targets") {
  Corpus corpus = generate_planted_corpus(small_spec(7, 0.0));
  const auto stats = group_stats(corpus);
  const std::map<std::string, double> targets = {
      {"ajob", 0.2}, {"bjob", 0.5}, {"cjob", 0.8}};
  for (const auto& s : stats) {
    CHECK(std::fabs(*s.p - targets.at(s.occupation)) <= 0.02);
  }
}

TEST_CASE("embeddings cover every planted token with unit vectors") {
  PlantedSpec spec = small_spec(3, 0.3);
  EmbeddingTable table = generate_planted_embeddings(spec);
  Corpus corpus = generate_planted_corpus(spec);
  for (const Biography& bio : corpus.biographies()) {
    for (const std::string& t : bio.tokens) {
      REQUIRE(table.contains(t));
    }
  }
  for (const std::string& w : table.words()) {
    double norm = 0;
    for (double v : table.vector_of(w)) norm += v * v;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("at coupling zero, background tokens are independent of the label") {
  PlantedSpec spec = small_spec(31, 0.0);
  spec.docs_per_occupation = 1500;
  Corpus corpus = generate_planted_corpus(spec);

  // chi-squared tests of token counts against one occupation vs the rest;
  // at the 0.99 level roughly 1% of independent tokens may still reject.
  const auto bg = planted_background_tokens(spec);
  int rejections = 0, tests = 0;
  for (const std::string& token : bg) {
    std::int64_t in_occ = 0, in_total = 0, out_occ = 0, out_total = 0;
    for (const Biography& bio : corpus.biographies()) {
      const bool inside = bio.occupation == "ajob";
      for (const std::string& t : bio.tokens) {
        (inside ? in_total : out_total) += 1;
        if (t == token) (inside ? in_occ : out_occ) += 1;
      }
    }
    ContingencyTable table;
    table.n = {{{in_occ, in_total - in_occ}, {out_occ, out_total - out_occ}}};
    if (table.p_value() < 0.01) ++rejections;
    ++tests;
  }
  CHECK(tests == static_cast<int>(bg.size()));
  CHECK(rejections <= tests / 20);  // comfortably near the nominal 1%
}

TEST_CASE("spec validation rejects infeasible parameters") {
  PlantedSpec spec = small_spec(1, 0.5);
  spec.norm_rate = 0.8;
  spec.occupation_rate = 0.3;  // 0.8 + 0.3*(1.5) > 1
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  PlantedSpec style = small_spec(1, 0.0);
  style.style_gap = 0.6;
  style.style_width = 0.9;  // support leaves [0,1]
  CHECK_THROWS_AS(style.validate(), ConfigError);

  PlantedSpec name = small_spec(1, 0.0);
  name.occupations[0].name = "Bad Name";
  CHECK_THROWS_AS(name.validate(), ConfigError);

  PlantedSpec kappa = small_spec(1, 1.4);
  CHECK_THROWS_AS(kappa.validate(), ConfigError);
}

TEST_CASE("spec json round trip") {
  PlantedSpec spec = small_spec(5, 0.7);
  spec.occupation_crosstalk = 0.2;
  spec.nb_docs_per_occupation = 9;
  PlantedSpec back = planted_spec_from_json(planted_spec_to_json(spec));
  CHECK(planted_spec_to_json(back).dump() == planted_spec_to_json(spec).dump());
}

TEST_CASE("oracle spearman: monotone, antitone and production agreement") {
  const std::vector<double> xs = {1, 2, 3, 4, 5, 6};
  std::vector<double> up = xs, down = xs;
  std::reverse(down.begin(), down.end());
  CHECK(oracle_spearman(xs, up) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(oracle_spearman(xs, down) == doctest::Approx(-1.0).epsilon(1e-12));

  Prng prng(53);
  int compared = 0;
  for (int iter = 0; iter < 1000; ++iter) {
    const std::size_t n = 3 + prng.below(30);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Heavy ties: draws from a coarse grid.
      a[i] = static_cast<double>(prng.below(6));
      b[i] = static_cast<double>(prng.below(6));
    }
    CorrelationResult mine = spearman(a, b);
    if (!mine.defined) continue;
    CHECK(std::fabs(mine.rho - oracle_spearman(a, b)) <= 1e-12);
    ++compared;
  }
  CHECK(compared > 800);
}

TEST_CASE("nonbinary documents are generated on request") {
  PlantedSpec spec = small_spec(11, 0.4);
  spec.nb_docs_per_occupation = 25;
  Corpus corpus = generate_planted_corpus(spec);
  for (const auto& s : group_stats(corpus)) {
    CHECK(s.n_nb == 25);
  }
}

}  // TEST_SUITE
