#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "snob/errors.hpp"
#include "snob/metrics.hpp"
#include "snob/rng.hpp"
#include "snob/synth.hpp"
#include "test_util.hpp"

using namespace snob;

namespace {

std::vector<double> random_with_ties(Prng& prng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) {
    // Coarse grid makes ties common.
    x = static_cast<double>(prng.below(8)) / 4.0 + prng.uniform() * 0.0;
  }
  return v;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("tpr counts group positives") {
  const std::vector<double> decisions = {1, 0, 1, 1, 0, 1};
  const std::vector<int> labels = {1, 1, 1, 0, 1, 0};
  const std::vector<unsigned char> all(6, 1);
  CHECK(tpr(decisions, labels, all).value() == doctest::Approx(0.5));

  const std::vector<double> perfect = {1, 1, 1, 0, 1, 0};
  CHECK(tpr(perfect, labels, all).value() == 1.0);
  const std::vector<double> none(6, 0.0);
  CHECK(tpr(none, labels, all).value() == 0.0);

  const std::vector<unsigned char> empty_group(6, 0);
  CHECK_FALSE(tpr(decisions, labels, empty_group).has_value());
}

TEST_CASE("tpr matches a counting oracle on random cases") {
  Prng prng(11);
  for (int iter = 0; iter < 20; ++iter) {
    const std::size_t n = 50;
    std::vector<double> decisions(n);
    std::vector<int> labels(n);
    std::vector<unsigned char> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      decisions[i] = prng.below(2) ? 1.0 : 0.0;
      labels[i] = prng.below(2) ? 1 : 0;
      mask[i] = prng.below(2) ? 1 : 0;
    }
    std::size_t pos = 0, hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i] && labels[i] == 1) {
        ++pos;
        if (decisions[i] == 1.0) ++hits;
      }
    }
    auto got = tpr(decisions, labels, mask);
    if (pos == 0) {
      CHECK_FALSE(got.has_value());
    } else {
      CHECK(got.value() ==
            doctest::Approx(static_cast<double>(hits) / static_cast<double>(pos)));
    }
  }
}

TEST_CASE("gap_rms formula") {
  CHECK(gap_rms(std::vector<double>{0.0, 0.0, 0.0}) == 0.0);
  CHECK(gap_rms(std::vector<double>{0.3, 0.4}) ==
        doctest::Approx(0.3535533906).epsilon(1e-9));
  CHECK(gap_rms(std::vector<double>{-0.125}) == doctest::Approx(0.125));
  CHECK_THROWS_AS(gap_rms(std::vector<double>{}), DataError);
}

TEST_CASE("gap_rms is permutation invariant") {
  Prng prng(3);
  std::vector<double> gaps(9);
  for (double& g : gaps) g = prng.uniform(-0.5, 0.5);
  const double base = gap_rms(gaps);
  for (int iter = 0; iter < 5; ++iter) {
    prng.shuffle(gaps);
    CHECK(gap_rms(gaps) == doctest::Approx(base).epsilon(1e-15));
  }
}

TEST_CASE("spearman: monotone, antitone, and frozen tied references") {
  const std::vector<double> xs = {1, 2, 3, 4, 5};
  const std::vector<double> up = {2, 4, 6, 8, 10};
  CorrelationResult r = spearman(xs, up);
  CHECK(r.rho == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.p_value < 1e-20);
  const std::vector<double> down = {5, 4, 3, 2, 1};
  CHECK(spearman(xs, down).rho == doctest::Approx(-1.0).epsilon(1e-12));

  // Frozen references for tied inputs (rho and two-sided p).
  {
    const std::vector<double> a = {1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 4.0, 5.0};
    const std::vector<double> b = {1.5, 1.5, 3.0, 2.0, 4.0, 4.0, 5.0, 6.0};
    CorrelationResult t = spearman(a, b);
    CHECK(t.rho == doctest::Approx(0.9256265453136692).epsilon(1e-12));
    CHECK(t.p_value == doctest::Approx(0.0009719602101529901).epsilon(1e-8));
  }
  {
    const std::vector<double> a = {3, 1, 4, 1, 5, 9, 2, 6, 5, 3};
    const std::vector<double> b = {2, 7, 1, 8, 2, 8, 1, 8, 2, 8};
    CorrelationResult t = spearman(a, b);
    CHECK(t.rho == doctest::Approx(0.13471506281091267).epsilon(1e-12));
    CHECK(t.p_value == doctest::Approx(0.7106008805223829).epsilon(1e-8));
  }
  {
    const std::vector<double> a = {0.1, 0.2, 0.2, 0.2, 0.9, 0.5,
                                   0.5, 0.3, 0.8, 0.7, 0.6, 0.4};
    const std::vector<double> b = {1, 1, 2, 2, 9, 4, 5, 3, 9, 7, 7, 3};
    CorrelationResult t = spearman(a, b);
    CHECK(t.rho == doctest::Approx(0.9822064056939501).epsilon(1e-12));
    CHECK(t.p_value == doctest::Approx(1.3634704437036892e-08).epsilon(1e-6));
  }
}

TEST_CASE("spearman flags constant input and rejects tiny n") {
  CHECK_FALSE(spearman(std::vector<double>{1, 1, 1},
                       std::vector<double>{1, 2, 3}).defined);
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
                  DataError);
}

TEST_CASE("spearman agrees with the independent oracle on tied random data") {
  Prng prng(23);
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n = 3 + prng.below(40);
    std::vector<double> xs = random_with_ties(prng, n);
    std::vector<double> ys = random_with_ties(prng, n);
    CorrelationResult mine = spearman(xs, ys);
    if (!mine.defined) continue;
    CHECK(mine.rho == doctest::Approx(oracle_spearman(xs, ys)).epsilon(1e-12));
  }
}

TEST_CASE("spearman is invariant under strictly monotone transforms") {
  Prng prng(29);
  std::vector<double> xs(25), ys(25);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = prng.uniform(-2, 2);
    ys[i] = prng.uniform(-2, 2);
  }
  const double base = spearman(xs, ys).rho;
  std::vector<double> ex(xs.size()), affine(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ex[i] = std::exp(xs[i]);
    affine[i] = 3.5 * xs[i] + 11.0;
  }
  CHECK(spearman(ex, ys).rho == doctest::Approx(base).epsilon(1e-12));
  CHECK(spearman(affine, ys).rho == doctest::Approx(base).epsilon(1e-12));
  // Symmetry in arguments, self-correlation, and sign flip.
  CHECK(spearman(ys, xs).rho == doctest::Approx(base).epsilon(1e-12));
  CHECK(spearman(xs, xs).rho == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> neg(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) neg[i] = -xs[i];
  CHECK(spearman(xs, neg).rho == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("p-values shrink as n grows for a fixed rho") {
  auto p_at = [](std::size_t n) {
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = static_cast<double>(i);
      // Two inversions per ten items keeps rho fixed below 1.
      ys[i] = static_cast<double>(i % 10 == 3 ? i + 2 : (i % 10 == 5 ? i - 2 : i));
    }
    return spearman(xs, ys);
  };
  const CorrelationResult small = p_at(20);
  const CorrelationResult large = p_at(80);
  CHECK(std::fabs(small.rho - large.rho) < 0.05);
  CHECK(large.p_value < small.p_value);
}

TEST_CASE("permutation p-value is calibrated against the t approximation") {
  Prng prng(31);
  std::vector<double> xs(24), ys(24);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = prng.uniform();
    ys[i] = 0.6 * xs[i] + 0.4 * prng.uniform();
  }
  CorrelationResult t = spearman(xs, ys);
  const double perm = spearman_permutation_p(xs, ys, 77, 20000);
  CHECK(perm == doctest::Approx(t.p_value).epsilon(0.5));
  CHECK(spearman_permutation_p(xs, ys, 77, 20000) == perm);  // fixed seed
}

TEST_CASE("snob_single: identical rankings give 1, short inputs undefined") {
  const std::vector<double> g = {0.1, 0.4, 0.2, 0.9};
  CHECK(snob_single(g, g).rho == doctest::Approx(1.0));
  CHECK_FALSE(snob_single(std::vector<double>{1, 2},
                          std::vector<double>{1, 2}).defined);
}

TEST_CASE("snob_cross drops undefined entries pairwise") {
  std::vector<std::optional<double>> p = {0.1, 0.3, std::nullopt, 0.7, 0.9};
  std::vector<std::optional<double>> r = {-0.5, -0.2, 0.9, 0.2, std::nullopt};
  CorrelationResult rho = snob_cross(p, r);
  CHECK(rho.n == 3);
  CHECK(rho.rho == doctest::Approx(1.0));  // monotone over surviving pairs

  std::vector<std::optional<double>> few = {0.1, std::nullopt, 0.9};
  CHECK_THROWS_AS(snob_cross(few, r = {std::nullopt, 0.0, 0.1}), DataError);
}

TEST_CASE("snob_cross flags constant r_C as undefined") {
  std::vector<std::optional<double>> p = {0.1, 0.3, 0.5, 0.7};
  std::vector<std::optional<double>> r = {0.2, 0.2, 0.2, 0.2};
  CHECK_FALSE(snob_cross(p, r).defined);
}

TEST_CASE("snob_nonbinary gates on n and uses the permutation test") {
  const std::vector<double> two = {0.1, 0.2};
  CHECK_FALSE(snob_nonbinary(two, two, 1).has_value());

  Prng prng(41);
  std::vector<double> g(21), y(21);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = prng.uniform();
    y[i] = g[i];
  }
  auto r = snob_nonbinary(g, y, 1);
  REQUIRE(r.has_value());
  CHECK(r->rho == doctest::Approx(1.0));
  CHECK(r->p_value < 0.01);  // even the permutation test is certain
}

TEST_CASE("assemble_report composes constituents and rejects mixed splits") {
  auto make_run = [](const std::string& occ, double p, double r, double gap,
                     const std::string& split) {
    OccupationRun run;
    run.split_id = split;
    run.config_hash = "cfg";
    run.audit.occupation = occ;
    run.audit.p_c = p;
    run.audit.gap = gap;
    CorrelationResult corr;
    corr.rho = r;
    corr.p_value = 0.01;
    corr.n = 50;
    corr.defined = true;
    run.audit.r = corr;
    return run;
  };
  std::vector<OccupationRun> runs = {
      make_run("a", 0.2, -0.4, 0.1, "s1"),
      make_run("b", 0.5, 0.0, -0.2, "s1"),
      make_run("c", 0.8, 0.5, 0.05, "s1"),
  };
  AuditReport report = assemble_report("bow", "none", runs, 0.9, 0.85, {},
                                       nlohmann::json::object());
  CHECK(report.approach == "bow+none");
  CHECK(report.gap_rms_value ==
        doctest::Approx(gap_rms(std::vector<double>{0.1, -0.2, 0.05})));
  REQUIRE(report.rho.has_value());
  CHECK(report.rho->rho == doctest::Approx(1.0));
  CHECK(report.occupations.size() == 3);

  runs[1].split_id = "s2";
  CHECK_THROWS_WITH_AS(assemble_report("bow", "none", runs, 0.9, 0.85, {},
                                       nlohmann::json::object()),
                       doctest::Contains("different splits"), DataError);
}

TEST_CASE("report json round trip is lossless and deterministic") {
  testutil::TempDir dir("report-rt");
  OccupationRun run;
  run.split_id = "s";
  run.config_hash = "c";
  run.audit.occupation = "only";
  run.audit.p_c = 0.25;
  run.audit.tpr_she = 0.8;
  run.audit.tpr_he = 0.9;
  run.audit.gap = -0.1;
  CorrelationResult corr;
  corr.rho = -0.35;
  corr.p_value = 0.04;
  corr.n = 40;
  corr.defined = true;
  run.audit.r = corr;
  run.audit.n_she_used = 40;
  OccupationRun run2 = run;
  run2.audit.occupation = "second";
  run2.audit.p_c = 0.75;
  run2.audit.r->rho = 0.2;
  OccupationRun run3 = run;
  run3.audit.occupation = "third";
  run3.audit.p_c = 0.5;
  run3.audit.r->rho = 0.0;
  AuditReport report = assemble_report(
      "we", "po", std::vector<OccupationRun>{run, run2, run3}, 0.97, 0.9, {},
      nlohmann::json{{"min_df", 5}});

  write_report(report, dir.file("r.json"));
  AuditReport back = read_report(dir.file("r.json"));
  CHECK(report_to_json(back).dump() == report_to_json(report).dump());
  write_report(back, dir.file("r2.json"));

  std::ifstream a(dir.file("r.json")), b(dir.file("r2.json"));
  std::string sa((std::istreambuf_iterator<char>(a)),
                 std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)),
                 std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

}  // TEST_SUITE
