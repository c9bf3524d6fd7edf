#include "snob/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "snob/errors.hpp"
#include "snob/rng.hpp"
#include "snob/stats.hpp"

namespace snob {

std::optional<double> tpr(std::span<const double> decisions,
                          std::span<const int> labels,
                          std::span<const unsigned char> group_mask) {
  if (decisions.size() != labels.size() || labels.size() != group_mask.size()) {
    throw DataError("tpr input length mismatch");
  }
  double hits = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!group_mask[i] || labels[i] != 1) continue;
    ++positives;
    hits += decisions[i];
  }
  if (positives == 0) {
    std::cerr << "warning: TPR undefined (no positives in group)\n";
    return std::nullopt;
  }
  return hits / static_cast<double>(positives);
}

double gap_rms(std::span<const double> gaps) {
  if (gaps.empty()) throw DataError("gap_rms of empty gap list");
  double sq = 0;
  for (double g : gaps) sq += g * g;
  return std::sqrt(sq / static_cast<double>(gaps.size()));
}

CorrelationResult spearman(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (n != ys.size()) throw DataError("spearman input length mismatch");
  if (n < 3) throw DataError("spearman requires n >= 3");

  std::vector<double> rx(n), ry(n);
  stats::average_ranks(xs, rx);
  stats::average_ranks(ys, ry);

  CorrelationResult out;
  out.n = n;
  double rho;
  if (!stats::pearson(rx, ry, rho)) {
    out.defined = false;  // a constant input has no rank ordering
    return out;
  }
  rho = std::clamp(rho, -1.0, 1.0);
  out.rho = rho;
  out.defined = true;
  if (std::fabs(rho) >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double df = static_cast<double>(n - 2);
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    out.p_value = stats::t_two_sided_p(t, df);
  }
  return out;
}

double spearman_permutation_p(std::span<const double> xs,
                              std::span<const double> ys, std::uint64_t seed,
                              int n_permutations) {
  CorrelationResult observed = spearman(xs, ys);
  if (!observed.defined) return 1.0;
  const double target = std::fabs(observed.rho) - 1e-12;

  std::vector<double> shuffled(ys.begin(), ys.end());
  Prng prng(seed);
  int at_least = 0;
  for (int k = 0; k < n_permutations; ++k) {
    prng.shuffle(shuffled);
    CorrelationResult perm = spearman(xs, shuffled);
    if (perm.defined && std::fabs(perm.rho) >= target) ++at_least;
  }
  return static_cast<double>(at_least + 1) / static_cast<double>(n_permutations + 1);
}

CorrelationResult snob_single(std::span<const double> g_scores,
                              std::span<const double> yc_scores) {
  if (g_scores.size() != yc_scores.size()) {
    throw DataError("snob_single score length mismatch");
  }
  if (g_scores.size() < 3) {
    CorrelationResult r;
    r.n = g_scores.size();
    r.defined = false;
    return r;
  }
  return spearman(yc_scores, g_scores);
}

CorrelationResult snob_cross(std::span<const std::optional<double>> p_by_occ,
                             std::span<const std::optional<double>> r_by_occ) {
  if (p_by_occ.size() != r_by_occ.size()) {
    throw DataError("snob_cross input length mismatch");
  }
  std::vector<double> ps, rs;
  for (std::size_t i = 0; i < p_by_occ.size(); ++i) {
    if (p_by_occ[i] && r_by_occ[i]) {
      ps.push_back(*p_by_occ[i]);
      rs.push_back(*r_by_occ[i]);
    }
  }
  if (ps.size() < 3) {
    throw DataError("snob_cross needs at least 3 occupations with defined values");
  }
  return spearman(ps, rs);
}

std::optional<CorrelationResult> snob_nonbinary(std::span<const double> g_scores,
                                                std::span<const double> yc_scores,
                                                std::uint64_t perm_seed) {
  const std::size_t n = g_scores.size();
  if (n < 3) return std::nullopt;
  CorrelationResult r = snob_single(g_scores, yc_scores);
  if (r.defined && n < 30) {
    r.p_value = spearman_permutation_p(yc_scores, g_scores, perm_seed);
  }
  return r;
}

namespace {

nlohmann::json corr_to_json(const CorrelationResult& r) {
  nlohmann::json j;
  j["defined"] = r.defined;
  j["n"] = r.n;
  if (r.defined) {
    j["rho"] = r.rho;
    j["p_value"] = r.p_value;
  }
  return j;
}

CorrelationResult corr_from_json(const nlohmann::json& j) {
  CorrelationResult r;
  r.defined = j.at("defined").get<bool>();
  r.n = j.at("n").get<std::size_t>();
  if (r.defined) {
    r.rho = j.at("rho").get<double>();
    r.p_value = j.at("p_value").get<double>();
  }
  return r;
}

template <typename T>
nlohmann::json opt_to_json(const std::optional<T>& v) {
  if (!v) return nullptr;
  return *v;
}

std::optional<double> opt_double_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

AuditReport assemble_report(const std::string& repr_tag,
                            const std::string& intervention,
                            std::span<const OccupationRun> runs,
                            double accuracy_binary_macro,
                            double accuracy_multiclass,
                            std::vector<NonbinaryAudit> nonbinary,
                            nlohmann::json settings) {
  if (runs.empty()) throw DataError("assemble_report with no occupation runs");
  for (const OccupationRun& run : runs) {
    if (run.split_id != runs.front().split_id) {
      throw DataError("assembly error: occupation metrics from different splits");
    }
    if (run.config_hash != runs.front().config_hash) {
      throw DataError("assembly error: occupation metrics from different configs");
    }
  }

  AuditReport report;
  report.repr = repr_tag;
  report.intervention = intervention;
  report.approach = repr_tag + "+" + intervention;
  report.config_hash = runs.front().config_hash;
  report.split_id = runs.front().split_id;
  report.accuracy_binary_macro = accuracy_binary_macro;
  report.accuracy_multiclass = accuracy_multiclass;
  report.nonbinary = std::move(nonbinary);
  report.settings = std::move(settings);

  std::vector<double> gaps;
  std::vector<std::optional<double>> ps, rs, rs_irrev;
  bool any_irrev = false;
  for (const OccupationRun& run : runs) {
    report.occupations.push_back(run.audit);
    const OccupationAudit& a = run.audit;
    if (a.gap) gaps.push_back(*a.gap);
    ps.push_back(a.p_c);
    rs.push_back(a.r && a.r->defined ? std::optional<double>(a.r->rho)
                                     : std::nullopt);
    rs_irrev.push_back(a.r_irrev && a.r_irrev->defined
                           ? std::optional<double>(a.r_irrev->rho)
                           : std::nullopt);
    if (a.r_irrev) any_irrev = true;
  }
  report.gap_rms_value = gap_rms(gaps);
  report.rho = snob_cross(ps, rs);
  if (any_irrev) report.rho_irrev = snob_cross(ps, rs_irrev);
  return report;
}

nlohmann::json report_to_json(const AuditReport& report) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["approach"] = report.approach;
  j["repr"] = report.repr;
  j["intervention"] = report.intervention;
  j["config_hash"] = report.config_hash;
  j["split_id"] = report.split_id;
  j["accuracy_binary_macro"] = report.accuracy_binary_macro;
  j["accuracy_multiclass"] = report.accuracy_multiclass;
  j["gap_rms"] = report.gap_rms_value;
  j["rho"] = report.rho ? corr_to_json(*report.rho) : nlohmann::json(nullptr);
  j["rho_irrev"] =
      report.rho_irrev ? corr_to_json(*report.rho_irrev) : nlohmann::json(nullptr);
  j["settings"] = report.settings;

  nlohmann::json occs = nlohmann::json::array();
  for (const OccupationAudit& a : report.occupations) {
    nlohmann::json o;
    o["occupation"] = a.occupation;
    o["p_c"] = opt_to_json(a.p_c);
    o["tpr_she"] = opt_to_json(a.tpr_she);
    o["tpr_he"] = opt_to_json(a.tpr_he);
    o["gap"] = opt_to_json(a.gap);
    o["r_c"] = a.r ? corr_to_json(*a.r) : nlohmann::json(nullptr);
    o["r_irrev_c"] = a.r_irrev ? corr_to_json(*a.r_irrev) : nlohmann::json(nullptr);
    o["n_she_used"] = a.n_she_used;
    o["notes"] = a.notes;
    occs.push_back(std::move(o));
  }
  j["occupations"] = std::move(occs);

  nlohmann::json nbs = nlohmann::json::array();
  for (const NonbinaryAudit& a : report.nonbinary) {
    nlohmann::json o;
    o["occupation"] = a.occupation;
    o["model"] = a.model_tag;
    o["r_nb"] = a.r ? corr_to_json(*a.r) : nlohmann::json(nullptr);
    o["n"] = a.n;
    o["notes"] = a.notes;
    nbs.push_back(std::move(o));
  }
  j["nonbinary"] = std::move(nbs);
  return j;
}

AuditReport report_from_json(const nlohmann::json& j) {
  AuditReport report;
  report.approach = j.at("approach").get<std::string>();
  report.repr = j.at("repr").get<std::string>();
  report.intervention = j.at("intervention").get<std::string>();
  report.config_hash = j.at("config_hash").get<std::string>();
  report.split_id = j.at("split_id").get<std::string>();
  report.accuracy_binary_macro = j.at("accuracy_binary_macro").get<double>();
  report.accuracy_multiclass = j.at("accuracy_multiclass").get<double>();
  report.gap_rms_value = j.at("gap_rms").get<double>();
  if (!j.at("rho").is_null()) report.rho = corr_from_json(j.at("rho"));
  if (!j.at("rho_irrev").is_null()) {
    report.rho_irrev = corr_from_json(j.at("rho_irrev"));
  }
  report.settings = j.at("settings");
  for (const auto& o : j.at("occupations")) {
    OccupationAudit a;
    a.occupation = o.at("occupation").get<std::string>();
    a.p_c = opt_double_from_json(o.at("p_c"));
    a.tpr_she = opt_double_from_json(o.at("tpr_she"));
    a.tpr_he = opt_double_from_json(o.at("tpr_he"));
    a.gap = opt_double_from_json(o.at("gap"));
    if (!o.at("r_c").is_null()) a.r = corr_from_json(o.at("r_c"));
    if (!o.at("r_irrev_c").is_null()) a.r_irrev = corr_from_json(o.at("r_irrev_c"));
    a.n_she_used = o.at("n_she_used").get<std::size_t>();
    a.notes = o.at("notes").get<std::vector<std::string>>();
    report.occupations.push_back(std::move(a));
  }
  for (const auto& o : j.at("nonbinary")) {
    NonbinaryAudit a;
    a.occupation = o.at("occupation").get<std::string>();
    a.model_tag = o.at("model").get<std::string>();
    if (!o.at("r_nb").is_null()) a.r = corr_from_json(o.at("r_nb"));
    a.n = o.at("n").get<std::size_t>();
    a.notes = o.at("notes").get<std::vector<std::string>>();
    report.nonbinary.push_back(std::move(a));
  }
  return report;
}

void write_report(const AuditReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path.string());
  out << report_to_json(report).dump(2) << '\n';
}

AuditReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    return report_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed report " + path.string() + ": " + e.what());
  }
}

}  // namespace snob
