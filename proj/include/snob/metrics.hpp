#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace snob {

struct CorrelationResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool defined = false;
};

// Fraction of group positives decided positive. Decisions may be probabilities
// in [0, 1] (expected decisions under a randomized threshold); plain binary
// decisions are the 0/1 special case. Zero positives in the group -> nullopt.
std::optional<double> tpr(std::span<const double> decisions,
                          std::span<const int> labels,
                          std::span<const unsigned char> group_mask);

// sqrt(mean of squared per-occupation gaps); empty input is an error.
double gap_rms(std::span<const double> gaps);

// Spearman rank correlation with average ranks for ties; two-sided p-value
// from the t-approximation t = rho*sqrt((n-2)/(1-rho^2)) with n-2 df.
// Constant inputs give defined=false. n < 3 is an error.
CorrelationResult spearman(std::span<const double> xs, std::span<const double> ys);

// Exact-style permutation p-value (fixed seed, default 1e5 permutations).
double spearman_permutation_p(std::span<const double> xs,
                              std::span<const double> ys, std::uint64_t seed,
                              int n_permutations = 100000);

// r_c: within-group correlation between occupation-classifier scores and
// norm-classifier scores. Positive means feminine-aligned writing is rewarded.
// Fewer than 3 pairs -> defined=false (excluded from cross-occupation rho).
CorrelationResult snob_single(std::span<const double> g_scores,
                              std::span<const double> yc_scores);

// rho(p_C, r_C) across occupations; undefined entries dropped pairwise;
// fewer than 3 surviving occupations is an error.
CorrelationResult snob_cross(std::span<const std::optional<double>> p_by_occ,
                             std::span<const std::optional<double>> r_by_occ);

// Same correlation over a nonbinary evaluation set; n < 3 -> nullopt, and the
// permutation test replaces the t-approximation for n < 30.
std::optional<CorrelationResult> snob_nonbinary(std::span<const double> g_scores,
                                                std::span<const double> yc_scores,
                                                std::uint64_t perm_seed);

struct OccupationAudit {
  std::string occupation;
  std::optional<double> p_c;
  std::optional<double> tpr_she;
  std::optional<double> tpr_he;
  std::optional<double> gap;  // tpr_she - tpr_he
  std::optional<CorrelationResult> r;
  std::optional<CorrelationResult> r_irrev;
  std::size_t n_she_used = 0;
  std::vector<std::string> notes;
};

struct NonbinaryAudit {
  std::string occupation;
  std::string model_tag;  // "pooled", "she", "he"
  std::optional<CorrelationResult> r;
  std::size_t n = 0;
  std::vector<std::string> notes;
};

struct AuditReport {
  std::string approach;      // "<repr>+<intervention>"
  std::string repr;          // bow | we | external
  std::string intervention;  // none | pr | po | de
  std::string config_hash;
  std::string split_id;
  double accuracy_binary_macro = 0.0;
  double accuracy_multiclass = 0.0;
  double gap_rms_value = 0.0;
  std::optional<CorrelationResult> rho;
  std::optional<CorrelationResult> rho_irrev;
  std::vector<OccupationAudit> occupations;
  std::vector<NonbinaryAudit> nonbinary;
  nlohmann::json settings;  // logged knobs: indicators, min_df, solver, ...
};

// One occupation's metrics stamped with the split/config they came from, so
// assembly can reject mixed inputs.
struct OccupationRun {
  std::string split_id;
  std::string config_hash;
  OccupationAudit audit;
};

AuditReport assemble_report(const std::string& repr_tag,
                            const std::string& intervention,
                            std::span<const OccupationRun> runs,
                            double accuracy_binary_macro,
                            double accuracy_multiclass,
                            std::vector<NonbinaryAudit> nonbinary,
                            nlohmann::json settings);

nlohmann::json report_to_json(const AuditReport& report);
AuditReport report_from_json(const nlohmann::json& j);
void write_report(const AuditReport& report, const std::filesystem::path& path);
AuditReport read_report(const std::filesystem::path& path);

}  // namespace snob
