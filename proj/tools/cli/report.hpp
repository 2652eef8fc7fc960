#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "cdml/bootstrap.hpp"
#include "cdml/estimator.hpp"
#include "cdml/inference.hpp"
#include "cdml/panel.hpp"
#include "cdml/simgen.hpp"

namespace cdml::report {

using nlohmann::json;

// One row per coefficient: estimate, cluster-robust SE, t, two-sided p, CI.
json coefficient_table(const DmlFit& fit, const InferenceState& state, double alpha);

json test_json(const TestResult& result);
json not_applicable(const std::string& reason);
json sup_test_json(const SupTestResult& result);
json mistakes_json(const MistakesEstimate& m, double alpha);
json curve_json(const BandResult& band);
json design_json(const DesignSummary& summary);
json learner_json(const LearnerSpec& spec);
json sim_config_json(const SimConfig& cfg);
json truth_json(const SimTruth& truth, std::uint64_t seed);
json mc_report_json(const McReport& report);

// Columns x, f_hat, se, pw_lo, pw_hi, uni_lo, uni_hi.
void write_curve_csv(const BandResult& band, std::ostream& out);

// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace cdml::report
