#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace cdml {

// strict: outcome and modifier must lie in [0, 1].
// synthetic: any finite real is accepted (generator output is not clamped).
enum class ValidationMode { strict, synthetic };

std::string_view to_string(ValidationMode mode) noexcept;
ValidationMode parse_validation_mode(std::string_view text);

// A cluster-level covariate cell: numeric, or a categorical level.
using CovariateValue = std::variant<double, std::string>;

struct Contest {
  std::string id;
  int treatment = 0;                         // 0 or 1, one value per cluster
  std::vector<CovariateValue> covariates;    // z_ columns, in header order
  friend bool operator==(const Contest&, const Contest&) = default;
};

struct PrecinctRow {
  std::size_t cluster = 0;                   // index into PanelDataset::contests()
  std::string precinct_id;
  double outcome = 0.0;                      // y
  double modifier = 0.0;                     // x
  std::vector<double> covariates;            // w_ columns, in header order
  friend bool operator==(const PrecinctRow&, const PrecinctRow&) = default;
};

// Clustered panel. Rows are stored grouped by cluster in contest order, so the
// rows of cluster c occupy [cluster_begin(c), cluster_begin(c) + cluster_size(c)).
// Immutable after construction.
class PanelDataset {
 public:
  PanelDataset() = default;

  // Validates and groups rows by cluster (stable within a cluster). Throws
  // cdml::Error on any invariant violation.
  static PanelDataset build(std::vector<std::string> w_names,
                            std::vector<std::string> z_names,
                            std::vector<Contest> contests,
                            std::vector<PrecinctRow> rows, ValidationMode mode);

  const std::vector<Contest>& contests() const noexcept { return contests_; }
  const std::vector<PrecinctRow>& rows() const noexcept { return rows_; }
  const std::vector<std::string>& w_names() const noexcept { return w_names_; }
  const std::vector<std::string>& z_names() const noexcept { return z_names_; }
  ValidationMode mode() const noexcept { return mode_; }

  std::size_t cluster_count() const noexcept { return contests_.size(); }
  std::size_t row_count() const noexcept { return rows_.size(); }
  std::size_t cluster_size(std::size_t c) const { return offsets_[c + 1] - offsets_[c]; }
  std::size_t cluster_begin(std::size_t c) const { return offsets_[c]; }
  std::span<const PrecinctRow> cluster_rows(std::size_t c) const {
    return {rows_.data() + offsets_[c], cluster_size(c)};
  }
  int treatment_of_row(std::size_t i) const { return contests_[rows_[i].cluster].treatment; }

  // Column views in row order.
  Eigen::VectorXd outcomes() const;
  Eigen::VectorXd modifiers() const;

  // A copy with outcomes replaced (same length as row_count()).
  PanelDataset with_outcomes(const Eigen::VectorXd& y) const;

  friend bool operator==(const PanelDataset&, const PanelDataset&) = default;

 private:
  std::vector<std::string> w_names_;
  std::vector<std::string> z_names_;
  std::vector<Contest> contests_;
  std::vector<PrecinctRow> rows_;
  std::vector<std::size_t> offsets_;
  ValidationMode mode_ = ValidationMode::strict;
};

PanelDataset ingest_csv(std::istream& in, ValidationMode mode);
PanelDataset ingest_csv(const std::filesystem::path& path, ValidationMode mode);

// Writes the single-party schema; doubles use the shortest round-trip form.
void write_csv(const PanelDataset& ds, std::ostream& out);
void write_csv(const PanelDataset& ds, const std::filesystem::path& path);

struct DesignSummary {
  std::size_t clusters = 0;
  std::size_t rows = 0;
  std::size_t treated = 0;
  std::size_t control = 0;
  double treated_share = 0.0;
  bool small_cluster_warning = false;  // fewer than kSmallClusterCount clusters
};

inline constexpr std::size_t kSmallClusterCount = 10;

// Throws DegenerateTreatment when every cluster is treated or every cluster is control.
DesignSummary validate_design(const PanelDataset& ds);

// Two-party panel: both parties' outcome and modifier shares per row.
struct TwoPartyRow {
  std::size_t cluster = 0;
  std::string precinct_id;
  double y_d = 0.0;
  double y_r = 0.0;
  double x_d = 0.0;
  double x_r = 0.0;
  std::vector<double> covariates;
};

struct TwoPartyPanel {
  std::vector<std::string> w_names;
  std::vector<std::string> z_names;
  std::vector<Contest> contests;
  std::vector<TwoPartyRow> rows;
  ValidationMode mode = ValidationMode::strict;
};

TwoPartyPanel ingest_two_party_csv(std::istream& in, ValidationMode mode);
TwoPartyPanel ingest_two_party_csv(const std::filesystem::path& path, ValidationMode mode);
void write_two_party_csv(const TwoPartyPanel& panel, std::ostream& out);

// (party D dataset, party R dataset).
std::pair<PanelDataset, PanelDataset> split_by_party(const TwoPartyPanel& panel);

// Nuisance feature matrix (N x p): modifier, w_ columns, numeric z_ columns,
// then one-hot categorical z_ columns with the lexicographically first level
// dropped.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
};

FeatureMatrix design_features(const PanelDataset& ds);

}  // namespace cdml
