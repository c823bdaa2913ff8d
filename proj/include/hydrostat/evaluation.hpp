#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hydrostat/control.hpp"
#include "hydrostat/sensors.hpp"

namespace hydrostat::eval {

struct EvaluationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// |v1 - v2| / |(v1 + v2) / 2| * 100 at full precision.
/// Throws EvaluationError when v1 + v2 == 0.
double percentage_difference(double v1, double v2);

/// Truncates toward zero to `decimals` places, absorbing representation
/// error so 6.8 does not print as 6.7.
double truncate_to(double value, int decimals);

/// Half-up rounding with the same guard.
double round_to(double value, int decimals);

struct LikertBand {
    int scale_point;
    std::string_view agreement;
    std::string_view quality;
    double low;
    double high;
};

inline constexpr std::array<LikertBand, 5> kLikertBands = {{
    {5, "Strongly Agree", "Excellent", 4.20, 5.00},
    {4, "Agree", "Very Good", 3.40, 4.19},
    {3, "Slightly Agree", "Good", 2.60, 3.39},
    {2, "Disagree", "Fair", 1.80, 2.59},
    {1, "Strongly Disagree", "Deficient", 1.00, 1.79},
}};

/// The mean is rounded to two decimals before lookup so the printed
/// intervals partition [1.00, 5.00]. Throws outside that range.
const LikertBand& likert_band(double mean);

struct ItemStats {
    double mean;
    double std_dev; ///< sample (n-1); 0 for a single response
    const LikertBand* band;
};

ItemStats likert_item_stats(std::span<const int> scores);

struct GrandMean {
    double mean;      ///< unrounded
    double displayed; ///< rounded to two decimals
    const LikertBand* band;
};

GrandMean grand_mean(std::span<const double> item_means);

/// Respondents x items. Cells are validated as Likert scores in 1..5.
class SurveyMatrix {
public:
    SurveyMatrix(std::vector<std::string> item_labels, std::vector<std::vector<int>> rows);

    std::size_t respondents() const { return rows_.size(); }
    std::size_t items() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }
    int at(std::size_t respondent, std::size_t item) const { return rows_[respondent][item]; }
    std::vector<int> column(std::size_t item) const;
    /// Column-major copy as reals for the alpha routines.
    std::vector<std::vector<double>> columns() const;

private:
    std::vector<std::string> labels_;
    std::vector<std::vector<int>> rows_;
};

struct AlphaResult {
    double raw;
    double standardized;
};

struct DegenerateVariance : EvaluationError {
    DegenerateVariance(std::string what_is_constant, const std::string& message)
        : EvaluationError(message), subject(std::move(what_is_constant)) {}
    std::string subject; ///< an item label, or "total"
};

/// Columns are items; each column holds one value per respondent.
/// Requires at least two items and two respondents.
double raw_alpha(const std::vector<std::vector<double>>& items);
double standardized_alpha(const std::vector<std::vector<double>>& items,
                          std::span<const std::string> labels = {});
AlphaResult cronbach_alpha(const SurveyMatrix& matrix);

double sample_variance(std::span<const double> xs);
double pearson_correlation(std::span<const double> a, std::span<const double> b);

struct TrialRow {
    SensorKind parameter;
    int trial;
    double prototype;
    double commercial;
};

struct TrialCell {
    TrialRow row;
    double percent;   ///< full precision
    double displayed; ///< truncated for the report
    std::optional<bool> prototype_in_ideal_range; ///< empty when the parameter has no ideal band
};

struct TrialReport {
    std::vector<TrialCell> cells;
    int display_decimals = 1;
};

/// Ideal-band membership; light has none.
std::optional<bool> in_ideal_range(SensorKind parameter, double value, const Thresholds& t);

struct SeriesPair {
    SensorKind parameter;
    std::vector<double> prototype;
    std::vector<double> commercial;
};

/// Throws EvaluationError on length mismatch.
TrialReport compare_trials(const std::vector<SeriesPair>& series, const Thresholds& thresholds = {},
                           int display_decimals = 1);
TrialReport compare_trials(const std::vector<TrialRow>& rows, const Thresholds& thresholds = {},
                           int display_decimals = 1);

// Input files.

struct InputFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// `parameter,trial,prototype,commercial`
std::vector<TrialRow> read_trials(std::istream& in, std::string_view source = "<stream>");
std::vector<TrialRow> read_trials(const std::filesystem::path& path);

/// Header row of item labels, then one row of integer scores per respondent.
SurveyMatrix read_survey(std::istream& in, std::string_view source = "<stream>");
SurveyMatrix read_survey(const std::filesystem::path& path);

struct ItemMean {
    std::string criterion;
    int item;
    double mean;
};

/// `criterion,item,mean`
std::vector<ItemMean> read_item_means(std::istream& in, std::string_view source = "<stream>");
std::vector<ItemMean> read_item_means(const std::filesystem::path& path);

// Reports.

void render_trial_table(std::ostream& out, const TrialReport& report);
void render_trial_csv(std::ostream& out, const TrialReport& report);

struct CriterionSummary {
    std::string criterion;
    std::vector<double> item_means;
    GrandMean grand;
};

std::vector<CriterionSummary> summarize_item_means(const std::vector<ItemMean>& means);
void render_grand_means(std::ostream& out, const std::vector<CriterionSummary>& summaries);

struct SurveySummary {
    std::vector<std::string> labels;
    std::vector<ItemStats> items;
    GrandMean grand;
    std::optional<AlphaResult> alpha;
    std::string alpha_error;
};

SurveySummary summarize_survey(const SurveyMatrix& matrix);
void render_survey(std::ostream& out, const SurveySummary& summary);

} // namespace hydrostat::eval
