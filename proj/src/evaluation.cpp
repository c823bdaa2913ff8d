#include "hydrostat/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "strings.hpp"

namespace hydrostat::eval {

namespace {

double guard(double scaled) { return 1e-9 * std::max(1.0, std::abs(scaled)); }

double mean_of(std::span<const double> xs)
{
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

void require_shape(const std::vector<std::vector<double>>& items)
{
    if (items.size() < 2)
        throw EvaluationError("alpha needs at least two items");
    auto n = items.front().size();
    if (n < 2)
        throw EvaluationError("alpha needs at least two respondents");
    for (const auto& col : items)
        if (col.size() != n)
            throw EvaluationError("every item needs one score per respondent");
}

std::string item_name(std::span<const std::string> labels, std::size_t i)
{
    return i < labels.size() ? labels[i] : fmt::format("item {}", i + 1);
}

/// Yields non-blank, non-comment lines with their 1-based line numbers.
template <class Fn>
void for_each_row(std::istream& in, Fn&& fn)
{
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto text = detail::trim(line);
        if (text.empty() || text.front() == '#')
            continue;
        fn(line_no, text);
    }
}

template <class T, class Reader>
T read_file(const std::filesystem::path& path, Reader reader)
{
    std::ifstream in(path);
    if (!in)
        throw InputFormatError(fmt::format("cannot open '{}'", path.string()));
    return reader(in, path.string());
}

} // namespace

double percentage_difference(double v1, double v2)
{
    double sum = v1 + v2;
    if (sum == 0.0)
        throw EvaluationError(fmt::format("percentage difference undefined: {} + {} is zero", v1, v2));
    return std::abs(v1 - v2) / std::abs(sum / 2.0) * 100.0;
}

double truncate_to(double value, int decimals)
{
    double scale = std::pow(10.0, decimals);
    double scaled = value * scale;
    return (scaled >= 0 ? std::floor(scaled + guard(scaled)) : std::ceil(scaled - guard(scaled))) / scale;
}

double round_to(double value, int decimals)
{
    double scale = std::pow(10.0, decimals);
    double scaled = value * scale;
    return (scaled >= 0 ? std::floor(scaled + 0.5 + guard(scaled)) : std::ceil(scaled - 0.5 - guard(scaled))) / scale;
}

const LikertBand& likert_band(double mean)
{
    double r = round_to(mean, 2);
    if (!(r >= 1.0 - 1e-9 && r <= 5.0 + 1e-9))
        throw EvaluationError(fmt::format("mean {} lies outside the 1-5 Likert scale", mean));
    for (const auto& band : kLikertBands)
        if (r >= band.low - 0.005)
            return band;
    return kLikertBands.back();
}

double sample_variance(std::span<const double> xs)
{
    if (xs.size() < 2)
        return 0.0;
    double m = mean_of(xs);
    double ss = 0;
    for (double x : xs)
        ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

double pearson_correlation(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.size() < 2)
        throw EvaluationError("correlation needs two equal-length series of at least two values");
    double ma = mean_of(a), mb = mean_of(b);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

ItemStats likert_item_stats(std::span<const int> scores)
{
    if (scores.empty())
        throw EvaluationError("item has no responses");
    std::vector<double> xs;
    xs.reserve(scores.size());
    for (int s : scores) {
        if (s < 1 || s > 5)
            throw EvaluationError(fmt::format("score {} is not on the 1-5 scale", s));
        xs.push_back(s);
    }
    double m = mean_of(xs);
    return {m, std::sqrt(sample_variance(xs)), &likert_band(m)};
}

GrandMean grand_mean(std::span<const double> item_means)
{
    if (item_means.empty())
        throw EvaluationError("grand mean of an empty criterion");
    for (double m : item_means)
        if (!(m >= 1.0 && m <= 5.0))
            throw EvaluationError(fmt::format("item mean {} lies outside the 1-5 Likert scale", m));
    double m = mean_of(item_means);
    return {m, round_to(m, 2), &likert_band(m)};
}

SurveyMatrix::SurveyMatrix(std::vector<std::string> item_labels, std::vector<std::vector<int>> rows)
    : labels_(std::move(item_labels)), rows_(std::move(rows))
{
    if (labels_.empty())
        throw EvaluationError("survey has no items");
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        if (rows_[r].size() != labels_.size())
            throw EvaluationError(fmt::format("respondent {} has {} scores for {} items", r + 1, rows_[r].size(),
                                              labels_.size()));
        for (std::size_t c = 0; c < rows_[r].size(); ++c)
            if (rows_[r][c] < 1 || rows_[r][c] > 5)
                throw EvaluationError(fmt::format("respondent {}, item '{}': score {} is not on the 1-5 scale", r + 1,
                                                  labels_[c], rows_[r][c]));
    }
}

std::vector<int> SurveyMatrix::column(std::size_t item) const
{
    std::vector<int> out;
    out.reserve(rows_.size());
    for (const auto& row : rows_)
        out.push_back(row[item]);
    return out;
}

std::vector<std::vector<double>> SurveyMatrix::columns() const
{
    std::vector<std::vector<double>> out(items());
    for (std::size_t c = 0; c < items(); ++c)
        for (const auto& row : rows_)
            out[c].push_back(row[c]);
    return out;
}

double raw_alpha(const std::vector<std::vector<double>>& items)
{
    require_shape(items);
    const auto k = static_cast<double>(items.size());
    const auto n = items.front().size();
    std::vector<double> totals(n, 0.0);
    double item_var_sum = 0;
    for (const auto& col : items) {
        item_var_sum += sample_variance(col);
        for (std::size_t r = 0; r < n; ++r)
            totals[r] += col[r];
    }
    double total_var = sample_variance(totals);
    if (total_var <= 0.0)
        throw DegenerateVariance("total", "total scores are constant across respondents");
    return k / (k - 1.0) * (1.0 - item_var_sum / total_var);
}

double standardized_alpha(const std::vector<std::vector<double>>& items, std::span<const std::string> labels)
{
    require_shape(items);
    for (std::size_t i = 0; i < items.size(); ++i)
        if (sample_variance(items[i]) <= 0.0)
            throw DegenerateVariance(item_name(labels, i),
                                     fmt::format("{} has the same score from every respondent", item_name(labels, i)));
    const auto k = items.size();
    double r_sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j, ++pairs)
            r_sum += pearson_correlation(items[i], items[j]);
    double r_bar = r_sum / static_cast<double>(pairs);
    double kd = static_cast<double>(k);
    return kd * r_bar / (1.0 + (kd - 1.0) * r_bar);
}

AlphaResult cronbach_alpha(const SurveyMatrix& matrix)
{
    auto cols = matrix.columns();
    return {raw_alpha(cols), standardized_alpha(cols, matrix.labels())};
}

std::optional<bool> in_ideal_range(SensorKind parameter, double value, const Thresholds& t)
{
    switch (parameter) {
    case SensorKind::PhLevel: return t.ph_low <= value && value <= t.ph_high;
    case SensorKind::WaterTemperature: return t.water_low <= value && value <= t.water_high;
    case SensorKind::GreenhouseTemperature: return t.air_low <= value && value <= t.air_high;
    case SensorKind::Humidity: return value >= t.humidity_min;
    case SensorKind::Light: return std::nullopt;
    }
    return std::nullopt;
}

TrialReport compare_trials(const std::vector<SeriesPair>& series, const Thresholds& thresholds, int display_decimals)
{
    TrialReport report;
    report.display_decimals = display_decimals;
    for (const auto& s : series) {
        if (s.prototype.size() != s.commercial.size())
            throw EvaluationError(fmt::format("{}: {} prototype values but {} commercial values", to_string(s.parameter),
                                              s.prototype.size(), s.commercial.size()));
        for (std::size_t i = 0; i < s.prototype.size(); ++i) {
            TrialRow row{s.parameter, static_cast<int>(i + 1), s.prototype[i], s.commercial[i]};
            double pct = percentage_difference(row.prototype, row.commercial);
            report.cells.push_back({row, pct, truncate_to(pct, display_decimals),
                                    in_ideal_range(row.parameter, row.prototype, thresholds)});
        }
    }
    return report;
}

TrialReport compare_trials(const std::vector<TrialRow>& rows, const Thresholds& thresholds, int display_decimals)
{
    std::vector<SensorKind> order;
    std::map<SensorKind, std::vector<TrialRow>> by_param;
    for (const auto& r : rows) {
        if (!by_param.contains(r.parameter))
            order.push_back(r.parameter);
        by_param[r.parameter].push_back(r);
    }
    std::vector<SeriesPair> series;
    for (auto p : order) {
        auto& group = by_param[p];
        std::stable_sort(group.begin(), group.end(), [](const auto& a, const auto& b) { return a.trial < b.trial; });
        SeriesPair s{p, {}, {}};
        for (const auto& r : group) {
            s.prototype.push_back(r.prototype);
            s.commercial.push_back(r.commercial);
        }
        series.push_back(std::move(s));
    }
    auto report = compare_trials(series, thresholds, display_decimals);
    // Keep the trial numbers from the input rather than positional ones.
    std::size_t idx = 0;
    for (auto p : order)
        for (const auto& r : by_param[p])
            report.cells[idx++].row.trial = r.trial;
    return report;
}

std::vector<TrialRow> read_trials(std::istream& in, std::string_view source)
{
    std::vector<TrialRow> rows;
    bool header = false;
    for_each_row(in, [&](std::size_t line_no, std::string_view text) {
        auto cols = detail::split(text, ',');
        if (!header) {
            if (cols.size() != 4 || cols[0] != "parameter" || cols[1] != "trial" || cols[2] != "prototype" ||
                cols[3] != "commercial")
                throw InputFormatError(
                    fmt::format("{}:{}: expected header 'parameter,trial,prototype,commercial'", source, line_no));
            header = true;
            return;
        }
        if (cols.size() != 4)
            throw InputFormatError(fmt::format("{}:{}: expected 4 columns", source, line_no));
        auto kind = sensor_kind_from_string(cols[0]);
        if (!kind)
            throw InputFormatError(fmt::format("{}:{}: unknown parameter '{}'", source, line_no, cols[0]));
        auto trial = detail::parse_double(cols[1]);
        auto p = detail::parse_double(cols[2]);
        auto c = detail::parse_double(cols[3]);
        if (!trial || *trial != std::floor(*trial) || *trial < 1)
            throw InputFormatError(fmt::format("{}:{}, column trial: '{}' is not a trial number", source, line_no, cols[1]));
        if (!p)
            throw InputFormatError(fmt::format("{}:{}, column prototype: '{}' is not a number", source, line_no, cols[2]));
        if (!c)
            throw InputFormatError(fmt::format("{}:{}, column commercial: '{}' is not a number", source, line_no, cols[3]));
        rows.push_back({*kind, static_cast<int>(*trial), *p, *c});
    });
    if (!header)
        throw InputFormatError(fmt::format("{}: missing header", source));
    return rows;
}

std::vector<TrialRow> read_trials(const std::filesystem::path& path)
{
    return read_file<std::vector<TrialRow>>(path, [](std::istream& in, const std::string& s) { return read_trials(in, s); });
}

SurveyMatrix read_survey(std::istream& in, std::string_view source)
{
    std::vector<std::string> labels;
    std::vector<std::vector<int>> rows;
    std::size_t respondent = 0;
    for_each_row(in, [&](std::size_t line_no, std::string_view text) {
        auto cols = detail::split(text, ',');
        if (labels.empty()) {
            for (auto c : cols)
                labels.emplace_back(c);
            return;
        }
        ++respondent;
        if (cols.size() != labels.size())
            throw InputFormatError(fmt::format("{}:{} (row {}): expected {} scores, got {}", source, line_no, respondent,
                                               labels.size(), cols.size()));
        std::vector<int> row;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            auto v = detail::parse_double(cols[c]);
            if (!v || *v != std::floor(*v) || *v < 1 || *v > 5)
                throw InputFormatError(fmt::format("{}:{} (row {}, column {} '{}'): '{}' is not a 1-5 score", source,
                                                   line_no, respondent, c + 1, labels[c], cols[c]));
            row.push_back(static_cast<int>(*v));
        }
        rows.push_back(std::move(row));
    });
    if (labels.empty())
        throw InputFormatError(fmt::format("{}: missing header row of item labels", source));
    return SurveyMatrix(std::move(labels), std::move(rows));
}

SurveyMatrix read_survey(const std::filesystem::path& path)
{
    return read_file<SurveyMatrix>(path, [](std::istream& in, const std::string& s) { return read_survey(in, s); });
}

std::vector<ItemMean> read_item_means(std::istream& in, std::string_view source)
{
    std::vector<ItemMean> out;
    bool header = false;
    for_each_row(in, [&](std::size_t line_no, std::string_view text) {
        auto cols = detail::split(text, ',');
        if (!header) {
            if (cols.size() != 3 || cols[0] != "criterion" || cols[1] != "item" || cols[2] != "mean")
                throw InputFormatError(fmt::format("{}:{}: expected header 'criterion,item,mean'", source, line_no));
            header = true;
            return;
        }
        if (cols.size() != 3)
            throw InputFormatError(fmt::format("{}:{}: expected 3 columns", source, line_no));
        auto item = detail::parse_double(cols[1]);
        auto mean = detail::parse_double(cols[2]);
        if (!item || !mean)
            throw InputFormatError(fmt::format("{}:{}: malformed item number or mean", source, line_no));
        out.push_back({std::string(cols[0]), static_cast<int>(*item), *mean});
    });
    if (!header)
        throw InputFormatError(fmt::format("{}: missing header", source));
    return out;
}

std::vector<ItemMean> read_item_means(const std::filesystem::path& path)
{
    return read_file<std::vector<ItemMean>>(path,
                                            [](std::istream& in, const std::string& s) { return read_item_means(in, s); });
}

void render_trial_table(std::ostream& out, const TrialReport& report)
{
    std::vector<SensorKind> order;
    std::map<SensorKind, std::vector<const TrialCell*>> by_param;
    std::size_t trials = 0;
    for (const auto& c : report.cells) {
        if (!by_param.contains(c.row.parameter))
            order.push_back(c.row.parameter);
        by_param[c.row.parameter].push_back(&c);
        trials = std::max(trials, by_param[c.row.parameter].size());
    }

    constexpr int name_w = 24;
    constexpr int cell_w = 9;
    auto group_w = static_cast<int>(trials) * cell_w;
    out << fmt::format("{:<{}}{:<{}}{:<{}}{:<{}}{}\n", "", name_w, "Prototype", group_w, "Commercialized", group_w,
                       "Percentage Difference", group_w, "In ideal range");
    std::string trial_row = fmt::format("{:<{}}", "", name_w);
    for (int g = 0; g < 3; ++g)
        for (std::size_t t = 0; t < trials; ++t)
            trial_row += fmt::format("{:<{}}", fmt::format("Trial {}", t + 1), cell_w);
    out << trial_row << '\n';

    for (auto p : order) {
        const auto& cells = by_param[p];
        std::string line = fmt::format("{:<{}}", to_string(p), name_w);
        for (auto* c : cells)
            line += fmt::format("{:<{}}", detail::format_double(c->row.prototype), cell_w);
        line += std::string((trials - cells.size()) * cell_w, ' ');
        for (auto* c : cells)
            line += fmt::format("{:<{}}", detail::format_double(c->row.commercial), cell_w);
        line += std::string((trials - cells.size()) * cell_w, ' ');
        for (auto* c : cells)
            line += fmt::format("{:<{}}", fmt::format("{:.{}f}%", c->displayed, report.display_decimals), cell_w);
        line += std::string((trials - cells.size()) * cell_w, ' ');
        std::string flags;
        for (auto* c : cells)
            flags += c->prototype_in_ideal_range ? (*c->prototype_in_ideal_range ? "Y" : "N") : "-";
        out << line << flags << '\n';
    }
}

void render_trial_csv(std::ostream& out, const TrialReport& report)
{
    out << "parameter,trial,prototype,commercial,percent_difference,displayed,prototype_in_ideal_range\n";
    for (const auto& c : report.cells) {
        out << to_string(c.row.parameter) << ',' << c.row.trial << ',' << detail::format_double(c.row.prototype) << ','
            << detail::format_double(c.row.commercial) << ',' << fmt::format("{:.6f}", c.percent) << ','
            << fmt::format("{:.{}f}", c.displayed, report.display_decimals) << ','
            << (c.prototype_in_ideal_range ? (*c.prototype_in_ideal_range ? "true" : "false") : "") << '\n';
    }
}

std::vector<CriterionSummary> summarize_item_means(const std::vector<ItemMean>& means)
{
    std::vector<CriterionSummary> out;
    for (const auto& m : means) {
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.criterion == m.criterion; });
        if (it == out.end()) {
            out.push_back({m.criterion, {}, {}});
            it = std::prev(out.end());
        }
        it->item_means.push_back(m.mean);
    }
    for (auto& s : out)
        s.grand = grand_mean(s.item_means);
    return out;
}

void render_grand_means(std::ostream& out, const std::vector<CriterionSummary>& summaries)
{
    out << fmt::format("{:<22}{:>6}{:>12}  {:<18}{}\n", "Criterion", "Items", "Grand Mean", "Interpretation",
                       "Verbal Equivalent");
    for (const auto& s : summaries)
        out << fmt::format("{:<22}{:>6}{:>12.2f}  {:<18}{}\n", s.criterion, s.item_means.size(), s.grand.displayed,
                           s.grand.band->agreement, s.grand.band->quality);
}

SurveySummary summarize_survey(const SurveyMatrix& matrix)
{
    SurveySummary s;
    s.labels = matrix.labels();
    std::vector<double> means;
    for (std::size_t i = 0; i < matrix.items(); ++i) {
        auto col = matrix.column(i);
        if (col.empty())
            throw EvaluationError("survey has no respondents");
        s.items.push_back(likert_item_stats(col));
        means.push_back(s.items.back().mean);
    }
    s.grand = grand_mean(means);
    try {
        s.alpha = cronbach_alpha(matrix);
    } catch (const EvaluationError& e) {
        s.alpha_error = e.what();
    }
    return s;
}

void render_survey(std::ostream& out, const SurveySummary& s)
{
    std::size_t label_w = 10;
    for (const auto& l : s.labels)
        label_w = std::max(label_w, l.size() + 2);
    out << fmt::format("{:<{}}{:>8}{:>16}  {}\n", "Criteria", label_w, "Mean", "Std. Deviation", "Interpretation");
    for (std::size_t i = 0; i < s.items.size(); ++i)
        out << fmt::format("{:<{}}{:>8.2f}{:>16.3f}  {}\n", s.labels[i], label_w, s.items[i].mean, s.items[i].std_dev,
                           s.items[i].band->agreement);
    out << fmt::format("{:<{}}{:>8.2f}{:>16}  {} ({})\n", "Grand Mean", label_w, s.grand.displayed, "",
                       s.grand.band->agreement, s.grand.band->quality);
    if (s.alpha)
        out << fmt::format("\nCronbach's Alpha  {:.3f}\nCronbach's Alpha Based on Standardized Items  {:.3f}\nN of Items  {}\n",
                           s.alpha->raw, s.alpha->standardized, s.items.size());
    else
        out << "\nCronbach's Alpha  unavailable: " << s.alpha_error << '\n';
}

} // namespace hydrostat::eval
