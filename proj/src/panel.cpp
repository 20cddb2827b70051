#include "c2p2/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "c2p2/csv.hpp"

namespace c2p2 {

std::string_view to_string(Task task) {
    switch (task) {
        case Task::OpenOpen: return "OpenOpen";
        case Task::HighHigh: return "HighHigh";
        case Task::LowLow: return "LowLow";
        case Task::CloseClose: return "CloseClose";
    }
    return "?";
}

std::optional<Task> parse_task(std::string_view name) {
    for (Task t : kAllTasks) {
        if (to_string(t) == name) return t;
    }
    return std::nullopt;
}

std::span<const double> OhlcSeries::column(Task task) const {
    switch (task) {
        case Task::OpenOpen: return open;
        case Task::HighHigh: return high;
        case Task::LowLow: return low;
        case Task::CloseClose: return close;
    }
    return close;
}

// ---------------------------------------------------------------------------

OhlcSeries ingest_ohlc(std::istream& source, std::string coin, const OhlcSchema& schema) {
    const csv::Table table = csv::read(source);
    const std::array<const std::string*, 5> names{&schema.date, &schema.open, &schema.high, &schema.low,
                                                  &schema.close};
    std::array<std::size_t, 5> cols{};
    for (std::size_t i = 0; i < names.size(); ++i) {
        auto c = table.column(*names[i]);
        if (!c) throw Error(ErrorCode::MalformedRow, coin + ": missing column '" + *names[i] + "'");
        cols[i] = *c;
    }

    struct Parsed {
        Day day;
        double o, h, l, c;
        std::size_t line;
    };
    std::vector<Parsed> parsed;
    std::vector<std::string> bad;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        try {
            parsed.push_back({Day::parse(row[cols[0]]), parse_double(row[cols[1]]), parse_double(row[cols[2]]),
                              parse_double(row[cols[3]]), parse_double(row[cols[4]]), table.line_numbers[r]});
        } catch (const Error& e) {
            bad.push_back("line " + std::to_string(table.line_numbers[r]) + " (" + e.what() + ")");
        }
    }
    if (!bad.empty()) {
        std::string msg = coin + ": " + std::to_string(bad.size()) + " malformed row(s): ";
        for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
        throw Error(ErrorCode::MalformedRow, msg);
    }

    for (const auto& p : parsed) {
        const bool finite = std::isfinite(p.o) && std::isfinite(p.h) && std::isfinite(p.l) && std::isfinite(p.c);
        const bool ordered = p.l <= std::min(p.o, p.c) && std::max(p.o, p.c) <= p.h;
        if (!finite || !ordered || p.l <= 0.0) {
            throw Error(ErrorCode::OhlcViolation, coin + ": line " + std::to_string(p.line) + " (" +
                                                      p.day.to_string() + ") violates low <= open,close <= high");
        }
    }

    std::stable_sort(parsed.begin(), parsed.end(), [](const Parsed& a, const Parsed& b) { return a.day < b.day; });
    for (std::size_t i = 1; i < parsed.size(); ++i) {
        if (parsed[i].day == parsed[i - 1].day) {
            throw Error(ErrorCode::DuplicateDay, coin + ": duplicate date " + parsed[i].day.to_string());
        }
    }

    OhlcSeries s;
    s.coin = std::move(coin);
    for (const auto& p : parsed) {
        s.days.push_back(p.day);
        s.open.push_back(p.o);
        s.high.push_back(p.h);
        s.low.push_back(p.l);
        s.close.push_back(p.c);
    }
    return s;
}

OhlcSeries ingest_ohlc_file(const std::filesystem::path& path, std::string coin, const OhlcSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return ingest_ohlc(in, std::move(coin), schema);
}

CoinLabels derive_labels(const OhlcSeries& series, Task task) {
    if (series.size() < 2) {
        throw Error(ErrorCode::TooShort, series.coin + ": need at least 2 days to derive labels");
    }
    const auto price = series.column(task);
    CoinLabels out;
    out.coin = series.coin;
    out.task = task;
    for (std::size_t d = 1; d < series.size(); ++d) {
        out.days.push_back(series.days[d]);
        out.labels.push_back(price[d] > price[d - 1] ? 1 : 0);
    }
    return out;
}

std::vector<double> histogram_features(std::span<const double> values, std::span<const double> edges,
                                       bool normalize) {
    if (edges.size() < 2) throw Error(ErrorCode::BadEdges, "need at least two bin edges");
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1])) throw Error(ErrorCode::BadEdges, "bin edges must be strictly increasing");
    }
    const std::size_t bins = edges.size() - 1;
    std::vector<double> counts(bins, 0.0);
    for (double v : values) {
        // upper_bound gives the first edge > v; bin = that index - 1, clamped.
        const auto it = std::upper_bound(edges.begin(), edges.end(), v);
        std::ptrdiff_t bin = std::distance(edges.begin(), it) - 1;
        bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(bins) - 1);
        counts[static_cast<std::size_t>(bin)] += 1.0;
    }
    if (normalize) {
        const double denom = std::max<double>(1.0, static_cast<double>(values.size()));
        for (double& c : counts) c /= denom;
    }
    return counts;
}

std::vector<double> equal_width_edges(double lo, double hi, std::size_t bins) {
    if (bins == 0 || !(hi > lo)) throw Error(ErrorCode::BadEdges, "need hi > lo and at least one bin");
    std::vector<double> edges(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) {
        edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    }
    edges.back() = hi;
    return edges;
}

// ---------------------------------------------------------------------------

std::string_view to_string(FillPolicy policy) {
    switch (policy) {
        case FillPolicy::ForwardFillThenZero: return "forward_fill_then_zero";
        case FillPolicy::Zero: return "zero";
    }
    return "?";
}

std::optional<FillPolicy> parse_fill_policy(std::string_view name) {
    if (name == "forward_fill_then_zero") return FillPolicy::ForwardFillThenZero;
    if (name == "zero") return FillPolicy::Zero;
    return std::nullopt;
}

FeaturePanel::FeaturePanel(std::vector<std::string> coins, std::vector<Day> days, std::vector<FeatureGroup> groups,
                           std::vector<double> values, FillPolicy fill_policy)
    : coins_(std::move(coins)),
      days_(std::move(days)),
      groups_(std::move(groups)),
      values_(std::move(values)),
      fill_policy_(fill_policy) {
    std::size_t offset = 0;
    for (auto& g : groups_) {
        if (g.offset != offset) throw Error(ErrorCode::WidthMismatch, "group '" + g.name + "' has a bad offset");
        offset += g.width;
    }
    width_ = offset;
    if (values_.size() != coins_.size() * days_.size() * width_) {
        throw Error(ErrorCode::WidthMismatch, "panel value count does not match coins x days x width");
    }
    for (std::size_t i = 1; i < days_.size(); ++i) {
        if (!(days_[i - 1] < days_[i])) throw Error(ErrorCode::DuplicateDay, "panel days must be strictly increasing");
    }
}

std::optional<std::size_t> FeaturePanel::coin_index(std::string_view coin) const {
    for (std::size_t i = 0; i < coins_.size(); ++i) {
        if (coins_[i] == coin) return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> FeaturePanel::day_index(Day day) const {
    auto it = std::lower_bound(days_.begin(), days_.end(), day);
    if (it == days_.end() || *it != day) return std::nullopt;
    return static_cast<std::size_t>(it - days_.begin());
}

const FeatureGroup* FeaturePanel::group(std::string_view name) const {
    for (const auto& g : groups_) {
        if (g.name == name) return &g;
    }
    return nullptr;
}

FeaturePanel FeaturePanel::with_values(std::vector<double> values) const {
    return FeaturePanel(coins_, days_, groups_, std::move(values), fill_policy_);
}

FeaturePanel FeaturePanel::slice_days(std::size_t first, std::size_t last) const {
    if (first > last || last >= days_.size()) throw Error(ErrorCode::EmptyRange, "bad day slice");
    const std::size_t n = last - first + 1;
    std::vector<double> v;
    v.reserve(coins_.size() * n * width_);
    for (std::size_t c = 0; c < coins_.size(); ++c) {
        for (std::size_t d = first; d <= last; ++d) {
            auto r = row(c, d);
            v.insert(v.end(), r.begin(), r.end());
        }
    }
    return FeaturePanel(coins_, std::vector<Day>(days_.begin() + first, days_.begin() + last + 1), groups_,
                        std::move(v), fill_policy_);
}

FeaturePanel FeaturePanel::select_coins(std::span<const std::string> coins) const {
    std::vector<double> v;
    v.reserve(coins.size() * days_.size() * width_);
    for (const auto& name : coins) {
        auto c = coin_index(name);
        if (!c) throw Error(ErrorCode::EmptyIntersection, "coin '" + name + "' not in panel");
        for (std::size_t d = 0; d < days_.size(); ++d) {
            auto r = row(*c, d);
            v.insert(v.end(), r.begin(), r.end());
        }
    }
    return FeaturePanel(std::vector<std::string>(coins.begin(), coins.end()), days_, groups_, std::move(v),
                        fill_policy_);
}

FeaturePanel assemble_panel(std::span<const GroupFrame> groups, FillPolicy policy) {
    if (groups.empty()) throw Error(ErrorCode::EmptyIntersection, "no feature groups");

    std::vector<std::string> coins;
    bool have_coin_groups = false;
    std::set<Day> all_days;
    Day overlap_lo{std::numeric_limits<std::int32_t>::min()};
    Day overlap_hi{std::numeric_limits<std::int32_t>::max()};
    std::set<std::string> names;

    for (const auto& g : groups) {
        if (!names.insert(g.name).second) throw Error(ErrorCode::WidthMismatch, "duplicate group '" + g.name + "'");
        if (g.rows.empty()) throw Error(ErrorCode::EmptyIntersection, "group '" + g.name + "' is empty");
        if (g.width == 0) throw Error(ErrorCode::WidthMismatch, "group '" + g.name + "' has zero width");
        Day lo = g.rows.front().day, hi = g.rows.front().day;
        std::vector<std::string> group_coins;
        std::set<std::string> seen;
        for (const auto& r : g.rows) {
            if (r.values.size() != g.width) {
                throw Error(ErrorCode::WidthMismatch, "group '" + g.name + "' row for " + r.coin + " on " +
                                                          r.day.to_string() + " has width " +
                                                          std::to_string(r.values.size()) + ", expected " +
                                                          std::to_string(g.width));
            }
            lo = std::min(lo, r.day);
            hi = std::max(hi, r.day);
            all_days.insert(r.day);
            if (r.coin != kAllCoins && seen.insert(r.coin).second) group_coins.push_back(r.coin);
        }
        overlap_lo = std::max(overlap_lo, lo);
        overlap_hi = std::min(overlap_hi, hi);
        if (group_coins.empty()) continue;
        if (!have_coin_groups) {
            coins = group_coins;
            have_coin_groups = true;
        } else {
            std::erase_if(coins, [&](const std::string& c) { return !seen.contains(c); });
        }
    }
    if (coins.empty()) throw Error(ErrorCode::EmptyIntersection, "no coin is present in every group");
    if (overlap_lo > overlap_hi) throw Error(ErrorCode::EmptyIntersection, "group day ranges do not overlap");

    const std::vector<Day> days(all_days.begin(), all_days.end());
    std::vector<FeatureGroup> layout;
    std::size_t width = 0;
    for (const auto& g : groups) {
        layout.push_back({g.name, width, g.width});
        width += g.width;
    }

    std::unordered_map<std::string, std::size_t> coin_pos;
    for (std::size_t i = 0; i < coins.size(); ++i) coin_pos[coins[i]] = i;
    std::map<Day, std::size_t> day_pos;
    for (std::size_t i = 0; i < days.size(); ++i) day_pos[days[i]] = i;

    const std::size_t C = coins.size(), D = days.size();
    std::vector<double> values(C * D * width, 0.0);

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        const std::size_t off = layout[gi].offset;
        // 0 = missing, 1 = broadcast, 2 = coin-specific (takes precedence)
        std::vector<std::uint8_t> filled(C * D, 0);
        std::set<std::pair<std::string, Day>> dup_check;
        for (const auto& r : g.rows) {
            if (!dup_check.insert({r.coin, r.day}).second) {
                throw Error(ErrorCode::DuplicateDay,
                            "group '" + g.name + "' has two rows for " + r.coin + " on " + r.day.to_string());
            }
            const std::size_t d = day_pos.at(r.day);
            auto write = [&](std::size_t c, std::uint8_t rank) {
                if (filled[c * D + d] > rank) return;
                std::copy(r.values.begin(), r.values.end(), values.begin() + (c * D + d) * width + off);
                filled[c * D + d] = rank;
            };
            if (r.coin == kAllCoins) {
                for (std::size_t c = 0; c < C; ++c) write(c, 1);
            } else if (auto it = coin_pos.find(r.coin); it != coin_pos.end()) {
                write(it->second, 2);
            }
        }
        if (policy != FillPolicy::ForwardFillThenZero) continue;
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t d = 1; d < D; ++d) {
                if (filled[c * D + d] || !filled[c * D + d - 1]) continue;
                auto src = values.begin() + (c * D + d - 1) * width + off;
                std::copy(src, src + g.width, values.begin() + (c * D + d) * width + off);
                filled[c * D + d] = filled[c * D + d - 1];
            }
        }
    }
    return FeaturePanel(std::move(coins), days, std::move(layout), std::move(values), policy);
}

// ---------------------------------------------------------------------------

Normalizer::Normalizer(std::vector<double> mean, std::vector<double> stdev)
    : mean_(std::move(mean)), stdev_(std::move(stdev)) {
    if (mean_.size() != stdev_.size()) throw Error(ErrorCode::WidthMismatch, "normalizer mean/stdev size mismatch");
}

Normalizer Normalizer::fit(const FeaturePanel& panel, std::size_t first_day, std::size_t last_day) {
    if (first_day > last_day || last_day >= panel.num_days() || panel.num_coins() == 0) {
        throw Error(ErrorCode::EmptyRange, "normalizer fit range is empty or outside the panel");
    }
    const std::size_t w = panel.width();
    const double n = static_cast<double>(panel.num_coins() * (last_day - first_day + 1));
    std::vector<double> mean(w, 0.0), var(w, 0.0);
    for (std::size_t c = 0; c < panel.num_coins(); ++c) {
        for (std::size_t d = first_day; d <= last_day; ++d) {
            auto r = panel.row(c, d);
            for (std::size_t j = 0; j < w; ++j) mean[j] += r[j];
        }
    }
    for (double& m : mean) m /= n;
    for (std::size_t c = 0; c < panel.num_coins(); ++c) {
        for (std::size_t d = first_day; d <= last_day; ++d) {
            auto r = panel.row(c, d);
            for (std::size_t j = 0; j < w; ++j) {
                const double dev = r[j] - mean[j];
                var[j] += dev * dev;
            }
        }
    }
    std::vector<double> sd(w);
    for (std::size_t j = 0; j < w; ++j) sd[j] = std::sqrt(var[j] / n);
    return Normalizer(std::move(mean), std::move(sd));
}

void Normalizer::apply_in_place(std::span<double> row) const {
    if (row.size() != mean_.size()) throw Error(ErrorCode::WidthMismatch, "normalizer width mismatch");
    for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] = stdev_[j] < kStdevFloor ? 0.0 : (row[j] - mean_[j]) / stdev_[j];
    }
}

FeaturePanel Normalizer::apply(const FeaturePanel& panel) const {
    if (panel.width() != mean_.size()) throw Error(ErrorCode::WidthMismatch, "normalizer width mismatch");
    std::vector<double> v = panel.values();
    const std::size_t w = panel.width();
    for (std::size_t off = 0; off < v.size(); off += w) apply_in_place(std::span<double>(v.data() + off, w));
    return panel.with_values(std::move(v));
}

nlohmann::json Normalizer::to_json() const { return {{"mean", mean_}, {"stdev", stdev_}}; }

Normalizer Normalizer::from_json(const nlohmann::json& j) {
    return Normalizer(j.at("mean").get<std::vector<double>>(), j.at("stdev").get<std::vector<double>>());
}

// ---------------------------------------------------------------------------

LabelPanel::LabelPanel(Task task, std::vector<std::string> coins, std::vector<Day> days,
                       std::vector<std::int8_t> values)
    : task_(task), coins_(std::move(coins)), days_(std::move(days)), values_(std::move(values)) {
    if (values_.size() != coins_.size() * days_.size()) {
        throw Error(ErrorCode::WidthMismatch, "label count does not match coins x days");
    }
}

LabelPanel LabelPanel::with_values(std::vector<std::int8_t> values) const {
    return LabelPanel(task_, coins_, days_, std::move(values));
}

LabelPanel LabelPanel::slice_days(std::size_t first, std::size_t last) const {
    if (first > last || last >= days_.size()) throw Error(ErrorCode::EmptyRange, "bad day slice");
    std::vector<std::int8_t> v;
    for (std::size_t c = 0; c < coins_.size(); ++c) {
        for (std::size_t d = first; d <= last; ++d) v.push_back(at(c, d));
    }
    return LabelPanel(task_, coins_, std::vector<Day>(days_.begin() + first, days_.begin() + last + 1),
                      std::move(v));
}

LabelPanel LabelPanel::select_coins(std::span<const std::string> coins) const {
    std::vector<std::int8_t> v;
    for (const auto& name : coins) {
        auto it = std::find(coins_.begin(), coins_.end(), name);
        if (it == coins_.end()) throw Error(ErrorCode::EmptyIntersection, "coin '" + name + "' has no labels");
        const auto c = static_cast<std::size_t>(it - coins_.begin());
        for (std::size_t d = 0; d < days_.size(); ++d) v.push_back(at(c, d));
    }
    return LabelPanel(task_, std::vector<std::string>(coins.begin(), coins.end()), days_, std::move(v));
}

LabelPanel build_label_panel(const FeaturePanel& panel, std::span<const OhlcSeries> series, Task task) {
    const std::size_t C = panel.num_coins(), D = panel.num_days();
    std::vector<std::int8_t> values(C * D, -1);
    for (std::size_t c = 0; c < C; ++c) {
        auto it = std::find_if(series.begin(), series.end(),
                               [&](const OhlcSeries& s) { return s.coin == panel.coins()[c]; });
        if (it == series.end() || it->size() < 2) continue;
        const CoinLabels labels = derive_labels(*it, task);
        for (std::size_t i = 0; i < labels.days.size(); ++i) {
            // labels.days[i] is series day i+1; require the preceding calendar day.
            if (it->days[i] != labels.days[i] - 1) continue;
            if (auto d = panel.day_index(labels.days[i])) values[c * D + *d] = static_cast<std::int8_t>(labels.labels[i]);
        }
    }
    return LabelPanel(task, panel.coins(), panel.days(), std::move(values));
}

// ---------------------------------------------------------------------------

std::string_view to_string(PriceFeature p) {
    switch (p) {
        case PriceFeature::None: return "none";
        case PriceFeature::Close: return "close";
        case PriceFeature::LogReturn: return "log_return";
        case PriceFeature::Ohlc: return "ohlc";
    }
    return "?";
}

std::optional<PriceFeature> parse_price_feature(std::string_view name) {
    for (auto p : {PriceFeature::None, PriceFeature::Close, PriceFeature::LogReturn, PriceFeature::Ohlc}) {
        if (to_string(p) == name) return p;
    }
    return std::nullopt;
}

GroupFrame price_group(std::span<const OhlcSeries> series, PriceFeature kind, std::string name) {
    GroupFrame g;
    g.name = std::move(name);
    g.width = kind == PriceFeature::Ohlc ? 4 : 1;
    for (const auto& s : series) {
        for (std::size_t d = 0; d < s.size(); ++d) {
            switch (kind) {
                case PriceFeature::None: break;
                case PriceFeature::Close: g.rows.push_back({s.coin, s.days[d], {s.close[d]}}); break;
                case PriceFeature::Ohlc:
                    g.rows.push_back({s.coin, s.days[d], {s.open[d], s.high[d], s.low[d], s.close[d]}});
                    break;
                case PriceFeature::LogReturn:
                    if (d > 0) g.rows.push_back({s.coin, s.days[d], {std::log(s.close[d] / s.close[d - 1])}});
                    break;
            }
        }
    }
    return g;
}

namespace {

std::vector<double> parse_stat_edges(const nlohmann::json& s) {
    if (s.contains("edges")) return s.at("edges").get<std::vector<double>>();
    const auto range = s.at("range").get<std::vector<double>>();
    if (range.size() != 2) throw Error(ErrorCode::ParseError, "histogram range must be [lo, hi]");
    return equal_width_edges(range[0], range[1], s.value("bins", std::size_t{11}));
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    DatasetManifest m;
    try {
        for (const auto& o : j.at("ohlc")) m.ohlc.push_back({o.at("coin").get<std::string>(), resolve(base_dir, o.at("path"))});
        if (j.contains("schema")) {
            const auto& s = j.at("schema");
            m.schema.date = s.value("date", m.schema.date);
            m.schema.open = s.value("open", m.schema.open);
            m.schema.high = s.value("high", m.schema.high);
            m.schema.low = s.value("low", m.schema.low);
            m.schema.close = s.value("close", m.schema.close);
        }
        if (j.contains("price_feature")) {
            auto p = parse_price_feature(j.at("price_feature").get<std::string>());
            if (!p) throw Error(ErrorCode::ParseError, "unknown price_feature");
            m.price_feature = *p;
        }
        m.price_group = j.value("price_group", m.price_group);
        if (j.contains("fill_policy")) {
            auto p = parse_fill_policy(j.at("fill_policy").get<std::string>());
            if (!p) throw Error(ErrorCode::ParseError, "unknown fill_policy");
            m.fill_policy = *p;
        }
        for (const auto& f : j.value("features", nlohmann::json::array())) {
            FeatureFile ff;
            ff.path = resolve(base_dir, f.at("path"));
            for (const auto& g : f.at("groups")) {
                const auto cols = g.at("columns").get<std::vector<std::size_t>>();
                if (cols.size() != 2 || cols[0] > cols[1]) throw Error(ErrorCode::ParseError, "columns must be [first, last]");
                ff.groups.push_back({g.at("group").get<std::string>(), cols[0], cols[1]});
            }
            m.features.push_back(std::move(ff));
        }
        for (const auto& e : j.value("events", nlohmann::json::array())) {
            EventFile ef;
            ef.path = resolve(base_dir, e.at("path"));
            ef.group = e.at("group").get<std::string>();
            ef.normalize = e.value("normalize", true);
            for (const auto& s : e.at("stats")) ef.stats.push_back({s.at("name").get<std::string>(), parse_stat_edges(s)});
            m.events.push_back(std::move(ef));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("dataset manifest: ") + e.what());
    }
    return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(csv::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json j;
    j["ohlc"] = nlohmann::json::array();
    for (const auto& o : ohlc) j["ohlc"].push_back({{"coin", o.coin}, {"path", o.path.generic_string()}});
    j["price_feature"] = std::string(to_string(price_feature));
    j["price_group"] = price_group;
    j["fill_policy"] = std::string(to_string(fill_policy));
    j["schema"] = {{"date", schema.date}, {"open", schema.open}, {"high", schema.high}, {"low", schema.low},
                   {"close", schema.close}};
    j["features"] = nlohmann::json::array();
    for (const auto& f : features) {
        nlohmann::json groups = nlohmann::json::array();
        for (const auto& g : f.groups) groups.push_back({{"group", g.group}, {"columns", {g.first, g.last}}});
        j["features"].push_back({{"path", f.path.generic_string()}, {"groups", groups}});
    }
    j["events"] = nlohmann::json::array();
    for (const auto& e : events) {
        nlohmann::json stats = nlohmann::json::array();
        for (const auto& s : e.stats) stats.push_back({{"name", s.name}, {"edges", s.edges}});
        j["events"].push_back({{"path", e.path.generic_string()}, {"group", e.group}, {"normalize", e.normalize}, {"stats", stats}});
    }
    return j;
}

namespace {

std::vector<GroupFrame> feature_file_groups(const DatasetManifest::FeatureFile& f) {
    const csv::Table t = csv::read_file(f.path);
    const auto date_col = t.column("date");
    const auto coin_col = t.column("coin");
    if (!date_col || !coin_col || *date_col != 0 || *coin_col != 1) {
        throw Error(ErrorCode::MalformedRow, f.path.string() + ": expected header date,coin,<features>");
    }
    const std::size_t nfeat = t.header.size() - 2;
    std::vector<GroupFrame> out;
    for (const auto& g : f.groups) {
        if (g.last >= nfeat) {
            throw Error(ErrorCode::WidthMismatch, f.path.string() + ": group '" + g.group + "' columns exceed " +
                                                      std::to_string(nfeat) + " feature columns");
        }
        out.push_back({g.group, g.last - g.first + 1, {}});
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        Day day;
        std::vector<double> vals(nfeat);
        try {
            day = Day::parse(row[0]);
            for (std::size_t k = 0; k < nfeat; ++k) vals[k] = parse_double(row[2 + k]);
        } catch (const Error& e) {
            throw Error(ErrorCode::MalformedRow,
                        f.path.string() + ": line " + std::to_string(t.line_numbers[r]) + ": " + e.what());
        }
        for (std::size_t gi = 0; gi < f.groups.size(); ++gi) {
            const auto& g = f.groups[gi];
            out[gi].rows.push_back(
                {row[1], day, std::vector<double>(vals.begin() + g.first, vals.begin() + g.last + 1)});
        }
    }
    return out;
}

GroupFrame event_group(const DatasetManifest::EventFile& e) {
    const csv::Table t = csv::read_file(e.path);
    const auto dc = t.column("date"), cc = t.column("coin"), sc = t.column("stat"), vc = t.column("value");
    if (!dc || !cc || !sc || !vc) throw Error(ErrorCode::MalformedRow, e.path.string() + ": expected date,coin,stat,value");
    std::map<std::string, std::size_t> stat_pos;
    for (std::size_t i = 0; i < e.stats.size(); ++i) stat_pos[e.stats[i].name] = i;

    std::map<std::pair<std::string, Day>, std::vector<std::vector<double>>> cells;
    std::vector<std::string> coins;
    Day lo{std::numeric_limits<std::int32_t>::max()}, hi{std::numeric_limits<std::int32_t>::min()};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        Day day;
        double v = 0.0;
        try {
            day = Day::parse(row[*dc]);
            v = parse_double(row[*vc]);
        } catch (const Error& err) {
            throw Error(ErrorCode::MalformedRow,
                        e.path.string() + ": line " + std::to_string(t.line_numbers[r]) + ": " + err.what());
        }
        lo = std::min(lo, day);
        hi = std::max(hi, day);
        const std::string& coin = row[*cc];
        if (std::find(coins.begin(), coins.end(), coin) == coins.end()) coins.push_back(coin);
        auto it = stat_pos.find(row[*sc]);
        if (it == stat_pos.end()) continue;
        auto& cell = cells[{coin, day}];
        cell.resize(e.stats.size());
        cell[it->second].push_back(v);
    }
    GroupFrame g;
    g.name = e.group;
    for (const auto& s : e.stats) g.width += s.edges.size() - 1;
    if (coins.empty()) return g;
    for (const auto& coin : coins) {
        for (Day d = lo; d <= hi; d = d + 1) {
            std::vector<double> block;
            auto it = cells.find({coin, d});
            for (std::size_t si = 0; si < e.stats.size(); ++si) {
                std::span<const double> vals;
                if (it != cells.end()) vals = it->second[si];
                auto h = histogram_features(vals, e.stats[si].edges, e.normalize);
                block.insert(block.end(), h.begin(), h.end());
            }
            g.rows.push_back({coin, d, std::move(block)});
        }
    }
    return g;
}

}  // namespace

MarketData load_market_data(const DatasetManifest& manifest) {
    MarketData ds;
    for (const auto& o : manifest.ohlc) ds.series.push_back(ingest_ohlc_file(o.path, o.coin, manifest.schema));

    std::vector<GroupFrame> groups;
    if (manifest.price_feature != PriceFeature::None) {
        groups.push_back(price_group(ds.series, manifest.price_feature, manifest.price_group));
    }
    for (const auto& f : manifest.features) {
        for (auto& g : feature_file_groups(f)) groups.push_back(std::move(g));
    }
    for (const auto& e : manifest.events) groups.push_back(event_group(e));

    ds.panel = assemble_panel(groups, manifest.fill_policy);
    for (Task t : kAllTasks) ds.labels[static_cast<std::size_t>(t)] = build_label_panel(ds.panel, ds.series, t);
    return ds;
}

void save_panel_dir(const std::filesystem::path& dir, const FeaturePanel& panel, std::span<const LabelPanel> labels) {
    std::filesystem::create_directories(dir);
    nlohmann::json m;
    m["version"] = 1;
    m["coins"] = panel.coins();
    m["fill_policy"] = std::string(to_string(panel.fill_policy()));
    std::vector<std::string> dates;
    for (Day d : panel.days()) dates.push_back(d.to_string());
    m["days"] = {{"first", dates.empty() ? "" : dates.front()}, {"last", dates.empty() ? "" : dates.back()},
                 {"count", dates.size()}, {"dates", dates}};
    m["groups"] = nlohmann::json::array();
    for (const auto& g : panel.groups()) m["groups"].push_back({{"name", g.name}, {"width", g.width}});
    m["width"] = panel.width();
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& l : labels) tasks.push_back(std::string(to_string(l.task())));
    m["label_tasks"] = tasks;
    csv::write_file(dir / "manifest.json", m.dump(2) + "\n");

    std::string out = "date,coin";
    for (const auto& g : panel.groups()) {
        for (std::size_t k = 0; k < g.width; ++k) out += "," + csv::escape(g.name + "_" + std::to_string(k));
    }
    out += "\n";
    for (std::size_t d = 0; d < panel.num_days(); ++d) {
        for (std::size_t c = 0; c < panel.num_coins(); ++c) {
            out += dates[d] + "," + csv::escape(panel.coins()[c]);
            for (double v : panel.row(c, d)) out += "," + format_double(v);
            out += "\n";
        }
    }
    csv::write_file(dir / "features.csv", out);

    out = "date,coin";
    for (const auto& l : labels) out += "," + std::string(to_string(l.task()));
    out += "\n";
    for (std::size_t d = 0; d < panel.num_days(); ++d) {
        for (std::size_t c = 0; c < panel.num_coins(); ++c) {
            out += dates[d] + "," + csv::escape(panel.coins()[c]);
            for (const auto& l : labels) {
                const auto v = l.at(c, d);
                out += v < 0 ? std::string(",") : "," + std::to_string(v);
            }
            out += "\n";
        }
    }
    csv::write_file(dir / "labels.csv", out);
}

MarketData load_panel_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "manifest.json")) {
        throw Error(ErrorCode::MissingArtifact, "no panel manifest in " + dir.string());
    }
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(csv::read_text(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, (dir / "manifest.json").string() + ": " + e.what());
    }
    const auto coins = m.at("coins").get<std::vector<std::string>>();
    std::vector<Day> days;
    for (const auto& s : m.at("days").at("dates")) days.push_back(Day::parse(s.get<std::string>()));
    std::vector<FeatureGroup> groups;
    std::size_t width = 0;
    for (const auto& g : m.at("groups")) {
        groups.push_back({g.at("name").get<std::string>(), width, g.at("width").get<std::size_t>()});
        width += groups.back().width;
    }
    const auto policy = parse_fill_policy(m.value("fill_policy", std::string("forward_fill_then_zero")));
    if (!policy) throw Error(ErrorCode::ParseError, "unknown fill policy in panel manifest");

    std::map<std::string, std::size_t> coin_pos;
    for (std::size_t i = 0; i < coins.size(); ++i) coin_pos[coins[i]] = i;
    const std::size_t C = coins.size(), D = days.size();
    auto locate = [&](const std::vector<std::string>& row, std::size_t line) {
        const Day day = Day::parse(row[0]);
        auto d = std::lower_bound(days.begin(), days.end(), day);
        auto c = coin_pos.find(row[1]);
        if (d == days.end() || *d != day || c == coin_pos.end()) {
            throw Error(ErrorCode::MalformedRow, "panel row at line " + std::to_string(line) + " is outside the manifest");
        }
        return std::pair{c->second, static_cast<std::size_t>(d - days.begin())};
    };

    const csv::Table ft = csv::read_file(dir / "features.csv");
    if (ft.header.size() != width + 2) throw Error(ErrorCode::WidthMismatch, "features.csv width disagrees with manifest");
    std::vector<double> values(C * D * width, 0.0);
    std::vector<std::uint8_t> seen(C * D, 0);
    for (std::size_t r = 0; r < ft.rows.size(); ++r) {
        const auto [c, d] = locate(ft.rows[r], ft.line_numbers[r]);
        for (std::size_t k = 0; k < width; ++k) values[(c * D + d) * width + k] = parse_double(ft.rows[r][2 + k]);
        seen[c * D + d] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
        throw Error(ErrorCode::MalformedRow, "features.csv is missing panel cells");
    }

    MarketData ds;
    ds.panel = FeaturePanel(coins, days, std::move(groups), std::move(values), *policy);
    const csv::Table lt = csv::read_file(dir / "labels.csv");
    for (Task t : kAllTasks) {
        std::vector<std::int8_t> lv(C * D, -1);
        if (auto col = lt.column(to_string(t))) {
            for (std::size_t r = 0; r < lt.rows.size(); ++r) {
                const auto [c, d] = locate(lt.rows[r], lt.line_numbers[r]);
                const auto& cell = lt.rows[r][*col];
                if (cell.empty()) continue;
                if (cell != "0" && cell != "1") throw Error(ErrorCode::MalformedRow, "bad label '" + cell + "'");
                lv[c * D + d] = static_cast<std::int8_t>(cell[0] - '0');
            }
        }
        ds.labels[static_cast<std::size_t>(t)] = LabelPanel(t, coins, days, std::move(lv));
    }
    return ds;
}

}  // namespace c2p2
