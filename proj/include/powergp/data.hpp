#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "powergp/errors.hpp"
#include "powergp/rng.hpp"
#include "powergp/warped.hpp"

namespace powergp {

enum RecordFlag : unsigned {
    kFlagOutlier = 1u,
    kFlagCurtailed = 2u,
    kFlagClipped = 4u,
};

struct ScadaRecord {
    double wind_speed = 0.0;
    double power = 0.0;
    unsigned flags = 0;
};

enum class Split : std::uint8_t { train, test, validation, unassigned };

/// Affine maps used for min-max normalization; invertible by construction.
struct Normalization {
    double power_min = 0.0;
    double power_max = 1.0;
    double speed_min = 0.0;
    double speed_max = 1.0;

    double normalize_power(double p) const { return (p - power_min) / (power_max - power_min); }
    double denormalize_power(double p) const { return p * (power_max - power_min) + power_min; }
    double normalize_speed(double s) const { return (s - speed_min) / (speed_max - speed_min); }
    double denormalize_speed(double s) const { return s * (speed_max - speed_min) + speed_min; }
};

/// Cleaned, normalized (wind speed, power) pairs with split membership.
struct ScadaDataset {
    std::vector<ScadaRecord> records;  // normalized units
    std::vector<Split> split;          // parallel to records
    Normalization normalization;

    std::pair<Eigen::VectorXd, Eigen::VectorXd> xy(Split which) const {
        std::vector<double> xs;
        std::vector<double> ys;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (split[i] == which) {
                xs.push_back(records[i].wind_speed);
                ys.push_back(records[i].power);
            }
        }
        Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
        Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
        return {std::move(x), std::move(y)};
    }
};

struct CleaningRules {
    double outlier_low = -0.01;          // pre-normalization tolerance band
    double outlier_high = 1.01;
    double curtail_power = 0.15;         // normalized power below this ...
    double curtail_speed_quantile = 0.6; // ... at speeds above this quantile
    double high_power = 0.9;             // of speeds whose power exceeds this
    double interior_epsilon = 1e-4;      // open-interval map for Beta/warped
};

struct LoadResult {
    std::vector<ScadaRecord> records;
    long dropped_rows = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && (std::isspace(static_cast<unsigned char>(s[a])) != 0)) ++a;
    while (b > a && (std::isspace(static_cast<unsigned char>(s[b - 1])) != 0)) --b;
    return s.substr(a, b - a);
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return lo + 1 < sorted.size() ? sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac : sorted[lo];
}

inline void write_double(std::FILE* f, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::fputs(buf, f);
}

}  // namespace detail

/// Parses a SCADA CSV with case-insensitive `wind_speed` and `power` header
/// columns (extra columns ignored). Rows with missing or non-finite fields
/// are dropped and counted.
inline LoadResult load_scada_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IngestionError("data", "cannot open " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw IngestionError("data", "empty file " + path, 0);
    }
    const auto header = detail::split_csv_line(line);
    long speed_col = -1;
    long power_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name = detail::lower(header[i]);
        if (name == "wind_speed") speed_col = static_cast<long>(i);
        if (name == "power") power_col = static_cast<long>(i);
    }
    if (speed_col < 0 || power_col < 0) {
        throw IngestionError("data", "header must name wind_speed and power columns", 0);
    }
    LoadResult result;
    long row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        ScadaRecord rec;
        const bool ok =
            static_cast<long>(fields.size()) > std::max(speed_col, power_col) &&
            detail::parse_double(fields[static_cast<std::size_t>(speed_col)], rec.wind_speed) &&
            detail::parse_double(fields[static_cast<std::size_t>(power_col)], rec.power);
        if (ok) {
            result.records.push_back(rec);
        } else {
            ++result.dropped_rows;
        }
    }
    return result;
}

struct PreprocessResult {
    ScadaDataset dataset;  // unsplit
    long outliers_removed = 0;
    long curtailed_removed = 0;
};

/// Outlier removal, min-max normalization of power and speed to [0, 1], and
/// curtailment cleaning (low power at speeds above the configured quantile
/// of high-power speeds). Removed records are flagged and counted.
inline PreprocessResult preprocess(std::vector<ScadaRecord> records, const CleaningRules& rules) {
    if (records.size() < 10) {
        throw InsufficientDataError("data", "preprocess needs at least 10 records");
    }
    PreprocessResult out;
    std::vector<ScadaRecord> kept;
    kept.reserve(records.size());
    for (auto& rec : records) {
        if (rec.power < rules.outlier_low || rec.power > rules.outlier_high) {
            rec.flags |= kFlagOutlier;
            ++out.outliers_removed;
        } else {
            kept.push_back(rec);
        }
    }
    if (kept.size() < 10) {
        throw InsufficientDataError("data", "fewer than 10 records survive outlier removal");
    }
    Normalization norm;
    norm.power_min = norm.power_max = kept.front().power;
    norm.speed_min = norm.speed_max = kept.front().wind_speed;
    for (const auto& rec : kept) {
        norm.power_min = std::min(norm.power_min, rec.power);
        norm.power_max = std::max(norm.power_max, rec.power);
        norm.speed_min = std::min(norm.speed_min, rec.wind_speed);
        norm.speed_max = std::max(norm.speed_max, rec.wind_speed);
    }
    if (!(norm.power_min < norm.power_max) || !(norm.speed_min < norm.speed_max)) {
        throw ValidationError("data", "degenerate normalization bounds (constant column)");
    }
    for (auto& rec : kept) {
        rec.power = norm.normalize_power(rec.power);
        rec.wind_speed = norm.normalize_speed(rec.wind_speed);
        if (rec.power <= rules.interior_epsilon || rec.power >= 1.0 - rules.interior_epsilon) {
            rec.flags |= kFlagClipped;  // mapped into the open interval for bounded models
        }
    }
    // curtailment rule: low power at high wind, where "high" is a quantile of
    // the speeds that reach near-rated power; skipped when no record does
    std::vector<double> rated_speeds;
    for (const auto& rec : kept) {
        if (rec.power > rules.high_power) rated_speeds.push_back(rec.wind_speed);
    }
    std::vector<ScadaRecord> cleaned;
    cleaned.reserve(kept.size());
    if (!rated_speeds.empty()) {
        std::sort(rated_speeds.begin(), rated_speeds.end());
        const double speed_cut = detail::quantile_sorted(rated_speeds, rules.curtail_speed_quantile);
        for (auto& rec : kept) {
            if (rec.power < rules.curtail_power && rec.wind_speed > speed_cut) {
                rec.flags |= kFlagCurtailed;
                ++out.curtailed_removed;
            } else {
                cleaned.push_back(rec);
            }
        }
    } else {
        cleaned = std::move(kept);
    }
    if (cleaned.size() < 10) {
        throw InsufficientDataError("data", "fewer than 10 records survive cleaning");
    }
    out.dataset.records = std::move(cleaned);
    out.dataset.split.assign(out.dataset.records.size(), Split::unassigned);
    out.dataset.normalization = norm;
    return out;
}

/// Seeded uniform shuffle, then contiguous thirds: train, test, validation.
/// Sizes differ by at most one (remainders go to train, then test).
inline void split_three(ScadaDataset& dataset, std::uint64_t seed) {
    const std::size_t n = dataset.records.size();
    if (n < 3) {
        throw InsufficientDataError("data", "splitting needs at least 3 records");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_index(i + 1));
        std::swap(order[i], order[j]);
    }
    const std::size_t base = n / 3;
    const std::size_t rem = n - 3 * base;
    const std::size_t n_train = base + (rem >= 1 ? 1 : 0);
    const std::size_t n_test = base + (rem >= 2 ? 1 : 0);
    dataset.split.assign(n, Split::validation);
    for (std::size_t i = 0; i < n_train; ++i) dataset.split[order[i]] = Split::train;
    for (std::size_t i = n_train; i < n_train + n_test; ++i) dataset.split[order[i]] = Split::test;
}

/// max(eps, min(1 - eps, p)): maps exact-bound targets into the open
/// interval for the bounded models. `clipped` counts affected entries.
inline Eigen::VectorXd interior_map(const Eigen::VectorXd& p, double epsilon,
                                    long* clipped = nullptr) {
    Eigen::VectorXd out(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        out[i] = std::min(std::max(p[i], epsilon), 1.0 - epsilon);
        if (clipped != nullptr && out[i] != p[i]) ++*clipped;
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic power curve generator
// ---------------------------------------------------------------------------

struct SynthConfig {
    long n = 15000;
    double cut_in = 0.1;
    double rated_onset = 0.7;
    double steepness = 12.0;
    double concentration_peak = 150.0;  // at the bounds (tight data)
    double concentration_floor = 10.0;  // mid-curve (noisy data)
    std::uint64_t seed = 0;
};

inline void validate_synth(const SynthConfig& cfg) {
    if (cfg.n < 10) throw ValidationError("data", "synthetic n must be >= 10");
    if (!(cfg.cut_in < cfg.rated_onset)) {
        throw ValidationError("data", "cut_in must be below rated_onset");
    }
    if (!(cfg.steepness > 0.0)) throw ValidationError("data", "steepness must be > 0");
    if (!(cfg.concentration_floor > 2.0) || !(cfg.concentration_peak > 2.0) ||
        !(cfg.concentration_floor <= cfg.concentration_peak)) {
        throw ValidationError("data", "concentrations must satisfy 2 < floor <= peak");
    }
}

/// Generating curve: mean m(x) is a rescaled logistic pinned to 0.01 at
/// cut-in and 0.99 at rated onset (clamped to [0.001, 0.999]); the
/// concentration interpolates from the peak at the bounds down to the floor
/// mid-curve, quadratically in m(1-m).
struct SynthCurve {
    SynthConfig cfg;

    double mean(double x) const {
        const double mid = 0.5 * (cfg.cut_in + cfg.rated_onset);
        const double r = inv_logit(cfg.steepness * (x - mid));
        const double r_lo = inv_logit(cfg.steepness * (cfg.cut_in - mid));
        const double r_hi = inv_logit(cfg.steepness * (cfg.rated_onset - mid));
        const double m = 0.01 + 0.98 * (r - r_lo) / (r_hi - r_lo);
        return std::min(std::max(m, 0.001), 0.999);
    }

    double concentration(double x) const {
        const double m = mean(x);
        const double t = 4.0 * m * (1.0 - m);  // 0 at the bounds, 1 mid-curve
        return cfg.concentration_peak -
               (cfg.concentration_peak - cfg.concentration_floor) * t * t;
    }

    double alpha(double x) const { return concentration(x) * mean(x); }
    double beta(double x) const { return concentration(x) * (1.0 - mean(x)); }
};

struct SynthTruth {
    Eigen::VectorXd x;
    Eigen::VectorXd m;
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;
};

struct SynthResult {
    ScadaDataset dataset;  // unsplit; already in normalized units
    SynthTruth truth;      // generating values, retained as ground truth
};

/// Beta-noise power curve substitute for the confidential SCADA data:
/// x uniform on [0, 1], y ~ Beta(nu(x) m(x), nu(x) (1 - m(x))), seeded.
inline SynthResult synth_generate(const SynthConfig& cfg) {
    validate_synth(cfg);
    const SynthCurve curve{cfg};
    SynthResult out;
    out.dataset.records.resize(static_cast<std::size_t>(cfg.n));
    out.dataset.split.assign(static_cast<std::size_t>(cfg.n), Split::unassigned);
    out.truth.x.resize(cfg.n);
    out.truth.m.resize(cfg.n);
    out.truth.alpha.resize(cfg.n);
    out.truth.beta.resize(cfg.n);
    Rng rng(cfg.seed);
    for (long i = 0; i < cfg.n; ++i) {
        const double x = rng.uniform();
        const double a = curve.alpha(x);
        const double b = curve.beta(x);
        const double y = rng.beta(a, b);
        out.dataset.records[static_cast<std::size_t>(i)] = {x, y, 0};
        out.truth.x[i] = x;
        out.truth.m[i] = curve.mean(x);
        out.truth.alpha[i] = a;
        out.truth.beta[i] = b;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV output (deterministic %.17g formatting, '.' decimal separator)
// ---------------------------------------------------------------------------

inline void write_dataset_csv(const std::string& path, const std::vector<ScadaRecord>& records) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw IngestionError("data", "cannot write " + path);
    std::fputs("wind_speed,power\n", f);
    for (const auto& rec : records) {
        detail::write_double(f, rec.wind_speed);
        std::fputc(',', f);
        detail::write_double(f, rec.power);
        std::fputc('\n', f);
    }
    std::fclose(f);
}

inline void write_truth_csv(const std::string& path, const SynthTruth& truth) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw IngestionError("data", "cannot write " + path);
    std::fputs("x,m,alpha,beta\n", f);
    for (Eigen::Index i = 0; i < truth.x.size(); ++i) {
        detail::write_double(f, truth.x[i]);
        std::fputc(',', f);
        detail::write_double(f, truth.m[i]);
        std::fputc(',', f);
        detail::write_double(f, truth.alpha[i]);
        std::fputc(',', f);
        detail::write_double(f, truth.beta[i]);
        std::fputc('\n', f);
    }
    std::fclose(f);
}

}  // namespace powergp
