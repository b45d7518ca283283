#include "ssvaerr/labels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "ssvaerr/rng.hpp"

namespace ssvaerr::labels {

AffectSeries make_series(std::vector<double> valence, std::vector<double> arousal) {
    check(valence.size() == arousal.size(),
          "affect series: valence and arousal lengths differ (" +
              std::to_string(valence.size()) + " vs " + std::to_string(arousal.size()) + ")");
    return AffectSeries{std::move(valence), std::move(arousal)};
}

Discretizer::Discretizer(int bins, LabelRange range, std::vector<double> centroids)
    : bins_(bins), range_(range), centroids_(std::move(centroids)) {
    if (bins_ < 2) throw ConfigError("discretizer: need at least 2 bins, got " + std::to_string(bins_));
    if (!(range_.lo < range_.hi))
        throw ConfigError("discretizer: empty label range [" + std::to_string(range_.lo) + "," +
                          std::to_string(range_.hi) + "]");
    check(static_cast<int>(centroids_.size()) == bins_, "discretizer: centroid count != bins");
    boundaries_.resize(static_cast<std::size_t>(bins_) + 1);
    const double w = (range_.hi - range_.lo) / bins_;
    for (int i = 0; i <= bins_; ++i) boundaries_[static_cast<std::size_t>(i)] = range_.lo + w * i;
    boundaries_.front() = range_.lo;
    boundaries_.back() = range_.hi;
    for (std::size_t i = 1; i < boundaries_.size(); ++i)
        check(boundaries_[i - 1] < boundaries_[i], "discretizer: boundaries not increasing");
    check(std::is_sorted(centroids_.begin(), centroids_.end()), "discretizer: centroids not sorted");
}

Discretizer Discretizer::uniform(int bins, LabelRange range) {
    if (bins < 2) throw ConfigError("discretizer: need at least 2 bins, got " + std::to_string(bins));
    if (!(range.lo < range.hi)) throw ConfigError("discretizer: empty label range");
    std::vector<double> mids(static_cast<std::size_t>(bins));
    const double w = (range.hi - range.lo) / bins;
    for (int i = 0; i < bins; ++i) mids[static_cast<std::size_t>(i)] = range.lo + (i + 0.5) * w;
    return Discretizer(bins, range, std::move(mids));
}

Discretizer Discretizer::with_centroids(int bins, LabelRange range, std::vector<double> centroids) {
    return Discretizer(bins, range, std::move(centroids));
}

int Discretizer::discretize(double v) const {
    const double c = std::clamp(v, range_.lo, range_.hi);
    const int idx = static_cast<int>(std::floor((c - range_.lo) / (range_.hi - range_.lo) * bins_));
    return std::min(bins_ - 1, idx);
}

Array one_hot(int idx, int bins) {
    check(idx >= 0 && idx < bins,
          "one_hot: index " + std::to_string(idx) + " outside [0," + std::to_string(bins) + ")");
    Array out({bins});
    out[idx] = 1.0;
    return out;
}

namespace {

std::vector<double> uniform_midpoints(int k, LabelRange range) {
    std::vector<double> mids(static_cast<std::size_t>(k));
    const double w = (range.hi - range.lo) / k;
    for (int i = 0; i < k; ++i) mids[static_cast<std::size_t>(i)] = range.lo + (i + 0.5) * w;
    return mids;
}

} // namespace

KMeansResult kmeans_centroids(const std::vector<double>& values, int k,
                              std::uint64_t seed, LabelRange range) {
    if (k < 1) throw ConfigError("kmeans: k must be positive");
    KMeansResult res;

    std::set<double> distinct(values.begin(), values.end());
    if (static_cast<int>(distinct.size()) < k) {
        res.centroids = uniform_midpoints(k, range);
        res.used_fallback = true;
        return res;
    }

    const std::size_t n = values.size();
    KeyedRng rng(fold_key(seed, hash_str("kmeans")));

    // k-means++ seeding
    std::vector<double> centers;
    centers.reserve(static_cast<std::size_t>(k));
    centers.push_back(values[static_cast<std::size_t>(rng.below(n))]);
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (double c : centers) {
                const double d = values[i] - c;
                best = std::min(best, d * d);
            }
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            // remaining points duplicate chosen centers; grab an unused distinct value
            for (double v : distinct) {
                if (std::find(centers.begin(), centers.end(), v) == centers.end()) {
                    centers.push_back(v);
                    break;
                }
            }
            continue;
        }
        double pick = rng.uniform01() * total;
        std::size_t chosen = n - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (pick < acc) {
                chosen = i;
                break;
            }
        }
        centers.push_back(values[chosen]);
    }

    // Lloyd iterations to assignment fixpoint
    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bestd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = values[i] - centers[static_cast<std::size_t>(c)];
                const double dd = d * d;
                if (dd < bestd) {
                    bestd = dd;
                    best = c;
                }
            }
            objective += bestd;
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        res.objective_history.push_back(objective);
        res.iterations = iter + 1;
        if (!changed) break;
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        std::vector<std::int64_t> cnt(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[static_cast<std::size_t>(assign[i])] += values[i];
            ++cnt[static_cast<std::size_t>(assign[i])];
        }
        for (int c = 0; c < k; ++c)
            if (cnt[static_cast<std::size_t>(c)] > 0)
                centers[static_cast<std::size_t>(c)] =
                    sum[static_cast<std::size_t>(c)] / static_cast<double>(cnt[static_cast<std::size_t>(c)]);
    }

    std::sort(centers.begin(), centers.end());
    res.centroids = std::move(centers);
    return res;
}

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    check(ec == std::errc(), "format_double: conversion failed");
    return std::string(buf, p);
}

void write_labels_csv(const std::string& path, const AffectSeries& series) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "frame,valence,arousal\n";
    for (int i = 0; i < series.frames(); ++i)
        f << i << ',' << format_double(series.valence[static_cast<std::size_t>(i)]) << ','
          << format_double(series.arousal[static_cast<std::size_t>(i)]) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

AffectSeries read_labels_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoError("empty labels file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "frame,valence,arousal")
        throw IoError("bad labels header in " + path + ": " + line);
    AffectSeries s;
    int expect = 0;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos) throw IoError("bad labels row in " + path + ": " + line);
        auto parse = [&](const char* b, const char* e) {
            double out;
            auto [p, ec] = std::from_chars(b, e, out);
            if (ec != std::errc() || p != e)
                throw IoError("bad number in " + path + ": " + line);
            return out;
        };
        long frame = 0;
        {
            auto [p, ec] = std::from_chars(line.data(), line.data() + c1, frame);
            if (ec != std::errc() || p != line.data() + c1)
                throw IoError("bad frame index in " + path + ": " + line);
        }
        if (frame != expect)
            throw IoError("non-sequential frame index in " + path + ": " + line);
        ++expect;
        s.valence.push_back(parse(line.data() + c1 + 1, line.data() + c2));
        s.arousal.push_back(parse(line.data() + c2 + 1, line.data() + line.size()));
    }
    return s;
}

} // namespace ssvaerr::labels
