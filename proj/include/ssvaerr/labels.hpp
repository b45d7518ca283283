#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssvaerr/array.hpp"
#include "ssvaerr/errors.hpp"

namespace ssvaerr::labels {

using diff::Array;

struct LabelRange {
    double lo = -1.0;
    double hi = 1.0;
};

// Per-frame continuous valence/arousal targets for one clip.
struct AffectSeries {
    std::vector<double> valence;
    std::vector<double> arousal;

    int frames() const { return static_cast<int>(valence.size()); }
};

AffectSeries make_series(std::vector<double> valence, std::vector<double> arousal);

// Uniform bin edges over [lo,hi] with per-bin representative values.
// Centroids default to bin midpoints; k-means results may replace them,
// assigned to bins by ascending order.
class Discretizer {
public:
    static Discretizer uniform(int bins, LabelRange range);
    static Discretizer with_centroids(int bins, LabelRange range, std::vector<double> centroids);

    int bins() const { return bins_; }
    double lo() const { return range_.lo; }
    double hi() const { return range_.hi; }
    const std::vector<double>& boundaries() const { return boundaries_; }
    const std::vector<double>& centroids() const { return centroids_; }

    // min(L-1, floor((clamp(v)-lo)/(hi-lo)*L)); edge ties go to the higher bin.
    int discretize(double v) const;

private:
    Discretizer(int bins, LabelRange range, std::vector<double> centroids);

    int bins_;
    LabelRange range_;
    std::vector<double> boundaries_;
    std::vector<double> centroids_;
};

Array one_hot(int idx, int bins);

struct KMeansResult {
    std::vector<double> centroids;  // ascending
    bool used_fallback = false;     // fewer than k distinct inputs
    std::vector<double> objective_history;
    int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding, at most 100 iterations.
// Falls back to uniform bin midpoints when the data has fewer than k
// distinct values.
KMeansResult kmeans_centroids(const std::vector<double>& values, int k,
                              std::uint64_t seed, LabelRange range);

void write_labels_csv(const std::string& path, const AffectSeries& series);
AffectSeries read_labels_csv(const std::string& path);

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

} // namespace ssvaerr::labels
