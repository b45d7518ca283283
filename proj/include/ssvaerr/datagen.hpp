#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssvaerr/augment.hpp"
#include "ssvaerr/labels.hpp"
#include "ssvaerr/rng.hpp"

namespace ssvaerr::datagen {

using augment::Clip;
using diff::Array;

struct SyntheticConfig {
    int num_clips = 56;
    int frames = 120;
    int height = 64;
    int width = 64;
    std::uint64_t seed = 7;
    double noise_std = 4.0;
    double walk_step = 0.15;
    int smooth_window = 9;
    double val_ratio = 0.15;
    double test_ratio = 0.15;
    int feature_dim = 8;

    void validate() const;
};

struct ManifestEntry {
    std::string split;  // train | val | test
    std::string clip_path;
    std::string label_path;
    std::string feature_path;
};

struct DatasetManifest {
    std::string root;  // directory the relative paths hang off
    std::vector<ManifestEntry> entries;
    double mean = 0.0;
    double stddev = 1.0;

    std::vector<int> indices_of(const std::string& split) const;
};

struct LabeledClip {
    Clip clip;
    labels::AffectSeries targets;
    Array features;    // [T,D]
    int valid_frames;  // trailing frames beyond this are padding
};

// ---- binary formats ----

void write_clip(const std::string& path, const Clip& clip);
Clip read_clip(const std::string& path);

void write_features(const std::string& path, const Array& features);  // [T,D]
Array read_features(const std::string& path);

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

// ---- generation ----

// Smoothed clipped Gaussian random walk in [-1,1].
std::vector<double> latent_trajectory(int frames, double step, int smooth_window, KeyedRng& rng);

// Bright elliptical blob on a dark background: intensity follows arousal,
// horizontal position follows valence.
Clip render_clip(int frames, int height, int width,
                 const std::vector<double>& valence, const std::vector<double>& arousal,
                 double noise_std, KeyedRng& noise_rng);

// Fixed linear+sine embedding of (v,a) per frame, the stand-in feature
// stream for the audio-driven pretext task.
Array feature_stream(const std::vector<double>& valence, const std::vector<double>& arousal,
                     int dim);

DatasetManifest generate(const SyntheticConfig& cfg, const std::string& out_dir);

LabeledClip load_entry(const DatasetManifest& m, int index);

// ---- training-time helpers ----

LabeledClip sample_segment(const LabeledClip& lc, int length, KeyedRng& rng);

// Scalar pixel mean/std over the given clips; std floored at 1e-6.
std::pair<double, double> compute_stats(const std::vector<const Clip*>& clips);

// (pixels - mean) / stddev, applied elementwise.
Array normalize_frames(const Array& frames, double mean, double stddev);

} // namespace ssvaerr::datagen
