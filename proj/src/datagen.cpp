#include "ssvaerr/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace ssvaerr::datagen {

void SyntheticConfig::validate() const {
    if (num_clips < 1) throw ConfigError("datagen: need at least one clip");
    if (frames < 2) throw ConfigError("datagen: need at least two frames per clip");
    if (height < 8 || width < 8) throw ConfigError("datagen: frames must be at least 8x8");
    if (noise_std < 0.0) throw ConfigError("datagen: negative noise std");
    if (walk_step <= 0.0) throw ConfigError("datagen: walk step must be positive");
    if (smooth_window < 1) throw ConfigError("datagen: smoothing window must be positive");
    if (val_ratio < 0.0 || test_ratio < 0.0 || val_ratio + test_ratio >= 1.0)
        throw ConfigError("datagen: split ratios must be non-negative and leave room for train");
    if (feature_dim < 1) throw ConfigError("datagen: feature dim must be positive");
}

std::vector<int> DatasetManifest::indices_of(const std::string& split) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == split) out.push_back(static_cast<int>(i));
    return out;
}

// ---- binary helpers ----

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void expect_magic(std::ifstream& f, const char* magic, const std::string& path) {
    char got[4];
    if (!f.read(got, 4)) throw IoError("truncated file: " + path);
    if (std::memcmp(got, magic, 4) != 0)
        throw IoError("bad magic in " + path + " (expected " + magic + ")");
}

} // namespace

void write_clip(const std::string& path, const Clip& clip) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write("SSVA", 4);
    put_u32(f, 1);
    put_u32(f, static_cast<std::uint32_t>(clip.t()));
    put_u32(f, static_cast<std::uint32_t>(clip.h()));
    put_u32(f, static_cast<std::uint32_t>(clip.w()));
    std::vector<unsigned char> bytes(static_cast<std::size_t>(clip.frames.size()));
    for (std::int64_t i = 0; i < clip.frames.size(); ++i) {
        long v = std::lround(clip.frames[i]);
        bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::clamp(v, 0L, 255L));
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

Clip read_clip(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    expect_magic(f, "SSVA", path);
    std::uint32_t version = get_u32(f, path);
    if (version != 1) throw IoError("unsupported clip version in " + path);
    std::uint32_t T = get_u32(f, path), H = get_u32(f, path), W = get_u32(f, path);
    if (T == 0 || H == 0 || W == 0) throw IoError("degenerate clip dims in " + path);
    const std::int64_t n = static_cast<std::int64_t>(T) * H * W;
    std::vector<unsigned char> bytes(static_cast<std::size_t>(n));
    if (!f.read(reinterpret_cast<char*>(bytes.data()), n)) throw IoError("truncated file: " + path);
    Array frames({static_cast<int>(T), static_cast<int>(H), static_cast<int>(W)});
    for (std::int64_t i = 0; i < n; ++i) frames[i] = static_cast<double>(bytes[static_cast<std::size_t>(i)]);
    return Clip{std::move(frames)};
}

void write_features(const std::string& path, const Array& features) {
    check(features.rank() == 2, "features: expected [T,D]");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write("SSVF", 4);
    put_u32(f, static_cast<std::uint32_t>(features.dim(0)));
    put_u32(f, static_cast<std::uint32_t>(features.dim(1)));
    for (std::int64_t i = 0; i < features.size(); ++i) {
        float v = static_cast<float>(features[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(f, bits);
    }
    if (!f) throw IoError("write failed: " + path);
}

Array read_features(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    expect_magic(f, "SSVF", path);
    std::uint32_t T = get_u32(f, path), D = get_u32(f, path);
    if (T == 0 || D == 0) throw IoError("degenerate feature dims in " + path);
    Array out({static_cast<int>(T), static_cast<int>(D)});
    for (std::int64_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = get_u32(f, path);
        float v;
        std::memcpy(&v, &bits, 4);
        out[i] = static_cast<double>(v);
    }
    return out;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    for (const ManifestEntry& e : m.entries)
        f << e.split << '\t' << e.clip_path << '\t' << e.label_path << '\t' << e.feature_path << '\n';
    f << "#stats mean=" << labels::format_double(m.mean)
      << " std=" << labels::format_double(m.stddev) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    DatasetManifest m;
    m.root = std::filesystem::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    std::string line;
    bool have_stats = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("#stats ", 0) == 0) {
            std::size_t mp = line.find("mean=");
            std::size_t sp = line.find(" std=");
            if (mp == std::string::npos || sp == std::string::npos)
                throw IoError("bad stats line in " + path + ": " + line);
            auto parse = [&](std::size_t from, std::size_t to) {
                double v;
                auto [p, ec] = std::from_chars(line.data() + from, line.data() + to, v);
                if (ec != std::errc()) throw IoError("bad stats number in " + path);
                return v;
            };
            m.mean = parse(mp + 5, sp);
            m.stddev = parse(sp + 5, line.size());
            have_stats = true;
            continue;
        }
        if (line[0] == '#') continue;
        ManifestEntry e;
        std::size_t t1 = line.find('\t');
        std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        std::size_t t3 = t2 == std::string::npos ? std::string::npos : line.find('\t', t2 + 1);
        if (t3 == std::string::npos) throw IoError("bad manifest row in " + path + ": " + line);
        e.split = line.substr(0, t1);
        e.clip_path = line.substr(t1 + 1, t2 - t1 - 1);
        e.label_path = line.substr(t2 + 1, t3 - t2 - 1);
        e.feature_path = line.substr(t3 + 1);
        if (e.split != "train" && e.split != "val" && e.split != "test")
            throw IoError("unknown split in " + path + ": " + e.split);
        m.entries.push_back(std::move(e));
    }
    if (!have_stats) throw IoError("manifest missing stats line: " + path);
    if (m.entries.empty()) throw IoError("manifest has no entries: " + path);
    return m;
}

// ---- generation ----

std::vector<double> latent_trajectory(int frames, double step, int smooth_window, KeyedRng& rng) {
    std::vector<double> raw(static_cast<std::size_t>(frames));
    double x = rng.uniform(-0.8, 0.8);
    for (int t = 0; t < frames; ++t) {
        raw[static_cast<std::size_t>(t)] = x;
        x = std::clamp(x + step * rng.normal(), -1.0, 1.0);
    }
    const int half = smooth_window / 2;
    std::vector<double> out(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) {
        int lo = std::max(0, t - half);
        int hi = std::min(frames - 1, t + half);
        double s = 0.0;
        for (int i = lo; i <= hi; ++i) s += raw[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(t)] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

Clip render_clip(int frames, int height, int width,
                 const std::vector<double>& valence, const std::vector<double>& arousal,
                 double noise_std, KeyedRng& noise_rng) {
    check(static_cast<int>(valence.size()) == frames && static_cast<int>(arousal.size()) == frames,
          "render: trajectory lengths must equal frame count");
    const double bg = 20.0;
    const double rx = 8.0, ry = 10.0;
    Array out({frames, height, width});
    for (int t = 0; t < frames; ++t) {
        const double intensity = 128.0 + 100.0 * arousal[static_cast<std::size_t>(t)];
        const double cx = width / 2.0 + 0.25 * width * valence[static_cast<std::size_t>(t)];
        const double cy = height / 2.0;
        for (int y = 0; y < height; ++y) {
            double* row = out.data() + (static_cast<std::int64_t>(t) * height + y) * width;
            const double dy = (y - cy) / ry;
            for (int x = 0; x < width; ++x) {
                const double dx = (x - cx) / rx;
                double v = bg + (intensity - bg) * std::exp(-0.5 * (dx * dx + dy * dy));
                if (noise_std > 0.0) v += noise_std * noise_rng.normal();
                row[x] = static_cast<double>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return Clip{std::move(out)};
}

Array feature_stream(const std::vector<double>& valence, const std::vector<double>& arousal,
                     int dim) {
    check(valence.size() == arousal.size(), "feature stream: trajectory lengths differ");
    // fixed mixing table so the stream is a deterministic function of (v,a)
    static const double LV[8] = {0.9, -0.4, 0.0, 0.6, -0.8, 0.3, 0.5, -0.2};
    static const double LA[8] = {-0.3, 0.7, 1.0, -0.5, 0.2, 0.8, -0.6, 0.4};
    static const double SV[8] = {2.1, 0.0, 1.3, -1.7, 0.9, 2.6, -0.4, 1.1};
    static const double SA[8] = {0.0, 1.9, -0.8, 1.2, 2.3, -1.1, 1.6, 0.7};
    static const double PH[8] = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5};
    const int T = static_cast<int>(valence.size());
    Array out({T, dim});
    for (int t = 0; t < T; ++t) {
        const double v = valence[static_cast<std::size_t>(t)];
        const double a = arousal[static_cast<std::size_t>(t)];
        for (int d = 0; d < dim; ++d) {
            const int k = d % 8;
            out[static_cast<std::int64_t>(t) * dim + d] =
                LV[k] * v + LA[k] * a + std::sin(SV[k] * v + SA[k] * a + PH[k]);
        }
    }
    return out;
}

std::pair<double, double> compute_stats(const std::vector<const Clip*>& clips) {
    check(!clips.empty(), "stats: no clips");
    double sum = 0.0;
    std::int64_t n = 0;
    for (const Clip* c : clips) {
        for (std::int64_t i = 0; i < c->frames.size(); ++i) sum += c->frames[i];
        n += c->frames.size();
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const Clip* c : clips)
        for (std::int64_t i = 0; i < c->frames.size(); ++i) {
            const double d = c->frames[i] - mean;
            ss += d * d;
        }
    double stddev = std::sqrt(ss / static_cast<double>(n));
    if (stddev < 1e-6) stddev = 1e-6;
    return {mean, stddev};
}

Array normalize_frames(const Array& frames, double mean, double stddev) {
    check(stddev > 0.0, "normalize: stddev must be positive");
    Array out = frames;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean) / stddev;
    return out;
}

DatasetManifest generate(const SyntheticConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir + "/clips", ec);
    fs::create_directories(out_dir + "/labels", ec);
    fs::create_directories(out_dir + "/features", ec);
    if (!fs::is_directory(out_dir + "/clips"))
        throw IoError("cannot create dataset directories under " + out_dir);

    const int n_val = static_cast<int>(std::floor(cfg.val_ratio * cfg.num_clips));
    const int n_test = static_cast<int>(std::floor(cfg.test_ratio * cfg.num_clips));
    const int n_train = cfg.num_clips - n_val - n_test;

    DatasetManifest m;
    m.root = out_dir;
    std::vector<Clip> train_clips;

    for (int i = 0; i < cfg.num_clips; ++i) {
        KeyedRng rng_v(fold_key(cfg.seed, static_cast<std::uint64_t>(i), hash_str("valence")));
        KeyedRng rng_a(fold_key(cfg.seed, static_cast<std::uint64_t>(i), hash_str("arousal")));
        KeyedRng rng_n(fold_key(cfg.seed, static_cast<std::uint64_t>(i), hash_str("noise")));
        auto v = latent_trajectory(cfg.frames, cfg.walk_step, cfg.smooth_window, rng_v);
        auto a = latent_trajectory(cfg.frames, cfg.walk_step, cfg.smooth_window, rng_a);
        Clip clip = render_clip(cfg.frames, cfg.height, cfg.width, v, a, cfg.noise_std, rng_n);
        Array feats = feature_stream(v, a, cfg.feature_dim);

        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04d", i);
        ManifestEntry e;
        e.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
        e.clip_path = std::string("clips/") + name + ".ssva";
        e.label_path = std::string("labels/") + name + ".csv";
        e.feature_path = std::string("features/") + name + ".ssvf";

        write_clip(out_dir + "/" + e.clip_path, clip);
        labels::write_labels_csv(out_dir + "/" + e.label_path, labels::make_series(v, a));
        write_features(out_dir + "/" + e.feature_path, feats);

        if (e.split == "train") train_clips.push_back(std::move(clip));
        m.entries.push_back(std::move(e));
    }

    std::vector<const Clip*> ptrs;
    ptrs.reserve(train_clips.size());
    for (const Clip& c : train_clips) ptrs.push_back(&c);
    auto [mean, stddev] = compute_stats(ptrs);
    m.mean = mean;
    m.stddev = stddev;

    write_manifest(out_dir + "/manifest.tsv", m);
    return m;
}

LabeledClip load_entry(const DatasetManifest& m, int index) {
    check(index >= 0 && index < static_cast<int>(m.entries.size()), "manifest index out of range");
    const ManifestEntry& e = m.entries[static_cast<std::size_t>(index)];
    LabeledClip lc{read_clip(m.root + "/" + e.clip_path),
                   labels::read_labels_csv(m.root + "/" + e.label_path),
                   read_features(m.root + "/" + e.feature_path), 0};
    check(lc.targets.frames() == lc.clip.t(), "labels and clip disagree on frame count: " + e.clip_path);
    check(lc.features.dim(0) == lc.clip.t(), "features and clip disagree on frame count: " + e.clip_path);
    lc.valid_frames = lc.clip.t();
    return lc;
}

LabeledClip sample_segment(const LabeledClip& lc, int length, KeyedRng& rng) {
    check(length > 0, "segment: length must be positive");
    const int T = lc.clip.t(), H = lc.clip.h(), W = lc.clip.w();
    const int D = lc.features.dim(1);
    if (T >= length) {
        const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(T - length + 1)));
        LabeledClip out;
        out.clip.frames = Array({length, H, W});
        std::copy(lc.clip.frames.data() + static_cast<std::int64_t>(start) * H * W,
                  lc.clip.frames.data() + static_cast<std::int64_t>(start + length) * H * W,
                  out.clip.frames.data());
        out.targets.valence.assign(lc.targets.valence.begin() + start,
                                   lc.targets.valence.begin() + start + length);
        out.targets.arousal.assign(lc.targets.arousal.begin() + start,
                                   lc.targets.arousal.begin() + start + length);
        out.features = Array({length, D});
        std::copy(lc.features.data() + static_cast<std::int64_t>(start) * D,
                  lc.features.data() + static_cast<std::int64_t>(start + length) * D,
                  out.features.data());
        out.valid_frames = length;
        return out;
    }
    LabeledClip out;
    out.clip.frames = Array({length, H, W});
    std::copy(lc.clip.frames.data(), lc.clip.frames.data() + lc.clip.frames.size(),
              out.clip.frames.data());
    out.targets.valence.resize(static_cast<std::size_t>(length), 0.0);
    out.targets.arousal.resize(static_cast<std::size_t>(length), 0.0);
    std::copy(lc.targets.valence.begin(), lc.targets.valence.end(), out.targets.valence.begin());
    std::copy(lc.targets.arousal.begin(), lc.targets.arousal.end(), out.targets.arousal.begin());
    out.features = Array({length, D});
    std::copy(lc.features.data(), lc.features.data() + lc.features.size(), out.features.data());
    out.valid_frames = T;
    return out;
}

} // namespace ssvaerr::datagen
