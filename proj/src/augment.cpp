#include "ssvaerr/augment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssvaerr/labels.hpp"
#include "ssvaerr/rng.hpp"

namespace ssvaerr::augment {

Clip make_clip(Array frames) {
    check(frames.rank() == 3, "clip: frames must be [T,H,W], got " + Array::shape_str(frames.shape()));
    check(frames.dim(0) >= 1, "clip: need at least one frame");
    for (std::int64_t i = 0; i < frames.size(); ++i)
        check(frames[i] >= 0.0 && frames[i] <= 255.0, "clip: pixel value outside [0,255]");
    return Clip{std::move(frames)};
}

namespace {

void check_fraction(double v, const char* what) {
    if (v < 0.0 || v > 1.0)
        throw ConfigError(std::string("augmentation: ") + what + " must lie in [0,1], got " +
                          std::to_string(v));
}

} // namespace

void AugmentationSpec::validate() const {
    for (const Step& s : steps) {
        if (const auto* f = std::get_if<HorizontalFlip>(&s)) check_fraction(f->p, "flip probability");
        if (const auto* c = std::get_if<RandomCrop>(&s)) {
            if (c->h < 1 || c->w < 1)
                throw ConfigError("augmentation: crop dims must be positive");
        }
        if (const auto* c = std::get_if<CropOut>(&s)) {
            if (c->num_patches < 0 || c->patch_side < 0)
                throw ConfigError("augmentation: negative crop-out parameters");
        }
        if (const auto* m = std::get_if<MissingFrames>(&s)) check_fraction(m->fraction, "missing-frame fraction");
        if (const auto* so = std::get_if<Solarization>(&s)) check_fraction(so->image_fraction, "solarization fraction");
        if (const auto* sp = std::get_if<SaltPepper>(&s)) {
            check_fraction(sp->amount, "salt-pepper amount");
            check_fraction(sp->salt_ratio, "salt ratio");
        }
    }
}

std::string step_name(const Step& step) {
    if (std::holds_alternative<HorizontalFlip>(step)) return "horizontal_flip";
    if (std::holds_alternative<RandomCrop>(step)) return "random_crop";
    if (std::holds_alternative<CropOut>(step)) return "crop_out";
    if (std::holds_alternative<MissingFrames>(step)) return "missing_frames";
    if (std::holds_alternative<Solarization>(step)) return "solarization";
    return "salt_pepper";
}

namespace {

Clip apply_flip(const Clip& c, const HorizontalFlip& f, KeyedRng& rng) {
    if (!rng.bernoulli(f.p)) return c;
    const int T = c.t(), H = c.h(), W = c.w();
    Array out({T, H, W});
    for (int t = 0; t < T; ++t)
        for (int h = 0; h < H; ++h) {
            const double* src = c.frames.data() + (static_cast<std::int64_t>(t) * H + h) * W;
            double* dst = out.data() + (static_cast<std::int64_t>(t) * H + h) * W;
            for (int w = 0; w < W; ++w) dst[w] = src[W - 1 - w];
        }
    return Clip{std::move(out)};
}

Clip apply_crop(const Clip& c, const RandomCrop& r, KeyedRng& rng) {
    const int T = c.t(), H = c.h(), W = c.w();
    check(r.h <= H && r.w <= W,
          "random crop " + std::to_string(r.h) + "x" + std::to_string(r.w) +
              " does not fit frame " + std::to_string(H) + "x" + std::to_string(W));
    const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(H - r.h + 1)));
    const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(W - r.w + 1)));
    Array out({T, r.h, r.w});
    for (int t = 0; t < T; ++t)
        for (int h = 0; h < r.h; ++h) {
            const double* src = c.frames.data() + (static_cast<std::int64_t>(t) * H + oy + h) * W + ox;
            double* dst = out.data() + (static_cast<std::int64_t>(t) * r.h + h) * r.w;
            for (int w = 0; w < r.w; ++w) dst[w] = src[w];
        }
    return Clip{std::move(out)};
}

Clip apply_cropout(const Clip& c, const CropOut& co, KeyedRng& rng) {
    const int T = c.t(), H = c.h(), W = c.w();
    int side = co.patch_side > 0 ? co.patch_side : std::max(1, H / 4);
    check(side <= H && side <= W, "crop-out patch side " + std::to_string(side) +
                                      " exceeds frame " + std::to_string(H) + "x" + std::to_string(W));
    Array out = c.frames;
    for (int p = 0; p < co.num_patches; ++p) {
        const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(H - side + 1)));
        const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(W - side + 1)));
        for (int t = 0; t < T; ++t)
            for (int h = 0; h < side; ++h) {
                double* dst = out.data() + (static_cast<std::int64_t>(t) * H + oy + h) * W + ox;
                for (int w = 0; w < side; ++w) dst[w] = 0.0;
            }
    }
    return Clip{std::move(out)};
}

Clip apply_missing(const Clip& c, const MissingFrames& m, KeyedRng& rng) {
    const int T = c.t(), H = c.h(), W = c.w();
    const int k = static_cast<int>(std::floor(m.fraction * T));
    if (k == 0) return c;
    auto frames = rng.sample_distinct(static_cast<std::uint64_t>(T), static_cast<std::uint64_t>(k));
    Array out = c.frames;
    for (std::uint64_t t : frames) {
        double* dst = out.data() + static_cast<std::int64_t>(t) * H * W;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) dst[i] = 0.0;
    }
    return Clip{std::move(out)};
}

Clip apply_solarize(const Clip& c, const Solarization& s, KeyedRng& rng) {
    const int T = c.t(), H = c.h(), W = c.w();
    const int k = static_cast<int>(std::floor(s.image_fraction * T));
    if (k == 0) return c;
    double mean = 0.0;
    for (std::int64_t i = 0; i < c.frames.size(); ++i) mean += c.frames[i];
    mean /= static_cast<double>(c.frames.size());
    auto frames = rng.sample_distinct(static_cast<std::uint64_t>(T), static_cast<std::uint64_t>(k));
    Array out = c.frames;
    for (std::uint64_t t : frames) {
        double* dst = out.data() + static_cast<std::int64_t>(t) * H * W;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i)
            if (dst[i] > mean) dst[i] = 255.0 - dst[i];
    }
    return Clip{std::move(out)};
}

Clip apply_salt_pepper(const Clip& c, const SaltPepper& sp, KeyedRng& rng) {
    const std::int64_t n = c.frames.size();
    const std::int64_t m = static_cast<std::int64_t>(std::llround(sp.amount * static_cast<double>(n)));
    if (m == 0) return c;
    auto picks = rng.sample_distinct(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(m));
    Array out = c.frames;
    for (std::uint64_t i : picks)
        out[static_cast<std::int64_t>(i)] = rng.bernoulli(sp.salt_ratio) ? 255.0 : 0.0;
    return Clip{std::move(out)};
}

Clip apply_step(const Clip& c, const Step& step, KeyedRng& rng) {
    if (const auto* f = std::get_if<HorizontalFlip>(&step)) return apply_flip(c, *f, rng);
    if (const auto* r = std::get_if<RandomCrop>(&step)) return apply_crop(c, *r, rng);
    if (const auto* co = std::get_if<CropOut>(&step)) return apply_cropout(c, *co, rng);
    if (const auto* m = std::get_if<MissingFrames>(&step)) return apply_missing(c, *m, rng);
    if (const auto* s = std::get_if<Solarization>(&step)) return apply_solarize(c, *s, rng);
    return apply_salt_pepper(c, std::get<SaltPepper>(step), rng);
}

} // namespace

Clip apply(const Clip& clip, const AugmentationSpec& spec,
           std::uint64_t clip_id, std::uint64_t epoch) {
    spec.validate();
    Clip cur = clip;
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        KeyedRng rng(fold_key(spec.seed, clip_id, epoch, static_cast<std::uint64_t>(i)));
        cur = apply_step(cur, spec.steps[i], rng);
    }
    return cur;
}

void write_pgm(const std::string& path, const Array& image) {
    check(image.rank() == 2, "pgm: image must be [H,W]");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(image.dim(1)));
    for (int h = 0; h < image.dim(0); ++h) {
        for (int w = 0; w < image.dim(1); ++w) {
            long v = std::lround(image[static_cast<std::int64_t>(h) * image.dim(1) + w]);
            row[static_cast<std::size_t>(w)] = static_cast<unsigned char>(std::clamp(v, 0L, 255L));
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("write failed: " + path);
}

namespace {

Array first_frame(const Clip& c) {
    const int H = c.h(), W = c.w();
    return Array({H, W}, std::vector<double>(c.frames.data(), c.frames.data() + static_cast<std::int64_t>(H) * W));
}

} // namespace

std::vector<std::string> preview(const Clip& clip, const AugmentationSpec& spec,
                                 const std::string& out_dir,
                                 std::uint64_t clip_id, std::uint64_t epoch) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> written;
    std::string base = out_dir + "/preview_00_original.pgm";
    write_pgm(base, first_frame(clip));
    written.push_back(base);
    Clip cur = clip;
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        KeyedRng rng(fold_key(spec.seed, clip_id, epoch, static_cast<std::uint64_t>(i)));
        cur = apply_step(cur, spec.steps[i], rng);
        char idx[8];
        std::snprintf(idx, sizeof(idx), "%02zu", i + 1);
        std::string path = out_dir + "/preview_" + idx + "_" + step_name(spec.steps[i]) + ".pgm";
        write_pgm(path, first_frame(cur));
        written.push_back(path);
    }
    return written;
}

namespace {

double parse_num(const std::string& v, const std::string& key) {
    double out;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("augmentation spec: bad value for " + key + ": " + v);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

Step make_step(const std::string& name) {
    if (name == "horizontal_flip") return HorizontalFlip{};
    if (name == "random_crop") return RandomCrop{};
    if (name == "crop_out") return CropOut{};
    if (name == "missing_frames") return MissingFrames{};
    if (name == "solarization") return Solarization{};
    if (name == "salt_pepper") return SaltPepper{};
    throw ConfigError("augmentation spec: unknown step: " + name);
}

void set_step_param(Step& step, const std::string& key, double value, const std::string& full_key) {
    bool ok = false;
    if (auto* f = std::get_if<HorizontalFlip>(&step)) {
        if (key == "p") { f->p = value; ok = true; }
    } else if (auto* r = std::get_if<RandomCrop>(&step)) {
        if (key == "h") { r->h = static_cast<int>(value); ok = true; }
        if (key == "w") { r->w = static_cast<int>(value); ok = true; }
    } else if (auto* c = std::get_if<CropOut>(&step)) {
        if (key == "num_patches") { c->num_patches = static_cast<int>(value); ok = true; }
        if (key == "patch_side") { c->patch_side = static_cast<int>(value); ok = true; }
    } else if (auto* m = std::get_if<MissingFrames>(&step)) {
        if (key == "fraction") { m->fraction = value; ok = true; }
    } else if (auto* s = std::get_if<Solarization>(&step)) {
        if (key == "image_fraction") { s->image_fraction = value; ok = true; }
    } else if (auto* sp = std::get_if<SaltPepper>(&step)) {
        if (key == "amount") { sp->amount = value; ok = true; }
        if (key == "salt_ratio") { sp->salt_ratio = value; ok = true; }
    }
    if (!ok) throw ConfigError("augmentation spec: unknown key: " + full_key);
}

} // namespace

AugmentationSpec parse_augmentation_spec_text(const std::string& text) {
    AugmentationSpec spec;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("augmentation spec: expected key=value, got: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "seed") {
            std::uint64_t s;
            auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), s);
            if (ec != std::errc() || p != val.data() + val.size())
                throw ConfigError("augmentation spec: bad seed: " + val);
            spec.seed = s;
            continue;
        }
        if (key.rfind("step", 0) != 0)
            throw ConfigError("augmentation spec: unknown key: " + key);
        std::size_t dot = key.find('.');
        std::string idx_str = key.substr(4, dot == std::string::npos ? std::string::npos : dot - 4);
        int idx;
        auto [p, ec] = std::from_chars(idx_str.data(), idx_str.data() + idx_str.size(), idx);
        if (ec != std::errc() || p != idx_str.data() + idx_str.size() || idx < 0)
            throw ConfigError("augmentation spec: bad step index in: " + key);
        if (dot == std::string::npos) {
            if (static_cast<std::size_t>(idx) != spec.steps.size())
                throw ConfigError("augmentation spec: steps must be declared in order, got " + key);
            spec.steps.push_back(make_step(val));
        } else {
            if (static_cast<std::size_t>(idx) >= spec.steps.size())
                throw ConfigError("augmentation spec: parameter before declaration: " + key);
            set_step_param(spec.steps[static_cast<std::size_t>(idx)], key.substr(dot + 1),
                           parse_num(val, key), key);
        }
    }
    spec.validate();
    return spec;
}

AugmentationSpec read_augmentation_spec(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open augmentation spec: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_augmentation_spec_text(buf.str());
}

std::string augmentation_spec_text(const AugmentationSpec& spec) {
    std::ostringstream out;
    out << "seed=" << spec.seed << '\n';
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        const Step& s = spec.steps[i];
        out << "step" << i << '=' << step_name(s) << '\n';
        auto kv = [&](const char* k, double v) {
            out << "step" << i << '.' << k << '=' << labels::format_double(v) << '\n';
        };
        if (const auto* f = std::get_if<HorizontalFlip>(&s)) kv("p", f->p);
        if (const auto* r = std::get_if<RandomCrop>(&s)) {
            kv("h", r->h);
            kv("w", r->w);
        }
        if (const auto* c = std::get_if<CropOut>(&s)) {
            kv("num_patches", c->num_patches);
            kv("patch_side", c->patch_side);
        }
        if (const auto* m = std::get_if<MissingFrames>(&s)) kv("fraction", m->fraction);
        if (const auto* so = std::get_if<Solarization>(&s)) kv("image_fraction", so->image_fraction);
        if (const auto* sp = std::get_if<SaltPepper>(&s)) {
            kv("amount", sp->amount);
            kv("salt_ratio", sp->salt_ratio);
        }
    }
    return out.str();
}

Clip crop(const Clip& c, int top, int left, int out_h, int out_w) {
    const int T = c.t(), H = c.h(), W = c.w();
    if (out_h <= 0 || out_w <= 0 || top < 0 || left < 0 || top + out_h > H || left + out_w > W)
        throw ContractError("crop window " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                            " at (" + std::to_string(top) + "," + std::to_string(left) +
                            ") leaves frame " + std::to_string(H) + "x" + std::to_string(W));
    Array out({T, out_h, out_w});
    for (int t = 0; t < T; ++t)
        for (int h = 0; h < out_h; ++h) {
            const double* src = c.frames.data() + (static_cast<std::int64_t>(t) * H + top + h) * W + left;
            double* dst = out.data() + (static_cast<std::int64_t>(t) * out_h + h) * out_w;
            for (int w = 0; w < out_w; ++w) dst[w] = src[w];
        }
    return Clip{std::move(out)};
}

Clip center_crop(const Clip& c, int out_h, int out_w) {
    return crop(c, (c.h() - out_h) / 2, (c.w() - out_w) / 2, out_h, out_w);
}

Clip flip_horizontal(const Clip& c) {
    const int T = c.t(), H = c.h(), W = c.w();
    Array out({T, H, W});
    for (int t = 0; t < T; ++t)
        for (int h = 0; h < H; ++h) {
            const double* src = c.frames.data() + (static_cast<std::int64_t>(t) * H + h) * W;
            double* dst = out.data() + (static_cast<std::int64_t>(t) * H + h) * W;
            for (int w = 0; w < W; ++w) dst[w] = src[W - 1 - w];
        }
    return Clip{std::move(out)};
}

Clip resize_nearest(const Clip& c, int out_h, int out_w) {
    const int T = c.t(), H = c.h(), W = c.w();
    if (out_h <= 0 || out_w <= 0) throw ContractError("resize target must be positive");
    Array out({T, out_h, out_w});
    for (int t = 0; t < T; ++t)
        for (int h = 0; h < out_h; ++h) {
            const int sh = std::min(H - 1, h * H / out_h);
            const double* src = c.frames.data() + (static_cast<std::int64_t>(t) * H + sh) * W;
            double* dst = out.data() + (static_cast<std::int64_t>(t) * out_h + h) * out_w;
            for (int w = 0; w < out_w; ++w) dst[w] = src[std::min(W - 1, w * W / out_w)];
        }
    return Clip{std::move(out)};
}

} // namespace ssvaerr::augment
