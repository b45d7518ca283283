#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ssvaerr/array.hpp"
#include "ssvaerr/errors.hpp"

namespace ssvaerr::augment {

using diff::Array;

// Grayscale video clip; 8-bit values kept as reals in [0,255].
struct Clip {
    Array frames;  // [T,H,W]

    int t() const { return frames.dim(0); }
    int h() const { return frames.dim(1); }
    int w() const { return frames.dim(2); }
};

Clip make_clip(Array frames);

struct HorizontalFlip {
    double p = 0.5;
};

struct RandomCrop {
    int h = 0;
    int w = 0;
};

struct CropOut {
    int num_patches = 5;
    int patch_side = 0;  // 0 resolves to frame height / 4
};

struct MissingFrames {
    double fraction = 0.2;
};

struct Solarization {
    double image_fraction = 0.2;
};

struct SaltPepper {
    double amount = 0.02;
    double salt_ratio = 0.5;
};

using Step = std::variant<HorizontalFlip, RandomCrop, CropOut, MissingFrames, Solarization, SaltPepper>;

struct AugmentationSpec {
    std::vector<Step> steps;
    std::uint64_t seed = 0;

    void validate() const;
};

std::string step_name(const Step& step);

// Steps run in order; each draws from its own stream keyed by
// (seed, clip id, epoch, step index), so results do not depend on what
// other clips were processed.
Clip apply(const Clip& clip, const AugmentationSpec& spec,
           std::uint64_t clip_id, std::uint64_t epoch);

// Writes frame 0 before any step and after each step as binary PGM files;
// returns the paths written.
std::vector<std::string> preview(const Clip& clip, const AugmentationSpec& spec,
                                 const std::string& out_dir,
                                 std::uint64_t clip_id, std::uint64_t epoch);

AugmentationSpec parse_augmentation_spec_text(const std::string& text);
AugmentationSpec read_augmentation_spec(const std::string& path);
std::string augmentation_spec_text(const AugmentationSpec& spec);

// Deterministic geometry helpers shared by evaluation and pretext views.
Clip center_crop(const Clip& clip, int out_h, int out_w);
Clip crop(const Clip& clip, int top, int left, int out_h, int out_w);
Clip flip_horizontal(const Clip& clip);
Clip resize_nearest(const Clip& clip, int out_h, int out_w);

void write_pgm(const std::string& path, const Array& image);  // [H,W]

} // namespace ssvaerr::augment
