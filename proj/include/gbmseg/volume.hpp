#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "gbmseg/diffgrid.hpp"
#include "gbmseg/grid.hpp"

namespace gbmseg {

// Axis order is (z, y, x) everywhere: dims (D,H,W), spacing (sz,sy,sx) in mm,
// origin (z,y,x) in mm. The physical center of voxel (i,j,k) is
// origin + (index + 0.5) * spacing per axis; payloads are row-major, x fastest.
struct Geometry {
    std::array<std::int64_t, 3> dims{1, 1, 1};
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::array<float, 3> origin{0.0f, 0.0f, 0.0f};

    std::int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    bool operator==(const Geometry&) const = default;
};

struct Volume {
    Geometry geom;
    std::vector<float> voxels;

    Volume() = default;
    explicit Volume(Geometry g, float fill = 0.0f)
        : geom(g), voxels(static_cast<std::size_t>(g.voxel_count()), fill) {}

    float& at(std::int64_t z, std::int64_t y, std::int64_t x) {
        return voxels[static_cast<std::size_t>((z * geom.dims[1] + y) * geom.dims[2] + x)];
    }
    float at(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return voxels[static_cast<std::size_t>((z * geom.dims[1] + y) * geom.dims[2] + x)];
    }
};

// 0 = background, 1..S = structures.
struct LabelMap {
    Geometry geom;
    std::vector<std::uint8_t> voxels;

    LabelMap() = default;
    explicit LabelMap(Geometry g) : geom(g), voxels(static_cast<std::size_t>(g.voxel_count()), 0) {}

    std::uint8_t& at(std::int64_t z, std::int64_t y, std::int64_t x) {
        return voxels[static_cast<std::size_t>((z * geom.dims[1] + y) * geom.dims[2] + x)];
    }
    std::uint8_t at(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return voxels[static_cast<std::size_t>((z * geom.dims[1] + y) * geom.dims[2] + x)];
    }
};

struct BinaryMask {
    Geometry geom;
    std::vector<std::uint8_t> voxels;

    BinaryMask() = default;
    explicit BinaryMask(Geometry g) : geom(g), voxels(static_cast<std::size_t>(g.voxel_count()), 0) {}

    std::uint8_t& at(std::int64_t z, std::int64_t y, std::int64_t x) {
        return voxels[static_cast<std::size_t>((z * geom.dims[1] + y) * geom.dims[2] + x)];
    }
    std::uint8_t at(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return voxels[static_cast<std::size_t>((z * geom.dims[1] + y) * geom.dims[2] + x)];
    }

    std::int64_t count() const {
        std::int64_t n = 0;
        for (auto v : voxels) n += v != 0 ? 1 : 0;
        return n;
    }
};

// --- geometry ops ---------------------------------------------------------

// New dims = round(old_dims * old_spacing / target_spacing); same origin;
// samples outside the input hull clamp to the nearest voxel. Exactly equal
// spacing short-circuits to a bitwise copy.
Volume resample_trilinear(const Volume& v, std::array<float, 3> target_spacing);

LabelMap resample_nearest(const LabelMap& m, std::array<float, 3> target_spacing);
BinaryMask resample_nearest(const BinaryMask& m, std::array<float, 3> target_spacing);

// Window [start, start+size) with start = center - size/2 per axis; voxels
// outside the input are set to `fill`.
Volume crop_or_pad(const Volume& v, std::array<std::int64_t, 3> size, std::array<std::int64_t, 3> center,
                   float fill = -1000.0f);
LabelMap crop_or_pad(const LabelMap& m, std::array<std::int64_t, 3> size, std::array<std::int64_t, 3> center);
BinaryMask crop_or_pad(const BinaryMask& m, std::array<std::int64_t, 3> size, std::array<std::int64_t, 3> center);

// out = clamp((x - lo) / (hi - lo), 0, 1)
Volume hu_window_normalize(const Volume& v, float lo = -200.0f, float hi = 200.0f);

// Threshold, keep the largest 6-connected component, close with a Euclidean
// ball of `closing_radius` voxels, fill enclosed holes.
BinaryMask generate_global_mask_threshold(const Volume& v, float threshold_hu, int closing_radius);

// Union of all structure labels dilated by a Euclidean ball (voxel metric).
BinaryMask mask_from_labels(const LabelMap& lm, int dilation_radius);

// channel 0 = CT intensities, channel 1 = mask as {0,1}
DiffGrid stack_channels(const Volume& ct, const BinaryMask& mask);

DiffGrid volume_to_grid(const Volume& v);
DiffGrid mask_to_grid(const BinaryMask& m);

// --- morphology building blocks (exposed for tests) ------------------------

std::vector<std::array<int, 3>> ball_offsets(int radius);
BinaryMask dilate(const BinaryMask& m, int radius);
BinaryMask erode(const BinaryMask& m, int radius);
BinaryMask largest_component_6(const BinaryMask& m);
BinaryMask fill_holes_6(const BinaryMask& m);

// --- MVOL file format -------------------------------------------------------
//
// Little-endian layout:
//   magic "MVOL" (4 bytes) | version u16 = 1 | dtype u8 (0 = f32, 1 = u8)
//   | kind u8 (0 = intensity, 1 = label, 2 = binary) | dims 3 x u32 (D,H,W)
//   | spacing 3 x f32 mm | origin 3 x f32 mm | payload D*H*W elements
//   row-major (x fastest). No compression.

using MvolValue = std::variant<Volume, LabelMap, BinaryMask>;

void write_mvol(const std::string& path, const Volume& v);
void write_mvol(const std::string& path, const LabelMap& m);
void write_mvol(const std::string& path, const BinaryMask& m);

MvolValue read_mvol(const std::string& path);
Volume read_mvol_volume(const std::string& path);
LabelMap read_mvol_labels(const std::string& path);
BinaryMask read_mvol_mask(const std::string& path);

} // namespace gbmseg
