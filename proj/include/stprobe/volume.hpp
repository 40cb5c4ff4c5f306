#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace stprobe {

struct Extent {
    int width = 383;
    int height = 383;
    int frames = 2;

    std::size_t size() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * static_cast<std::size_t>(frames);
    }
    /// True when a unique centre pixel exists (odd width and height).
    bool centered() const { return width % 2 == 1 && height % 2 == 1; }

    friend bool operator==(const Extent&, const Extent&) = default;
};

/// Default probe extent: the receptive field of the probed unit.
inline constexpr Extent kDefaultExtent{383, 383, 2};

std::string to_string(const Extent& extent);

/// Throws InvalidArgument unless the extent is positive and has a centre pixel.
void require_centered(const Extent& extent, const char* what);

/// Grayscale space-time signal, samples stored in (t, y, x) order.
///
/// Array indices run from zero; for odd sizes the centred coordinate of a
/// column is `ix - half_width()` and likewise for rows.
class Volume {
public:
    Volume() = default;
    explicit Volume(Extent extent);

    const Extent& extent() const { return extent_; }
    int width() const { return extent_.width; }
    int height() const { return extent_.height; }
    int frames() const { return extent_.frames; }
    int half_width() const { return (extent_.width - 1) / 2; }
    int half_height() const { return (extent_.height - 1) / 2; }

    std::size_t index(int ix, int iy, int t) const {
        return (static_cast<std::size_t>(t) * static_cast<std::size_t>(extent_.height) + static_cast<std::size_t>(iy)) *
                   static_cast<std::size_t>(extent_.width) +
               static_cast<std::size_t>(ix);
    }

    double& at(int ix, int iy, int t) { return data_[index(ix, iy, t)]; }
    double at(int ix, int iy, int t) const { return data_[index(ix, iy, t)]; }

    /// Sample at centred pixel coordinates (x, y) and frame t.
    double centered_at(int x, int y, int t) const { return at(x + half_width(), y + half_height(), t); }

    std::span<double> samples() { return data_; }
    std::span<const double> samples() const { return data_; }

    /// One frame as a contiguous (y, x) slice.
    std::span<const double> frame(int t) const;

private:
    Extent extent_{0, 0, 0};
    std::vector<double> data_;
};

/// Full dot product over all samples; extents must match.
double dot(const Volume& a, const Volume& b);

/// Sum of squared samples.
double energy(const Volume& v);

// Flat binary volume format: magic "STVL", u32 W, H, T (little-endian),
// then float32 samples in (t, y, x) order.
void write_stvl(const Volume& volume, std::ostream& out);
Volume read_stvl(std::istream& in);
void save_stvl(const Volume& volume, const std::string& path);
Volume load_stvl(const std::string& path);

}  // namespace stprobe
