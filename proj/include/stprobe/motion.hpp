#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "stprobe/fitting.hpp"
#include "stprobe/grid.hpp"
#include "stprobe/probe.hpp"

namespace stprobe {

/// Distances used by the aliasing checks.
struct AliasLimits {
    double x_max = 191.0;  // dilation: farthest pixel from the centre on an axis
    double m_max = 191.5;  // rotation: half the receptive field
};

/// x_max = (W - 1) / 2 and m_max = W / 2 for the stimulus width W.
AliasLimits alias_limits_for(const Extent& extent);

/// Empty when the stimulus passes its kind's aliasing check, else the reason.
std::string alias_violation(const Stimulus& s, const AliasLimits& limits);

struct Exclusion {
    std::size_t grid_id = 0;
    Stimulus stimulus;
    std::string reason;
};

/// A dilation or rotation grid split into admissible and excluded tuples.
struct MotionGrid {
    GridSpec spec;
    AliasLimits limits;
    StimulusSet set;                        // admissible stimuli, grid order
    std::vector<std::size_t> grid_ids;      // grid id of each set entry
    std::vector<Exclusion> excluded;
};

/// Throws InvalidArgument when the spec is not a `kind` grid (wrong kind,
/// missing motion axis or the other kind's motion axis present).
MotionGrid build_motion_grid(const GridSpec& spec, MotionKind kind, const Extent& extent);

/// Activations for the admissible tuples. Throws ProviderError on an extent mismatch.
ResponseTable run_motion_gridsearch(const ResponseProvider& provider, const MotionGrid& grid,
                                    std::size_t batch_size = 4096);

/// CSV audit of excluded tuples: grid id, parameters, reason.
void write_exclusion_audit(const MotionGrid& grid, std::ostream& out);

struct MotionComparison {
    std::size_t filter_id = 0;
    MotionKind kind = MotionKind::dilation;
    double translation_r0 = 0.0;
    double motion_r0 = 0.0;
    std::size_t motion_stimulus_id = 0;  // index in the admissible set
    Stimulus motion_stimulus;
    bool dominates = false;  // motion_r0 > translation_r0
};

/// Peaks of one filter in both tables. Throws IncompleteTable when either
/// table lacks rows for the filter.
MotionComparison compare_motion_preference(const ResponseTable& translation, const ResponseTable& motion,
                                           const MotionGrid& grid, std::size_t filter_id);

/// Scatter rows: filter, kind, lambda/2, theta, motion, phi, peaks, dominance.
std::string motion_csv_header();
std::string to_csv_row(const MotionComparison& c);

}  // namespace stprobe
