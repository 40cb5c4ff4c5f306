#include "stprobe/motion.hpp"

#include <ostream>

#include <fmt/format.h>

#include "stprobe/error.hpp"

namespace stprobe {

AliasLimits alias_limits_for(const Extent& extent) {
    return {static_cast<double>((extent.width - 1) / 2), extent.width / 2.0};
}

std::string alias_violation(const Stimulus& s, const AliasLimits& limits) {
    const double lambda0 = 1.0 / s.F;
    switch (s.kind) {
        case MotionKind::translation:
            return {};
        case MotionKind::dilation:
            if (!dilation_alias_check(s.motion, lambda0, limits.x_max)) {
                return fmt::format("(h-1)*x_max = {:.6g} > lambda0/2 = {:.6g}", (s.motion - 1.0) * limits.x_max,
                                   lambda0 / 2.0);
            }
            return {};
        case MotionKind::rotation:
            if (!rotation_alias_check(s.motion, limits.m_max, lambda0)) {
                return fmt::format("omega*m_max = {:.6g} > lambda0/2 = {:.6g}", s.motion * limits.m_max,
                                   lambda0 / 2.0);
            }
            return {};
    }
    return {};
}

MotionGrid build_motion_grid(const GridSpec& spec, MotionKind kind, const Extent& extent) {
    if (kind == MotionKind::translation) {
        throw InvalidArgument("motion gridsearch takes dilation or rotation grids");
    }
    spec.validate();
    if (spec.kind != kind) {
        throw InvalidArgument(fmt::format("grid spec kind {} does not match {}", to_string(spec.kind), to_string(kind)));
    }
    const AxisParam own = motion_axis_for(kind);
    const AxisParam other =
        motion_axis_for(kind == MotionKind::dilation ? MotionKind::rotation : MotionKind::dilation);
    if (spec.axis_of(own) < 0) {
        throw InvalidArgument(fmt::format("{} grid needs a {} axis", to_string(kind), to_string(own)));
    }
    if (spec.axis_of(other) >= 0 || spec.axis_of(AxisParam::temporal_frequency) >= 0) {
        throw InvalidArgument(fmt::format("{} grid carries a motion axis of another kind", to_string(kind)));
    }

    MotionGrid g;
    g.spec = spec;
    g.limits = alias_limits_for(extent);
    const auto all = build_grid(spec);
    std::vector<Stimulus> kept;
    for (std::size_t id = 0; id < all.size(); ++id) {
        auto reason = alias_violation(all[id], g.limits);
        if (reason.empty()) {
            kept.push_back(all[id]);
            g.grid_ids.push_back(id);
        } else {
            g.excluded.push_back({id, all[id], std::move(reason)});
        }
    }
    g.set = stimulus_set_from_list(std::move(kept), kind, extent);
    g.set.label = "grid";
    g.set.description = spec.canonical();
    return g;
}

ResponseTable run_motion_gridsearch(const ResponseProvider& provider, const MotionGrid& grid,
                                    std::size_t batch_size) {
    if (provider.required_extent() != grid.set.extent) {
        throw ProviderError(fmt::format("provider needs extent {} but the motion grid was built for {}",
                                        to_string(provider.required_extent()), to_string(grid.set.extent)));
    }
    return run_stimulus_set(provider, grid.set, batch_size);
}

void write_exclusion_audit(const MotionGrid& grid, std::ostream& out) {
    out << "grid_id,half_wavelength_px,theta_deg,motion,phi_deg,reason\n";
    for (const auto& ex : grid.excluded) {
        const auto& s = ex.stimulus;
        out << fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},\"{}\"\n", ex.grid_id, 0.5 / s.F, s.theta * 180.0 / kPi,
                           s.motion, s.phi * 180.0 / kPi, ex.reason);
    }
}

namespace {

// Largest activation of a filter; ties go to the lowest stimulus id.
std::pair<std::size_t, double> table_peak(const ResponseTable& t, std::size_t filter, const char* what) {
    if (filter >= t.filter_count()) {
        throw IncompleteTable(fmt::format("{} table has no filter {}", what, filter));
    }
    if (!t.filter_complete(filter)) {
        throw IncompleteTable(fmt::format("{} table is missing rows for filter {}", what, filter));
    }
    std::size_t best = 0;
    double top = 0.0;
    for (std::size_t s = 0; s < t.stimulus_count(); ++s) {
        const double v = t.get(s, filter);
        if (s == 0 || v > top) {
            best = s;
            top = v;
        }
    }
    return {best, std::max(top, 0.0)};
}

}  // namespace

MotionComparison compare_motion_preference(const ResponseTable& translation, const ResponseTable& motion,
                                           const MotionGrid& grid, std::size_t filter_id) {
    if (motion.stimulus_count() != grid.set.stimuli.size()) {
        throw IncompleteTable(fmt::format("motion table has {} stimuli, the grid {}", motion.stimulus_count(),
                                          grid.set.stimuli.size()));
    }
    MotionComparison c;
    c.filter_id = filter_id;
    c.kind = grid.set.kind;
    c.translation_r0 = table_peak(translation, filter_id, "translation").second;
    const auto [id, r0] = table_peak(motion, filter_id, "motion");
    c.motion_r0 = r0;
    c.motion_stimulus_id = id;
    if (!grid.set.stimuli.empty()) {
        c.motion_stimulus = grid.set.stimuli[id];
    }
    c.dominates = c.motion_r0 > c.translation_r0;
    return c;
}

std::string motion_csv_header() {
    return "filter_id,kind,half_wavelength_px,theta_deg,motion,phi_deg,r0_motion,r0_translation,dominates";
}

std::string to_csv_row(const MotionComparison& c) {
    const auto& s = c.motion_stimulus;
    return fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{}", c.filter_id, to_string(c.kind),
                       0.5 / s.F, s.theta * 180.0 / kPi, s.motion, s.phi * 180.0 / kPi, c.motion_r0,
                       c.translation_r0, c.dominates ? 1 : 0);
}

}  // namespace stprobe
