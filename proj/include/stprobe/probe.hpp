#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "stprobe/error.hpp"
#include "stprobe/gabor.hpp"
#include "stprobe/grid.hpp"
#include "stprobe/volume.hpp"

namespace stprobe {

/// Batch response contract for the filter bank under test. Rows of the
/// returned matrix follow the batch order, columns the filter ids.
class ResponseProvider {
public:
    virtual ~ResponseProvider() = default;

    virtual Extent required_extent() const = 0;
    virtual std::size_t filter_count() const = 0;

    virtual Eigen::MatrixXd respond(std::span<const Volume> batch) const = 0;

    /// Parametrised stimuli. The default renders each one and calls the
    /// volume overload.
    virtual Eigen::MatrixXd respond(std::span<const Stimulus> batch) const;
};

/// A bank of linear-nonlinear units max(0, K (<s, kernel> + b)).
class SyntheticBank : public ResponseProvider {
public:
    SyntheticBank(std::vector<GaborParams> filters, const Extent& extent);

    /// Arbitrary kernels with per-filter gain and bias.
    SyntheticBank(std::vector<Volume> kernels, std::vector<double> gains, std::vector<double> biases);

    Extent required_extent() const override { return extent_; }
    std::size_t filter_count() const override { return kernels_.size(); }

    Eigen::MatrixXd respond(std::span<const Volume> batch) const override;

    /// Stimuli sharing everything but phase (and, for translation, temporal
    /// frequency) share one complex projection per filter.
    Eigen::MatrixXd respond(std::span<const Stimulus> batch) const override;

    /// Planted parameters; empty for kernel-built banks.
    const std::vector<GaborParams>& planted() const { return planted_; }
    const Volume& kernel(std::size_t j) const { return kernels_[j]; }

private:
    Extent extent_;
    std::vector<GaborParams> planted_;
    std::vector<Volume> kernels_;
    std::vector<double> gains_;
    std::vector<double> biases_;
};

/// Reads bank.csv: header then one Gabor row per filter.
std::vector<GaborParams> load_bank_csv(const std::string& path);
void save_bank_csv(const std::vector<GaborParams>& bank, const std::string& path);

// --- stimulus manifests ------------------------------------------------------

/// An explicit ordered stimulus list with its identifying hash. Grids and
/// profile sweeps both reduce to this.
struct StimulusSet {
    std::string label;  // "grid" or "profile"
    MotionKind kind = MotionKind::translation;
    Extent extent = kDefaultExtent;
    std::uint64_t hash = 0;
    std::string description;  // canonical grid text, or empty
    std::vector<Stimulus> stimuli;
};

StimulusSet stimulus_set_from_grid(const GridSpec& spec, const Extent& extent);
/// The hash covers the kind, extent and the exact stimulus values.
StimulusSet stimulus_set_from_list(std::vector<Stimulus> stimuli, MotionKind kind, const Extent& extent);

/// JSON-lines manifest: a header record then one record per stimulus.
/// Returns the FNV-1a hash of the bytes written.
std::uint64_t export_manifest(const GridSpec& spec, const Extent& extent, std::ostream& out);
std::uint64_t export_manifest(const StimulusSet& set, std::ostream& out);
void export_manifest_file(const StimulusSet& set, const std::string& path);
StimulusSet read_manifest(std::istream& in);
StimulusSet load_manifest(const std::string& path);

// --- response tables ---------------------------------------------------------

class ResponseTable {
public:
    ResponseTable() = default;
    ResponseTable(std::uint64_t hash, std::size_t stimulus_count, std::size_t filter_count);

    std::uint64_t grid_hash() const { return hash_; }
    std::size_t stimulus_count() const { return stimuli_; }
    std::size_t filter_count() const { return filters_; }

    bool has(std::size_t stimulus, std::size_t filter) const { return present_[idx(stimulus, filter)]; }
    float get(std::size_t stimulus, std::size_t filter) const { return values_[idx(stimulus, filter)]; }
    /// Throws InvalidArgument on a duplicate key, out-of-range id or bad value.
    void set(std::size_t stimulus, std::size_t filter, float activation);

    bool complete() const { return missing_ == 0; }
    std::size_t missing() const { return missing_; }
    bool filter_complete(std::size_t filter) const;

    /// Fills a table from a provider response matrix (rows = stimuli).
    static ResponseTable from_matrix(std::uint64_t hash, const Eigen::MatrixXd& m);

private:
    std::size_t idx(std::size_t s, std::size_t f) const { return s * filters_ + f; }

    std::uint64_t hash_ = 0;
    std::size_t stimuli_ = 0;
    std::size_t filters_ = 0;
    std::size_t missing_ = 0;
    std::vector<float> values_;
    std::vector<unsigned char> present_;
};

/// Response CSV: "# grid_spec_hash=0x...", header, rows with %.9g values.
void write_responses(const ResponseTable& table, std::ostream& out);
void save_responses(const ResponseTable& table, const std::string& path);

class HashMismatch : public Error {
public:
    using Error::Error;
};
class InvalidActivation : public Error {
public:
    using Error::Error;
};
class DuplicateRow : public Error {
public:
    using Error::Error;
};
class MalformedResponses : public Error {
public:
    using Error::Error;
};

/// filter_count = 0 infers it from the largest filter id.
ResponseTable read_responses(std::istream& in, std::uint64_t expected_hash, std::size_t stimulus_count,
                             std::size_t filter_count = 0);
ResponseTable ingest_responses(const std::string& path, const GridSpec& spec, std::size_t filter_count = 0);
ResponseTable ingest_responses(const std::string& path, const StimulusSet& set, std::size_t filter_count = 0);

/// Filters with a positive activation. Throws IncompleteTable on missing rows.
std::vector<std::size_t> active_filters(const ResponseTable& table);

/// Replays a manifest's recorded responses for stimuli it contains.
class FileProvider : public ResponseProvider {
public:
    FileProvider(StimulusSet set, ResponseTable table);

    Extent required_extent() const override { return set_.extent; }
    std::size_t filter_count() const override { return table_.filter_count(); }

    /// Always throws ProviderError: recorded responses cannot score new volumes.
    Eigen::MatrixXd respond(std::span<const Volume> batch) const override;
    /// Throws ProviderError naming the first stimulus not in the manifest.
    Eigen::MatrixXd respond(std::span<const Stimulus> batch) const override;

private:
    using Key = std::tuple<int, double, double, double, double>;
    StimulusSet set_;
    ResponseTable table_;
    std::map<Key, std::size_t> index_;
};

/// Evaluates a whole stimulus set in batches on a provider.
ResponseTable run_stimulus_set(const ResponseProvider& provider, const StimulusSet& set,
                               std::size_t batch_size = 4096);

}  // namespace stprobe
