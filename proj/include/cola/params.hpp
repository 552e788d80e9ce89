#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cola/tensor.hpp"

namespace cola::ad {

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip = 0.1;

    /// Throws ConfigError. A zero learning rate is accepted (frozen-parameter runs).
    void validate() const;
};

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t steps = 0;
};

/// Named trainable parameters plus their optimizer state. Iteration order is
/// lexicographic by name, which fixes the order of every reduction over the store.
class ParamStore {
public:
    Tensor& add(const std::string& name, Shape shape, std::vector<double> values);
    Tensor& add_uniform(const std::string& name, Shape shape, double bound, std::mt19937_64& rng);

    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    std::vector<std::string> names() const;
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    const AdamState& state(const std::string& name) const { return state_.at(name); }

    void zero_grad();
    double grad_norm() const;
    double value_norm() const;

    /// Copies every parameter's values (not optimizer state).
    std::map<std::string, std::vector<double>> snapshot() const;
    void restore(const std::map<std::string, std::vector<double>>& values);

    /// Versioned binary checkpoint: values plus Adam moments and step counts,
    /// little-endian doubles, and an opaque metadata string.
    void save(const std::filesystem::path& path, const std::string& metadata = {}) const;
    /// Loads values and optimizer state into already-registered parameters of
    /// matching shape. Returns the stored metadata string.
    std::string load(const std::filesystem::path& path);
    static std::string read_metadata(const std::filesystem::path& path);

    friend void adam_step(ParamStore& store, const AdamConfig& config);

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, AdamState> state_;
};

/// Bias-corrected Adam update, then zeroes all gradients.
void adam_step(ParamStore& store, const AdamConfig& config);

/// Scales all gradients so the global L2 norm is at most `max_norm`. Returns the pre-clip norm.
double clip_gradients(ParamStore& store, double max_norm);

struct Coordinate {
    std::string name;
    std::size_t index = 0;
};

/// Picks `count` coordinates, cycling over parameters (name order) so every
/// parameter contributes before any repeats.
std::vector<Coordinate> sample_coordinates(const ParamStore& store, std::size_t count, std::mt19937_64& rng);

struct GradCheckEntry {
    Coordinate coordinate;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::vector<GradCheckEntry> entries;
};

/// Compares reverse-mode gradients of `loss` against central differences at
/// the given coordinates. relative error = |analytic - numeric| / (|numeric| + 1e-12).
GradCheckResult finite_diff_check(ParamStore& store, const std::function<Tensor(ParamStore&)>& loss,
                                  const std::vector<Coordinate>& coordinates, double eps = 1e-6);

}  // namespace cola::ad
