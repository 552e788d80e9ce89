#include "cola/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "cola/binary_io.hpp"
#include "cola/errors.hpp"

namespace cola::ad {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'L', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

using binary::get_string;
using binary::put_string;

template <class T>
void put_le(std::ostream& out, T v) {
    binary::put<T>(out, v);
}

template <class T>
T get_le(std::istream& in) {
    return binary::get<T>(in);
}

void put_doubles(std::ostream& out, std::span<const double> xs) {
    for (double x : xs) put_le<double>(out, x);
}

std::vector<double> get_doubles(std::istream& in, std::size_t n) {
    std::vector<double> xs(n);
    for (auto& x : xs) x = get_le<double>(in);
    return xs;
}

std::ifstream open_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingArtifact("checkpoint not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw ParseError("checkpoint: bad magic header in " + path.string());
    const auto version = get_le<std::uint32_t>(in);
    if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    return in;
}

}  // namespace

void AdamConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("adam: learning rate must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw ConfigError("adam: betas must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be > 0");
    if (!(clip > 0.0)) throw ConfigError("adam: clip bound must be > 0");
}

Tensor& ParamStore::add(const std::string& name, Shape shape, std::vector<double> values) {
    if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto t = Tensor::from(shape, std::move(values), true);
    state_[name] = AdamState{std::vector<double>(shape.size(), 0.0), std::vector<double>(shape.size(), 0.0), 0};
    return params_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::add_uniform(const std::string& name, Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape.size());
    for (auto& v : values) v = dist(rng);
    return add(name, shape, std::move(values));
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [_, t] : params_) {
        t.mutable_grad();
        t.zero_grad();
    }
}

double ParamStore::grad_norm() const {
    double sq = 0.0;
    for (const auto& [_, t] : params_)
        for (double g : t.grad()) sq += g * g;
    return std::sqrt(sq);
}

double ParamStore::value_norm() const {
    double sq = 0.0;
    for (const auto& [_, t] : params_)
        for (double v : t.values()) sq += v * v;
    return std::sqrt(sq);
}

std::map<std::string, std::vector<double>> ParamStore::snapshot() const {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, t] : params_) out[name].assign(t.values().begin(), t.values().end());
    return out;
}

void ParamStore::restore(const std::map<std::string, std::vector<double>>& values) {
    for (auto& [name, t] : params_) {
        auto it = values.find(name);
        if (it == values.end()) throw StateError("restore: snapshot lacks parameter " + name);
        if (it->second.size() != t.size()) throw ShapeError("restore: size mismatch for " + name);
        std::copy(it->second.begin(), it->second.end(), t.mutable_values().begin());
    }
}

void ParamStore::save(const std::filesystem::path& path, const std::string& metadata) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint: " + path.string());
    out.write(kMagic, 8);
    put_le<std::uint32_t>(out, kVersion);
    put_string(out, metadata);
    put_le<std::uint64_t>(out, params_.size());
    for (const auto& [name, t] : params_) {
        const auto& st = state_.at(name);
        put_string(out, name);
        put_le<std::uint64_t>(out, t.rows());
        put_le<std::uint64_t>(out, t.cols());
        put_doubles(out, t.values());
        put_le<std::uint64_t>(out, st.steps);
        put_doubles(out, st.first_moment);
        put_doubles(out, st.second_moment);
    }
    if (!out) throw Error("failed writing checkpoint: " + path.string());
}

std::string ParamStore::load(const std::filesystem::path& path) {
    auto in = open_checkpoint(path);
    std::string metadata = get_string(in);
    const auto count = get_le<std::uint64_t>(in);
    if (count != params_.size())
        throw StateError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                         std::to_string(params_.size()));
    for (std::uint64_t p = 0; p < count; ++p) {
        const std::string name = get_string(in);
        auto it = params_.find(name);
        if (it == params_.end()) throw StateError("checkpoint parameter not in model: " + name);
        Shape shape{get_le<std::uint64_t>(in), get_le<std::uint64_t>(in)};
        if (shape != it->second.shape())
            throw ShapeError("checkpoint shape " + shape.str() + " for " + name + " differs from model " +
                             it->second.shape().str());
        auto values = get_doubles(in, shape.size());
        std::copy(values.begin(), values.end(), it->second.mutable_values().begin());
        auto& st = state_[name];
        st.steps = get_le<std::uint64_t>(in);
        st.first_moment = get_doubles(in, shape.size());
        st.second_moment = get_doubles(in, shape.size());
    }
    return metadata;
}

std::string ParamStore::read_metadata(const std::filesystem::path& path) {
    auto in = open_checkpoint(path);
    return get_string(in);
}

void adam_step(ParamStore& store, const AdamConfig& config) {
    config.validate();
    for (auto& [name, t] : store.params_) {
        auto& st = store.state_.at(name);
        auto grad = t.grad();
        if (grad.size() != t.size()) throw StateError("adam_step: missing gradient for " + name);
        ++st.steps;
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(st.steps));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(st.steps));
        auto values = t.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grad[i];
            st.first_moment[i] = config.beta1 * st.first_moment[i] + (1.0 - config.beta1) * g;
            st.second_moment[i] = config.beta2 * st.second_moment[i] + (1.0 - config.beta2) * g * g;
            const double m_hat = st.first_moment[i] / c1;
            const double v_hat = st.second_moment[i] / c2;
            values[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
    store.zero_grad();
}

double clip_gradients(ParamStore& store, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError("clip_gradients: bound must be > 0");
    const double norm = store.grad_norm();
    if (norm > max_norm) {
        const double factor = max_norm / norm;
        for (const auto& name : store.names())
            for (auto& g : store.get(name).mutable_grad()) g *= factor;
    }
    return norm;
}

std::vector<Coordinate> sample_coordinates(const ParamStore& store, std::size_t count, std::mt19937_64& rng) {
    std::vector<Coordinate> out;
    const auto names = store.names();
    if (names.empty()) return out;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& name = names[i % names.size()];
        std::uniform_int_distribution<std::size_t> pick(0, store.get(name).size() - 1);
        out.push_back({name, pick(rng)});
    }
    return out;
}

GradCheckResult finite_diff_check(ParamStore& store, const std::function<Tensor(ParamStore&)>& loss,
                                  const std::vector<Coordinate>& coordinates, double eps) {
    if (!(eps > 0.0)) throw ArgumentError("finite_diff_check: eps must be > 0");
    store.zero_grad();
    {
        Tensor root = loss(store);
        if (!std::isfinite(root.item())) throw NumericError("finite_diff_check: non-finite loss");
        backward(root);
    }
    GradCheckResult result;
    NoGradGuard no_grad;
    for (const auto& c : coordinates) {
        Tensor& param = store.get(c.name);
        const double analytic = param.grad()[c.index];
        double& slot = param.mutable_values()[c.index];
        const double original = slot;
        slot = original + eps;
        const double up = loss(store).item();
        slot = original - eps;
        const double down = loss(store).item();
        slot = original;
        if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("finite_diff_check: non-finite loss");
        const double numeric = (up - down) / (2.0 * eps);
        const double rel = std::abs(analytic - numeric) / (std::abs(numeric) + 1e-12);
        result.entries.push_back({c, analytic, numeric, rel});
        result.max_relative_error = std::max(result.max_relative_error, rel);
    }
    store.zero_grad();
    return result;
}

}  // namespace cola::ad
