#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <cstring>
#include <string>
#include <vector>

#include "nlaslr/autograd.hpp"
#include "nlaslr/error.hpp"
#include "nlaslr/random.hpp"
#include "nlaslr/rawtensor.hpp"

namespace nlaslr {

/// A trainable tensor plus its Adam moment buffers.
template <typename T>
struct Parameter {
    std::string name;
    Var<T> var;
    Tensor<T> m, v;
    std::uint64_t steps = 0;
};

/// Named parameters in creation order. Modules keep Var handles that share
/// storage with the entries here, so optimizer updates are visible to them.
template <typename T>
class ParameterSet {
   public:
    /// New parameter drawn uniformly from [-bound, bound].
    Var<T> create(const std::string& name, Shape shape, double bound, Rng& rng) {
        Tensor<T> init(std::move(shape));
        for (auto& v : init.values()) v = static_cast<T>(uniform(rng, -bound, bound));
        return add(name, std::move(init));
    }

    Var<T> add(const std::string& name, Tensor<T> value) {
        if (index_.count(name)) throw Error(ErrorKind::Config, "duplicate parameter name " + name);
        Parameter<T> p;
        p.name = name;
        p.m = Tensor<T>(value.shape());
        p.v = Tensor<T>(value.shape());
        p.var = Var<T>::leaf(std::move(value));
        index_[name] = params_.size();
        params_.push_back(std::move(p));
        return params_.back().var;
    }

    std::vector<Parameter<T>>& entries() { return params_; }
    const std::vector<Parameter<T>>& entries() const { return params_; }

    Parameter<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }
    const Parameter<T>* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }
    Parameter<T>& at(const std::string& name) {
        if (auto* p = find(name)) return *p;
        throw Error(ErrorKind::Data, "no parameter named " + name);
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.var.value().size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.var.zero_grad();
    }

   private:
    std::vector<Parameter<T>> params_;
    std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// L2 penalty folded into the gradient before the moment updates.
    double weight_decay = 1e-3;
};

/// One Adam update of a single parameter. Parameters that received no
/// gradient in this iteration are left untouched, moments included.
template <typename T>
void adam_update(Parameter<T>& p, double lr, const AdamConfig& cfg) {
    if (!p.var.has_grad()) return;
    ++p.steps;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.steps));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.steps));
    Tensor<T>& theta = p.var.mutable_value();
    const Tensor<T>& grad = p.var.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = static_cast<double>(grad[i]) + cfg.weight_decay * static_cast<double>(theta[i]);
        const double m = cfg.beta1 * static_cast<double>(p.m[i]) + (1.0 - cfg.beta1) * g;
        const double v = cfg.beta2 * static_cast<double>(p.v[i]) + (1.0 - cfg.beta2) * g * g;
        p.m[i] = static_cast<T>(m);
        p.v[i] = static_cast<T>(v);
        theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr * (m / c1) / (std::sqrt(v / c2) + cfg.epsilon));
    }
}

template <typename T>
void adam_step(ParameterSet<T>& params, double lr, const AdamConfig& cfg) {
    for (auto& p : params.entries()) adam_update(p, lr, cfg);
}

// ---------------------------------------------------------------------------
// Checkpoint container: "NLCK", u32 version, u32 value width (4 or 8),
// metadata JSON, u32 tensor count, then per tensor: name, rank, extents,
// values and (when the optimizer flag is set) u64 steps, m, v.

inline constexpr char kCheckpointMagic[4] = {'N', 'L', 'C', 'K'};

struct CheckpointTensor {
    std::string name;
    Tensor<double> value;
    std::optional<Tensor<double>> m, v;
    std::uint64_t steps = 0;
};

struct CheckpointFile {
    std::uint32_t value_bytes = 4;
    nlohmann::json meta;
    bool has_optimizer = false;
    std::vector<CheckpointTensor> tensors;

    const CheckpointTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
};

namespace detail {

template <typename T>
void write_tensor_values(std::ostream& out, const Tensor<T>& t) {
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) io::write_le<std::uint64_t>(out, d);
    io::write_values(out, t);
}

template <typename T>
Tensor<double> read_tensor_values(std::istream& in, const std::string& what) {
    const auto rank = io::read_le<std::uint32_t>(in, what);
    if (rank > 8) throw Error(ErrorKind::Data, what + ": implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = io::read_le<std::uint64_t>(in, what);
    Tensor<T> t(shape);
    io::read_values(in, t, what);
    return t.template cast<double>();
}

}  // namespace detail

/// Writes the parameters accepted by `keep` (all by default).
template <typename T>
void write_checkpoint(std::ostream& out, const ParameterSet<T>& params, const nlohmann::json& meta, bool with_optimizer,
                      const std::function<bool(const std::string&)>& keep = {}) {
    out.write(kCheckpointMagic, 4);
    io::write_le<std::uint32_t>(out, 1);
    io::write_le<std::uint32_t>(out, sizeof(T));
    io::write_string(out, meta.dump());
    io::write_le<std::uint8_t>(out, with_optimizer ? 1 : 0);
    std::vector<const Parameter<T>*> kept;
    for (const auto& p : params.entries())
        if (!keep || keep(p.name)) kept.push_back(&p);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(kept.size()));
    for (const auto* p : kept) {
        io::write_string(out, p->name);
        detail::write_tensor_values(out, p->var.value());
        if (with_optimizer) {
            io::write_le<std::uint64_t>(out, p->steps);
            detail::write_tensor_values(out, p->m);
            detail::write_tensor_values(out, p->v);
        }
    }
}

template <typename T>
void save_checkpoint(const std::string& path, const ParameterSet<T>& params, const nlohmann::json& meta,
                     bool with_optimizer, const std::function<bool(const std::string&)>& keep = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Data, "cannot write checkpoint " + path);
    write_checkpoint(out, params, meta, with_optimizer, keep);
}

inline CheckpointFile read_checkpoint(std::istream& in, const std::string& source) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw Error(ErrorKind::Data, source + ": not a checkpoint");
    if (io::read_le<std::uint32_t>(in, source) != 1) throw Error(ErrorKind::Data, source + ": unsupported checkpoint version");
    CheckpointFile file;
    file.value_bytes = io::read_le<std::uint32_t>(in, source);
    if (file.value_bytes != 4 && file.value_bytes != 8) throw Error(ErrorKind::Data, source + ": bad value width");
    try {
        file.meta = nlohmann::json::parse(io::read_string(in, source));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Data, source + ": corrupt metadata: " + e.what());
    }
    file.has_optimizer = io::read_le<std::uint8_t>(in, source) != 0;
    const auto count = io::read_le<std::uint32_t>(in, source);
    auto read_values = [&](const std::string& what) {
        return file.value_bytes == 4 ? detail::read_tensor_values<float>(in, what)
                                     : detail::read_tensor_values<double>(in, what);
    };
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        t.name = io::read_string(in, source);
        t.value = read_values(source + ":" + t.name);
        if (file.has_optimizer) {
            t.steps = io::read_le<std::uint64_t>(in, source);
            t.m = read_values(source + ":" + t.name + ".m");
            t.v = read_values(source + ":" + t.name + ".v");
        }
        file.tensors.push_back(std::move(t));
    }
    return file;
}

inline CheckpointFile load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Data, "cannot open checkpoint " + path);
    return read_checkpoint(in, path);
}

/// Copies checkpoint tensors into same-named parameters. Every parameter
/// accepted by `required` must be present with a matching shape.
template <typename T>
void restore_parameters(ParameterSet<T>& params, const CheckpointFile& file,
                        const std::function<bool(const std::string&)>& required = {}) {
    for (auto& p : params.entries()) {
        const CheckpointTensor* t = file.find(p.name);
        if (!t) {
            if (!required || required(p.name)) throw Error(ErrorKind::Data, "checkpoint lacks parameter " + p.name);
            continue;
        }
        if (t->value.shape() != p.var.shape())
            throw Error(ErrorKind::Data, "checkpoint shape mismatch for " + p.name + ": " + to_string(t->value.shape()) +
                                             " vs " + to_string(p.var.shape()));
        p.var.mutable_value() = t->value.template cast<T>();
        if (t->m) {
            p.m = t->m->template cast<T>();
            p.v = t->v->template cast<T>();
            p.steps = t->steps;
        }
    }
}

}  // namespace nlaslr
