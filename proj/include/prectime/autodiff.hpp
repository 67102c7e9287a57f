#pragma once

#include "prectime/tensor.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace prectime {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Named trainable tensors in insertion order. Names are unique. Storage is
// fixed once the owning model is built, so pointers into it stay valid.
class ParameterSet {
public:
    Parameter& add(std::string name, Tensor value);

    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t element_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();

private:
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return id_ != npos; }

private:
    friend class Tape;
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    explicit Var(std::size_t id) : id_(id) {}
    std::size_t id_ = npos;
};

// Record of primitive operations applied during a forward pass. Each record
// holds the output value and a closure that pushes the output adjoint into
// the adjoints of its inputs; backward() replays the closures in exact
// reverse order of recording.
class Tape {
public:
    // Closure invoked with the tape and the id of the node being replayed.
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Var constant(Tensor value);
    // Leaf that accumulates an adjoint, readable through grad().
    Var variable(Tensor value);
    // Leaf bound to a parameter; backward() adds its adjoint into param.grad.
    Var parameter(Parameter& param);

    Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const;
    double scalar(Var v) const;
    bool requires_grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    // Adjoint of a node after backward(); zeros when nothing reached it.
    Tensor grad(Var v) const;

    // Used from inside backward closures.
    const Tensor& out_grad(std::size_t node) const;
    const Tensor& input_value(std::size_t node, std::size_t k) const;
    bool input_requires_grad(std::size_t node, std::size_t k) const;
    // Adjoint buffer of the k-th input of `node`, allocated zeroed on first use.
    Tensor& input_grad(std::size_t node, std::size_t k);

    // Seeds d(root)/d(root) = 1 and replays every record in reverse. When
    // `visited` is non-null the ids of replayed records are appended to it.
    void backward(Var root, std::vector<std::size_t>* visited = nullptr);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };

    Tensor& grad_buffer(std::size_t node);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace prectime
