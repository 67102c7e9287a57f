#include "prectime/autodiff.hpp"

#include "prectime/errors.hpp"

namespace prectime {

Parameter& ParameterSet::add(std::string name, Tensor value) {
    if (index_.count(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
    index_.emplace(name, params_.size());
    Tensor grad(value.shape(), 0.0);
    params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
    return params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return params_[it->second];
}

const Parameter& ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return params_[it->second];
}

std::size_t ParameterSet::element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
}

Var Tape::constant(Tensor value) {
    if (value.empty()) throw ShapeError("cannot record an unset tensor");
    nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
    return Var(nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
    if (value.empty()) throw ShapeError("cannot record an unset tensor");
    nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, true});
    return Var(nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
    if (param.grad.shape() != param.value.shape()) param.grad = Tensor(param.value.shape(), 0.0);
    nodes_.push_back(Node{param.value, {}, {}, {}, &param, true});
    return Var(nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
        if (!v.valid() || v.id() >= nodes_.size()) throw ArgumentError("input does not belong to this tape");
        n.inputs.push_back(v.id());
        n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(nodes_.size() - 1);
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.id() >= nodes_.size()) throw ArgumentError("variable does not belong to this tape");
    return nodes_[v.id()];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
    const Tensor& t = value(v);
    if (t.size() != 1) throw ShapeError("expected a scalar, got " + shape_string(t.shape()));
    return t[0];
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
    return n.grad;
}

const Tensor& Tape::out_grad(std::size_t id) const { return nodes_[id].grad; }

const Tensor& Tape::input_value(std::size_t id, std::size_t k) const {
    return nodes_[nodes_[id].inputs[k]].value;
}

bool Tape::input_requires_grad(std::size_t id, std::size_t k) const {
    return nodes_[nodes_[id].inputs[k]].requires_grad;
}

Tensor& Tape::input_grad(std::size_t id, std::size_t k) { return grad_buffer(nodes_[id].inputs[k]); }

Tensor& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

void Tape::backward(Var root, std::vector<std::size_t>* visited) {
    const Node& r = node(root);
    if (r.value.size() != 1) throw ShapeError("backward needs a scalar root, got " + shape_string(r.value.shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    grad_buffer(root.id()).fill(1.0);

    for (std::size_t i = root.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.requires_grad) continue;
        if (n.backward) {
            if (visited) visited->push_back(i);
            n.backward(*this, i);
        } else if (n.param) {
            auto dst = n.param->grad.data();
            auto src = n.grad.data();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }
}

}  // namespace prectime
