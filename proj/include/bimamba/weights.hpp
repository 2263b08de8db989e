// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Weight bundles are templates over their leaf type: W<Tensor> holds values,
// W<ad::Var> holds the same tensors bound to a tape. Each bundle exposes a
// static `fields(self, prefix, suffix, f)` that calls f(name, leaf) for every
// leaf in a fixed order; that order defines checkpoint names, optimizer slots
// and the parameter-count enumeration.

#pragma once

#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

#include "bimamba/autodiff.hpp"
#include "bimamba/tensor.hpp"

namespace bimamba {

template <class W, class F>
void visit_weights(W& w, F&& f, const std::string& prefix = "", const std::string& suffix = "") {
  std::remove_const_t<W>::fields(w, prefix, suffix, f);
}

// Copies the structure of `in`, transforming every leaf with f. Bundles with
// optional or variable-length parts provide `skeleton<U>()`, an empty bundle
// with the same engaged parts; fixed bundles are default-constructed.
template <template <class> class W, class U, class T, class F>
W<U> map_weights(const W<T>& in, F&& f) {
  std::vector<const T*> leaves;
  visit_weights(in, [&](const std::string&, const T& t) { leaves.push_back(&t); });
  W<U> out;
  if constexpr (requires { in.template skeleton<U>(); }) out = in.template skeleton<U>();
  std::size_t i = 0;
  visit_weights(out, [&](const std::string&, U& u) { u = f(*leaves[i++]); });
  return out;
}

template <class W>
std::size_t count_parameters(const W& w) {
  std::size_t n = 0;
  visit_weights(w, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

template <class W>
std::vector<std::string> parameter_names(const W& w) {
  std::vector<std::string> names;
  visit_weights(w, [&](const std::string& name, const auto&) { names.push_back(name); });
  return names;
}

// Pointers to every leaf tensor, in field order.
template <class W>
std::vector<Tensor*> parameter_slots(W& w) {
  std::vector<Tensor*> slots;
  visit_weights(w, [&](const std::string&, Tensor& t) { slots.push_back(&t); });
  return slots;
}

// Binds every leaf as a tape parameter.
template <template <class> class W>
W<ad::Var> bind(ad::Tape& tape, const W<Tensor>& w) {
  return map_weights<W, ad::Var>(w, [&](const Tensor& t) { return tape.parameter(t); });
}

// Gradients of bound weights, in field order.
template <class W>
std::vector<Tensor> gradients_of(const ad::Tape& tape, const W& bound) {
  std::vector<Tensor> grads;
  visit_weights(bound, [&](const std::string&, const ad::Var& v) { grads.push_back(tape.grad(v)); });
  return grads;
}

struct NamedTensor {
  std::string name;
  Tensor value;
};

template <class W>
std::vector<NamedTensor> named_tensors(const W& w) {
  std::vector<NamedTensor> out;
  visit_weights(w, [&](const std::string& name, const Tensor& t) { out.push_back({name, t}); });
  return out;
}

}  // namespace bimamba
