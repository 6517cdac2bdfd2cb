#pragma once

#include <map>
#include <string>
#include <vector>

#include "dualfreq/tensor.hpp"

namespace dualfreq {

// Named tensors in insertion order. Order is part of the checkpoint layout, so
// iteration is always by insertion, never by name.
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
  };

  void add(std::string name, Tensor<Scalar> value) {
    if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value)});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<Scalar>& operator[](const std::string& name) { return entries_[locate(name)].value; }
  const Tensor<Scalar>& operator[](const std::string& name) const {
    return entries_[locate(name)].value;
  }

  std::size_t size() const { return entries_.size(); }
  Index total_elements() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  // Same names and shapes, zero values.
  ParameterSet zeros_like() const {
    ParameterSet out;
    for (const auto& e : entries_) out.add(e.name, Tensor<Scalar>(e.value.shape()));
    return out;
  }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>());
    return out;
  }

 private:
  std::size_t locate(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

template <typename Scalar>
bool bitwise_equal(const ParameterSet<Scalar>& a, const ParameterSet<Scalar>& b) {
  if (a.size() != b.size()) return false;
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->name != ib->name || !bitwise_equal(ia->value, ib->value)) return false;
  }
  return true;
}

}  // namespace dualfreq
