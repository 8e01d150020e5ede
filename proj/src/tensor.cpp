#include "edgeshield/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_map>

namespace edgeshield {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
std::atomic<std::uint64_t> next_tape_id{1};
}  // namespace

template <typename T>
thread_local GradientTape<T>* GradientTape<T>::active_ = nullptr;

template <typename T>
GradientTape<T>::GradientTape() : id_(next_tape_id.fetch_add(1)), previous_(active_) {
  active_ = this;
}

template <typename T>
GradientTape<T>::~GradientTape() {
  if (active_ == this) active_ = previous_;
}

template <typename T>
void GradientTape<T>::watch(const BasicTensor<T>& leaf) {
  leaf.storage_->watched_by = id_;
  watched_.push_back(leaf.storage_);
}

template <typename T>
bool GradientTape<T>::record(std::initializer_list<const BasicTensor<T>*> inputs,
                             BasicTensor<T>& output, BackwardFn fn) {
  return record(std::vector<const BasicTensor<T>*>(inputs), output, std::move(fn));
}

template <typename T>
bool GradientTape<T>::record(const std::vector<const BasicTensor<T>*>& inputs,
                             BasicTensor<T>& output, BackwardFn fn) {
  GradientTape* tape = active_;
  if (tape == nullptr) return false;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const BasicTensor<T>* t) { return t->tracked(); });
  if (!any) return false;
  Entry entry;
  entry.inputs.reserve(inputs.size());
  for (const auto* t : inputs) entry.inputs.push_back(t->storage_);
  entry.output = output.storage_;
  entry.fn = std::move(fn);
  output.storage_->tape_id = tape->id_;
  tape->entries_.push_back(std::move(entry));
  return true;
}

template <typename T>
void GradientTape<T>::backward(const BasicTensor<T>& loss) {
  if (loss.size() != 1) {
    throw GradientError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (loss.storage_->tape_id != id_ || entries_.empty()) {
    throw GradientError("loss was not produced by operations recorded on this tape");
  }

  using Storage = typename BasicTensor<T>::Storage;
  auto is_leaf = [this](const Storage* s) { return s->tape_id != id_; };
  auto wants_grad = [this](const Storage* s) { return s->requires_grad || s->watched_by == id_; };

  // Every leaf reachable from the tape gets a gradient buffer, even if unused.
  auto ensure_leaf_grad = [](Storage* s) {
    if (s->grad.size() != s->values.size()) s->grad.assign(s->values.size(), T(0));
  };
  for (auto& w : watched_) ensure_leaf_grad(w.get());
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (is_leaf(in.get()) && wants_grad(in.get())) ensure_leaf_grad(in.get());
    }
  }

  std::unordered_map<const Storage*, AlignedBuffer<T>> interior;
  interior[loss.storage_.get()].assign(1, T(1));

  std::vector<std::span<T>> grad_inputs;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto found = interior.find(it->output.get());
    if (found == interior.end()) continue;
    grad_inputs.clear();
    for (auto& in : it->inputs) {
      if (is_leaf(in.get())) {
        grad_inputs.push_back(wants_grad(in.get()) ? std::span<T>(in->grad) : std::span<T>());
      } else {
        auto& buf = interior[in.get()];
        if (buf.empty()) buf.assign(in->values.size(), T(0));
        grad_inputs.push_back(std::span<T>(buf));
      }
    }
    // The map may rehash above, so look the output gradient up again.
    const AlignedBuffer<T>& grad_out = interior.at(it->output.get());
    it->fn(std::span<const T>(grad_out), std::span<std::span<T>>(grad_inputs));
  }
}

template <typename T>
NoGradScope<T>::NoGradScope() : saved_(GradientTape<T>::active_) {
  GradientTape<T>::active_ = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  GradientTape<T>::active_ = saved_;
}

template class GradientTape<float>;
template class GradientTape<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;

}  // namespace edgeshield
