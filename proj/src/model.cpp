#include "edgeshield/model.hpp"

#include <algorithm>
#include <map>

namespace edgeshield {

template <typename T>
Model<T>::Model(std::string architecture, ImageShape input, std::size_t classes,
                std::unique_ptr<Sequential<T>> body, std::uint64_t seed)
    : architecture_(std::move(architecture)),
      input_(input),
      classes_(classes),
      body_(std::move(body)),
      seed_(seed),
      dropout_rng_(derive_seed(seed, 0xD0)) {}

template <typename T>
void Model<T>::check_batch(const BasicTensor<T>& batch) const {
  const auto& s = batch.shape();
  if (s.size() != 4 || s[1] != input_.channels || s[2] != input_.height || s[3] != input_.width) {
    throw ShapeError("batch shape " + shape_string(s) + " does not match model input N x " +
                     input_.str());
  }
}

template <typename T>
BasicTensor<T> Model<T>::logits(const BasicTensor<T>& batch) {
  check_batch(batch);
  return body_->forward(batch, mode_, dropout_rng_);
}

template <typename T>
BasicTensor<T> Model<T>::forward(const BasicTensor<T>& batch) {
  NoGradScope<T> no_grad;
  return softmax(logits(batch));
}

template <typename T>
std::vector<BasicTensor<T>> Model<T>::parameters() const {
  std::vector<BasicTensor<T>> out;
  for (auto& entry : state()) {
    if (entry.trainable) out.push_back(entry.tensor);
  }
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::state() const {
  std::vector<NamedTensor<T>> out;
  body_->collect("", out);
  return out;
}

template <typename T>
void Model<T>::load_state(const std::vector<NamedTensor<T>>& source) {
  std::map<std::string, const NamedTensor<T>*> by_name;
  for (const auto& entry : source) by_name[entry.name] = &entry;
  for (auto& entry : state()) {
    auto it = by_name.find(entry.name);
    if (it == by_name.end()) throw ModelError("state is missing tensor '" + entry.name + "'");
    const auto& src = it->second->tensor;
    if (src.shape() != entry.tensor.shape()) {
      throw ModelError("tensor '" + entry.name + "' has shape " + shape_string(src.shape()) +
                       ", expected " + shape_string(entry.tensor.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), entry.tensor.data().begin());
  }
}

std::vector<std::string> stand_in_names() {
  return {"resnet_s", "vgg_s", "inception_s", "densenet_s"};
}

std::vector<std::string> architecture_names() {
  std::vector<std::string> names{kPaperCnn};
  for (auto& n : stand_in_names()) names.push_back(n);
  return names;
}

namespace {

void check_input(ImageShape input, std::size_t classes) {
  if (input.height < 8 || input.width < 8) {
    throw ModelError("input " + input.str() + " is too small for three 2x2 poolings (need >= 8)");
  }
  if (input.channels == 0) throw ModelError("input must have at least one channel");
  if (classes < 2) throw ModelError("classifier needs at least two classes");
}

template <typename T>
void conv_bn_relu(Sequential<T>& seq, std::size_t in, std::size_t out, std::size_t kernel,
                  Rng& init) {
  seq.template emplace<Conv2dLayer<T>>(in, out, kernel, 1, kernel / 2, init);
  seq.template emplace<BatchNorm2dLayer<T>>(out);
  seq.template emplace<ReluLayer<T>>();
}

template <typename T>
void conv_relu(Sequential<T>& seq, std::size_t in, std::size_t out, std::size_t kernel, Rng& init) {
  seq.template emplace<Conv2dLayer<T>>(in, out, kernel, 1, kernel / 2, init);
  seq.template emplace<ReluLayer<T>>();
}

// Global average pooling, then a small dense head in the paper CNN's style.
template <typename T>
void pooled_head(Sequential<T>& seq, std::size_t channels, std::size_t classes, Rng& init) {
  seq.template emplace<GlobalAvgPoolLayer<T>>();
  seq.template emplace<DenseLayer<T>>(channels, 64, init);
  seq.template emplace<ReluLayer<T>>();
  seq.template emplace<DropoutLayer<T>>(0.5);
  seq.template emplace<DenseLayer<T>>(64, classes, init);
}

template <typename T>
std::unique_ptr<Sequential<T>> residual_block(std::size_t in, std::size_t out, Rng& init) {
  auto branch = std::make_unique<Sequential<T>>();
  conv_bn_relu(*branch, in, out, 3, init);
  branch->template emplace<Conv2dLayer<T>>(out, out, 3, 1, 1, init);
  branch->template emplace<BatchNorm2dLayer<T>>(out);
  auto shortcut = std::make_unique<Sequential<T>>();
  if (in != out) {
    shortcut->template emplace<Conv2dLayer<T>>(in, out, 1, 1, 0, init);
    shortcut->template emplace<BatchNorm2dLayer<T>>(out);
  }
  auto wrapper = std::make_unique<Sequential<T>>();
  wrapper->template emplace<ResidualBlock<T>>(std::move(branch), std::move(shortcut));
  return wrapper;
}

template <typename T>
std::unique_ptr<Sequential<T>> inception_block(std::size_t in, std::size_t width, Rng& init) {
  std::vector<std::unique_ptr<Sequential<T>>> branches;
  auto b0 = std::make_unique<Sequential<T>>();
  conv_relu(*b0, in, width, 1, init);
  auto b1 = std::make_unique<Sequential<T>>();
  conv_relu(*b1, in, width, 1, init);
  conv_relu(*b1, width, width, 3, init);
  auto b2 = std::make_unique<Sequential<T>>();
  conv_relu(*b2, in, width / 2, 1, init);
  conv_relu(*b2, width / 2, width, 5, init);
  auto b3 = std::make_unique<Sequential<T>>();
  conv_relu(*b3, in, width, 3, init);
  branches.push_back(std::move(b0));
  branches.push_back(std::move(b1));
  branches.push_back(std::move(b2));
  branches.push_back(std::move(b3));
  auto wrapper = std::make_unique<Sequential<T>>();
  wrapper->template emplace<InceptionBlock<T>>(std::move(branches));
  return wrapper;
}

}  // namespace

template <typename T>
Model<T> build_paper_cnn(ImageShape input, std::size_t classes, std::uint64_t seed) {
  check_input(input, classes);
  Rng init(derive_seed(seed, 0x1417));
  auto body = std::make_unique<Sequential<T>>();
  std::size_t channels = input.channels, h = input.height, w = input.width;
  for (std::size_t filters : {32u, 64u, 128u}) {
    conv_bn_relu(*body, channels, filters, 3, init);
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    channels = filters;
    h /= 2;
    w /= 2;
  }
  body->template emplace<FlattenLayer<T>>();
  body->template emplace<DenseLayer<T>>(channels * h * w, 256, init);
  body->template emplace<ReluLayer<T>>();
  body->template emplace<DropoutLayer<T>>(0.5);
  body->template emplace<DenseLayer<T>>(256, classes, init);
  return Model<T>(kPaperCnn, input, classes, std::move(body), seed);
}

template <typename T>
Model<T> build_stand_in(const std::string& name, ImageShape input, std::size_t classes,
                        std::uint64_t seed) {
  check_input(input, classes);
  Rng init(derive_seed(seed, 0x1417));
  auto body = std::make_unique<Sequential<T>>();
  const std::size_t c = input.channels;
  if (name == "resnet_s") {
    conv_bn_relu(*body, c, 16, 3, init);
    body->add(residual_block<T>(16, 16, init));
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    body->add(residual_block<T>(16, 32, init));
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    pooled_head(*body, 32, classes, init);
  } else if (name == "vgg_s") {
    conv_relu(*body, c, 16, 3, init);
    conv_relu(*body, 16, 16, 3, init);
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    conv_relu(*body, 16, 32, 3, init);
    conv_relu(*body, 32, 32, 3, init);
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    conv_relu(*body, 32, 64, 3, init);
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    pooled_head(*body, 64, classes, init);
  } else if (name == "inception_s") {
    conv_bn_relu(*body, c, 16, 3, init);
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    body->add(inception_block<T>(16, 8, init));
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    body->add(inception_block<T>(32, 12, init));
    pooled_head(*body, 48, classes, init);
  } else if (name == "densenet_s") {
    conv_bn_relu(*body, c, 16, 3, init);
    auto& first = body->template emplace<DenseBlock<T>>(16, 8, 3, init);
    const std::size_t after_first = first.out_channels();
    body->template emplace<BatchNorm2dLayer<T>>(after_first);
    body->template emplace<ReluLayer<T>>();
    body->template emplace<Conv2dLayer<T>>(after_first, 24, 1, 1, 0, init);
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    auto& second = body->template emplace<DenseBlock<T>>(24, 8, 3, init);
    const std::size_t after_second = second.out_channels();
    body->template emplace<BatchNorm2dLayer<T>>(after_second);
    body->template emplace<ReluLayer<T>>();
    body->template emplace<MaxPoolLayer<T>>(2, 2);
    pooled_head(*body, after_second, classes, init);
  } else {
    throw ModelError("unknown stand-in architecture '" + name + "'");
  }
  return Model<T>(name, input, classes, std::move(body), seed);
}

template <typename T>
Model<T> build_model(const std::string& architecture, ImageShape input, std::size_t classes,
                     std::uint64_t seed) {
  if (architecture == kPaperCnn) return build_paper_cnn<T>(input, classes, seed);
  return build_stand_in<T>(architecture, input, classes, seed);
}

template class Model<float>;
template class Model<double>;

#define EDGESHIELD_INSTANTIATE_BUILDERS(T)                                                      \
  template Model<T> build_paper_cnn<T>(ImageShape, std::size_t, std::uint64_t);                 \
  template Model<T> build_stand_in<T>(const std::string&, ImageShape, std::size_t,              \
                                      std::uint64_t);                                           \
  template Model<T> build_model<T>(const std::string&, ImageShape, std::size_t, std::uint64_t);

EDGESHIELD_INSTANTIATE_BUILDERS(float)
EDGESHIELD_INSTANTIATE_BUILDERS(double)

}  // namespace edgeshield
