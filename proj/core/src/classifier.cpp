#include "difflab/classifier.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "difflab/container.hpp"

namespace difflab {

const char* to_string(ClassifierKind k) {
  return k == ClassifierKind::SoftmaxLinear ? "softmax-linear" : "mlp-1-hidden";
}
const char* to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

ClassifierKind classifier_kind_from_string(const std::string& s) {
  if (s == "softmax-linear") return ClassifierKind::SoftmaxLinear;
  if (s == "mlp-1-hidden") return ClassifierKind::Mlp1Hidden;
  throw std::invalid_argument("classifier.kind: unknown value '" + s +
                              "' (expected softmax-linear or mlp-1-hidden)");
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("classifier.activation: unknown value '" + s +
                              "' (expected tanh or relu)");
}

void validate_dataset(const LabeledDataset& data) {
  if (data.images.empty())
    throw std::invalid_argument("dataset: must contain at least one image");
  if (data.images.size() != data.labels.size())
    throw std::invalid_argument("dataset: image/label count mismatch");
  if (data.classes < 2) throw std::invalid_argument("dataset.classes: must be >= 2");
  const Shape shape = data.images.front().shape;
  for (const Sample& img : data.images)
    if (!(img.shape == shape))
      throw std::invalid_argument("dataset: images must share one shape");
  for (int y : data.labels)
    if (y < 0 || y >= data.classes)
      throw std::invalid_argument("dataset.labels: label out of range");
}

namespace {

double act_fn(Activation a, double v) {
  return a == Activation::Tanh ? std::tanh(v) : (v > 0.0 ? v : 0.0);
}
// relu'(0) is taken as 0 (subgradient choice).
double act_grad(Activation a, double v) {
  if (a == Activation::Tanh) {
    const double th = std::tanh(v);
    return 1.0 - th * th;
  }
  return v > 0.0 ? 1.0 : 0.0;
}

// Forward pass; fills hidden pre-activations/activations for the MLP.
std::vector<double> logits_of(const Classifier& m, const Sample& x,
                              std::vector<double>* pre = nullptr,
                              std::vector<double>* hid = nullptr) {
  const std::size_t d = x.size();
  if (!(x.shape == m.input_shape) || d != m.input_shape.size())
    throw std::invalid_argument("classifier: input shape mismatch");
  if (m.kind == ClassifierKind::SoftmaxLinear) {
    std::vector<double> z(m.classes);
    for (int k = 0; k < m.classes; ++k) {
      double s = m.b1[k];
      const double* row = &m.w1[static_cast<std::size_t>(k) * d];
      for (std::size_t j = 0; j < d; ++j) s += row[j] * x.data[j];
      z[k] = s;
    }
    return z;
  }
  std::vector<double> a1(m.hidden), h1(m.hidden);
  for (int i = 0; i < m.hidden; ++i) {
    double s = m.b1[i];
    const double* row = &m.w1[static_cast<std::size_t>(i) * d];
    for (std::size_t j = 0; j < d; ++j) s += row[j] * x.data[j];
    a1[i] = s;
    h1[i] = act_fn(m.activation, s);
  }
  std::vector<double> z(m.classes);
  for (int k = 0; k < m.classes; ++k) {
    double s = m.b2[k];
    const double* row = &m.w2[static_cast<std::size_t>(k) * m.hidden];
    for (int i = 0; i < m.hidden; ++i) s += row[i] * h1[i];
    z[k] = s;
  }
  if (pre) *pre = std::move(a1);
  if (hid) *hid = std::move(h1);
  return z;
}

int argmax_lowest(const std::vector<double>& z) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(z.size()); ++k)
    if (z[k] > z[best]) best = k;
  return best;
}

// loss and d(loss)/d(logits) = softmax - onehot, both log-sum-exp stable.
double ce_loss_and_grad(const std::vector<double>& z, int y,
                        std::vector<double>* grad) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  if (grad) {
    grad->resize(z.size());
    for (std::size_t k = 0; k < z.size(); ++k)
      (*grad)[k] = std::exp(z[k] - m) / sum;
    (*grad)[y] -= 1.0;
  }
  return lse - z[y];
}

}  // namespace

ForwardResult forward_loss(const Classifier& model, const Sample& x, int y) {
  if (y < 0 || y >= model.classes)
    throw std::invalid_argument("forward_loss: label out of range");
  ForwardResult r;
  r.logits = logits_of(model, x);
  r.loss = ce_loss_and_grad(r.logits, y, nullptr);
  r.predicted = argmax_lowest(r.logits);
  return r;
}

int predict(const Classifier& model, const Sample& x) {
  return argmax_lowest(logits_of(model, x));
}

Sample input_gradient(const Classifier& model, const Sample& x, int y) {
  if (y < 0 || y >= model.classes)
    throw std::invalid_argument("input_gradient: label out of range");
  const std::size_t d = x.size();
  std::vector<double> pre, hid, gl;
  std::vector<double> z = logits_of(model, x, &pre, &hid);
  ce_loss_and_grad(z, y, &gl);

  Sample gx(x.shape);
  if (model.kind == ClassifierKind::SoftmaxLinear) {
    for (int k = 0; k < model.classes; ++k) {
      const double* row = &model.w1[static_cast<std::size_t>(k) * d];
      for (std::size_t j = 0; j < d; ++j) gx.data[j] += row[j] * gl[k];
    }
    return gx;
  }
  std::vector<double> gh(model.hidden, 0.0);
  for (int k = 0; k < model.classes; ++k) {
    const double* row = &model.w2[static_cast<std::size_t>(k) * model.hidden];
    for (int i = 0; i < model.hidden; ++i) gh[i] += row[i] * gl[k];
  }
  for (int i = 0; i < model.hidden; ++i) gh[i] *= act_grad(model.activation, pre[i]);
  for (int i = 0; i < model.hidden; ++i) {
    const double* row = &model.w1[static_cast<std::size_t>(i) * d];
    for (std::size_t j = 0; j < d; ++j) gx.data[j] += row[j] * gh[i];
  }
  return gx;
}

Classifier train_classifier(const LabeledDataset& data, ClassifierKind kind,
                            Activation activation, int hidden, int epochs,
                            double lr, std::uint64_t seed) {
  validate_dataset(data);
  if (kind == ClassifierKind::Mlp1Hidden && hidden < 1)
    throw std::invalid_argument("classifier.hidden: must be >= 1 for mlp-1-hidden");
  if (epochs < 0) throw std::invalid_argument("classifier.epochs: must be >= 0");
  if (!(lr >= 0.0)) throw std::invalid_argument("classifier.lr: must be >= 0");

  Classifier m;
  m.kind = kind;
  m.activation = activation;
  m.input_shape = data.images.front().shape;
  m.classes = data.classes;
  m.hidden = kind == ClassifierKind::Mlp1Hidden ? hidden : 0;
  const std::size_t d = m.input_shape.size();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> init(0.0, 0.05);
  if (kind == ClassifierKind::SoftmaxLinear) {
    m.w1.resize(static_cast<std::size_t>(m.classes) * d);
    m.b1.assign(m.classes, 0.0);
    for (double& w : m.w1) w = init(rng);
  } else {
    m.w1.resize(static_cast<std::size_t>(m.hidden) * d);
    m.b1.assign(m.hidden, 0.0);
    m.w2.resize(static_cast<std::size_t>(m.classes) * m.hidden);
    m.b2.assign(m.classes, 0.0);
    for (double& w : m.w1) w = init(rng);
    for (double& w : m.w2) w = init(rng);
  }

  const double n = static_cast<double>(data.images.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<double> gw1(m.w1.size(), 0.0), gb1(m.b1.size(), 0.0);
    std::vector<double> gw2(m.w2.size(), 0.0), gb2(m.b2.size(), 0.0);
    double loss = 0.0;
    for (std::size_t idx = 0; idx < data.images.size(); ++idx) {
      const Sample& x = data.images[idx];
      const int y = data.labels[idx];
      std::vector<double> pre, hid, gl;
      std::vector<double> z = logits_of(m, x, &pre, &hid);
      loss += ce_loss_and_grad(z, y, &gl);
      if (m.kind == ClassifierKind::SoftmaxLinear) {
        for (int k = 0; k < m.classes; ++k) {
          double* row = &gw1[static_cast<std::size_t>(k) * d];
          for (std::size_t j = 0; j < d; ++j) row[j] += gl[k] * x.data[j];
          gb1[k] += gl[k];
        }
      } else {
        std::vector<double> gh(m.hidden, 0.0);
        for (int k = 0; k < m.classes; ++k) {
          double* row2 = &gw2[static_cast<std::size_t>(k) * m.hidden];
          for (int i = 0; i < m.hidden; ++i) {
            row2[i] += gl[k] * hid[i];
            gh[i] += m.w2[static_cast<std::size_t>(k) * m.hidden + i] * gl[k];
          }
          gb2[k] += gl[k];
        }
        for (int i = 0; i < m.hidden; ++i) {
          const double ga = gh[i] * act_grad(m.activation, pre[i]);
          double* row = &gw1[static_cast<std::size_t>(i) * d];
          for (std::size_t j = 0; j < d; ++j) row[j] += ga * x.data[j];
          gb1[i] += ga;
        }
      }
    }
    loss /= n;
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "train_classifier: training diverged (non-finite loss) at epoch "
          << epoch;
      throw std::runtime_error(msg.str());
    }
    const double step = lr / n;
    for (std::size_t i = 0; i < m.w1.size(); ++i) m.w1[i] -= step * gw1[i];
    for (std::size_t i = 0; i < m.b1.size(); ++i) m.b1[i] -= step * gb1[i];
    for (std::size_t i = 0; i < m.w2.size(); ++i) m.w2[i] -= step * gw2[i];
    for (std::size_t i = 0; i < m.b2.size(); ++i) m.b2[i] -= step * gb2[i];
  }

  int correct = 0;
  for (std::size_t idx = 0; idx < data.images.size(); ++idx)
    if (predict(m, data.images[idx]) == data.labels[idx]) ++correct;
  m.train_accuracy = static_cast<double>(correct) / n;
  return m;
}

namespace {

constexpr std::uint32_t kClassifierMagic = 0x4c434c44;  // "DLCL"
constexpr std::uint32_t kClassifierVersion = 1;

}  // namespace

void save_classifier(const Classifier& m, const std::string& path) {
  std::ostringstream out(std::ios::binary);
  write_u32(out, kClassifierMagic);
  write_u32(out, kClassifierVersion);
  write_u8(out, m.kind == ClassifierKind::SoftmaxLinear ? 0 : 1);
  write_u8(out, m.activation == Activation::Tanh ? 0 : 1);
  write_u32(out, static_cast<std::uint32_t>(m.input_shape.height));
  write_u32(out, static_cast<std::uint32_t>(m.input_shape.width));
  write_u32(out, static_cast<std::uint32_t>(m.input_shape.channels));
  write_u32(out, static_cast<std::uint32_t>(m.classes));
  write_u32(out, static_cast<std::uint32_t>(m.hidden));
  write_f64(out, m.train_accuracy);
  const std::uint64_t d = m.input_shape.size();
  if (m.kind == ClassifierKind::SoftmaxLinear) {
    write_array(out, {static_cast<std::uint64_t>(m.classes), d}, m.w1);
    write_array(out, {static_cast<std::uint64_t>(m.classes)}, m.b1);
  } else {
    write_array(out, {static_cast<std::uint64_t>(m.hidden), d}, m.w1);
    write_array(out, {static_cast<std::uint64_t>(m.hidden)}, m.b1);
    write_array(out, {static_cast<std::uint64_t>(m.classes),
                      static_cast<std::uint64_t>(m.hidden)}, m.w2);
    write_array(out, {static_cast<std::uint64_t>(m.classes)}, m.b2);
  }
  write_file_bytes(path, out.str());
}

Classifier load_classifier(const std::string& path) {
  std::istringstream in(read_file_bytes(path), std::ios::binary);
  if (read_u32(in, "classifier magic") != kClassifierMagic)
    throw std::runtime_error("load_classifier: bad magic: " + path);
  if (read_u32(in, "classifier version") != kClassifierVersion)
    throw std::runtime_error("load_classifier: unsupported version: " + path);
  Classifier m;
  m.kind = read_u8(in, "classifier kind") == 0 ? ClassifierKind::SoftmaxLinear
                                               : ClassifierKind::Mlp1Hidden;
  m.activation = read_u8(in, "classifier activation") == 0 ? Activation::Tanh
                                                           : Activation::Relu;
  m.input_shape.height = static_cast<int>(read_u32(in, "classifier height"));
  m.input_shape.width = static_cast<int>(read_u32(in, "classifier width"));
  m.input_shape.channels = static_cast<int>(read_u32(in, "classifier channels"));
  m.classes = static_cast<int>(read_u32(in, "classifier classes"));
  m.hidden = static_cast<int>(read_u32(in, "classifier hidden"));
  m.train_accuracy = read_f64(in, "classifier accuracy");
  ArrayRecord w1 = read_array(in, "classifier w1");
  ArrayRecord b1 = read_array(in, "classifier b1");
  m.w1 = std::move(w1.data);
  m.b1 = std::move(b1.data);
  if (m.kind == ClassifierKind::Mlp1Hidden) {
    ArrayRecord w2 = read_array(in, "classifier w2");
    ArrayRecord b2 = read_array(in, "classifier b2");
    m.w2 = std::move(w2.data);
    m.b2 = std::move(b2.data);
  }
  const std::size_t d = m.input_shape.size();
  const std::size_t rows = m.kind == ClassifierKind::SoftmaxLinear
                               ? static_cast<std::size_t>(m.classes)
                               : static_cast<std::size_t>(m.hidden);
  if (m.w1.size() != rows * d || m.b1.size() != rows)
    throw std::runtime_error("load_classifier: parameter dims inconsistent: " + path);
  if (m.kind == ClassifierKind::Mlp1Hidden &&
      (m.w2.size() != static_cast<std::size_t>(m.classes) * m.hidden ||
       m.b2.size() != static_cast<std::size_t>(m.classes)))
    throw std::runtime_error("load_classifier: parameter dims inconsistent: " + path);
  return m;
}

}  // namespace difflab
