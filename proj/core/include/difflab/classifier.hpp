#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difflab/sample.hpp"

namespace difflab {

enum class ClassifierKind { SoftmaxLinear, Mlp1Hidden };
enum class Activation { Tanh, Relu };

const char* to_string(ClassifierKind k);
const char* to_string(Activation a);
ClassifierKind classifier_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

// Toy victim classifier with analytic input gradients. SoftmaxLinear uses
// w1 [classes x d] and b1 [classes]; Mlp1Hidden uses w1 [hidden x d],
// b1 [hidden], w2 [classes x hidden], b2 [classes] with the selected
// activation. Immutable after training.
struct Classifier {
  ClassifierKind kind = ClassifierKind::SoftmaxLinear;
  Activation activation = Activation::Tanh;
  Shape input_shape;
  int classes = 0;
  int hidden = 0;  // 0 for SoftmaxLinear
  std::vector<double> w1, b1, w2, b2;
  double train_accuracy = 0.0;
};

struct LabeledDataset {
  std::vector<Sample> images;
  std::vector<int> labels;
  int classes = 0;
};

void validate_dataset(const LabeledDataset& data);

struct ForwardResult {
  double loss = 0.0;
  std::vector<double> logits;
  int predicted = 0;  // argmax, ties broken toward the lowest index
};

// Full-batch gradient descent on the softmax cross-entropy, deterministic
// given (data, seed): parameters initialized from seed, no shuffling.
// epochs = 0 returns the initial parameters. Training that produces a
// non-finite loss is rejected with the offending epoch in the message.
Classifier train_classifier(const LabeledDataset& data, ClassifierKind kind,
                            Activation activation, int hidden, int epochs,
                            double lr, std::uint64_t seed);

// Stable log-sum-exp cross-entropy; y must lie in [0, classes).
ForwardResult forward_loss(const Classifier& model, const Sample& x, int y);

// Analytic gradient of the cross-entropy loss with respect to the input.
Sample input_gradient(const Classifier& model, const Sample& x, int y);

int predict(const Classifier& model, const Sample& x);

// Same flat binary container family as noise-map stacks: little-endian
// header plus shape-prefixed float64 parameter arrays.
void save_classifier(const Classifier& model, const std::string& path);
Classifier load_classifier(const std::string& path);

}  // namespace difflab
