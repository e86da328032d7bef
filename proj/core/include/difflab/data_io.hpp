#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "difflab/classifier.hpp"
#include "difflab/denoiser.hpp"
#include "difflab/sample.hpp"

namespace difflab {

// Named class template in [0, 1]. Known names: "horizontal-stripes",
// "vertical-stripes", "centered-blob". Unknown names are rejected.
Sample make_template(const std::string& name, Shape shape);

// Synthetic dataset description: one template and isotropic std per class.
// priors empty = uniform. samples_per_class applies to every class.
struct SynthSpec {
  Shape shape;
  std::vector<std::string> templates;
  std::vector<double> stds;
  int samples_per_class = 0;
  std::vector<double> priors;
};

void validate_synth_spec(const SynthSpec& spec);

// Samples are clamp01(template + std * gaussian), deterministic per
// (spec, seed) with one substream per sample. The denoiser model mirrors the
// pre-clamp law exactly: one Gaussian per class at the template with the
// class std, priors as configured.
struct SynthData {
  LabeledDataset data;
  DenoiserModel model;
};

SynthData synth_dataset(const SynthSpec& spec, std::uint64_t seed);

// Builds only the denoiser model for the description (used when images come from
// elsewhere, e.g. an IDX dataset).
DenoiserModel synth_model(const SynthSpec& spec);

// IDX (big-endian) image/label reader. Image magic 0x00000803 with dims
// (count, rows, cols); label magic 0x00000801 with (count). Pixels are
// bytes scaled to [0, 1]; images get shape (rows, cols, 1).
struct IdxError : std::runtime_error {
  enum class Kind { BadMagic, Truncated, CountMismatch };
  Kind kind;
  IdxError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

// Binary PGM (P5) for single-channel and PPM (P6) for three-channel images;
// other channel counts are rejected. Quantization rounds half away from
// zero: byte = round(255 * clamped value).
void write_image(const std::string& path, const Sample& image);
Sample read_image(const std::string& path);

}  // namespace difflab
