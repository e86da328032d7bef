#include "difflab/data_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "difflab/rng.hpp"

namespace difflab {

namespace {

// Template contrast band; mid-gray patterns keep clamping rare for the
// stds used in experiments.
constexpr double kLow = 0.42;
constexpr double kHigh = 0.58;

}  // namespace

Sample make_template(const std::string& name, Shape shape) {
  if (shape.height < 1 || shape.width < 1 || shape.channels < 1)
    throw std::invalid_argument("template: shape must be positive");
  Sample out(shape);
  auto set = [&](int i, int j, double v) {
    for (int ch = 0; ch < shape.channels; ++ch)
      out.data[(static_cast<std::size_t>(i) * shape.width + j) * shape.channels +
               ch] = v;
  };
  if (name == "horizontal-stripes") {
    for (int i = 0; i < shape.height; ++i)
      for (int j = 0; j < shape.width; ++j) set(i, j, i % 2 == 0 ? kHigh : kLow);
  } else if (name == "vertical-stripes") {
    for (int i = 0; i < shape.height; ++i)
      for (int j = 0; j < shape.width; ++j) set(i, j, j % 2 == 0 ? kHigh : kLow);
  } else if (name == "centered-blob") {
    const double ci = (shape.height - 1) / 2.0;
    const double cj = (shape.width - 1) / 2.0;
    const double s = std::min(shape.height, shape.width) / 4.0;
    for (int i = 0; i < shape.height; ++i) {
      for (int j = 0; j < shape.width; ++j) {
        const double r2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
        set(i, j, kLow + (kHigh - kLow) * std::exp(-r2 / (2.0 * s * s)));
      }
    }
  } else {
    throw std::invalid_argument("template: unknown name '" + name + "'");
  }
  return out;
}

void validate_synth_spec(const SynthSpec& spec) {
  if (spec.templates.empty())
    throw std::invalid_argument("dataset.templates: must name at least one class");
  if (spec.stds.size() != spec.templates.size())
    throw std::invalid_argument("dataset.std: need one std per class");
  for (double s : spec.stds)
    if (!(s > 0.0)) throw std::invalid_argument("dataset.std: must be > 0");
  if (spec.samples_per_class < 1)
    throw std::invalid_argument("dataset.samples_per_class: must be >= 1");
  if (!spec.priors.empty() && spec.priors.size() != spec.templates.size())
    throw std::invalid_argument("dataset.priors: need one prior per class");
  // Surface bad names and shapes here rather than at first use.
  for (const std::string& name : spec.templates) make_template(name, spec.shape);
}

DenoiserModel synth_model(const SynthSpec& spec) {
  validate_synth_spec(spec);
  std::vector<GaussianMixture> mixtures;
  for (std::size_t k = 0; k < spec.templates.size(); ++k) {
    GaussianMixture mix;
    mix.components.push_back(
        GmmComponent{1.0, make_template(spec.templates[k], spec.shape),
                     spec.stds[k]});
    mixtures.push_back(std::move(mix));
  }
  return make_denoiser_model(spec.shape, std::move(mixtures), spec.priors);
}

SynthData synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  validate_synth_spec(spec);
  SynthData out;
  out.model = synth_model(spec);
  out.data.classes = static_cast<int>(spec.templates.size());
  std::uint64_t sample_index = 0;
  for (std::size_t k = 0; k < spec.templates.size(); ++k) {
    const Sample tmpl = make_template(spec.templates[k], spec.shape);
    for (int s = 0; s < spec.samples_per_class; ++s, ++sample_index) {
      std::mt19937_64 rng = make_rng(seed, sample_index);
      Sample img = gaussian_sample(spec.shape, rng);
      for (std::size_t i = 0; i < img.size(); ++i) {
        double v = tmpl.data[i] + spec.stds[k] * img.data[i];
        img.data[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      }
      out.data.images.push_back(std::move(img));
      out.data.labels.push_back(static_cast<int>(k));
    }
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (in.gcount() != 4)
    throw IdxError(IdxError::Kind::Truncated,
                   "idx: truncated header in " + path);
  return (static_cast<std::uint32_t>(buf[0]) << 24) |
         (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) |
         static_cast<std::uint32_t>(buf[3]);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("idx: cannot open " + images_path);
  if (read_be32(imgs, images_path) != 0x00000803u)
    throw IdxError(IdxError::Kind::BadMagic,
                   "idx: bad magic (expected 0x00000803) in " + images_path);
  const std::uint32_t count = read_be32(imgs, images_path);
  const std::uint32_t rows = read_be32(imgs, images_path);
  const std::uint32_t cols = read_be32(imgs, images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("idx: cannot open " + labels_path);
  if (read_be32(labs, labels_path) != 0x00000801u)
    throw IdxError(IdxError::Kind::BadMagic,
                   "idx: bad magic (expected 0x00000801) in " + labels_path);
  const std::uint32_t label_count = read_be32(labs, labels_path);
  if (label_count != count)
    throw IdxError(IdxError::Kind::CountMismatch,
                   "idx: image/label count mismatch between " + images_path +
                       " and " + labels_path);

  LabeledDataset data;
  const Shape shape{static_cast<int>(rows), static_cast<int>(cols), 1};
  std::vector<char> buf(shape.size());
  for (std::uint32_t i = 0; i < count; ++i) {
    imgs.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (imgs.gcount() != static_cast<std::streamsize>(buf.size()))
      throw IdxError(IdxError::Kind::Truncated,
                     "idx: truncated image payload in " + images_path);
    Sample img(shape);
    for (std::size_t p = 0; p < img.size(); ++p)
      img.data[p] = static_cast<unsigned char>(buf[p]) / 255.0;
    data.images.push_back(std::move(img));
  }
  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    char c;
    labs.read(&c, 1);
    if (labs.gcount() != 1)
      throw IdxError(IdxError::Kind::Truncated,
                     "idx: truncated label payload in " + labels_path);
    const int y = static_cast<unsigned char>(c);
    data.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  data.classes = max_label + 1;
  return data;
}

void write_image(const std::string& path, const Sample& image) {
  const int c = image.shape.channels;
  if (c != 1 && c != 3)
    throw std::invalid_argument(
        "write_image: only 1-channel (PGM) and 3-channel (PPM) supported");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_image: cannot open " + path);
  out << (c == 1 ? "P5" : "P6") << "\n"
      << image.shape.width << " " << image.shape.height << "\n255\n";
  for (double v : image.data) {
    const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    const long byte = std::lround(255.0 * clamped);
    out.put(static_cast<char>(static_cast<unsigned char>(byte)));
  }
  if (!out) throw std::runtime_error("write_image: write failed: " + path);
}

Sample read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_image: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6")
    throw std::runtime_error("read_image: unsupported format in " + path);
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w < 1 || h < 1 || maxval != 255)
    throw std::runtime_error("read_image: bad header in " + path);
  in.get();  // single whitespace after header
  const int c = magic == "P5" ? 1 : 3;
  Sample img(Shape{h, w, c});
  std::vector<char> buf(img.size());
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw std::runtime_error("read_image: truncated payload in " + path);
  for (std::size_t i = 0; i < img.size(); ++i)
    img.data[i] = static_cast<unsigned char>(buf[i]) / 255.0;
  return img;
}

}  // namespace difflab
