#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "afgan/attributes.hpp"
#include "afgan/classifier.hpp"
#include "afgan/image_io.hpp"

namespace afgan {

// ---------------------------------------------------------------------------
// CelebA attribute list
// ---------------------------------------------------------------------------

struct AttrRecord {
  std::string image_id;
  AttributeVector attrs;

  bool operator==(const AttrRecord& o) const {
    return image_id == o.image_id && attrs == o.attrs && attrs.names() == o.attrs.names();
  }
};

/// The 18 CelebA attributes used for face generation, in table order.
const std::vector<std::string>& celeba_default_selection();

/// Parses the list_attr_celeba.txt layout: record count, a line of attribute
/// names, then "<file> <+-1 per attribute>" rows. +1 -> 1, -1 -> 0; columns are
/// projected to `selection` in the order given. Unknown names throw
/// ConfigError; malformed rows throw ParseError naming the line.
std::vector<AttrRecord> parse_celeba_attrs(std::istream& in,
                                           const std::vector<std::string>& selection);
std::vector<AttrRecord> parse_celeba_attrs(const std::filesystem::path& path,
                                           const std::vector<std::string>& selection =
                                               celeba_default_selection());

/// Writes records in the same layout (names taken from the first record).
void write_celeba_attrs(std::ostream& out, const std::vector<AttrRecord>& records);

// ---------------------------------------------------------------------------
// Synthetic face-like glyphs
// ---------------------------------------------------------------------------

/// Names of the six synthetic attributes, in bit order.
const std::vector<std::string>& synth_attribute_names();

// Each attribute owns a disjoint set of cells on a 4x4 grid over the canvas
// and only ever draws inside them:
//   Bangs             fringe over the forehead      cells (0,1) (0,2)
//   Eyeglasses        frames around the eyes        cells (1,1) (1,2)
//   5_o_Clock_Shadow  stubble on the lower face     cells (2,1) (2,2)
//   Smiling           open red smile vs. flat line  cells (3,1) (3,2)
//   Black_Hair        side hair black vs. light     cells (1,0) (2,0) (1,3) (2,3)
//   Wearing_Earrings  gold earrings                 cells (3,0) (3,3)
struct SynthSpec {
  int64_t n_attrs = 6;        // uses the first n names; 1..6
  int64_t resolution = 64;    // multiple of 16
  double noise_sigma = 0.015;
  double brightness_range = 0.04;
  double skin_range = 0.03;
  int jitter = 1;  // max shift of each attribute's drawing, in 1/64 canvas units

  void validate() const;
};

/// Nuisance factors drawn from a seed; they never depend on the bits.
struct SynthNuisance {
  double brightness = 0;
  double skin = 0;
  std::array<int, 6> dx{}, dy{};
  uint64_t noise_seed = 0;
  bool noise = false;

  static SynthNuisance from_seed(const SynthSpec& spec, uint64_t seed);
};

/// Deterministic render of `attrs` with the nuisance factors of `seed`.
RgbImage synth_generate(const SynthSpec& spec, const AttributeVector& attrs, uint64_t seed);
/// Render with explicit nuisance factors (zero nuisance = canonical glyph).
RgbImage synth_render(const SynthSpec& spec, const AttributeVector& attrs,
                      const SynthNuisance& nuisance);

/// Boolean (H,W) mask of the cells owned by attribute `index`.
torch::Tensor synth_attribute_mask(const SynthSpec& spec, int64_t index);

/// Rule-based attribute recovery for synthetic glyphs. For every attribute it
/// compares the image, inside that attribute's cells, with the canonical
/// bit-0 and bit-1 drawings at every allowed jitter and picks the nearer one.
class OracleClassifier : public AttributeClassifier {
 public:
  explicit OracleClassifier(SynthSpec spec);

  /// images: (3,H,W) or (B,3,H,W) in [-1,1]. Returns (N) or (B,N) float bits.
  torch::Tensor classify(const torch::Tensor& images) const;
  AttributeVector classify(const RgbImage& image) const;

  const SynthSpec& spec() const { return spec_; }
  std::vector<std::string> attribute_names() const override;
  torch::Tensor classify_batch(const torch::Tensor& images) const override { return classify(images); }

 private:
  SynthSpec spec_;
  // Per attribute: flat pixel indices of its mask, and for each jitter the
  // two templates restricted to the mask, (J, 2, 3*|mask|).
  std::vector<torch::Tensor> mask_index_;
  std::vector<torch::Tensor> templates_;
};

// ---------------------------------------------------------------------------
// Synthetic datasets
// ---------------------------------------------------------------------------

struct SynthRecord {
  std::string image_id;
  AttributeVector attrs;
  uint64_t seed = 0;
};

/// n records with uniformly random bits and per-record render seeds.
std::vector<SynthRecord> make_synth_records(const SynthSpec& spec, int64_t n, uint64_t seed);

/// Manifest: one JSON object per line, {"image_id", "bits", "seed"}.
void write_manifest(const std::filesystem::path& path, const std::vector<SynthRecord>& records);
std::vector<SynthRecord> read_manifest(const std::filesystem::path& path);

/// Renders records to <dir>/images/<id>.ppm and writes <dir>/manifest.jsonl.
void write_synth_dataset(const std::filesystem::path& dir, const SynthSpec& spec,
                         const std::vector<SynthRecord>& records);

// In-memory training set: 8-bit images normalised to [-1,1] and their bits.
struct ImageDataset {
  torch::Tensor images;  // (M,3,H,W) float in [-1,1]
  torch::Tensor bits;    // (M,N) float 0/1
  std::vector<std::string> attribute_names;

  int64_t size() const { return images.size(0); }
};

ImageDataset render_dataset(const SynthSpec& spec, const std::vector<SynthRecord>& records);
/// Loads a directory written by write_synth_dataset.
ImageDataset load_synth_dataset(const std::filesystem::path& dir);

/// CelebA-style set: attribute list plus <image_dir>/<stem>.ppm per record
/// (images converted to PPM beforehand). Each image is centre-cropped to a
/// square and resized to `resolution`. limit > 0 keeps the first records only.
ImageDataset load_celeba_dataset(const std::filesystem::path& attr_list,
                                 const std::filesystem::path& image_dir,
                                 const std::vector<std::string>& selection, int64_t resolution,
                                 int64_t limit = 0);

}  // namespace afgan
