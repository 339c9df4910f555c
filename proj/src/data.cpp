#include "afgan/data.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "afgan/errors.hpp"

namespace afgan {

// ---------------------------------------------------------------------------
// CelebA
// ---------------------------------------------------------------------------

const std::vector<std::string>& celeba_default_selection() {
  static const std::vector<std::string> names = {
      "5_o_Clock_Shadow", "Arched_Eyebrows", "Bags_Under_Eyes", "Bald",
      "Bangs",            "Black_Hair",      "Blond_Hair",      "Brown_Hair",
      "Bushy_Eyebrows",   "Eyeglasses",      "Gray_Hair",       "Male",
      "Mouth_Slightly_Open", "Narrow_Eyes",  "No_Beard",        "Pale_Skin",
      "Pointy_Nose",      "Smiling"};
  return names;
}

std::vector<AttrRecord> parse_celeba_attrs(std::istream& in,
                                           const std::vector<std::string>& selection) {
  std::string line;
  int64_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError("line 1: missing record count");
  int64_t expected = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> expected) || expected < 0) {
      throw ParseError("line " + std::to_string(line_no) + ": bad record count '" + line + "'");
    }
  }
  if (!next_line()) throw ParseError("line 2: missing attribute names");
  std::vector<std::string> header;
  {
    std::istringstream ss(line);
    for (std::string name; ss >> name;) header.push_back(name);
  }
  std::vector<std::size_t> columns;
  for (const auto& name : selection) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("unknown attribute '" + name + "' in selection");
    columns.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  std::vector<AttrRecord> records;
  while (next_line()) {
    std::istringstream ss(line);
    std::string id;
    ss >> id;
    std::vector<int> values;
    for (std::string tok; ss >> tok;) {
      if (tok == "1" || tok == "+1") {
        values.push_back(1);
      } else if (tok == "-1") {
        values.push_back(-1);
      } else {
        throw ParseError("line " + std::to_string(line_no) + ": value '" + tok +
                         "' is not +1 or -1");
      }
    }
    if (values.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " values, found " +
                       std::to_string(values.size()));
    }
    std::vector<uint8_t> bits;
    for (auto c : columns) bits.push_back(values[c] > 0 ? 1 : 0);
    records.push_back({id, AttributeVector(std::move(bits), selection)});
  }
  if (static_cast<int64_t>(records.size()) != expected) {
    throw ParseError("header announces " + std::to_string(expected) + " records, found " +
                     std::to_string(records.size()));
  }
  return records;
}

std::vector<AttrRecord> parse_celeba_attrs(const std::filesystem::path& path,
                                           const std::vector<std::string>& selection) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_celeba_attrs(in, selection);
}

void write_celeba_attrs(std::ostream& out, const std::vector<AttrRecord>& records) {
  out << records.size() << "\n";
  if (!records.empty()) {
    const auto& names = records.front().attrs.names();
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? " " : "") << names[i];
  }
  out << "\n";
  for (const auto& r : records) {
    out << r.image_id;
    for (auto b : r.attrs.bits()) out << (b ? "  1" : " -1");
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Synthetic renderer
// ---------------------------------------------------------------------------

const std::vector<std::string>& synth_attribute_names() {
  static const std::vector<std::string> names = {"Bangs",      "Eyeglasses", "5_o_Clock_Shadow",
                                                 "Smiling",    "Black_Hair", "Wearing_Earrings"};
  return names;
}

void SynthSpec::validate() const {
  if (n_attrs < 1 || n_attrs > 6) throw ConfigError("synthetic n_attrs must be in 1..6");
  if (resolution < 16 || resolution % 16 != 0) {
    throw ConfigError("synthetic resolution must be a positive multiple of 16");
  }
  if (jitter < 0 || jitter > 1) throw ConfigError("synthetic jitter must be 0 or 1");
}

namespace {

struct Rgb {
  double r, g, b;
};

constexpr Rgb kBackground{0.18, 0.22, 0.32};
constexpr Rgb kSkin{0.87, 0.72, 0.58};
constexpr Rgb kFringe{0.30, 0.18, 0.10};
constexpr Rgb kEye{0.10, 0.08, 0.08};
constexpr Rgb kFrame{0.04, 0.04, 0.07};
constexpr Rgb kNose{0.74, 0.57, 0.44};
constexpr Rgb kStubble{0.47, 0.44, 0.47};
constexpr Rgb kLips{0.45, 0.15, 0.15};
constexpr Rgb kSmile{0.80, 0.12, 0.15};
constexpr Rgb kTeeth{0.95, 0.95, 0.92};
constexpr Rgb kBlackHair{0.07, 0.06, 0.06};
constexpr Rgb kLightHair{0.72, 0.55, 0.30};
constexpr Rgb kGold{0.95, 0.80, 0.15};

// Canvas addressed in design units: the image spans [0,64) on both axes.
class Canvas {
 public:
  explicit Canvas(int64_t res) : res_(res), scale_(res / 64.0), px_(res * res * 3) {}

  // Paints every pixel whose centre, shifted by (-dx,-dy), satisfies `inside`.
  void paint(const std::function<bool(double, double)>& inside, Rgb color, int dx = 0,
             int dy = 0) {
    for (int64_t y = 0; y < res_; ++y) {
      const double v = (y + 0.5) / scale_ - dy;
      for (int64_t x = 0; x < res_; ++x) {
        const double u = (x + 0.5) / scale_ - dx;
        if (inside(u, v)) set(x, y, color);
      }
    }
  }

  void rect(double x0, double y0, double x1, double y1, Rgb c, int dx = 0, int dy = 0) {
    paint([=](double u, double v) { return u >= x0 && u < x1 && v >= y0 && v < y1; }, c, dx, dy);
  }

  void ellipse(double cx, double cy, double rx, double ry, Rgb c, int dx = 0, int dy = 0) {
    paint([=](double u, double v) {
      const double a = (u - cx) / rx, b = (v - cy) / ry;
      return a * a + b * b <= 1.0;
    }, c, dx, dy);
  }

  void outline(double x0, double y0, double x1, double y1, double t, Rgb c, int dx, int dy) {
    paint([=](double u, double v) {
      const bool outer = u >= x0 && u < x1 && v >= y0 && v < y1;
      const bool inner = u >= x0 + t && u < x1 - t && v >= y0 + t && v < y1 - t;
      return outer && !inner;
    }, c, dx, dy);
  }

  void set(int64_t x, int64_t y, Rgb c) {
    float* p = &px_[(y * res_ + x) * 3];
    p[0] = static_cast<float>(c.r);
    p[1] = static_cast<float>(c.g);
    p[2] = static_cast<float>(c.b);
  }

  std::vector<float>& pixels() { return px_; }
  int64_t res() const { return res_; }

 private:
  int64_t res_;
  double scale_;
  std::vector<float> px_;
};

Rgb shade(Rgb c, double delta) { return {c.r + delta, c.g + delta, c.b + delta}; }

Rgb blend(Rgb a, Rgb b, double t) {
  return {a.r * (1 - t) + b.r * t, a.g * (1 - t) + b.g * t, a.b * (1 - t) + b.b * t};
}

Canvas draw_glyph(const SynthSpec& spec, const AttributeVector& attrs, const SynthNuisance& n) {
  if (static_cast<int64_t>(attrs.size()) != spec.n_attrs) {
    throw ConfigError("attribute vector has " + std::to_string(attrs.size()) +
                      " bits, synthetic spec expects " + std::to_string(spec.n_attrs));
  }
  auto bit = [&](int i) { return i < spec.n_attrs && attrs[i] == 1; };
  const Rgb skin = shade(kSkin, n.skin);
  Canvas c(spec.resolution);
  c.rect(0, 0, 64, 64, kBackground);
  c.ellipse(32, 34, 15, 30, skin);

  // 0: Bangs.
  if (bit(0)) {
    c.paint([](double u, double v) {
      if (u < 18 || u >= 46 || v < 2) return false;
      const double phase = std::fmod(u - 18, 6.0);
      return v < 10 + std::abs(phase - 3.0);
    }, kFringe, n.dx[0], n.dy[0]);
  }

  // 1: Eyeglasses. The eyes are part of this region and share its jitter.
  c.ellipse(25, 24, 2, 2, kEye, n.dx[1], n.dy[1]);
  c.ellipse(39, 24, 2, 2, kEye, n.dx[1], n.dy[1]);
  if (bit(1)) {
    c.outline(19, 19, 31, 29, 2, kFrame, n.dx[1], n.dy[1]);
    c.outline(33, 19, 45, 29, 2, kFrame, n.dx[1], n.dy[1]);
    c.rect(31, 22, 33, 24, kFrame, n.dx[1], n.dy[1]);
  }

  // 2: 5 o'clock shadow, with the nose drawn on top.
  if (bit(2)) c.rect(19, 38, 45, 47, blend(skin, kStubble, 0.7), n.dx[2], n.dy[2]);
  c.rect(30, 33, 34, 40, shade(kNose, n.skin), n.dx[2], n.dy[2]);

  // 3: Smiling.
  if (bit(3)) {
    c.paint([](double u, double v) {
      const double a = (u - 32) / 10.0, b = (v - 51) / 8.0;
      return v >= 51 && a * a + b * b <= 1.0;
    }, kSmile, n.dx[3], n.dy[3]);
    c.rect(24, 51, 40, 53, kTeeth, n.dx[3], n.dy[3]);
  } else {
    c.rect(25, 53, 39, 55, kLips, n.dx[3], n.dy[3]);
  }

  // 4: Black hair (side strands, light brown otherwise).
  const Rgb hair = bit(4) ? kBlackHair : kLightHair;
  c.rect(4, 17, 14, 46, hair, n.dx[4], n.dy[4]);
  c.rect(50, 17, 60, 46, hair, n.dx[4], n.dy[4]);

  // 5: Earrings.
  if (bit(5)) {
    c.ellipse(10, 54, 4, 4, kGold, n.dx[5], n.dy[5]);
    c.ellipse(54, 54, 4, 4, kGold, n.dx[5], n.dy[5]);
  }
  return c;
}

RgbImage quantize(Canvas& c, const SynthNuisance& n, double noise_sigma) {
  auto& px = c.pixels();
  std::mt19937_64 rng(n.noise_seed);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  RgbImage out;
  out.width = out.height = c.res();
  out.data.resize(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    double v = px[i] + n.brightness;
    if (n.noise) v += noise(rng);
    out.data[i] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }
  return out;
}

// Cells owned by each attribute as (row, col).
const std::vector<std::vector<std::pair<int, int>>>& attribute_cells() {
  static const std::vector<std::vector<std::pair<int, int>>> cells = {
      {{0, 1}, {0, 2}},
      {{1, 1}, {1, 2}},
      {{2, 1}, {2, 2}},
      {{3, 1}, {3, 2}},
      {{1, 0}, {2, 0}, {1, 3}, {2, 3}},
      {{3, 0}, {3, 3}},
  };
  return cells;
}

}  // namespace

SynthNuisance SynthNuisance::from_seed(const SynthSpec& spec, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> shift(-spec.jitter, spec.jitter);
  SynthNuisance n;
  n.brightness = spec.brightness_range * unit(rng);
  n.skin = spec.skin_range * unit(rng);
  for (int i = 0; i < 6; ++i) {
    n.dx[i] = shift(rng);
    n.dy[i] = shift(rng);
  }
  n.noise_seed = rng();
  n.noise = spec.noise_sigma > 0;
  return n;
}

RgbImage synth_render(const SynthSpec& spec, const AttributeVector& attrs,
                      const SynthNuisance& nuisance) {
  spec.validate();
  auto canvas = draw_glyph(spec, attrs, nuisance);
  return quantize(canvas, nuisance, spec.noise_sigma);
}

RgbImage synth_generate(const SynthSpec& spec, const AttributeVector& attrs, uint64_t seed) {
  return synth_render(spec, attrs, SynthNuisance::from_seed(spec, seed));
}

torch::Tensor synth_attribute_mask(const SynthSpec& spec, int64_t index) {
  spec.validate();
  if (index < 0 || index >= 6) throw ConfigError("synthetic attribute index out of range");
  const int64_t cell = spec.resolution / 4;
  auto mask = torch::zeros({spec.resolution, spec.resolution}, torch::kBool);
  for (auto [row, col] : attribute_cells()[index]) {
    mask.slice(0, row * cell, (row + 1) * cell).slice(1, col * cell, (col + 1) * cell).fill_(true);
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

OracleClassifier::OracleClassifier(SynthSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const int64_t hw = spec_.resolution * spec_.resolution;
  for (int64_t i = 0; i < spec_.n_attrs; ++i) {
    auto idx = synth_attribute_mask(spec_, i).flatten().nonzero().flatten();
    // Channel-major flat indices into a (3, H*W) image.
    auto full = torch::cat({idx, idx + hw, idx + 2 * hw});
    mask_index_.push_back(full);
    std::vector<torch::Tensor> per_shift;
    for (int dy = -spec_.jitter; dy <= spec_.jitter; ++dy) {
      for (int dx = -spec_.jitter; dx <= spec_.jitter; ++dx) {
        std::vector<torch::Tensor> pair;
        for (int b = 0; b < 2; ++b) {
          std::vector<uint8_t> bits(spec_.n_attrs, 0);
          bits[i] = static_cast<uint8_t>(b);
          SynthNuisance n;
          n.dx[i] = dx;
          n.dy[i] = dy;
          auto canvas = draw_glyph(spec_, AttributeVector(bits), n);
          auto t = torch::from_blob(canvas.pixels().data(), {spec_.resolution, spec_.resolution, 3},
                                    torch::kFloat32)
                       .permute({2, 0, 1})
                       .reshape({-1})
                       .clone() * 2.0 - 1.0;
          pair.push_back(t.index_select(0, full));
        }
        per_shift.push_back(torch::stack(pair));
      }
    }
    templates_.push_back(torch::stack(per_shift));  // (J,2,P)
  }
}

std::vector<std::string> OracleClassifier::attribute_names() const {
  const auto& all = synth_attribute_names();
  return {all.begin(), all.begin() + spec_.n_attrs};
}

torch::Tensor OracleClassifier::classify(const torch::Tensor& images) const {
  const bool single = images.dim() == 3;
  auto batch = (single ? images.unsqueeze(0) : images).detach().to(torch::kCPU, torch::kFloat32);
  if (batch.dim() != 4 || batch.size(1) != 3 || batch.size(2) != spec_.resolution ||
      batch.size(3) != spec_.resolution) {
    throw ConfigError("oracle expects (B,3," + std::to_string(spec_.resolution) + "," +
                      std::to_string(spec_.resolution) + ") images");
  }
  auto flat = batch.reshape({batch.size(0), -1});
  auto out = torch::zeros({batch.size(0), spec_.n_attrs});
  for (int64_t i = 0; i < spec_.n_attrs; ++i) {
    auto region = flat.index_select(1, mask_index_[i]);                        // (B,P)
    auto diff = region.unsqueeze(1).unsqueeze(1) - templates_[i].unsqueeze(0);  // (B,J,2,P)
    auto dist = std::get<0>(diff.pow(2).sum(-1).min(1));                       // (B,2)
    out.select(1, i).copy_((dist.select(1, 1) < dist.select(1, 0)).to(torch::kFloat32));
  }
  return single ? out.squeeze(0) : out;
}

AttributeVector OracleClassifier::classify(const RgbImage& image) const {
  return AttributeVector::from_tensor(classify(from_rgb(image)), attribute_names());
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

std::vector<SynthRecord> make_synth_records(const SynthSpec& spec, int64_t n, uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  const auto& all = synth_attribute_names();
  std::vector<std::string> names(all.begin(), all.begin() + spec.n_attrs);
  std::vector<SynthRecord> records;
  records.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    std::vector<uint8_t> bits(spec.n_attrs);
    for (auto& b : bits) b = coin(rng) ? 1 : 0;
    std::ostringstream id;
    id << "synth_" << std::setw(6) << std::setfill('0') << i;
    records.push_back({id.str(), AttributeVector(std::move(bits), names), rng()});
  }
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<SynthRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::json j = {{"image_id", r.image_id}, {"bits", r.attrs.bits()}, {"seed", r.seed}};
    out << j.dump() << "\n";
  }
}

std::vector<SynthRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<SynthRecord> records;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto bits = j.at("bits").get<std::vector<uint8_t>>();
      std::vector<std::string> names;
      if (bits.size() <= synth_attribute_names().size()) {
        names.assign(synth_attribute_names().begin(), synth_attribute_names().begin() + bits.size());
      }
      records.push_back({j.at("image_id").get<std::string>(),
                         AttributeVector(std::move(bits), std::move(names)),
                         j.at("seed").get<uint64_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_synth_dataset(const std::filesystem::path& dir, const SynthSpec& spec,
                         const std::vector<SynthRecord>& records) {
  std::filesystem::create_directories(dir / "images");
  for (const auto& r : records) {
    write_ppm(dir / "images" / (r.image_id + ".ppm"), synth_generate(spec, r.attrs, r.seed));
  }
  write_manifest(dir / "manifest.jsonl", records);
}

ImageDataset render_dataset(const SynthSpec& spec, const std::vector<SynthRecord>& records) {
  if (records.empty()) throw ContractViolation("dataset must not be empty");
  std::vector<torch::Tensor> images;
  std::vector<AttributeVector> attrs;
  for (const auto& r : records) {
    images.push_back(from_rgb(synth_generate(spec, r.attrs, r.seed)));
    attrs.push_back(r.attrs);
  }
  const auto& all = synth_attribute_names();
  return {torch::stack(images), stack_attributes(attrs),
          std::vector<std::string>(all.begin(), all.begin() + spec.n_attrs)};
}

ImageDataset load_synth_dataset(const std::filesystem::path& dir) {
  auto records = read_manifest(dir / "manifest.jsonl");
  if (records.empty()) throw ContractViolation("dataset " + dir.string() + " is empty");
  std::vector<torch::Tensor> images;
  std::vector<AttributeVector> attrs;
  for (const auto& r : records) {
    images.push_back(from_rgb(read_ppm(dir / "images" / (r.image_id + ".ppm"))));
    attrs.push_back(r.attrs);
  }
  return {torch::stack(images), stack_attributes(attrs), records.front().attrs.names()};
}

ImageDataset load_celeba_dataset(const std::filesystem::path& attr_list,
                                 const std::filesystem::path& image_dir,
                                 const std::vector<std::string>& selection, int64_t resolution,
                                 int64_t limit) {
  auto records = parse_celeba_attrs(attr_list, selection);
  if (limit > 0 && static_cast<int64_t>(records.size()) > limit) records.resize(limit);
  if (records.empty()) throw ContractViolation("attribute list " + attr_list.string() + " is empty");
  namespace F = torch::nn::functional;
  std::vector<torch::Tensor> images;
  std::vector<AttributeVector> attrs;
  for (const auto& r : records) {
    const auto stem = std::filesystem::path(r.image_id).stem().string();
    auto img = from_rgb(read_ppm(image_dir / (stem + ".ppm")));
    const int64_t h = img.size(1), w = img.size(2), side = std::min(h, w);
    img = img.slice(1, (h - side) / 2, (h - side) / 2 + side).slice(2, (w - side) / 2, (w - side) / 2 + side);
    auto opts = F::InterpolateFuncOptions().size(std::vector<int64_t>{resolution, resolution});
    if (side > resolution) {
      opts.mode(torch::kArea);
    } else {
      opts.mode(torch::kBilinear).align_corners(false);
    }
    img = F::interpolate(img.unsqueeze(0), opts)[0];
    images.push_back(img);
    attrs.push_back(r.attrs);
  }
  return {torch::stack(images), stack_attributes(attrs), selection};
}

}  // namespace afgan
