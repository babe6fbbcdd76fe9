#include "patchmil/data.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "patchmil/image_io.hpp"
#include "patchmil/rng.hpp"

namespace patchmil {
namespace fs = std::filesystem;

namespace {

constexpr const char* kHeader = "image_path,label,split,annotation_path,dataset_tag";

std::atomic<int> g_poison_depth{0};
std::atomic<std::size_t> g_annotation_reads{0};

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) fields.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool is_mask_path(const std::string& p) {
  std::string ext = fs::path(p).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm";
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::unassigned: break;
  }
  return "";
}

Split split_from_string(const std::string& s) {
  if (s.empty() || s == "unassigned") return Split::unassigned;
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  throw InvalidArgument("unknown split '" + s + "'");
}

fs::path Manifest::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

std::vector<ImageRecord> Manifest::select(Split s) const {
  std::vector<ImageRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out), [s](const ImageRecord& r) { return r.split == s; });
  return out;
}

std::vector<Box> read_box_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open box file: " + path.string());
  std::vector<Box> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_csv(line);
    if (f.size() != 4) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected x0,y0,x1,y1");
    try {
      boxes.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header row
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": non-numeric box coordinate");
    }
    const Box& b = boxes.back();
    if (!(b.x1 > b.x0 && b.y1 > b.y0))
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": box must satisfy x0<x1 and y0<y1");
  }
  return boxes;
}

Manifest load_manifest(const fs::path& path, int standardized_size) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  m.provenance = "manifest " + path.string();

  std::string line;
  if (!std::getline(in, line) || trim(line) != kHeader)
    throw IoError(path.string() + ": first line must be the header '" + std::string(kHeader) + "'");

  std::set<std::string> seen;
  std::vector<std::string> missing;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto where = path.string() + " row " + std::to_string(row);
    auto f = split_csv(line);
    if (f.size() < 2 || f.size() > 5) throw IoError(where + ": expected 5 comma-separated fields, got " + std::to_string(f.size()));
    f.resize(5);
    ImageRecord r;
    r.image_path = f[0];
    if (r.image_path.empty()) throw IoError(where + ": field image_path is empty");
    try {
      std::size_t used = 0;
      const long long v = std::stoll(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing");
      r.label = label_from_int(v);
    } catch (const InvalidArgument&) {
      throw IoError(where + ": field label must be 0 or 1, got '" + f[1] + "'");
    } catch (const std::exception&) {
      throw IoError(where + ": field label is not an integer: '" + f[1] + "'");
    }
    try {
      r.split = split_from_string(f[2]);
    } catch (const InvalidArgument& e) {
      throw IoError(where + ": field split: " + e.what());
    }
    r.annotation_path = f[3];
    r.dataset_tag = f[4];
    if (!seen.insert(r.image_path).second) throw IoError(where + ": duplicate image_path '" + r.image_path + "'");
    if (!fs::exists(m.resolve(r.image_path))) missing.push_back(r.image_path);
    if (r.annotated()) {
      const fs::path ap = m.resolve(r.annotation_path);
      if (!fs::exists(ap)) throw IoError(where + ": field annotation_path: file not found: " + ap.string());
      if (is_mask_path(r.annotation_path)) {
        if (standardized_size > 0) {
          const Image mask = io::read_gray(ap);
          if (mask.height != standardized_size || mask.width != standardized_size)
            throw IoError(where + ": field annotation_path: mask extent " + std::to_string(mask.height) + "x" +
                          std::to_string(mask.width) + " differs from the standardized size");
        }
      } else {
        for (const Box& b : read_box_file(ap)) {
          if (b.x0 < 0 || b.y0 < 0 || (standardized_size > 0 && (b.x1 > standardized_size || b.y1 > standardized_size)))
            throw IoError(where + ": field annotation_path: box outside image bounds");
        }
      }
    }
    m.records.push_back(std::move(r));
  }
  if (!missing.empty()) {
    std::string msg = path.string() + ": " + std::to_string(missing.size()) + " image file(s) missing:";
    for (const auto& p : missing) msg += " " + p;
    throw IoError(msg);
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << kHeader << '\n';
  for (const ImageRecord& r : manifest.records)
    out << r.image_path << ',' << to_int(r.label) << ',' << to_string(r.split) << ',' << r.annotation_path << ','
        << r.dataset_tag << '\n';
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

Manifest split_train_val(Manifest manifest, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidArgument("validation fraction must lie in (0,1)");
  Rng rng = substream(seed, "split");
  for (Label cls : {Label::negative, Label::positive}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
      if (manifest.records[i].label == cls) idx.push_back(i);
    if (idx.size() < 2)
      throw InvalidArgument("cannot stratify: class " + std::to_string(to_int(cls)) + " has " + std::to_string(idx.size()) +
                            " record(s), need at least 2");
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[uniform_index(rng, i + 1)]);
    const long n = static_cast<long>(idx.size());
    const long n_val = std::clamp(std::lround(static_cast<double>(n) * val_fraction), 1L, n - 1);
    for (long i = 0; i < n; ++i) manifest.records[idx[i]].split = i < n_val ? Split::val : Split::train;
  }
  manifest.seed = seed;
  return manifest;
}

AnnotationPoison::AnnotationPoison() { ++g_poison_depth; }
AnnotationPoison::~AnnotationPoison() { --g_poison_depth; }
bool AnnotationPoison::active() { return g_poison_depth.load() > 0; }

std::size_t annotation_read_count() { return g_annotation_reads.load(); }

Annotation load_annotation(const Manifest& manifest, const ImageRecord& record, int height, int width) {
  if (AnnotationPoison::active())
    throw AnnotationPoisoned("annotation access is poisoned (requested for " + record.image_path + ")");
  if (!record.annotated()) throw InvalidArgument("record has no annotation: " + record.image_path);
  const fs::path p = manifest.resolve(record.annotation_path);
  Annotation a{height, width, {}};
  if (is_mask_path(record.annotation_path)) {
    Image mask = io::read_gray(p);
    if (mask.height != height || mask.width != width)
      throw InvalidArgument("mask " + p.string() + " does not match image extent " + std::to_string(height) + "x" +
                            std::to_string(width));
    a.geometry = std::move(mask);
  } else {
    a.geometry = read_box_file(p);
  }
  ++g_annotation_reads;
  return a;
}

// ---------------------------------------------------------------- synthetic

nlohmann::json to_json(const SyntheticConfig& c) {
  return {{"count", c.count},
          {"positive_fraction", c.positive_fraction},
          {"image_size", c.image_size},
          {"anomaly_radius_lo", c.anomaly_radius_lo},
          {"anomaly_radius_hi", c.anomaly_radius_hi},
          {"contrast_lo", c.contrast_lo},
          {"contrast_hi", c.contrast_hi},
          {"texture_sigma", c.texture_sigma},
          {"texture_amplitude", c.texture_amplitude},
          {"coarse_sigma", c.coarse_sigma},
          {"coarse_amplitude", c.coarse_amplitude},
          {"seed", c.seed}};
}

namespace {

// Separable Gaussian blur with mirrored borders.
std::vector<double> blur(const std::vector<double>& src, int n, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double norm = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= norm;
  auto mirror = [n](int i) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * src[y * n + mirror(x + i)];
      tmp[y * n + x] = acc;
    }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[mirror(y + i) * n + x];
      out[y * n + x] = acc;
    }
  return out;
}

void standardize_field(std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  for (double& x : v) x = sd > 0 ? (x - mean) / sd : 0.0;
}

void validate(const SyntheticConfig& c) {
  if (c.count <= 0) throw InvalidArgument("synthetic count must be positive");
  if (!(c.positive_fraction >= 0.0 && c.positive_fraction <= 1.0)) throw InvalidArgument("positive fraction must lie in [0,1]");
  if (c.image_size < 16) throw InvalidArgument("synthetic image size must be >= 16");
  if (!(c.anomaly_radius_lo > 0.0 && c.anomaly_radius_lo <= c.anomaly_radius_hi && 2 * c.anomaly_radius_hi < c.image_size))
    throw InvalidArgument("anomaly radius range must satisfy 0 < lo <= hi < image_size/2");
  if (!(c.contrast_lo > 0.0 && c.contrast_lo <= c.contrast_hi)) throw InvalidArgument("bad contrast range");
  if (!(c.texture_sigma > 0.0 && c.coarse_sigma > 0.0 && c.texture_amplitude >= 0.0 && c.coarse_amplitude >= 0.0)) throw InvalidArgument("bad noise model");
}

}  // namespace

std::vector<BlobSpec> draw_blobs(const SyntheticConfig& config, std::uint64_t index) {
  validate(config);
  Rng rng = substream(config.seed, "synth-blobs", index);
  const int n = 1 + static_cast<int>(uniform_index(rng, 2));
  std::vector<BlobSpec> blobs;
  for (int b = 0; b < n; ++b) {
    BlobSpec s;
    s.radius = uniform(rng, config.anomaly_radius_lo, config.anomaly_radius_hi);
    s.cy = uniform(rng, s.radius, config.image_size - s.radius);
    s.cx = uniform(rng, s.radius, config.image_size - s.radius);
    s.contrast = uniform(rng, config.contrast_lo, config.contrast_hi);
    blobs.push_back(s);
  }
  return blobs;
}

SyntheticImage render_synthetic(const SyntheticConfig& config, std::uint64_t index, const std::vector<BlobSpec>& blobs) {
  validate(config);
  const int n = config.image_size;
  const std::size_t npx = static_cast<std::size_t>(n) * n;
  Rng rng = substream(config.seed, "synth-texture", index);
  std::vector<double> fine(npx), coarse(npx);
  for (double& v : fine) v = normal(rng);
  for (double& v : coarse) v = normal(rng);
  fine = blur(fine, n, config.texture_sigma);
  coarse = blur(coarse, n, config.coarse_sigma);
  standardize_field(fine);
  standardize_field(coarse);

  std::vector<double> bg(npx);
  for (std::size_t i = 0; i < npx; ++i) bg[i] = 0.5 + config.texture_amplitude * fine[i] + config.coarse_amplitude * coarse[i];
  const auto [mn, mx] = std::minmax_element(bg.begin(), bg.end());
  const double range = *mx - *mn;

  SyntheticImage out{Image(n, n, 1), Image(n, n, 1), blobs};
  for (const BlobSpec& b : blobs) {
    const double peak = b.contrast * range;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double dy = (y + 0.5 - b.cy) / b.radius;
        const double dx = (x + 0.5 - b.cx) / b.radius;
        const double d2 = dy * dy + dx * dx;
        if (d2 >= 1.0) continue;
        // Smooth compact bump: exactly zero outside the radius.
        bg[static_cast<std::size_t>(y) * n + x] += peak * (1.0 - d2) * (1.0 - d2);
        out.mask.at(y, x) = 1.0f;
      }
  }
  for (std::size_t i = 0; i < npx; ++i) out.image.data[i] = static_cast<float>(std::clamp(bg[i], 0.0, 1.0));
  return out;
}

Manifest generate_synthetic_dataset(const SyntheticConfig& config, const fs::path& output_dir) {
  validate(config);
  std::error_code ec;
  fs::create_directories(output_dir / "images", ec);
  if (!ec) fs::create_directories(output_dir / "masks", ec);
  if (ec) throw IoError("cannot create synthetic dataset directory " + output_dir.string() + ": " + ec.message());

  const int n_pos = static_cast<int>(std::lround(config.count * config.positive_fraction));
  std::vector<int> is_pos(config.count, 0);
  std::fill_n(is_pos.begin(), n_pos, 1);
  Rng rng = substream(config.seed, "synth-labels");
  for (std::size_t i = is_pos.size() - 1; i > 0; --i) std::swap(is_pos[i], is_pos[uniform_index(rng, i + 1)]);

  Manifest m;
  m.base_dir = output_dir;
  m.provenance = "synthetic";
  m.seed = config.seed;
  for (int i = 0; i < config.count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "img_%05d", i);
    const std::vector<BlobSpec> blobs = is_pos[i] ? draw_blobs(config, i) : std::vector<BlobSpec>{};
    const SyntheticImage s = render_synthetic(config, i, blobs);
    ImageRecord r;
    r.image_path = std::string("images/") + stem + ".png";
    r.label = is_pos[i] ? Label::positive : Label::negative;
    r.dataset_tag = "synthetic";
    io::write_gray_png(output_dir / r.image_path, s.image);
    if (is_pos[i]) {
      r.annotation_path = std::string("masks/") + stem + "_mask.png";
      io::write_gray_png(output_dir / r.annotation_path, s.mask);
    }
    m.records.push_back(std::move(r));
  }
  write_manifest(output_dir / "manifest.csv", m);
  std::ofstream cfg(output_dir / "synth_config.json", std::ios::trunc);
  if (!cfg) throw IoError("cannot write " + (output_dir / "synth_config.json").string());
  cfg << to_json(config).dump(2) << '\n';
  return m;
}

}  // namespace patchmil
