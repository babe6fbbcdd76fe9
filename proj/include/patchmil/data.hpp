#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchmil/annotation.hpp"
#include "patchmil/error.hpp"
#include "patchmil/mil_head.hpp"

namespace patchmil {

enum class Split { unassigned, train, val };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ImageRecord {
  std::string image_path;       // as written in the manifest
  Label label = Label::negative;
  Split split = Split::unassigned;
  std::string annotation_path;  // empty when the image is unannotated
  std::string dataset_tag;

  bool annotated() const { return !annotation_path.empty(); }
};

struct Manifest {
  std::vector<ImageRecord> records;
  std::string provenance;
  std::uint64_t seed = 0;
  /// Directory that relative paths in the records are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& p) const;
  std::vector<ImageRecord> select(Split s) const;
};

/// Reads the manifest CSV (header `image_path,label,split,annotation_path,dataset_tag`).
/// Checks label domain, split names, unique image paths, image existence
/// (every missing file listed in one error) and annotation validity. When
/// `standardized_size` > 0, masks must have that extent and boxes must lie
/// inside it. Throws IoError / InvalidArgument naming the row and field.
Manifest load_manifest(const std::filesystem::path& path, int standardized_size = 0);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Stratified, seeded assignment of train/val. Each class contributes
/// round(n_class * val_fraction) records to val, clamped to [1, n_class - 1].
/// Throws when a class has fewer than 2 records.
Manifest split_train_val(Manifest manifest, double val_fraction, std::uint64_t seed);

// ---- annotation access ------------------------------------------------

/// Thrown when annotation data is requested while a poison guard is active.
class AnnotationPoisoned : public Error {
 public:
  using Error::Error;
};

/// While any instance is alive, load_annotation throws. The trainer holds
/// one for its whole run so weak supervision is enforced, not assumed.
class AnnotationPoison {
 public:
  AnnotationPoison();
  ~AnnotationPoison();
  AnnotationPoison(const AnnotationPoison&) = delete;
  AnnotationPoison& operator=(const AnnotationPoison&) = delete;

  static bool active();
};

/// Number of successful annotation loads in this process.
std::size_t annotation_read_count();

/// Loads the record's mask (.png/.pgm) or box list (.txt/.csv, rows
/// `x0,y0,x1,y1`) for an image of the given standardized extent.
Annotation load_annotation(const Manifest& manifest, const ImageRecord& record, int height, int width);

std::vector<Box> read_box_file(const std::filesystem::path& path);

// ---- synthetic data -----------------------------------------------------

struct SyntheticConfig {
  int count = 200;
  double positive_fraction = 0.5;
  int image_size = 256;
  double anomaly_radius_lo = 10.0;
  double anomaly_radius_hi = 18.0;
  double contrast_lo = 0.10;  // blob peak as a fraction of the background range
  double contrast_hi = 0.20;
  double texture_sigma = 1.5;       // px, fine texture correlation length
  double texture_amplitude = 0.015; // std of the fine texture
  double coarse_sigma = 64.0;       // px, slow illumination drift
  double coarse_amplitude = 0.12;   // std of the drift
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const SyntheticConfig& c);

/// A positive synthetic image carries 1-2 blobs; `blob_centers` lets tests
/// pin their placement.
struct BlobSpec {
  double cy = 0, cx = 0, radius = 0, contrast = 0;
};

struct SyntheticImage {
  Image image;
  Image mask;  // 1 inside blobs
  std::vector<BlobSpec> blobs;
};

/// Renders one image. Textured noise background, plus the given blobs.
SyntheticImage render_synthetic(const SyntheticConfig& config, std::uint64_t index, const std::vector<BlobSpec>& blobs);

/// Draws 1-2 blobs fully inside the frame.
std::vector<BlobSpec> draw_blobs(const SyntheticConfig& config, std::uint64_t index);

/// Writes images/, masks/, manifest.csv and synth_config.json under
/// `output_dir` and returns the manifest (splits unassigned).
Manifest generate_synthetic_dataset(const SyntheticConfig& config, const std::filesystem::path& output_dir);

}  // namespace patchmil
