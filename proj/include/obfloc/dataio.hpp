#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "obfloc/geometry.hpp"
#include "obfloc/obfuscate.hpp"
#include "obfloc/robust.hpp"

namespace obfloc {

namespace fs = std::filesystem;

// Scalar-first unit quaternion of a world-to-camera rotation.
using Quaternion = std::array<double, 4>;

Quaternion quaternion_from_rotation(const Mat3& R);
Mat3 rotation_from_quaternion(const Quaternion& q);

struct GlobalDescriptor {
  std::string id;
  std::vector<float> values;
};

struct SceneRecord {
  std::string id;
  Intrinsics K;
  CameraPose pose;
  Quaternion q{1, 0, 0, 0};  // serialized form of pose.R
  std::optional<std::string> raster_path;
  std::optional<std::string> labelmap_path;
  std::optional<GlobalDescriptor> descriptor;

  static SceneRecord make(std::string id, const Intrinsics& K, const CameraPose& pose);
};

class SceneDatabase {
 public:
  SceneDatabase() = default;
  explicit SceneDatabase(std::vector<SceneRecord> records);

  // Throws InvalidArgument on a duplicate id.
  void add(SceneRecord record);
  const std::vector<SceneRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const SceneRecord* find(std::string_view id) const;
  const SceneRecord& at(std::string_view id) const;  // throws IdMismatch
  // Attaches descriptors by id; unknown ids are ignored.
  void attach_descriptors(const std::vector<GlobalDescriptor>& descriptors);

 private:
  std::vector<SceneRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Match {
  Point2 a;
  Point2 b;
  double confidence = 1.0;
};

struct MatchSet {
  std::string id_a;  // query side
  std::string id_b;  // reference side
  std::vector<Match> matches;
};

// Image sizes used to bounds-check matches; coordinates must lie on the
// pixel area [-0.5, w - 0.5] x [-0.5, h - 0.5].
using IntrinsicsLookup = std::unordered_map<std::string, Intrinsics>;
IntrinsicsLookup intrinsics_lookup(std::initializer_list<const SceneDatabase*> scenes);
bool on_pixel_area(const Intrinsics& K, const Point2& u);

// ---- scene text ------------------------------------------------------------

std::string format_scene(const SceneDatabase& db);
SceneDatabase parse_scene(std::string_view text, const std::string& source = "<memory>");
SceneDatabase read_scene(const fs::path& path);
void write_scene(const SceneDatabase& db, const fs::path& path);

// ---- matches text ----------------------------------------------------------

std::string format_matches(const std::vector<MatchSet>& sets);
std::vector<MatchSet> parse_matches(std::string_view text, const IntrinsicsLookup* sizes = nullptr,
                                    const std::string& source = "<memory>");
std::vector<MatchSet> read_matches(const fs::path& path, const IntrinsicsLookup* sizes = nullptr);
void write_matches(const std::vector<MatchSet>& sets, const fs::path& path);

// ---- descriptors (binary) --------------------------------------------------

inline constexpr double kDescriptorNormTolerance = 1e-6;
inline constexpr double kDescriptorNormWarning = 1e-3;

std::string encode_descriptors(const std::vector<GlobalDescriptor>& descriptors);
// Descriptors are L2-normalized on decode; a message is appended to
// `warnings` for each one whose norm was off by more than 1e-3.
std::vector<GlobalDescriptor> decode_descriptors(std::string_view bytes, std::vector<std::string>* warnings = nullptr,
                                                 const std::string& source = "<memory>");
std::vector<GlobalDescriptor> read_descriptors(const fs::path& path, std::vector<std::string>* warnings = nullptr);
void write_descriptors(const std::vector<GlobalDescriptor>& descriptors, const fs::path& path);

// ---- images ----------------------------------------------------------------

// 16-bit single-channel PNG; label = pixel value.
LabelMap read_labelmap(const fs::path& path);
LabelMap read_labelmap(const fs::path& path, int expected_width, int expected_height);
void write_labelmap(const LabelMap& labels, const fs::path& path);

// PNG or JPEG (by signature); gray stays 1 channel, everything else becomes RGB.
RasterImage read_raster(const fs::path& path);
void write_png(const RasterImage& img, const fs::path& path);
// Any nonzero pixel of a PNG is masked.
BinaryMask read_mask(const fs::path& path);

// `label r g b` per line.
Palette parse_palette(std::string_view text, const std::string& source = "<memory>");
Palette read_palette(const fs::path& path);

// ---- results ---------------------------------------------------------------

struct QueryResult {
  std::string query_id;
  LocalizationResult result;
};

inline constexpr std::string_view kLocalizeHeader =
    "query_id,qw,qx,qy,qz,tx,ty,tz,num_inliers,num_correspondences,iterations,status";

std::string format_localize_results(const std::vector<QueryResult>& results);
std::vector<QueryResult> parse_localize_results(std::string_view text, const std::string& source = "<memory>");
std::vector<QueryResult> read_localize_results(const fs::path& path);
void write_localize_results(const std::vector<QueryResult>& results, const fs::path& path);

// Whole-file helpers; MissingFile when the path cannot be opened.
std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view bytes);

}  // namespace obfloc
