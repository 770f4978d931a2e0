#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "radcls/bbox.hpp"

namespace radcls {

enum class View { axial, glenoid, outlet, ap };
enum class Label { no_tear = 0, frct = 1 };

inline constexpr View kAllViews[] = {View::axial, View::glenoid, View::outlet, View::ap};

std::string_view to_string(View v);
std::string_view to_string(Label l);
std::optional<View> parse_view(std::string_view s);
std::optional<Label> parse_label(std::string_view s);
inline int label_index(Label l) { return static_cast<int>(l); }

struct ImageRecord {
  std::string subject_id;
  View view = View::ap;
  Label label = Label::no_tear;
  std::string image_path;  // as written in the manifest
  std::optional<BBox> roi_box;
  int line = 0;  // 1-based line number in the source file; 0 if built in memory
};

struct Manifest {
  std::vector<ImageRecord> records;
  // Relative image paths resolve against this directory.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ImageRecord& r) const;
  std::vector<std::string> subjects() const;  // sorted, unique
};

inline constexpr const char* kManifestHeader = "subject_id,view,label,image_path,x,y,w,h";

Manifest parse_manifest(const std::filesystem::path& path);
Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {});
void write_manifest(const std::filesystem::path& path, const Manifest& m);
std::string format_manifest(const Manifest& m);

struct Violation {
  std::string code;
  int row = 0;
  std::string message;
};

struct ValidationOptions {
  bool check_files = true;
};

// Empty result means every manifest invariant holds (and, when check_files is
// set, every image exists and decodes as an 8-bit grayscale PNG).
std::vector<Violation> validate_dataset(const Manifest& m, ValidationOptions opts = {});
std::string violations_to_json(const std::vector<Violation>& v);
std::string violations_to_text(const std::vector<Violation>& v);

struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> fold_of_subject;

  std::vector<std::string> test_subjects(int fold) const;
  std::vector<std::string> train_subjects(int fold) const;
  bool in_test(const std::string& subject, int fold) const;
};

// Class-stratified, subject-grouped k-fold split: subjects of each class are
// shuffled with the seed and dealt round-robin, the second class continuing
// where the first stopped so total fold sizes differ by at most one.
FoldAssignment split_folds(const Manifest& m, int k, std::uint64_t seed);

// Subject label taken from the subject's first record.
std::map<std::string, Label> subject_labels(const Manifest& m);

std::string folds_to_json(const FoldAssignment& f);
FoldAssignment folds_from_json(const std::string& text);
FoldAssignment read_folds(const std::filesystem::path& path);
void write_folds(const std::filesystem::path& path, const FoldAssignment& f);

}  // namespace radcls
