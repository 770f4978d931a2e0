#include "radcls/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "radcls/errors.hpp"
#include "radcls/image.hpp"
#include "radcls/rng.hpp"

namespace radcls {

using nlohmann::json;

bool BBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) && w > 0 && h > 0;
}

std::string_view to_string(View v) {
  switch (v) {
    case View::axial: return "axial";
    case View::glenoid: return "glenoid";
    case View::outlet: return "outlet";
    case View::ap: return "ap";
  }
  return "?";
}

std::string_view to_string(Label l) { return l == Label::frct ? "frct" : "no_tear"; }

std::optional<View> parse_view(std::string_view s) {
  for (View v : kAllViews)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

std::optional<Label> parse_label(std::string_view s) {
  if (s == "frct") return Label::frct;
  if (s == "no_tear") return Label::no_tear;
  return std::nullopt;
}

std::filesystem::path Manifest::resolve(const ImageRecord& r) const {
  std::filesystem::path p(r.image_path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> Manifest::subjects() const {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.subject_id);
  return {s.begin(), s.end()};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& s, int line, const char* column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ValueError("manifest line " + std::to_string(line) + ": column " + column + " is not a number: '" +
                     s + "'");
  return v;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  static constexpr std::array<const char*, 8> kColumns = {"subject_id", "view", "label", "image_path",
                                                          "x",          "y",    "w",     "h"};
  Manifest m;
  m.base_dir = base_dir;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest is empty; expected header " + std::string(kManifestHeader));

  const auto header = split_csv_line(line);
  std::array<std::size_t, 8> col{};
  for (std::size_t i = 0; i < kColumns.size(); ++i) {
    auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) { return trim(h) == kColumns[i]; });
    if (it == header.end()) throw FormatError(std::string("manifest header is missing column '") + kColumns[i] + "'");
    col[i] = static_cast<std::size_t>(it - header.begin());
  }

  std::set<std::pair<std::string, View>> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line) == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() < header.size())
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    for (auto& f : fields) f = trim(f);

    ImageRecord r;
    r.line = line_no;
    r.subject_id = fields[col[0]];
    if (r.subject_id.empty()) throw ValueError("manifest line " + std::to_string(line_no) + ": empty subject_id");
    const auto view = parse_view(fields[col[1]]);
    if (!view)
      throw ValueError("manifest line " + std::to_string(line_no) + ": unknown view '" + fields[col[1]] +
                       "' (expected axial, glenoid, outlet or ap)");
    r.view = *view;
    const auto label = parse_label(fields[col[2]]);
    if (!label)
      throw ValueError("manifest line " + std::to_string(line_no) + ": unknown label '" + fields[col[2]] +
                       "' (expected frct or no_tear)");
    r.label = *label;
    r.image_path = fields[col[3]];

    int filled = 0;
    for (int i = 4; i < 8; ++i) filled += fields[col[i]].empty() ? 0 : 1;
    if (filled == 4) {
      BBox b{parse_number(fields[col[4]], line_no, "x"), parse_number(fields[col[5]], line_no, "y"),
             parse_number(fields[col[6]], line_no, "w"), parse_number(fields[col[7]], line_no, "h")};
      if (!b.valid())
        throw ValueError("manifest line " + std::to_string(line_no) + ": box width and height must be positive");
      r.roi_box = b;
    } else if (filled != 0) {
      throw ValueError("manifest line " + std::to_string(line_no) + ": box columns must be all filled or all empty");
    }

    if (!seen.emplace(r.subject_id, r.view).second)
      throw DuplicateError("manifest line " + std::to_string(line_no) + ": duplicate (subject, view) pair (" +
                           r.subject_id + ", " + std::string(to_string(r.view)) + ")");
    m.records.push_back(std::move(r));
  }
  return m;
}

Manifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

std::string format_manifest(const Manifest& m) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : m.records) {
    out += r.subject_id + "," + std::string(to_string(r.view)) + "," + std::string(to_string(r.label)) + "," +
           r.image_path + ",";
    if (r.roi_box)
      out += format_number(r.roi_box->x) + "," + format_number(r.roi_box->y) + "," + format_number(r.roi_box->w) +
             "," + format_number(r.roi_box->h);
    else
      out += ",,,";
    out += "\n";
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << format_manifest(m);
}

std::vector<Violation> validate_dataset(const Manifest& m, ValidationOptions opts) {
  std::vector<Violation> report;
  std::map<std::string, std::vector<const ImageRecord*>> by_subject;
  std::set<std::pair<std::string, View>> seen;
  for (const auto& r : m.records) {
    by_subject[r.subject_id].push_back(&r);
    if (!seen.emplace(r.subject_id, r.view).second)
      report.push_back({"duplicate_view", r.line,
                        "subject " + r.subject_id + " has more than one " + std::string(to_string(r.view)) + " image"});
    if (r.roi_box && !r.roi_box->valid())
      report.push_back({"invalid_box", r.line, "roi box of " + r.image_path + " has non-positive extent"});
  }
  for (const auto& [subject, recs] : by_subject) {
    if (recs.size() > 4)
      report.push_back({"too_many_views", recs.front()->line,
                        "subject " + subject + " has " + std::to_string(recs.size()) + " records (max 4)"});
    for (const auto* r : recs) {
      if (r->label != recs.front()->label) {
        report.push_back({"label_conflict", r->line,
                          "subject " + subject + " is labeled both " + std::string(to_string(recs.front()->label)) +
                              " and " + std::string(to_string(r->label))});
        break;
      }
    }
  }
  if (opts.check_files) {
    for (const auto& r : m.records) {
      const auto path = m.resolve(r);
      if (!std::filesystem::exists(path)) {
        report.push_back({"missing_file", r.line, "image not found: " + path.string()});
        continue;
      }
      try {
        const GrayImage img = read_png_gray(path);
        if (img.empty()) report.push_back({"decode_error", r.line, "image is empty: " + path.string()});
      } catch (const Error& e) {
        report.push_back({"decode_error", r.line, e.what()});
      }
    }
  }
  return report;
}

std::string violations_to_json(const std::vector<Violation>& v) {
  json arr = json::array();
  for (const auto& x : v) arr.push_back({{"code", x.code}, {"row", x.row}, {"message", x.message}});
  return arr.dump(2);
}

std::string violations_to_text(const std::vector<Violation>& v) {
  std::string out;
  for (const auto& x : v) out += "row " + std::to_string(x.row) + " [" + x.code + "] " + x.message + "\n";
  return out;
}

std::map<std::string, Label> subject_labels(const Manifest& m) {
  std::map<std::string, Label> labels;
  for (const auto& r : m.records) labels.emplace(r.subject_id, r.label);
  return labels;
}

FoldAssignment split_folds(const Manifest& m, int k, std::uint64_t seed) {
  const auto labels = subject_labels(m);
  if (k < 2) throw ArgumentError("split_folds: k must be at least 2, got " + std::to_string(k));
  if (static_cast<std::size_t>(k) > labels.size())
    throw ArgumentError("split_folds: k=" + std::to_string(k) + " exceeds the number of subjects (" +
                        std::to_string(labels.size()) + ")");

  // std::map iteration gives subjects in sorted order, so the split does not
  // depend on manifest row order.
  std::vector<std::string> frct, no_tear;
  for (const auto& [s, l] : labels) (l == Label::frct ? frct : no_tear).push_back(s);

  FoldAssignment f;
  f.k = k;
  f.seed = seed;
  int next = 0;
  std::uint64_t stream = 0;
  for (auto* cls : {&frct, &no_tear}) {
    Rng rng(derive_seed(seed, {stream++}));
    rng.shuffle(cls->begin(), cls->end());
    for (const auto& s : *cls) {
      f.fold_of_subject[s] = next;
      next = (next + 1) % k;
    }
  }
  return f;
}

std::vector<std::string> FoldAssignment::test_subjects(int fold) const {
  std::vector<std::string> out;
  for (const auto& [s, i] : fold_of_subject)
    if (i == fold) out.push_back(s);
  return out;
}

std::vector<std::string> FoldAssignment::train_subjects(int fold) const {
  std::vector<std::string> out;
  for (const auto& [s, i] : fold_of_subject)
    if (i != fold) out.push_back(s);
  return out;
}

bool FoldAssignment::in_test(const std::string& subject, int fold) const {
  auto it = fold_of_subject.find(subject);
  return it != fold_of_subject.end() && it->second == fold;
}

std::string folds_to_json(const FoldAssignment& f) {
  json j;
  j["k"] = f.k;
  j["seed"] = f.seed;
  j["folds"] = f.fold_of_subject;
  return j.dump(2) + "\n";
}

FoldAssignment folds_from_json(const std::string& text) {
  FoldAssignment f;
  try {
    const json j = json::parse(text);
    f.k = j.at("k").get<int>();
    f.seed = j.at("seed").get<std::uint64_t>();
    f.fold_of_subject = j.at("folds").get<std::map<std::string, int>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("fold file: ") + e.what());
  }
  if (f.k < 2) throw FormatError("fold file: k must be at least 2");
  for (const auto& [s, i] : f.fold_of_subject)
    if (i < 0 || i >= f.k) throw FormatError("fold file: subject " + s + " has out-of-range fold");
  return f;
}

FoldAssignment read_folds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fold file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return folds_from_json(ss.str());
}

void write_folds(const std::filesystem::path& path, const FoldAssignment& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write fold file " + path.string());
  out << folds_to_json(f);
}

}  // namespace radcls
