#include "obfloc/dataio.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "obfloc/error.hpp"

namespace obfloc {

// ---- quaternions -----------------------------------------------------------

Quaternion quaternion_from_rotation(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z()};
}

Mat3 rotation_from_quaternion(const Quaternion& q) {
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

// ---- scene database --------------------------------------------------------

SceneRecord SceneRecord::make(std::string id, const Intrinsics& K, const CameraPose& pose) {
  SceneRecord r;
  r.id = std::move(id);
  r.K = K;
  r.q = quaternion_from_rotation(pose.R);
  r.pose = {rotation_from_quaternion(r.q), pose.t};
  return r;
}

SceneDatabase::SceneDatabase(std::vector<SceneRecord> records) {
  for (auto& r : records) add(std::move(r));
}

void SceneDatabase::add(SceneRecord record) {
  if (index_.count(record.id)) throw Error(ErrorCode::InvalidArgument, "duplicate image id '" + record.id + "'");
  index_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
}

const SceneRecord* SceneDatabase::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

const SceneRecord& SceneDatabase::at(std::string_view id) const {
  const SceneRecord* r = find(id);
  if (!r) throw Error(ErrorCode::IdMismatch, "unknown image id '" + std::string(id) + "'");
  return *r;
}

void SceneDatabase::attach_descriptors(const std::vector<GlobalDescriptor>& descriptors) {
  for (const auto& d : descriptors) {
    const auto it = index_.find(d.id);
    if (it != index_.end()) records_[it->second].descriptor = d;
  }
}

IntrinsicsLookup intrinsics_lookup(std::initializer_list<const SceneDatabase*> scenes) {
  IntrinsicsLookup out;
  for (const SceneDatabase* s : scenes)
    for (const auto& r : s->records()) out.emplace(r.id, r.K);
  return out;
}

bool on_pixel_area(const Intrinsics& K, const Point2& u) {
  return u.x() >= -0.5 && u.y() >= -0.5 && u.x() <= K.width - 0.5 && u.y() <= K.height - 0.5;
}

// ---- text parsing helpers --------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Token {
  std::string_view text;
  int column = 0;  // 1-based
};

[[noreturn]] void parse_fail(const std::string& source, int line, int column, const std::string& msg) {
  throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg);
}

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

// Splits on '\n'; a trailing newline does not create an empty last line.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    std::string_view l = text.substr(pos, nl - pos);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    lines.push_back(l);
    pos = nl + 1;
  }
  return lines;
}

class LineParser {
 public:
  LineParser(const std::string& source, int line) : source_(source), line_(line) {}

  double real(const Token& t, const char* what) const {
    double v = 0;
    const auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || p != t.text.data() + t.text.size() || !std::isfinite(v))
      fail(t, std::string("expected a finite number for ") + what + ", got '" + std::string(t.text) + "'");
    return v;
  }

  template <class Int>
  Int integer(const Token& t, const char* what) const {
    Int v = 0;
    const auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || p != t.text.data() + t.text.size())
      fail(t, std::string("expected an integer for ") + what + ", got '" + std::string(t.text) + "'");
    return v;
  }

  [[noreturn]] void fail(const Token& t, const std::string& msg) const { parse_fail(source_, line_, t.column, msg); }
  [[noreturn]] void fail(int column, const std::string& msg) const { parse_fail(source_, line_, column, msg); }

 private:
  const std::string& source_;
  int line_;
};

void check_header(const std::vector<std::string_view>& lines, std::string_view header, const std::string& source) {
  if (lines.empty() || lines[0] != header)
    parse_fail(source, 1, 1, "expected header '" + std::string(header) + "'");
}

void check_token_text(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos)
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " '" + s + "' is empty or contains whitespace");
}

}  // namespace

// ---- files -----------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::MissingFile, "write failed for '" + path.string() + "'");
}

// ---- scene -----------------------------------------------------------------

std::string format_scene(const SceneDatabase& db) {
  std::string out = "SCENE v1\n";
  for (const auto& r : db.records()) {
    check_token_text(r.id, "image id");
    out += r.id;
    for (double v : {r.K.fx, r.K.fy, r.K.cx, r.K.cy}) out += " " + fmt(v);
    out += " " + std::to_string(r.K.width) + " " + std::to_string(r.K.height);
    for (double v : r.q) out += " " + fmt(v);
    for (int i = 0; i < 3; ++i) out += " " + fmt(r.pose.t(i));
    if (r.raster_path || r.labelmap_path) {
      if (r.raster_path) check_token_text(*r.raster_path, "raster path");
      out += " " + r.raster_path.value_or("-");
    }
    if (r.labelmap_path) {
      check_token_text(*r.labelmap_path, "label map path");
      out += " " + *r.labelmap_path;
    }
    out += "\n";
  }
  return out;
}

SceneDatabase parse_scene(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  check_header(lines, "SCENE v1", source);
  SceneDatabase db;
  std::set<std::string> seen;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const int line_no = static_cast<int>(ln) + 1;
    const LineParser p(source, line_no);
    const auto tok = tokenize(lines[ln]);
    if (tok.size() < 14 || tok.size() > 16)
      p.fail(1, "expected 14 to 16 fields, got " + std::to_string(tok.size()));
    SceneRecord r;
    r.id = std::string(tok[0].text);
    if (!seen.insert(r.id).second) p.fail(tok[0], "duplicate image id '" + r.id + "'");
    r.K.fx = p.real(tok[1], "fx");
    r.K.fy = p.real(tok[2], "fy");
    r.K.cx = p.real(tok[3], "cx");
    r.K.cy = p.real(tok[4], "cy");
    r.K.width = p.integer<int>(tok[5], "width");
    r.K.height = p.integer<int>(tok[6], "height");
    if (!r.K.valid()) p.fail(tok[1], "invalid intrinsics for '" + r.id + "'");
    double norm2 = 0;
    for (int i = 0; i < 4; ++i) {
      r.q[i] = p.real(tok[7 + i], "quaternion");
      norm2 += r.q[i] * r.q[i];
    }
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6) p.fail(tok[7], "quaternion is not unit length");
    r.pose.R = rotation_from_quaternion(r.q);
    for (int i = 0; i < 3; ++i) r.pose.t(i) = p.real(tok[11 + i], "translation");
    if (tok.size() >= 15 && tok[14].text != "-") r.raster_path = std::string(tok[14].text);
    if (tok.size() == 16) r.labelmap_path = std::string(tok[15].text);
    db.add(std::move(r));
  }
  return db;
}

SceneDatabase read_scene(const fs::path& path) { return parse_scene(read_file(path), path.string()); }

void write_scene(const SceneDatabase& db, const fs::path& path) { write_file(path, format_scene(db)); }

// ---- matches ---------------------------------------------------------------

std::string format_matches(const std::vector<MatchSet>& sets) {
  std::string out = "MATCHES v1\n";
  for (const auto& s : sets) {
    check_token_text(s.id_a, "image id");
    check_token_text(s.id_b, "image id");
    out += "PAIR " + s.id_a + " " + s.id_b + " " + std::to_string(s.matches.size()) + "\n";
    for (const auto& m : s.matches)
      out += fmt(m.a.x()) + " " + fmt(m.a.y()) + " " + fmt(m.b.x()) + " " + fmt(m.b.y()) + " " + fmt(m.confidence) + "\n";
  }
  return out;
}

std::vector<MatchSet> parse_matches(std::string_view text, const IntrinsicsLookup* sizes, const std::string& source) {
  const auto lines = split_lines(text);
  std::vector<MatchSet> out;
  if (lines.empty()) return out;  // empty file -> empty list
  check_header(lines, "MATCHES v1", source);
  std::size_t ln = 1;
  while (ln < lines.size()) {
    const int line_no = static_cast<int>(ln) + 1;
    const LineParser p(source, line_no);
    const auto tok = tokenize(lines[ln]);
    if (tok.size() != 4 || tok[0].text != "PAIR") p.fail(1, "expected 'PAIR id_a id_b n'");
    MatchSet set;
    set.id_a = std::string(tok[1].text);
    set.id_b = std::string(tok[2].text);
    const auto n = p.integer<std::size_t>(tok[3], "match count");
    const std::string record = "pair " + set.id_a + "/" + set.id_b;
    if (n > lines.size() - ln - 1)
      p.fail(tok[3], record + " claims " + std::to_string(n) + " matches but only " +
                         std::to_string(lines.size() - ln - 1) + " lines follow");
    const Intrinsics* Ka = nullptr;
    const Intrinsics* Kb = nullptr;
    if (sizes) {
      const auto ia = sizes->find(set.id_a);
      const auto ib = sizes->find(set.id_b);
      if (ia == sizes->end()) p.fail(tok[1], record + ": unknown image id '" + set.id_a + "'");
      if (ib == sizes->end()) p.fail(tok[2], record + ": unknown image id '" + set.id_b + "'");
      Ka = &ia->second;
      Kb = &ib->second;
    }
    set.matches.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t mln = ln + 1 + k;
      const LineParser mp(source, static_cast<int>(mln) + 1);
      const auto mt = tokenize(lines[mln]);
      if (mt.size() != 5) mp.fail(1, record + " match " + std::to_string(k) + ": expected 5 fields");
      Match m;
      m.a = Point2(mp.real(mt[0], "x_a"), mp.real(mt[1], "y_a"));
      m.b = Point2(mp.real(mt[2], "x_b"), mp.real(mt[3], "y_b"));
      m.confidence = mp.real(mt[4], "confidence");
      if (m.confidence < 0 || m.confidence > 1)
        mp.fail(mt[4], record + " match " + std::to_string(k) + ": confidence outside [0, 1]");
      if (Ka && !on_pixel_area(*Ka, m.a))
        mp.fail(mt[0], record + " match " + std::to_string(k) + ": query coordinate out of bounds");
      if (Kb && !on_pixel_area(*Kb, m.b))
        mp.fail(mt[2], record + " match " + std::to_string(k) + ": reference coordinate out of bounds");
      set.matches.push_back(m);
    }
    out.push_back(std::move(set));
    ln += n + 1;
  }
  return out;
}

std::vector<MatchSet> read_matches(const fs::path& path, const IntrinsicsLookup* sizes) {
  return parse_matches(read_file(path), sizes, path.string());
}

void write_matches(const std::vector<MatchSet>& sets, const fs::path& path) { write_file(path, format_matches(sets)); }

// ---- descriptors -----------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

class ByteReader {
 public:
  ByteReader(std::string_view bytes, const std::string& source) : b_(bytes), source_(source) {}
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

  [[noreturn]] void fail(std::size_t at, const std::string& msg) const {
    throw Error(ErrorCode::DecodeError, source_ + ": byte " + std::to_string(at) + ": " + msg);
  }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      fail(pos_, std::string("truncated ") + what + " (need " + std::to_string(n) + " bytes, " +
                     std::to_string(remaining()) + " left)");
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(static_cast<unsigned char>(b_[pos_]) |
                                              (static_cast<unsigned char>(b_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    const auto v = b_.substr(pos_, n);
    pos_ += n;
    return v;
  }

 private:
  std::string_view b_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_descriptors(const std::vector<GlobalDescriptor>& descriptors) {
  const std::size_t dim = descriptors.empty() ? 0 : descriptors.front().values.size();
  std::string out = "GDSC";
  put_u32(out, static_cast<std::uint32_t>(descriptors.size()));
  put_u32(out, static_cast<std::uint32_t>(dim));
  for (const auto& d : descriptors) {
    if (d.values.size() != dim)
      throw Error(ErrorCode::DimensionMismatch, "descriptor '" + d.id + "' has dimension " +
                                                    std::to_string(d.values.size()) + ", expected " + std::to_string(dim));
    if (d.id.empty() || d.id.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "descriptor id length out of range");
    put_u16(out, static_cast<std::uint16_t>(d.id.size()));
    out += d.id;
    for (float f : d.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<GlobalDescriptor> decode_descriptors(std::string_view bytes, std::vector<std::string>* warnings,
                                                 const std::string& source) {
  ByteReader r(bytes, source);
  if (r.bytes(4, "magic") != "GDSC") r.fail(0, "bad magic, expected 'GDSC'");
  const std::uint32_t count = r.u32("count");
  const std::size_t dim_at = r.offset();
  const std::uint32_t dim = r.u32("dimension");
  if (count > 0 && dim == 0) r.fail(dim_at, "zero dimension with nonzero count");
  // Each record needs at least 2 + 1 + 4*dim bytes; check before allocating.
  const std::uint64_t min_record = 3 + 4ull * dim;
  if (count > 0 && static_cast<std::uint64_t>(count) * min_record > r.remaining())
    r.fail(4, "count " + std::to_string(count) + " x dimension " + std::to_string(dim) + " exceeds file size");
  std::vector<GlobalDescriptor> out;
  out.reserve(count);
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t rec_at = r.offset();
    const std::uint16_t len = r.u16("id length");
    if (len == 0) r.fail(rec_at, "record " + std::to_string(i) + " has an empty id");
    GlobalDescriptor d;
    d.id = std::string(r.bytes(len, "id"));
    if (!seen.insert(d.id).second) r.fail(rec_at, "duplicate descriptor id '" + d.id + "'");
    const std::size_t values_at = r.offset();
    const std::string_view raw = r.bytes(4ull * dim, "descriptor values");
    d.values.resize(dim);
    double norm2 = 0;
    for (std::uint32_t k = 0; k < dim; ++k) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * k + b])) << (8 * b);
      const float f = std::bit_cast<float>(u);
      if (!std::isfinite(f)) r.fail(values_at + 4 * k, "non-finite component in '" + d.id + "'");
      d.values[k] = f;
      norm2 += static_cast<double>(f) * f;
    }
    const double norm = std::sqrt(norm2);
    if (norm == 0) r.fail(values_at, "zero-norm descriptor '" + d.id + "'");
    if (std::abs(norm - 1.0) > kDescriptorNormTolerance) {
      for (float& f : d.values) f = static_cast<float>(f / norm);
      if (warnings && std::abs(norm - 1.0) > kDescriptorNormWarning)
        warnings->push_back(source + ": descriptor '" + d.id + "' had norm " + fmt(norm) + ", normalized");
    }
    out.push_back(std::move(d));
  }
  if (r.remaining() != 0) r.fail(r.offset(), std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

std::vector<GlobalDescriptor> read_descriptors(const fs::path& path, std::vector<std::string>* warnings) {
  return decode_descriptors(read_file(path), warnings, path.string());
}

void write_descriptors(const std::vector<GlobalDescriptor>& descriptors, const fs::path& path) {
  write_file(path, encode_descriptors(descriptors));
}

// ---- palette ---------------------------------------------------------------

Palette parse_palette(std::string_view text, const std::string& source) {
  Palette out;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const LineParser p(source, static_cast<int>(ln) + 1);
    const auto tok = tokenize(lines[ln]);
    if (tok.empty() || tok[0].text.front() == '#') continue;
    if (tok.size() != 4) p.fail(1, "expected 'label r g b'");
    const auto label = p.integer<std::int32_t>(tok[0], "label");
    Rgb c;
    for (int i = 0; i < 3; ++i) {
      const int v = p.integer<int>(tok[1 + i], "color component");
      if (v < 0 || v > 255) p.fail(tok[1 + i], "color component outside [0, 255]");
      c[i] = static_cast<std::uint8_t>(v);
    }
    if (!out.emplace(label, c).second) p.fail(tok[0], "duplicate palette label " + std::to_string(label));
  }
  return out;
}

Palette read_palette(const fs::path& path) { return parse_palette(read_file(path), path.string()); }

// ---- localize results ------------------------------------------------------

std::string format_localize_results(const std::vector<QueryResult>& results) {
  std::string out = std::string(kLocalizeHeader) + "\n";
  for (const auto& qr : results) {
    check_token_text(qr.query_id, "query id");
    if (qr.query_id.find(',') != std::string::npos) throw Error(ErrorCode::InvalidArgument, "query id contains a comma");
    out += qr.query_id;
    if (qr.result.pose) {
      const Quaternion q = quaternion_from_rotation(qr.result.pose->R);
      for (double v : q) out += "," + fmt(v);
      for (int i = 0; i < 3; ++i) out += "," + fmt(qr.result.pose->t(i));
    } else {
      out += ",,,,,,,";
    }
    out += "," + std::to_string(qr.result.num_inliers) + "," + std::to_string(qr.result.num_correspondences) + "," +
           std::to_string(qr.result.iterations_run) + "," + to_string(qr.result.status) + "\n";
  }
  return out;
}

std::vector<QueryResult> parse_localize_results(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  check_header(lines, kLocalizeHeader, source);
  std::vector<QueryResult> out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const LineParser p(source, static_cast<int>(ln) + 1);
    std::vector<Token> f;
    std::size_t start = 0;
    const std::string_view line = lines[ln];
    for (;;) {
      const std::size_t comma = line.find(',', start);
      f.push_back({line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start),
                   static_cast<int>(start) + 1});
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (f.size() != 12) p.fail(1, "expected 12 comma-separated fields, got " + std::to_string(f.size()));
    QueryResult qr;
    qr.query_id = std::string(f[0].text);
    if (qr.query_id.empty()) p.fail(f[0], "empty query id");
    bool any = false, all = true;
    for (int i = 1; i <= 7; ++i) {
      if (f[i].text.empty()) all = false;
      else any = true;
    }
    if (any && !all) p.fail(f[1], "pose fields must be all present or all empty");
    if (any) {
      Quaternion q;
      for (int i = 0; i < 4; ++i) q[i] = p.real(f[1 + i], "quaternion");
      const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
      if (std::abs(n - 1.0) > 1e-6) p.fail(f[1], "quaternion is not unit length");
      CameraPose pose;
      pose.R = rotation_from_quaternion(q);
      for (int i = 0; i < 3; ++i) pose.t(i) = p.real(f[5 + i], "translation");
      qr.result.pose = pose;
    }
    qr.result.num_inliers = p.integer<int>(f[8], "num_inliers");
    qr.result.num_correspondences = p.integer<int>(f[9], "num_correspondences");
    qr.result.iterations_run = p.integer<int>(f[10], "iterations");
    const std::string_view st = f[11].text;
    if (st == "ok") qr.result.status = LocalizationStatus::Success;
    else if (st == "failure") qr.result.status = LocalizationStatus::Failure;
    else if (st == "insufficient_references") qr.result.status = LocalizationStatus::InsufficientReferences;
    else p.fail(f[11], "unknown status '" + std::string(st) + "'");
    if ((qr.result.status == LocalizationStatus::Success) != any)
      p.fail(f[11], "status '" + std::string(st) + "' inconsistent with pose fields");
    out.push_back(std::move(qr));
  }
  return out;
}

std::vector<QueryResult> read_localize_results(const fs::path& path) {
  return parse_localize_results(read_file(path), path.string());
}

void write_localize_results(const std::vector<QueryResult>& results, const fs::path& path) {
  write_file(path, format_localize_results(results));
}

}  // namespace obfloc
