#include "aaim/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "aaim/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "AAIM containers assume a little-endian host");

namespace aaim {

namespace {

constexpr char kMagic[4] = {'A', 'A', 'I', 'M'};

class Writer {
 public:
  void magic() { out_.append(kMagic, 4); }
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_complex(cplx v) {
    put(v.real());
    put(v.imag());
  }
  void put_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
      throw InvalidArgument(std::string(what) + " too large for the container");
    }
    put(static_cast<std::uint32_t>(v));
  }
  std::string take() { return std::move(out_); }
  void reserve(std::size_t n) { out_.reserve(n); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void magic() {
    need(4, "magic");
    if (std::memcmp(bytes_.data(), kMagic, 4) != 0) {
      throw FormatError("bad magic at offset 0 (expected \"AAIM\")");
    }
    pos_ = 4;
  }
  void version() {
    const std::size_t at = pos_;
    const auto v = get<std::uint32_t>("version");
    if (v != kFormatVersion) {
      throw FormatError("unsupported format version " + std::to_string(v) +
                        " at offset " + std::to_string(at));
    }
  }
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t dim(const char* what) {
    const std::size_t at = pos_;
    const auto v = get<std::uint32_t>(what);
    if (v == 0) {
      throw FormatError(std::string(what) + " is zero at offset " +
                        std::to_string(at));
    }
    return v;
  }
  cplx get_complex() {
    const double re = get<double>("payload");
    const double im = get<double>("payload");
    return {re, im};
  }
  std::vector<double> frequencies(std::size_t count) {
    expect_payload(count, 8);
    std::vector<double> f(count);
    for (auto& v : f) v = get<double>("frequencies");
    return f;
  }
  /// Checks that `count` items of `size` bytes fit before reading them.
  void expect_payload(std::size_t count, std::size_t size) {
    if (count > (std::numeric_limits<std::size_t>::max() / size)) {
      throw FormatError("payload size overflows at offset " +
                        std::to_string(pos_));
    }
    need(count * size, "payload");
  }
  void finish() {
    if (pos_ != bytes_.size()) {
      throw FormatError("unexpected trailing data at offset " +
                        std::to_string(pos_));
    }
  }
  std::size_t offset() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("truncated " + std::string(what) + " at offset " +
                        std::to_string(pos_) + ": need " + std::to_string(n) +
                        " bytes, " + std::to_string(bytes_.size() - pos_) +
                        " left");
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::size_t checked_product(std::initializer_list<std::size_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) {
      throw FormatError("header dimensions overflow");
    }
    n *= d;
  }
  return n;
}

void write_series(Writer& w, const std::vector<double>& freqs,
                  const std::vector<CMatrix>& mats) {
  for (double f : freqs) w.put(f);
  for (const auto& a : mats) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index c = 0; c < a.cols(); ++c) w.put_complex(a(r, c));
    }
  }
}

std::vector<CMatrix> read_series(Reader& r, std::size_t dim, std::size_t bins) {
  r.expect_payload(checked_product({bins, dim, dim}), 16);
  std::vector<CMatrix> out(bins, CMatrix(static_cast<Eigen::Index>(dim),
                                         static_cast<Eigen::Index>(dim)));
  for (auto& a : out) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = r.get_complex();
    }
  }
  return out;
}

void check_series(const std::vector<double>& freqs,
                  const std::vector<CMatrix>& mats) {
  if (freqs.empty() || freqs.size() != mats.size()) {
    throw InvalidArgument("need one matrix per frequency");
  }
  for (const auto& a : mats) {
    if (a.rows() == 0 || a.rows() != a.cols() || a.rows() != mats[0].rows()) {
      throw InvalidArgument("matrices must be square and of equal size");
    }
  }
}

}  // namespace

std::string encode_blocks(const BlockSamples& blocks) {
  blocks.validate();
  Writer w;
  w.reserve(20 + 8 * blocks.bins() + 16 * blocks.raw().size());
  w.magic();
  w.put(kFormatVersion);
  w.put_u32(blocks.mics(), "microphone count");
  w.put_u32(blocks.blocks(), "block count");
  w.put_u32(blocks.bins(), "frequency count");
  for (double f : blocks.frequencies()) w.put(f);
  for (const auto& v : blocks.raw()) w.put_complex(v);
  return w.take();
}

BlockSamples decode_blocks(const std::string& bytes) {
  Reader r(bytes);
  r.magic();
  r.version();
  const auto m = r.dim("microphone count");
  const auto j = r.dim("block count");
  const auto f = r.dim("frequency count");
  auto freqs = r.frequencies(f);
  r.expect_payload(checked_product({j, m, f}), 16);
  BlockSamples out(std::move(freqs), j, m);
  for (auto& v : out.raw()) v = r.get_complex();
  r.finish();
  try {
    out.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("invalid frequency table at offset 20: ") +
                      e.what());
  }
  return out;
}

std::string encode_matrices(const MatrixSeries& s) {
  check_series(s.frequencies, s.matrices);
  Writer w;
  w.magic();
  w.put(kFormatVersion);
  w.put_u32(static_cast<std::size_t>(s.matrices[0].rows()), "matrix size");
  w.put_u32(s.frequencies.size(), "frequency count");
  write_series(w, s.frequencies, s.matrices);
  return w.take();
}

MatrixSeries decode_matrices(const std::string& bytes) {
  Reader r(bytes);
  r.magic();
  r.version();
  const auto m = r.dim("microphone count");
  const auto f = r.dim("frequency count");
  MatrixSeries s;
  s.frequencies = r.frequencies(f);
  s.matrices = read_series(r, m, f);
  r.finish();
  return s;
}

std::string encode_covariance(const CovarianceSeries& s) {
  check_series(s.frequencies, s.per_block);
  Writer w;
  w.magic();
  w.put(kFormatVersion);
  w.put_u32(static_cast<std::size_t>(s.per_block[0].rows()), "matrix size");
  w.put_u32(s.frequencies.size(), "frequency count");
  w.put(static_cast<std::uint8_t>(s.method));
  write_series(w, s.frequencies, s.per_block);
  return w.take();
}

CovarianceSeries decode_covariance(const std::string& bytes) {
  Reader r(bytes);
  r.magic();
  r.version();
  const auto n = r.dim("covariance size");
  const auto f = r.dim("frequency count");
  const std::size_t tag_at = r.offset();
  const auto tag = r.get<std::uint8_t>("method tag");
  if (tag > 1) {
    throw FormatError("unknown covariance method tag " + std::to_string(tag) +
                      " at offset " + std::to_string(tag_at));
  }
  const auto mics = static_cast<std::size_t>(std::llround(std::sqrt(double(n))));
  if (mics * mics != n) {
    throw FormatError("covariance size " + std::to_string(n) +
                      " at offset 8 is not a square number");
  }
  CovarianceSeries s;
  s.method = static_cast<CovarianceMethod>(tag);
  s.frequencies = r.frequencies(f);
  s.per_block = read_series(r, n, f);
  r.finish();
  return s;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InvalidArgument("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_blocks(const std::filesystem::path& path, const BlockSamples& b) {
  write_file_atomic(path, encode_blocks(b));
}

BlockSamples read_blocks(const std::filesystem::path& path) {
  try {
    return decode_blocks(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_matrices(const std::filesystem::path& path, const MatrixSeries& s) {
  write_file_atomic(path, encode_matrices(s));
}

MatrixSeries read_matrices(const std::filesystem::path& path) {
  try {
    return decode_matrices(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_covariance(const std::filesystem::path& path,
                      const CovarianceSeries& s) {
  write_file_atomic(path, encode_covariance(s));
}

CovarianceSeries read_covariance(const std::filesystem::path& path) {
  try {
    return decode_covariance(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- csv

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void write_source_map_csv(const std::filesystem::path& path,
                          const SourceMap& map, const RVector* damas_q) {
  if (damas_q != nullptr && damas_q->size() != map.values.size()) {
    throw InconsistentInputs("DAMAS solution length does not match the map");
  }
  std::ostringstream out;
  out << "# weighting: " << map.weighting << "\n";
  out << "# mask: " << map.mask << "\n";
  if (map.band) {
    out << "# band_hz: " << fmt(map.band->center_hz) << " "
        << fmt(map.band->lower_hz) << " " << fmt(map.band->upper_hz) << " "
        << map.band->bins << "\n";
  }
  out << "# frequency_hz: " << fmt(map.frequency_hz) << "\n";
  out << "# blocks: " << map.block_count << "\n";
  out << "x,y,z,re_value,im_value,power,power_db";
  if (damas_q) out << ",q";
  out << "\n";
  const RVector db = map.power_db();
  for (std::size_t i = 0; i < map.grid.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const Vec3& p = map.grid.points[i];
    out << fmt(p.x()) << "," << fmt(p.y()) << "," << fmt(p.z()) << ","
        << fmt(map.values[k].real()) << "," << fmt(map.values[k].imag()) << ","
        << fmt(map.powers[k]) << "," << fmt(db[k]);
    if (damas_q) out << "," << fmt((*damas_q)[k]);
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

SourceMap read_source_map_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  SourceMap map;
  std::vector<Vec3> points;
  std::vector<cplx> values;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      if (line[0] == '#') {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = line.substr(2, colon - 2);
        std::string val = line.substr(colon + 1);
        if (!val.empty() && val[0] == ' ') val.erase(0, 1);
        if (key == "weighting") map.weighting = val;
        if (key == "mask") map.mask = val;
        if (key == "frequency_hz") map.frequency_hz = parse_double(val);
        if (key == "blocks") map.block_count = std::stoul(val);
        if (key == "band_hz") {
          std::istringstream bs(val);
          Band b;
          bs >> b.center_hz >> b.lower_hz >> b.upper_hz >> b.bins;
          map.band = b;
        }
        continue;
      }
      if (!header_seen) {
        if (line.rfind("x,y,z,re_value,im_value", 0) != 0) {
          throw FormatError("missing column header");
        }
        header_seen = true;
        continue;
      }
      const auto cols = split(line, ',');
      if (cols.size() < 5) throw FormatError("expected at least 5 columns");
      points.emplace_back(parse_double(cols[0]), parse_double(cols[1]),
                          parse_double(cols[2]));
      values.emplace_back(parse_double(cols[3]), parse_double(cols[4]));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": malformed number");
    }
  }
  if (points.empty()) throw FormatError(path.string() + ": no map rows");
  auto lattice = infer_lattice(points);
  map.grid = lattice ? build_focus_grid(lattice->origin, lattice->dx,
                                        lattice->dy, lattice->nx, lattice->ny)
                     : make_point_grid(points);
  if (lattice) map.grid.points = points;  // keep the file's exact coordinates
  map.values = Eigen::Map<const CVector>(values.data(),
                                         static_cast<Eigen::Index>(values.size()));
  map.powers = map.values.real().cwiseMax(0.0);
  return map;
}

std::optional<Lattice> infer_lattice(const std::vector<Vec3>& points) {
  if (points.empty()) return std::nullopt;
  const Vec3 origin = points.front();
  std::size_t nx = 1;
  while (nx < points.size() &&
         std::abs(points[nx].y() - origin.y()) <= 1e-9 * (1.0 + std::abs(origin.y()))) {
    ++nx;
  }
  if (points.size() % nx != 0) return std::nullopt;
  const std::size_t ny = points.size() / nx;
  const double dx = nx > 1 ? points[1].x() - origin.x() : 1.0;
  const double dy = ny > 1 ? points[nx].y() - origin.y() : 1.0;
  if (!(dx > 0.0) || !(dy > 0.0)) return std::nullopt;
  const double tol = 1e-6 * std::min(dx, dy);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const Vec3 expect =
          origin + Vec3(static_cast<double>(ix) * dx, static_cast<double>(iy) * dy, 0.0);
      if ((points[iy * nx + ix] - expect).norm() > tol) return std::nullopt;
    }
  }
  return Lattice{origin, dx, dy, nx, ny};
}

void write_metric_csv(const std::filesystem::path& path,
                      const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "frequency,metric,value,flags\n";
  for (const auto& r : rows) {
    out << fmt(r.frequency_hz) << "," << r.metric << "," << fmt(r.value) << ","
        << r.flags << "\n";
  }
  write_file_atomic(path, out.str());
}

std::vector<MetricRow> metric_rows(double frequency_hz,
                                   const MetricReport& report) {
  return {
      {frequency_hz, "resolution", report.resolution.literal, ""},
      {frequency_hz, "resolution_connected", report.resolution.connected, ""},
      {frequency_hz, "snr", report.snr.value_db,
       report.snr.no_sidelobe ? "no_sidelobe" : ""},
      {frequency_hz, "spr", report.spr, ""},
  };
}

std::vector<MetricRow> metric_rows(const std::vector<StatsReport>& reports) {
  std::vector<MetricRow> rows;
  for (const auto& r : reports) {
    rows.push_back({r.frequency_hz, "eps_mean", r.eps_mean, ""});
    rows.push_back({r.frequency_hz, "ad_acceptance_rate", r.ad_acceptance_rate, ""});
    rows.push_back({r.frequency_hz, "proper_ratio", r.proper_ratio, ""});
    rows.push_back({r.frequency_hz, "white_noise_dev", r.white_noise_dev, ""});
  }
  return rows;
}

}  // namespace aaim
