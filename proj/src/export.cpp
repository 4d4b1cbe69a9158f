#include "jdlab/export.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "jdlab/error.hpp"
#include "jdlab/report.hpp"

namespace jdlab {

static_assert(std::endian::native == std::endian::little, "binary export assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'J', 'D', 'L', 'G', 'R', 'I', 'D', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(ErrorCode::ConfigError, "truncated matrix file");
  return v;
}

double parse_exact(const std::string& token) {
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    if (token == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (token == "inf") return std::numeric_limits<double>::infinity();
    if (token == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error(ErrorCode::ConfigError, "bad number '" + token + "' in triplet file");
  }
  return v;
}

}  // namespace

MatrixExport make_export(const Mesh& mesh, const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != static_cast<Eigen::Index>(mesh.size()) || matrix.cols() != matrix.rows())
    throw Error(ErrorCode::InvalidArgument, "matrix does not match the mesh");
  return {mesh.h, mesh.origin, mesh.center, mesh.bound_radius, mesh.keys, matrix};
}

void write_binary(std::ostream& out, const MatrixExport& m) {
  const std::uint64_t n = m.keys.size();
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, 3);
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, n);
  put<double>(out, m.h);
  for (int i = 0; i < 3; ++i) put<double>(out, m.origin(i));
  for (int i = 0; i < 3; ++i) put<double>(out, m.center(i));
  put<double>(out, m.radius);
  for (const Key& k : m.keys)
    for (int v : k) put<std::int32_t>(out, v);
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = 0; j < n; ++j) put<double>(out, m.matrix(static_cast<int>(i), static_cast<int>(j)));
}

MatrixExport read_binary(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error(ErrorCode::ConfigError, "not a grid matrix file");
  if (get<std::uint32_t>(in) != 3) throw Error(ErrorCode::ConfigError, "unsupported dimension in matrix file");
  get<std::uint32_t>(in);
  const auto n = get<std::uint64_t>(in);
  MatrixExport m;
  m.h = get<double>(in);
  m.origin = Vec(3);
  m.center = Vec(3);
  for (int i = 0; i < 3; ++i) m.origin(i) = get<double>(in);
  for (int i = 0; i < 3; ++i) m.center(i) = get<double>(in);
  m.radius = get<double>(in);
  m.keys.resize(n);
  for (auto& k : m.keys)
    for (int& v : k) v = get<std::int32_t>(in);
  m.matrix.resize(static_cast<int>(n), static_cast<int>(n));
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = 0; j < n; ++j) m.matrix(static_cast<int>(i), static_cast<int>(j)) = get<double>(in);
  return m;
}

void write_triplets(std::ostream& out, const MatrixExport& m, double threshold) {
  out << "# jdlab grid matrix\n";
  out << "# n " << m.keys.size() << "\n";
  out << "# h " << format_double(m.h) << "\n";
  out << "# origin " << format_double(m.origin(0)) << ' ' << format_double(m.origin(1)) << ' '
      << format_double(m.origin(2)) << "\n";
  out << "# center " << format_double(m.center(0)) << ' ' << format_double(m.center(1)) << ' '
      << format_double(m.center(2)) << "\n";
  out << "# radius " << format_double(m.radius) << "\n";
  for (std::size_t i = 0; i < m.keys.size(); ++i)
    out << "# key " << i << ' ' << m.keys[i][0] << ' ' << m.keys[i][1] << ' ' << m.keys[i][2] << "\n";
  const int n = static_cast<int>(m.keys.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (std::abs(m.matrix(i, j)) > threshold || (threshold == 0.0 && m.matrix(i, j) != 0.0))
        out << i << ' ' << j << ' ' << format_double(m.matrix(i, j)) << '\n';
}

MatrixExport read_triplets(std::istream& in) {
  MatrixExport m;
  m.origin = Vec::Zero(3);
  m.center = Vec::Zero(3);
  std::string line;
  std::size_t n = 0;
  bool have_n = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, tag;
      ls >> hash >> tag;
      std::string a, b, c;
      if (tag == "n") {
        ls >> n;
        have_n = true;
        m.keys.assign(n, Key{});
        m.matrix = Eigen::MatrixXd::Zero(static_cast<int>(n), static_cast<int>(n));
      } else if (tag == "h") {
        ls >> a;
        m.h = parse_exact(a);
      } else if (tag == "radius") {
        ls >> a;
        m.radius = parse_exact(a);
      } else if (tag == "origin" || tag == "center") {
        ls >> a >> b >> c;
        Vec& v = tag == "origin" ? m.origin : m.center;
        v << parse_exact(a), parse_exact(b), parse_exact(c);
      } else if (tag == "key") {
        std::size_t i = 0;
        Key k{};
        ls >> i >> k[0] >> k[1] >> k[2];
        if (!ls || !have_n || i >= n) throw Error(ErrorCode::ConfigError, "bad key line in triplet file");
        m.keys[i] = k;
      }
      continue;
    }
    if (!have_n) throw Error(ErrorCode::ConfigError, "triplet before the size header");
    std::size_t i = 0, j = 0;
    std::string v;
    ls >> i >> j >> v;
    if (!ls || i >= n || j >= n) throw Error(ErrorCode::ConfigError, "bad triplet line '" + line + "'");
    m.matrix(static_cast<int>(i), static_cast<int>(j)) = parse_exact(v);
  }
  if (!have_n) throw Error(ErrorCode::ConfigError, "triplet file has no size header");
  return m;
}

void save_binary(const std::string& path, const MatrixExport& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write '" + path + "'");
  write_binary(out, m);
  if (!out) throw Error(ErrorCode::ConfigError, "write failed for '" + path + "'");
}

MatrixExport load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read '" + path + "'");
  return read_binary(in);
}

}  // namespace jdlab
