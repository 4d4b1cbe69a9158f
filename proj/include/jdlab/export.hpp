#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "jdlab/grid.hpp"

namespace jdlab {

/// A grid matrix together with the lattice description needed to place its
/// rows. Binary layout (little-endian):
///   8 bytes  magic "JDLGRID1"
///   u32      dimension (3)
///   u32      reserved (0)
///   u64      n, number of interior cells
///   f64      spacing h
///   f64 x3   lattice origin
///   f64 x3   bounding-ball center
///   f64      bounding radius
///   i32 x3n  lattice key of each cell (row order)
///   f64 x n*n matrix entries, row-major
struct MatrixExport {
  double h = 0.0;
  Vec origin;
  Vec center;
  double radius = 0.0;
  std::vector<Key> keys;
  Eigen::MatrixXd matrix;
};

MatrixExport make_export(const Mesh& mesh, const Eigen::MatrixXd& matrix);

void write_binary(std::ostream& out, const MatrixExport& m);
/// Throws ConfigError on a bad magic number or a truncated stream.
MatrixExport read_binary(std::istream& in);

/// Text form: '#' header lines with the lattice description, then one
/// "i j value" triplet per entry with |value| > threshold, values printed as
/// shortest round-trip decimals. Entries not listed read back as 0.
void write_triplets(std::ostream& out, const MatrixExport& m, double threshold = 0.0);
MatrixExport read_triplets(std::istream& in);

void save_binary(const std::string& path, const MatrixExport& m);
MatrixExport load_binary(const std::string& path);

}  // namespace jdlab
