#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fol/mesh.hpp"

namespace fol {

/// Named nodal columns. node_id, x and y are implicit in the mesh and are
/// written before the data columns.
struct FieldTable {
  std::vector<std::string> names;
  Eigen::MatrixXd values;  // num_nodes x names.size()
  std::vector<std::string> units;  // optional, same length as names

  int column(const std::string& name) const;  // -1 when absent
};

/// Doubles are written in shortest round-trip form, so read_field_csv gives
/// back the same bits. A leading '#' line carries units when present.
void write_field_csv(const Mesh& mesh, const FieldTable& t, std::ostream& os);
void write_field_csv(const Mesh& mesh, const FieldTable& t, const std::filesystem::path& path);

struct FieldCsv {
  std::vector<int> node_id;
  Eigen::MatrixX2d xy;
  FieldTable table;
};

FieldCsv read_field_csv(std::istream& is);
FieldCsv read_field_csv(const std::filesystem::path& path);

/// Mesh only: node_id,x,y.
void write_mesh_csv(const Mesh& mesh, std::ostream& os);

/// Legacy ASCII VTK, unstructured quads with point-data scalars.
void write_field_vtk(const Mesh& mesh, const FieldTable& t, std::ostream& os,
                     const std::string& title = "fol");
void write_field_vtk(const Mesh& mesh, const FieldTable& t, const std::filesystem::path& path,
                     const std::string& title = "fol");

struct FieldVtk {
  Eigen::MatrixX2d xy;
  std::vector<std::array<int, 4>> cells;
  FieldTable table;
};

/// Reads files written by write_field_vtk.
FieldVtk read_field_vtk(std::istream& is);
FieldVtk read_field_vtk(const std::filesystem::path& path);

/// Plain numeric table with a header row ('#' lines skipped); used for
/// corpora and histories.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv_table(std::istream& is);
CsvTable read_csv_table(const std::filesystem::path& path);

/// Design corpus: one input vector per row, `sample_id,c_0,...`. A '#'
/// line records the kind (fourier, ellipse, bc).
void write_corpus_csv(const std::vector<Eigen::VectorXd>& inputs, const std::string& kind,
                      std::ostream& os);
void write_corpus_csv(const std::vector<Eigen::VectorXd>& inputs, const std::string& kind,
                      const std::filesystem::path& path);

struct Corpus {
  std::string kind;
  std::vector<Eigen::VectorXd> inputs;
};

Corpus read_corpus_csv(const std::filesystem::path& path);
Corpus read_corpus_csv(std::istream& is);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

}  // namespace fol
