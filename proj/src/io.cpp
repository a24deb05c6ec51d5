#include "fol/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <iterator>
#include <map>
#include <sstream>

#include "fol/error.hpp"

namespace fol {

namespace {

double to_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || b == e) throw ConfigError(where + ": bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty() && item.back() == '\r') item.pop_back();
    out.push_back(item);
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  return is;
}

void check_table(const Mesh& mesh, const FieldTable& t) {
  if (t.values.rows() != mesh.num_nodes() || t.values.cols() != static_cast<Eigen::Index>(t.names.size()))
    throw ConfigError("field table does not match the mesh");
  if (!t.units.empty() && t.units.size() != t.names.size())
    throw ConfigError("field table units do not match its columns");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

int FieldTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

void write_field_csv(const Mesh& mesh, const FieldTable& t, std::ostream& os) {
  check_table(mesh, t);
  if (!t.units.empty()) {
    os << "# units: x[m] y[m]";
    for (std::size_t i = 0; i < t.names.size(); ++i) os << ' ' << t.names[i] << '[' << t.units[i] << ']';
    os << '\n';
  }
  os << "node_id,x,y";
  for (const auto& n : t.names) os << ',' << n;
  os << '\n';
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const Point2& p = mesh.node(i);
    os << i << ',' << format_double(p.x) << ',' << format_double(p.y);
    for (Eigen::Index c = 0; c < t.values.cols(); ++c) os << ',' << format_double(t.values(i, c));
    os << '\n';
  }
}

void write_field_csv(const Mesh& mesh, const FieldTable& t, const std::filesystem::path& path) {
  auto os = open_out(path);
  write_field_csv(mesh, t, os);
}

CsvTable read_csv_table(std::istream& is) {
  CsvTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    auto cells = split(line, ',');
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw ConfigError("csv line " + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " columns");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(to_double(c, "csv line " + std::to_string(lineno)));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ConfigError("csv: no header row");
  return t;
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_csv_table(is);
}

FieldCsv read_field_csv(std::istream& is) {
  const std::string text{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  std::istringstream body(text);
  CsvTable raw = read_csv_table(body);
  if (raw.header.size() < 3 || raw.header[0] != "node_id" || raw.header[1] != "x" || raw.header[2] != "y")
    throw ConfigError("field csv must start with node_id,x,y");
  FieldCsv f;
  const auto n = static_cast<Eigen::Index>(raw.rows.size());
  const auto m = static_cast<Eigen::Index>(raw.header.size()) - 3;
  f.table.names.assign(raw.header.begin() + 3, raw.header.end());
  f.table.values.resize(n, m);
  f.xy.resize(n, 2);
  f.node_id.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = raw.rows[static_cast<std::size_t>(i)];
    f.node_id[static_cast<std::size_t>(i)] = static_cast<int>(r[0]);
    f.xy(i, 0) = r[1];
    f.xy(i, 1) = r[2];
    for (Eigen::Index c = 0; c < m; ++c) f.table.values(i, c) = r[static_cast<std::size_t>(c + 3)];
  }
  // "# units: x[m] y[m] T[K] ..." -> unit of each data column
  const std::string tag = "# units:";
  if (text.compare(0, tag.size(), tag) == 0) {
    std::istringstream line(text.substr(tag.size(), text.find('\n') - tag.size()));
    std::map<std::string, std::string> unit;
    for (std::string tok; line >> tok;) {
      const auto open = tok.find('[');
      if (open != std::string::npos && tok.back() == ']')
        unit[tok.substr(0, open)] = tok.substr(open + 1, tok.size() - open - 2);
    }
    for (const auto& name : f.table.names) f.table.units.push_back(unit.count(name) ? unit[name] : "");
  }
  return f;
}

FieldCsv read_field_csv(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_field_csv(is);
}

void write_mesh_csv(const Mesh& mesh, std::ostream& os) {
  write_field_csv(mesh, FieldTable{{}, Eigen::MatrixXd(mesh.num_nodes(), 0), {}}, os);
}

void write_field_vtk(const Mesh& mesh, const FieldTable& t, std::ostream& os, const std::string& title) {
  check_table(mesh, t);
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.num_nodes() << " double\n";
  for (const Point2& p : mesh.coords()) os << format_double(p.x) << ' ' << format_double(p.y) << " 0\n";
  os << "CELLS " << mesh.num_elements() << ' ' << 5 * mesh.num_elements() << '\n';
  for (const auto& e : mesh.elems()) os << "4 " << e[0] << ' ' << e[1] << ' ' << e[2] << ' ' << e[3] << '\n';
  os << "CELL_TYPES " << mesh.num_elements() << '\n';
  for (int e = 0; e < mesh.num_elements(); ++e) os << "9\n";
  if (t.names.empty()) return;
  os << "POINT_DATA " << mesh.num_nodes() << '\n';
  for (std::size_t c = 0; c < t.names.size(); ++c) {
    os << "SCALARS " << t.names[c] << " double 1\nLOOKUP_TABLE default\n";
    for (int i = 0; i < mesh.num_nodes(); ++i)
      os << format_double(t.values(i, static_cast<Eigen::Index>(c))) << '\n';
  }
}

void write_field_vtk(const Mesh& mesh, const FieldTable& t, const std::filesystem::path& path,
                     const std::string& title) {
  auto os = open_out(path);
  write_field_vtk(mesh, t, os, title);
}

FieldVtk read_field_vtk(std::istream& is) {
  FieldVtk f;
  std::string line, word;
  for (int i = 0; i < 3; ++i) std::getline(is, line);
  auto expect = [&](const std::string& w) {
    if (!(is >> word) || word != w) throw ConfigError("vtk: expected " + w + ", got '" + word + "'");
  };
  auto next_double = [&] {
    if (!(is >> word)) throw ConfigError("vtk: truncated file");
    return to_double(word, "vtk");
  };
  expect("DATASET");
  expect("UNSTRUCTURED_GRID");
  expect("POINTS");
  int n = 0;
  is >> n >> word;
  f.xy.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    f.xy(i, 0) = next_double();
    f.xy(i, 1) = next_double();
    next_double();
  }
  expect("CELLS");
  int ne = 0, total = 0;
  is >> ne >> total;
  f.cells.resize(static_cast<std::size_t>(ne));
  for (auto& c : f.cells) {
    int k = 0;
    is >> k;
    if (k != 4) throw ConfigError("vtk: only quad cells are supported");
    is >> c[0] >> c[1] >> c[2] >> c[3];
  }
  expect("CELL_TYPES");
  is >> ne;
  for (int e = 0; e < ne; ++e) is >> word;
  std::vector<std::vector<double>> cols;
  if (is >> word) {
    if (word != "POINT_DATA") throw ConfigError("vtk: expected POINT_DATA");
    is >> n;
    while (is >> word) {
      if (word != "SCALARS") throw ConfigError("vtk: expected SCALARS");
      std::string name, type, comps;
      is >> name >> type >> comps;
      expect("LOOKUP_TABLE");
      is >> word;
      std::vector<double> col(static_cast<std::size_t>(n));
      for (auto& v : col) v = next_double();
      f.table.names.push_back(name);
      cols.push_back(std::move(col));
    }
  }
  f.table.values.resize(f.xy.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (Eigen::Index i = 0; i < f.xy.rows(); ++i)
      f.table.values(i, static_cast<Eigen::Index>(c)) = cols[c][static_cast<std::size_t>(i)];
  return f;
}

FieldVtk read_field_vtk(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_field_vtk(is);
}

void write_corpus_csv(const std::vector<Eigen::VectorXd>& inputs, const std::string& kind, std::ostream& os) {
  const Eigen::Index m = inputs.empty() ? 0 : inputs.front().size();
  os << "# kind: " << kind << '\n' << "sample_id";
  for (Eigen::Index j = 0; j < m; ++j) os << ",c_" << j;
  os << '\n';
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    if (inputs[s].size() != m) throw ConfigError("corpus: inputs differ in length");
    os << s;
    for (Eigen::Index j = 0; j < m; ++j) os << ',' << format_double(inputs[s][j]);
    os << '\n';
  }
}

void write_corpus_csv(const std::vector<Eigen::VectorXd>& inputs, const std::string& kind,
                      const std::filesystem::path& path) {
  auto os = open_out(path);
  write_corpus_csv(inputs, kind, os);
}

Corpus read_corpus_csv(std::istream& is) {
  std::stringstream body;
  Corpus c;
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("# kind:", 0) == 0) {
      std::string k = line.substr(7);
      k.erase(0, k.find_first_not_of(' '));
      while (!k.empty() && (k.back() == '\r' || k.back() == ' ')) k.pop_back();
      c.kind = k;
    }
    body << line << '\n';
  }
  CsvTable t = read_csv_table(body);
  if (t.header.empty() || t.header[0] != "sample_id") throw ConfigError("corpus: first column must be sample_id");
  for (const auto& r : t.rows) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(r.size()) - 1);
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = r[static_cast<std::size_t>(j + 1)];
    c.inputs.push_back(std::move(v));
  }
  return c;
}

Corpus read_corpus_csv(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_corpus_csv(is);
}

}  // namespace fol
