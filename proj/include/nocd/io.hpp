// Text formats: edge lists, feature matrices, covers and affiliation
// matrices.
#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nocd/graph.hpp"

namespace nocd {
namespace io {

/// Renders `x` with a fixed number of decimals and a '.' separator,
/// independent of the global locale.
inline std::string format_fixed(double x, int decimals = 10) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, decimals);
  if (res.ec != std::errc{}) throw Error("format_fixed: value too large");
  std::string s(buf, res.ptr);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

/// Shortest representation that parses back to the identical double.
inline std::string format_exact(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
T parse_number(std::string_view tok, std::size_t line, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError(std::string("expected ") + what + ", got '" + std::string(tok) + "'", line);
  return value;
}

inline std::optional<Node> parse_node_header(std::string_view line, std::size_t lineno) {
  if (line.substr(0, 2) != "N=") return std::nullopt;
  return parse_number<Node>(trim(line.substr(2)), lineno, "node count");
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace detail

struct EdgeListStats {
  std::size_t lines = 0;
  std::size_t self_loops = 0;
  std::size_t duplicates = 0;
};

inline SparseGraph read_edge_list(std::istream& in, EdgeListStats* stats = nullptr) {
  std::vector<std::pair<Node, Node>> edges;
  std::optional<Node> declared;
  Node max_id = 0;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (auto n = detail::parse_node_header(line, lineno)) {
      declared = n;
      continue;
    }
    auto tok = detail::split_ws(line);
    if (tok.size() != 2) throw ParseError("expected 'u<TAB>v'", lineno);
    const Node u = detail::parse_number<Node>(tok[0], lineno, "node id");
    const Node v = detail::parse_number<Node>(tok[1], lineno, "node id");
    max_id = std::max({max_id, u, v});
    edges.emplace_back(u, v);
  }
  if (edges.empty()) throw Error("edge list is empty");
  Node n = max_id + 1;
  if (declared) {
    if (*declared < n)
      throw Error("header N=" + std::to_string(*declared) + " smaller than largest node id + 1");
    n = *declared;
  }
  std::size_t loops = 0;
  SparseGraph g = SparseGraph::from_edges(n, edges, &loops);
  if (g.num_edges() == 0) throw Error("edge list has no edges besides self-loops");
  if (stats) {
    stats->lines = edges.size();
    stats->self_loops = loops;
    stats->duplicates = edges.size() - loops - g.num_edges();
  }
  return g;
}

inline SparseGraph load_edge_list(const std::filesystem::path& path, EdgeListStats* stats = nullptr) {
  auto in = detail::open_in(path);
  return read_edge_list(in, stats);
}

/// Writes "N=<n>" followed by one "u\tv" line per unordered edge (u < v).
inline void write_edge_list(std::ostream& out, const SparseGraph& g) {
  out << "N=" << g.num_nodes() << '\n';
  g.for_each_edge([&](Node u, Node v) { out << u << '\t' << v << '\n'; });
}

inline void save_edge_list(const std::filesystem::path& path, const SparseGraph& g) {
  auto out = detail::open_out(path);
  write_edge_list(out, g);
}

/// Reads a feature file. The first non-comment line is "sparse [N D]" or
/// "dense". Sparse bodies hold "u\tfeature\tvalue" triplets; dense bodies
/// one whitespace-separated row per node. `num_nodes`, when given, fixes
/// the row count of a sparse file without explicit dimensions.
inline FeatureMatrix read_features(std::istream& in, std::optional<Node> num_nodes = std::nullopt) {
  std::string raw;
  std::size_t lineno = 0;
  std::string_view header;
  std::string header_store;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    header_store = std::string(line);
    header = header_store;
    break;
  }
  auto htok = detail::split_ws(header);
  if (htok.empty() || (htok[0] != "sparse" && htok[0] != "dense"))
    throw ParseError("feature file must start with 'sparse' or 'dense'", lineno);

  if (htok[0] == "dense") {
    std::vector<std::vector<double>> rows;
    while (std::getline(in, raw)) {
      ++lineno;
      auto line = detail::trim(raw);
      if (line.empty() || line.front() == '#') continue;
      std::vector<double> row;
      for (auto tok : detail::split_ws(line)) {
        const double v = detail::parse_number<double>(tok, lineno, "number");
        if (!(v >= 0.0)) throw ParseError("feature values must be non-negative", lineno);
        row.push_back(v);
      }
      if (!rows.empty() && row.size() != rows.front().size())
        throw ParseError("ragged dense feature row", lineno);
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error("dense feature file has no rows");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    return FeatureMatrix(std::move(m));
  }

  std::optional<Index> n_decl, d_decl;
  if (htok.size() == 3) {
    n_decl = detail::parse_number<Index>(htok[1], lineno, "row count");
    d_decl = detail::parse_number<Index>(htok[2], lineno, "column count");
  } else if (htok.size() != 1) {
    throw ParseError("expected 'sparse' or 'sparse N D'", lineno);
  }
  std::vector<Eigen::Triplet<double>> trip;
  Index max_row = -1, max_col = -1;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto tok = detail::split_ws(line);
    if (tok.size() != 3) throw ParseError("expected 'u<TAB>feature<TAB>value'", lineno);
    const auto u = detail::parse_number<Index>(tok[0], lineno, "node id");
    const auto f = detail::parse_number<Index>(tok[1], lineno, "feature index");
    const double v = detail::parse_number<double>(tok[2], lineno, "value");
    if (u < 0 || f < 0) throw ParseError("negative index", lineno);
    if (!(v >= 0.0)) throw ParseError("feature values must be non-negative", lineno);
    max_row = std::max(max_row, u);
    max_col = std::max(max_col, f);
    trip.emplace_back(u, f, v);
  }
  Index n = n_decl.value_or(num_nodes ? static_cast<Index>(*num_nodes) : max_row + 1);
  Index d = d_decl.value_or(max_col + 1);
  if (max_row >= n || max_col >= d) throw Error("sparse feature index exceeds declared shape");
  SparseMatrix m(n, d);
  m.setFromTriplets(trip.begin(), trip.end(), [](double, double b) { return b; });
  return FeatureMatrix(std::move(m));
}

inline FeatureMatrix load_features(const std::filesystem::path& path,
                                   std::optional<Node> num_nodes = std::nullopt) {
  auto in = detail::open_in(path);
  return read_features(in, num_nodes);
}

inline void write_features(std::ostream& out, const FeatureMatrix& x) {
  if (x.is_sparse()) {
    const auto& m = x.sparse();
    out << "sparse " << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(m, r); it; ++it)
        out << r << '\t' << it.col() << '\t' << format_exact(it.value()) << '\n';
    return;
  }
  const auto& m = x.dense();
  out << "dense\n";
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_exact(m(r, c));
    out << '\n';
  }
}

inline void save_features(const std::filesystem::path& path, const FeatureMatrix& x) {
  auto out = detail::open_out(path);
  write_features(out, x);
}

struct CoverFile {
  Cover cover;
  /// Node count from an "N=<int>" header, if the file had one.
  std::optional<Node> declared_nodes;
};

/// Reads a cover: optional "N=<int>" header, then one line per community
/// listing its member ids. Blank and '#' lines are ignored.
inline CoverFile read_cover(std::istream& in, std::optional<Node> num_nodes = std::nullopt) {
  std::vector<std::vector<Node>> comms;
  std::optional<Node> declared;
  Node max_id = 0;
  bool any = false;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (auto n = detail::parse_node_header(line, lineno)) {
      declared = n;
      continue;
    }
    std::vector<Node> c;
    for (auto tok : detail::split_ws(line)) {
      const Node u = detail::parse_number<Node>(tok, lineno, "node id");
      max_id = std::max(max_id, u);
      any = true;
      c.push_back(u);
    }
    comms.push_back(std::move(c));
  }
  if (!any) throw Error("cover file lists no nodes");
  if (declared && num_nodes && *declared != *num_nodes)
    throw Error("cover declares N=" + std::to_string(*declared) + " but " + std::to_string(*num_nodes) +
                " nodes were expected");
  const Node n = declared.value_or(num_nodes.value_or(max_id + 1));
  if (max_id >= n) throw Error("cover lists node " + std::to_string(max_id) + " beyond N=" + std::to_string(n));
  return {Cover(n, std::move(comms)), declared};
}

inline CoverFile load_cover(const std::filesystem::path& path, std::optional<Node> num_nodes = std::nullopt) {
  auto in = detail::open_in(path);
  return read_cover(in, num_nodes);
}

/// Writes "N=<n>" then one line per non-empty community.
inline void write_cover(std::ostream& out, const Cover& cover) {
  out << "N=" << cover.num_nodes() << '\n';
  for (const auto& c : cover.communities()) {
    if (c.empty()) continue;
    for (std::size_t i = 0; i < c.size(); ++i) out << (i ? "\t" : "") << c[i];
    out << '\n';
  }
}

inline void save_cover(const std::filesystem::path& path, const Cover& cover) {
  auto out = detail::open_out(path);
  write_cover(out, cover);
}

/// Affiliation file: header "N C rho", then N rows of C reals.
inline void write_affiliations(std::ostream& out, const Matrix& f, double rho) {
  out << f.rows() << ' ' << f.cols() << ' ' << format_fixed(rho, 6) << '\n';
  for (Index u = 0; u < f.rows(); ++u) {
    for (Index c = 0; c < f.cols(); ++c) out << (c ? " " : "") << format_fixed(f(u, c));
    out << '\n';
  }
}

struct AffiliationFile {
  Matrix values;
  double rho = 0.5;
};

inline AffiliationFile read_affiliations(std::istream& in) {
  std::string raw;
  std::size_t lineno = 1;
  if (!std::getline(in, raw)) throw ParseError("empty affiliation file", 1);
  auto head = detail::split_ws(detail::trim(raw));
  if (head.size() != 3) throw ParseError("expected header 'N C rho'", 1);
  const auto n = detail::parse_number<Index>(head[0], 1, "N");
  const auto c = detail::parse_number<Index>(head[1], 1, "C");
  AffiliationFile out{Matrix(n, c), detail::parse_number<double>(head[2], 1, "rho")};
  for (Index u = 0; u < n; ++u) {
    if (!std::getline(in, raw)) throw ParseError("missing affiliation row", lineno + 1);
    ++lineno;
    auto tok = detail::split_ws(detail::trim(raw));
    if (static_cast<Index>(tok.size()) != c) throw ParseError("wrong affiliation row length", lineno);
    for (Index k = 0; k < c; ++k)
      out.values(u, k) = detail::parse_number<double>(tok[static_cast<std::size_t>(k)], lineno, "number");
  }
  return out;
}

}  // namespace io
}  // namespace nocd
