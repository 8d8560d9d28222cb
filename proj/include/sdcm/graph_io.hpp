#pragma once

// Text formats for graphs and datasets, plus atomic file output.
//
//   edge list   one edge per line, "u v" (any whitespace); '#' starts a
//               comment; an optional "# nodes N" header fixes the node count.
//   features    CSV, optional header row, row i = node i.
//   labels      CSV node_id,label with label in {-1,0,1}; optional header;
//               nodes that are not listed are unobserved.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <vector>

#include "sdcm/graph_model.hpp"

namespace sdcm {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace detail

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

inline SocialGraph parse_graph(std::istream& in) {
  std::vector<std::pair<NodeId, NodeId>> pairs;
  std::optional<std::size_t> declared_nodes;
  std::size_t max_id = 0;
  bool any = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#' || view.front() == '%') {
      auto fields = detail::split_whitespace(view.substr(1));
      if (fields.size() == 2 && (fields[0] == "nodes" || fields[0] == "nodes:")) {
        auto n = detail::parse_number<std::size_t>(fields[1]);
        if (!n) throw ParseError("bad node-count header", lineno);
        declared_nodes = *n;
      }
      continue;
    }
    auto fields = detail::split_whitespace(view);
    if (fields.size() == 3) throw ValidationError("line " + std::to_string(lineno) + ": weighted edges are not supported");
    if (fields.size() != 2) throw ParseError("expected two node ids, got " + std::to_string(fields.size()) + " fields", lineno);
    auto a = detail::parse_number<NodeId>(fields[0]);
    auto b = detail::parse_number<NodeId>(fields[1]);
    if (!a || !b) throw ParseError("node ids must be nonnegative integers", lineno);
    if (*a == *b) throw ValidationError("line " + std::to_string(lineno) + ": self-loop at node " + std::to_string(*a));
    max_id = std::max({max_id, *a, *b});
    any = true;
    pairs.emplace_back(*a, *b);
  }
  std::size_t n = any ? max_id + 1 : 0;
  if (declared_nodes) {
    if (any && *declared_nodes < n) throw ValidationError("node-count header is smaller than the largest node id");
    n = *declared_nodes;
  }
  return SocialGraph(n, pairs);
}

inline SocialGraph load_graph(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_graph(in);
}

inline std::string format_graph(const SocialGraph& graph) {
  std::string out = "# nodes " + std::to_string(graph.num_nodes()) + "\n";
  for (const Edge& e : graph.edges()) {
    out += std::to_string(e.u);
    out += '\t';
    out += std::to_string(e.v);
    out += '\n';
  }
  return out;
}

inline Matrix parse_features(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    auto fields = detail::split_fields(view, ',');
    std::vector<double> row;
    row.reserve(fields.size());
    bool numeric = true;
    for (auto f : fields) {
      auto v = detail::parse_number<double>(f);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw ParseError("non-numeric feature value", lineno);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("expected " + std::to_string(rows.front().size()) + " columns, got " + std::to_string(row.size()),
                       lineno);
    }
    rows.push_back(std::move(row));
  }
  const std::size_t d = rows.empty() ? 0 : rows.front().size();
  Matrix features(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return features;
}

inline std::vector<Label> parse_labels(std::istream& in, std::size_t num_nodes) {
  std::vector<Label> labels(num_nodes, kUnobserved);
  std::vector<bool> seen(num_nodes, false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    auto fields = detail::split_fields(view, ',');
    if (fields.size() != 2) throw ParseError("expected node_id,label", lineno);
    auto node = detail::parse_number<NodeId>(fields[0]);
    auto label = detail::parse_number<long>(fields[1]);
    if (!node || !label) {
      if (lineno == 1) continue;  // header
      throw ParseError("expected integer node_id,label", lineno);
    }
    if (*node >= num_nodes) {
      throw ValidationError("line " + std::to_string(lineno) + ": node " + std::to_string(*node) + " is not in the graph");
    }
    if (*label != -1 && *label != 0 && *label != 1) {
      throw ValidationError("line " + std::to_string(lineno) + ": label " + std::to_string(*label) +
                            " is not one of -1, 0, 1");
    }
    if (seen[*node]) throw ValidationError("line " + std::to_string(lineno) + ": duplicate node " + std::to_string(*node));
    seen[*node] = true;
    labels[*node] = static_cast<Label>(*label);
  }
  return labels;
}

inline Dataset load_dataset(const std::filesystem::path& features_file, const std::filesystem::path& labels_file,
                            const SocialGraph& graph) {
  auto fin = detail::open_input(features_file);
  Matrix features = parse_features(fin);
  if (static_cast<std::size_t>(features.rows()) != graph.num_nodes()) {
    throw DimensionError("features file has " + std::to_string(features.rows()) + " rows, graph has " +
                         std::to_string(graph.num_nodes()) + " nodes");
  }
  auto lin = detail::open_input(labels_file);
  auto labels = parse_labels(lin, graph.num_nodes());
  return Dataset(std::move(features), std::move(labels));
}

inline std::string format_features(const Matrix& features) {
  std::string out;
  for (Eigen::Index j = 0; j < features.cols(); ++j) out += (j ? ",x" : "x") + std::to_string(j);
  out += '\n';
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      if (j) out += ',';
      out += format_double(features(i, j));
    }
    out += '\n';
  }
  return out;
}

inline std::string format_labels(std::span<const Label> labels) {
  std::string out = "node_id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + "," + std::to_string(int{labels[i]}) + "\n";
  return out;
}

/// Writes a group of files all-or-nothing: every file goes to a temporary
/// sibling first and is renamed into place only after all writes succeed.
class AtomicFileSet {
 public:
  void add(std::filesystem::path path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }

  void commit() {
    std::vector<std::filesystem::path> temps;
    auto cleanup = [&] {
      std::error_code ec;
      for (const auto& t : temps) std::filesystem::remove(t, ec);
    };
    for (const auto& [path, content] : files_) {
      auto tmp = path;
      tmp += ".tmp";
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) {
        cleanup();
        throw Error("cannot write " + path.string());
      }
      temps.push_back(tmp);
      out.write(content.data(), static_cast<std::streamsize>(content.size()));
      out.close();
      if (!out) {
        cleanup();
        throw Error("write failed for " + path.string());
      }
    }
    // Files already moved into place are rolled back if a later rename
    // fails, restoring whatever they replaced.
    std::vector<std::filesystem::path> backups(files_.size());
    auto rollback = [&](std::size_t placed) {
      std::error_code ec;
      for (std::size_t k = 0; k < placed; ++k) {
        std::filesystem::remove(files_[k].first, ec);
        if (!backups[k].empty()) std::filesystem::rename(backups[k], files_[k].first, ec);
      }
      if (placed < files_.size() && !backups[placed].empty())
        std::filesystem::rename(backups[placed], files_[placed].first, ec);
    };
    for (std::size_t i = 0; i < files_.size(); ++i) {
      std::error_code ec;
      const auto& target = files_[i].first;
      const bool existed = std::filesystem::is_regular_file(target, ec);
      ec.clear();
      if (existed) {
        backups[i] = target;
        backups[i] += ".bak";
        std::filesystem::rename(target, backups[i], ec);
        if (ec) backups[i].clear();
      }
      if (!ec) std::filesystem::rename(temps[i], target, ec);
      if (ec) {
        rollback(i);
        cleanup();
        throw Error("cannot move " + temps[i].string() + " into place: " + ec.message());
      }
    }
    std::error_code ec;
    for (const auto& b : backups)
      if (!b.empty()) std::filesystem::remove(b, ec);
    files_.clear();
  }

 private:
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

inline void write_file_atomic(const std::filesystem::path& path, std::string content) {
  AtomicFileSet set;
  set.add(path, std::move(content));
  set.commit();
}

}  // namespace sdcm
