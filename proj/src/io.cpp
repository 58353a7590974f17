#include "pgfa/io.hpp"

#include "json.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pgfa::io {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

[[noreturn]] void parse_error(const std::string& source, std::size_t line, std::size_t column,
                              const std::string& reason) {
  throw Error(ErrorCode::kParseError,
              source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + reason);
}

double parse_double(const std::string& field, const std::string& source, std::size_t line,
                    std::size_t column) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    parse_error(source, line, column, "not a number: '" + field + "'");
  }
  if (!std::isfinite(value)) parse_error(source, line, column, "non-finite value");
  return value;
}

long parse_header_int(const std::string& token, const std::string& key, const std::string& source) {
  const std::string prefix = key + "=";
  if (token.rfind(prefix, 0) != 0) parse_error(source, 1, 1, "expected '" + prefix + "<int>'");
  long value = 0;
  const char* begin = token.data() + prefix.size();
  const char* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || value < 0) {
    parse_error(source, 1, 1, "bad header value '" + token + "'");
  }
  return value;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot open '" + path.string() + "'");
  return in;
}

void put_f64(std::ostream& out, double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_f64(std::istream& in, const std::string& source) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw Error(ErrorCode::kParseError, source + ": checkpoint truncated");
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void put_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
  }
}

Matrix get_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols, const std::string& source) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = get_f64(in, source);
  }
  return m;
}

Vector get_vector(std::istream& in, Eigen::Index n, const std::string& source) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = get_f64(in, source);
  return v;
}

}  // namespace

std::string format_shortest(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

std::string format17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

EmbeddingTable parse_embedding_table(std::istream& in, const std::string& source) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::kEmptyDataset, source + " is empty");
  header = strip_cr(header);
  const auto tokens = split(header, ' ');
  if (tokens.size() != 3 || tokens[0] != kTableMagic) {
    parse_error(source, 1, 1, std::string("expected '") + kTableMagic + " d=<d> n=<N>'");
  }
  const long d = parse_header_int(tokens[1], "d", source);
  const long n = parse_header_int(tokens[2], "n", source);
  if (d < 1) parse_error(source, 1, 1, "dimension must be >= 1");
  if (n < 1) throw Error(ErrorCode::kEmptyDataset, source + " declares no rows");

  EmbeddingTable table;
  table.features.resize(n, d);
  std::map<std::string, int> class_index;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 1;
  long row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    if (row >= n) parse_error(source, line_no, 1, "more rows than the declared n=" + std::to_string(n));
    const auto fields = split(line, ',');
    if (static_cast<long>(fields.size()) != d + 2) {
      parse_error(source, line_no, fields.size(),
                  "expected " + std::to_string(d + 2) + " fields (id,label,x1..x" +
                      std::to_string(d) + "), found " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) parse_error(source, line_no, 1, "empty id");
    if (!seen_ids.insert(fields[0]).second) {
      parse_error(source, line_no, 1, "duplicate id '" + fields[0] + "'");
    }
    const auto [it, inserted] =
        class_index.emplace(fields[1], static_cast<int>(table.classes.size()));
    if (inserted) table.classes.push_back(fields[1]);
    table.ids.push_back(fields[0]);
    table.labels.push_back(it->second);
    for (long j = 0; j < d; ++j) {
      table.features(row, j) = parse_double(fields[static_cast<std::size_t>(j + 2)], source,
                                            line_no, static_cast<std::size_t>(j + 3));
    }
    ++row;
  }
  if (row != n) {
    parse_error(source, line_no, 1,
                "declared n=" + std::to_string(n) + " but found " + std::to_string(row) + " rows");
  }
  return table;
}

EmbeddingTable read_embedding_table(const fs::path& path) {
  auto in = open_in(path);
  return parse_embedding_table(in, path.string());
}

void write_embedding_table(std::ostream& out, const EmbeddingTable& table) {
  table.validate();
  out << kTableMagic << " d=" << table.dim() << " n=" << table.rows() << '\n';
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const auto r = static_cast<std::size_t>(i);
    out << table.ids[r] << ',' << table.classes[static_cast<std::size_t>(table.labels[r])];
    for (Eigen::Index j = 0; j < table.dim(); ++j) out << ',' << format_shortest(table.features(i, j));
    out << '\n';
  }
}

void write_embedding_table(const fs::path& path, const EmbeddingTable& table) {
  auto out = open_out(path);
  write_embedding_table(out, table);
}

void SplitManifest::validate() const {
  std::set<std::string> s(seen.begin(), seen.end());
  if (s.size() != seen.size()) throw Error(ErrorCode::kInvalidArgument, "duplicate seen class");
  std::set<std::string> u(unseen.begin(), unseen.end());
  if (u.size() != unseen.size()) throw Error(ErrorCode::kInvalidArgument, "duplicate unseen class");
  for (const auto& c : unseen) {
    if (s.count(c)) {
      throw Error(ErrorCode::kInvalidArgument, "class '" + c + "' is both seen and unseen");
    }
  }
  if (unseen.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "zero-shot evaluation needs at least two unseen classes");
  }
}

SplitManifest read_manifest(const fs::path& path) {
  auto in = open_in(path);
  SplitManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.fold = j.value("fold", 0);
    m.seen = j.at("seen").get<std::vector<std::string>>();
    m.unseen = j.at("unseen").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const fs::path& path, const SplitManifest& manifest) {
  nlohmann::ordered_json j;
  j["fold"] = manifest.fold;
  j["seen"] = manifest.seen;
  j["unseen"] = manifest.unseen;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

std::pair<EmbeddingTable, EmbeddingTable> apply_split(const EmbeddingTable& table,
                                                      const SplitManifest& manifest) {
  manifest.validate();
  table.validate();
  std::map<std::string, std::pair<bool, int>> where;
  for (std::size_t i = 0; i < manifest.seen.size(); ++i) where[manifest.seen[i]] = {false, static_cast<int>(i)};
  for (std::size_t i = 0; i < manifest.unseen.size(); ++i) where[manifest.unseen[i]] = {true, static_cast<int>(i)};

  std::vector<Eigen::Index> seen_rows;
  std::vector<Eigen::Index> unseen_rows;
  std::vector<int> seen_labels;
  std::vector<int> unseen_labels;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const auto& name = table.classes[static_cast<std::size_t>(table.labels[static_cast<std::size_t>(i)])];
    const auto it = where.find(name);
    if (it == where.end()) {
      throw Error(ErrorCode::kUnassignedLabel, "label '" + name + "' is in neither split");
    }
    if (it->second.first) {
      unseen_rows.push_back(i);
      unseen_labels.push_back(it->second.second);
    } else {
      seen_rows.push_back(i);
      seen_labels.push_back(it->second.second);
    }
  }

  auto take = [&table](const std::vector<Eigen::Index>& rows, std::vector<int> labels,
                       const std::vector<std::string>& classes) {
    EmbeddingTable t;
    t.features.resize(static_cast<Eigen::Index>(rows.size()), table.dim());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      t.features.row(static_cast<Eigen::Index>(r)) = table.features.row(rows[r]);
      t.ids.push_back(table.ids[static_cast<std::size_t>(rows[r])]);
    }
    t.labels = std::move(labels);
    t.classes = classes;
    return t;
  };
  return {take(seen_rows, std::move(seen_labels), manifest.seen),
          take(unseen_rows, std::move(unseen_labels), manifest.unseen)};
}

AnchorSet anchors_for(const EmbeddingTable& anchor_table, const std::vector<std::string>& classes) {
  AnchorSet set;
  set.kind = AnchorKind::kText;
  set.anchors.resize(static_cast<Eigen::Index>(classes.size()), anchor_table.dim());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    Eigen::Index found = -1;
    for (Eigen::Index i = 0; i < anchor_table.rows(); ++i) {
      if (anchor_table.classes[static_cast<std::size_t>(anchor_table.labels[static_cast<std::size_t>(i)])] ==
          classes[k]) {
        found = i;
        break;
      }
    }
    if (found < 0) throw Error(ErrorCode::kMissingClass, "no anchor for class '" + classes[k] + "'");
    set.anchors.row(static_cast<Eigen::Index>(k)) = anchor_table.features.row(found);
    set.class_ids.push_back(static_cast<int>(k));
  }
  return set;
}

EmbeddingTable text_rows_for(const EmbeddingTable& table, const EmbeddingTable& anchor_table) {
  const AnchorSet anchors = anchors_for(anchor_table, table.classes);
  EmbeddingTable text = table;
  text.features.resize(table.rows(), anchor_table.dim());
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    text.features.row(i) = anchors.anchors.row(table.labels[static_cast<std::size_t>(i)]);
  }
  return text;
}

void write_checkpoint(std::ostream& out, const TrainerState& state) {
  out << kCheckpointMagic << '\n';
  out << "layer_widths=";
  for (std::size_t i = 0; i < state.spec.layer_widths.size(); ++i) {
    out << (i ? "," : "") << state.spec.layer_widths[i];
  }
  out << '\n';
  out << "activation=" << to_string(state.spec.activation) << '\n';
  out << "text_dim=" << state.text_dim() << '\n';
  out << "tau=" << format17(state.tau()) << '\n';
  out << "arrays=" << 2 * state.encoder.size() + 3 << '\n';
  out << "end\n";
  for (const auto& layer : state.encoder) {
    put_matrix(out, layer.weight);
    put_matrix(out, layer.bias.transpose());
  }
  put_matrix(out, state.projection.weight);
  put_matrix(out, state.projection.bias.transpose());
  put_f64(out, state.log_tau);
}

void write_checkpoint(const fs::path& path, const TrainerState& state) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  write_checkpoint(out, state);
}

TrainerState read_checkpoint(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw Error(ErrorCode::kParseError, source + ": missing " + kCheckpointMagic + " magic");
  }
  std::map<std::string, std::string> header;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line == "end") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) parse_error(source, line_no, 1, "expected key=value");
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"layer_widths", "activation", "text_dim"}) {
    if (!header.count(key)) throw Error(ErrorCode::kParseError, source + ": header lacks " + key);
  }

  EncoderSpec spec;
  for (const auto& w : split(header["layer_widths"], ',')) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), value);
    if (ec != std::errc() || ptr != w.data() + w.size()) {
      throw Error(ErrorCode::kParseError, source + ": bad layer width '" + w + "'");
    }
    spec.layer_widths.push_back(value);
  }
  spec.activation = parse_activation(header["activation"]);
  spec.validate();
  const int text_dim = std::stoi(header["text_dim"]);

  TrainerState state;
  state.spec = spec;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    Dense layer;
    layer.weight = get_matrix(in, spec.layer_widths[l], spec.layer_widths[l + 1], source);
    layer.bias = get_vector(in, spec.layer_widths[l + 1], source);
    state.encoder.push_back(std::move(layer));
  }
  state.projection.weight = get_matrix(in, spec.output_dim(), text_dim, source);
  state.projection.bias = get_vector(in, text_dim, source);
  state.log_tau = get_f64(in, source);
  return state;
}

TrainerState read_checkpoint(const fs::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  return read_checkpoint(in, path.string());
}

void write_loss_trace(const fs::path& path, const std::vector<double>& losses) {
  auto out = open_out(path);
  out << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out << e + 1 << ',' << format17(losses[e]) << '\n';
}

void write_labels_csv(const fs::path& path, const std::vector<LabelRecord>& rows) {
  auto out = open_out(path);
  out << "row_id,pseudo_label,final_label,entropy\n";
  for (const auto& r : rows) {
    out << r.row_id << ',' << r.pseudo_label << ',' << r.final_label << ',' << format17(r.entropy)
        << '\n';
  }
}

std::vector<LabelRecord> read_labels_csv(const fs::path& path) {
  auto in = open_in(path);
  const std::string source = path.string();
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "row_id,pseudo_label,final_label,entropy") {
    parse_error(source, 1, 1, "expected header row_id,pseudo_label,final_label,entropy");
  }
  std::vector<LabelRecord> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) parse_error(source, line_no, f.size(), "expected 4 fields");
    rows.push_back(LabelRecord{f[0], f[1], f[2], parse_double(f[3], source, line_no, 4)});
  }
  return rows;
}

std::vector<LabelRecord> label_records(const EmbeddingTable& table,
                                       const std::vector<std::string>& class_names,
                                       const std::vector<int>& pseudo, const std::vector<int>& final,
                                       const Vector& entropies) {
  std::vector<LabelRecord> rows;
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    rows.push_back(LabelRecord{table.ids[i], class_names.at(static_cast<std::size_t>(pseudo[i])),
                               class_names.at(static_cast<std::size_t>(final[i])),
                               entropies[static_cast<Eigen::Index>(i)]});
  }
  return rows;
}

void write_prototype_report(const fs::path& path, const PrototypeReport& report,
                            const std::vector<std::string>& class_names) {
  auto out = open_out(path);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < report.final_labels.size(); ++i) {
    changed += report.final_labels[i] != report.pseudo_labels[i];
  }
  out << "strategy=" << to_string(report.config.strategy) << '\n';
  out << "alpha=" << format17(report.config.alpha) << '\n';
  out << "rows=" << report.pseudo_labels.size() << '\n';
  out << "relabeled=" << changed << '\n';
  out << "class,support_size,filtered_size,fallback\n";
  for (std::size_t k = 0; k < report.class_ids.size(); ++k) {
    out << class_names.at(static_cast<std::size_t>(report.class_ids[k])) << ','
        << report.support_sizes[k] << ',' << report.filtered_sizes[k] << ','
        << (report.used_fallback[k] ? 1 : 0) << '\n';
  }
}

std::string eval_report_json(const EvalReport& report, const std::vector<std::string>& class_names) {
  auto num = [](const std::optional<double>& v) { return v ? format17(*v) : std::string("null"); };
  std::ostringstream out;
  out << "{\n";
  out << "  \"accuracy\": " << format17(report.accuracy) << ",\n";
  out << "  \"per_class\": {";
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    out << (k ? ", " : "") << nlohmann::json(class_names.at(k)).dump() << ": "
        << num(report.per_class[k]);
  }
  out << "},\n";
  out << "  \"fdr\": " << num(report.fdr) << ",\n";
  out << "  \"silhouette\": " << num(report.silhouette) << ",\n";
  out << "  \"ridge_lambda\": " << num(report.ridge_lambda) << "\n";
  out << "}\n";
  return out.str();
}

void write_eval_report(const fs::path& path, const EvalReport& report,
                       const std::vector<std::string>& class_names) {
  auto out = open_out(path);
  out << eval_report_json(report, class_names);
}

void write_confusion_csv(const fs::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names) {
  auto out = open_out(path);
  out << "true\\pred";
  for (Eigen::Index p = 0; p < cm.counts.cols(); ++p) out << ',' << class_names.at(static_cast<std::size_t>(p));
  out << '\n';
  for (Eigen::Index t = 0; t < cm.counts.rows(); ++t) {
    out << class_names.at(static_cast<std::size_t>(t));
    for (Eigen::Index p = 0; p < cm.counts.cols(); ++p) out << ',' << cm.counts(t, p);
    out << '\n';
  }
}

void write_theorem_csv(const fs::path& path, const TheoremReport& report) {
  auto out = open_out(path);
  out << "n,trial,agreement,mean_resultant_length,a_d_reference\n";
  for (const auto& r : report.rows) {
    out << r.n << ',' << r.trial << ',' << format17(r.agreement) << ','
        << format17(r.mean_resultant_length) << ',' << format17(r.a_d_reference) << '\n';
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace pgfa::io
