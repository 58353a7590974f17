#include "doctest.h"
#include "support.hpp"

#include "pgfa/io.hpp"

#include "json.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

using namespace pgfa;
using namespace pgfa::testing;
namespace fs = std::filesystem;

namespace {

EmbeddingTable parse(const std::string& text) {
  std::istringstream in(text);
  return io::parse_embedding_table(in, "mem");
}

std::string parse_error_message(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParseError);
    return e.what();
  }
  FAIL("expected ParseError");
  return {};
}

EmbeddingTable named_table(const Matrix& x, const std::vector<std::string>& names) {
  EmbeddingTable t;
  t.features = x;
  for (std::size_t i = 0; i < names.size(); ++i) {
    t.ids.push_back("row" + std::to_string(i));
    const auto it = std::find(t.classes.begin(), t.classes.end(), names[i]);
    if (it == t.classes.end()) {
      t.labels.push_back(static_cast<int>(t.classes.size()));
      t.classes.push_back(names[i]);
    } else {
      t.labels.push_back(static_cast<int>(it - t.classes.begin()));
    }
  }
  return t;
}

}  // namespace

TEST_CASE("number formatting") {
  Rng rng(50);
  for (int t = 0; t < 1000; ++t) {
    const double x = uniform_real(-1, 1, rng) * std::pow(10.0, uniform_int(-300, 300, rng));
    CHECK(std::stod(io::format_shortest(x)) == x);
    CHECK(std::stod(io::format17(x)) == x);
  }
  CHECK(io::format_shortest(0.1) == "0.1");
  CHECK(io::format17(0.1) == "0.10000000000000001");
}

TEST_CASE("embedding table text format") {
  const auto t = parse("PGFA-EMB1 d=3 n=2\na,walk,1,2,3\nb,run,0.5,-1e-3,4\n");
  CHECK(t.rows() == 2);
  CHECK(t.dim() == 3);
  CHECK(t.classes == std::vector<std::string>{"walk", "run"});
  CHECK(t.labels == std::vector<int>{0, 1});
  CHECK(t.features(1, 1) == -1e-3);

  SUBCASE("round trip is bit exact") {
    Rng rng(51);
    Matrix x = gaussian(7, 4, rng);
    x(0, 0) = std::numeric_limits<double>::denorm_min();
    x(1, 1) = -0.0;
    x(2, 2) = 1e300;
    const auto table = named_table(x, {"a", "b", "a", "c", "b", "a", "c"});
    std::ostringstream out;
    io::write_embedding_table(out, table);
    const auto back = parse(out.str());
    CHECK(back.ids == table.ids);
    CHECK(back.labels == table.labels);
    CHECK(back.classes == table.classes);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      CHECK(std::memcmp(back.features.data() + i, x.data() + i, sizeof(double)) == 0);
    std::ostringstream again;
    io::write_embedding_table(again, back);
    CHECK(again.str() == out.str());
  }

  SUBCASE("errors") {
    const auto short_row = parse_error_message("PGFA-EMB1 d=3 n=2\na,x,1,2,3\nb,y,1,2\n");
    CHECK(short_row.find("mem:3:") != std::string::npos);
    CHECK(parse_error_message("PGFA-EMB1 d=2 n=1\na,x,1,zz\n").find("mem:2:4") != std::string::npos);
    CHECK(parse_error_message("PGFA-EMB2 d=2 n=1\na,x,1,2\n").find("mem:1:") != std::string::npos);
    CHECK(parse_error_message("PGFA-EMB1 d=1 n=2\na,x,1\na,x,2\n").find("duplicate id") !=
          std::string::npos);
    CHECK(parse_error_message("PGFA-EMB1 d=1 n=3\na,x,1\nb,x,2\n").find("n=3") != std::string::npos);
    CHECK(parse_error_message("PGFA-EMB1 d=1 n=1\na,x,nan\n").find("non-finite") != std::string::npos);
    CHECK(error_code_of([] { parse(""); }) == ErrorCode::kEmptyDataset);
    CHECK(error_code_of([] { parse("PGFA-EMB1 d=2 n=0\n"); }) == ErrorCode::kEmptyDataset);

    const auto dir = scratch_dir("io_empty");
    spit(dir / "empty.emb", "");
    CHECK(error_code_of([&] { io::read_embedding_table(dir / "empty.emb"); }) == ErrorCode::kEmptyDataset);
  }
}

TEST_CASE("manifest and split") {
  const auto dir = scratch_dir("io_manifest");
  io::SplitManifest m{2, {"a", "b"}, {"c", "d"}};
  io::write_manifest(dir / "m.json", m);
  const auto back = io::read_manifest(dir / "m.json");
  CHECK(back.fold == 2);
  CHECK(back.seen == m.seen);
  CHECK(back.unseen == m.unseen);

  Rng rng(52);
  const auto table = named_table(gaussian(8, 2, rng), {"d", "a", "c", "b", "c", "a", "d", "b"});
  const auto [seen, unseen] = io::apply_split(table, m);
  CHECK(seen.rows() + unseen.rows() == table.rows());
  CHECK(seen.classes == m.seen);
  CHECK(unseen.classes == m.unseen);
  CHECK(unseen.ids == std::vector<std::string>{"row0", "row2", "row4", "row6"});
  CHECK(unseen.labels == std::vector<int>{1, 0, 0, 1});
  CHECK(seen.features.row(0) == table.features.row(1));

  io::SplitManifest partial{0, {"a"}, {"c", "d"}};
  try {
    io::apply_split(table, partial);
    FAIL("expected UnassignedLabel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnassignedLabel);
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(error_code_of([&] { io::apply_split(table, {0, {"a", "b", "c", "d"}, {}}); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(error_code_of([&] { io::apply_split(table, {0, {"a", "c"}, {"c", "d"}}); }) ==
        ErrorCode::kInvalidArgument);

  spit(dir / "bad.json", "{\"seen\": [1, 2]");
  CHECK(error_code_of([&] { io::read_manifest(dir / "bad.json"); }) == ErrorCode::kParseError);
}

TEST_CASE("anchors_for and text_rows_for") {
  Matrix a(3, 2);
  a << 1, 0, 0, 1, 1, 1;
  const auto anchors = named_table(a, {"x", "y", "z"});
  const auto set = io::anchors_for(anchors, {"z", "x"});
  CHECK(set.class_ids == std::vector<int>{0, 1});
  CHECK(set.anchors.row(0) == a.row(2));
  CHECK(set.anchors.row(1) == a.row(0));
  CHECK(error_code_of([&] { io::anchors_for(anchors, {"x", "w"}); }) == ErrorCode::kMissingClass);

  const auto data = named_table(Matrix::Zero(3, 5), {"y", "x", "y"});
  const auto text = io::text_rows_for(data, anchors);
  CHECK(text.rows() == 3);
  CHECK(text.features.row(0) == a.row(1));
  CHECK(text.features.row(1) == a.row(0));
}

TEST_CASE("checkpoint round trip") {
  auto st = TrainerState::initialize({{4, 6, 3}, Activation::kTanh}, 5, 9);
  Rng rng(53);
  st.encoder[1].bias = gaussian_vector(3, rng);
  st.log_tau = -1.234567890123;
  std::stringstream buf;
  io::write_checkpoint(buf, st);
  const std::string bytes = buf.str();
  CHECK(bytes.rfind("PGFA-CKPT1\n", 0) == 0);
  CHECK(bytes.find("activation=tanh") != std::string::npos);

  std::istringstream in(bytes);
  const auto back = io::read_checkpoint(in, "mem");
  CHECK(back == st);
  CHECK(back.fingerprint() == st.fingerprint());

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK(error_code_of([&] { io::read_checkpoint(truncated, "mem"); }) == ErrorCode::kParseError);
  std::istringstream wrong("PGFA-EMB1 d=1 n=1\n");
  CHECK(error_code_of([&] { io::read_checkpoint(wrong, "mem"); }) == ErrorCode::kParseError);

  const auto dir = scratch_dir("io_ckpt");
  io::write_checkpoint(dir / "m.ckpt", st);
  CHECK(io::read_checkpoint(dir / "m.ckpt") == st);
}

TEST_CASE("label and report files") {
  const auto dir = scratch_dir("io_reports");
  const std::vector<io::LabelRecord> rows{{"r0", "a", "b", 0.25}, {"r1", "b", "b", 1.0 / 3.0}};
  io::write_labels_csv(dir / "labels.csv", rows);
  CHECK(slurp(dir / "labels.csv").rfind("row_id,pseudo_label,final_label,entropy\n", 0) == 0);
  const auto back = io::read_labels_csv(dir / "labels.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].final_label == "b");
  CHECK(back[1].entropy == 1.0 / 3.0);

  io::write_loss_trace(dir / "loss.csv", {2.5, 1.25});
  CHECK(slurp(dir / "loss.csv") == "epoch,mean_loss\n1,2.5\n2,1.25\n");

  EvalReport r;
  r.accuracy = 0.75;
  r.confusion = confusion({0, 0, 1, 1}, {0, 1, 1, 1}, 3);
  r.per_class = per_class_accuracy(r.confusion);
  r.fdr = 1.5;
  const auto json = nlohmann::json::parse(io::eval_report_json(r, {"a", "b", "c"}));
  CHECK(json["accuracy"].get<double>() == 0.75);
  CHECK(json["per_class"]["a"].get<double>() == 0.5);
  CHECK(json["per_class"]["c"].is_null());
  CHECK(json["fdr"].get<double>() == 1.5);
  CHECK(json["silhouette"].is_null());
  CHECK(json.contains("ridge_lambda"));

  io::write_confusion_csv(dir / "cm.csv", r.confusion, {"a", "b", "c"});
  const auto cm = slurp(dir / "cm.csv");
  CHECK(cm.find(",a,b,c\n") != std::string::npos);
  CHECK(cm.find("\na,1,1,0\n") != std::string::npos);

  TheoremReport tr;
  tr.rows.push_back({10, 0, 0.5, 0.6, 0.7});
  io::write_theorem_csv(dir / "t.csv", tr);
  CHECK(slurp(dir / "t.csv").rfind("n,trial,agreement,mean_resultant_length,a_d_reference\n10,0,0.5,", 0) == 0);
}
