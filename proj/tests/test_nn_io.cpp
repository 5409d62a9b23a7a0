#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include <doctest.h>

#include "gbopt/nn.hpp"

using gbopt::ActivationKind;
using gbopt::NeuralNet;

namespace {

std::filesystem::path tmp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_bytes(const std::filesystem::path& p,
                 const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void append_pod(std::vector<char>& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.insert(buf.end(), tmp, tmp + sizeof(T));
}

// A syntactically valid single-layer 2x2 file, for corruption tests.
std::vector<char> valid_file_bytes() {
  std::vector<char> b;
  b.insert(b.end(), {'G', 'B', 'N', 'N'});
  append_pod<std::uint32_t>(b, 1);  // version
  append_pod<std::uint32_t>(b, 1);  // layers
  append_pod<std::uint32_t>(b, 2);  // rows
  append_pod<std::uint32_t>(b, 2);  // cols
  append_pod<std::uint8_t>(b, 1);   // tanh
  for (int i = 0; i < 4; ++i) append_pod<double>(b, 0.25 * i);
  for (int i = 0; i < 2; ++i) append_pod<double>(b, -1.0 * i);
  return b;
}

bool nets_bit_equal(const NeuralNet& a, const NeuralNet& b) {
  if (a.layer_count() != b.layer_count()) return false;
  for (Eigen::Index l = 0; l < a.layer_count(); ++l) {
    const auto& la = a.layer(l);
    const auto& lb = b.layer(l);
    if (la.activation != lb.activation) return false;
    if (la.weight.rows() != lb.weight.rows() ||
        la.weight.cols() != lb.weight.cols())
      return false;
    if (std::memcmp(la.weight.data(), lb.weight.data(),
                    sizeof(double) * static_cast<size_t>(la.weight.size())))
      return false;
    if (std::memcmp(la.bias.data(), lb.bias.data(),
                    sizeof(double) * static_cast<size_t>(la.bias.size())))
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("binary round trip is bit-exact") {
  const auto nn = gbopt::random_net({5, 9, 7, 3}, ActivationKind::Tanh,
                                    ActivationKind::Softmax, 2024);
  const auto p = tmp_path("gbopt_roundtrip.gbnn");
  gbopt::save_weights(nn, p.string());
  const NeuralNet back = gbopt::load_weights(p.string());
  CHECK(nets_bit_equal(nn, back));
  std::filesystem::remove(p);
}

TEST_CASE("json round trip is bit-exact") {
  const auto nn = gbopt::random_net({4, 6, 2}, ActivationKind::Sigmoid,
                                    ActivationKind::Linear, 99);
  const auto p = tmp_path("gbopt_roundtrip.json");
  gbopt::save_weights(nn, p.string());
  const NeuralNet back = gbopt::load_weights(p.string());
  CHECK(nets_bit_equal(nn, back));
  std::filesystem::remove(p);
}

TEST_CASE("a valid handcrafted file loads") {
  const auto p = tmp_path("gbopt_valid.gbnn");
  write_bytes(p, valid_file_bytes());
  const NeuralNet nn = gbopt::load_weights(p.string());
  CHECK(nn.input_dim() == 2);
  CHECK(nn.output_dim() == 2);
  CHECK(nn.layer(0).activation == ActivationKind::Tanh);
  CHECK(nn.layer(0).weight(0, 1) == 0.25);  // row-major on disk
  CHECK(nn.layer(0).weight(1, 0) == 0.5);
  std::filesystem::remove(p);
}

TEST_CASE("empty file raises the malformed-header error") {
  const auto p = tmp_path("gbopt_empty.gbnn");
  write_bytes(p, {});
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::FormatError);
  std::filesystem::remove(p);
}

TEST_CASE("wrong magic raises the malformed-header error") {
  auto bytes = valid_file_bytes();
  bytes[0] = 'X';
  const auto p = tmp_path("gbopt_magic.gbnn");
  write_bytes(p, bytes);
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::FormatError);
  std::filesystem::remove(p);
}

TEST_CASE("unsupported version raises the malformed-header error") {
  auto bytes = valid_file_bytes();
  bytes[4] = 2;
  const auto p = tmp_path("gbopt_version.gbnn");
  write_bytes(p, bytes);
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::FormatError);
  std::filesystem::remove(p);
}

TEST_CASE("truncated payload raises the truncation error") {
  auto bytes = valid_file_bytes();
  const auto p = tmp_path("gbopt_trunc.gbnn");
  SUBCASE("cut inside the weights") {
    bytes.resize(bytes.size() - 2 * sizeof(double) - 3);
  }
  SUBCASE("cut inside the biases") { bytes.resize(bytes.size() - 9); }
  SUBCASE("cut inside a layer header") { bytes.resize(14); }
  write_bytes(p, bytes);
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::TruncatedError);
  std::filesystem::remove(p);
}

TEST_CASE("trailing bytes raise the malformed-header error") {
  auto bytes = valid_file_bytes();
  bytes.push_back('\0');
  const auto p = tmp_path("gbopt_trailing.gbnn");
  write_bytes(p, bytes);
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::FormatError);
  std::filesystem::remove(p);
}

TEST_CASE("zero layer count raises the dimension error") {
  std::vector<char> b;
  b.insert(b.end(), {'G', 'B', 'N', 'N'});
  append_pod<std::uint32_t>(b, 1);
  append_pod<std::uint32_t>(b, 0);
  const auto p = tmp_path("gbopt_nolayers.gbnn");
  write_bytes(p, b);
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::DimensionError);
  std::filesystem::remove(p);
}

TEST_CASE("non-chaining layer widths raise the dimension error") {
  std::vector<char> b;
  b.insert(b.end(), {'G', 'B', 'N', 'N'});
  append_pod<std::uint32_t>(b, 1);
  append_pod<std::uint32_t>(b, 2);
  // Layer 0: 2x2.
  append_pod<std::uint32_t>(b, 2);
  append_pod<std::uint32_t>(b, 2);
  append_pod<std::uint8_t>(b, 1);
  for (int i = 0; i < 6; ++i) append_pod<double>(b, 0.1);
  // Layer 1 claims 3 input columns; the previous layer has 2 outputs.
  append_pod<std::uint32_t>(b, 2);
  append_pod<std::uint32_t>(b, 3);
  append_pod<std::uint8_t>(b, 0);
  for (int i = 0; i < 8; ++i) append_pod<double>(b, 0.1);
  const auto p = tmp_path("gbopt_chain.gbnn");
  write_bytes(p, b);
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::DimensionError);
  std::filesystem::remove(p);
}

TEST_CASE("unknown activation code raises the malformed-header error") {
  auto bytes = valid_file_bytes();
  bytes[20] = 9;  // activation byte of layer 0
  const auto p = tmp_path("gbopt_act.gbnn");
  write_bytes(p, bytes);
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::FormatError);
  std::filesystem::remove(p);
}

TEST_CASE("json with bias length mismatching weight rows") {
  const auto p = tmp_path("gbopt_badbias.json");
  std::ofstream out(p);
  out << R"({"magic": "GBNN", "version": 1, "layers": [
        {"rows": 2, "cols": 2, "activation": 1,
         "weights": [[1.0, 0.0], [0.0, 1.0]], "biases": [0.0]}]})";
  out.close();
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::DimensionError);
  std::filesystem::remove(p);
}

TEST_CASE("json that is not json raises the malformed-header error") {
  const auto p = tmp_path("gbopt_notjson.json");
  std::ofstream out(p);
  out << "{ definitely not json";
  out.close();
  CHECK_THROWS_AS(gbopt::load_weights(p.string()), gbopt::FormatError);
  std::filesystem::remove(p);
}

TEST_CASE("missing file raises the io error") {
  CHECK_THROWS_AS(gbopt::load_weights("/nonexistent/dir/net.gbnn"),
                  gbopt::IoError);
}
