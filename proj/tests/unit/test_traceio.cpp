#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "archrecon/preprocess.hpp"
#include "archrecon/trace_io.hpp"
#include "oracles.hpp"

using namespace archrecon;

namespace {

Trace sample_trace(int channels, int length, std::uint32_t seed = 1) {
  Trace t;
  for (int c = 0; c < channels; ++c) t.channels.push_back("ch" + std::to_string(c));
  t.samples.resize(channels, length);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 30.0f);
  for (Eigen::Index i = 0; i < t.samples.size(); ++i) t.samples.data()[i] = u(rng);
  t.arch_id = "a00042";
  t.input_shape = InputShape{128, 3, 224, 224};
  return t;
}

Annotation two_layer_annotation(int length) {
  Annotation ann;
  LayerRecord a;
  a.kind = LayerKind::Conv;
  a.start = 0;
  a.end = length / 2 - 1;
  a.layer = LayerSpec::conv({3, 16, 3, 1, 1, 1, 1});
  LayerRecord b;
  b.kind = LayerKind::ReLU;
  b.start = length / 2;
  b.end = length - 1;
  b.layer = LayerSpec::plain(LayerKind::ReLU);
  ann.layers = {a, b};
  ann.labels = labels_from_layers(ann.layers, length);
  return ann;
}

// Little-endian file assembled independently of the writer.
std::string raw_file(const std::string& header, const std::vector<float>& payload) {
  std::string out = "ARCTRACE";
  const auto n = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
  out += header;
  for (float f : payload) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  return out;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(TraceIo, RoundTripIsIdentity) {
  oracle::TempDir dir("io");
  const auto trace = sample_trace(2, 333);
  const auto ann = two_layer_annotation(333);
  write_trace(trace, &ann, dir.path() / "t.trace");
  const auto back = read_trace(dir.path() / "t.trace");
  EXPECT_EQ(back.trace.channels, trace.channels);
  EXPECT_EQ(back.trace.arch_id, trace.arch_id);
  EXPECT_EQ(back.trace.input_shape, trace.input_shape);
  EXPECT_EQ(back.trace.sample_rate_hz, 1000.0);
  ASSERT_EQ(back.trace.samples.cols(), 333);
  EXPECT_EQ(std::memcmp(back.trace.samples.data(), trace.samples.data(), sizeof(float) * 666), 0);
  ASSERT_TRUE(back.annotation.has_value());
  EXPECT_EQ(*back.annotation, ann);
}

TEST(TraceIo, WriterEmitsDocumentedLayout) {
  oracle::TempDir dir("layout");
  Trace t;
  t.channels = {"pp0", "dram"};
  t.samples.resize(2, 3);
  t.samples << 1.0f, 2.0f, 3.0f, -0.5f, 0.25f, 8.0f;
  write_trace(t, nullptr, dir.path() / "t.trace");
  const auto bytes = read_bytes(dir.path() / "t.trace");
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(bytes.substr(0, 8), "ARCTRACE");
  std::uint32_t h = 0;
  for (int i = 0; i < 4; ++i) h |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  const auto header = nlohmann::json::parse(bytes.substr(12, h));
  EXPECT_EQ(header.at("format_version"), 1);
  EXPECT_EQ(header.at("length"), 3);
  EXPECT_EQ(header.at("channels"), (std::vector<std::string>{"pp0", "dram"}));
  // Channel-major payload.
  EXPECT_EQ(bytes.substr(12 + h), raw_file("", {1.0f, 2.0f, 3.0f, -0.5f, 0.25f, 8.0f}).substr(12));
}

TEST(TraceIo, ReadsHandAssembledFile) {
  oracle::TempDir dir("hand");
  const std::string header =
      R"({"format_version":1,"sample_rate_hz":1000,"channels":["pp0"],"length":2,"arch_id":null,"input_shape":null,"valid":true,"extra":5})";
  write_bytes(dir.path() / "t.trace", raw_file(header, {4.5f, 0.125f}));
  const auto f = read_trace(dir.path() / "t.trace");
  EXPECT_EQ(f.trace.sample_rate_hz, 1000.0);
  EXPECT_EQ(f.trace.samples(0, 0), 4.5f);
  EXPECT_EQ(f.trace.samples(0, 1), 0.125f);
  EXPECT_FALSE(f.trace.input_shape.has_value());
  EXPECT_FALSE(f.annotation.has_value());
}

TEST(TraceIo, ChannelLengthMismatchIsMalformed) {
  oracle::TempDir dir("mismatch");
  const std::string header =
      R"({"format_version":1,"sample_rate_hz":1000,"channels":["pp0","dram"],"length":3,"valid":true})";
  write_bytes(dir.path() / "t.trace", raw_file(header, {1, 2, 3, 4, 5}));
  EXPECT_THROW(read_trace(dir.path() / "t.trace"), MalformedFile);
}

TEST(TraceIo, VersionMismatchIsMalformed) {
  oracle::TempDir dir("version");
  const std::string header = R"({"format_version":2,"sample_rate_hz":1000,"channels":["pp0"],"length":1})";
  write_bytes(dir.path() / "t.trace", raw_file(header, {1}));
  EXPECT_THROW(read_trace(dir.path() / "t.trace"), MalformedFile);
}

TEST(TraceIo, BadMagicIsMalformed) {
  oracle::TempDir dir("magic");
  auto bytes = raw_file(R"({"format_version":1,"sample_rate_hz":1000,"channels":["pp0"],"length":1})", {1});
  bytes[0] = 'X';
  write_bytes(dir.path() / "t.trace", bytes);
  EXPECT_THROW(read_trace(dir.path() / "t.trace"), MalformedFile);
}

TEST(TraceIo, InvalidFlagNeedsOptIn) {
  oracle::TempDir dir("invalid");
  auto t = sample_trace(1, 10);
  t.valid = false;
  write_trace(t, nullptr, dir.path() / "t.trace");
  EXPECT_THROW(read_trace(dir.path() / "t.trace"), MalformedFile);
  EXPECT_FALSE(read_trace(dir.path() / "t.trace", {.allow_invalid = true}).trace.valid);
}

TEST(TraceIo, BrokenAnnotationIsRejectedNotRepaired) {
  oracle::TempDir dir("ann");
  const auto t = sample_trace(1, 20);
  const auto ann = two_layer_annotation(20);
  write_trace(t, &ann, dir.path() / "t.trace");
  auto j = annotation_to_json(ann);
  j["labels"][0] = kind_index(LayerKind::ReLU);
  std::ofstream(annotation_path(dir.path() / "t.trace")) << j.dump();
  EXPECT_THROW(read_trace(dir.path() / "t.trace"), MalformedFile);
}

TEST(Annotation, ValidationRules) {
  auto ann = two_layer_annotation(20);
  EXPECT_NO_THROW(validate_annotation(ann, 20));
  auto overlap = ann;
  overlap.layers[1].start = 5;
  EXPECT_THROW(validate_annotation(overlap, 20), MalformedFile);
  auto repeat = ann;
  repeat.layers[1].kind = LayerKind::Conv;
  repeat.labels = labels_from_layers(repeat.layers, 20);
  EXPECT_THROW(validate_annotation(repeat, 20), MalformedFile);
  EXPECT_THROW(validate_annotation(ann, 19), MalformedFile);
}

TEST(Annotation, GapsAreBackground) {
  LayerRecord r;
  r.kind = LayerKind::Add;
  r.start = 2;
  r.end = 3;
  const auto labels = labels_from_layers({r}, 6);
  EXPECT_EQ(labels, (std::vector<int>{7, 7, 6, 6, 7, 7}));
}

TEST(Preprocess, PadToMultiple) {
  EXPECT_EQ(padded_length(100), 112);
  EXPECT_EQ(padded_length(96), 96);
  const auto t = sample_trace(2, 100);
  const auto p = pad_to_multiple(t.samples);
  ASSERT_EQ(p.cols(), 112);
  EXPECT_TRUE(p.leftCols(100) == t.samples);
  const auto z = normalize(p);
  EXPECT_LT(z.rightCols(12).cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(Preprocess, PadThenTruncateIsIdentity) {
  for (int len : {1, 15, 16, 17, 250}) {
    const auto t = sample_trace(2, len, static_cast<std::uint32_t>(len));
    EXPECT_TRUE(pad_to_multiple(t.samples).leftCols(len) == t.samples);
  }
}

TEST(Preprocess, ResizeExamples) {
  Signal x(1, 1024);
  for (int i = 0; i < 1024; ++i) x(0, i) = std::sin(0.01f * static_cast<float>(i));
  EXPECT_TRUE(resize(x, 1024).isApprox(x));

  Signal c = Signal::Constant(2, 2, 3.5f);
  const auto rc = resize(c, 1024);
  EXPECT_EQ(rc.cols(), 1024);
  EXPECT_EQ(rc.rows(), 2);
  EXPECT_LT((rc.array() - 3.5f).abs().maxCoeff(), 1e-6f);

  Signal ramp(1, 512);
  for (int i = 0; i < 512; ++i) ramp(0, i) = static_cast<float>(i);
  const auto rr = resize(ramp, 1024);
  EXPECT_FLOAT_EQ(rr(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(rr(0, 1023), 511.0f);
  for (int i = 0; i < 1024; ++i) EXPECT_NEAR(rr(0, i), 511.0 * i / 1023.0, 1e-3);
}

TEST(Preprocess, NormalizeExamples) {
  Signal x(2, 2);
  x << 0.0f, 2.0f, 5.0f, 5.0f;
  const auto z = normalize(x);
  EXPECT_FLOAT_EQ(z(0, 0), -1.0f);
  EXPECT_FLOAT_EQ(z(0, 1), 1.0f);
  EXPECT_EQ(z(1, 0), 0.0f);
  EXPECT_EQ(z(1, 1), 0.0f);
  const auto t = sample_trace(3, 77);
  const auto zt = normalize(t.samples);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(zt.row(c).mean(), 0.0, 1e-6);
}

TEST(Segment, CutCarriesRecordAndOffset) {
  const auto t = sample_trace(2, 40);
  const auto ann = two_layer_annotation(40);
  const auto seg = cut_segment(t, ann.layers[1]);
  EXPECT_EQ(seg.values.cols(), 20);
  EXPECT_EQ(seg.kind, LayerKind::ReLU);
  EXPECT_EQ(seg.start, 20);
  EXPECT_EQ(seg.source, trace_key(t));
  EXPECT_TRUE(seg.values == t.samples.middleCols(20, 20));
}
