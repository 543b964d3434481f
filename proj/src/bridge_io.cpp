#include "lenssim/bridge_io.hpp"

#include <map>
#include <numeric>

#include "binary.hpp"

namespace lenssim {

namespace {

constexpr std::string_view kWeightMagic = "PALW";
constexpr std::string_view kTensorMagic = "FTNS";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 30;

template <typename Dense>
ParameterRecord record(std::string name, std::string layout, std::vector<std::uint32_t> dims,
                       const Dense& values) {
  ParameterRecord r{std::move(name), std::move(layout), std::move(dims), {}};
  r.values.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) r.values.push_back(static_cast<float>(values.data()[i]));
  return r;
}

void add_norm(std::vector<ParameterRecord>& out, const std::string& prefix, const NormParams<double>& n) {
  const auto c = static_cast<std::uint32_t>(n.gamma.size());
  out.push_back(record(prefix + ".gamma", "C", {c}, n.gamma));
  out.push_back(record(prefix + ".beta", "C", {c}, n.beta));
  out.push_back(record(prefix + ".mean", "C", {c}, n.mean));
  out.push_back(record(prefix + ".var", "C", {c}, n.var));
}

std::uint64_t element_count(const std::vector<std::uint32_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    require(d >= 1 && n * d <= kMaxElements, ErrorKind::dimension_overflow,
            "parameter dimensions overflow");
    n *= d;
  }
  return n;
}

class RecordTable {
 public:
  explicit RecordTable(const std::vector<ParameterRecord>& records) {
    for (const auto& r : records) {
      require(element_count(r.dims) == r.values.size(), ErrorKind::dimension,
              r.name + ": value count does not match dims");
      require(by_name_.emplace(r.name, &r).second, ErrorKind::parameter,
              "duplicate parameter " + r.name);
    }
  }

  const ParameterRecord& get(const std::string& name, std::size_t rank) const {
    auto it = by_name_.find(name);
    require(it != by_name_.end(), ErrorKind::parameter, "missing parameter " + name);
    require(it->second->dims.size() == rank, ErrorKind::dimension, name + ": unexpected rank");
    return *it->second;
  }

  VectorX<double> vector(const std::string& name) const {
    const auto& r = get(name, 1);
    VectorX<double> v(r.values.size());
    for (std::size_t i = 0; i < r.values.size(); ++i) v(i) = r.values[i];
    return v;
  }

  MatrixX<double> matrix(const std::string& name) const {
    const auto& r = get(name, 2);
    MatrixX<double> m(r.dims[0], r.dims[1]);
    for (std::size_t i = 0; i < r.values.size(); ++i) m.data()[i] = r.values[i];
    return m;
  }

  Kernel4<double> kernel(const std::string& name) const {
    const auto& r = get(name, 4);
    Kernel4<double> k(r.dims[0], r.dims[1], r.dims[2], r.dims[3]);
    for (std::size_t i = 0; i < r.values.size(); ++i) k.data()[i] = r.values[i];
    return k;
  }

  NormParams<double> norm(const std::string& prefix) const {
    return {vector(prefix + ".gamma"), vector(prefix + ".beta"), vector(prefix + ".mean"),
            vector(prefix + ".var")};
  }

 private:
  std::map<std::string, const ParameterRecord*> by_name_;
};

std::vector<std::uint32_t> dims_of(const Kernel4<double>& k) {
  std::vector<std::uint32_t> d;
  for (auto v : k.dimensions()) d.push_back(static_cast<std::uint32_t>(v));
  return d;
}

std::vector<std::uint32_t> dims_of(const MatrixX<double>& m) {
  return {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
}

std::vector<std::uint32_t> dims_of(const VectorX<double>& v) { return {static_cast<std::uint32_t>(v.size())}; }

}  // namespace

std::vector<ParameterRecord> weight_records(const BridgeWeights<double>& w) {
  w.validate();
  std::vector<ParameterRecord> out;
  out.push_back(record("small.conv.weight", "OIHW", dims_of(w.small_conv), w.small_conv));
  out.push_back(record("small.conv.bias", "C", dims_of(w.small_bias), w.small_bias));
  add_norm(out, "small.norm", w.small_norm);
  out.push_back(record("large.dw.weight", "OIHW", dims_of(w.large_dw), w.large_dw));
  out.push_back(record("large.dw.bias", "C", dims_of(w.large_dw_bias), w.large_dw_bias));
  out.push_back(record("large.pw.weight", "OI", dims_of(w.large_pw), w.large_pw));
  out.push_back(record("large.pw.bias", "C", dims_of(w.large_pw_bias), w.large_pw_bias));
  add_norm(out, "large.norm", w.large_norm);
  out.push_back(record("laplacian.kernel", "HW", dims_of(w.laplacian), w.laplacian));
  add_norm(out, "laplacian.norm", w.laplacian_norm);
  out.push_back(record("se.fc1.weight", "OI", dims_of(w.se_fc1), w.se_fc1));
  out.push_back(record("se.fc1.bias", "C", dims_of(w.se_fc1_bias), w.se_fc1_bias));
  out.push_back(record("se.fc2.weight", "OI", dims_of(w.se_fc2), w.se_fc2));
  out.push_back(record("se.fc2.bias", "C", dims_of(w.se_fc2_bias), w.se_fc2_bias));
  add_norm(out, "out.norm", w.out_norm);
  return out;
}

BridgeWeights<double> weights_from_records(const std::vector<ParameterRecord>& records) {
  const RecordTable t(records);
  BridgeWeights<double> w;
  w.small_conv = t.kernel("small.conv.weight");
  w.channels = static_cast<int>(w.small_conv.dimension(0));
  const auto per_group = w.small_conv.dimension(1);
  require(per_group >= 1 && w.channels % per_group == 0, ErrorKind::dimension,
          "small conv input width must divide channels");
  w.groups = static_cast<int>(w.channels / per_group);
  w.small_bias = t.vector("small.conv.bias");
  w.small_norm = t.norm("small.norm");
  w.large_dw = t.kernel("large.dw.weight");
  w.large_dw_bias = t.vector("large.dw.bias");
  w.large_pw = t.matrix("large.pw.weight");
  w.large_pw_bias = t.vector("large.pw.bias");
  w.large_norm = t.norm("large.norm");
  w.laplacian = t.matrix("laplacian.kernel");
  w.laplacian_norm = t.norm("laplacian.norm");
  w.se_fc1 = t.matrix("se.fc1.weight");
  w.se_fc1_bias = t.vector("se.fc1.bias");
  w.se_fc2 = t.matrix("se.fc2.weight");
  w.se_fc2_bias = t.vector("se.fc2.bias");
  w.out_norm = t.norm("out.norm");
  w.validate();
  return w;
}

std::vector<std::uint8_t> encode_weights(const BridgeWeights<double>& w) {
  const auto records = weight_records(w);
  std::vector<std::uint8_t> out;
  binary::put_bytes(out, kWeightMagic);
  binary::put_u32(out, kVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    binary::put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    binary::put_bytes(out, r.name);
    binary::put_u32(out, static_cast<std::uint32_t>(r.layout.size()));
    binary::put_bytes(out, r.layout);
    binary::put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) binary::put_u32(out, d);
    for (float v : r.values) binary::put_f32(out, v);
  }
  return out;
}

BridgeWeights<double> decode_weights(std::span<const std::uint8_t> bytes) {
  binary::Reader in(bytes);
  require(in.str(4) == kWeightMagic, ErrorKind::bad_magic, "not a bridge weight file");
  const auto version = in.u32();
  require(version == kVersion, ErrorKind::unsupported_version,
          "unsupported weight file version " + std::to_string(version));
  const auto count = in.u32();
  require(count <= 4096, ErrorKind::dimension_overflow, "too many parameter records");
  std::vector<ParameterRecord> records(count);
  for (auto& r : records) {
    const auto name_len = in.u32();
    require(name_len <= 256, ErrorKind::dimension_overflow, "parameter name too long");
    r.name = in.str(name_len);
    const auto layout_len = in.u32();
    require(layout_len <= 16, ErrorKind::dimension_overflow, "layout string too long");
    r.layout = in.str(layout_len);
    const auto ndim = in.u32();
    require(ndim >= 1 && ndim <= 8, ErrorKind::dimension_overflow, "invalid parameter rank");
    r.dims.resize(ndim);
    for (auto& d : r.dims) d = in.u32();
    const auto n = element_count(r.dims);
    require(in.remaining() >= n * 4, ErrorKind::truncated, r.name + ": payload truncated");
    r.values.resize(n);
    for (auto& v : r.values) v = in.f32();
  }
  return weights_from_records(records);
}

void write_weights(const std::filesystem::path& path, const BridgeWeights<double>& w) {
  binary::write_file(path, encode_weights(w));
}

BridgeWeights<double> read_weights(const std::filesystem::path& path) {
  return decode_weights(binary::read_file(path));
}

std::vector<std::uint8_t> encode_tensor(const FeatureTensor<double>& t) {
  std::vector<std::uint8_t> out;
  binary::put_bytes(out, kTensorMagic);
  binary::put_u32(out, kVersion);
  binary::put_u32(out, 4);
  for (auto d : t.dimensions()) binary::put_u32(out, static_cast<std::uint32_t>(d));
  for (Eigen::Index i = 0; i < t.size(); ++i) binary::put_f32(out, static_cast<float>(t.data()[i]));
  return out;
}

FeatureTensor<double> decode_tensor(std::span<const std::uint8_t> bytes) {
  binary::Reader in(bytes);
  require(in.str(4) == kTensorMagic, ErrorKind::bad_magic, "not a feature tensor file");
  const auto version = in.u32();
  require(version == kVersion, ErrorKind::unsupported_version,
          "unsupported tensor file version " + std::to_string(version));
  require(in.u32() == 4, ErrorKind::dimension, "feature tensors must be rank 4");
  std::vector<std::uint32_t> dims(4);
  for (auto& d : dims) d = in.u32();
  const auto n = element_count(dims);
  require(in.remaining() >= n * 4, ErrorKind::truncated, "tensor payload truncated");
  FeatureTensor<double> t(dims[0], dims[1], dims[2], dims[3]);
  for (std::uint64_t i = 0; i < n; ++i) {
    const double v = in.f32();
    require(std::isfinite(v), ErrorKind::parameter, "feature tensor contains non-finite values");
    t.data()[i] = v;
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const FeatureTensor<double>& t) {
  binary::write_file(path, encode_tensor(t));
}

FeatureTensor<double> read_tensor(const std::filesystem::path& path) {
  return decode_tensor(binary::read_file(path));
}

}  // namespace lenssim
