#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "melo/convnet.hpp"

namespace melo {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'L', 'O', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}

void put_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

double get_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

nlohmann::ordered_json config_json(const TrainConfig& c) {
  return {{"dropout_p", c.dropout_p}, {"l1_coeff", c.l1_coeff},
          {"batch_size", c.batch_size}, {"patience", c.patience},
          {"max_epochs", c.max_epochs}, {"seed", c.seed},
          {"lr", c.lr},                 {"rho", c.rho},
          {"eps", c.eps},               {"val_fraction", c.val_fraction}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.dropout_p = j.at("dropout_p").get<double>();
  c.l1_coeff = j.at("l1_coeff").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.patience = j.at("patience").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lr = j.at("lr").get<double>();
  c.rho = j.at("rho").get<double>();
  c.eps = j.at("eps").get<double>();
  c.val_fraction = j.at("val_fraction").get<double>();
  return c;
}

// Convolution tensors are written in logical (out, in, kr, kc) order with
// dims [out, in, kh, kw]; vectors with dims [n].
void put_conv(std::ostream& out, const std::string& name, const Mat<double>& w, int in_channels,
              int out_channels, int kh, int kw) {
  put_u32(out, std::uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  put_u32(out, 4);
  put_u64(out, std::uint64_t(out_channels));
  put_u64(out, std::uint64_t(in_channels));
  put_u64(out, std::uint64_t(kh));
  put_u64(out, std::uint64_t(kw));
  for (int o = 0; o < out_channels; ++o)
    for (int i = 0; i < in_channels; ++i)
      for (int kr = 0; kr < kh; ++kr)
        for (int kc = 0; kc < kw; ++kc)
          put_f64(out, w((kc * in_channels + i) * kh + kr, o));
}

void put_vec(std::ostream& out, const std::string& name, const Vec<double>& v) {
  put_u32(out, std::uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  put_u32(out, 1);
  put_u64(out, std::uint64_t(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

struct TensorBlob {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

std::pair<std::string, TensorBlob> get_tensor(std::istream& in) {
  std::uint32_t name_len = get_u32(in);
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  TensorBlob blob;
  std::uint32_t ndim = get_u32(in);
  std::uint64_t count = 1;
  for (std::uint32_t d = 0; d < ndim; ++d) {
    blob.dims.push_back(get_u64(in));
    count *= blob.dims.back();
  }
  blob.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) blob.data[i] = get_f64(in);
  return {name, blob};
}

Mat<double> conv_from_blob(const TensorBlob& b) {
  if (b.dims.size() != 4) throw ParseError("checkpoint conv tensor must have 4 dims", 0);
  int oc = int(b.dims[0]), ic = int(b.dims[1]), kh = int(b.dims[2]), kw = int(b.dims[3]);
  Mat<double> w(kw * ic * kh, oc);
  std::size_t idx = 0;
  for (int o = 0; o < oc; ++o)
    for (int i = 0; i < ic; ++i)
      for (int kr = 0; kr < kh; ++kr)
        for (int kc = 0; kc < kw; ++kc) w((kc * ic + i) * kh + kr, o) = b.data[idx++];
  return w;
}

Vec<double> vec_from_blob(const TensorBlob& b) {
  if (b.dims.size() != 1) throw ParseError("checkpoint vector tensor must have 1 dim", 0);
  Vec<double> v(Eigen::Index(b.dims[0]));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = b.data[std::size_t(i)];
  return v;
}

}  // namespace

void save_checkpoint(const ModelParams<double>& params, const TrainConfig& config,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);

  nlohmann::ordered_json header;
  header["shape"] = {{"rows", params.shape.rows},
                     {"cols", params.shape.cols},
                     {"channels", params.shape.channels},
                     {"kernel_rows", params.shape.kernel_rows},
                     {"kernel_cols", params.shape.kernel_cols}};
  header["bn_eps"] = params.bn_eps;
  header["bn_momentum"] = params.bn_momentum;
  header["train_config"] = config_json(config);
  std::string hdr = header.dump();
  put_u32(out, std::uint32_t(hdr.size()));
  out.write(hdr.data(), std::streamsize(hdr.size()));

  const NetShape& sh = params.shape;
  put_u32(out, 14);  // tensor count
  put_conv(out, "conv1.weight", params.t.conv1_w, 1, sh.channels, sh.kernel_rows,
           sh.kernel_cols);
  put_vec(out, "conv1.bias", params.t.conv1_b);
  put_vec(out, "bn1.gamma", params.t.bn1_gamma);
  put_vec(out, "bn1.beta", params.t.bn1_beta);
  put_vec(out, "bn1.running_mean", params.bn1_mean);
  put_vec(out, "bn1.running_var", params.bn1_var);
  put_conv(out, "conv2.weight", params.t.conv2_w, sh.channels, sh.channels, sh.kernel_rows,
           sh.kernel_cols);
  put_vec(out, "conv2.bias", params.t.conv2_b);
  put_vec(out, "bn2.gamma", params.t.bn2_gamma);
  put_vec(out, "bn2.beta", params.t.bn2_beta);
  put_vec(out, "bn2.running_mean", params.bn2_mean);
  put_vec(out, "bn2.running_var", params.bn2_var);
  put_vec(out, "head.weight", params.t.head_w);
  put_vec(out, "head.bias", params.t.head_b);
  if (!out) throw NumericError("checkpoint write failed: " + path);
}

Checkpoint<double> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("bad checkpoint magic", 0);
  std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 8);

  std::uint32_t hdr_len = get_u32(in);
  std::string hdr(hdr_len, '\0');
  in.read(hdr.data(), hdr_len);
  nlohmann::json header = nlohmann::json::parse(hdr);

  Checkpoint<double> ck;
  ck.params.shape.rows = header.at("shape").at("rows").get<int>();
  ck.params.shape.cols = header.at("shape").at("cols").get<int>();
  ck.params.shape.channels = header.at("shape").at("channels").get<int>();
  ck.params.shape.kernel_rows = header.at("shape").at("kernel_rows").get<int>();
  ck.params.shape.kernel_cols = header.at("shape").at("kernel_cols").get<int>();
  ck.params.bn_eps = header.at("bn_eps").get<double>();
  ck.params.bn_momentum = header.at("bn_momentum").get<double>();
  ck.config = config_from_json(header.at("train_config"));

  std::uint32_t count = get_u32(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    auto [name, blob] = get_tensor(in);
    if (!in) throw ParseError("truncated checkpoint", std::size_t(in.tellg()));
    if (name == "conv1.weight")
      ck.params.t.conv1_w = conv_from_blob(blob);
    else if (name == "conv1.bias")
      ck.params.t.conv1_b = vec_from_blob(blob);
    else if (name == "bn1.gamma")
      ck.params.t.bn1_gamma = vec_from_blob(blob);
    else if (name == "bn1.beta")
      ck.params.t.bn1_beta = vec_from_blob(blob);
    else if (name == "bn1.running_mean")
      ck.params.bn1_mean = vec_from_blob(blob);
    else if (name == "bn1.running_var")
      ck.params.bn1_var = vec_from_blob(blob);
    else if (name == "conv2.weight")
      ck.params.t.conv2_w = conv_from_blob(blob);
    else if (name == "conv2.bias")
      ck.params.t.conv2_b = vec_from_blob(blob);
    else if (name == "bn2.gamma")
      ck.params.t.bn2_gamma = vec_from_blob(blob);
    else if (name == "bn2.beta")
      ck.params.t.bn2_beta = vec_from_blob(blob);
    else if (name == "bn2.running_mean")
      ck.params.bn2_mean = vec_from_blob(blob);
    else if (name == "bn2.running_var")
      ck.params.bn2_var = vec_from_blob(blob);
    else if (name == "head.weight")
      ck.params.t.head_w = vec_from_blob(blob);
    else if (name == "head.bias")
      ck.params.t.head_b = vec_from_blob(blob);
    else
      throw ParseError("unknown checkpoint tensor: " + name, std::size_t(in.tellg()));
  }
  return ck;
}

std::string history_jsonl(const std::vector<EpochStats>& history, bool include_timing) {
  std::ostringstream out;
  for (const EpochStats& e : history) {
    nlohmann::ordered_json j = {{"epoch", e.epoch},
                                {"train_loss", e.train_loss},
                                {"val_loss", e.val_loss},
                                {"elapsed_s", include_timing ? e.elapsed_s : 0.0}};
    out << j.dump() << "\n";
  }
  return out.str();
}

}  // namespace melo
