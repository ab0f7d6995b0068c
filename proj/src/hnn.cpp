#include "mmdcal/hnn.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "mmdcal/errors.hpp"
#include "mmdcal/rng.hpp"

namespace mmdcal {
namespace {

constexpr const char* kCheckpointFormat = "mmdcal-hnn";
constexpr int kCheckpointVersion = 1;

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = rng.uniform(-a, a);
  return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

}  // namespace

HnnModel::HnnModel(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), seed_(seed) {
  if (input_dim == 0 || hidden_dim == 0) throw Error(Errc::kConfigError, "model dimensions must be >= 1");
  Rng rng(seed);
  w1_ = glorot(rng, input_dim, hidden_dim);
  b1_ = Tensor::zeros({hidden_dim}, true);
  w2_ = glorot(rng, hidden_dim, hidden_dim);
  b2_ = Tensor::zeros({hidden_dim}, true);
  w3_ = glorot(rng, hidden_dim, 2);
  b3_ = Tensor::zeros({2}, true);
}

HnnOutput HnnModel::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != input_dim_) {
    throw Error(Errc::kShapeMismatch, "model expects [n," + std::to_string(input_dim_) + "] input, got " +
                                          shape_string(x.shape()));
  }
  auto h1 = tape.relu(tape.broadcast_row(tape.matmul(x, w1_), b1_));
  auto h2 = tape.relu(tape.broadcast_row(tape.matmul(h1, w2_), b2_));
  auto head = tape.broadcast_row(tape.matmul(h2, w3_), b3_);
  return {tape.column(head, 0), tape.column(head, 1)};
}

std::vector<GaussianPrediction> HnnModel::predict_distribution(const Tensor& x) const {
  Tape tape(Tape::Mode::kInference);
  const auto out = forward(tape, x);
  std::vector<GaussianPrediction> preds(out.mu.numel());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i] = {out.mu[i], std::exp(0.5 * out.s[i])};
  }
  return preds;
}

std::vector<Tensor> HnnModel::parameters() const { return {w1_, b1_, w2_, b2_, w3_, b3_}; }

std::size_t HnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

std::vector<double> HnnModel::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : parameters()) flat.insert(flat.end(), p.data().begin(), p.data().end());
  return flat;
}

HnnModel HnnModel::clone() const {
  HnnModel copy = *this;
  copy.w1_ = w1_.clone();
  copy.b1_ = b1_.clone();
  copy.w2_ = w2_.clone();
  copy.b2_ = b2_.clone();
  copy.w3_ = w3_.clone();
  copy.b3_ = b3_.clone();
  return copy;
}

void HnnModel::copy_parameters_from(const HnnModel& other) {
  if (other.input_dim_ != input_dim_ || other.hidden_dim_ != hidden_dim_) {
    throw Error(Errc::kShapeMismatch, "copy_parameters_from: model dimensions differ");
  }
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    std::copy(src[i].data().begin(), src[i].data().end(), dst[i].mutable_data().begin());
  }
}

void HnnModel::shift_log_variance(double delta) { b3_.mutable_data()[1] += delta; }

void HnnModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["input_dim"] = input_dim_;
  j["hidden_dim"] = hidden_dim_;
  j["seed"] = seed_;
  const char* names[] = {"w1", "b1", "w2", "b2", "w3", "b3"};
  const auto params = parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    j["parameters"][names[i]] = std::vector<double>(params[i].data().begin(), params[i].data().end());
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::kFileNotFound, "cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
}

HnnModel HnnModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kMissingCheckpoint, path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParseError, path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat || j.value("version", 0) != kCheckpointVersion) {
    throw Error(Errc::kParseError, path.string() + ": not a version-1 mmdcal checkpoint");
  }
  HnnModel model(j.at("input_dim").get<std::size_t>(), j.at("hidden_dim").get<std::size_t>(),
                 j.at("seed").get<std::uint64_t>());
  const char* names[] = {"w1", "b1", "w2", "b2", "w3", "b3"};
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto values = j.at("parameters").at(names[i]).get<std::vector<double>>();
    if (values.size() != params[i].numel()) {
      throw Error(Errc::kParseError, path.string() + ": parameter " + names[i] + " has wrong length");
    }
    std::copy(values.begin(), values.end(), params[i].mutable_data().begin());
  }
  return model;
}

}  // namespace mmdcal
