#include "hsd/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hsd/error.hpp"
#include "hsd/rng.hpp"

namespace hsd {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
}

ClassifierModel ClassifierModel::zeros(FeatureConfig feature_config, TrainConfig train_config) {
  feature_config.validate();
  ClassifierModel model;
  model.params = HeadParams::zeros(feature_config.dimension);
  model.feature_config = std::move(feature_config);
  model.train_config = train_config;
  return model;
}

Probabilities forward(const ClassifierModel& model, const FeatureVector& features) {
  for (const auto& [index, value] : features.entries) {
    if (index >= model.params.dimension) {
      throw Error(ErrorCode::DimensionMismatch,
                  "feature index " + std::to_string(index) + " outside model dimension " +
                      std::to_string(model.params.dimension));
    }
  }
  const auto z = kernels::logits(model.params, features);
  return kernels::softmax2(z[0], z[1]);
}

double bce_loss(double p_hate, Label label) { return kernels::bce(p_hate, label); }

namespace {

std::vector<Sample> as_samples(std::span<const LabeledFeatures> batch, std::size_t dimension) {
  std::vector<Sample> samples;
  samples.reserve(batch.size());
  for (const auto& item : batch) {
    if (!item.features.empty() && item.features.entries.back().first >= dimension) {
      throw Error(ErrorCode::DimensionMismatch, "feature index outside model dimension");
    }
    samples.push_back({&item.features, item.label});
  }
  return samples;
}

AdamCoefficients coefficients(const TrainConfig& config, std::uint64_t t) {
  AdamCoefficients c;
  c.learning_rate = config.learning_rate;
  c.beta1 = config.adam_beta1;
  c.beta2 = config.adam_beta2;
  c.eps = config.adam_eps;
  c.bias_correction1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(t));
  c.bias_correction2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(t));
  return c;
}

}  // namespace

HeadParams batch_gradient(const ClassifierModel& model, std::span<const LabeledFeatures> batch,
                          Exec exec) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "batch_gradient on an empty batch");
  const auto samples = as_samples(batch, model.params.dimension);
  HeadParams grad;
  kernels::batch_gradient(exec, model.params, samples, grad);
  return grad;
}

void adam_step(HeadParams& params, const HeadParams& grads, AdamState& state,
               const TrainConfig& config, Exec exec) {
  if (grads.weights.size() != params.weights.size() ||
      state.m.weights.size() != params.weights.size() ||
      state.v.weights.size() != params.weights.size()) {
    throw Error(ErrorCode::DimensionMismatch, "adam_step: parameter shapes disagree");
  }
  state.t += 1;
  const AdamCoefficients c = coefficients(config, state.t);
  const double decay = 1.0 - config.learning_rate * config.weight_decay;
  kernels::adam_update(exec, params.weights, grads.weights, state.m.weights, state.v.weights, c,
                       decay);
  kernels::serial::adam_update(params.bias, grads.bias, state.m.bias, state.v.bias, c, 1.0);
}

ClassifierModel train(const Corpus& corpus, const FeatureConfig& feature_config,
                      const TrainConfig& config, const ProgressSink& progress, Exec exec) {
  feature_config.validate();
  config.validate();
  for (Label label : kLabels) {
    if (corpus.count(label) == 0) {
      throw Error(ErrorCode::SingleClassCorpus,
                  "training corpus has no " + std::string(to_string(label)) + " examples");
    }
  }

  ClassifierModel model = ClassifierModel::zeros(feature_config, config);
  if (config.epochs == 0) return model;

  const HashedNgramExtractor extractor(feature_config);
  const auto n = static_cast<std::int64_t>(corpus.size());
  std::vector<FeatureVector> features(corpus.size());
#pragma omp parallel for schedule(dynamic, 64) if (exec == Exec::Parallel && n >= 256)
  for (std::int64_t i = 0; i < n; ++i) features[i] = extractor.extract(corpus[i].text);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  AdamState state = AdamState::fresh(feature_config.dimension);
  HeadParams grad;
  std::vector<Sample> batch;
  Rng rng(config.seed);
  for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back({&features[order[i]], corpus[order[i]].label});
      }
      loss_sum += kernels::batch_gradient(exec, model.params, batch, grad);
      adam_step(model.params, grad, state, config, exec);
    }
    if (progress) progress({epoch, loss_sum / static_cast<double>(order.size())});
  }
  return model;
}

Classification predict(const ClassifierModel& model, std::string_view text, double threshold) {
  const auto fv = featurize(tokenize(text, model.feature_config), model.feature_config);
  const double p_hate = forward(model, fv).hate;
  return {p_hate >= threshold ? Label::Hate : Label::NoHate, p_hate};
}

std::vector<Classification> predict_all(const ClassifierModel& model,
                                        std::span<const std::string> texts, double threshold,
                                        Exec exec) {
  const auto n = static_cast<std::int64_t>(texts.size());
  std::vector<FeatureVector> features(texts.size());
#pragma omp parallel for schedule(dynamic, 64) if (exec == Exec::Parallel && n >= 256)
  for (std::int64_t i = 0; i < n; ++i) {
    features[i] = featurize(tokenize(texts[i], model.feature_config), model.feature_config);
  }
  std::vector<double> p(texts.size());
  kernels::hate_probabilities(exec, model.params, features, p);
  std::vector<Classification> out;
  out.reserve(texts.size());
  for (double p_hate : p) out.push_back({p_hate >= threshold ? Label::Hate : Label::NoHate, p_hate});
  return out;
}

// ---------------------------------------------------------------------------
// Model container
//
//   "HSDB" | u32 version | u64 payload_size | u64 fnv1a(payload) | payload
//
// payload (little-endian):
//   u32 max_tokens | u32 n_orders | i32 orders[n] | u64 dimension | u8 normalize
//   u32 epochs | f64 lr | f64 weight_decay | f64 beta1 | f64 beta2 | f64 eps
//   u32 batch_size | u64 seed | u8 shuffle
//   i64 trained_at
//   u64 n_weights | f64 weights[n] | f64 bias[2]

namespace {

constexpr char kMagic[4] = {'H', 'S', 'D', 'B'};
constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 8;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::uint64_t le(int bytes) {
    if (remaining() < static_cast<std::size_t>(bytes)) {
      throw Error(ErrorCode::CorruptPayload, "model payload truncated");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += bytes;
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void corrupt(const std::string& what) { throw Error(ErrorCode::CorruptPayload, "corrupt model: " + what); }

}  // namespace

std::string encode_model(const ClassifierModel& model) {
  Writer p;
  const auto& fc = model.feature_config;
  p.u32(static_cast<std::uint32_t>(fc.max_tokens));
  p.u32(static_cast<std::uint32_t>(fc.ngram_orders.size()));
  for (int order : fc.ngram_orders) p.i32(order);
  p.u64(fc.dimension);
  p.u8(fc.normalize ? 1 : 0);

  const auto& tc = model.train_config;
  p.u32(tc.epochs);
  p.f64(tc.learning_rate);
  p.f64(tc.weight_decay);
  p.f64(tc.adam_beta1);
  p.f64(tc.adam_beta2);
  p.f64(tc.adam_eps);
  p.u32(tc.batch_size);
  p.u64(tc.seed);
  p.u8(tc.shuffle ? 1 : 0);

  p.i64(model.trained_at);
  p.u64(model.params.weights.size());
  for (double w : model.params.weights) p.f64(w);
  p.f64(model.params.bias[0]);
  p.f64(model.params.bias[1]);
  const std::string payload = p.take();

  Writer h;
  for (char c : kMagic) h.u8(static_cast<std::uint8_t>(c));
  h.u32(kModelFormatVersion);
  h.u64(payload.size());
  h.u64(stable_hash(payload));
  return h.take() + payload;
}

ClassifierModel decode_model(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not a model file (expected magic \"HSDB\")");
  }
  if (bytes.size() < kHeaderSize) corrupt("header truncated");
  Reader header(bytes.substr(4, kHeaderSize - 4));
  const std::uint32_t version = header.u32();
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::UnsupportedVersion,
                "unsupported model format version " + std::to_string(version) +
                    " (this build reads version " + std::to_string(kModelFormatVersion) + ")");
  }
  const std::uint64_t size = header.u64();
  const std::uint64_t checksum = header.u64();
  const std::string_view payload = bytes.substr(kHeaderSize);
  if (payload.size() != size) {
    corrupt("payload is " + std::to_string(payload.size()) + " bytes, header says " +
            std::to_string(size));
  }
  if (stable_hash(payload) != checksum) corrupt("checksum mismatch");

  Reader r(payload);
  ClassifierModel model;
  auto& fc = model.feature_config;
  fc.max_tokens = r.u32();
  const std::uint32_t n_orders = r.u32();
  if (n_orders > 64) corrupt("implausible n-gram order count");
  fc.ngram_orders.clear();
  for (std::uint32_t i = 0; i < n_orders; ++i) fc.ngram_orders.push_back(r.i32());
  fc.dimension = r.u64();
  fc.normalize = r.u8() != 0;
  try {
    fc.validate();
  } catch (const Error& e) {
    corrupt(e.what());
  }

  auto& tc = model.train_config;
  tc.epochs = r.u32();
  tc.learning_rate = r.f64();
  tc.weight_decay = r.f64();
  tc.adam_beta1 = r.f64();
  tc.adam_beta2 = r.f64();
  tc.adam_eps = r.f64();
  tc.batch_size = r.u32();
  tc.seed = r.u64();
  tc.shuffle = r.u8() != 0;

  model.trained_at = r.i64();
  const std::uint64_t n_weights = r.u64();
  if (n_weights != 2 * fc.dimension) corrupt("weight count does not match dimension");
  if (r.remaining() != (n_weights + 2) * 8) corrupt("weight block size mismatch");
  model.params.dimension = fc.dimension;
  model.params.weights.resize(n_weights);
  for (auto& w : model.params.weights) w = r.f64();
  model.params.bias[0] = r.f64();
  model.params.bias[1] = r.f64();

  const bool finite = std::all_of(model.params.weights.begin(), model.params.weights.end(),
                                   [](double w) { return std::isfinite(w); }) &&
                      std::isfinite(model.params.bias[0]) && std::isfinite(model.params.bias[1]);
  if (!finite) corrupt("non-finite parameter");
  return model;
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  const std::string bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_model(buffer.str());
}

}  // namespace hsd
