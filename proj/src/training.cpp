#include "rankprompt/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rankprompt/binary_io.hpp"
#include "rankprompt/errors.hpp"
#include "rankprompt/rng.hpp"

namespace rankprompt {
namespace {

struct NamedParam {
  const char* name;
  Matrix* value;
  bool last_layer;
};

std::vector<NamedParam> trainable_params(Model& model) {
  std::vector<NamedParam> out = {
      {kImageW1, &model.image.w1, false},
      {kImageB1, &model.image.b1, false},
      {kImageW2, &model.image.w2, true},
      {kImageB2, &model.image.b2, true},
  };
  const PromptConfig& p = model.config.prompt;
  switch (model.config.method) {
    case Method::OrdinalClip:
    case Method::CoOp:
      if (p.tune_ctx) out.push_back({kContextParam, &model.prompt.context, false});
      if (p.tune_rank) out.push_back({kRankParam, &model.prompt.base_ranks, false});
      break;
    case Method::Baseline:
      out.push_back({kHeadWeights, &model.head.weights, true});
      out.push_back({kHeadBias, &model.head.bias, true});
      break;
    case Method::ZeroShot:
      out.clear();
      break;
  }
  return out;
}

std::string parameter_norms(const Model& model) {
  std::ostringstream os;
  os << "image.w1=" << frobenius_norm(model.image.w1) << " image.b1=" << frobenius_norm(model.image.b1)
     << " image.w2=" << frobenius_norm(model.image.w2) << " image.b2=" << frobenius_norm(model.image.b2);
  if (model.uses_prompts()) {
    os << " prompt.context=" << frobenius_norm(model.prompt.context)
       << " prompt.ranks=" << frobenius_norm(model.prompt.base_ranks);
  } else {
    os << " head.w=" << frobenius_norm(model.head.weights) << " head.b=" << frobenius_norm(model.head.bias);
  }
  return os.str();
}

Var rank_embeddings(Tape& tape, const Model& model, Var ranks_param) {
  if (model.config.method == Method::OrdinalClip) {
    return interpolate_rank_embeddings(tape, model.interpolation, ranks_param);
  }
  return ranks_param;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy(m.row(idx[k]).begin(), m.row(idx[k]).end(), out.row(k).begin());
  return out;
}

void write_tensor(ByteWriter& w, const Matrix& m) {
  w.u64(m.rows());
  w.u64(m.cols());
  w.matrix_values(m);
}

void read_tensor(ByteReader& r, Matrix& into, const char* name) {
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  if (rows != into.rows() || cols != into.cols()) {
    throw FormatError(FormatError::Kind::Parse, std::string("checkpoint tensor ") + name + " is " +
                                                    std::to_string(rows) + "x" + std::to_string(cols) +
                                                    ", model expects " + into.shape_string());
  }
  into = r.matrix_values(rows, cols, name);
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::OrdinalClip: return "ordinalclip";
    case Method::CoOp: return "coop";
    case Method::Baseline: return "baseline";
    case Method::ZeroShot: return "zeroshot";
  }
  return "unknown";
}

Method parse_method(const std::string& text) {
  if (text == "ordinalclip") return Method::OrdinalClip;
  if (text == "coop") return Method::CoOp;
  if (text == "baseline") return Method::Baseline;
  if (text == "zeroshot") return Method::ZeroShot;
  throw ConfigError("method must be one of ordinalclip, coop, baseline, zeroshot; got \"" + text + "\"");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  double lr = learning_rate;
  for (std::size_t d : decay_epochs)
    if (epoch >= d) lr *= lr_decay_factor;
  return lr;
}

Matrix Model::prototypes() const {
  if (!uses_prompts()) {
    Tape tape;
    return tape.value(tape.l2_normalize_rows(tape.constant(head.weights)));
  }
  const Matrix ranks = config.method == Method::OrdinalClip
                           ? interpolate_rank_embeddings(interpolation, prompt.base_ranks)
                           : prompt.base_ranks;
  return text_encoder.encode(assemble_sequences(prompt.context, ranks));
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed, std::uint64_t encoder_seed) {
  ModelConfig resolved = cfg;
  PromptConfig& p = resolved.prompt;
  if (cfg.method == Method::CoOp || cfg.method == Method::ZeroShot) p.num_base_ranks = p.num_ranks;
  if (cfg.method == Method::Baseline) {
    if (p.num_ranks < 2) throw ConfigError("num_ranks must be >= 2");
  } else {
    p.validate();
  }
  TextEncoderConfig text_cfg;
  text_cfg.word_dim = p.word_dim;
  text_cfg.latent_dim = cfg.latent_dim;
  text_cfg.max_len = std::max<std::size_t>(16, p.num_context + 1);

  Model model{resolved, PseudoTextEncoder(text_cfg, encoder_seed), {}, {}, {}, {}};
  model.image = init_image_encoder(cfg.input_dim, cfg.hidden_dim, cfg.latent_dim, seed);

  switch (cfg.method) {
    case Method::OrdinalClip:
      model.interpolation = build_interpolation_matrix(p);
      model.prompt = init_parameters(p, model.text_encoder, seed);
      break;
    case Method::CoOp:
      model.prompt = init_parameters(p, model.text_encoder, seed);
      break;
    case Method::ZeroShot: {
      if (p.num_ranks > 128) throw ConfigError("zeroshot supports at most 128 ranks");
      const auto& tmpl = default_context_template();
      const std::size_t used = std::min(tmpl.size(), p.num_context);
      std::span<const std::string> tail(tmpl.data() + (tmpl.size() - used), used);
      PromptConfig init_cfg = p;
      init_cfg.init_ctx = true;
      model.prompt = init_parameters(init_cfg, model.text_encoder, seed, tail);
      std::vector<std::string> numerals;
      for (std::size_t j = 0; j < p.num_ranks; ++j) numerals.push_back(std::to_string(j));
      model.prompt.base_ranks = model.text_encoder.token_rows(numerals);
      break;
    }
    case Method::Baseline:
      model.head = init_baseline_head(p.num_ranks, cfg.latent_dim, seed);
      break;
  }
  return model;
}

LossAndGradients loss_and_gradients(const Model& model, const Matrix& batch_x,
                                    std::span<const std::size_t> batch_y, double temperature) {
  if (batch_x.rows() == 0 || batch_x.rows() != batch_y.size()) {
    throw ShapeError("loss_and_gradients: " + std::to_string(batch_x.rows()) + " samples, " +
                     std::to_string(batch_y.size()) + " labels");
  }
  Tape tape;
  ImageEncoding img = encode_images(tape, model.image, tape.constant(batch_x), true);
  const LabelMatrix labels = make_labels(batch_y, model.num_ranks());
  Var loss;
  if (model.config.method == Method::Baseline) {
    Var w = tape.parameter(kHeadWeights, model.head.weights);
    Var b = tape.parameter(kHeadBias, model.head.bias);
    loss = cross_entropy_loss(tape, baseline_logits(tape, w, b, img.features), labels.one_hot);
  } else {
    const PromptConfig& p = model.config.prompt;
    Var ctx = tape.parameter(kContextParam, model.prompt.context, p.tune_ctx);
    Var ranks_param = tape.parameter(kRankParam, model.prompt.base_ranks, p.tune_rank);
    Var ranks = rank_embeddings(tape, model, ranks_param);
    Var protos = model.text_encoder.encode(tape, assemble_sequences(tape, ctx, ranks));
    loss = contrastive_loss(tape, similarity(tape, img.embeddings, protos, temperature), labels);
  }
  return {tape.value(loss)(0, 0), tape.backward(loss)};
}

double train_step(Model& model, AdamState& state, const Matrix& batch_x,
                  std::span<const std::size_t> batch_y, const TrainConfig& cfg, double learning_rate) {
  if (batch_x.rows() == 0) throw ShapeError("train_step: empty batch");
  LossAndGradients lg;
  try {
    lg = loss_and_gradients(model, batch_x, batch_y, cfg.temperature);
  } catch (const NumericError& e) {
    throw NumericError(std::string("train_step: ") + e.what() + "; parameter norms: " + parameter_norms(model));
  }
  if (!std::isfinite(lg.loss)) {
    throw NumericError("train_step: non-finite loss; parameter norms: " + parameter_norms(model));
  }
  ++state.step;
  if (learning_rate == 0.0) return lg.loss;

  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (const NamedParam& p : trainable_params(model)) {
    const Matrix& g = lg.gradients.at(p.name);
    AdamMoments& mom = state.moments[p.name];
    if (mom.first.empty() && !g.empty()) {
      mom.first = Matrix(g.rows(), g.cols());
      mom.second = Matrix(g.rows(), g.cols());
    }
    const double lr = learning_rate * (p.last_layer ? cfg.last_layer_lr_mult : 1.0);
    auto values = p.value->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g.values()[i];
      double& m = mom.first.values()[i];
      double& v = mom.second.values()[i];
      m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * gi;
      v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * gi * gi;
      values[i] -= lr * (m / bias1) / (std::sqrt(v / bias2) + cfg.adam_eps);
    }
  }
  return lg.loss;
}

FitResult fit(Model& model, const OrdinalDataset& train, const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw ConfigError("fit: training set is empty");
  if (train.num_ranks() != model.num_ranks()) {
    throw ConfigError("fit: dataset has " + std::to_string(train.num_ranks()) + " ranks, model has " +
                      std::to_string(model.num_ranks()));
  }
  FitResult result;
  if (model.config.method == Method::ZeroShot) return result;

  AdamState state;
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "fit.shuffle");
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Engine rng(derive_seed(shuffle_seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.lr_at(epoch);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      std::vector<std::size_t> y;
      y.reserve(idx.size());
      for (std::size_t i : idx) y.push_back(train.ranks[i]);
      total += train_step(model, state, gather_rows(train.features, idx), y, cfg, lr);
      ++batches;
    }
    result.steps += batches;
    result.trace.push_back({epoch, total / static_cast<double>(batches), lr});
  }
  return result;
}

MetricReport evaluate(const Model& model, const OrdinalDataset& test, PredictRule rule, double temperature) {
  if (test.size() == 0) throw ConfigError("evaluate: test set is empty");
  const ImageEmbeddings emb = encode_images(model.image, test.features);
  std::vector<std::size_t> by_argmax;
  std::vector<std::size_t> by_expectation;
  if (model.uses_prompts()) {
    const SimilarityMatrix s = similarity(emb.embeddings, model.prototypes(), temperature);
    by_argmax = predict(s, PredictRule::Argmax);
    by_expectation = predict(s, PredictRule::Expectation);
  } else {
    const Matrix logits = baseline_logits(model.head, emb.features);
    by_argmax = argmax_rows(logits);
    Tape tape;
    by_expectation = expected_rank(tape.value(tape.row_softmax(tape.constant(logits), 1.0)));
  }
  MetricReport report;
  report.mae_argmax = mae(by_argmax, test.ranks);
  report.mae_expectation = mae(by_expectation, test.ranks);
  report.mae = rule == PredictRule::Argmax ? report.mae_argmax : report.mae_expectation;
  report.accuracy = accuracy(rule == PredictRule::Argmax ? by_argmax : by_expectation, test.ranks);
  report.ordinality = ordinality_score(model.prototypes(), temperature);
  report.per_rank_counts = test.histogram();
  return report;
}

std::vector<unsigned char> serialize_checkpoint(const Model& model) {
  ByteWriter w;
  write_prompt_record(w, model.num_ranks(), model.prompt);
  const bool head = !model.uses_prompts();
  w.u64(head ? 6 : 4);
  write_tensor(w, model.image.w1);
  write_tensor(w, model.image.b1);
  write_tensor(w, model.image.w2);
  write_tensor(w, model.image.b2);
  if (head) {
    write_tensor(w, model.head.weights);
    write_tensor(w, model.head.bias);
  }
  return w.bytes();
}

void restore_checkpoint(Model& model, std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  std::size_t num_ranks = 0;
  PromptParameters prompt = read_prompt_record(r, num_ranks);
  if (num_ranks != model.num_ranks() || prompt.context.rows() != model.prompt.context.rows() ||
      prompt.base_ranks.rows() != model.prompt.base_ranks.rows() ||
      prompt.base_ranks.cols() != model.prompt.base_ranks.cols()) {
    throw FormatError(FormatError::Kind::Parse, "checkpoint prompt record does not match the model");
  }
  const bool head = !model.uses_prompts();
  const std::uint64_t count = r.u64();
  if (count != (head ? 6u : 4u)) {
    throw FormatError(FormatError::Kind::Parse, "checkpoint has " + std::to_string(count) + " tensors");
  }
  Model restored = model;
  restored.prompt = std::move(prompt);
  read_tensor(r, restored.image.w1, kImageW1);
  read_tensor(r, restored.image.b1, kImageB1);
  read_tensor(r, restored.image.w2, kImageW2);
  read_tensor(r, restored.image.b2, kImageB2);
  if (head) {
    read_tensor(r, restored.head.weights, kHeadWeights);
    read_tensor(r, restored.head.bias, kHeadBias);
  }
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::Parse, "checkpoint has trailing bytes");
  model = std::move(restored);
}

}  // namespace rankprompt
