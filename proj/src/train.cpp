#include "attrenh/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "attrenh/metrics.hpp"
#include "attrenh/optim.hpp"
#include "json.hpp"

namespace attrenh {

namespace fs = std::filesystem;
using nlohmann::json;

std::string generator_kind(EnhancerKind which) { return to_string(which) + "_generator"; }
std::string discriminator_kind(EnhancerKind which) { return to_string(which) + "_discriminator"; }
std::string checkpoint_file(const std::string& kind) { return kind + ".ckpt"; }
std::string history_file(const std::string& run) { return run + "_history.jsonl"; }

// ---------------------------------------------------------------- models

ClassifierModel make_classifier(const RunConfig& cfg, const AttributeSchema& schema, Rng& rng) {
  schema.validate();
  ClassifierSpec spec{cfg.data.height, cfg.data.width, schema.size(), cfg.classifier.channels};
  return {schema, std::make_unique<AttributeClassifier<float>>(spec, rng), cfg.hash()};
}

namespace {

json classifier_meta(const ClassifierModel& m) {
  const auto& s = m.net->spec();
  return {{"height", s.height},
          {"width", s.width},
          {"channels", s.channels},
          {"schema", json::parse(schema_to_json(m.schema))}};
}

json generator_meta(EnhancerKind which, int height, int width, int divisor) {
  return {{"network", to_string(which)}, {"height", height}, {"width", width}, {"width_divisor", divisor}};
}

}  // namespace

ClassifierModel load_classifier(const fs::path& path, const std::string& expected_hash) {
  const Checkpoint c = load_checkpoint(path, kinds::kClassifier, expected_hash);
  const json meta = json::parse(c.meta);
  ClassifierModel m;
  try {
    m.schema = schema_from_json(meta.at("schema").dump());
    m.schema.validate();
    ClassifierSpec spec{meta.at("height"), meta.at("width"), m.schema.size(),
                        meta.at("channels").get<std::vector<int>>()};
    Rng rng(0);
    m.net = std::make_unique<AttributeClassifier<float>>(spec, rng);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": classifier metadata: " + e.what());
  }
  restore_params(c, m.net->params());
  m.config_hash = c.config_hash;
  return m;
}

GeneratorModel load_generator(const fs::path& path, EnhancerKind which, const std::string& expected_hash) {
  const Checkpoint c = load_checkpoint(path, generator_kind(which), expected_hash);
  const json meta = json::parse(c.meta);
  GeneratorModel m;
  m.which = which;
  try {
    Rng rng(0);
    m.net = make_generator<float>(which, meta.at("height"), meta.at("width"), meta.at("width_divisor"), rng);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": generator metadata: " + e.what());
  }
  restore_params(c, m.net->params());
  m.config_hash = c.config_hash;
  return m;
}

namespace {

Tensor<float> stack(const std::vector<Tensor<float>>& images, std::size_t from, std::size_t to) {
  Shape s = images[from].shape();
  const std::size_t per = s.numel();
  s.n = static_cast<int>(to - from);
  Tensor<float> out(s);
  for (std::size_t i = from; i < to; ++i) {
    if (!(images[i].shape() == images[from].shape())) {
      throw SizeError("image " + std::to_string(i) + " has shape " + images[i].shape().str() + ", expected " +
                      images[from].shape().str());
    }
    std::copy_n(images[i].data(), per, out.sample(static_cast<int>(i - from)));
  }
  return out;
}

Tensor<float> unstack_one(const Tensor<float>& batch, int i) {
  Shape s = batch.shape();
  s.n = 1;
  Tensor<float> out(s);
  std::copy_n(batch.sample(i), s.numel(), out.data());
  return out;
}

}  // namespace

std::vector<double> predict_probs(AttributeClassifier<float>& net, const std::vector<Tensor<float>>& images,
                                  int batch) {
  std::vector<double> out;
  for (std::size_t from = 0; from < images.size(); from += static_cast<std::size_t>(batch)) {
    const std::size_t to = std::min(images.size(), from + static_cast<std::size_t>(batch));
    const Tensor<float> p = net.predict(stack(images, from, to));
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return out;
}

std::vector<Tensor<float>> generate(Generator<float>& net, const std::vector<Tensor<float>>& images, int batch) {
  std::vector<Tensor<float>> out;
  for (std::size_t from = 0; from < images.size(); from += static_cast<std::size_t>(batch)) {
    const std::size_t to = std::min(images.size(), from + static_cast<std::size_t>(batch));
    const Tensor<float> y = net.infer(stack(images, from, to));
    for (int i = 0; i < y.shape().n; ++i) out.push_back(unstack_one(y, i));
  }
  return out;
}

std::vector<std::size_t> pair_by_source(const LoadedSet& corrupted, const LoadedSet& clean) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < clean.size(); ++i) index[clean.records[i].id] = i;
  std::vector<std::size_t> out;
  for (const auto& r : corrupted.records) {
    auto it = index.find(r.source);
    if (it == index.end()) throw FormatError("no clean source '" + r.source + "' for '" + r.id + "'");
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------- helpers

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t from = 0; from < n; from += static_cast<std::size_t>(batch)) {
    const std::size_t to = std::min(n, from + static_cast<std::size_t>(batch));
    // A lone trailing sample would give batch norm a zero variance.
    if (to - from < 2 && !out.empty()) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(from), order.begin() + static_cast<std::ptrdiff_t>(to));
  }
  return out;
}

std::string join_ids(const LoadedSet& set, const std::vector<std::size_t>& idx) {
  std::string s;
  for (auto i : idx) s += (s.empty() ? "" : ",") + set.records[i].id;
  return s;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  for (const auto& l : lines) f << l << '\n';
}

std::vector<std::string> read_lines(const fs::path& path, std::size_t limit) {
  std::vector<std::string> out;
  std::ifstream f(path, std::ios::binary);
  std::string line;
  while (out.size() < limit && std::getline(f, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<std::uint8_t> gather_labels(const LoadedSet& set, const std::vector<std::size_t>& idx) {
  std::vector<std::uint8_t> out;
  for (auto i : idx) out.insert(out.end(), set.records[i].labels.begin(), set.records[i].labels.end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- classifier

TrainResult train_classifier(const RunConfig& cfg, const LoadedSet& train, const LoadedSet* test,
                             const TrainOptions& opts) {
  cfg.validate();
  if (train.size() < 2) throw ArgumentError("classifier training needs at least two samples");
  fs::create_directories(opts.out);
  const fs::path ckpt_path = opts.out / checkpoint_file(kinds::kClassifier);
  const fs::path hist_path = opts.out / history_file(kinds::kClassifier);

  Rng rng(cfg.seed);
  ClassifierModel model = make_classifier(cfg, train.schema, rng);
  const ParamSet<float> params = model.net->params();
  Sgd<float> sgd(cfg.classifier.lr, cfg.classifier.decay, cfg.classifier.momentum);
  sgd.ensure(params);

  TrainResult result;
  int start = 0;
  if (opts.resume && fs::exists(ckpt_path)) {
    const Checkpoint c = load_checkpoint(ckpt_path, kinds::kClassifier, cfg.hash());
    restore_params(c, params);
    restore_slots(c, params, "velocity", sgd.velocity());
    sgd.set_steps(c.optimizer_steps);
    rng.set_state(c.rng_state);
    start = c.epoch;
    result.history = read_lines(hist_path, static_cast<std::size_t>(start));
  }

  const auto& ratios = train.schema.ratios;
  for (int epoch = start; epoch < cfg.classifier.epochs; ++epoch) {
    Stopwatch clock;
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (const auto& idx : epoch_batches(train.size(), cfg.classifier.batch, rng)) {
      const Tensor<float> x = train.batch(idx);
      const auto labels = gather_labels(train, idx);
      params.zero_grad();
      AttributeClassifier<float>::Cache cache;
      const Tensor<float> scores = model.net->scores(x, cache, Mode::Train);
      Tensor<float> grad;
      const float loss = weighted_bce(scores, labels, ratios, &grad);
      if (!std::isfinite(loss)) {
        throw NumericError("classifier loss became " + std::to_string(loss) + " at epoch " +
                           std::to_string(epoch + 1) + " on batch [" + join_ids(train, idx) + "]");
      }
      model.net->backward(grad, cache);
      sgd.step(params);
      loss_sum += loss;
      ++batches;
    }
    json rec = {{"epoch", epoch + 1},
                {"loss_c", loss_sum / static_cast<double>(batches)},
                {"lr", sgd.current_lr()},
                {"steps", sgd.steps()}};
    if (test) {
      const auto probs = predict_probs(*model.net, test->images);
      const auto report = evaluate(probs, test->label_matrix(), test->schema.names, cfg.classifier.threshold);
      rec["test_mA"] = report.mA;
      rec["test_f1"] = report.f1;
    }
    result.history.push_back(rec.dump());
    write_lines(hist_path, result.history);

    Checkpoint c;
    c.kind = kinds::kClassifier;
    c.config_hash = cfg.hash();
    c.epoch = epoch + 1;
    c.optimizer_steps = sgd.steps();
    c.rng_state = rng.state();
    c.meta = classifier_meta(model).dump();
    store_params(c, params);
    store_slots(c, params, "velocity", sgd.velocity());
    save_checkpoint(ckpt_path, c);
    if (opts.log) *opts.log << "classifier epoch " << epoch + 1 << " " << rec.dump() << " (" << clock.seconds() << " s)\n"
                            << std::flush;
  }
  result.checkpoints.push_back(ckpt_path);
  return result;
}

// ---------------------------------------------------------------- gan

namespace {

Checkpoint adam_checkpoint(const std::string& kind, const RunConfig& cfg, int epoch, Rng& rng, const json& meta,
                           const ParamSet<float>& params, Adam<float>& opt) {
  Checkpoint c;
  c.kind = kind;
  c.config_hash = cfg.hash();
  c.epoch = epoch;
  c.optimizer_steps = opt.steps();
  c.rng_state = rng.state();
  c.meta = meta.dump();
  store_params(c, params);
  store_slots(c, params, "adam_m", opt.first_moment());
  store_slots(c, params, "adam_v", opt.second_moment());
  return c;
}

void restore_adam(const Checkpoint& c, const ParamSet<float>& params, Adam<float>& opt) {
  restore_params(c, params);
  restore_slots(c, params, "adam_m", opt.first_moment());
  restore_slots(c, params, "adam_v", opt.second_moment());
  opt.set_steps(c.optimizer_steps);
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

TrainResult train_gan(const RunConfig& cfg, EnhancerKind which, const LoadedSet& corrupted, const LoadedSet& clean,
                      const LoadedSet* test_corrupted, const LoadedSet* test_clean, const TrainOptions& opts) {
  cfg.validate();
  if (corrupted.size() < 2) throw ArgumentError("gan training needs at least two pairs");
  const EnhancerConfig& ec = which == EnhancerKind::Reconstruction ? cfg.reconstruction : cfg.sr;
  const int h = cfg.data.height, w = cfg.data.width;
  fs::create_directories(opts.out);
  const fs::path gpath = opts.out / checkpoint_file(generator_kind(which));
  const fs::path dpath = opts.out / checkpoint_file(discriminator_kind(which));
  const fs::path hist_path = opts.out / history_file(to_string(which));

  const auto pairs = pair_by_source(corrupted, clean);
  std::vector<std::size_t> test_pairs;
  if (test_corrupted && test_clean) test_pairs = pair_by_source(*test_corrupted, *test_clean);

  Rng rng(cfg.seed);
  auto gen = make_generator<float>(which, h, w, ec.width_divisor, rng);
  auto disc = make_discriminator<float>(which, h, w, ec.width_divisor, rng);
  const ParamSet<float> gparams = gen->params();
  const ParamSet<float> dparams = disc->params();
  const auto& g = cfg.gan;
  Adam<float> gopt(g.lr, g.beta1, g.beta2, g.eps), dopt(g.lr, g.beta1, g.beta2, g.eps);
  gopt.ensure(gparams);
  dopt.ensure(dparams);
  const json meta = generator_meta(which, h, w, ec.width_divisor);

  TrainResult result;
  int start = 0;
  if (opts.resume && fs::exists(gpath) && fs::exists(dpath)) {
    const Checkpoint gc = load_checkpoint(gpath, generator_kind(which), cfg.hash());
    const Checkpoint dc = load_checkpoint(dpath, discriminator_kind(which), cfg.hash());
    if (gc.epoch != dc.epoch) throw FormatError("generator and discriminator checkpoints are from different epochs");
    restore_adam(gc, gparams, gopt);
    restore_adam(dc, dparams, dopt);
    rng.set_state(gc.rng_state);
    start = gc.epoch;
    result.history = read_lines(hist_path, static_cast<std::size_t>(start));
  }

  int saturated_run = 0;
  for (int epoch = start; epoch < ec.epochs; ++epoch) {
    Stopwatch clock;
    double sse_sum = 0, gen_sum = 0, adv_sum = 0, d_sum = 0;
    std::vector<double> d_real_all, d_fake_all;
    std::size_t batches = 0;
    std::vector<std::string> warnings;
    for (const auto& idx : epoch_batches(corrupted.size(), g.batch, rng)) {
      std::vector<std::size_t> tidx;
      for (auto i : idx) tidx.push_back(pairs[i]);
      const Tensor<float> x = corrupted.batch(idx);
      const Tensor<float> real = clean.batch(tidx);

      LayerCache<float> gcache;
      const Tensor<float> fake = gen->forward(x, gcache, Mode::Train);

      // Discriminator: real -> 1, detached generated -> 0.
      double batch_fake_prob = 0.0;
      for (int k = 0; k < g.k; ++k) {
        dparams.zero_grad();
        LayerCache<float> rc, fc;
        const Tensor<float> lr = disc->logits(real, rc, Mode::Train);
        const Tensor<float> lf = disc->logits(fake, fc, Mode::Train);
        Tensor<float> dr, df;
        const float dloss = discriminator_bce(lr, lf, &dr, &df);
        if (!std::isfinite(dloss)) throw NumericError("discriminator loss became non-finite at epoch " +
                                                      std::to_string(epoch + 1));
        disc->backward(dr, rc);
        disc->backward(df, fc);
        dopt.step(dparams);
        if (k == g.k - 1) {
          d_sum += dloss;
          const auto pr = sigmoid_probs(lr), pf = sigmoid_probs(lf);
          d_real_all.insert(d_real_all.end(), pr.begin(), pr.end());
          d_fake_all.insert(d_fake_all.end(), pf.begin(), pf.end());
          batch_fake_prob = mean_of(pf);
        }
      }

      // Generator: pooled SSE plus lambda times the non-saturating term,
      // judged by the updated discriminator.
      gparams.zero_grad();
      LayerCache<float> fc2;
      const Tensor<float> lf2 = disc->logits(fake, fc2, Mode::Train);
      Tensor<float> dadv;
      const float adv = nonsaturating_gen_loss(lf2, &dadv);
      Tensor<float> dfake;
      const float sse = loss_sse(fake, real, ec.pool, &dfake);
      if (!std::isfinite(sse) || !std::isfinite(adv)) {
        throw NumericError("generator loss became non-finite at epoch " + std::to_string(epoch + 1) + " on batch [" +
                           join_ids(corrupted, idx) + "]");
      }
      if (ec.lambda > 0) {
        for (auto& v : dadv.values()) v *= static_cast<float>(ec.lambda);
        dfake += disc->backward(dadv, fc2);
      }
      gen->backward(dfake, gcache);
      gopt.step(gparams);

      const auto probs = sigmoid_probs(lf2);
      sse_sum += sse;
      adv_sum += adv;
      gen_sum += loss_gen(probs);
      ++batches;

      saturated_run = batch_fake_prob < kSaturationProb ? saturated_run + 1 : 0;
      if (saturated_run == kSaturationBatches) {
        warnings.push_back("discriminator saturated: D(fake) < 1e-6 for " + std::to_string(kSaturationBatches) +
                           " consecutive batches ending at step " + std::to_string(gopt.steps()));
      }
    }
    const double nb = static_cast<double>(batches);
    const double sse = sse_sum / nb, lgen = gen_sum / nb, adv = adv_sum / nb;
    json rec = {{"epoch", epoch + 1},
                {"loss_sse", sse},
                {"loss_gen", lgen},
                {"loss_r", loss_r(sse, lgen, ec.lambda)},
                {"loss_adv", adv},
                {"objective", sse + ec.lambda * adv},
                {"loss_d", d_sum / nb},
                {"d_real", mean_of(d_real_all)},
                {"d_fake", mean_of(d_fake_all)},
                {"d_steps", dopt.steps()},
                {"g_steps", gopt.steps()},
                {"warnings", warnings}};
    if (!test_pairs.empty()) {
      std::vector<Tensor<float>> targets;
      for (auto i : test_pairs) targets.push_back(test_clean->images[i]);
      const auto outs = generate(*gen, test_corrupted->images);
      double psnr = 0;
      for (std::size_t i = 0; i < outs.size(); ++i) psnr += mean_psnr(outs[i], targets[i]);
      rec["test_psnr"] = psnr / static_cast<double>(outs.size());
    }
    result.history.push_back(rec.dump());
    write_lines(hist_path, result.history);
    save_checkpoint(gpath, adam_checkpoint(generator_kind(which), cfg, epoch + 1, rng, meta, gparams, gopt));
    save_checkpoint(dpath, adam_checkpoint(discriminator_kind(which), cfg, epoch + 1, rng, meta, dparams, dopt));
    if (opts.log) *opts.log << to_string(which) << " epoch " << epoch + 1 << " " << rec.dump() << " ("
                            << clock.seconds() << " s)\n"
                            << std::flush;
  }
  result.checkpoints = {gpath, dpath};
  return result;
}

}  // namespace attrenh
