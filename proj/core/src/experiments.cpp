#include "ainv/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "ainv/baselines.hpp"
#include "ainv/error.hpp"
#include "ainv/rng.hpp"

namespace ainv {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

EncoderConfig config_for(const Dataset& ds) {
  EncoderConfig c;
  c.channels = ds.header.channels;
  c.samples = ds.header.samples;
  return c;
}

// Runs tasks 0..count-1 on `jobs` workers; task results must be written to
// pre-sized slots so ordering is independent of scheduling.
template <class Fn>
void parallel_tasks(size_t count, int jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const int n_threads = std::min<int>(jobs, static_cast<int>(count));
  threads.reserve(static_cast<size_t>(n_threads));
  for (int i = 0; i < n_threads; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

// ---------------------------------------------------------------------------
// protocols
// ---------------------------------------------------------------------------

std::vector<RepResult> run_within_session(const ExperimentSpec& spec,
                                          const Dataset& ds) {
  if (spec.repetitions < 1)
    throw ConfigError("within-session: repetitions must be >= 1");
  std::vector<RepResult> out(static_cast<size_t>(spec.repetitions));
  parallel_tasks(out.size(), spec.jobs, [&](size_t rep) {
    const uint64_t seed = spec.base_seed + rep;
    const WithinSessionSplit split =
        split_within_session(ds, spec.test_session, seed);
    Model model = build_model(config_for(ds), ds.header.subjects, 0, seed);
    TrainConfig cfg = spec.train;
    cfg.lambda = 0.0;
    cfg.seed = seed;
    TrainResult trained = train(std::move(model), split.train, split.val, cfg);
    RepResult& r = out[rep];
    r.method = "cnn_within";
    r.lambda = 0.0;
    r.rep = static_cast<int>(rep);
    r.seed = seed;
    const EvalResult val =
        evaluate(trained.best, split.val, EvalTarget::kIdentifier);
    const EvalResult test =
        evaluate(trained.best, split.test, EvalTarget::kIdentifier);
    r.id_val_acc = val.accuracy;
    r.adv_val_acc = kNan;
    r.test_acc = test.accuracy;
    r.best_pass = trained.history.best_pass;
    r.passes_run = static_cast<int>(trained.history.passes.size());
  });
  return out;
}

std::vector<RepResult> run_loso(const ExperimentSpec& spec, const Dataset& ds) {
  if (spec.lambdas.empty())
    throw ConfigError("loso: lambda list must not be empty");
  for (const double l : spec.lambdas)
    if (l < 0) throw ConfigError("loso: lambda must be >= 0");
  if (spec.repetitions < 1)
    throw ConfigError("loso: repetitions must be >= 1");
  if (ds.header.sessions < 3)
    throw ConfigError(
        "loso: adversarial runs need >= 2 training sessions (R >= 3)");

  const size_t reps = static_cast<size_t>(spec.repetitions);
  std::vector<RepResult> out(spec.lambdas.size() * reps);
  parallel_tasks(out.size(), spec.jobs, [&](size_t task) {
    const size_t li = task / reps;
    const size_t rep = task % reps;
    const double lambda = spec.lambdas[li];
    const uint64_t seed = spec.base_seed + rep;

    const LosoSplit split = split_loso(ds, spec.test_session, seed);
    const int r_train = static_cast<int>(split.session_label_map.size());
    Model model = build_model(config_for(ds), ds.header.subjects, r_train, seed);
    TrainConfig cfg = spec.train;
    cfg.lambda = lambda;
    cfg.seed = seed;
    TrainResult trained = train(std::move(model), split.train, split.val, cfg,
                                &split.session_label_map);

    RepResult& r = out[task];
    r.method = "cnn";
    r.lambda = lambda;
    r.rep = static_cast<int>(rep);
    r.seed = seed;
    const EvalResult id_val =
        evaluate(trained.best, split.val, EvalTarget::kIdentifier);
    const EvalResult adv_val = evaluate(trained.best, split.val,
                                        EvalTarget::kAdversary,
                                        &split.session_label_map);
    // The held-out session is scored for the identifier only; its session
    // label lies outside the adversary's domain by construction.
    const EvalResult test =
        evaluate(trained.best, split.test, EvalTarget::kIdentifier);
    r.id_val_acc = id_val.accuracy;
    r.adv_val_acc = adv_val.accuracy;
    r.test_acc = test.accuracy;
    r.best_pass = trained.history.best_pass;
    r.passes_run = static_cast<int>(trained.history.passes.size());
  });
  return out;
}

namespace {

Tensor64 spectral_features(const Dataset& ds) {
  const auto bands = default_bands();
  const int64_t dim =
      static_cast<int64_t>(ds.header.channels) * static_cast<int64_t>(bands.size());
  Tensor64 out({static_cast<int64_t>(ds.size()), dim});
  for (size_t i = 0; i < ds.size(); ++i) {
    const std::vector<double> f =
        log_bandpowers(ds.records[i].signal, ds.header.sample_rate_hz, bands,
                       kWelchSegLen, kWelchOverlap);
    std::copy(f.begin(), f.end(), out.ptr() + static_cast<int64_t>(i) * dim);
  }
  return out;
}

Tensor64 vectorized_epochs(const Dataset& ds) {
  const int64_t dim =
      static_cast<int64_t>(ds.header.channels) * ds.header.samples;
  Tensor64 out({static_cast<int64_t>(ds.size()), dim});
  for (size_t i = 0; i < ds.size(); ++i) {
    const float* src = ds.records[i].signal.ptr();
    double* dst = out.ptr() + static_cast<int64_t>(i) * dim;
    for (int64_t j = 0; j < dim; ++j) dst[j] = static_cast<double>(src[j]);
  }
  return out;
}

std::vector<int> subject_labels(const Dataset& ds) {
  std::vector<int> y(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) y[i] = ds.records[i].subject;
  return y;
}

double qda_accuracy(const QdaModel& model, const Tensor64& X,
                    std::span<const int> y) {
  const QdaPrediction pred = qda_predict(model, X);
  int64_t correct = 0;
  for (size_t i = 0; i < y.size(); ++i)
    if (pred.labels[i] == y[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

}  // namespace

std::vector<RepResult> run_baselines(const ExperimentSpec& spec,
                                     const Dataset& ds,
                                     BaselineMethod method) {
  if (spec.repetitions < 1)
    throw ConfigError("baseline: repetitions must be >= 1");
  std::vector<RepResult> out(static_cast<size_t>(spec.repetitions));
  parallel_tasks(out.size(), spec.jobs, [&](size_t rep) {
    const uint64_t seed = spec.base_seed + rep;
    const LosoSplit split = split_loso(ds, spec.test_session, seed);

    Tensor64 train_x, val_x, test_x;
    if (method == BaselineMethod::kSpectral) {
      train_x = spectral_features(split.train);
      val_x = spectral_features(split.val);
      test_x = spectral_features(split.test);
    } else {
      // PCA fitted on the training split only; val/test reuse its mean and
      // components.
      const PcaModel pca = pca_fit(vectorized_epochs(split.train),
                                   kPcaVarianceThreshold);
      train_x = pca_transform(pca, vectorized_epochs(split.train));
      val_x = pca_transform(pca, vectorized_epochs(split.val));
      test_x = pca_transform(pca, vectorized_epochs(split.test));
    }
    const std::vector<int> train_y = subject_labels(split.train);
    const std::vector<int> val_y = subject_labels(split.val);
    const std::vector<int> test_y = subject_labels(split.test);
    const QdaModel qda = qda_fit(train_x, train_y, kQdaShrinkage);

    RepResult& r = out[rep];
    r.method = method == BaselineMethod::kSpectral ? "spectral_qda" : "pca_qda";
    r.lambda = kNan;
    r.rep = static_cast<int>(rep);
    r.seed = seed;
    r.id_val_acc = qda_accuracy(qda, val_x, val_y);
    r.adv_val_acc = kNan;
    r.test_acc = qda_accuracy(qda, test_x, test_y);
    r.best_pass = 0;
    r.passes_run = 0;
  });
  return out;
}

// ---------------------------------------------------------------------------
// aggregation and reports
// ---------------------------------------------------------------------------

namespace {

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {kNan, kNan};
  double mean = 0;
  for (const double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (const double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());  // population convention
  return {mean, std::sqrt(var)};
}

}  // namespace

std::vector<ResultRow> aggregate(const std::vector<RepResult>& reps) {
  // Group by (method, lambda), preserving first-appearance order.
  std::vector<std::pair<std::string, double>> keys;
  auto key_index = [&](const RepResult& r) {
    for (size_t i = 0; i < keys.size(); ++i) {
      const bool lambda_match =
          (std::isnan(keys[i].second) && std::isnan(r.lambda)) ||
          keys[i].second == r.lambda;
      if (keys[i].first == r.method && lambda_match) return i;
    }
    keys.emplace_back(r.method, r.lambda);
    return keys.size() - 1;
  };

  std::vector<std::vector<const RepResult*>> groups;
  for (const auto& r : reps) {
    const size_t k = key_index(r);
    if (k == groups.size()) groups.emplace_back();
    groups[k].push_back(&r);
  }

  std::vector<ResultRow> rows;
  rows.reserve(groups.size());
  for (size_t k = 0; k < groups.size(); ++k) {
    ResultRow row;
    row.method = keys[k].first;
    row.lambda = keys[k].second;
    row.repetitions = static_cast<int>(groups[k].size());
    std::vector<double> id_v, adv_v, test_v;
    for (const RepResult* r : groups[k]) {
      id_v.push_back(r->id_val_acc);
      if (!std::isnan(r->adv_val_acc)) adv_v.push_back(r->adv_val_acc);
      test_v.push_back(r->test_acc);
    }
    std::tie(row.id_val_mean, row.id_val_sd) = mean_sd(id_v);
    std::tie(row.adv_val_mean, row.adv_val_sd) = mean_sd(adv_v);
    std::tie(row.test_mean, row.test_sd) = mean_sd(test_v);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_raw_csv(const std::string& path, const std::vector<RepResult>& reps) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("report: cannot write '" + path + "'");
  os << "method,lambda,rep,seed,id_val_acc,adv_val_acc,test_acc,best_pass,"
        "passes_run\n";
  for (const auto& r : reps) {
    os << r.method << ',' << fmt(r.lambda) << ',' << r.rep << ',' << r.seed
       << ',' << fmt(r.id_val_acc) << ',' << fmt(r.adv_val_acc) << ','
       << fmt(r.test_acc) << ',' << r.best_pass << ',' << r.passes_run << '\n';
  }
}

void write_results_csv(const std::string& path,
                       const std::vector<ResultRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("report: cannot write '" + path + "'");
  os << "method,lambda,id_val_mean,id_val_sd,adv_val_mean,adv_val_sd,"
        "test_mean,test_sd,reps\n";
  for (const auto& r : rows) {
    os << r.method << ',' << fmt(r.lambda) << ',' << fmt(r.id_val_mean) << ','
       << fmt(r.id_val_sd) << ',' << fmt(r.adv_val_mean) << ','
       << fmt(r.adv_val_sd) << ',' << fmt(r.test_mean) << ',' << fmt(r.test_sd)
       << ',' << r.repetitions << '\n';
  }
}

void write_scatter_csv(const std::string& path,
                       const std::vector<ResultRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("report: cannot write '" + path + "'");
  os << "lambda,id_mean,id_sd,adv_mean,adv_sd\n";
  for (const auto& r : rows) {
    os << fmt(r.lambda) << ',' << fmt(r.id_val_mean) << ',' << fmt(r.id_val_sd)
       << ',' << fmt(r.adv_val_mean) << ',' << fmt(r.adv_val_sd) << '\n';
  }
}

void write_manifest(const std::string& path, const ExperimentSpec& spec,
                    const std::string& mode) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("report: cannot write '" + path + "'");
  os << "mode = " << mode << '\n';
  os << "dataset = " << spec.dataset_path << '\n';
  os << "test_session = " << spec.test_session << '\n';
  os << "lambdas =";
  for (const double l : spec.lambdas) os << ' ' << fmt(l);
  os << '\n';
  os << "repetitions = " << spec.repetitions << '\n';
  os << "base_seed = " << spec.base_seed << '\n';
  os << "jobs = " << spec.jobs << '\n';
  os << "batch_size = " << spec.train.batch_size << '\n';
  os << "max_passes = " << spec.train.max_passes << '\n';
  os << "patience = " << spec.train.patience << '\n';
  os << "lr = " << fmt(spec.train.lr) << '\n';
  os << "beta1 = " << fmt(spec.train.beta1) << '\n';
  os << "beta2 = " << fmt(spec.train.beta2) << '\n';
  os << "eps = " << fmt(spec.train.eps) << '\n';
  os << "welch_seg_len = " << kWelchSegLen << '\n';
  os << "welch_overlap = " << kWelchOverlap << '\n';
  os << "qda_shrinkage = " << fmt(kQdaShrinkage) << '\n';
  os << "pca_variance_threshold = " << fmt(kPcaVarianceThreshold) << '\n';
}

std::vector<std::vector<double>> read_csv_numeric(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("report: cannot read '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = kNan;
      const char* begin = cell.data();
      const char* end = begin + cell.size();
      std::from_chars(begin, end, v);
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ArgumentError("spearman: need two equal-length series");
  auto ranks = [](std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0 || dy == 0) return 0.0;
  return num / std::sqrt(dx * dy);
}

// ---------------------------------------------------------------------------
// gradient verification
// ---------------------------------------------------------------------------

EncoderConfig tiny_encoder_config() {
  EncoderConfig c;
  c.channels = 3;
  c.samples = 16;
  c.b1_filters = 2;
  c.depth_multiplier = 2;
  c.b3_filters = 20;
  c.b4_filters = 10;
  return c;
}

GradCheckReport verify_network_gradients(double lambda, uint64_t seed) {
  const EncoderConfig config = tiny_encoder_config();
  constexpr int kSubjects = 4;
  constexpr int kSessions = 2;
  constexpr int kBatch = 6;

  Rng root = Rng(seed).substream("gradcheck");
  EncoderParamsT<double> encoder = build_encoder<double>(config, root.next());
  HeadParamsT<double> id_head =
      build_head<double>(kSubjects, config.feature_dim(), root.next());
  HeadParamsT<double> adv_head =
      build_head<double>(kSessions, config.feature_dim(), root.next());

  Tensor64 x({kBatch, config.channels, config.samples});
  Rng data_rng = root.substream("input");
  for (auto& v : x.data) v = data_rng.uniform(-1.0, 1.0);
  std::vector<int> subjects(kBatch), sessions(kBatch);
  for (int i = 0; i < kBatch; ++i) {
    subjects[static_cast<size_t>(i)] = i % kSubjects;
    sessions[static_cast<size_t>(i)] = i % kSessions;
  }

  // Pure combined loss: train-mode batch statistics, running stats untouched.
  auto loss = [&]() -> double {
    const Tensor64 features =
        encoder_forward<double>(encoder, x, RunMode::kTrain, false, nullptr);
    const double ce_id =
        softmax_cross_entropy<double>(head_forward(id_head, features), subjects)
            .loss;
    const double ce_adv =
        softmax_cross_entropy<double>(head_forward(adv_head, features), sessions)
            .loss;
    return ce_id - lambda * ce_adv;
  };

  std::vector<std::pair<std::string, Tensor64*>> params =
      trainable_tensors(encoder);
  for (auto& [name, ptr] : head_tensors(id_head, "id"))
    params.emplace_back(name, ptr);
  for (auto& [name, ptr] : head_tensors(adv_head, "adv"))
    params.emplace_back(name, ptr);

  auto grads_full = [&]() {
    EncoderCache<double> cache;
    const Tensor64 features =
        encoder_forward<double>(encoder, x, RunMode::kTrain, false, &cache);
    const auto ce_id =
        softmax_cross_entropy<double>(head_forward(id_head, features), subjects);
    const auto ce_adv =
        softmax_cross_entropy<double>(head_forward(adv_head, features), sessions);
    const Tensor64 did =
        softmax_cross_entropy_backward<double>(ce_id.probs, subjects);
    const Tensor64 dadv =
        softmax_cross_entropy_backward<double>(ce_adv.probs, sessions);
    LinearGrads<double> idg = linear_backward(features, id_head.weight, did);
    LinearGrads<double> advg = linear_backward(features, adv_head.weight, dadv);
    Tensor64 dfeat = idg.input;
    for (size_t i = 0; i < dfeat.data.size(); ++i)
      dfeat.data[i] -= lambda * advg.input.data[i];
    std::vector<Tensor64> all = encoder_backward(encoder, cache, dfeat);
    all.push_back(std::move(idg.weight));
    all.push_back(std::move(idg.bias));
    // Adversary gradients carry the -lambda factor of the combined loss.
    for (auto& v : advg.weight.data) v *= -lambda;
    for (auto& v : advg.bias.data) v *= -lambda;
    all.push_back(std::move(advg.weight));
    all.push_back(std::move(advg.bias));
    return all;
  };

  return gradcheck(params, loss, grads_full, 1e-5);
}

int cmd_gradcheck(std::ostream& out) {
  constexpr double kTolerance = 1e-4;
  const GradCheckReport report = verify_network_gradients(0.05, 20240501);
  for (const auto& e : report.entries) {
    char line[160];
    std::snprintf(line, sizeof line, "%-24s max_rel_err=%.3e %s\n",
                  e.name.c_str(), e.max_rel_err,
                  (e.finite && e.max_rel_err < kTolerance) ? "ok" : "FAIL");
    out << line;
  }
  out << (report.ok(kTolerance) ? "gradcheck: PASS" : "gradcheck: FAIL")
      << " (max_rel_err=" << fmt(report.max_rel_err) << ")\n";
  return report.ok(kTolerance) ? 0 : 1;
}

// ---------------------------------------------------------------------------
// config files
// ---------------------------------------------------------------------------

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("config: cannot read '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    const size_t eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw FormatError("config: line " + std::to_string(line_no) +
                        " is not 'key = value'");
    const std::string key = trim(trimmed.substr(0, eq));
    const std::string value = trim(trimmed.substr(eq + 1));
    if (key.empty() || value.empty())
      throw FormatError("config: empty key or value at line " +
                        std::to_string(line_no));
    kv[key] = value;
  }
  return kv;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw FormatError("config: '" + key + "' has non-numeric value '" + v + "'");
  }
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw FormatError("config: '" + key + "' has non-integer value '" + v + "'");
  }
}

}  // namespace

SynthConfig synth_config_from_kv(const std::map<std::string, std::string>& kv) {
  SynthConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "subjects") c.subjects = static_cast<int>(to_int(key, value));
    else if (key == "sessions") c.sessions = static_cast<int>(to_int(key, value));
    else if (key == "epochs_per_subject_session")
      c.epochs_per_subject_session = static_cast<int>(to_int(key, value));
    else if (key == "channels") c.channels = static_cast<int>(to_int(key, value));
    else if (key == "samples") c.samples = static_cast<int>(to_int(key, value));
    else if (key == "sample_rate_hz")
      c.sample_rate_hz = static_cast<float>(to_double(key, value));
    else if (key == "subject_scale") c.subject_scale = to_double(key, value);
    else if (key == "session_gain_spread")
      c.session_gain_spread = to_double(key, value);
    else if (key == "session_tilt") c.session_tilt = to_double(key, value);
    else if (key == "noise_floor") c.noise_floor = to_double(key, value);
    else if (key == "seed") c.seed = static_cast<uint64_t>(to_int(key, value));
    else
      throw FormatError("config: unknown synth key '" + key + "'");
  }
  c.validate();
  return c;
}

void apply_train_overrides(TrainConfig& cfg,
                           const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "lambda") cfg.lambda = to_double(key, value);
    else if (key == "batch_size")
      cfg.batch_size = static_cast<int>(to_int(key, value));
    else if (key == "max_passes")
      cfg.max_passes = static_cast<int>(to_int(key, value));
    else if (key == "patience")
      cfg.patience = static_cast<int>(to_int(key, value));
    else if (key == "lr") cfg.lr = to_double(key, value);
    else if (key == "beta1") cfg.beta1 = to_double(key, value);
    else if (key == "beta2") cfg.beta2 = to_double(key, value);
    else if (key == "eps") cfg.eps = to_double(key, value);
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_int(key, value));
    else
      throw FormatError("config: unknown train key '" + key + "'");
  }
}

}  // namespace ainv
