#include "difflab/experiment.hpp"

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "difflab/attack.hpp"
#include "difflab/chain.hpp"
#include "difflab/metrics.hpp"
#include "difflab/rng.hpp"
#include "difflab/version.hpp"

namespace fs = std::filesystem;

namespace difflab {
namespace {

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("short write: " + path.string());
}

std::string timestamp_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path make_run_dir(const std::string& out_root, const std::string& command) {
  const fs::path base =
      fs::path(out_root) / (command + "_" + timestamp_now());
  fs::path dir = base;
  for (int suffix = 2; fs::exists(dir); ++suffix)
    dir = fs::path(base.string() + "-" + std::to_string(suffix));
  fs::create_directories(dir);
  return dir;
}

const char* image_ext(const Shape& shape) {
  return shape.channels == 3 ? ".ppm" : ".pgm";
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Condition condition_for(const ExperimentConfig& cfg, int label) {
  return cfg.condition_kind == ConditionKind::Class
             ? Condition::cls(label, cfg.guidance_scale)
             : Condition::null();
}

std::uint64_t image_seed(const ExperimentConfig& cfg, int i) {
  return mix_seed(cfg.seed, kImageStreamBase + static_cast<std::uint64_t>(i));
}

// Runs fn(0..n-1) across `threads` workers; results must land in
// preallocated per-index slots so scheduling never affects output. The
// first exception wins and stops the remaining work.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  std::mutex err_mutex;
  auto worker = [&] {
    while (!stop.load(std::memory_order_relaxed)) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        stop.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string manifest_text(const ExperimentConfig& cfg, const Workbench& wb,
                          const std::string& command, int threads) {
  std::ostringstream out;
  out << "version = " << kVersion << "\n";
  out << "command = " << command << "\n";
  out << "timestamp = " << timestamp_now() << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "images = " << wb.attack_images << "\n";
  out << "dataset_size = " << wb.data.images.size() << "\n";
  out << "classes = " << wb.data.classes << "\n";
  out << "schedule_T = " << wb.schedule.T << "\n";
  out << "schedule_hash = " << hex64(schedule_hash(wb.schedule)) << "\n";
  out << "estimator = " << to_string(cfg.attack.estimator) << "\n";
  out << "classifier_train_accuracy = " << csv_double(wb.classifier.train_accuracy)
      << "\n";
  out << "threads = " << threads << "\n";
  return out.str();
}

struct ImageMetrics {
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  double linf = 0.0;
  double l2 = 0.0;
};

ImageMetrics measure(const AttackResult& res, const Sample& x0) {
  ImageMetrics m;
  m.psnr_db = psnr(res.adversarial, x0);
  m.ssim_val = ssim(res.adversarial, x0);
  m.linf = norm_linf(res.delta);
  m.l2 = norm_l2(sub(res.adversarial, x0));
  return m;
}

std::string trace_csv(const AttackResult& res) {
  std::ostringstream out;
  out << "iter,loss,pred,linf_delta,l2_image\n";
  for (const TraceRow& row : res.trace) {
    out << row.iter << ',' << csv_double(row.loss) << ',' << row.pred << ','
        << csv_double(row.linf_delta) << ',' << csv_double(row.l2_image)
        << '\n';
  }
  return out.str();
}

}  // namespace

std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int resolve_threads(int images) {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap < 1) cap = 1;
  if (const char* env = std::getenv("DIFFLAB_MAX_THREADS")) {
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*env == '\0' || end != env + std::strlen(env) || errno == ERANGE ||
        v < 1)
      throw std::runtime_error(
          "DIFFLAB_MAX_THREADS: expected a positive integer, got '" +
          std::string(env) + "'");
    if (v < cap) cap = static_cast<int>(v);
  }
  if (images < cap) cap = images;
  return cap < 1 ? 1 : cap;
}

Workbench assemble_workbench(const ExperimentConfig& cfg) {
  Workbench wb;
  wb.schedule = build_schedule(cfg.T, cfg.beta_start, cfg.beta_end,
                               cfg.eta_ddpm, cfg.h_formula);
  if (cfg.dataset_kind == DatasetKind::Synth) {
    SynthData sd = synth_dataset(cfg.synth, mix_seed(cfg.seed, kDataStream));
    wb.data = std::move(sd.data);
    wb.model = std::move(sd.model);
  } else {
    wb.data = load_idx(cfg.idx_images, cfg.idx_labels);
    if (wb.data.images.empty())
      throw std::runtime_error("dataset: no images in " + cfg.idx_images);
    if (!(wb.data.images[0].shape == cfg.synth.shape))
      throw std::runtime_error(
          "dataset: file image shape does not match configured "
          "height/width/channels");
    if (wb.data.classes != static_cast<int>(cfg.synth.templates.size()))
      throw std::runtime_error(
          "dataset.templates: need exactly one template per label class; data "
          "has " +
          std::to_string(wb.data.classes) + " classes, config lists " +
          std::to_string(cfg.synth.templates.size()));
    wb.model = synth_model(cfg.synth);
  }
  if (wb.data.images.empty()) throw std::runtime_error("dataset is empty");
  wb.classifier =
      train_classifier(wb.data, cfg.classifier_kind, cfg.activation,
                       cfg.hidden, cfg.epochs, cfg.lr,
                       mix_seed(cfg.seed, kClassifierStream));
  const int total = static_cast<int>(wb.data.images.size());
  wb.attack_images =
      cfg.max_images > 0 && cfg.max_images < total ? cfg.max_images : total;
  return wb;
}

std::string run_attack_experiment(ExperimentConfig cfg, const RunOptions& opt) {
  if (opt.override_seed) cfg.seed = opt.seed;
  const fs::path dir = make_run_dir(opt.out_root, "attack");
  try {
    write_text_file(dir / "config.snapshot.txt", serialize_config(cfg));
    const Workbench wb = assemble_workbench(cfg);
    const int n = wb.attack_images;
    const int threads = resolve_threads(n);

    std::vector<AttackResult> results(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](int i) {
      AttackConfig acfg = cfg.attack;
      acfg.rng_seed = image_seed(cfg, i);
      results[static_cast<std::size_t>(i)] = run_attack(
          wb.data.images[static_cast<std::size_t>(i)],
          wb.data.labels[static_cast<std::size_t>(i)], wb.model, wb.classifier,
          wb.schedule, condition_for(cfg, wb.data.labels[static_cast<std::size_t>(i)]),
          acfg);
    });

    const char* ext = image_ext(wb.model.shape);
    std::ostringstream csv;
    csv << "image,label,clean_pred,adv_pred,success,iterations,linf_delta,"
           "l2_image,psnr_db,ssim\n";
    std::vector<bool> successes, clean_correct;
    std::vector<double> psnrs, ssims, linfs, l2s;
    double iter_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const AttackResult& res = results[idx];
      const Sample& x0 = wb.data.images[idx];
      const ImageMetrics m = measure(res, x0);
      csv << i << ',' << wb.data.labels[idx] << ',' << res.clean_pred << ','
          << res.final_pred << ',' << (res.success ? 1 : 0) << ','
          << res.iterations_used << ',' << csv_double(m.linf) << ','
          << csv_double(m.l2) << ',' << csv_double(m.psnr_db) << ','
          << csv_double(m.ssim_val) << '\n';
      successes.push_back(res.success);
      clean_correct.push_back(res.clean_pred == wb.data.labels[idx]);
      psnrs.push_back(m.psnr_db);
      ssims.push_back(m.ssim_val);
      linfs.push_back(m.linf);
      l2s.push_back(m.l2);
      iter_sum += res.iterations_used;

      const std::string tag = std::to_string(i);
      write_text_file(dir / ("trace_" + tag + ".csv"), trace_csv(res));
      write_image((dir / ("clean_" + tag + ext)).string(), x0);
      write_image((dir / ("recon_" + tag + ext)).string(), res.clean_recon);
      write_image((dir / ("adv_" + tag + ext)).string(), res.adversarial);
    }
    const MetricReport rep =
        make_metric_report(successes, clean_correct, psnrs, ssims, linfs, l2s);
    csv << "all," << rep.images << ',' << csv_double(rep.clean_error) << ",,"
        << csv_double(rep.asr) << ',' << csv_double(iter_sum / rep.images)
        << ',' << csv_double(rep.mean_linf) << ',' << csv_double(rep.mean_l2)
        << ',' << csv_double(rep.mean_psnr) << ',' << csv_double(rep.mean_ssim)
        << '\n';
    write_text_file(dir / "summary.csv", csv.str());
    write_text_file(dir / "manifest.txt",
                    manifest_text(cfg, wb, "attack", threads));
    return dir.string();
  } catch (const std::exception& e) {
    write_text_file(dir / "FAILED", std::string(e.what()) + "\n");
    throw;
  }
}

std::string run_invert_experiment(ExperimentConfig cfg, const RunOptions& opt) {
  if (opt.override_seed) cfg.seed = opt.seed;
  const fs::path dir = make_run_dir(opt.out_root, "invert");
  try {
    write_text_file(dir / "config.snapshot.txt", serialize_config(cfg));
    const Workbench wb = assemble_workbench(cfg);
    const int n = wb.attack_images;
    const int threads = resolve_threads(n);
    fs::create_directories(dir / "stacks");

    std::vector<double> errs(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](int i) {
      const auto idx = static_cast<std::size_t>(i);
      const Condition cond = condition_for(cfg, wb.data.labels[idx]);
      const NoiseMapStack stack =
          invert(wb.data.images[idx], cond, wb.model, wb.schedule,
                 mix_seed(image_seed(cfg, i), kInvertStream));
      const Sample recon =
          denoise_chain(stack, wb.model, Sample(wb.model.shape),
                        wb.schedule);
      errs[idx] = max_abs_diff(recon, wb.data.images[idx]);
      save_stack(stack,
                 (dir / "stacks" / ("stack_" + std::to_string(i) + ".bin"))
                     .string());
    });

    std::ostringstream csv;
    csv << "image,label,recon_err\n";
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      csv << i << ',' << wb.data.labels[idx] << ',' << csv_double(errs[idx])
          << '\n';
      if (errs[idx] > worst) worst = errs[idx];
    }
    csv << "all," << n << ',' << csv_double(worst) << '\n';
    write_text_file(dir / "invert.csv", csv.str());
    write_text_file(dir / "manifest.txt",
                    manifest_text(cfg, wb, "invert", threads));
    return dir.string();
  } catch (const std::exception& e) {
    write_text_file(dir / "FAILED", std::string(e.what()) + "\n");
    throw;
  }
}

std::string run_eval_experiment(ExperimentConfig cfg, const RunOptions& opt) {
  if (opt.override_seed) cfg.seed = opt.seed;
  const fs::path dir = make_run_dir(opt.out_root, "eval");
  try {
    write_text_file(dir / "config.snapshot.txt", serialize_config(cfg));
    const Workbench wb = assemble_workbench(cfg);
    const int n = wb.attack_images;
    const int threads = resolve_threads(n);

    struct Row {
      int clean_pred = 0;
      double recon_err = 0.0;
      double psnr_db = 0.0;
      double ssim_val = 0.0;
    };
    std::vector<Row> rows(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](int i) {
      const auto idx = static_cast<std::size_t>(i);
      const Sample& x0 = wb.data.images[idx];
      const Condition cond = condition_for(cfg, wb.data.labels[idx]);
      const NoiseMapStack stack =
          invert(x0, cond, wb.model, wb.schedule,
                 mix_seed(image_seed(cfg, i), kInvertStream));
      const Sample recon =
          denoise_chain(stack, wb.model, Sample(wb.model.shape),
                        wb.schedule);
      Row r;
      r.recon_err = max_abs_diff(recon, x0);
      const Sample recon01 = clamp01(recon);
      r.clean_pred = predict(wb.classifier, recon01);
      r.psnr_db = psnr(recon01, x0);
      r.ssim_val = ssim(recon01, x0);
      rows[idx] = r;
    });

    std::ostringstream csv;
    csv << "image,label,clean_pred,correct,recon_err,psnr_db,ssim\n";
    int correct = 0;
    double err_sum = 0.0, psnr_sum = 0.0, ssim_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const Row& r = rows[idx];
      const bool ok = r.clean_pred == wb.data.labels[idx];
      csv << i << ',' << wb.data.labels[idx] << ',' << r.clean_pred << ','
          << (ok ? 1 : 0) << ',' << csv_double(r.recon_err) << ','
          << csv_double(r.psnr_db) << ',' << csv_double(r.ssim_val) << '\n';
      correct += ok ? 1 : 0;
      err_sum += r.recon_err;
      psnr_sum += r.psnr_db;
      ssim_sum += r.ssim_val;
    }
    csv << "all," << n << ",," << csv_double(double(correct) / n) << ','
        << csv_double(err_sum / n) << ',' << csv_double(psnr_sum / n) << ','
        << csv_double(ssim_sum / n) << '\n';
    write_text_file(dir / "eval.csv", csv.str());
    write_text_file(dir / "manifest.txt",
                    manifest_text(cfg, wb, "eval", threads));
    return dir.string();
  } catch (const std::exception& e) {
    write_text_file(dir / "FAILED", std::string(e.what()) + "\n");
    throw;
  }
}

std::string run_bench(ExperimentConfig cfg, const RunOptions& opt,
                      const std::vector<int>& step_counts) {
  if (step_counts.size() < 2)
    throw std::invalid_argument("bench: need at least two step counts");
  if (opt.override_seed) cfg.seed = opt.seed;
  const fs::path dir = make_run_dir(opt.out_root, "bench");
  try {
    write_text_file(dir / "config.snapshot.txt", serialize_config(cfg));

    struct Arm {
      int T = 0;
      int images = 0;
      std::uint64_t cond = 0;
      std::uint64_t uncond = 0;
      double wall = 0.0;
    };
    std::vector<Arm> arms;
    Workbench last_wb;
    for (int T : step_counts) {
      ExperimentConfig arm_cfg = cfg;
      arm_cfg.T = T;
      Workbench wb = assemble_workbench(arm_cfg);
      const int n = wb.attack_images;
      reset_denoiser_eval_counts();
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        AttackConfig acfg = arm_cfg.attack;
        acfg.rng_seed = image_seed(arm_cfg, i);
        run_attack(wb.data.images[idx], wb.data.labels[idx], wb.model,
                   wb.classifier, wb.schedule,
                   condition_for(arm_cfg, wb.data.labels[idx]), acfg);
      }
      const auto t1 = std::chrono::steady_clock::now();
      const DenoiserEvalCounts counts = denoiser_eval_counts();
      arms.push_back(Arm{T, n, counts.conditional, counts.unconditional,
                         std::chrono::duration<double>(t1 - t0).count()});
      last_wb = std::move(wb);
    }

    std::ostringstream csv;
    csv << "T,images,cond_evals,uncond_evals,evals_per_example,"
           "wall_seconds,wall_per_example,eval_ratio,wall_ratio\n";
    const auto per_example = [](const Arm& a) {
      return double(a.cond + a.uncond) / a.images;
    };
    for (const Arm& a : arms) {
      csv << a.T << ',' << a.images << ',' << a.cond << ',' << a.uncond << ','
          << csv_double(per_example(a)) << ',' << csv_double(a.wall) << ','
          << csv_double(a.wall / a.images) << ','
          << csv_double(per_example(a) / per_example(arms[0])) << ','
          << csv_double((a.wall / a.images) / (arms[0].wall / arms[0].images))
          << '\n';
    }
    write_text_file(dir / "bench.csv", csv.str());
    write_text_file(dir / "manifest.txt",
                    manifest_text(cfg, last_wb, "bench", 1));
    return dir.string();
  } catch (const std::exception& e) {
    write_text_file(dir / "FAILED", std::string(e.what()) + "\n");
    throw;
  }
}

}  // namespace difflab
