// bmtk: simulate -> train -> register -> evaluate -> strain -> report.
// Exit codes: 0 ok, 2 usage or input error, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmtk/app/pipeline.hpp"
#include "bmtk/errors.hpp"
#include "bmtk/io/container.hpp"
#include "bmtk/io/manifest.hpp"
#include "bmtk/io/report.hpp"
#include "bmtk/metrics/metrics.hpp"
#include "bmtk/reg/registration.hpp"
#include "bmtk/vae/checkpoint.hpp"
#include "bmtk/vae/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bmtk;

namespace {

// where a numerical failure of the running stage is described
fs::path g_diagnostics;

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw ArgumentError(std::string(what) + " not found: " + p.string());
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The lowest-index failure is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double spacing_of(const fs::path& tensor_path, double fallback = 1.8) {
  const json meta = io::read_sidecar(tensor_path);
  if (meta.is_object() && meta.contains("spacing_mm") && meta["spacing_mm"].is_number()) {
    return meta["spacing_mm"].get<double>();
  }
  return fallback;
}

// A directory holding fields.bmtk is one item; otherwise each subject subdirectory is.
struct Item {
  std::string name;
  fs::path dir;
};

std::vector<Item> items_of(const fs::path& root) {
  if (!fs::is_directory(root)) throw ArgumentError("directory not found: " + root.string());
  if (fs::exists(root / "fields.bmtk")) return {{fs::absolute(root).filename().string(), root}};
  std::vector<Item> out;
  for (const auto& d : app::subject_dirs(root)) out.push_back({d.filename().string(), d});
  if (out.empty()) throw ArgumentError("no fields.bmtk under " + root.string());
  return out;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const fs::path& config_path, const fs::path& out, int jobs) {
  const auto t0 = Clock::now();
  const json raw = app::read_json(config_path);
  app::CohortConfig cfg = app::cohort_from_json(raw);
  cfg.seed = app::seed_override(cfg.seed);
  g_diagnostics = out / "failure.json";

  const std::size_t n = static_cast<std::size_t>(cfg.subjects);
  std::vector<app::Subject> subjects(n);
  std::vector<std::vector<fs::path>> written(n);
  std::vector<double> secs(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto ts = Clock::now();
    subjects[i] = app::make_subject(cfg, static_cast<int>(i));
    written[i] = app::save_subject(out / subjects[i].name, subjects[i]);
    subjects[i].sim.ed_mesh = {};  // only the schedule is needed from here on
    subjects[i].sim.masks = {};
    subjects[i].cine = {};
    secs[i] = since(ts);
  });

  std::vector<io::SubjectPressure> pressure;
  for (const auto& s : subjects) pressure.push_back({s.name, s.sim.schedule});
  io::write_text(out / "pressure.csv", io::pressure_csv(pressure));

  io::RunManifest m("simulate");
  m.set_config(app::to_json(cfg));
  m.set_seed(cfg.seed);
  m.add_input(config_path);
  for (const auto& w : written)
    for (const auto& p : w) m.add_output(p, out);
  m.add_output(out / "pressure.csv", out);
  json geo = json::object();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = subjects[i].geometry;
    geo[subjects[i].name] = {{"inner_radius_px", g.inner_radius_px},
                             {"outer_radius_px", g.outer_radius_px},
                             {"ed_center_px", {g.ed_center_px.x(), g.ed_center_px.y()}},
                             {"es_shift_px", {g.es_shift_px.x(), g.es_shift_px.y()}},
                             {"peak_reduction", g.peak_reduction}};
    m.add_timing(subjects[i].name, secs[i]);
  }
  m.set_extra("geometry", geo);
  m.add_timing("total", since(t0));
  m.write(out / "manifest.json");
  std::cout << "simulated " << n << " subjects into " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const fs::path& data, const fs::path& config_path, const fs::path& out) {
  const auto t0 = Clock::now();
  vae::TrainConfig cfg = app::train_config_from_json(app::read_json(config_path));
  cfg.seed = app::seed_override(cfg.seed);
  g_diagnostics = fs::path(out.string() + ".failure.json");

  const auto dirs = app::subject_dirs(data);
  if (dirs.empty()) throw ArgumentError("no subject directories with fields.bmtk under " + data.string());
  std::vector<Tensor> seqs;
  for (const auto& d : dirs) seqs.push_back(io::read_tensor(d / "fields.bmtk"));

  cfg.on_epoch = [](const vae::EpochStats& s) {
    std::fprintf(stderr, "epoch %d  train %.6g  val %.6g  (%.1fs)\n", s.epoch, s.train_loss, s.validation_loss,
                 s.seconds);
  };
  const vae::VaeCheckpoint ck = vae::train(seqs, cfg);
  vae::save_checkpoint(out, ck);

  const fs::path root = out.parent_path().empty() ? fs::path(".") : out.parent_path();
  io::RunManifest m("train");
  m.set_config(app::to_json(cfg));
  m.set_seed(cfg.seed);
  m.add_input(config_path);
  for (const auto& d : dirs) m.add_input(d / "fields.bmtk");
  m.add_output(out, root);
  m.set_extra("best_epoch", ck.training.value("best_epoch", 0));
  m.set_extra("best_validation_loss", ck.training.value("best_validation_loss", 0.0));
  m.add_timing("total", since(t0));
  m.write(out.string() + ".manifest.json");
  std::cout << "checkpoint written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- register

struct RegisterJob {
  std::string name;
  fs::path seq, mask, out;
};

int cmd_register(const fs::path& seq, const std::optional<fs::path>& mask, const fs::path& ckpt_path,
                 const fs::path& config_path, const fs::path& out, int jobs) {
  const auto t0 = Clock::now();
  reg::RegistrationConfig cfg = app::registration_from_json(app::read_json(config_path));
  cfg.seed = app::seed_override(cfg.seed);
  g_diagnostics = out / "failure.json";
  require_file(ckpt_path, "checkpoint");
  const vae::VaeCheckpoint ck = vae::load_checkpoint(ckpt_path);
  const vae::TemporalVae model = ck.model();

  std::vector<RegisterJob> todo;
  if (fs::is_directory(seq)) {
    for (const auto& d : app::subject_dirs(seq)) {
      todo.push_back({d.filename().string(), d / "cine.bmtk", mask.value_or(d / "ed_myocardium.bmtk"),
                      out / d.filename()});
    }
    if (todo.empty()) throw ArgumentError("no subject directories under " + seq.string());
  } else {
    if (!mask) throw ArgumentError("--mask is required when --seq is a file");
    todo.push_back({seq.parent_path().filename().string(), seq, *mask, out});
  }
  for (const auto& j : todo) {
    require_file(j.seq, "sequence");
    require_file(j.mask, "mask");
  }

  std::vector<std::vector<fs::path>> written(todo.size());
  std::vector<json> summary(todo.size());
  std::vector<double> secs(todo.size());
  parallel_for(todo.size(), jobs, [&](std::size_t i) {
    const RegisterJob& job = todo[i];
    const Tensor images = io::read_tensor(job.seq);
    const Mask myo = Mask::from_tensor(io::read_tensor(job.mask));
    reg::RegistrationConfig c = cfg;
    c.spacing_mm = spacing_of(job.seq, cfg.spacing_mm);
    reg::TrackingResult res;
    try {
      res = reg::register_sequence(images, myo, model, c);
    } catch (const ManifestError& e) {
      throw ManifestError("manifest mismatch: checkpoint " + ckpt_path.string() + " cannot be applied to " +
                          job.seq.string() + ": " + e.what());
    }
    const json meta = {{"subject", job.name}, {"spacing_mm", c.spacing_mm}};
    auto& w = written[i];
    const auto put = [&](const char* file, const Tensor& t, json extra) {
      extra.update(meta);
      w.push_back(job.out / file);
      io::write_tensor(w.back(), t, extra);
      w.push_back(job.out / (std::string(file) + ".json"));
    };
    put("fields.bmtk", res.fields.fields, {{"kind", "displacement"}, {"units", "px"}, {"layout", "T x 2 x M x N"}});
    put("z.bmtk", res.z, {{"kind", "latent"}, {"layout", "T x D"}});
    put("roi.bmtk", reg::dilate_mask(myo, c.dilation_radius).to_tensor(),
        {{"kind", "mask"}, {"layout", "M x N"}, {"dilation_radius", c.dilation_radius}});
    put("ed_myocardium.bmtk", myo.to_tensor(), {{"kind", "mask"}, {"layout", "M x N"}});
    const json diag = {{"subject", job.name},
                       {"iterations", res.iterations},
                       {"best_iteration", res.best_iteration},
                       {"converged", res.converged},
                       {"objective", res.trace},
                       {"best_objective", res.best_trace},
                       {"data_term", res.data_trace}};
    io::write_text(job.out / "diagnostics.json", diag.dump(2) + "\n");
    w.push_back(job.out / "diagnostics.json");
    summary[i] = {{"iterations", res.iterations},
                  {"converged", res.converged},
                  {"final_objective", res.best_trace.empty() ? 0.0 : res.best_trace.back()}};
    secs[i] = res.seconds;
  });

  io::RunManifest m("register");
  json conf = app::to_json(cfg);
  conf["checkpoint_arch"] = vae::architecture_to_json(ck.arch);
  m.set_config(conf);
  m.set_seed(cfg.seed);
  m.add_input(config_path);
  m.add_input(ckpt_path);
  json sub = json::object();
  for (std::size_t i = 0; i < todo.size(); ++i) {
    m.add_input(todo[i].seq);
    m.add_input(todo[i].mask);
    for (const auto& p : written[i]) m.add_output(p, out);
    sub[todo[i].name] = summary[i];
    m.add_timing(todo[i].name, secs[i]);
  }
  m.set_extra("subjects", sub);
  m.add_timing("total", since(t0));
  m.write(out / "manifest.json");
  std::cout << "registered " << todo.size() << " sequence(s) into " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const fs::path& pred, const fs::path& truth, const fs::path& out) {
  const auto t0 = Clock::now();
  g_diagnostics = fs::path(out.string() + ".failure.json");
  const auto preds = items_of(pred);
  const bool single = preds.size() == 1 && preds[0].dir == pred;
  io::RunManifest m("evaluate");
  std::vector<io::SubjectMetrics> rows;
  json summary = json::object();
  for (const auto& it : preds) {
    const fs::path tdir = single ? truth : truth / it.name;
    require_file(tdir / "masks.bmtk", "ground-truth masks");
    const fs::path pf = it.dir / "fields.bmtk";
    const Tensor fields = io::read_tensor(pf);
    const Tensor masks = io::read_tensor(tdir / "masks.bmtk");
    if (fields.rank() != 4 || masks.rank() != 3 || fields.extent(0) != masks.extent(0) ||
        fields.extent(2) != masks.extent(1) || fields.extent(3) != masks.extent(2)) {
      throw DimensionError("evaluate: " + pf.string() + " and " + (tdir / "masks.bmtk").string() +
                           " disagree in frames or grid");
    }
    const std::string name = single ? tdir.filename().string() : it.name;
    auto fm = metrics::evaluate_sequence(fields, masks, spacing_of(tdir / "masks.bmtk", spacing_of(pf)));
    std::vector<double> d, c, j;
    for (const auto& f : fm) {
      d.push_back(f.dice);
      c.push_back(f.mcd_mm);
      j.push_back(f.jac_metric);
    }
    const auto sd = metrics::summarize(d), sc = metrics::summarize(c), sj = metrics::summarize(j);
    summary[name] = {{"dice_mean", sd.mean}, {"mcd_mm_mean", sc.mean}, {"jac_metric_mean", sj.mean}};
    rows.push_back({name, std::move(fm)});
    m.add_input(pf);
    m.add_input(tdir / "masks.bmtk");
  }
  io::write_text(out, io::metrics_csv(rows));
  m.add_output(out, out.parent_path().empty() ? fs::path(".") : out.parent_path());
  m.set_extra("summary", summary);
  m.add_timing("total", since(t0));
  m.write(out.string() + ".manifest.json");
  std::cout << "metrics for " << rows.size() << " subject(s) written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- strain

int cmd_strain(const fs::path& fields_dir, const std::optional<fs::path>& mask, const fs::path& out) {
  const auto t0 = Clock::now();
  g_diagnostics = fs::path(out.string() + ".failure.json");
  const auto items = items_of(fields_dir);
  io::RunManifest m("strain");
  std::vector<io::SubjectStrain> rows;
  json peaks = json::object();
  for (const auto& it : items) {
    const fs::path mp = mask.value_or(it.dir / "ed_myocardium.bmtk");
    require_file(mp, "mask");
    const fs::path fp = it.dir / "fields.bmtk";
    sim::DeformationSequence seq;
    seq.fields = io::read_tensor(fp);
    seq.spacing_mm = spacing_of(fp);
    const Mask myo = Mask::from_tensor(io::read_tensor(mp));
    const auto center = metrics::lv_centroid(myo, metrics::enclosed_region(myo));
    auto curve = metrics::strain_curves(seq, center, myo);
    peaks[it.name] = {{"peak_rr_pct", curve.peak_rr_pct},
                      {"peak_rr_frame", curve.peak_rr_frame},
                      {"peak_cc_pct", curve.peak_cc_pct},
                      {"peak_cc_frame", curve.peak_cc_frame}};
    rows.push_back({it.name, std::move(curve)});
    m.add_input(fp);
    m.add_input(mp);
  }
  io::write_text(out, io::strain_csv(rows));
  m.add_output(out, out.parent_path().empty() ? fs::path(".") : out.parent_path());
  m.set_extra("peaks", peaks);
  m.add_timing("total", since(t0));
  m.write(out.string() + ".manifest.json");
  std::cout << "strain curves for " << rows.size() << " subject(s) written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- report

int cmd_report(const fs::path& result, const fs::path& out) {
  const auto t0 = Clock::now();
  g_diagnostics = out / "failure.json";
  const auto items = items_of(result);
  const bool single = items.size() == 1 && items[0].dir == result;
  io::RunManifest m("report");
  for (const auto& it : items) {
    const fs::path fp = it.dir / "fields.bmtk";
    fs::path rp = it.dir / "roi.bmtk";
    if (!fs::exists(rp)) rp = it.dir / "ed_myocardium.bmtk";
    require_file(rp, "roi mask");
    const Tensor fields = io::read_tensor(fp);
    const Mask roi = Mask::from_tensor(io::read_tensor(rp));
    const fs::path dir = single ? out : out / it.name;
    for (const auto& p : io::emit_report(dir, fields, roi, spacing_of(fp))) m.add_output(p, out);
    m.add_input(fp);
    m.add_input(rp);
  }
  m.add_timing("total", since(t0));
  m.write(out / "manifest.json");
  std::cout << "report for " << items.size() << " subject(s) written to " << out.string() << "\n";
  return 0;
}

int numerical_failure(const NumericalError& e) {
  json d = {{"error", e.what()}};
  if (const auto* s = dynamic_cast<const SolverError*>(&e)) {
    d["kind"] = "solver";
    d["residual"] = s->residual();
  } else if (const auto* c = dynamic_cast<const CalibrationError*>(&e)) {
    d["kind"] = "calibration";
    d["reachable_area_px2"] = {c->min_area(), c->max_area()};
  } else if (const auto* o = dynamic_cast<const OptimizationError*>(&e)) {
    d["kind"] = "optimization";
    d["iteration"] = o->iteration();
  } else {
    d["kind"] = "numerical";
  }
  fs::path p = g_diagnostics.empty() ? fs::path("bmtk_failure.json") : g_diagnostics;
  try {
    io::write_text(p, d.dump(2) + "\n");
  } catch (const std::exception&) {
    p = "bmtk_failure.json";
    io::write_text(p, d.dump(2) + "\n");
  }
  std::cerr << "bmtk: numerical failure: " << e.what() << "\ndiagnostics: " << p.string() << "\n";
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bmtk: biomechanics-informed cardiac motion tracking toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bmtk 1.0.0");

  std::string config, out, data, seq, mask, ckpt, pred, truth, fields, result;
  int jobs = 1;

  auto* sim = app.add_subcommand("simulate", "Simulate a synthetic cohort");
  sim->add_option("--config", config, "cohort JSON")->required();
  sim->add_option("--out", out, "output directory")->required();
  sim->add_option("--jobs", jobs, "subjects simulated in parallel")->check(CLI::PositiveNumber);

  auto* tr = app.add_subcommand("train", "Train the temporal VAE");
  tr->add_option("--data", data, "simulate output directory")->required();
  tr->add_option("--config", config, "training JSON")->required();
  tr->add_option("--out", out, "checkpoint path")->required();

  auto* rg = app.add_subcommand("register", "Track motion by latent search");
  rg->add_option("--seq", seq, "cine .bmtk (T x M x N) or a simulate output directory")->required();
  rg->add_option("--mask", mask, "ED myocardium .bmtk (defaults per subject in directory mode)");
  rg->add_option("--ckpt", ckpt, "VAE checkpoint")->required();
  rg->add_option("--config", config, "registration JSON")->required();
  rg->add_option("--out", out, "output directory")->required();
  rg->add_option("--jobs", jobs, "sequences registered in parallel")->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("evaluate", "Dice, MCD and Jacobian metrics against ground truth");
  ev->add_option("--pred", pred, "register output directory")->required();
  ev->add_option("--truth", truth, "simulate output directory")->required();
  ev->add_option("--out", out, "metrics CSV")->required();

  auto* st = app.add_subcommand("strain", "Radial and circumferential strain curves");
  st->add_option("--fields", fields, "directory with fields.bmtk (or per-subject subdirectories)")->required();
  st->add_option("--mask", mask, "ED myocardium .bmtk (defaults to ed_myocardium.bmtk beside the fields)");
  st->add_option("--out", out, "strain CSV")->required();

  auto* rp = app.add_subcommand("report", "Quiver and log-det-Jacobian CSVs");
  rp->add_option("--result", result, "register output directory")->required();
  rp->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
  try {
    if (*sim) return cmd_simulate(config, out, jobs);
    if (*tr) return cmd_train(data, config, out);
    if (*rg) return cmd_register(seq, opt(mask), ckpt, config, out, jobs);
    if (*ev) return cmd_evaluate(pred, truth, out);
    if (*st) return cmd_strain(fields, opt(mask), out);
    if (*rp) return cmd_report(result, out);
  } catch (const NumericalError& e) {
    return numerical_failure(e);
  } catch (const ManifestError& e) {
    std::cerr << "bmtk: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "bmtk: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "bmtk: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "bmtk: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
