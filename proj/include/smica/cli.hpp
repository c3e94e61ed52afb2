/**
 * @brief Command-line driver: argument parsing and command execution.
 *
 * Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
 * Failures print one line "error: <kind>: <message>" on stderr.
 */
#pragma once

#include "smica/baselines.hpp"
#include "smica/core.hpp"
#include "smica/em.hpp"
#include "smica/extract.hpp"
#include "smica/io.hpp"
#include "smica/model.hpp"
#include "smica/spectral.hpp"
#include "smica/synth.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace smica::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct RunConfig {
  std::string command; ///< fit | separate | denoise | jdiag | ssd | benchmark | spectra
  std::string input;
  std::string output;
  std::string params; ///< fitted params JSON for separate / denoise
  std::optional<double> fs;
  std::string sidecar;
  std::string bands = "1:70:40";
  std::string bands_file;
  std::optional<double> fmin;
  std::optional<double> fmax;
  Eigen::Index q = 0;
  double tol = 1e-7;
  int max_iter_warm = 100;
  int max_iter_main = 10000;
  std::uint64_t seed = 0;
  std::string method = "wiener";
  std::string exclude = "none";
  double freq = 0.0;
  double bandwidth = 2.0;
  std::string scenario = "phantom";
  std::string tier = "all";
};

/// Parses "lo:hi:count" into uniform bands.
inline BandSpec parse_band_range(const std::string &text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');)
    parts.push_back(part);
  if (parts.size() != 3)
    throw ConfigError("--bands expects lo:hi:count, got '" + text + "'");
  try {
    std::size_t used = 0;
    const double lo = std::stod(parts[0]);
    const double hi = std::stod(parts[1]);
    const long count = std::stol(parts[2], &used);
    if (used != parts[2].size() || count < 0)
      throw ConfigError("--bands: bad count '" + parts[2] + "'");
    return BandSpec::uniform(lo, hi, static_cast<std::size_t>(count));
  } catch (const std::logic_error &) {
    throw ConfigError("--bands expects numbers in lo:hi:count, got '" + text + "'");
  }
}

/// Parses "0,3,7" (or "none" / empty) into source indices.
inline std::set<Eigen::Index> parse_index_list(const std::string &text) {
  std::set<Eigen::Index> out;
  if (text.empty() || text == "none")
    return out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v < 0)
        throw ConfigError("--exclude: bad index '" + part + "'");
      out.insert(static_cast<Eigen::Index>(v));
    } catch (const std::logic_error &) {
      throw ConfigError("--exclude: bad index '" + part + "'");
    }
  }
  return out;
}

inline BandSpec resolve_bands(const RunConfig &cfg) {
  BandSpec bands = cfg.bands_file.empty() ? parse_band_range(cfg.bands)
                                          : io::bands_from_json(io::read_json(cfg.bands_file));
  if (cfg.fmin || cfg.fmax)
    bands = bands.clipped(cfg.fmin.value_or(0.0),
                          cfg.fmax.value_or(std::numeric_limits<double>::infinity()));
  return bands;
}

/// Sampling rate from --fs, else from --sidecar, else from <input stem>.json.
inline Recording load_recording(const RunConfig &cfg) {
  if (cfg.input.empty())
    throw ConfigError("--input is required");
  Recording rec;
  rec.data = io::read_csv(cfg.input);
  if (cfg.fs) {
    rec.fs = *cfg.fs;
  } else {
    std::string sidecar = cfg.sidecar;
    if (sidecar.empty()) {
      auto path = std::filesystem::path(cfg.input);
      path.replace_extension(".json");
      if (std::filesystem::exists(path))
        sidecar = path.string();
    }
    if (sidecar.empty())
      throw ConfigError("sampling rate missing: pass --fs or a JSON sidecar {\"fs\": <Hz>}");
    const auto j = io::read_json(sidecar);
    if (!j.is_object() || !j.contains("fs") || !j["fs"].is_number())
      throw ConfigError(sidecar + ": expected {\"fs\": <Hz>}");
    rec.fs = j["fs"].get<double>();
  }
  rec.validate();
  return rec;
}

inline void require_output(const RunConfig &cfg) {
  if (cfg.output.empty())
    throw ConfigError("--out is required for " + cfg.command);
}

namespace detail {

struct BenchmarkRow {
  std::string scenario;
  std::string tier;
  double amplitude = 0.0;
  std::string method;
  std::optional<double> amari;
  std::optional<double> cosine;
  double runtime = 0.0;
};

template <class F> double timed(F &&f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::vector<BenchmarkRow> run_phantom(const RunConfig &cfg) {
  std::vector<std::string> tiers = {"high", "medium", "low"};
  if (cfg.tier != "all")
    tiers = {cfg.tier};
  std::vector<BenchmarkRow> rows;
  for (const auto &tier : tiers) {
    const double amplitude = phantom_amplitude(tier);
    const auto scenario = phantom_scenario(cfg.seed, amplitude);
    const auto &gt = scenario.truth;
    const Vector planted = gt.A_true.col(scenario.planted);
    const auto emp = estimate_spectral_covariances(gt.recording, gt.bands);

    FitOptions opts;
    opts.q = gt.A_true.cols();
    opts.tol = cfg.tol;
    opts.max_iter_warm = cfg.max_iter_warm;
    opts.max_iter_main = cfg.max_iter_main;
    FitResult fitted;
    const double t_fit = timed([&] { fitted = fit(emp, opts); });
    rows.push_back({"phantom", tier, amplitude, "SMICA",
                    amari_distance_mixing(fitted.params.A, gt.A_true),
                    best_column_match(fitted.params.A, planted).cosine, t_fit});

    Unmixing unmixing;
    const double t_jd = timed([&] { unmixing = jdiag_fit(emp); });
    rows.push_back({"phantom", tier, amplitude, "JDIAG", std::nullopt,
                    best_column_match(mixing_from(unmixing), planted).cosine, t_jd});

    SpatialFilter filter;
    const double t_ssd = timed([&] { filter = ssd(gt.recording, 20.0, 2.0); });
    const Matrix xc = demeaned(gt.recording.data);
    const Matrix pattern = (xc * xc.transpose()) * filter.w;
    rows.push_back({"phantom", tier, amplitude, "SSD", std::nullopt,
                    best_column_match(pattern, planted).cosine, t_ssd});
  }
  return rows;
}

inline std::vector<BenchmarkRow> run_diverse(const RunConfig &cfg) {
  const GroundTruth gt = diverse_mixture(cfg.seed);
  const auto emp = estimate_spectral_covariances(gt.recording, gt.bands);
  FitOptions opts;
  opts.q = gt.A_true.cols();
  opts.tol = cfg.tol;
  opts.max_iter_warm = cfg.max_iter_warm;
  opts.max_iter_main = cfg.max_iter_main;
  FitResult fitted;
  const double t_fit = timed([&] { fitted = fit(emp, opts); });
  double cos_fit = 0.0;
  for (Eigen::Index j = 0; j < gt.A_true.cols(); ++j)
    cos_fit += best_column_match(fitted.params.A, gt.A_true.col(j)).cosine;
  std::vector<BenchmarkRow> rows;
  rows.push_back({"diverse", "10dB", 1.0, "SMICA",
                  amari_distance_mixing(fitted.params.A, gt.A_true),
                  cos_fit / static_cast<double>(gt.A_true.cols()), t_fit});

  Unmixing unmixing;
  const double t_jd = timed([&] { unmixing = jdiag_fit(emp); });
  const Matrix mix = mixing_from(unmixing);
  double cos_jd = 0.0;
  for (Eigen::Index j = 0; j < gt.A_true.cols(); ++j)
    cos_jd += best_column_match(mix, gt.A_true.col(j)).cosine;
  rows.push_back({"diverse", "10dB", 1.0, "JDIAG", std::nullopt,
                  cos_jd / static_cast<double>(gt.A_true.cols()), t_jd});
  return rows;
}

inline void benchmark(const RunConfig &cfg) {
  require_output(cfg);
  std::vector<BenchmarkRow> rows;
  if (cfg.scenario == "phantom")
    rows = run_phantom(cfg);
  else if (cfg.scenario == "diverse")
    rows = run_diverse(cfg);
  else
    throw ConfigError("unknown scenario '" + cfg.scenario + "' (expected phantom or diverse)");

  io::json table = io::json::array();
  std::ofstream csv(cfg.output + ".csv");
  if (!csv)
    throw ConfigError("cannot write " + cfg.output + ".csv");
  csv << "scenario,tier,amplitude,method,amari,cosine,runtime_s\n";
  auto opt = [](const std::optional<double> &v) {
    return v ? io::json(*v) : io::json(nullptr);
  };
  for (const auto &r : rows) {
    table.push_back({{"scenario", r.scenario},
                     {"tier", r.tier},
                     {"amplitude", r.amplitude},
                     {"method", r.method},
                     {"amari", opt(r.amari)},
                     {"cosine", opt(r.cosine)},
                     {"runtime_s", r.runtime}});
    csv << r.scenario << ',' << r.tier << ',' << io::detail::format_double(r.amplitude) << ','
        << r.method << ',' << (r.amari ? io::detail::format_double(*r.amari) : "") << ','
        << (r.cosine ? io::detail::format_double(*r.cosine) : "") << ','
        << io::detail::format_double(r.runtime) << '\n';
  }
  io::json doc{{"seed", cfg.seed},
               {"amplitude_mapping",
                {{"note", "synthetic amplitude tiers standing in for 1000/200/20 nAm; "
                          "amplitude is the sinusoid peak in units of the mean sensor noise "
                          "standard deviation, not a physical dipole moment"},
                 {"high", phantom_amplitude("high")},
                 {"medium", phantom_amplitude("medium")},
                 {"low", phantom_amplitude("low")}}},
               {"results", std::move(table)}};
  io::write_json(cfg.output + ".json", doc);
}

} // namespace detail

/// Executes one command. Throws the library's exception types on failure.
inline void execute(const RunConfig &cfg) {
  const auto &cmd = cfg.command;
  if (cmd == "spectra") {
    require_output(cfg);
    const Recording rec = load_recording(cfg);
    io::write_json(cfg.output, io::to_json(estimate_spectral_covariances(rec, resolve_bands(cfg))));
  } else if (cmd == "fit") {
    require_output(cfg);
    const Recording rec = load_recording(cfg);
    const auto emp = estimate_spectral_covariances(rec, resolve_bands(cfg));
    FitOptions opts;
    opts.q = cfg.q;
    opts.tol = cfg.tol;
    opts.max_iter_warm = cfg.max_iter_warm;
    opts.max_iter_main = cfg.max_iter_main;
    opts.seed = cfg.seed;
    const FitResult result = fit(emp, opts);
    io::write_json(cfg.output + ".params.json", io::to_json(result.params));
    io::write_json(cfg.output + ".report.json", io::to_json(result.report));
  } else if (cmd == "separate" || cmd == "denoise") {
    require_output(cfg);
    if (cfg.params.empty())
      throw ConfigError("--params is required for " + cmd);
    const SmicaParams params = io::params_from_json(io::read_json(cfg.params));
    const Recording rec = load_recording(cfg);
    if (cmd == "separate") {
      SourceEstimate est;
      if (cfg.method == "wiener")
        est = wiener_sources(params, rec);
      else if (cfg.method == "pinv")
        est = pinv_sources(params, rec);
      else
        throw ConfigError("--method must be wiener or pinv, got '" + cfg.method + "'");
      io::write_csv(cfg.output, est.data, "s");
    } else {
      io::write_csv(cfg.output, denoise(params, rec, parse_index_list(cfg.exclude)).data);
    }
  } else if (cmd == "jdiag") {
    require_output(cfg);
    const Recording rec = load_recording(cfg);
    io::write_json(cfg.output,
                   io::to_json(jdiag_fit(estimate_spectral_covariances(rec, resolve_bands(cfg)))));
  } else if (cmd == "ssd") {
    require_output(cfg);
    const Recording rec = load_recording(cfg);
    const SpatialFilter filter = ssd(rec, cfg.freq, cfg.bandwidth);
    io::write_json(cfg.output + ".filter.json", io::to_json(filter));
    io::write_csv(cfg.output + ".sources.csv", apply_filter(filter, rec).transpose(), "ssd");
  } else if (cmd == "benchmark") {
    detail::benchmark(cfg);
  } else {
    throw ConfigError("unknown command '" + cmd + "'");
  }
}

/// Maps exceptions to exit codes and the one-line diagnostic.
inline int run(const RunConfig &cfg, std::ostream &err = std::cerr) {
  try {
    execute(cfg);
    return kExitOk;
  } catch (const ConfigError &e) {
    err << "error: config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError &e) {
    err << "error: data: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError &e) {
    err << "error: numerical: " << e.what() << '\n';
    return kExitNumerical;
  }
}

/// Builds the CLI11 parser writing into `cfg`.
inline void configure_app(CLI::App &app, RunConfig &cfg) {
  app.require_subcommand(1);
  auto common = [&](CLI::App *sub) {
    sub->add_option("--input,-i", cfg.input, "CSV recording (rows = samples)")->required();
    sub->add_option("--out,-o", cfg.output, "output path or prefix")->required();
    sub->add_option("--fs", cfg.fs, "sampling rate in Hz");
    sub->add_option("--sidecar", cfg.sidecar, "JSON file {\"fs\": <Hz>}");
  };
  auto banded = [&](CLI::App *sub) {
    sub->add_option("--bands", cfg.bands, "uniform bands lo:hi:count")->capture_default_str();
    sub->add_option("--bands-file", cfg.bands_file, "JSON list of [lo, hi] band edges");
    sub->add_option("--fmin", cfg.fmin, "drop band content below this frequency");
    sub->add_option("--fmax", cfg.fmax, "drop band content above this frequency");
  };
  auto em_opts = [&](CLI::App *sub) {
    sub->add_option("--tol", cfg.tol, "relative loss-decrease threshold")->capture_default_str();
    sub->add_option("--max-iter-warm", cfg.max_iter_warm)->capture_default_str();
    sub->add_option("--max-iter-main", cfg.max_iter_main)->capture_default_str();
    sub->add_option("--seed", cfg.seed)->capture_default_str();
  };

  auto *spectra = app.add_subcommand("spectra", "dump band spectral covariances as JSON");
  common(spectra);
  banded(spectra);

  auto *fit_cmd = app.add_subcommand("fit", "fit the model; writes <out>.params.json and <out>.report.json");
  common(fit_cmd);
  banded(fit_cmd);
  em_opts(fit_cmd);
  fit_cmd->add_option("--q", cfg.q, "number of sources")->required();

  auto *separate = app.add_subcommand("separate", "estimate sources; writes a CSV");
  common(separate);
  separate->add_option("--params", cfg.params, "params JSON from fit")->required();
  separate->add_option("--method", cfg.method, "wiener or pinv")->capture_default_str();

  auto *den = app.add_subcommand("denoise", "remove sources and project back; writes a CSV");
  common(den);
  den->add_option("--params", cfg.params, "params JSON from fit")->required();
  den->add_option("--exclude", cfg.exclude, "comma-separated source indices, or none")
      ->capture_default_str();

  auto *jd = app.add_subcommand("jdiag", "joint diagonalization; writes unmixing JSON");
  common(jd);
  banded(jd);

  auto *ssd_cmd = app.add_subcommand("ssd", "spatio-spectral decomposition; writes <out>.filter.json and <out>.sources.csv");
  common(ssd_cmd);
  ssd_cmd->add_option("--freq", cfg.freq, "target frequency in Hz")->required();
  ssd_cmd->add_option("--bandwidth", cfg.bandwidth, "narrow band width in Hz")->capture_default_str();

  auto *bench = app.add_subcommand("benchmark", "synthetic scenarios; writes <out>.json and <out>.csv");
  bench->add_option("--scenario", cfg.scenario, "phantom or diverse")->capture_default_str();
  bench->add_option("--tier", cfg.tier, "high, medium, low or all (phantom)")->capture_default_str();
  bench->add_option("--out,-o", cfg.output, "output prefix")->required();
  em_opts(bench);

  for (auto *sub : app.get_subcommands({}))
    sub->callback([&cfg, sub] { cfg.command = sub->get_name(); });
}

/// Parses argv and runs; returns the process exit code.
inline int main(int argc, char **argv) {
  CLI::App app{"Spectral matching ICA: noisy blind source separation"};
  RunConfig cfg;
  configure_app(app, cfg);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return kExitConfig;
  }
  return run(cfg);
}

} // namespace smica::cli
