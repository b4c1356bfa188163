#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "lysep/solver.hpp"

namespace lysep {

enum class ModelChoice { Pinn, Lysep, Both };

struct ExperimentConfig {
    std::string problem = "elliptic2d";
    ModelChoice model = ModelChoice::Both;
    int width = 50;
    int n_train = 1000;
    int n_test = 350;
    int iters = 2000;
    double lr = 1e-3;
    double lr_decay = 0.9995;
    std::optional<double> pinn_lr;
    std::optional<double> pinn_lr_decay;
    std::vector<std::uint64_t> seeds = {1};
    int log_every = 10;
    std::string output_dir = "results";
    GradientConvention gradient_convention = GradientConvention::Full;
    StepRule step_rule = StepRule::Backtracking;
    double ridge_floor = 1e-12;
    int workers = 1;

    double pinn_rate() const { return pinn_lr.value_or(lr); }
    double pinn_decay() const { return pinn_lr_decay.value_or(lr_decay); }

    void validate() const {
        manufactured_problem(problem);  // throws on an unknown name
        auto positive = [](long v, const char* key) {
            if (v < 1) throw std::invalid_argument(std::string("config: ") + key + " must be >= 1");
        };
        positive(width, "width");
        positive(n_train, "n_train");
        positive(n_test, "n_test");
        positive(iters, "iters");
        positive(log_every, "log_every");
        positive(workers, "workers");
        if (seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
        auto rate = [](double v, const char* key) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument(std::string("config: ") + key + " must be > 0");
        };
        auto decay = [](double v, const char* key) {
            if (!(v > 0.0 && v <= 1.0))
                throw std::invalid_argument(std::string("config: ") + key + " must be in (0,1]");
        };
        rate(lr, "lr");
        decay(lr_decay, "lr_decay");
        rate(pinn_rate(), "pinn_lr");
        decay(pinn_decay(), "pinn_lr_decay");
        if (!(ridge_floor >= 0.0)) throw std::invalid_argument("config: ridge_floor must be >= 0");
        if (output_dir.empty()) throw std::invalid_argument("config: output_dir must not be empty");
    }
};

inline const char* to_string(ModelChoice m) {
    switch (m) {
        case ModelChoice::Pinn: return "pinn";
        case ModelChoice::Lysep: return "lysep";
        case ModelChoice::Both: return "both";
    }
    return "?";
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != v.size() || v.empty()) throw std::invalid_argument("config: " + key + ": not a number: " + v);
    return x;
}

inline long long parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != v.size() || v.empty()) throw std::invalid_argument("config: " + key + ": not an integer: " + v);
    return x;
}

inline int parse_count(const std::string& key, const std::string& v) {
    const long long x = parse_int(key, v);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw std::invalid_argument("config: " + key + ": out of range: " + v);
    return static_cast<int>(x);
}

}  // namespace detail

/// Parses flat `key = value` text. `#` starts a comment; unknown or repeated
/// keys are errors. The result is validated.
inline ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig cfg;
    std::map<std::string, bool> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (seen[key]) throw std::invalid_argument("config: duplicate key " + key);
        seen[key] = true;
        if (key == "problem") {
            cfg.problem = val;
        } else if (key == "model") {
            if (val == "pinn") cfg.model = ModelChoice::Pinn;
            else if (val == "lysep") cfg.model = ModelChoice::Lysep;
            else if (val == "both") cfg.model = ModelChoice::Both;
            else throw std::invalid_argument("config: model must be pinn, lysep or both");
        } else if (key == "width") {
            cfg.width = detail::parse_count(key, val);
        } else if (key == "n_train") {
            cfg.n_train = detail::parse_count(key, val);
        } else if (key == "n_test") {
            cfg.n_test = detail::parse_count(key, val);
        } else if (key == "iters") {
            cfg.iters = detail::parse_count(key, val);
        } else if (key == "lr") {
            cfg.lr = detail::parse_real(key, val);
        } else if (key == "lr_decay") {
            cfg.lr_decay = detail::parse_real(key, val);
        } else if (key == "pinn_lr") {
            cfg.pinn_lr = detail::parse_real(key, val);
        } else if (key == "pinn_lr_decay") {
            cfg.pinn_lr_decay = detail::parse_real(key, val);
        } else if (key == "seeds") {
            cfg.seeds.clear();
            std::stringstream ss(val);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                const long long s = detail::parse_int(key, detail::trim(tok));
                if (s < 0) throw std::invalid_argument("config: seeds must be nonnegative");
                cfg.seeds.push_back(static_cast<std::uint64_t>(s));
            }
        } else if (key == "log_every") {
            cfg.log_every = detail::parse_count(key, val);
        } else if (key == "output_dir") {
            cfg.output_dir = val;
        } else if (key == "gradient_convention") {
            if (val == "full") cfg.gradient_convention = GradientConvention::Full;
            else if (val == "frozen") cfg.gradient_convention = GradientConvention::Frozen;
            else throw std::invalid_argument("config: gradient_convention must be full or frozen");
        } else if (key == "step_rule") {
            if (val == "backtracking") cfg.step_rule = StepRule::Backtracking;
            else if (val == "fixed") cfg.step_rule = StepRule::Fixed;
            else throw std::invalid_argument("config: step_rule must be backtracking or fixed");
        } else if (key == "ridge_floor") {
            cfg.ridge_floor = detail::parse_real(key, val);
        } else if (key == "workers") {
            cfg.workers = detail::parse_count(key, val);
        } else {
            throw std::invalid_argument("config: unknown key " + key);
        }
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    return parse_config(in);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Entries i.i.d. U(-M^{-1/2}, M^{-1/2}) from a counter-based generator:
/// draw k is splitmix64(splitmix64(seed) + k). Filled in the order W1
/// (row-major), b1, W2 (row-major), b2, W3, b3.
inline NetworkParams init_params(int M, int d_in, std::uint64_t seed) {
    if (M < 1 || d_in < 1) throw std::invalid_argument("init_params: need M >= 1 and d_in >= 1");
    const double s = 1.0 / std::sqrt(static_cast<double>(M));
    const std::uint64_t key = detail::splitmix64(seed);
    std::uint64_t counter = 0;
    auto draw = [&]() {
        const std::uint64_t z = detail::splitmix64(key + counter++);
        // (2k+1)/2^53 - 1 lies strictly inside (-1, 1) and is exact.
        const double v = static_cast<double>(2 * (z >> 11) + 1) * 0x1.0p-53 - 1.0;
        double x = s * v;
        if (std::abs(x) >= s) x = std::nextafter(x, 0.0);
        return x;
    };
    NetworkParams p(M, d_in);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < d_in; ++j) p.W1(i, j) = draw();
    for (int i = 0; i < M; ++i) p.b1(i) = draw();
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) p.W2(i, j) = draw();
    for (int i = 0; i < M; ++i) p.b2(i) = draw();
    for (int i = 0; i < M; ++i) p.W3(i) = draw();
    p.b3 = draw();
    return p;
}

/// True solution on the columns of a dataset.
inline RowVector truth_values(const PdeProblem& prob, const Dataset& ds) {
    if (!prob.true_solution) throw std::invalid_argument("problem has no true solution");
    RowVector u(ds.size());
    const bool td = is_time_dependent(prob.kind);
    for (Eigen::Index n = 0; n < ds.size(); ++n) {
        const double t = td ? ds.X(0, n) : 0.0;
        const Vector x = td ? Vector(ds.X.col(n).tail(prob.dim)) : Vector(ds.X.col(n));
        u(n) = (*prob.true_solution)(t, x);
    }
    return u;
}

/// Training batch and disjoint test set drawn from one Halton stream.
struct ProblemData {
    Dataset train;
    TestSet test;
};

inline ProblemData make_problem_data(const PdeProblem& prob, int n_train, int n_test) {
    auto draw = [&](int count, std::uint64_t skip) {
        return is_time_dependent(prob.kind) ? halton_draw(prob.dim, count, skip, prob.horizon)
                                            : halton_draw(prob.dim, count, skip);
    };
    const HaltonDraw tr = draw(n_train, 0);
    const HaltonDraw te = draw(n_test, tr.next_skip);
    ProblemData out;
    out.train = make_dataset(prob, tr.points);
    out.test.data = make_dataset(prob, te.points);
    out.test.truth = truth_values(prob, out.test.data);
    return out;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline constexpr const char* kTrajectoryHeader = "iter,loss_sep,loss_orig,bound,bound_ok,test_error";
inline constexpr const char* kSummaryHeader = "model,width,actual_loss,J,error,n_ok,n_failed";

inline std::string run_file_name(const std::string& problem, const std::string& model, int width,
                                 std::uint64_t seed) {
    return problem + "_" + model + "_M" + std::to_string(width) + "_seed" + std::to_string(seed) + ".csv";
}

/// One trajectory line. PINN rows leave loss_sep, bound and bound_ok empty.
inline std::string trajectory_line(int iter, std::optional<double> loss_sep, double loss_orig,
                                   std::optional<double> bound, std::optional<bool> bound_ok,
                                   std::optional<double> test_error) {
    std::string s = std::to_string(iter) + ",";
    if (loss_sep) s += format_real(*loss_sep);
    s += "," + format_real(loss_orig) + ",";
    if (bound) s += format_real(*bound);
    s += ",";
    if (bound_ok) s += *bound_ok ? "true" : "false";
    s += ",";
    if (test_error) s += format_real(*test_error);
    return s;
}

/// Final values of one run.
struct RunOutcome {
    std::string model;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string message;
    double actual_loss = 0.0;  // J_S for LySep, J for PINN
    double J = 0.0;
    double error = 0.0;
    bool bound_ok_everywhere = true;
    std::string path;
};

inline RunOutcome run_pinn_seed(const ExperimentConfig& cfg, const PdeProblem& prob, const ProblemData& data,
                                std::uint64_t seed) {
    const ActivationBundle act = make_sin_activation();
    const NetworkParams p0 = init_params(cfg.width, prob.input_dim(), seed);
    RunOutcome out;
    out.model = "pinn";
    out.seed = seed;
    out.path = (std::filesystem::path(cfg.output_dir) / run_file_name(cfg.problem, "pinn", cfg.width, seed)).string();
    std::ofstream f(out.path);
    if (!f) throw std::runtime_error("cannot write " + out.path);
    f << kTrajectoryHeader << '\n';
    std::optional<double> last_err;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto observer = [&](int k, const NetworkParams& p, double J) {
        const bool ok = std::isfinite(J) && J <= kDivergenceThreshold;
        if (ok && k % cfg.log_every != 0 && k != cfg.iters) return;
        std::optional<double> err;
        if (ok) err = test_error(prob, p, act, data.test);
        f << trajectory_line(k, std::nullopt, ok ? J : nan, std::nullopt, std::nullopt, err) << '\n';
        f.flush();
        last_err = err;
    };
    const PinnTrainResult r =
        train_pinn_gd(prob, p0, act, data.train, cfg.iters, {cfg.pinn_rate(), cfg.pinn_decay()}, observer);
    out.J = out.actual_loss = r.diverged ? nan : r.losses.back();
    out.error = last_err.value_or(std::numeric_limits<double>::quiet_NaN());
    out.failed = r.diverged;
    out.message = r.message;
    return out;
}

inline RunOutcome run_lysep_seed(const ExperimentConfig& cfg, const PdeProblem& prob,
                                 const ProblemData& data, std::uint64_t seed) {
    const ActivationBundle act = make_sin_activation();
    const NetworkParams p0 = init_params(cfg.width, prob.input_dim(), seed);
    RunOutcome out;
    out.model = "lysep";
    out.seed = seed;
    out.path = (std::filesystem::path(cfg.output_dir) / run_file_name(cfg.problem, "lysep", cfg.width, seed)).string();
    std::ofstream f(out.path);
    if (!f) throw std::runtime_error("cannot write " + out.path);
    f << kTrajectoryHeader << '\n';
    SolverConfig sc;
    sc.iters = cfg.iters;
    sc.lr = cfg.lr;
    sc.lr_decay = cfg.lr_decay;
    sc.ridge_floor = cfg.ridge_floor;
    sc.log_every = cfg.log_every;
    sc.convention = cfg.gradient_convention;
    sc.step_rule = cfg.step_rule;
    LysepHooks hooks;
    hooks.on_row = [&](const TrajectoryRow& row) {
        const bool finite = std::isfinite(row.loss_sep);
        f << trajectory_line(row.iter, row.loss_sep, row.loss_orig,
                             finite ? std::optional<double>(row.bound) : std::nullopt,
                             finite ? std::optional<bool>(row.bound_ok) : std::nullopt, row.test_error)
          << '\n';
        f.flush();
        if (finite && !row.bound_ok) out.bound_ok_everywhere = false;
    };
    const LysepResult r = run_lysep(prob, p0, act, data.train, sc, data.test, hooks);
    const TrajectoryRow& last = r.trajectory.back();
    out.actual_loss = last.loss_sep;
    out.J = last.loss_orig;
    out.error = last.test_error.value_or(std::numeric_limits<double>::quiet_NaN());
    out.failed = r.diverged;
    out.message = r.message;
    return out;
}

// ---------------------------------------------------------------------------
// Summary

struct SummaryRow {
    std::string model;
    int width = 0;
    std::vector<double> actual_loss, J, error;  // successful runs only
    int n_failed = 0;
};

namespace detail {

/// "mean+-std" with the sample standard deviation (0 for a single value).
inline std::string mean_std(const std::vector<double>& v) {
    if (v.empty()) return "";
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6e+-%.6e", mean, sd);
    return buf;
}

}  // namespace detail

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string s = std::string(kSummaryHeader) + "\n";
    for (const SummaryRow& r : rows) {
        s += r.model + "," + std::to_string(r.width) + "," + detail::mean_std(r.actual_loss) + "," +
             detail::mean_std(r.J) + "," + detail::mean_std(r.error) + "," + std::to_string(r.J.size()) + "," +
             std::to_string(r.n_failed) + "\n";
    }
    return s;
}

/// Groups outcomes by model in the order pinn, lysep. Failed runs are counted
/// and excluded from the statistics.
inline std::vector<SummaryRow> summarize(const std::vector<RunOutcome>& runs, int width) {
    std::vector<SummaryRow> rows;
    for (const char* model : {"pinn", "lysep"}) {
        SummaryRow row;
        row.model = model;
        row.width = width;
        bool any = false;
        for (const RunOutcome& r : runs) {
            if (r.model != model) continue;
            any = true;
            if (r.failed || !std::isfinite(r.J) || !std::isfinite(r.error)) {
                ++row.n_failed;
                continue;
            }
            row.actual_loss.push_back(r.actual_loss);
            row.J.push_back(r.J);
            row.error.push_back(r.error);
        }
        if (any) rows.push_back(std::move(row));
    }
    return rows;
}

struct ExperimentResult {
    std::vector<RunOutcome> runs;  // seed-major, pinn before lysep
    std::string summary_path;
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

inline std::string describe_config(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "problem = " << c.problem << "\nmodel = " << to_string(c.model) << "\nwidth = " << c.width
      << "\nn_train = " << c.n_train << "\nn_test = " << c.n_test << "\niters = " << c.iters
      << "\nlr = " << format_real(c.lr) << "\nlr_decay = " << format_real(c.lr_decay)
      << "\npinn_lr = " << format_real(c.pinn_rate()) << "\npinn_lr_decay = " << format_real(c.pinn_decay())
      << "\nseeds = ";
    for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? "," : "") << c.seeds[i];
    o << "\nlog_every = " << c.log_every << "\noutput_dir = " << c.output_dir
      << "\ngradient_convention = " << (c.gradient_convention == GradientConvention::Full ? "full" : "frozen")
      << "\nstep_rule = " << (c.step_rule == StepRule::Backtracking ? "backtracking" : "fixed")
      << "\nridge_floor = " << format_real(c.ridge_floor) << "\nworkers = " << c.workers << "\n";
    return o.str();
}

/// Runs every requested (seed, model) pair on up to `workers` threads, writes
/// one trajectory CSV per run, the resolved config and summary.csv.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const PdeProblem prob = manufactured_problem(cfg.problem);
    const ProblemData data = make_problem_data(prob, cfg.n_train, cfg.n_test);
    std::filesystem::create_directories(cfg.output_dir);
    write_text((std::filesystem::path(cfg.output_dir) / "run_config.txt").string(), describe_config(cfg));

    struct Task {
        std::uint64_t seed;
        bool lysep;
    };
    std::vector<Task> tasks;
    for (std::uint64_t s : cfg.seeds) {
        if (cfg.model != ModelChoice::Lysep) tasks.push_back({s, false});
        if (cfg.model != ModelChoice::Pinn) tasks.push_back({s, true});
    }
    ExperimentResult res;
    res.runs.resize(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::string first_error;
    auto worker = [&]() {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            try {
                res.runs[i] = tasks[i].lysep ? run_lysep_seed(cfg, prob, data, tasks[i].seed)
                                             : run_pinn_seed(cfg, prob, data, tasks[i].seed);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (first_error.empty()) first_error = e.what();
            }
        }
    };
    const int n_threads = std::min<int>(cfg.workers, static_cast<int>(tasks.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (!first_error.empty()) throw std::runtime_error(first_error);

    res.summary_path = (std::filesystem::path(cfg.output_dir) / "summary.csv").string();
    write_text(res.summary_path, summary_csv(summarize(res.runs, cfg.width)));
    return res;
}

// ---------------------------------------------------------------------------
// Report

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline double csv_real(const std::string& s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::strtod(s.c_str(), nullptr);
}

}  // namespace detail

/// Final values of a trajectory file.
inline RunOutcome read_trajectory(const std::string& path, const std::string& model) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(f, line) || detail::trim(line) != kTrajectoryHeader)
        throw std::runtime_error(path + ": unexpected header");
    std::vector<std::string> last;
    RunOutcome out;
    out.model = model;
    out.path = path;
    while (std::getline(f, line)) {
        if (detail::trim(line).empty()) continue;
        last = detail::split_csv(line);
        if (last.size() != 6) throw std::runtime_error(path + ": malformed row");
        if (last[4] == "false") out.bound_ok_everywhere = false;
    }
    if (last.empty()) throw std::runtime_error(path + ": no rows");
    out.J = detail::csv_real(last[2]);
    out.actual_loss = model == "lysep" ? detail::csv_real(last[1]) : out.J;
    out.error = detail::csv_real(last[5]);
    // Same rule as the trainers: non-finite, or the tracked loss above the guard.
    out.failed = !std::isfinite(out.J) || !std::isfinite(out.actual_loss) || out.actual_loss > kDivergenceThreshold;
    return out;
}

/// Rebuilds summary.csv from the trajectory files in `dir`. Files are grouped
/// by problem and width; each group must share one problem. Returns the text
/// written.
inline std::string rebuild_summary(const std::string& dir) {
    namespace fs = std::filesystem;
    struct Key {
        std::string problem, model;
        int width;
        std::uint64_t seed;
    };
    std::vector<std::pair<Key, std::string>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() < 4 || name.substr(name.size() - 4) != ".csv" || name == "summary.csv") continue;
        const std::string stem = name.substr(0, name.size() - 4);
        const auto ps = stem.rfind("_seed");
        const auto pm = stem.rfind("_M", ps);
        if (ps == std::string::npos || pm == std::string::npos) continue;
        const auto pmodel = stem.rfind('_', pm - 1);
        if (pmodel == std::string::npos) continue;
        Key k;
        k.problem = stem.substr(0, pmodel);
        k.model = stem.substr(pmodel + 1, pm - pmodel - 1);
        if (k.model != "pinn" && k.model != "lysep") continue;
        try {
            k.width = std::stoi(stem.substr(pm + 2, ps - pm - 2));
            k.seed = std::stoull(stem.substr(ps + 5));
        } catch (const std::exception&) {
            continue;
        }
        files.emplace_back(k, entry.path().string());
    }
    if (files.empty()) throw std::runtime_error("report: no trajectory files in " + dir);
    std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
        return std::tie(a.first.problem, a.first.width, a.first.seed, a.first.model) <
               std::tie(b.first.problem, b.first.width, b.first.seed, b.first.model);
    });
    std::string text = std::string(kSummaryHeader) + "\n";
    std::map<std::pair<std::string, int>, std::vector<RunOutcome>> groups;
    for (const auto& [k, path] : files) groups[{k.problem, k.width}].push_back(read_trajectory(path, k.model));
    if (groups.size() != 1) {
        // Several problems or widths: one block per group.
        text.clear();
        for (const auto& [g, runs] : groups)
            text += "# " + g.first + " M" + std::to_string(g.second) + "\n" + summary_csv(summarize(runs, g.second));
    } else {
        const auto& [g, runs] = *groups.begin();
        text = summary_csv(summarize(runs, g.second));
    }
    write_text((fs::path(dir) / "summary.csv").string(), text);
    return text;
}

}  // namespace lysep
