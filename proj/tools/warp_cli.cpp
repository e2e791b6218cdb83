// Command-line front end: denoise, evidence, sample-trees, energy, synth, count-trees.
//
// Precedence: built-in defaults < --config JSON < explicit flags. Every command
// that writes a file also writes "<output>.config.json" with the resolved
// configuration. Exit codes: 0 ok, 2 input error, 3 numerical error, 4 SMC
// weight collapse, 1 anything else.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "warp/warp.hpp"

using namespace warp;
using json = nlohmann::ordered_json;

namespace {

struct RunConfig {
    std::string command;
    std::string input, output, reference, metrics, clean;
    std::string hyper = "auto";  // auto: evidence grid search, fixed: use the values below
    std::string slab = "quasi_cauchy";
    double alpha = HyperParams{}.alpha;
    double tau0 = HyperParams{}.tau0;
    double beta = HyperParams{}.beta;
    double C = HyperParams{}.C;
    double eta0 = HyperParams{}.eta0;
    std::string sigma = "auto";
    int spins = 0;  // 0: default shift set, k: offsets 0..k-1 in every dimension
    int tune_coarsen = 0;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0: all hardware threads
    std::string basis = "haar";
    std::size_t particles = 10;
    double ess_threshold = 0.1;
    std::string resampling = "multinomial";
    std::string weighting = "lookahead";
    std::size_t samples = 1;
    int pgm_bits = 8;
    std::string function = "phantom";
    std::size_t n = 64;
    double noise = 0.0;
    std::vector<std::size_t> dims;
};

struct Field {
    std::string key;
    std::vector<CLI::Option*> opts;
    std::set<const CLI::App*> subs;
    std::function<void(RunConfig&, const RunConfig&)> copy;
    std::function<void(RunConfig&, const nlohmann::json&)> load;
    std::function<void(const RunConfig&, json&)> save;
};

class Registry {
public:
    explicit Registry(RunConfig& cli) : cli_(cli) {}

    template <class T>
    void bind(T RunConfig::*member, const std::string& key, const std::string& desc,
              std::initializer_list<CLI::App*> subs) {
        Field f;
        f.key = key;
        std::string flag = "--" + key;
        for (char& c : flag)
            if (c == '_') c = '-';
        for (CLI::App* s : subs) {
            f.opts.push_back(s->add_option(flag, cli_.*member, desc));
            f.subs.insert(s);
        }
        f.copy = [member](RunConfig& dst, const RunConfig& src) { dst.*member = src.*member; };
        f.load = [member, key](RunConfig& dst, const nlohmann::json& j) {
            try {
                if constexpr (std::is_same_v<T, std::string>)
                    dst.*member = j.is_string() ? j.get<std::string>() : j.dump();
                else
                    dst.*member = j.get<T>();
            } catch (const nlohmann::json::exception&) {
                throw InputError("config key '" + key + "' has the wrong type");
            }
        };
        f.save = [member, key](const RunConfig& c, json& j) { j[key] = c.*member; };
        fields_.push_back(std::move(f));
    }

    // defaults < JSON file < explicit flags
    RunConfig resolve(const CLI::App* sub, const std::string& config_path) const {
        RunConfig out;
        if (!config_path.empty()) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(io::read_file(config_path));
            } catch (const nlohmann::json::exception& e) {
                throw InputError("config " + config_path + ": " + e.what());
            }
            if (!j.is_object()) throw InputError("config " + config_path + ": expected a JSON object");
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (it.key() == "command") continue;
                const Field* f = find(it.key());
                if (!f) throw InputError("config " + config_path + ": unknown key '" + it.key() + "'");
                f->load(out, it.value());
            }
        }
        for (const Field& f : fields_)
            for (const CLI::Option* o : f.opts)
                if (o->count() > 0 && f.subs.count(sub)) f.copy(out, cli_);
        out.command = sub->get_name();
        if (out.threads == 0) out.threads = default_threads();
        return out;
    }

    json manifest(const RunConfig& c, const CLI::App* sub) const {
        json j;
        j["command"] = c.command;
        for (const Field& f : fields_)
            if (f.subs.count(sub)) f.save(c, j);
        return j;
    }

private:
    const Field* find(const std::string& key) const {
        for (const Field& f : fields_)
            if (f.key == key) return &f;
        return nullptr;
    }

    RunConfig& cli_;
    std::vector<Field> fields_;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

json hyper_json(const HyperParams& h) {
    json j;
    j["slab"] = to_string(h.slab);
    j["alpha"] = h.alpha;
    j["tau0"] = h.tau0;
    j["beta"] = h.beta;
    j["C"] = h.C;
    j["eta0"] = h.eta0;
    j["sigma"] = h.sigma;
    return j;
}

void require_output(const RunConfig& c) {
    if (c.output.empty()) throw InputError(c.command + ": --output is required");
}

unsigned thread_count(const RunConfig& c) { return std::max(1u, c.threads); }

HyperParams base_hyper(const RunConfig& c) {
    HyperParams h;
    h.slab = slab_from_string(c.slab);
    h.alpha = c.alpha;
    h.tau0 = c.tau0;
    h.beta = c.beta;
    h.C = c.C;
    h.eta0 = c.eta0;
    return h;
}

double resolve_sigma(const RunConfig& c, const Observation& obs, bool& estimated) {
    estimated = c.sigma == "auto";
    if (estimated) return estimate_sigma(obs);
    double s = 0.0;
    try {
        std::size_t used = 0;
        s = std::stod(c.sigma, &used);
        if (used != c.sigma.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw InputError("sigma must be 'auto' or a number, got '" + c.sigma + "'");
    }
    if (!(s > 0.0) || !std::isfinite(s)) throw InputError("sigma must be positive");
    return s;
}

struct Tuned {
    HyperParams hyper;
    GridSearchResult search;
    bool sigma_estimated = false;
};

// Sigma policy followed by the evidence grid search (or the fixed values).
Tuned tune(const RunConfig& c, const Observation& obs, bool without_pruning) {
    if (c.hyper != "auto" && c.hyper != "fixed") throw InputError("hyper must be 'auto' or 'fixed'");
    if (c.tune_coarsen < 0) throw InputError("tune_coarsen must be non-negative");
    Tuned t;
    HyperParams base = base_hyper(c);
    base.sigma = resolve_sigma(c, obs, t.sigma_estimated);
    std::vector<HyperParams> cands;
    if (c.hyper == "fixed") {
        if (without_pruning) base.eta0 = 0.0;
        base.validate();
        cands.push_back(base);
    } else {
        for (const auto& h : default_candidate_grid(base))
            if (!without_pruning || h.eta0 == 0.0) cands.push_back(h);
    }
    t.search = grid_search_mmle(NodeMoments(haar_coarsen(obs, c.tune_coarsen)), std::move(cands), thread_count(c));
    t.hyper = t.search.best_params();
    return t;
}

std::vector<std::vector<long>> shift_set(const RunConfig& c, const Grid& g) {
    if (c.spins < 0) throw InputError("spins must be non-negative");
    if (c.spins == 0) return default_shifts(g);
    const int m = g.dims();
    std::vector<long> top(m);
    for (int i = 0; i < m; ++i) top[i] = std::min<long>(c.spins, static_cast<long>(g.side(i)));
    std::vector<std::vector<long>> out;
    std::vector<long> cur(m, 0);
    while (true) {
        out.push_back(cur);
        int i = m - 1;
        for (; i >= 0; --i) {
            if (++cur[i] < top[i]) break;
            cur[i] = 0;
        }
        if (i < 0) break;
    }
    return out;
}

SmcOptions smc_options(const RunConfig& c) {
    SmcOptions o;
    o.particles = c.particles;
    o.ess_threshold = c.ess_threshold;
    o.seed = c.seed;
    if (c.resampling == "multinomial") o.resampling = Resampling::Multinomial;
    else if (c.resampling == "systematic") o.resampling = Resampling::Systematic;
    else throw InputError("resampling must be 'multinomial' or 'systematic'");
    if (c.weighting == "lookahead") o.weighting = SmcWeighting::Lookahead;
    else if (c.weighting == "literal") o.weighting = SmcWeighting::Literal;
    else throw InputError("weighting must be 'lookahead' or 'literal'");
    return o;
}

Observation read_input(const RunConfig& c) {
    if (c.input.empty()) throw InputError(c.command + ": --input is required");
    return io::read_image(c.input);
}

json selection_json(const Tuned& t) {
    json j = hyper_json(t.hyper);
    j["sigma_estimated"] = t.sigma_estimated;
    j["candidates"] = t.search.candidates.size();
    return j;
}

void write_manifest(const Registry& reg, const RunConfig& c, const CLI::App* sub, const json* extra = nullptr) {
    json j = reg.manifest(c, sub);
    if (extra) j["resolved"] = *extra;
    io::atomic_write_text(c.output + ".config.json", j.dump(2) + "\n");
}

int cmd_denoise(const RunConfig& c, const Registry& reg, const CLI::App* sub) {
    require_output(c);
    const auto t0 = Clock::now();
    Observation obs = read_input(c);
    const bool smc = c.basis != "haar";
    const WaveletFilter filter = WaveletFilter::by_name(c.basis);
    const SmcOptions sopt = smc_options(c);
    Tuned t = tune(c, obs, smc);
    const double tuning_time = seconds_since(t0);

    const auto t1 = Clock::now();
    const auto shifts = shift_set(c, obs.grid);
    std::vector<double> est = smc ? smc_denoise(obs, t.hyper, filter, sopt, shifts, thread_count(c))
                                  : cycle_spin_denoise(obs, t.hyper, shifts, thread_count(c));
    const double estimation_time = seconds_since(t1);

    io::write_image(c.output, obs.grid, est, c.pgm_bits);

    json m;
    m["command"] = "denoise";
    m["logEvidence"] = op_log_evidence(NodeMoments(obs), t.hyper);
    if (c.tune_coarsen > 0) m["logEvidence_tuning"] = t.search.log_evidence[t.search.best];
    m["sigma_hat"] = t.hyper.sigma;
    m["sigma_estimated"] = t.sigma_estimated;
    m["hyperparams"] = hyper_json(t.hyper);
    m["candidates"] = t.search.candidates.size();
    m["basis"] = c.basis;
    m["shifts"] = shifts.size();
    m["dims"] = obs.grid.sides();
    m["wall_time"] = {{"tuning", tuning_time}, {"estimation", estimation_time}, {"total", seconds_since(t0)}};
    if (!c.reference.empty()) {
        Observation ref = io::read_image(c.reference);
        if (ref.grid != obs.grid) throw InputError("reference image has different dimensions");
        const double mse = synth::mse(est, ref.values);
        // [0,1] intensities; the 255-scaled PSNR is the same number
        m["mse"] = mse;
        m["mae"] = synth::mae(est, ref.values);
        m["mse_255"] = mse * 255.0 * 255.0;
        m["psnr"] = mse > 0 ? -10.0 * std::log10(mse) : std::numeric_limits<double>::infinity();
        m["psnr_255"] = mse > 0 ? 10.0 * std::log10(255.0 * 255.0 / (mse * 255.0 * 255.0))
                                : std::numeric_limits<double>::infinity();
    }
    const std::string metrics = c.metrics.empty() ? c.output + ".metrics.json" : c.metrics;
    io::atomic_write_text(metrics, m.dump(2) + "\n");
    json sel = selection_json(t);
    write_manifest(reg, c, sub, &sel);
    return 0;
}

int cmd_evidence(const RunConfig& c, const Registry& reg, const CLI::App* sub) {
    require_output(c);
    Observation obs = read_input(c);
    Tuned t = tune(c, obs, false);
    io::atomic_write(c.output, [&](std::ostream& os) { write_evidence_csv(os, t.search); });
    json sel = selection_json(t);
    write_manifest(reg, c, sub, &sel);
    return 0;
}

int cmd_sample_trees(const RunConfig& c, const Registry& reg, const CLI::App* sub) {
    require_output(c);
    Observation obs = read_input(c);
    Tuned t = tune(c, obs, false);
    std::vector<RdpTree> trees;
    if (c.samples > 0) trees = sample_posterior_trees(run_op(NodeMoments(obs), t.hyper), c.samples, c.seed);
    io::atomic_write(c.output, [&](std::ostream& os) {
        const double w = trees.empty() ? 0.0 : 1.0 / static_cast<double>(trees.size());
        for (std::size_t i = 0; i < trees.size(); ++i) {
            json line;
            line["index"] = i;
            line["weight"] = w;
            line["tree"] = tree_to_json(trees[i]);
            os << line.dump() << '\n';
        }
    });
    json sel = selection_json(t);
    write_manifest(reg, c, sub, &sel);
    return 0;
}

int cmd_energy(const RunConfig& c, const Registry& reg, const CLI::App* sub) {
    require_output(c);
    Observation obs = read_input(c);
    Tuned t = tune(c, obs, false);
    auto fr = default_energy_fractions();
    EnergyReport r = energy_report(obs, t.hyper, c.seed, fr);
    io::atomic_write(c.output, [&](std::ostream& os) { write_energy_csv(os, r); });
    json sel = selection_json(t);
    write_manifest(reg, c, sub, &sel);
    return 0;
}

int cmd_synth(const RunConfig& c, const Registry& reg, const CLI::App* sub) {
    require_output(c);
    if (!(c.noise >= 0.0)) throw InputError("noise must be non-negative");
    std::vector<std::size_t> sides;
    std::vector<double> v;
    if (c.function == "f1" || c.function == "f2") {
        sides = {c.n, c.n, c.n};
        Grid::from_sides(sides);
        v = synth::volume(c.n, c.function == "f1" ? synth::f1 : synth::f2);
    } else {
        sides = {c.n, c.n};
        Grid::from_sides(sides);
        if (c.function == "phantom") v = synth::phantom(c.n);
        else if (c.function == "layered") v = synth::layered(c.n, c.n);
        else if (c.function == "step") v = synth::step(c.n, c.n, c.n / 2);
        else throw InputError("unknown function '" + c.function + "' (f1, f2, phantom, layered, step)");
    }
    Grid g = Grid::from_sides(sides);
    auto noisy = synth::add_noise(v, c.noise, c.seed);
    if (io::format_of(c.output) == io::Format::Pgm &&
        std::any_of(noisy.begin(), noisy.end(), [](double x) { return x < 0.0 || x > 1.0; }))
        std::cerr << "warning: PGM output clamps values to [0, 1]; use .raw to keep the noise Gaussian\n";
    if (!c.clean.empty()) io::write_image(c.clean, g, v, c.pgm_bits);
    io::write_image(c.output, g, noisy, c.pgm_bits);
    write_manifest(reg, c, sub);
    return 0;
}

int cmd_count_trees(const RunConfig& c, const Registry& reg, const CLI::App* sub) {
    Grid g;
    if (!c.dims.empty()) g = Grid::from_sides(c.dims);
    else if (!c.input.empty()) g = io::read_image(c.input).grid;
    else throw InputError("count-trees: give --dims or --input");
    std::ostringstream s;
    s << count_rdp_trees(g) << '\n';
    if (c.output.empty()) {
        std::cout << s.str();
    } else {
        io::atomic_write_text(c.output, s.str());
        write_manifest(reg, c, sub);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian wavelet regression on adaptive dyadic partitions"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file with option values (explicit flags win)");

    auto* den = app.add_subcommand("denoise", "posterior-mean reconstruction with empirical-Bayes tuning");
    auto* evi = app.add_subcommand("evidence", "log-evidence table over the hyperparameter grid");
    auto* smp = app.add_subcommand("sample-trees", "exact posterior partition draws as JSON lines");
    auto* ene = app.add_subcommand("energy", "energy concentration curves against fixed Haar bases");
    auto* syn = app.add_subcommand("synth", "synthetic test images and volumes");
    auto* cnt = app.add_subcommand("count-trees", "number of dyadic partitions of a grid");
    for (auto* s : {den, evi, smp, ene, syn, cnt}) s->add_option("--config", config_path, "JSON config file");

    RunConfig cli;
    Registry reg(cli);
    const auto data = {den, evi, smp, ene};
    reg.bind(&RunConfig::input, "input", "input image (.pgm, .raw/.f32 with .json sidecar, .csv)", {den, evi, smp, ene, cnt});
    reg.bind(&RunConfig::output, "output", "output path", {den, evi, smp, ene, syn, cnt});
    reg.bind(&RunConfig::reference, "reference", "noiseless image for MSE/MAE/PSNR", {den});
    reg.bind(&RunConfig::metrics, "metrics", "metrics JSON path (default <output>.metrics.json)", {den});
    reg.bind(&RunConfig::hyper, "hyper", "auto (evidence grid search) or fixed", data);
    reg.bind(&RunConfig::slab, "slab", "normal, laplace or quasi_cauchy", data);
    reg.bind(&RunConfig::alpha, "alpha", "slab scale decay", data);
    reg.bind(&RunConfig::tau0, "tau0", "slab scale at the root", data);
    reg.bind(&RunConfig::beta, "beta", "slab probability decay", data);
    reg.bind(&RunConfig::C, "C", "slab probability at the root", data);
    reg.bind(&RunConfig::eta0, "eta0", "pruning probability", data);
    reg.bind(&RunConfig::sigma, "sigma", "noise level or auto", data);
    reg.bind(&RunConfig::tune_coarsen, "tune_coarsen", "run the grid search on a copy coarsened this many times", data);
    reg.bind(&RunConfig::threads, "threads", "worker threads (0 = all)", data);
    reg.bind(&RunConfig::spins, "spins", "0: default shift set, k: offsets 0..k-1 per dimension", {den});
    reg.bind(&RunConfig::basis, "basis", "haar, d4 or a filter file", {den});
    reg.bind(&RunConfig::particles, "particles", "SMC particles per shift", {den});
    reg.bind(&RunConfig::ess_threshold, "ess_threshold", "resample when ESS falls below this fraction", {den});
    reg.bind(&RunConfig::resampling, "resampling", "multinomial or systematic", {den});
    reg.bind(&RunConfig::weighting, "weighting", "lookahead or literal", {den});
    reg.bind(&RunConfig::seed, "seed", "random seed", {den, smp, ene, syn});
    reg.bind(&RunConfig::samples, "samples", "number of tree draws", {smp});
    reg.bind(&RunConfig::pgm_bits, "pgm_bits", "8 or 16 for PGM output", {den, syn});
    reg.bind(&RunConfig::function, "function", "f1, f2, phantom, layered or step", {syn});
    reg.bind(&RunConfig::n, "n", "side length", {syn});
    reg.bind(&RunConfig::noise, "noise", "Gaussian noise level added to the output", {syn});
    reg.bind(&RunConfig::clean, "clean", "also write the noiseless image here", {syn});
    reg.bind(&RunConfig::dims, "dims", "grid side lengths", {cnt});

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const CLI::App* sub = app.get_subcommands().front();
    try {
        RunConfig c = reg.resolve(sub, config_path);
        if (sub == den) return cmd_denoise(c, reg, sub);
        if (sub == evi) return cmd_evidence(c, reg, sub);
        if (sub == smp) return cmd_sample_trees(c, reg, sub);
        if (sub == ene) return cmd_energy(c, reg, sub);
        if (sub == syn) return cmd_synth(c, reg, sub);
        return cmd_count_trees(c, reg, sub);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const WeightCollapse& e) {
        std::cerr << "weight collapse: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
