// Experiment runner and verification front-end: training with ranking or
// top-k supervision on desk-scale synthetic data (or four-digit MNIST),
// property suites, gradient checks, and network inspection.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sortnet/data.hpp"
#include "sortnet/diffsort.hpp"
#include "sortnet/model.hpp"
#include "sortnet/network.hpp"
#include "sortnet/optim.hpp"
#include "sortnet/rng.hpp"
#include "sortnet/sigmoid.hpp"
#include "sortnet/topk.hpp"

using namespace sortnet;
using nlohmann::json;

namespace {

struct RunConfig {
    std::string network = "odd_even";
    std::string sigmoid = "cauchy";
    double beta = 8.0;
    double art_lambda = 0.25;
    int n = 5;
    int d = 16;
    std::string hidden = "64,64";
    long steps = 20000;
    int batch = 64;
    std::uint64_t seed = 1;
    double lr = 1e-3;
    double lr_final = -1.0; // when >= 0, linear decay from lr to lr_final
    std::string optimizer = "adam";
    long eval_every = 500;
    int eval_tuples = 1000;
    int pool = 10000;
    std::string out = "run";
    std::string mnist_dir;
    bool wall_time = true;

    // newton-loss surrogate on the ranking loss
    std::string newton = "off"; // off | fisher
    double newton_damping = 1e-4;

    // resgro on negative Kendall tau
    bool resgro = false;
    int resgro_k = 64;
    int resgro_m = 64;
    double resgro_sigma = 0.1;
    std::string resgro_noise = "gaussian";

    // top-k task
    std::string pk = "0.5,0,0,0,0.5";
    int classes = 10;
    int topk_m = 10;
    bool topk_mixture = false;
    double topk_temperature = 1.0;

    SigmoidSpec sigmoid_spec() const {
        SigmoidSpec s;
        s.kind = sigmoid_kind_from_string(sigmoid);
        s.beta = beta;
        s.art_lambda = art_lambda;
        s.validate();
        return s;
    }
    NetworkKind network_kind() const { return network_kind_from_string(network); }
    std::vector<int> mlp_dims(int in, int out) const {
        std::vector<int> dims{in};
        std::stringstream ss(hidden);
        std::string item;
        while (std::getline(ss, item, ',')) dims.push_back(std::stoi(item));
        dims.push_back(out);
        return dims;
    }
    json echo() const {
        return json{{"network", network}, {"sigmoid", sigmoid}, {"beta", beta}, {"art_lambda", art_lambda},
                    {"n", n}, {"d", d}, {"hidden", hidden}, {"steps", steps}, {"batch", batch},
                    {"seed", seed}, {"lr", lr}, {"lr_final", lr_final}, {"optimizer", optimizer}, {"eval_every", eval_every},
                    {"eval_tuples", eval_tuples}, {"pool", pool}, {"out", out}, {"mnist_dir", mnist_dir},
                    {"newton", newton}, {"newton_damping", newton_damping}, {"resgro", resgro},
                    {"resgro_k", resgro_k}, {"resgro_m", resgro_m}, {"resgro_sigma", resgro_sigma},
                    {"resgro_noise", resgro_noise}, {"pk", pk}, {"classes", classes}, {"topk_m", topk_m},
                    {"topk_mixture", topk_mixture}, {"topk_temperature", topk_temperature}};
    }
};

// flat key=value config; unknown keys are rejected so typos do not pass
// silently. Loaded before flag parsing, so flags win.
void load_config_file(RunConfig& cfg, const std::string& path, std::set<std::string>* seen = nullptr) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    const auto strip = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = strip(line.substr(0, eq));
        const std::string val = strip(line.substr(eq + 1));
        if (seen) seen->insert(key);
        const auto truthy = [&] { return val == "on" || val == "true" || val == "1"; };
        if (key == "network") cfg.network = val;
        else if (key == "sigmoid") cfg.sigmoid = val;
        else if (key == "beta") cfg.beta = std::stod(val);
        else if (key == "art_lambda") cfg.art_lambda = std::stod(val);
        else if (key == "n") cfg.n = std::stoi(val);
        else if (key == "d") cfg.d = std::stoi(val);
        else if (key == "hidden") cfg.hidden = val;
        else if (key == "steps") cfg.steps = std::stol(val);
        else if (key == "batch") cfg.batch = std::stoi(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "lr") cfg.lr = std::stod(val);
        else if (key == "lr_final") cfg.lr_final = std::stod(val);
        else if (key == "optimizer") cfg.optimizer = val;
        else if (key == "eval_every") cfg.eval_every = std::stol(val);
        else if (key == "eval_tuples") cfg.eval_tuples = std::stoi(val);
        else if (key == "pool") cfg.pool = std::stoi(val);
        else if (key == "out") cfg.out = val;
        else if (key == "mnist_dir") cfg.mnist_dir = val;
        else if (key == "wall_time") cfg.wall_time = truthy();
        else if (key == "curvature" || key == "newton") cfg.newton = val;
        else if (key == "damping" || key == "newton.damping") cfg.newton_damping = std::stod(val);
        else if (key == "resgro") cfg.resgro = truthy();
        else if (key == "resgro.k") cfg.resgro_k = std::stoi(val);
        else if (key == "resgro.m") cfg.resgro_m = std::stoi(val);
        else if (key == "resgro.sigma") cfg.resgro_sigma = std::stod(val);
        else if (key == "resgro.noise") cfg.resgro_noise = val;
        else if (key == "pk") cfg.pk = val;
        else if (key == "classes") cfg.classes = std::stoi(val);
        else if (key == "topk.m") cfg.topk_m = std::stoi(val);
        else if (key == "topk.mixture") cfg.topk_mixture = truthy();
        else if (key == "topk.temperature") cfg.topk_temperature = std::stod(val);
        else throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
}

void add_common_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--seed", cfg.seed, "RNG seed");
    cmd->add_option("--n", cfg.n, "elements per tuple");
    cmd->add_option("--sigmoid", cfg.sigmoid, "logistic|logistic_art|reciprocal|cauchy|optimal");
    cmd->add_option("--beta", cfg.beta, "inverse temperature");
    cmd->add_option("--lambda", cfg.art_lambda, "ART lambda");
    cmd->add_option("--network", cfg.network, "odd_even|bitonic");
    cmd->add_option("--steps", cfg.steps, "training steps");
    cmd->add_option("--batch", cfg.batch, "batch size");
    cmd->add_option("--out", cfg.out, "output prefix for CSV/JSON/checkpoint");
    cmd->add_option("--mnist-dir", cfg.mnist_dir, "directory with MNIST IDX files");
    cmd->add_option("--d", cfg.d, "feature dimension (synthetic data)");
    cmd->add_option("--lr", cfg.lr, "learning rate");
    cmd->add_option("--optimizer", cfg.optimizer, "adam|sgd");
    cmd->add_option("--lr-final", cfg.lr_final, "final learning rate for linear decay (default: constant)");
    cmd->add_option("--pool", cfg.pool, "training pool size");
    cmd->add_option("--newton", cfg.newton, "newton-loss curvature on the ranking loss: off|fisher");
    cmd->add_flag("--resgro,!--no-resgro", cfg.resgro, "train with RESGRO on negative Kendall tau");
    cmd->add_option("--resgro-k", cfg.resgro_k, "RESGRO samples K");
    cmd->add_option("--resgro-m", cfg.resgro_m, "RESGRO pool M (bootstrapped when M > K)");
    cmd->add_option("--resgro-sigma", cfg.resgro_sigma, "RESGRO noise scale");
    cmd->add_option("--pk", cfg.pk, "top-k distribution, e.g. 0.5,0,0,0,0.5");
    cmd->add_flag("--wall-time,!--no-wall-time", cfg.wall_time,
                  "write wall time into the CSV (disable for bit-identical output)");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// ranking-supervision data plumbing

struct RankingPool {
    int n = 0;
    int d = 0;
    std::vector<std::vector<double>> features;
    std::vector<double> hidden_value; // scalar whose order defines the truth

    std::pair<Matrix, GroundTruthPermutation> tuple(const std::vector<std::size_t>& idx) const {
        Matrix x(n, d);
        std::vector<double> vals(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) x(i, j) = features[idx[i]][j];
            vals[i] = hidden_value[idx[i]];
        }
        return {std::move(x), GroundTruthPermutation::from_ranks(argsort_ranks(vals))};
    }
};

RankingPool build_pool(const RunConfig& cfg, Rng& rng) {
    RankingPool pool;
    pool.n = cfg.n;
    if (!cfg.mnist_dir.empty()) {
        const auto images = load_idx(cfg.mnist_dir + "/train-images-idx3-ubyte");
        const auto labels = load_idx(cfg.mnist_dir + "/train-labels-idx1-ubyte");
        const auto four = make_four_digit(rng, images, labels, cfg.pool);
        pool.d = four.images.cols;
        pool.features.resize(cfg.pool);
        pool.hidden_value.resize(cfg.pool);
        for (int s = 0; s < cfg.pool; ++s) {
            pool.features[s].assign(four.images.row(s), four.images.row(s) + pool.d);
            pool.hidden_value[s] = four.values[s];
        }
        return pool;
    }
    pool.d = cfg.d;
    pool.features.resize(cfg.pool);
    pool.hidden_value.resize(cfg.pool);
    std::vector<double> feat(cfg.d);
    for (int s = 0; s < cfg.pool; ++s) {
        for (int j = 0; j < cfg.d; ++j) feat[j] = rng.uniform(-1.0, 1.0);
        pool.features[s] = feat;
        pool.hidden_value[s] = synth_hidden_score(feat);
    }
    return pool;
}

std::vector<std::pair<Matrix, GroundTruthPermutation>> draw_tuples(const RankingPool& pool, Rng& rng,
                                                                   int count) {
    std::vector<std::pair<Matrix, GroundTruthPermutation>> out;
    out.reserve(count);
    std::vector<std::size_t> idx(pool.n);
    for (int t = 0; t < count; ++t) {
        for (int i = 0; i < pool.n; ++i)
            idx[i] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(pool.features.size()) - 1));
        out.push_back(pool.tuple(idx));
    }
    return out;
}

RankingMetrics evaluate_rank(const Mlp& mlp,
                             const std::vector<std::pair<Matrix, GroundTruthPermutation>>& eval_set) {
    std::vector<std::vector<double>> scores;
    std::vector<GroundTruthPermutation> truth;
    scores.reserve(eval_set.size());
    for (const auto& [x, q] : eval_set) {
        const auto y = mlp_forward(mlp, x);
        std::vector<double> s(x.rows);
        for (int i = 0; i < x.rows; ++i) s[i] = y(i, 0);
        scores.push_back(std::move(s));
        truth.push_back(q);
    }
    return metrics_em_ew(scores, truth, eval_set.front().first.rows >= 5);
}

int run_train_rank(const RunConfig& cfg) {
    const auto spec = cfg.sigmoid_spec();
    const auto net = build_network(cfg.network_kind(), cfg.n);
    if (cfg.newton != "off" && cfg.newton != "fisher")
        throw std::runtime_error(
            "train-rank: the ranking loss has no closed-form Hessian; --newton supports off|fisher");
    ResgroSpec resgro_spec;
    resgro_spec.num_samples = cfg.resgro_k;
    resgro_spec.pool_size = cfg.resgro_m;
    resgro_spec.noise_scale = cfg.resgro_sigma;
    resgro_spec.noise = cfg.resgro_noise == "cauchy" ? NoiseKind::cauchy : NoiseKind::gaussian;

    Rng rng(cfg.seed);
    Rng data_rng = rng.fork();
    Rng eval_rng = rng.fork();
    const auto pool = build_pool(cfg, data_rng);
    const auto eval_pool = build_pool(cfg, eval_rng);
    const auto eval_set = draw_tuples(eval_pool, eval_rng, cfg.eval_tuples);

    auto mlp = mlp_init(cfg.mlp_dims(pool.d, 1), cfg.seed);
    OptimizerState opt;
    opt.kind = cfg.optimizer == "sgd" ? OptKind::sgd : OptKind::adaptive_moments;
    opt.lr = cfg.lr;

    std::ofstream csv(cfg.out + ".csv");
    csv << "step,loss,em,ew,em5,wall_time\n";
    const auto t0 = std::chrono::steady_clock::now();
    double interval_loss = 0.0;
    long interval_count = 0;
    RankingMetrics last{};

    for (long step = 1; step <= cfg.steps; ++step) {
        const auto tuples = draw_tuples(pool, rng, cfg.batch);
        std::vector<std::vector<double>> batch_scores(cfg.batch);
        std::vector<MlpCache> caches(cfg.batch);
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto y = mlp_forward(mlp, tuples[b].first, &caches[b]);
            batch_scores[b].resize(cfg.n);
            for (int i = 0; i < cfg.n; ++i) batch_scores[b][i] = y(i, 0);
        }

        std::vector<std::vector<double>> dscores(cfg.batch);
        if (cfg.resgro) {
            for (int b = 0; b < cfg.batch; ++b) {
                const auto& truth = tuples[b].second;
                auto neg_tau = [&](std::span<const double> z) { return -kendall_tau(z, truth.ranks); };
                const auto zstar = resgro_target(batch_scores[b], neg_tau, resgro_spec, rng);
                dscores[b].resize(cfg.n);
                for (int i = 0; i < cfg.n; ++i) dscores[b][i] = batch_scores[b][i] - zstar[i];
                batch_loss += neg_tau(batch_scores[b]);
            }
        } else {
            for (int b = 0; b < cfg.batch; ++b) {
                dscores[b] = backward(net, spec, batch_scores[b], tuples[b].second);
                batch_loss +=
                    ranking_ce_loss(*relaxed_sort(net, spec, batch_scores[b], true).perm, tuples[b].second);
            }
            if (cfg.newton == "fisher") {
                NewtonLossSpec nl;
                nl.curvature = CurvatureKind::empirical_fisher;
                nl.damping = cfg.newton_damping;
                nl.loss = LossKind::custom;
                int at = 0; // gradients are already computed; hand them out in order
                nl.custom_grad = [&](std::span<const double>, std::span<const double>) {
                    return dscores[at++];
                };
                const std::vector<std::vector<double>> targets(cfg.batch);
                dscores = newton_loss_grad(nl, batch_scores, targets);
            }
        }
        batch_loss /= cfg.batch;
        if (!std::isfinite(batch_loss)) {
            std::cerr << "train-rank: training diverged (non-finite loss) at step " << step << "\n";
            return 3;
        }
        interval_loss += batch_loss;
        ++interval_count;

        std::vector<double> grad_accum(mlp.num_params(), 0.0);
        Matrix og(cfg.n, 1);
        for (int b = 0; b < cfg.batch; ++b) {
            for (int i = 0; i < cfg.n; ++i) og(i, 0) = dscores[b][i] / cfg.batch;
            const auto g = mlp_backward(mlp, caches[b], og).flat();
            for (std::size_t i = 0; i < grad_accum.size(); ++i) grad_accum[i] += g[i];
        }
        if (cfg.lr_final >= 0.0)
            opt.lr = cfg.lr + (cfg.lr_final - cfg.lr) * (static_cast<double>(step) / cfg.steps);
        auto params = mlp.params_flat();
        opt.step(params, grad_accum);
        mlp.set_params_flat(params);

        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            last = evaluate_rank(mlp, eval_set);
            const double mean_loss = interval_count > 0 ? interval_loss / interval_count : 0.0;
            const double wall =
                cfg.wall_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                              : 0.0;
            csv << step << ',' << fmt(mean_loss) << ',' << fmt(last.em) << ',' << fmt(last.ew) << ','
                << fmt(last.em5) << ',' << fmt(wall) << '\n';
            interval_loss = 0.0;
            interval_count = 0;
        }
    }

    mlp_save(mlp, cfg.out + ".sskm");
    json summary;
    summary["task"] = "train-rank";
    summary["config"] = cfg.echo();
    summary["final"] = {{"em", last.em}, {"ew", last.ew}, {"em5", last.em5}};
    summary["runtime_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream(cfg.out + ".json") << summary.dump(2) << "\n";
    std::cout << "final EM=" << last.em << " EW=" << last.ew << " EM5=" << last.em5 << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// top-k classification training

int run_train_topk(const RunConfig& cfg) {
    const auto pk = TopKDistribution::parse(cfg.pk);
    TopKConfig tk;
    tk.k_max = pk.k_max();
    tk.m = cfg.topk_m;
    tk.mixture = cfg.topk_mixture;
    tk.temperature = cfg.topk_temperature;
    tk.sigmoid = cfg.sigmoid_spec();
    tk.network = cfg.network_kind();

    Rng rng(cfg.seed);
    Rng data_rng = rng.fork();
    Rng eval_rng = rng.fork();
    const auto pool = synth_classification(data_rng, cfg.d, cfg.classes, cfg.pool);
    const auto eval_set = synth_classification(eval_rng, cfg.d, cfg.classes, cfg.eval_tuples);

    auto mlp = mlp_init(cfg.mlp_dims(cfg.d, cfg.classes), cfg.seed);
    OptimizerState opt;
    opt.kind = cfg.optimizer == "sgd" ? OptKind::sgd : OptKind::adaptive_moments;
    opt.lr = cfg.lr;

    std::ofstream csv(cfg.out + ".csv");
    csv << "step,loss,top1,topk,wall_time\n";
    const auto t0 = std::chrono::steady_clock::now();
    double interval_loss = 0.0;
    long interval_count = 0;
    double first_eval_loss = -1.0, last_eval_loss = 0.0, top1 = 0.0, topk_acc = 0.0;

    auto evaluate = [&] {
        long hit1 = 0, hitk = 0;
        Matrix x(1, cfg.d);
        for (int s = 0; s < eval_set.inputs.rows; ++s) {
            for (int j = 0; j < cfg.d; ++j) x(0, j) = eval_set.inputs(s, j);
            const auto y = mlp_forward(mlp, x);
            std::vector<std::pair<double, int>> ranked(cfg.classes);
            for (int c = 0; c < cfg.classes; ++c) ranked[c] = {-y(0, c), c};
            std::stable_sort(ranked.begin(), ranked.end());
            if (ranked[0].second == eval_set.labels[s]) ++hit1;
            for (int r = 0; r < tk.k_max && r < cfg.classes; ++r)
                if (ranked[r].second == eval_set.labels[s]) ++hitk;
        }
        top1 = static_cast<double>(hit1) / eval_set.inputs.rows;
        topk_acc = static_cast<double>(hitk) / eval_set.inputs.rows;
    };

    for (long step = 1; step <= cfg.steps; ++step) {
        std::vector<double> grad_accum(mlp.num_params(), 0.0);
        double batch_loss = 0.0;
        Matrix x(1, cfg.d);
        Matrix og(1, cfg.classes);
        for (int b = 0; b < cfg.batch; ++b) {
            const auto s = rng.uniform_int(0, pool.inputs.rows - 1);
            for (int j = 0; j < cfg.d; ++j) x(0, j) = pool.inputs(s, j);
            MlpCache cache;
            const auto y = mlp_forward(mlp, x, &cache);
            std::vector<double> scores(cfg.classes);
            for (int c = 0; c < cfg.classes; ++c) scores[c] = y(0, c);
            batch_loss += topk_loss(scores, pool.labels[s], pk, tk);
            const auto ds = topk_loss_grad(scores, pool.labels[s], pk, tk);
            for (int c = 0; c < cfg.classes; ++c) og(0, c) = ds[c] / cfg.batch;
            const auto g = mlp_backward(mlp, cache, og).flat();
            for (std::size_t i = 0; i < grad_accum.size(); ++i) grad_accum[i] += g[i];
        }
        batch_loss /= cfg.batch;
        if (!std::isfinite(batch_loss)) {
            std::cerr << "train-topk: training diverged (non-finite loss) at step " << step << "\n";
            return 3;
        }
        interval_loss += batch_loss;
        ++interval_count;

        if (cfg.lr_final >= 0.0)
            opt.lr = cfg.lr + (cfg.lr_final - cfg.lr) * (static_cast<double>(step) / cfg.steps);
        auto params = mlp.params_flat();
        opt.step(params, grad_accum);
        mlp.set_params_flat(params);

        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            evaluate();
            const double mean_loss = interval_loss / interval_count;
            if (first_eval_loss < 0.0) first_eval_loss = mean_loss;
            last_eval_loss = mean_loss;
            const double wall =
                cfg.wall_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                              : 0.0;
            csv << step << ',' << fmt(mean_loss) << ',' << fmt(top1) << ',' << fmt(topk_acc) << ','
                << fmt(wall) << '\n';
            interval_loss = 0.0;
            interval_count = 0;
        }
    }

    mlp_save(mlp, cfg.out + ".sskm");
    json summary;
    summary["task"] = "train-topk";
    summary["config"] = cfg.echo();
    summary["final"] = {{"loss", last_eval_loss}, {"first_loss", first_eval_loss}, {"top1", top1},
                        {"topk", topk_acc}};
    summary["runtime_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream(cfg.out + ".json") << summary.dump(2) << "\n";
    std::cout << "final loss=" << last_eval_loss << " top1=" << top1 << " top" << tk.k_max << "="
              << topk_acc << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// property suites

int run_props(const RunConfig& cfg) {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    };
    const SigmoidKind kinds[] = {SigmoidKind::logistic, SigmoidKind::logistic_art, SigmoidKind::reciprocal,
                                 SigmoidKind::cauchy, SigmoidKind::optimal};

    { // sigmoid axioms on a grid
        bool ok = true;
        for (auto kind : kinds) {
            SigmoidSpec s;
            s.kind = kind;
            s.beta = 1.5;
            double prev = -1.0;
            for (double x = -20.0; x <= 20.0; x += 1e-3) {
                const double fx = sigmoid_eval(s, x);
                ok &= std::fabs(fx + sigmoid_eval(s, -x) - 1.0) <= 1e-12;
                ok &= fx >= prev - 1e-12 && fx >= 0.0 && fx <= 1.0;
                prev = fx;
            }
        }
        report("sigmoid-symmetry-monotonicity", ok);
    }
    { // relaxed-min monotonicity dichotomy
        bool ok = true;
        for (auto kind : {SigmoidKind::reciprocal, SigmoidKind::cauchy, SigmoidKind::optimal}) {
            SigmoidSpec s;
            s.kind = kind;
            s.beta = unit_lipschitz_beta(kind);
            double prev = -20.0 * sigmoid_eval(s, 20.0);
            for (double x = -20.0 + 1e-3; x <= 20.0; x += 1e-3) {
                const double cur = x * sigmoid_eval(s, -x);
                ok &= cur >= prev - 1e-12;
                prev = cur;
            }
        }
        SigmoidSpec logi;
        logi.kind = SigmoidKind::logistic;
        logi.beta = 4.0;
        double worst = 0.0;
        for (double x = -20.0; x <= 20.0 - 1e-3; x += 1e-3) {
            const double a = x * sigmoid_eval(logi, -x);
            const double b = (x + 1e-3) * sigmoid_eval(logi, -(x + 1e-3));
            worst = std::min(worst, (b - a) / 1e-3);
        }
        ok &= worst < -1e-4;
        report("min-monotonicity-dichotomy", ok);
    }
    { // doubly stochastic P
        bool ok = true;
        Rng rng(cfg.seed);
        for (auto kind : kinds) {
            SigmoidSpec s;
            s.kind = kind;
            s.beta = 10.0;
            const auto net = build_network(cfg.network_kind(), 8);
            std::vector<double> x(8);
            for (int rep = 0; rep < 20; ++rep) {
                for (double& v : x) v = rng.uniform(-2.0, 2.0);
                const auto res = relaxed_sort(net, s, x, true);
                for (int i = 0; i < 8; ++i) {
                    double row = 0.0, col = 0.0;
                    for (int j = 0; j < 8; ++j) {
                        row += (*res.perm)(i, j);
                        col += (*res.perm)(j, i);
                    }
                    ok &= std::fabs(row - 1.0) <= 1e-6 && std::fabs(col - 1.0) <= 1e-6;
                }
            }
        }
        report("doubly-stochastic-P", ok);
    }
    { // relaxed min/max axioms
        bool ok = true;
        Rng rng(cfg.seed + 1);
        for (auto kind : kinds) {
            SigmoidSpec s;
            s.kind = kind;
            s.beta = 2.0;
            for (int rep = 0; rep < 20000; ++rep) {
                const double a = rng.uniform(-5.0, 5.0), b = rng.uniform(-5.0, 5.0),
                             c = rng.uniform(-5.0, 5.0);
                const auto ab = relaxed_swap(s, a, b);
                const auto ba = relaxed_swap(s, b, a);
                const auto neg = relaxed_swap(s, -a, -b);
                const auto sh = relaxed_swap(s, a + c, b + c);
                ok &= std::fabs(ab.min - ba.min) <= 1e-9 && ab.min <= ab.max + 1e-9;
                ok &= std::fabs(ab.min + neg.max) <= 1e-9;
                ok &= std::fabs(sh.min - (ab.min + c)) <= 1e-9;
                ok &= std::fabs(ab.min + ab.max - (a + b)) <= 1e-9;
                ok &= std::min(a, b) - 1e-9 <= ab.min && ab.max <= std::max(a, b) + 1e-9;
            }
        }
        report("relaxed-minmax-axioms", ok);
    }
    { // top-k truncation
        bool ok = true;
        Rng rng(cfg.seed + 2);
        const auto net = build_network(NetworkKind::odd_even, 16);
        const SigmoidSpec s = cfg.sigmoid_spec();
        std::vector<double> x(16);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        const auto full = relaxed_sort(net, s, x, true);
        for (int k : {1, 5}) {
            const auto rows = topk_rows(net, s, x, k);
            for (int r = 0; r < k; ++r)
                for (int c = 0; c < 16; ++c) ok &= std::fabs(rows(r, c) - (*full.perm)(r, c)) <= 1e-9;
        }
        report("topk-truncation", ok);
    }
    { // resgro bootstrap weights
        bool ok = true;
        for (int pool = 1; pool <= 8; ++pool) {
            for (int k = 1; k <= pool; ++k) {
                const auto w = resgro_rank_weights(pool, k);
                double sum = 0.0;
                for (int r = 0; r < pool; ++r) {
                    sum += w[r];
                    if (r > 0) ok &= w[r] <= w[r - 1] + 1e-15;
                }
                ok &= std::fabs(sum - 1.0) <= 1e-12;
            }
        }
        report("resgro-rank-weights", ok);
    }
    { // two-stage equivalence
        Rng rng(cfg.seed + 3);
        auto mlp = mlp_init({4, 6, 2}, cfg.seed);
        Matrix x(5, 4), t(5, 2);
        for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
        for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
        auto grad_fn = [&](const Matrix& y) {
            Matrix g(y.rows, y.cols);
            for (std::size_t i = 0; i < y.data.size(); ++i) g.data[i] = y.data[i] - t.data[i];
            return g;
        };
        auto split = mlp;
        two_stage_gd_step(split, x, grad_fn, 0.05);
        auto direct = mlp;
        MlpCache cache;
        const auto y = mlp_forward(direct, x, &cache);
        const auto grads = mlp_backward(direct, cache, grad_fn(y));
        auto params = direct.params_flat();
        const auto gflat = grads.flat();
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= 0.05 * gflat[i];
        direct.set_params_flat(params);
        double worst = 0.0;
        const auto a = split.params_flat(), b2 = direct.params_flat();
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b2[i]));
        report("two-stage-gd-equivalence", worst < 1e-10);
    }
    std::cout << (failures == 0 ? "all property suites passed\n" : "property suites FAILED\n");
    return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// gradient checks

int run_gradcheck(const RunConfig& cfg) {
    Rng rng(cfg.seed);
    const auto spec = cfg.sigmoid_spec();
    const auto net = build_network(cfg.network_kind(), cfg.n);

    auto fd_grad = [](const std::function<double(std::vector<double>)>& f, std::vector<double> x, double h) {
        std::vector<double> g(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double keep = x[i];
            x[i] = keep + h;
            const double up = f(x);
            x[i] = keep - h;
            const double down = f(x);
            x[i] = keep;
            g[i] = (up - down) / (2.0 * h);
        }
        return g;
    };
    auto rel = [](const std::vector<double>& a, const std::vector<double>& b) {
        double d2 = 0.0, a2 = 0.0, b2 = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            d2 += (a[i] - b[i]) * (a[i] - b[i]);
            a2 += a[i] * a[i];
            b2 += b[i] * b[i];
        }
        return std::sqrt(d2) / std::max(std::sqrt(a2) + std::sqrt(b2), 1e-12);
    };
    auto gapped = [&](int n) {
        std::vector<double> x(n);
        while (true) {
            for (double& v : x) v = rng.uniform(-1.5, 1.5);
            bool ok = true;
            for (int i = 0; i < n && ok; ++i)
                for (int j = i + 1; j < n && ok; ++j)
                    if (std::fabs(x[i] - x[j]) < 0.05) ok = false;
            if (ok) return x;
        }
    };

    double worst_sort = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const auto x = gapped(cfg.n);
        std::vector<int> ranks(cfg.n);
        for (int i = 0; i < cfg.n; ++i) ranks[i] = i;
        for (int i = cfg.n - 1; i > 0; --i) std::swap(ranks[i], ranks[rng.uniform_int(0, i)]);
        const auto truth = GroundTruthPermutation::from_ranks(ranks);
        const auto analytic = backward(net, spec, x, truth);
        const auto fd = fd_grad(
            [&](std::vector<double> v) {
                return ranking_ce_loss(*relaxed_sort(net, spec, v, true).perm, truth);
            },
            x, 1e-4);
        worst_sort = std::max(worst_sort, rel(analytic, fd));
    }
    std::cout << "diffsort.backward   max rel err = " << fmt(worst_sort) << "\n";

    double worst_topk = 0.0;
    {
        const int classes = std::max(cfg.n + 2, 8);
        TopKConfig tk;
        tk.k_max = 3;
        tk.m = std::max(cfg.n, 4);
        tk.sigmoid = spec;
        tk.network = NetworkKind::odd_even;
        const TopKDistribution pk{{0.5, 0.25, 0.25}};
        for (int rep = 0; rep < 10; ++rep) {
            const auto scores = gapped(classes);
            const int y = static_cast<int>(rng.uniform_int(0, classes - 1));
            const auto analytic = topk_loss_grad(scores, y, pk, tk);
            const auto fd =
                fd_grad([&](std::vector<double> v) { return topk_loss(v, y, pk, tk); }, scores, 1e-4);
            worst_topk = std::max(worst_topk, rel(analytic, fd));
        }
    }
    std::cout << "topk.loss_grad      max rel err = " << fmt(worst_topk) << "\n";

    double worst_model = 0.0;
    {
        auto mlp = mlp_init({4, 8, 1}, cfg.seed);
        Matrix x(3, 4), t(3, 1);
        for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
        for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
        MlpCache cache;
        const auto y = mlp_forward(mlp, x, &cache);
        Matrix og(3, 1);
        for (int b = 0; b < 3; ++b) og(b, 0) = y(b, 0) - t(b, 0);
        const auto analytic = mlp_backward(mlp, cache, og).flat();
        const auto fd = fd_grad(
            [&](std::vector<double> flat) {
                Mlp m = mlp;
                m.set_params_flat(flat);
                const auto out = mlp_forward(m, x);
                double loss = 0.0;
                for (std::size_t i = 0; i < out.data.size(); ++i)
                    loss += 0.5 * (out.data[i] - t.data[i]) * (out.data[i] - t.data[i]);
                return loss;
            },
            mlp.params_flat(), 1e-4);
        worst_model = rel(analytic, fd);
    }
    std::cout << "model.backward      max rel err = " << fmt(worst_model) << "\n";

    const double worst = std::max({worst_sort, worst_topk, worst_model});
    std::cout << "overall             max rel err = " << fmt(worst) << (worst < 1e-5 ? "  (< 1e-5)" : "")
              << "\n";
    return worst < 1e-5 ? 0 : 1;
}

// ---------------------------------------------------------------------------

int run_bench_layers(const RunConfig& cfg, bool n_given) {
    if (n_given) {
        std::cout << build_network(cfg.network_kind(), cfg.n).num_layers() << "\n";
        return 0;
    }
    std::cout << "n,odd_even,bitonic\n";
    for (int n : {4, 16, 32, 128, 1024}) {
        std::cout << n << ',' << build_network(NetworkKind::odd_even, n).num_layers() << ','
                  << build_network(NetworkKind::bitonic, n).num_layers() << "\n";
    }
    return 0;
}

int run_dump_network(const RunConfig& cfg) {
    const auto net = build_network(cfg.network_kind(), cfg.n);
    bool first = true;
    for (const auto& layer : net.layers) {
        if (!first) std::cout << "--\n";
        first = false;
        for (const auto& c : layer)
            std::cout << c.lo << ',' << c.hi << ','
                      << (c.dir == SwapDirection::ascending ? "asc" : "desc") << "\n";
    }
    return 0;
}

int run_dump_p(const RunConfig& cfg, const std::string& xs) {
    std::vector<double> x;
    std::stringstream ss(xs);
    std::string item;
    while (std::getline(ss, item, ',')) x.push_back(std::stod(item));
    const auto net = build_network(cfg.network_kind(), static_cast<int>(x.size()));
    const auto res = relaxed_sort(net, cfg.sigmoid_spec(), x, true);
    for (int r = 0; r < net.n; ++r) {
        for (int c = 0; c < net.n; ++c) std::cout << (c ? "," : "") << fmt((*res.perm)(r, c));
        std::cout << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    // the config file must load before CLI11 writes flag values into cfg, so
    // pre-scan argv for --config
    RunConfig cfg;
    std::set<std::string> config_keys;
    try {
        for (int i = 1; i + 1 < argc; ++i) {
            if (std::string(argv[i]) == "--config") {
                load_config_file(cfg, argv[i + 1], &config_keys);
                break;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    CLI::App app{"differentiable sorting network toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    std::string dump_x = "3,1,2";

    auto* train_rank = app.add_subcommand("train-rank", "ranking supervision on synthetic or MNIST tuples");
    auto* train_topk = app.add_subcommand("train-topk", "top-k classification on synthetic data");
    auto* props = app.add_subcommand("props", "run the invariant suites");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks per module");
    auto* bench = app.add_subcommand("bench-layers", "layer counts per network kind");
    auto* dumpnet = app.add_subcommand("dump-network", "dump comparators as lo,hi,dir lines");
    auto* dumpp = app.add_subcommand("dump-p", "dump the relaxed permutation matrix as CSV");
    for (auto* cmd : {train_rank, train_topk, props, gradcheck, bench, dumpnet, dumpp}) {
        cmd->add_option("--config", config_path, "flat key=value config file; flags win");
        add_common_flags(cmd, cfg);
    }
    dumpp->add_option("--x", dump_x, "comma-separated input vector");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cfg.steps <= 0 || cfg.batch <= 0) throw std::runtime_error("steps and batch must be positive");
        if (train_rank->parsed()) return run_train_rank(cfg);
        if (train_topk->parsed()) return run_train_topk(cfg);
        if (props->parsed()) return run_props(cfg);
        if (gradcheck->parsed()) return run_gradcheck(cfg);
        if (bench->parsed())
            return run_bench_layers(cfg, bench->count("--n") > 0 || config_keys.count("n") > 0);
        if (dumpnet->parsed()) return run_dump_network(cfg);
        if (dumpp->parsed()) return run_dump_p(cfg, dump_x);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
