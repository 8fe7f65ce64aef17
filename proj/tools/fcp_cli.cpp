#include <fcp/cli/config.hpp>
#include <fcp/cli/run.hpp>
#include <fcp/errors.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> dataset, out, checkpoint;
    std::optional<double> alpha, w;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, window, lags, patience, d_x, d_y;
    std::optional<std::size_t> n, index, k;
    bool auto_n = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON config file; flags override its values");
    cmd->add_option("--dataset", o.dataset, "CSV dataset");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--d-x", o.d_x, "feature columns (default: from header)");
    cmd->add_option("--d-y", o.d_y, "outcome columns (default: from header)");
    cmd->add_flag("--quiet", o.quiet, "no progress output");
}

void add_inference(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file (default: <out>/checkpoint.bin)");
    cmd->add_option("--alpha", o.alpha, "miscoverage level");
    cmd->add_option("--w", o.w, "guidance scale (default: the checkpoint's)");
}

fcp::cli::RunConfig resolve(const Overrides& o) {
    fcp::cli::RunConfig c;
    if (!o.config.empty()) fcp::cli::load_config_file(c, o.config);
    if (o.dataset) c.dataset = *o.dataset;
    if (o.out) c.out = *o.out;
    if (o.checkpoint) c.checkpoint = *o.checkpoint;
    if (o.alpha) c.alpha = *o.alpha;
    if (o.w) {
        c.flow.w = *o.w;
        c.w_override = *o.w;
    }
    if (o.seed) c.seed = *o.seed;
    if (o.epochs) c.flow.max_epochs = *o.epochs;
    if (o.window) c.window = *o.window;
    if (o.lags) c.lags = *o.lags;
    if (o.patience) c.patience = *o.patience;
    if (o.d_x) c.d_x = *o.d_x;
    if (o.d_y) c.d_y = *o.d_y;
    if (o.n) c.n = *o.n;
    if (o.auto_n) c.auto_n = true;
    if (o.index) c.index = *o.index;
    if (o.k) c.boundary_points = *o.k;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flow-based conformal prediction for multivariate time series"};
    app.require_subcommand(1);

    fcp::cli::SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate a synthetic VAR(1) dataset");
    s->add_option("--d", synth.spec.d, "feature and outcome dimension")->capture_default_str();
    s->add_option("--T", synth.spec.length, "number of observations")->capture_default_str();
    s->add_option("--seed", synth.seed, "random seed")->capture_default_str();
    s->add_option("--coupling", synth.spec.coupling, "VAR spectral radius")->capture_default_str();
    s->add_option("--noise", synth.spec.noise_scale, "outcome noise scale")->capture_default_str();
    s->add_option("--rho", synth.spec.rho, "outcome noise correlation")->capture_default_str();
    s->add_option("--hetero", synth.spec.hetero, "heteroscedasticity strength")->capture_default_str();
    s->add_option("--out", synth.out, "output CSV")->capture_default_str();

    Overrides tr;
    auto* t = app.add_subcommand("train", "fit the predictor and train the guided flow");
    add_common(t, tr);
    t->add_option("--epochs", tr.epochs, "maximum epochs");
    t->add_option("--w", tr.w, "guidance scale stored with the checkpoint");
    t->add_option("--window", tr.window, "encoder context length");
    t->add_option("--lags", tr.lags, "predictor lag count");
    t->add_option("--patience", tr.patience, "stop after this many epochs without improvement (0: never)");

    Overrides ev;
    auto* e = app.add_subcommand("eval", "coverage and set size on the test split");
    add_common(e, ev);
    add_inference(e, ev);
    e->add_option("--N", ev.n, "set-size sample count (default 4096/8192/16384 by d_y)");
    e->add_flag("--auto-n", ev.auto_n, "choose N by the relative standard error gate");

    Overrides rg;
    auto* r = app.add_subcommand("region", "boundary of a 2-D prediction set");
    add_common(r, rg);
    add_inference(r, rg);
    r->add_option("--index", rg.index, "dataset index inside the test split (default: first)");
    r->add_option("--K", rg.k, "boundary points (default 360)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return 1;
    }

    try {
        if (*s) {
            const auto ds = fcp::cli::cmd_synth(synth);
            std::cout << "wrote " << ds.length() << " rows to " << synth.out << '\n';
        } else if (*t) {
            const auto c = resolve(tr);
            const auto o = fcp::cli::cmd_train(c, tr.quiet ? nullptr : &std::cerr);
            std::cout << "best epoch " << o.result.best_epoch << " validation loss " << o.result.best_val << '\n';
        } else if (*e) {
            const auto c = resolve(ev);
            const auto o = fcp::cli::cmd_eval(c, ev.quiet ? nullptr : &std::cerr);
            std::cout << o.json.dump(2) << '\n';
        } else if (*r) {
            const auto c = resolve(rg);
            const auto b = fcp::cli::cmd_region(c);
            std::cout << "wrote " << b.rows() << " boundary points\n";
        }
    } catch (const fcp::UsageError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    } catch (const fcp::NumericalError& ex) {
        std::cerr << "numerical failure: " << ex.what() << '\n';
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
