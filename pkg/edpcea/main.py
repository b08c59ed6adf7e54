import argparse
import os
import sys

# Add application path to sys.path
if getattr(sys, 'frozen', False):
    # Running in a PyInstaller bundle
    application_path = sys._MEIPASS
else:
    # Running in normal Python environment
    application_path = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Insert the application path at the start of sys.path
sys.path.insert(0, application_path)

from edpcea.config.run_config import RunConfig
from edpcea.controllers.evaluate_controller import DESK_N, DESK_REPLICATES, EvaluateController
from edpcea.controllers.run_controller import PLOT_SELECTORS, RunController
from edpcea.services.simulator_service import MIN_ORACLE_REPS, SETTINGS, DGPConfig, setting_config
from edpcea.utils.errors import EdpceaError, InvariantError, NumericError
from edpcea.utils.logger import get_logger, log_message

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2
EXIT_USAGE = 64

PLOT_HELP = """plot-data selectors and columns:
  prior-hazard  prior_hazard.csv  path_id, t, lambda  (source: draws .jsonl or dataset)
  hazard        hazard.csv        v, tau_lo, tau_hi, lambda_mean, lambda_lo95, lambda_hi95
  ite           ite.csv           i, mean, lo, hi, cluster  (sorted by mean)
  graph         graph_edges.csv   i, j, p;  graph_nodes.csv  i, cluster, psi_mean
  dsi           dsi.csv           dsi
  predictive    predictive.csv    chain, iteration, i, a, log_t, y, l1..lq
"""


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _add_config_args(parser):
    parser.add_argument("--config", help="flat YAML file of config keys")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, repeatable")


def _add_sampler_args(parser):
    parser.add_argument("--seed", type=int)
    parser.add_argument("--iters", type=int)
    parser.add_argument("--burnin", type=int)
    parser.add_argument("--thin", type=int)
    parser.add_argument("--chains", type=int)


def build_parser():
    parser = UsageParser(prog="edpcea", description="Joint cost-survival EDP-GP cost-effectiveness analysis",
                         epilog=PLOT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=UsageParser)

    p = sub.add_parser("simulate", help="simulate a benchmark dataset")
    p.add_argument("--setting", choices=list(SETTINGS))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--pc", type=float, default=0.5)
    p.add_argument("--pdelta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="also write the latent truth sidecar here")

    p = sub.add_parser("fit", help="run the MCMC sampler")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_sampler_args(p)
    _add_config_args(p)

    p = sub.add_parser("estimate", help="g-computation of NMB, CEAC, ICER and ITEs")
    p.add_argument("--draws", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--kappa", type=float)
    _add_config_args(p)

    p = sub.add_parser("subgroups", help="co-clustering, mode partition, DSI and graph export")
    p.add_argument("--draws", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--kappa", type=float)
    p.add_argument("--threshold", type=float)
    _add_config_args(p)

    p = sub.add_parser("evaluate", help="frequentist simulation study")
    p.add_argument("--settings", nargs="+", choices=list(SETTINGS), default=["parametric_low", "bimodal_low"])
    p.add_argument("--replicates", type=int, default=DESK_REPLICATES)
    p.add_argument("--n", type=int, default=DESK_N)
    p.add_argument("--oracle-reps", type=int, default=MIN_ORACLE_REPS)
    p.add_argument("--kappa", type=float)
    p.add_argument("--out-dir", required=True)
    _add_sampler_args(p)
    _add_config_args(p)

    p = sub.add_parser("summarize", help="text report of any artifact")
    p.add_argument("artifact")
    p.add_argument("--html", action="store_true", help="render the report to HTML")
    p.add_argument("--out", help="write the report here instead of stdout")
    _add_config_args(p)

    p = sub.add_parser("plot-data", help="plot-ready CSVs", epilog=PLOT_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("selector", choices=list(PLOT_SELECTORS))
    p.add_argument("--source", required=True, help="draws .jsonl (or dataset for prior-hazard)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kappa", type=float)
    _add_config_args(p)
    return parser


def load_config(args, **defaults):
    """Defaults, then --config, then explicit flags, then --set pairs."""
    overrides = dict(defaults)
    for key in ("seed", "iters", "burnin", "thin", "chains", "kappa", "threshold"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    config = RunConfig.load(getattr(args, "config", None), overrides)
    return config.set_pairs(getattr(args, "set", []))


def _out_dir(args, source):
    return args.out_dir or os.path.dirname(os.path.abspath(source))


def run_command(args):
    logger = get_logger()
    logger.info(f"edpcea {args.command}")
    if args.command == "simulate":
        if args.setting:
            dgp = setting_config(args.setting, n=args.n, seed=args.seed, kappa=args.kappa)
        else:
            dgp = DGPConfig(n=args.n, p_c=args.pc, p_delta=args.pdelta, kappa=args.kappa, seed=args.seed)
        RunController().simulate(dgp, args.out, args.truth)
    elif args.command == "fit":
        RunController(load_config(args)).fit(args.data, args.out)
    elif args.command == "estimate":
        RunController(load_config(args)).estimate(args.draws, _out_dir(args, args.draws), args.kappa)
    elif args.command == "subgroups":
        RunController(load_config(args)).subgroups(args.draws, _out_dir(args, args.draws), args.kappa,
                                                   args.threshold)
    elif args.command == "evaluate":
        # simulated costs have a nonzero level, so the cost regression carries an intercept
        config = load_config(args, add_intercept=True)
        report = EvaluateController(config, args.settings, args.replicates, args.n,
                                    args.oracle_reps).evaluate(args.out_dir)
        for row in report.rows:
            print(f"{row['setting']}: coverage={row['coverage']}, abs_rel_bias={row['abs_rel_bias']}, "
                  f"width={row['width']}, excluded={row['excluded']}/{row['replicates']}")
    elif args.command == "summarize":
        text = RunController(load_config(args)).summarize(args.artifact, args.html)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        else:
            sys.stdout.write(text)
    elif args.command == "plot-data":
        RunController(load_config(args)).emit_plot_data(args.selector, args.source, args.out_dir, args.kappa)
    return EXIT_OK


def cli_main(argv=None):
    """Run one subcommand; returns 0, 1 (invalid input), 2 (numeric failure) or 64 (usage)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logger = get_logger()
    try:
        return run_command(args)
    except (NumericError, InvariantError) as e:
        log_message(logger, f"{args.command} failed: {e}", "ERROR")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_NUMERIC
    except EdpceaError as e:
        log_message(logger, f"{args.command} rejected its input: {e}", "ERROR")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_VALIDATION


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
