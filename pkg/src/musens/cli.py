"""Command-line front end: rate and sensitivity curves as CSV, plus operating-point reports.

Every subcommand takes ``--seed``, ``--trials``, ``--out`` and an SNR grid
``--rho-start-db/--rho-stop-db/--rho-step-db``.  Settings resolve as
built-in defaults, then a ``key = value`` config file (``--config``), then
flags.  ``--show-config`` prints the resolved settings and exits.
"""

import argparse
import csv
import io
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import capacity, closed_form, maxchi, precoder
from .errors import DomainError, MusensError, RangeError

U64_MAX = (1 << 64) - 1


# ---------------------------------------------------------------------------
# argument types


def _seed(text):
    value = int(text, 0)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _nonnegative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text}")
    return value


def _list_of(kind):
    def parse(text):
        items = [s.strip() for s in str(text).split(",") if s.strip()]
        if not items:
            raise argparse.ArgumentTypeError("expected a comma-separated list")
        try:
            return [kind(s) for s in items]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    parse.__name__ = f"{kind.__name__} list"
    return parse


def _link(text):
    # "K:constellation"
    k, _, name = text.partition(":")
    if not name:
        raise ValueError(f"link {text!r} is not of the form K:constellation")
    precoder.constellation(name)
    return int(k), name.upper()


_link.__name__ = "link"


def rho_grid_db(start, stop, step):
    """Inclusive dB grid ``start, start+step, ...`` up to ``stop``."""
    if not step > 0:
        raise ValueError(f"rho step must be positive, got {step}")
    if stop < start:
        raise ValueError(f"rho stop {stop} is below start {start}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


# ---------------------------------------------------------------------------
# CSV output


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.9g" % value
    return str(value)


def render_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _gnuplot_script(csv_path, header, x_col, y_cols, group_col):
    """Plain gnuplot script reading the CSV; one point series per column."""
    name = os.path.basename(csv_path).replace("'", "''")
    # rows of different groups (beta, K, ...) share a column, so draw points
    style = "points" if group_col is not None else "linespoints"
    plots = [f"'{name}' using {x_col + 1}:{y + 1} with {style} title '{header[y]}'" for y in y_cols]
    lines = [
        "# gnuplot -p <this file>, from the directory holding the CSV",
        "set datafile separator ','",
        "set grid",
        f"set xlabel '{header[x_col]}'",
        "plot " + ", \\\n     ".join(plots),
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands; each returns (header, rows, plot spec, failures)


def _pmap(workers, fn, items):
    """Ordered map, on threads when ``workers > 1``."""
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _grid(cfg):
    return rho_grid_db(cfg.rho_start_db, cfg.rho_stop_db, cfg.rho_step_db)


def cmd_sensitivity(cfg):
    header = ["beta", "rho_db", "sensitivity", "low_asymptote", "high_asymptote"]
    grid = _grid(cfg)
    for beta in cfg.betas:
        if not beta >= 1:
            raise DomainError(f"beta values must be >= 1, got {beta}")

    def curve(beta):
        rows = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", closed_form.AsymptoteWarning)
            for r_db in grid:
                rho = closed_form.db_to_linear(r_db)
                rows.append((
                    beta,
                    r_db,
                    closed_form.sensitivity(beta, rho).value,
                    closed_form.sensitivity_asymptote(beta, rho, "low"),
                    closed_form.sensitivity_asymptote(beta, rho, "high"),
                ))
        return rows

    rows = [row for part in _pmap(cfg.workers, curve, cfg.betas) for row in part]
    return header, rows, (1, [2], 0), []


def cmd_operating_point(cfg):
    header = [
        "beta_from", "beta_to", "epsilon", "required_sensitivity", "rho", "rho_db", "penalty_db",
    ]
    penalty = closed_form.db_penalty(cfg.delta)

    def solve(beta_to):
        eps = closed_form.complexity_reduction(cfg.beta_from, beta_to)
        if eps == 0:
            raise DomainError(f"transition {cfg.beta_from} -> {beta_to} is empty")
        target = cfg.delta / eps
        if target == 0:
            # zero penalty only at vanishing SNR, where the sensitivity tends to 0
            return (cfg.beta_from, beta_to, eps, 0.0, 0.0, -math.inf, penalty), None
        try:
            rho = closed_form.solve_operating_point(cfg.beta_from, target)
        except RangeError as exc:
            return (cfg.beta_from, beta_to, eps, target, math.nan, math.nan, penalty), str(exc)
        return (
            cfg.beta_from, beta_to, eps, target, rho, closed_form.linear_to_db(rho), penalty
        ), None

    results = _pmap(cfg.workers, solve, cfg.betas_to)
    rows = [r for r, _ in results]
    failures = [f"transition {cfg.beta_from} -> {b}: {e}" for (_, e), b in zip(results, cfg.betas_to) if e]
    return header, rows, (1, [5], None), failures


def cmd_mi_curves(cfg):
    header = [
        "M", "K", "rho_db", "I_eq_mc", "I_eq_stderr", "I_eq_closed", "I_opt_mc", "I_opt_stderr",
    ]
    grid = _grid(cfg)
    rhos = [closed_form.db_to_linear(r) for r in grid]

    def curve(K):
        eq = capacity.estimate_I_eq_curve(cfg.M, K, rhos, cfg.trials, cfg.seed)
        rows = []
        for r_db, rho, est in zip(grid, rhos, eq):
            closed = K * closed_form.capF(cfg.M / K, rho) if cfg.M >= K else math.nan
            if cfg.opt_trials > 0:
                opt = capacity.estimate_I_opt(cfg.M, K, rho, cfg.opt_trials, cfg.seed)
                opt_mean, opt_se = opt.mean, opt.std_error
            else:
                opt_mean = opt_se = math.nan
            rows.append((cfg.M, K, r_db, est.mean, est.std_error, closed, opt_mean, opt_se))
        return rows

    rows = [row for part in _pmap(cfg.workers, curve, cfg.users) for row in part]
    return header, rows, (2, [3, 5], 1), []


def cmd_maxchi(cfg):
    header = ["M", "zeta", "analytic_prob", "empirical_prob", "empirical_stderr", "mean_max_over_M"]

    def block(M):
        stats = maxchi.empirical_max_stats(M, cfg.trials, cfg.seed, tuple(cfg.zetas))
        return [
            (
                M,
                z,
                maxchi.cdf_max_chisq(M, M * (1.0 + z)),
                stats.probs[i],
                stats.prob_stderr(i),
                stats.mean / M,
            )
            for i, z in enumerate(cfg.zetas)
        ]

    rows = [row for part in _pmap(cfg.workers, block, cfg.Ms) for row in part]
    return header, rows, (0, [2, 3], 1), []


def cmd_vp_ber(cfg):
    header = ["K", "constellation", "rho_db", "ber", "bits"]
    grid = _grid(cfg)
    rows = []
    for K, name in cfg.links:
        link = precoder.PrecoderConfig(
            M=cfg.M,
            K=K,
            constellation=precoder.constellation(name),
            alpha=cfg.alpha,
            seed=cfg.seed,
            pool=cfg.pool,
            tau_factor=cfg.tau_factor,
            coherence=cfg.coherence,
        )
        points = precoder.simulate_ber(link, grid, cfg.trials, workers=cfg.workers)
        rows.extend((K, name, p.rho_db, p.ber, p.bits_sent) for p in points)
    return header, rows, (2, [3], 1), []


# ---------------------------------------------------------------------------
# parser


COMMANDS = {
    "sens": (
        cmd_sensitivity,
        "sensitivity curves with low/high-SNR asymptotes",
        dict(trials=1, rho_start_db=-40.0, rho_stop_db=40.0, rho_step_db=1.0),
    ),
    "op-point": (
        cmd_operating_point,
        "SNR at which a given fractional power penalty buys a user reduction",
        dict(trials=1, rho_start_db=-80.0, rho_stop_db=80.0, rho_step_db=1.0),
    ),
    "mi": (
        cmd_mi_curves,
        "Monte Carlo and closed-form sum-rate curves",
        dict(trials=capacity.DEFAULT_TRIALS, rho_start_db=-10.0, rho_stop_db=30.0, rho_step_db=1.0),
    ),
    "maxchi": (
        cmd_maxchi,
        "concentration of the strongest user's channel gain",
        dict(trials=10_000, rho_start_db=0.0, rho_stop_db=0.0, rho_step_db=1.0),
    ),
    "vp-ber": (
        cmd_vp_ber,
        "uncoded BER of vector-perturbation precoding",
        dict(trials=20_000, rho_start_db=0.0, rho_stop_db=30.0, rho_step_db=2.0),
    ),
}


def _add_common(p, defaults):
    p.add_argument("--seed", type=_seed, default=0, help="64-bit master seed")
    p.add_argument("--trials", type=_positive_int, default=defaults["trials"],
                   help="Monte Carlo trials (symbols per SNR point for vp-ber)")
    p.add_argument("--out", default="-", help="CSV output path, '-' for stdout")
    p.add_argument("--rho-start-db", type=float, default=defaults["rho_start_db"])
    p.add_argument("--rho-stop-db", type=float, default=defaults["rho_stop_db"])
    p.add_argument("--rho-step-db", type=float, default=defaults["rho_step_db"])
    p.add_argument("--workers", type=_positive_int, default=1,
                   help="worker threads; output does not depend on this")
    p.add_argument("--config", help="file of 'key = value' lines, '#' starts a comment")
    p.add_argument("--show-config", action="store_true", help="print resolved settings and exit")
    p.add_argument("--gnuplot", action="store_true",
                   help="also write a gnuplot script next to the CSV (needs --out)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="musens", description="User-count sensitivity of the multi-antenna downlink."
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    parsers = {}
    for name, (_, help_text, defaults) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_common(p, defaults)
        parsers[name] = p

    p = parsers["sens"]
    p.add_argument("--betas", type=_list_of(float), default="1,2,4,8")

    p = parsers["op-point"]
    p.add_argument("--delta", type=float, default=0.3, help="fractional power penalty")
    p.add_argument("--beta-from", type=float, default=1.0)
    p.add_argument("--betas-to", type=_list_of(float), default="2,4,8")

    p = parsers["mi"]
    p.add_argument("--M", type=_positive_int, default=8, help="transmit antennas")
    p.add_argument("--users", type=_list_of(int), default="8,4,2,1", help="K values")
    p.add_argument("--opt-trials", type=_nonnegative_int, default=50,
                   help="trials for the optimized-power column; 0 skips it")

    p = parsers["maxchi"]
    p.add_argument("--Ms", type=_list_of(int), default="1,2,4,8,16,32,64")
    p.add_argument("--zetas", type=_list_of(float), default="0.1,0.5,1")

    p = parsers["vp-ber"]
    p.add_argument("--M", type=_positive_int, default=8, help="transmit antennas")
    p.add_argument("--links", type=_list_of(_link), default="8:QPSK,4:16QAM",
                   help="K:constellation pairs")
    p.add_argument("--pool", type=_positive_int, default=8, help="users the K are drawn from")
    p.add_argument("--alpha", type=float, default=None, help="regularization (default K)")
    p.add_argument("--tau-factor", type=float, default=precoder.TAU_FACTOR)
    p.add_argument("--coherence", type=_positive_int, default=1,
                   help="channel uses per channel draw")
    return parser, parsers


_NOT_CONFIGURABLE = {"config", "show_config", "command", "help"}


def read_config(path):
    """Parse ``key = value`` lines; keys may use '-' or '_'."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce_bool(text):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def resolve(argv):
    """Parse ``argv`` into (command, settings namespace)."""
    parser, parsers = build_parser()
    first = parser.parse_args(argv)
    if first.config:
        sub = parsers[first.command]
        actions = {a.dest: a for a in sub._actions}
        overrides = {}
        for key, value in read_config(first.config).items():
            action = actions.get(key)
            if action is None or key in _NOT_CONFIGURABLE:
                raise ValueError(f"{first.config}: unknown setting {key!r} for {first.command}")
            if action.nargs == 0:
                overrides[key] = _coerce_bool(value)
            elif value.lower() == "none" and action.default is None:
                overrides[key] = None
            else:
                # argparse converts string defaults with the argument's type
                overrides[key] = value
        sub.set_defaults(**overrides)
        first = parser.parse_args(argv)
    return first.command, first


def show_config(cfg):
    lines = []
    for key, value in sorted(vars(cfg).items()):
        if key in _NOT_CONFIGURABLE:
            continue
        if isinstance(value, list):
            value = ",".join(
                f"{v[0]}:{v[1]}" if isinstance(v, tuple) else _fmt(v) for v in value
            )
        elif value is None:
            value = "none"
        else:
            value = _fmt(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def run(argv=None, stdout=None):
    """Execute one command; returns the exit status."""
    stdout = stdout or sys.stdout
    command, cfg = resolve(argv)
    if cfg.show_config:
        stdout.write(f"# musens {command}\n" + show_config(cfg))
        return 0
    if cfg.gnuplot and cfg.out == "-":
        raise ValueError("--gnuplot needs a file given with --out")
    # fail before any work if the step or range is invalid
    rho_grid_db(cfg.rho_start_db, cfg.rho_stop_db, cfg.rho_step_db)

    header, rows, plot, failures = COMMANDS[command][0](cfg)
    text = render_csv(header, rows)
    if cfg.out == "-":
        stdout.write(text)
    else:
        _write(cfg.out, text)
        if cfg.gnuplot:
            x_col, y_cols, group_col = plot
            script = _gnuplot_script(cfg.out, header, x_col, y_cols, group_col)
            _write(os.path.splitext(cfg.out)[0] + ".gp", script)
    for msg in failures:
        print(f"musens {command}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def main(argv=None):
    try:
        return run(argv)
    except SystemExit as exc:
        # argparse usage errors, already reported on one line
        return exc.code if isinstance(exc.code, int) else 2
    except (MusensError, ValueError, ArithmeticError, OSError) as exc:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"musens: error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
