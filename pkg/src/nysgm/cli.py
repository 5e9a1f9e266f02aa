"""Command-line experiment harness.

Subcommands::

    nysgm gen-data   --n 100 --seed 0 --out toy.csv
    nysgm train      --n 100 --m 10 --eta 0.00125 --iters 3000 --out curve.csv
    nysgm experiment --preset toy --out results/
    nysgm cv         --n 200 --m 10 --val-frac 0.5 --out cv.csv

Settings may come from a flat ``key=value`` file given with ``--config``;
flags given on the command line take precedence. Exit status is 0 on
success, 1 on invalid input or configuration and 2 on I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset, eval_grid, gen_toy, load_csv, save_csv
from .errors import InputError
from .evaluation import CVConfig, TruncatedPredictor, cross_validate_step_size, generalization_error
from .kernel import KernelSpec
from .nystrom import STRATEGIES, build_factor
from .sgm import REGIMES, STORAGE_STRATEGIES, RegimeParams, TrainConfig, regime_schedule, train

AGGREGATE_COLUMNS = (
    "m",
    "snapshot_iter",
    "epochs",
    "paper_passes",
    "mean_gen_error",
    "std_gen_error",
    "mean_emp_risk",
)
RAW_COLUMNS = ("m", "trial", "snapshot_iter", "epochs", "paper_passes", "emp_risk", "gen_error")
TOY_PRESET = {
    "n": 100,
    "sigma": 0.2,
    "batch": 1,
    "eta": 1 / 800,
    "m": (2, 4, 6, 8, 10, 12),
    "trials": 50,
    "eval_points": 2000,
    "target": "noiseless",
    "epochs": 30.0,
}


class ConfigError(InputError):
    pass


@dataclass
class ExperimentConfig:
    n: Optional[int] = 100
    csv: Optional[str] = None
    kernel: str = "gaussian"
    sigma: float = 0.2
    degree: int = 2
    offset: float = 0.0
    kappa: float = 1.0
    m: tuple = ()
    regime: Optional[str] = None
    zeta: float = 0.0
    gamma: float = 1.0
    eta: Optional[float] = None
    theta: float = 0.0
    batch: int = 1
    iters: Optional[int] = None
    epochs: float = 30.0
    stride: Optional[int] = None
    trials: int = 1
    seed: int = 0
    eval_points: int = 2000
    eval_mode: str = "grid"
    target: str = "noiseless"
    landmarks: str = "first_m"
    storage: str = "precompute_cross_gram"
    rtol: float = 1e-10
    jobs: int = 1
    out: Optional[str] = None
    extra: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls) if f.name != "extra"}
        kw, extra = {}, {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                extra[key] = raw
                continue
            if raw is None:
                continue
            kw[key] = _coerce(key, raw)
        unknown = set(extra) - {"preset", "config", "val_frac", "grid", "truncate", "command"}
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        cfg = cls(**kw, extra=extra)
        cfg.validate()
        return cfg

    def kernel_spec(self) -> KernelSpec:
        try:
            return KernelSpec(self.kernel, self.sigma, self.degree, self.offset, self.kappa)
        except InputError as exc:
            raise ConfigError(f"kernel: {exc}") from None

    def validate(self) -> None:
        def bad(name, why):
            raise ConfigError(f"{name}: {why}")

        if self.csv is None and (self.n is None or self.n < 1):
            bad("n", "must be a positive integer")
        if self.trials < 1:
            bad("trials", "must be >= 1")
        if self.batch < 1:
            bad("batch", "must be >= 1")
        if self.iters is not None and self.iters < 1:
            bad("iters", "must be >= 1")
        if not self.epochs > 0:
            bad("epochs", "must be positive")
        if self.stride is not None and self.stride < 1:
            bad("stride", "must be >= 1")
        if self.eval_points < 1:
            bad("eval_points", "must be >= 1")
        if self.eval_mode not in ("grid", "random"):
            bad("eval_mode", "must be 'grid' or 'random'")
        if self.target not in ("noisy", "noiseless"):
            bad("target", "must be 'noisy' or 'noiseless'")
        if self.regime is not None and self.regime not in REGIMES:
            bad("regime", f"must be one of {', '.join(REGIMES)}")
        if self.landmarks not in STRATEGIES:
            bad("landmarks", f"must be one of {', '.join(STRATEGIES)}")
        if self.storage not in STORAGE_STRATEGIES:
            bad("storage", f"must be one of {', '.join(STORAGE_STRATEGIES)}")
        if self.eta is not None and not self.eta >= 0:
            bad("eta", "must be non-negative")
        if not 0 <= self.theta < 1:
            bad("theta", "must lie in [0, 1)")
        if self.jobs < 1:
            bad("jobs", "must be >= 1")
        if self.csv is None:
            for m in self.m:
                if not 1 <= m <= self.n:
                    bad("m", f"every m must satisfy 1 <= m <= n={self.n}, got {m}")
        self.kernel_spec()
        if self.regime is not None:
            try:
                RegimeParams(self.regime, self.zeta, self.gamma)
            except InputError as exc:
                raise ConfigError(f"regime: {exc}") from None

    def as_record(self) -> dict:
        rec = asdict(self)
        rec.pop("extra")
        rec["m"] = ",".join(str(v) for v in self.m)
        return rec


_INT_KEYS = {"n", "degree", "batch", "iters", "stride", "trials", "seed", "eval_points", "jobs"}
_FLOAT_KEYS = {"sigma", "offset", "kappa", "zeta", "gamma", "eta", "theta", "epochs", "rtol"}


def _coerce(key, raw):
    try:
        if key == "m":
            if isinstance(raw, str):
                raw = [v for v in raw.replace(" ", "").split(",") if v]
            return tuple(int(v) for v in raw)
        if key in _INT_KEYS:
            value = float(raw) if isinstance(raw, str) else raw
            if int(value) != value:
                raise ValueError("not an integer")
            return int(value)
        if key in _FLOAT_KEYS:
            return float(_fraction(raw) if isinstance(raw, str) else raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None
    return raw


def _fraction(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


# ----------------------------------------------------------------------------
# experiment


def stream_seed(trial_seed: int) -> int:
    """Seed for the index stream, independent of the data stream of the same trial."""
    ss = np.random.SeedSequence(trial_seed, spawn_key=(1,))
    return int(ss.generate_state(1, np.uint64)[0])


def _trial_data(cfg: ExperimentConfig, trial_seed: int, base: Optional[Dataset]):
    """Training data plus evaluation points and targets for one trial."""
    if base is None:
        data = gen_toy(cfg.n, trial_seed)
        X_eval, f_eval = eval_grid(cfg.eval_points, cfg.eval_mode, seed=[trial_seed, 2])
        if cfg.target == "noisy":
            noise = np.random.default_rng([trial_seed, 3]).standard_normal(f_eval.shape[0])
            return data, X_eval, f_eval + noise
        return data, X_eval, f_eval
    data = base
    if cfg.target == "noiseless" and data.f_true is not None:
        return data, data.X, data.f_true
    return data, data.X, data.y


def _schedule(cfg: ExperimentConfig, n: int):
    """(eta, theta, batch, iterations, default m list)."""
    if cfg.regime is not None:
        s = regime_schedule(RegimeParams(cfg.regime, cfg.zeta, cfg.gamma), n)
        iters = cfg.iters if cfg.iters is not None else s.iterations
        eta = cfg.eta if cfg.eta is not None else s.eta
        return eta, s.theta, s.batch_size, iters, (s.m,)
    eta = cfg.eta if cfg.eta is not None else 1.0 / (8 * n)
    iters = cfg.iters if cfg.iters is not None else math.ceil(cfg.epochs * n / cfg.batch)
    return eta, cfg.theta, cfg.batch, iters, ()


def run_trial(cfg: ExperimentConfig, m: int, trial: int, base: Optional[Dataset] = None) -> list[tuple]:
    trial_seed = cfg.seed + trial
    data, X_eval, targets = _trial_data(cfg, trial_seed, base)
    eta, theta, b, iters, _ = _schedule(cfg, data.n)
    kernel = cfg.kernel_spec()
    fac = build_factor(kernel, data.X, m, cfg.landmarks, rng=[trial_seed, 4], rtol=cfg.rtol)
    tc = TrainConfig(
        eta1=eta,
        iterations=iters,
        theta=theta,
        batch_size=b,
        seed=stream_seed(trial_seed),
        snapshot_stride=cfg.stride,
        storage=cfg.storage,
    )
    traj = train(tc, data, fac)
    pred_train = traj.predict_all(data.X)
    pred_eval = traj.predict_all(X_eval)
    emp = np.mean((pred_train - data.y) ** 2, axis=1)
    gen = np.mean((pred_eval - targets) ** 2, axis=1)
    rows = []
    for k, t in enumerate(traj.iterations):
        epochs, passes = traj.passes()[k]
        rows.append((m, trial, t, epochs, passes, float(emp[k]), float(gen[k])))
    return rows


def _run_trial_job(args):
    return run_trial(*args)


@dataclass
class ExperimentReport:
    raw: list
    aggregate: list
    config: ExperimentConfig

    def best_by_m(self) -> dict:
        """Minimum over snapshots of the mean generalization error, per m."""
        best = {}
        for row in self.aggregate:
            m, err = row[0], row[4]
            best[m] = min(best.get(m, math.inf), err)
        return best


def aggregate(raw: list) -> list:
    groups = defaultdict(list)
    for row in raw:
        groups[(row[0], row[2])].append(row)
    out = []
    for (m, t), rows in sorted(groups.items()):
        gen = np.array([r[6] for r in rows])
        emp = np.array([r[5] for r in rows])
        std = float(np.std(gen, ddof=1)) if gen.size > 1 else float("nan")
        out.append((m, t, rows[0][3], rows[0][4], float(np.mean(gen)), std, float(np.mean(emp))))
    return out


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def prepare_out_dir(out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".write-probe"
    probe.write_text("")
    probe.unlink()
    return path


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """All (m, trial) runs, raw and aggregate rows, and CSV files if ``cfg.out`` is set."""
    out_dir = prepare_out_dir(cfg.out) if cfg.out else None
    base = load_csv(cfg.csv) if cfg.csv else None
    n = base.n if base is not None else cfg.n
    m_list = cfg.m or _schedule(cfg, n)[4]
    if not m_list:
        raise ConfigError("m: at least one subsampling level is required")
    for m in m_list:
        if not 1 <= m <= n:
            raise ConfigError(f"m: every m must satisfy 1 <= m <= n={n}, got {m}")
    jobs = [(cfg, m, trial, base) for m in m_list for trial in range(cfg.trials)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_trial_job, jobs))
    else:
        results = [_run_trial_job(j) for j in jobs]
    raw = sorted(row for rows in results for row in rows)
    report = ExperimentReport(raw, aggregate(raw), cfg)
    if out_dir is not None:
        write_rows(out_dir / "raw.csv", RAW_COLUMNS, report.raw)
        write_rows(out_dir / "aggregate.csv", AGGREGATE_COLUMNS, report.aggregate)
        with open(out_dir / "config.txt", "w", encoding="utf-8") as fh:
            for k, v in cfg.as_record().items():
                if v is not None:
                    fh.write(f"{k}={v}\n")
    return report


# ----------------------------------------------------------------------------
# cv


@dataclass
class CVReport:
    chosen_eta: float
    rows: list  # (eta, val_mse, test_error, chosen)


def run_cv(cfg: ExperimentConfig, val_frac: float = 0.5, grid=None, M=None) -> CVReport:
    if not 0 < val_frac < 1:
        raise ConfigError(f"val_frac: must lie in (0, 1), got {val_frac}")
    if grid is not None and len(grid) == 0:
        raise ConfigError("grid: step-size grid is empty")
    trial_seed = cfg.seed
    base = load_csv(cfg.csv) if cfg.csv else None
    data, X_eval, targets = _trial_data(cfg, trial_seed, base)
    perm = np.random.default_rng([trial_seed, 5]).permutation(data.n)
    n_val = int(round(val_frac * data.n))
    if not 1 <= n_val < data.n:
        raise ConfigError(f"val_frac: leaves {data.n - n_val} training and {n_val} validation points")
    val, tr = data.subset(np.sort(perm[:n_val])), data.subset(np.sort(perm[n_val:]))
    eta, theta, b, iters, default_m = _schedule(cfg, tr.n)
    m_list = cfg.m or default_m
    if len(m_list) != 1:
        raise ConfigError("m: cv takes exactly one subsampling level")
    m = m_list[0]
    if not 1 <= m <= tr.n:
        raise ConfigError(f"m: must satisfy 1 <= m <= {tr.n} training points")
    if grid is None:
        grid = [1 / (2 * tr.n), 1 / (8 * tr.n), 1 / (32 * tr.n)]
    if M is None:
        M = float(np.max(np.abs(tr.y)))
    fac = build_factor(cfg.kernel_spec(), tr.X, m, cfg.landmarks, rng=[trial_seed, 4], rtol=cfg.rtol)
    template = TrainConfig(
        eta1=grid[0], iterations=iters, batch_size=b, seed=stream_seed(trial_seed), storage=cfg.storage
    )
    res = cross_validate_step_size(CVConfig(list(grid), M, val), tr, fac, template)
    rows = []
    for g_eta, val_mse in res.table:
        model = TruncatedPredictor(res.trajectories[g_eta].final, M)
        rows.append((g_eta, val_mse, generalization_error(model, X_eval, targets), int(g_eta == res.eta)))
    return CVReport(res.eta, rows)


# ----------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, *, experiment: bool = True) -> None:
    p.add_argument("--config", help="key=value configuration file; flags override it")
    p.add_argument("--n", type=int, help="toy sample size")
    p.add_argument("--csv", help="train on this CSV dataset instead of toy data")
    p.add_argument("--m", type=int, action="append", help="subsampling level (repeatable)")
    p.add_argument("--seed", type=int, help="base seed; trial k uses seed + k")
    p.add_argument("--eta", type=_fraction, help="initial step size eta1 (accepts a/b)")
    p.add_argument("--theta", type=float, help="decay exponent: eta_t = eta1 * t^-theta")
    p.add_argument("--batch", type=int, help="mini-batch size b")
    p.add_argument("--iters", type=int, help="number of iterations T")
    p.add_argument("--epochs", type=float, help="iterations as epochs b*T/n when --iters is absent")
    p.add_argument("--stride", type=int, help="iterations between snapshots (default: one epoch)")
    p.add_argument("--regime", choices=REGIMES, help="take eta, b, T and m from a parameter regime")
    p.add_argument("--zeta", type=float, help="source exponent for cor1 regimes")
    p.add_argument("--gamma", type=float, help="capacity exponent for cor1 regimes")
    p.add_argument("--kernel", choices=("gaussian", "linear", "polynomial"))
    p.add_argument("--sigma", type=float, help="gaussian bandwidth")
    p.add_argument("--degree", type=int)
    p.add_argument("--offset", type=float)
    p.add_argument("--kappa", type=float, help="bound on sqrt(K(x,x)) for non-gaussian kernels")
    p.add_argument("--eval-points", type=int, help="size of the evaluation measure")
    p.add_argument("--eval-mode", choices=("grid", "random"))
    p.add_argument("--target", choices=("noisy", "noiseless"))
    p.add_argument("--landmarks", choices=STRATEGIES)
    p.add_argument("--storage", choices=STORAGE_STRATEGIES)
    p.add_argument("--rtol", type=float, help="relative eigenvalue cutoff for the pseudo-inverse")
    if experiment:
        p.add_argument("--trials", type=int)
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--preset", choices=("toy",), help="the toy benchmark setup (n=100, 50 trials)")
    p.add_argument("--out", help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nysgm", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a toy dataset to CSV")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train one model and write its error curve")
    _add_common(t, experiment=False)

    e = sub.add_parser("experiment", help="repeated trials over subsampling levels")
    _add_common(e)

    c = sub.add_parser("cv", help="hold-out selection of the step size")
    _add_common(c, experiment=False)
    c.add_argument("--val-frac", type=float, default=0.5)
    c.add_argument("--grid", type=_fraction, action="append", help="candidate step size (repeatable)")
    c.add_argument("--truncate", type=float, help="truncation level M (default: max |y| on the training split)")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    flags = {k: v for k, v in vars(args).items() if v is not None}
    if flags.get("preset") == "toy":
        values.update(TOY_PRESET)
    if "config" in flags:
        file_values = read_config_file(flags["config"])
        if file_values.get("preset") == "toy":
            values.update(TOY_PRESET)
        values.update(file_values)
    values.update(flags)
    for key in ("config", "command", "val_frac", "grid", "truncate"):
        values.pop(key, None)
    return ExperimentConfig.from_mapping(values)


def _cmd_gen_data(args) -> int:
    data = gen_toy(args.n, args.seed)
    save_csv(data, args.out)
    print(f"wrote {data.n} rows to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = resolve_config(args)
    if len(cfg.m) > 1:
        raise ConfigError("m: train takes one subsampling level")
    base = load_csv(cfg.csv) if cfg.csv else None
    n = base.n if base is not None else cfg.n
    m_list = cfg.m or _schedule(cfg, n)[4]
    if not m_list:
        raise ConfigError("m: required unless --regime is given")
    if not 1 <= m_list[0] <= n:
        raise ConfigError(f"m: must satisfy 1 <= m <= n={n}")
    rows = run_trial(cfg, m_list[0], 0, base)
    header = RAW_COLUMNS[2:]
    body = [r[2:] for r in rows]
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        write_rows(cfg.out, header, body)
    last = rows[-1]
    print(f"m={last[0]} T={last[2]} epochs={last[3]:g} emp_risk={last[5]:.6g} gen_error={last[6]:.6g}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = resolve_config(args)
    report = run_experiment(cfg)
    for m, err in sorted(report.best_by_m().items()):
        print(f"m={m:<5d} best mean gen error {err:.6g}")
    if cfg.out:
        print(f"wrote {cfg.out}/raw.csv and {cfg.out}/aggregate.csv")
    return 0


def _cmd_cv(args) -> int:
    cfg = resolve_config(args)
    report = run_cv(cfg, args.val_frac, args.grid, args.truncate)
    header = ("eta", "val_mse", "test_error", "chosen")
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        write_rows(cfg.out, header, report.rows)
    print(",".join(header))
    for row in report.rows:
        print(",".join(_fmt(v) for v in row))
    print(f"chosen eta = {report.chosen_eta:g}")
    return 0


COMMANDS = {"gen-data": _cmd_gen_data, "train": _cmd_train, "experiment": _cmd_experiment, "cv": _cmd_cv}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"nysgm: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"nysgm: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
