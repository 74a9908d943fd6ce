"""Command-line pipelines.

Every run writes its outputs plus ``manifest.json`` into the output
directory. Exit codes: 0 success, 2 configuration or validation error,
3 resource cap exceeded, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import io
from .bath import BathModel, bath_gf_lindblad_approx, discretize_bath
from .chain import g_sb_matsubara_k, site_matrix_retarded
from .config import ConfigError, ExperimentConfig
from .greens import GFKind, MatrixGreenFunction, UndersampledError
from .matsubara import MatsubaraSeries, matsubara_frequencies, pade_continue, pade_fit
from .oracle import DimensionCapError, FockOracle, FockOracleConfig, PropagationError, measure_gsb_from_oracle
from .reconstruct import NoiseModel, forward_dyson_scalar, monte_carlo_sensitivity, reconstruct_matrix, reconstruct_scalar
from .wick import DEFAULT_DEFECT_THRESHOLD, verify_wick

OUTPUT_ROOT_ENV = "GFRECON_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_NUMERICAL = 0, 2, 3, 4


class Run:
    """Collects stage timings and written files for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.stages: list[dict] = []
        self.files: list[Path] = []
        self.summary: dict = {}

    def stage(self, name: str):
        run = self

        class _Stage:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, exc_type, exc, tb):
                run.stages.append({"name": name, "status": "ok" if exc_type is None else "failed",
                                   "seconds": round(time.perf_counter() - self.start, 6)})
                return False

        return _Stage()

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def write_json(self, name: str, payload: dict):
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _finite(x):
    return None if x is None or not np.isfinite(x) else float(x)


# pipelines

def _bath_matrix_for_matrix(cfg, grid, n):
    return BathModel(cfg.spectral_density(), cfg.beta, n).lindblad_matrix_gf(grid)


def cmd_simulate(cfg: ExperimentConfig, run: Run):
    grid, eta, model = cfg.grid(), cfg.eta, cfg.chain()
    source = cfg.data.get("source", "analytic")
    j = cfg.spectral_density()
    with run.stage("model"):
        if source == "analytic":
            rates = model.rates(j)
            g_s0 = site_matrix_retarded(model, grid, None, eta)
            g_sb = site_matrix_retarded(model, grid, rates, eta)
            g_b0 = _bath_matrix_for_matrix(cfg, grid, model.n_sites)
        else:
            bath_cfg, ocfg = cfg.section("bath"), cfg.section("oracle")
            if "n_modes" not in bath_cfg or "band" not in bath_cfg:
                raise ConfigError("oracle scenarios need bath.n_modes and bath.band")
            bath = discretize_bath(j, bath_cfg["n_modes"], bath_cfg["band"])
            common = dict(fock_cut=ocfg.get("fock_cut", 8), chi=ocfg.get("chi", 0.0), beta=cfg.beta,
                          dimension_cap=ocfg.get("dimension_cap", 50_000))
            coupled = FockOracleConfig(model, baths=(bath,) * model.n_sites,
                                       lambda_b=ocfg.get("lambda_b", 1.0), **common)
            coupled.check_dimension()
            tg = cfg.time_grid()
            g_sb = measure_gsb_from_oracle(coupled, grid, tg, eta)
            g_s0 = measure_gsb_from_oracle(FockOracleConfig(model, **common), grid, tg, eta)
            g_b0 = MatrixGreenFunction.diagonal(bath.time_ordered_gf(grid, eta, tg), model.n_sites)
    with run.stage("write"):
        for name, g in (("g_s0.csv", g_s0), ("g_sb.csv", g_sb), ("g_b0.csv", g_b0)):
            io.write_matrix_gf(run.path(name), g)
    run.summary.update(source=source, n_sites=model.n_sites, n_points=len(grid))


def _read_any(path):
    with open(path) as fh:
        header = fh.readline().strip()
    if header == "omega,i,j,re,im":
        return io.read_matrix_gf(path)
    return io.read_scalar_gf(path)


def cmd_reconstruct(cfg: ExperimentConfig, run: Run):
    inputs = cfg.section("inputs")
    if not inputs:
        raise ConfigError("reconstruct needs an 'inputs' section")
    with run.stage("read"):
        g_sb = _read_any(cfg.resolve(inputs["g_sb"]))
        g_b0 = _read_any(cfg.resolve(inputs["g_b0"]))
        truth = _read_any(cfg.resolve(inputs["truth"])) if "truth" in inputs else None
        if type(g_sb) is not type(g_b0):
            raise ConfigError("G_SB and G_B0 must both be scalar or both be matrices")
        if g_sb.grid != g_b0.grid:
            raise ConfigError("G_SB and G_B0 are sampled on different grids")
    with run.stage("reconstruct"):
        if isinstance(g_sb, MatrixGreenFunction):
            result = reconstruct_matrix(g_sb, g_b0)
        else:
            result = reconstruct_scalar(g_sb, g_b0)
    g = result.g_s0_reconstructed
    with run.stage("write"):
        if isinstance(g, MatrixGreenFunction):
            io.write_matrix_gf(run.path("g_s0_reconstructed.csv"), g)
            io._write(run.path("condition.csv"), ("omega", "cond", "flag"),
                      zip(g.omega, result.condition_profile, result.flags.astype(float)))
        else:
            io.write_reconstruction(run.path("reconstruction.csv"), g, result.condition_profile, result.flags)
        run.summary["n_flagged"] = result.n_flagged
        if truth is not None:
            if truth.grid != g.grid or truth.values.shape != g.values.shape:
                raise ConfigError("truth does not match the reconstruction grid")
            diff = np.abs(g.values - truth.values).reshape(len(g.grid), -1).max(axis=1)
            scale = np.abs(truth.values).reshape(len(g.grid), -1).max(axis=1)
            rel = diff / np.where(scale > 0, scale, 1.0)
            io._write(run.path("error.csv"), ("omega", "abs_error", "rel_error", "flag"),
                      zip(g.omega, diff, rel, result.flags.astype(float)))
            keep = ~result.flags
            run.summary["max_rel_error_unflagged"] = float(rel[keep].max(initial=0.0))
    run.write_json("reconstruct_report.json", dict(run.summary))


def cmd_verify_wick(cfg: ExperimentConfig, run: Run):
    model, ocfg, wcfg = cfg.chain(), cfg.section("oracle"), cfg.section("wick")
    threshold = wcfg.get("threshold", DEFAULT_DEFECT_THRESHOLD)
    if "quadruples" in wcfg:
        quads = np.array(wcfg["quadruples"], float)
    else:
        rng = np.random.default_rng(cfg.require_seed())
        span = wcfg.get("t_span", 2.0)
        quads = rng.uniform(-span, span, size=(wcfg.get("n_random", 8), 4))
    ocfg_obj = FockOracleConfig(model, fock_cut=ocfg.get("fock_cut", 30), chi=ocfg.get("chi", 0.0),
                                beta=cfg.beta, dimension_cap=ocfg.get("dimension_cap", 50_000))
    with run.stage("oracle"):
        oracle = FockOracle(ocfg_obj)

        def two_time(ta, tb):
            return oracle.n_time([0, 0], [ta, tb])

        measured = np.array([oracle.n_time([0] * 4, q) for q in quads])
    with run.stage("verify"):
        report = verify_wick(measured, two_time, quads, threshold)
    with run.stage("write"):
        io.write_four_time(run.path("four_time.csv"), quads, measured)
        run.write_json("wick_report.json", report.to_dict())
    run.summary.update(report.to_dict())


def cmd_sensitivity(cfg: ExperimentConfig, run: Run):
    seed = cfg.require_seed()
    scfg = cfg.section("sensitivity")
    target = scfg.get("target", "bath")
    sigmas = np.array(scfg.get("sigmas", [1e-4, 1e-3, 1e-2]), float)
    n_trials = scfg.get("n_trials", 16)
    grid, model = cfg.grid(), cfg.chain()
    g_s0 = site_matrix_retarded(model, grid, None, cfg.eta).element(0, 0)
    g_b0 = bath_gf_lindblad_approx(cfg.spectral_density(), grid)
    g_b0 = g_b0.replace(kind=g_s0.kind, eta=g_s0.eta)
    g_sb = forward_dyson_scalar(g_s0, g_b0)
    rows = []
    with run.stage("monte_carlo"):
        for sigma in sigmas:
            mc = monte_carlo_sensitivity(g_s0, g_sb, g_b0, NoiseModel(target, sigma), n_trials, seed)
            err = float(np.mean([np.abs(e).max() for e in mc.errors]))
            res = float(np.mean([r.residual_norm for r in mc.reports]))
            rows.append((sigma, err, res, mc.spread))
    table = np.array(rows)
    positive = table[:, 0] > 0
    slope = None
    if positive.sum() >= 2 and np.all(table[positive, 2] > 0):
        slope = float(np.polyfit(np.log(table[positive, 0]), np.log(table[positive, 2]), 1)[0])
    with run.stage("write"):
        io._write(run.path("sensitivity.csv"), ("sigma", "mean_error", "mean_residual", "spread"), rows)
        run.summary.update(target=target, seed=seed, n_trials=n_trials, residual_slope=slope,
                           spread=[float(r[3]) for r in rows])
        run.write_json("sensitivity_report.json", dict(run.summary))


def _continuation_input(cfg: ExperimentConfig) -> MatsubaraSeries:
    c = cfg.section("continuation")
    if "input" in c:
        return io.read_matsubara(cfg.resolve(c["input"]))
    beta, n_max = c.get("beta", 5.0), c.get("n_max", 20)
    wn = matsubara_frequencies(beta, n_max)
    if "pole" in c:
        p = c["pole"]
        return MatsubaraSeries(beta, 1.0 / (1j * wn - p["position"] + 1j * p["width"]))
    if "constant" in c:
        re, im = c["constant"]
        return MatsubaraSeries(beta, np.full(n_max, re + 1j * im))
    model = cfg.chain()
    if model.n_sites != 1:
        raise ConfigError("the built-in chain continuation source needs n_sites = 1")
    rate = model.rates(cfg.spectral_density())[0]
    return MatsubaraSeries(beta, g_sb_matsubara_k(model, 1, rate, wn))


def cmd_continue(cfg: ExperimentConfig, run: Run):
    c = cfg.section("continuation")
    grid = cfg.grid()
    with run.stage("input"):
        series = _continuation_input(cfg)
    with run.stage("fit"):
        approx = pade_fit(series)
    with run.stage("continue"):
        g = pade_continue(approx, grid, cfg.eta, c.get("spurious_tol", 1e-3))
    spectral = -g.values.imag / np.pi
    with run.stage("write"):
        io.write_flagged_gf(run.path("continued.csv"), g)
        io.write_matsubara(run.path("matsubara_input.csv"), series.omega_n, series.values)
        run.summary.update(degree=approx.degree, node_residual=approx.node_residual,
                           fallback=approx.report, n_flagged=int(g.flags.sum()),
                           peak_omega=float(grid.omega[np.argmax(spectral)]))
        run.write_json("pade_report.json", dict(run.summary))


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "verify-wick": cmd_verify_wick,
    "sensitivity": cmd_sensitivity,
    "continue": cmd_continue,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfrecon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help=f"output directory (relative paths resolve against ${OUTPUT_ROOT_ENV})")
        p.add_argument("--threads", type=int, help="cap on BLAS/OpenMP worker threads")
    return parser


def _output_dir(arg_out, cfg_out, scenario) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    chosen = Path(arg_out or cfg_out or Path("runs") / scenario)
    return chosen if chosen.is_absolute() else root / chosen


def _inventory(files):
    out = []
    for p in files:
        if p.exists():
            out.append({"path": p.name, "bytes": p.stat().st_size,
                        "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    cfg, code, error = None, EXIT_OK, None
    out = _output_dir(args.out, None, "invalid")
    run = Run(out)
    try:
        cfg = ExperimentConfig.load(args.config).with_overrides(
            seed=args.seed, threads=args.threads)
        pipeline = cfg.data.get("pipeline", args.command)
        if pipeline != args.command:
            raise ConfigError(f"config pipeline '{pipeline}' does not match command '{args.command}'")
        out = _output_dir(args.out, cfg.data.get("output_dir"), cfg.data["scenario"])
        run.out = out
        out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(limits=cfg.data.get("threads")), warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            COMMANDS[args.command](cfg, run)
        run.summary["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    except DimensionCapError as exc:
        code, error = EXIT_CAP, str(exc)
    except (ConfigError, io.CSVFormatError, UndersampledError, FileNotFoundError, ValueError) as exc:
        code, error = EXIT_CONFIG, str(exc)
    except (np.linalg.LinAlgError, PropagationError, FloatingPointError, ArithmeticError) as exc:
        code, error = EXIT_NUMERICAL, str(exc)
    manifest = {
        "command": args.command,
        "config_hash": cfg.config_hash if cfg else None,
        "version": __version__,
        "wall_clock_seconds": round(time.perf_counter() - start, 6),
        "stages": run.stages,
        "outputs": _inventory(run.files),
        "exit_code": code,
        "error": error,
        "summary": run.summary,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    if error:
        print(f"error: {error}", file=sys.stderr)
    else:
        print(f"wrote {len(manifest['outputs'])} files to {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
