"""Command-line entry point: ``rvlab <subcommand> [--config FILE] ...``.

Exit status is 0 when every check passes, 1 on a numerical failure and 2 on
structural problems (bad config, missing files, degenerate input).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import scipy.fft

from . import __version__
from .beltrami import BeltramiField, BeltramiNormError, solve_beltrami
from .config import DATA_DIR, DEFAULTS, ExperimentConfig, load_config
from .corrected import GluingDescription, SkinningOperator, corrected_hessian, gluing_identity_check
from .cusp import cusp_decay_report, standard_profiles
from .fuchsian import MoebiusMap, StructuralError, octagon_group, rq_basis
from .grid import Grid, read_grid, write_grid
from .hessian import HessianLab, LabConfig, TangentPair, lemma_targets
from .infinity import CriticalPointError, schwarzian
from .surface import (
    DegenerateMetricError,
    FlowPolicy,
    StiffnessError,
    octagon_mesh,
    random_perturbation,
    read_mesh,
    ricci_flow,
    w_conformal_change,
    w_path_change,
)

log = logging.getLogger("rvlab")

EXIT_PASS, EXIT_FAIL, EXIT_STRUCTURAL = 0, 1, 2


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, Path):
        return str(x)
    return x


def write_summary(cfg: ExperimentConfig, name: str, passed: bool, results: dict) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema": 1,
        "subcommand": cfg.subcommand,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "tolerances": {k: v for k, v in cfg.params.items() if "tol" in k or k in ("slack", "consistency")},
        "params": cfg.params,
        "status": "PASS" if passed else "FAIL",
        "results": results,
        "version": __version__,
    }
    path = cfg.output_dir / f"{name}.json"
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


def _load_surface(cfg: ExperimentConfig):
    if cfg["mesh"] == "builtin:octagon":
        return octagon_mesh(int(cfg["mesh_k"]))[0]
    return read_mesh(cfg.resolve_path(cfg["mesh"]))


def cmd_ricci_flow(cfg: ExperimentConfig) -> bool:
    s = _load_surface(cfg)
    rng = np.random.default_rng(cfg.seed)
    if cfg["amplitude"] > 0:
        s = s.with_phi(s.phi + random_perturbation(s, float(cfg["amplitude"]), rng))
    policy = FlowPolicy(
        dt=cfg["dt"],
        dt_max=cfg["dt_max"],
        tol=cfg["tol"],
        max_steps=int(cfg["max_steps"]),
        consistency=cfg["consistency"],
        slack=cfg["slack"],
    )
    trace = ricci_flow(s, policy)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    trace.write_csv(cfg.output_dir / "ricci_flow.csv", f"config_hash={cfg.config_hash()} tol={cfg['tol']} slack={cfg['slack']}")
    summ = trace.summary()
    dW = trace.column("dW")[1:]
    pred = trace.column("dW_predicted")[1:]
    mismatch = float(np.max(np.abs(dW - pred) / np.abs(pred))) if len(pred) else 0.0
    checks = {
        "converged": trace.reason == "converged",
        "monotone": summ["min_dW"] >= -cfg["slack"],
        "gauss_bonnet": summ["gauss_bonnet_max"] < cfg["gauss_bonnet_tol"],
        "area": summ["area_drift"] < cfg["area_tol"],
        "rate_formula": mismatch < 0.05,
    }
    summ.update({"vertices": s.n_vertices, "checks": checks, "max_rate_mismatch": mismatch, "csv": "ricci_flow.csv"})
    passed = all(checks.values())
    write_summary(cfg, "ricci_flow", passed, summ)
    return passed


def cmd_wvol(cfg: ExperimentConfig) -> bool:
    s = _load_surface(cfg)
    rng = np.random.default_rng(cfg.seed)
    u = random_perturbation(s, float(cfg["amplitude"]), rng)
    mid = 0.5 * u + random_perturbation(s, 0.5 * float(cfg["amplitude"]), rng)
    n = int(cfg["nodes"])
    straight = w_conformal_change(s, u, n)
    bent = w_path_change(s, [mid, u], n)
    c = float(cfg["shift"])
    shift = w_conformal_change(s, np.full(s.n_vertices, c), n).value
    expect = -np.pi * s.chi * c / 2
    res = {
        "straight": straight.value,
        "straight_error": straight.error,
        "two_segment": bent,
        "path_difference": abs(straight.value - bent),
        "shift": shift,
        "shift_expected": expect,
        "shift_error": abs(shift - expect),
    }
    passed = res["path_difference"] < cfg["tol"] and res["shift_error"] < cfg["tol"]
    write_summary(cfg, "wvol", passed, res)
    return passed


def _oracle_mu(name: str, n: int, half_width: float, supersample: int):
    g = Grid.square(n, half_width)
    if name == "disk-half-z-over-zbar":

        def fn(z):
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(np.abs(z) < 1, 0.5 * z / np.conj(z), 0)

        return BeltramiField.from_function(fn, g, supersample), lambda z: z * np.abs(z) ** 2
    if name == "zero":
        return BeltramiField(g, np.zeros((n, n), complex)), lambda z: z
    return None, None


def cmd_beltrami_solve(cfg: ExperimentConfig) -> bool:
    mu, exact = _oracle_mu(cfg["mu"], int(cfg["n"]), float(cfg["half_width"]), int(cfg["supersample"]))
    if mu is None:
        try:
            g, samples, _ = read_grid(cfg.resolve_path(cfg["mu"]))
        except ValueError as exc:
            raise StructuralError(str(exc)) from exc
        mu = BeltramiField(g, samples[0] if samples.ndim == 3 else samples)
    f = solve_beltrami(mu, extrapolate=bool(cfg["extrapolate"]))
    g = mu.grid
    Z = g.points()
    res = {k: v for k, v in f.info.items() if k != "grid"}
    res["grid"] = g.as_dict()
    passed = True
    if exact is not None:
        ins = np.abs(Z) < 1 if cfg["mu"] != "zero" else np.ones(Z.shape, bool)
        ex = exact(Z)
        err = float(np.sqrt(np.sum(np.abs(f.samples - ex)[ins] ** 2) / np.sum(np.abs(ex[ins]) ** 2)))
        res["oracle_relative_l2"] = err
        passed = err < cfg["tol"]
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "beltrami_f.grid"
    write_grid(out, g, np.stack([f.samples, f.fz_samples, f.fzbar_samples]), {"components": ["f", "f_z", "f_zbar"], "config_hash": cfg.config_hash(), **_jsonable(res)})
    res["grid_file"] = out.name
    write_summary(cfg, "beltrami_solve", passed, res)
    return passed


def cmd_schwarzian(cfg: ExperimentConfig) -> bool:
    rng = np.random.default_rng(cfg.seed)
    method = cfg["method"]
    z = rng.uniform(-1, 1, 20) + 1j * rng.uniform(0.5, 2, 20)
    res = {}
    worst = 0.0
    for _ in range(100):
        m = rng.standard_normal(4)
        while abs(m[0] * m[3] - m[1] * m[2]) < 0.2:
            m = rng.standard_normal(4)
        det = m[0] * m[3] - m[1] * m[2]
        A = MoebiusMap(*(m / np.sqrt(abs(det)) if det > 0 else np.array([m[1], m[0], m[3], m[2]]) / np.sqrt(abs(det))))
        pts = z[np.abs(A.c * z + A.d) > 0.3]
        worst = max(worst, float(np.max(np.abs(schwarzian(A, pts, method=method, radius=0.1).S))))
    res["mobius_sup"] = worst
    res["z2_at_1"] = complex(schwarzian(lambda w: w**2, [1.0], method=method).S[0])
    res["exp_sup_error"] = float(np.max(np.abs(schwarzian(np.exp, z, method=method).S + 0.5)))
    g = lambda w: np.exp(w)  # noqa: E731
    f = lambda w: w**2 + 0.5 * w  # noqa: E731
    lhs = schwarzian(lambda w: g(f(w)), z, method=method).S
    fp = 2 * z + 0.5
    rhs = schwarzian(g, f(z), method=method).S * fp**2 + schwarzian(f, z, method=method).S
    res["chain_rule_residual"] = float(np.max(np.abs(lhs - rhs)))
    passed = (
        worst < cfg["tol"]
        and abs(res["z2_at_1"] + 1.5) < 1e-6
        and res["exp_sup_error"] < 1e-6
        and res["chain_rule_residual"] < 1e-6
    )
    write_summary(cfg, "schwarzian", passed, res)
    return passed


def cmd_hessian_lab(cfg: ExperimentConfig) -> bool:
    k = int(cfg["basis_size"])
    if k < 1:
        raise StructuralError("basis size must be positive")
    kind = cfg["direction"].replace("-", "_")
    if kind not in ("one_sided", "antidiagonal", "diagonal"):
        raise StructuralError(f"unknown direction {cfg['direction']!r}")
    basis = rq_basis(octagon_group(), k, cutoff=int(cfg["cutoff"]))
    lab = HessianLab(LabConfig(n=int(cfg["n"]), half_width=float(cfg["half_width"]), amplitudes=tuple(cfg["fd_steps"])))
    rows = []
    passed = True
    for v in basis:
        pair = getattr(TangentPair, kind)(v)
        resp = lab.dii0_linear_response(pair)
        tp, tm = lemma_targets(lab, pair)
        vn = lab.norm(lab.tensor(v))
        hess = lab.vr_hessian_fd(pair, resp)
        if kind == "diagonal":
            scale = 0.25 * vn
            err_p, err_m = lab.norm(resp.plus) / scale, lab.norm(resp.minus) / scale
            h_target, h_scale = 0.0, 0.25 * vn**2
        else:
            err_p, err_m = lab.relative_error(resp.plus, tp), lab.relative_error(resp.minus, tm)
            h_target = -0.25 * (lab.inner(lab.tensor(pair.plus), tp) + lab.inner(lab.tensor(pair.minus), tm))
            h_scale = abs(h_target)
        h_err = abs(hess - h_target) / h_scale
        _, proj = lab.project(resp.plus, basis) if kind != "diagonal" else (None, 0.0)
        ok = err_p < cfg["tol"] and err_m < cfg["tol"] and h_err < cfg["hessian_tol"]
        passed &= ok
        rows.append(
            {
                "direction": pair.label,
                "amplitudes": list(resp.amplitudes),
                "richardson_table": resp.table,
                "relative_error_plus": err_p,
                "relative_error_minus": err_m,
                "projection_residual": proj,
                "hessian": hess,
                "hessian_target": h_target,
                "hessian_relative_error": h_err,
                "norm_sq": vn**2,
                "pass": ok,
            }
        )
    write_summary(cfg, "hessian_lab", passed, {"lab": lab.config.as_dict(), "directions": rows})
    return passed


def cmd_corrected_vr(cfg: ExperimentConfig) -> bool:
    g = GluingDescription.load(cfg.resolve_path(cfg["gluing"]))
    rep = gluing_identity_check(g, tol=cfg["tol"])
    rng = np.random.default_rng(cfg.seed)
    dim = int(cfg["dim"])
    worst = np.inf
    for _ in range(int(cfg["operators"])):
        op = SkinningOperator.from_spectrum(rng.uniform(-0.99, 0.99, dim), rng)
        for v in rng.standard_normal((int(cfg["trials"]), dim)):
            worst = min(worst, corrected_hessian(op, v).value / float(v @ v))
    lam = np.concatenate([[1.2], rng.uniform(-0.9, 0.9, dim - 1)])
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    planted = SkinningOperator(q @ np.diag(lam) @ q.T)
    planted_val = corrected_hessian(planted, q[:, 0]).value
    res = {
        "gluing": rep.as_dict(),
        "min_normalized_hessian": worst,
        "planted_eigenvalue": 1.2,
        "planted_hessian": planted_val,
    }
    passed = rep.passed and worst > 0 and planted_val <= 0
    write_summary(cfg, "corrected_vr", passed, res)
    return passed


def cmd_cusp_decay(cfg: ExperimentConfig) -> bool:
    reports = []
    passed = True
    for p in standard_profiles(float(cfg["r_inf"]), float(cfg["s_max"]), int(cfg["samples"])):
        r = cusp_decay_report(p)
        ok = r.status == "PASS"
        if p.rate is not None:
            ok &= r.exp_rate is not None and abs(r.exp_rate - p.rate) <= cfg["rate_tol"] * p.rate
        passed &= ok
        reports.append({**r.as_dict(), "expected_rate": p.rate, "pass": ok})
    write_summary(cfg, "cusp_decay", passed, {"profiles": reports})
    return passed


COMMANDS = {
    "ricci-flow": cmd_ricci_flow,
    "wvol": cmd_wvol,
    "beltrami-solve": cmd_beltrami_solve,
    "schwarzian": cmd_schwarzian,
    "hessian-lab": cmd_hessian_lab,
    "corrected-vr": cmd_corrected_vr,
    "cusp-decay": cmd_cusp_decay,
}


def cmd_selftest(cfg: ExperimentConfig) -> bool:
    """Run every subcommand on the shipped quick configs."""
    results = {}
    for name in [c for c in COMMANDS if c != "selftest"]:
        sub = load_config(DATA_DIR / "selftest" / f"{name}.toml", name, output_dir=cfg.output_dir / name, seed=cfg.seed)
        ok = COMMANDS[name](sub)
        results[name] = "PASS" if ok else "FAIL"
        log.info("selftest %s: %s", name, results[name])
    passed = all(v == "PASS" for v in results.values())
    write_summary(cfg, "selftest", passed, results)
    return passed


COMMANDS["selftest"] = cmd_selftest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rvlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in DEFAULTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        if name == "hessian-lab":
            p.add_argument("--direction", choices=["one-sided", "antidiagonal", "diagonal"])
            p.add_argument("--basis-size", type=int, dest="basis_size")
        if name in ("ricci-flow", "wvol"):
            p.add_argument("--mesh")
        if name == "ricci-flow":
            p.add_argument("--tol", type=float)
            p.add_argument("--max-steps", type=int, dest="max_steps")
            p.add_argument("--dt", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "out", "seed", "subcommand", "verbose") and v is not None}
    try:
        cfg = load_config(args.config, args.subcommand, overrides, args.out, args.seed)
        workers = int(os.environ.get("RVLAB_THREADS", "1"))
        with scipy.fft.set_workers(workers):
            passed = COMMANDS[args.subcommand](cfg)
    except (StructuralError, BeltramiNormError, CriticalPointError, DegenerateMetricError, FileNotFoundError) as exc:
        print(f"rvlab: structural error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL
    except StiffnessError as exc:
        print(f"rvlab: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"{args.subcommand}: {'PASS' if passed else 'FAIL'} (config {cfg.config_hash()}, output {cfg.output_dir})")
    return EXIT_PASS if passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
