"""Batch runner: ``jacobiloc <command> --config FILE --out DIR``.

Commands: ``decay``, ``detcheck``, ``kernel-norms``, ``perturb``, ``chain-check``.
Every run writes its outputs plus ``manifest.json``; passing that manifest
back as ``--config`` reproduces the outputs byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerically inconclusive,
4 invariant violation (a check failed), 5 I/O error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig
from .io import OutputDir
from .kernels.operators import TruncationError
from .jacobian import IdentityReport, determinant_sweep, verify_eigen_identity
from .localization import fit_decay, perturb_construction, sample_matrix, table_from_samples
from .model import ModelConfig, SequenceSpec, sample_operator
from .tridiag import EigenSolverError, InvariantViolation, build_truncation, eigen_decompose

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3
EXIT_INVARIANT = 4
EXIT_IO = 5

CORRELATOR_COLUMNS = ("m", "n_ref", "mean", "stderr", "min", "max")
DET_TOL = 1e-6
IDENTITY_TOL = 1e-8


class InconclusiveRun(RuntimeError):
    pass


def _verdict_code(verdicts) -> int:
    verdicts = list(verdicts)
    if "FAIL" in verdicts:
        return EXIT_INVARIANT
    if "INCONCLUSIVE" in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# --- decay / perturb ----------------------------------------------------------


def _correlators(model: ModelConfig, cfg: ExperimentConfig, workers: int):
    m_values = cfg.m_values()
    n_refs = cfg["decay.n_ref"]
    values = sample_matrix(model, n_refs, m_values, workers)
    tables = [table_from_samples(values[:, j, :], n, m_values, model.L, model.fingerprint())
              for j, n in enumerate(n_refs)]
    fits = []
    for t in tables:
        try:
            fit = fit_decay(t, cfg["decay.fit_kind"], cfg["decay.zeta"], cfg["decay.fit_min"], cfg["decay.fit_max"])
        except ValueError as exc:
            raise InconclusiveRun(f"decay fit for n_ref={t.n_ref}: {exc}") from exc
        fits.append({"n_ref": t.n_ref, **fit.to_dict()})
    return tables, fits


def _write_correlators(out: OutputDir, tables, fits, fingerprint: str) -> None:
    out.csv("correlator.csv", CORRELATOR_COLUMNS, [row for t in tables for row in t.rows()])
    out.json("fit.json", {"fingerprint": fingerprint, "fits": fits})


def run_decay(cfg: ExperimentConfig, out: OutputDir, workers: int = 1, refine: bool = False) -> int:
    model = cfg.model()
    tables, fits = _correlators(model, cfg, workers)
    _write_correlators(out, tables, fits, model.fingerprint())
    return EXIT_OK


def run_perturb(cfg: ExperimentConfig, out: OutputDir, workers: int = 1, refine: bool = False) -> int:
    """Random family around ``J(a, b)`` with ``b = model.c`` and the model density scaled by ``perturb.scale``."""
    base = cfg.model()
    eps = cfg["perturb.eps"]
    try:
        model = perturb_construction(base.a_spec, base.c_spec, eps, base.density.scaled(cfg["perturb.scale"]),
                                     base.L, base.master_seed, base.samples)
    except ValueError as exc:
        raise ConfigError(f"perturb: {exc}") from exc
    target = base.c_spec(model.sites)
    rows, worst = [], 0.0
    for i in range(model.samples):
        s = sample_operator(model, i)
        dist = float(np.max(np.abs(s.b - target)))
        worst = max(worst, dist)
        rows.append((i, s.seed, dist, eps, dist < eps))
    out.csv("perturb.csv", ("sample", "seed", "max_distance", "eps", "within"), rows)
    tables, fits = _correlators(model, cfg, workers)
    _write_correlators(out, tables, fits, model.fingerprint())
    return EXIT_OK if worst < eps else EXIT_INVARIANT


# --- detcheck -----------------------------------------------------------------


def eigen_identity_sweep(model: ModelConfig) -> IdentityReport:
    report = IdentityReport()
    for i in range(model.samples):
        s = sample_operator(model, i)
        report = report.merge(verify_eigen_identity(eigen_decompose(build_truncation(s)), s.a))
    return report


def run_detcheck(cfg: ExperimentConfig, out: OutputDir, workers: int = 1, refine: bool = False) -> int:
    base = cfg.model()
    sweep = determinant_sweep(
        cfg["detcheck.instances"], cfg["detcheck.L_max"], base.master_seed, cfg["detcheck.h"],
        (cfg["detcheck.x_lo"], cfg["detcheck.x_hi"]), (cfg["detcheck.a_lo"], cfg["detcheck.a_hi"]),
    )
    eig_model = ModelConfig(base.density, base.a_spec, base.c_spec, base.d_spec, cfg["detcheck.eigen_L"],
                            base.master_seed, cfg["detcheck.eigen_samples"])
    rep = eigen_identity_sweep(eig_model)
    ok = lambda err, tol: "PASS" if err <= tol else "FAIL"  # noqa: E731
    rows = [
        ("det_recursive_vs_numeric", sweep.max_rel_error, DET_TOL, sweep.instances - sweep.skipped, sweep.skipped,
         ok(sweep.max_rel_error, DET_TOL)),
        ("det_vs_phi0", rep.det_vs_phi0, IDENTITY_TOL, rep.checked, rep.skipped, ok(rep.det_vs_phi0, IDENTITY_TOL)),
        ("partial_sums", rep.partial_sums, IDENTITY_TOL, rep.checked, rep.skipped, ok(rep.partial_sums, IDENTITY_TOL)),
        ("ratio_products", rep.ratio_products, IDENTITY_TOL, rep.checked, rep.skipped,
         ok(rep.ratio_products, IDENTITY_TOL)),
    ]
    out.csv("detcheck.csv", ("identity", "max_rel_error", "tolerance", "checked", "skipped", "verdict"), rows)
    return _verdict_code(r[-1] for r in rows)


# --- kernel-norms -------------------------------------------------------------

PARAM_COLUMNS = ("n", "alpha", "beta")


def _cert_row(cert):
    from .kernels.norms import CERTIFICATE_COLUMNS

    row = cert.row()
    return tuple(row[c] for c in CERTIFICATE_COLUMNS) + tuple(cert.params.get(p) for p in PARAM_COLUMNS)


def run_kernel_norms(cfg: ExperimentConfig, out: OutputDir, workers: int = 1, refine: bool = False) -> int:
    from .kernels.bounds import (
        a_table, default_mesh, fit_gamma_prime, hs_norm_evidence, norm_suite, product_check,
        sweep_energies, verify_A_bound,
    )
    from .kernels.fourier import find_C0, fourier_profile
    from .kernels.norms import CERTIFICATE_COLUMNS
    from .kernels.operators import KernelParams

    model = cfg.model()
    mesh = default_mesh(cfg["kernel.grid.X"], cfg["kernel.grid.h"], cfg["kernel.grid.grade_from"])
    alphas = sweep_energies(model, cfg["kernel.energies"])
    sites = tuple(cfg["kernel.sites"])
    profile = fourier_profile(model.density, cfg["kernel.k_max"], cfg["kernel.dk"])
    c0 = find_C0(cfg["kernel.g1_plateau"], cfg["kernel.g1_support"], model.a_sup, model.delta)

    certs = list(verify_A_bound(model, alphas, alphas, sites, mesh, refine, profile, c0.C0).certificates)
    if cfg["kernel.suite"]:
        certs += norm_suite(model, alphas, sites, mesh, refine)
    out.csv("certificates.csv", CERTIFICATE_COLUMNS + PARAM_COLUMNS, [_cert_row(c) for c in certs])

    zeta = cfg["kernel.product.zeta"]
    A = a_table(profile, SequenceSpec.power(cfg["kernel.product.C"], zeta), c0.C0, model.a_sup,
                cfg["kernel.product.s_max"])
    gamma = fit_gamma_prime(A, zeta)
    prod = product_check(A, gamma, zeta)
    out.csv("product.csv", ("s", "A", "pointwise_bound", "product", "product_bound", "pointwise_ok", "product_ok"),
            [(r.s, r.A, r.pointwise_bound, r.product, r.product_bound, r.pointwise_ok, r.product_ok) for r in prod])

    k_far = profile.k >= 0.05
    summary = {
        "fingerprint": model.fingerprint(),
        "C0": c0.C0, "I1": c0.I1, "I2": c0.I2, "B": c0.B, "C0_condition": c0.lhs,
        "q": max(c.bound for c in certs if c.operator.startswith("T^(") and ")T^(" in c.operator),
        "gamma_prime": gamma, "zeta": zeta,
        "rhat0": float(profile.rhat[0].real),
        "max_modulus_far": float(np.max(np.abs(profile.rhat[k_far]))),
        "curvature": profile.curvature, "curvature_moments": profile.curvature_moments,
        "mesh": mesh.describe(), "refine": refine,
    }
    verdicts = [c.verdict for c in certs]
    verdicts.append("PASS" if all(r.pointwise_ok and r.product_ok for r in prod) else "FAIL")
    if cfg["kernel.hs"]:
        hs = hs_norm_evidence(KernelParams(sites[0], 0.0, model.a_spec, model.d_spec, model.density),
                              KernelParams(sites[0] + 1, 0.0, model.a_spec, model.d_spec, model.density),
                              mesh, refine)
        summary["hs"] = {"value": hs.value, "refined_value": hs.refined_value, "opnorm": hs.opnorm,
                         "relative_change": hs.relative_change, "verdict": hs.verdict}
        verdicts.append(hs.verdict)
    out.json("constants.json", summary)
    return _verdict_code(verdicts)


# --- chain-check --------------------------------------------------------------

CHAIN_COLUMNS = ("L", "m", "mc_mean", "mc_stderr", "samples", "quadrature", "quadrature_refined",
                 "quadrature_tol", "prefactor", "slack", "verdict")


def run_chain_check(cfg: ExperimentConfig, out: OutputDir, workers: int = 1, refine: bool = False) -> int:
    """The quadrature tolerance always comes from a grid-doubling pass, so ``refine`` is implied."""
    from .kernels.chain import rho_chain_check
    from .kernels.grid import CellMesh

    model = cfg.model()
    mesh = CellMesh.graded(cfg["chain.grid.X"], cfg["chain.grid.h"], pivot=1.0,
                           grade_from=cfg["chain.grid.grade_from"])
    rows = []
    for L, m in cfg.chain_cases():
        r = rho_chain_check(model, L, m, mesh, cfg["chain.panels"], cfg["chain.samples"], True, workers)
        rows.append((r.L, r.m, r.mc_mean, r.mc_stderr, r.samples, r.quadrature, r.quadrature_refined,
                     r.quadrature_tol, r.prefactor, r.slack, r.verdict))
    out.csv("chain.csv", CHAIN_COLUMNS, rows)
    return _verdict_code(r[-1] for r in rows)


COMMANDS = {
    "decay": run_decay,
    "detcheck": run_detcheck,
    "kernel-norms": run_kernel_norms,
    "perturb": run_perturb,
    "chain-check": run_chain_check,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML config or a previous run's manifest.json")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    common.add_argument("--seed-override", type=int, default=None, help="replace model.master_seed")
    common.add_argument("--refine", action="store_true", help="re-run kernel estimates on the (2X, h/2) grid")
    parser = argparse.ArgumentParser(prog="jacobiloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed_override is not None:
            cfg = cfg.with_seed(args.seed_override)
        cfg.model()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = OutputDir(args.out)
        code = COMMANDS[args.command](cfg, out, args.workers, args.refine)
        out.manifest(args.command, cfg.to_tree(), cfg.model().fingerprint())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InconclusiveRun, TruncationError) as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (InvariantViolation, EigenSolverError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
