"""Monte Carlo experiments confronting the asymptotic theory with simulation.

Each experiment draws independent replicates of one model and evaluates a
set of targets against closed-form predictions at the finite-sample ratio
gamma_n = p/n (never at the limit ratio: centering there leaves an order
n^(-1/2) mean shift, which the dedicated centering target demonstrates):

- eval_clt:   studentized outlier eigenvalue vs the standard normal.
- evec_clt:   scaled eigenvector projections vs their covariance matrix.
- cosine:     mean squared eigenvector cosine vs its limit.
- quadform:   centered quadratic forms vs the theta*J + omega*K covariance,
              including a deliberately norm-unbounded direction where
              normality must FAIL (the statistic is an exact chi^2 there).
- centering_shift: mean shift from centering at the wrong aspect ratio.

Replicates are pure functions of (seed, replicate index); aggregation is
keyed by replicate index, so reports are byte-identical at any worker
count.  Replicates where an evaluation point sits too close to the noise
spectrum are excluded from statistics and counted, never silently dropped.
Whenever eigenvector/eigenvalue targets run, the exact Schur-complement
identities are verified on every replicate as a solver cross-check.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from functools import partial

import numpy as np
from scipy.special import ndtr

from ._version import __version__
from . import cumulants, spike_theory
from .errors import ConfigError, ResolventDomainError
from .model_gen import Dataset, SpikedModelSpec, generate, population_axes
from .spectra import RESOLVENT_GUARD, SchurEvaluator, decompose, quadform_residual

SCHUR_LABEL = "schur_identities"


def ks_normal(samples, loc: float = 0.0, scale: float = 1.0) -> float:
    """One-sample Kolmogorov-Smirnov distance to N(loc, scale^2).

    Uses the exact normal CDF (erf-based); no lookup tables.
    """
    z = np.sort((np.asarray(samples, dtype=float) - loc) / scale)
    n = len(z)
    if n == 0:
        raise ConfigError("KS statistic needs at least one sample")
    cdf = ndtr(z)
    grid = np.arange(1, n + 1) / n
    return float(max((grid - cdf).max(), (cdf - (grid - 1.0 / n)).max()))


# ---------------------------------------------------------------------------
# Targets


@dataclass(frozen=True)
class EvalCltTarget:
    nu: int  # 0-based spike index
    kind: str = field(default="eval_clt", init=False)

    @property
    def label(self) -> str:
        return f"eval_clt[{self.nu + 1}]"

    def to_config(self) -> dict:
        return {"kind": "eval_clt", "nu": self.nu + 1}


@dataclass(frozen=True)
class EvecCltTarget:
    nu: int
    kind: str = field(default="evec_clt", init=False)

    @property
    def label(self) -> str:
        return f"evec_clt[{self.nu + 1}]"

    def to_config(self) -> dict:
        return {"kind": "evec_clt", "nu": self.nu + 1}


@dataclass(frozen=True)
class CosineTarget:
    nu: int
    kind: str = field(default="cosine", init=False)

    @property
    def label(self) -> str:
        return f"cosine[{self.nu + 1}]"

    def to_config(self) -> dict:
        return {"kind": "cosine", "nu": self.nu + 1}


@dataclass(frozen=True)
class QuadformTarget:
    b_kind: str  # identity | resolvent | onatski_counterexample
    nu: int | None = None  # spike whose outlier location sets the resolvent point
    kind: str = field(default="quadform", init=False)

    def __post_init__(self):
        if self.b_kind not in ("identity", "resolvent", "onatski_counterexample"):
            raise ConfigError(f"unknown quadform B spec {self.b_kind!r}")
        if self.b_kind == "resolvent" and self.nu is None:
            raise ConfigError("resolvent B spec needs a spike index nu")

    @property
    def label(self) -> str:
        if self.b_kind == "resolvent":
            return f"quadform[resolvent:{self.nu + 1}]"
        return f"quadform[{self.b_kind}]"

    def to_config(self) -> dict:
        if self.b_kind == "resolvent":
            return {"kind": "quadform", "b_spec": {"kind": "resolvent", "nu": self.nu + 1}}
        return {"kind": "quadform", "b_spec": self.b_kind}


@dataclass(frozen=True)
class CenteringShiftTarget:
    nu: int
    gamma_limit: float  # the wrong (limit) ratio the diagnostic centers at
    kind: str = field(default="centering_shift", init=False)

    @property
    def label(self) -> str:
        return f"centering_shift[{self.nu + 1}]"

    def to_config(self) -> dict:
        return {"kind": "centering_shift", "nu": self.nu + 1, "gamma_limit": self.gamma_limit}


Target = EvalCltTarget | EvecCltTarget | CosineTarget | QuadformTarget | CenteringShiftTarget

_CLT_KINDS = ("eval_clt", "evec_clt", "quadform")
_SPECTRAL_KINDS = ("eval_clt", "evec_clt", "cosine", "centering_shift")
_IDENTITY_CHECK_KINDS = ("eval_clt", "evec_clt", "cosine")


def _parse_nu(obj: dict, model: SpikedModelSpec) -> int:
    if "nu" not in obj:
        raise ConfigError(f"target {obj.get('kind')!r} needs a 1-based spike index 'nu'")
    nu = int(obj["nu"])
    if not 1 <= nu <= model.m:
        raise ConfigError(f"nu={nu} out of range 1..{model.m}")
    return nu - 1


def target_from_config(obj: dict, model: SpikedModelSpec) -> Target:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"cannot parse target from {obj!r}")
    kind = obj["kind"]
    if kind == "eval_clt":
        nu = _parse_nu(obj, model)
        model.spectrum().require_supercritical(nu)
        return EvalCltTarget(nu)
    if kind == "evec_clt":
        nu = _parse_nu(obj, model)
        if model.m < 2:
            raise ConfigError("evec_clt needs m >= 2; the covariance is empty otherwise")
        model.spectrum().require_supercritical(nu)
        return EvecCltTarget(nu)
    if kind == "cosine":
        return CosineTarget(_parse_nu(obj, model))
    if kind == "quadform":
        b = obj.get("b_spec")
        if b in ("identity", "onatski_counterexample"):
            return QuadformTarget(b)
        if isinstance(b, dict) and b.get("kind") == "resolvent":
            nu = _parse_nu(b, model)
            model.spectrum().require_supercritical(nu)
            return QuadformTarget("resolvent", nu)
        raise ConfigError(f"unknown quadform b_spec {b!r}")
    if kind == "centering_shift":
        nu = _parse_nu(obj, model)
        model.spectrum().require_supercritical(nu)
        if "gamma_limit" not in obj:
            raise ConfigError("centering_shift needs the limit ratio 'gamma_limit'")
        return CenteringShiftTarget(nu, float(obj["gamma_limit"]))
    raise ConfigError(f"unknown target kind {kind!r}")


def default_tolerances(target: Target, reps: int) -> dict[str, float]:
    """Tolerance defaults sized to CLT sampling noise at the given rep count,
    with slack for finite-n bias."""
    r = float(reps)
    mean_tol = 3.0 / math.sqrt(r)
    var_tol = 4.0 * math.sqrt(2.0 / r)
    if target.kind == "eval_clt":
        return {
            "mean_abs": mean_tol + 0.03,
            "var_lo": max(0.0, 1.0 - var_tol - 0.05),
            "var_hi": 1.0 + var_tol + 0.05,
            "ks": 1.36 / math.sqrt(r) + 0.03,
        }
    if target.kind == "evec_clt":
        return {"entry_rel": var_tol + 0.1, "zmax": 5.0}
    if target.kind == "cosine":
        return {"mean_abs": 0.05}
    if target.kind == "quadform":
        if target.b_kind == "onatski_counterexample":
            return {"ks_min": 0.05}
        return {"var_rel": var_tol + 0.05}
    if target.kind == "centering_shift":
        return {"shift_rel": 0.3, "mean_abs": mean_tol + 0.03}
    raise ConfigError(f"unknown target kind {target.kind!r}")


_SCHUR_DEFAULTS = {"det_ratio": 1e-8, "q_rel": 1e-8}


# ---------------------------------------------------------------------------
# Experiment configuration


@dataclass(frozen=True)
class ExperimentConfig:
    model: SpikedModelSpec
    reps: int
    targets: tuple[Target, ...]
    tolerances: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if not self.targets:
            raise ConfigError("experiment needs at least one target")
        labels = [t.label for t in self.targets]
        dupes = {x for x in labels if labels.count(x) > 1}
        if dupes:
            raise ConfigError(f"duplicate target labels: {sorted(dupes)}")
        if any(t.kind in _CLT_KINDS for t in self.targets) and self.reps < 100:
            raise ConfigError("CLT targets need reps >= 100 for any test power")
        if self.reps < 2:
            raise ConfigError("reps must be at least 2")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        known = set(labels) | {SCHUR_LABEL}
        unknown = set(self.tolerances) - known
        if unknown:
            raise ConfigError(f"tolerances for unknown targets: {sorted(unknown)}")

    def resolved_tolerances(self, target: Target) -> dict[str, float]:
        tol = default_tolerances(target, self.reps)
        tol.update(self.tolerances.get(target.label, {}))
        return tol

    def schur_tolerances(self) -> dict[str, float]:
        tol = dict(_SCHUR_DEFAULTS)
        tol.update(self.tolerances.get(SCHUR_LABEL, {}))
        return tol

    @classmethod
    def from_config(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError(f"experiment config must be an object, got {type(obj).__name__}")
        required = {"model", "reps", "targets"}
        allowed = required | {"tolerances", "workers"}
        missing = required - set(obj)
        if missing:
            raise ConfigError(f"experiment config missing fields: {sorted(missing)}")
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(f"experiment config has unknown fields: {sorted(unknown)}")
        model = SpikedModelSpec.from_config(obj["model"])
        targets = tuple(target_from_config(t, model) for t in obj["targets"])
        return cls(
            model=model,
            reps=int(obj["reps"]),
            targets=targets,
            tolerances=dict(obj.get("tolerances", {})),
            workers=int(obj.get("workers", 1)),
        )

    def to_config(self) -> dict:
        resolved = {t.label: self.resolved_tolerances(t) for t in self.targets}
        if any(t.kind in _IDENTITY_CHECK_KINDS for t in self.targets):
            resolved[SCHUR_LABEL] = self.schur_tolerances()
        return {
            "model": self.model.to_config(),
            "reps": self.reps,
            "targets": [t.to_config() for t in self.targets],
            "tolerances": resolved,
            "workers": self.workers,
        }


# ---------------------------------------------------------------------------
# Per-replicate work


@dataclass(frozen=True)
class _Plan:
    """Per-target quantities a replicate worker needs, precomputed once."""

    label: str
    kind: str
    nu: int = -1
    rho_n: float = math.nan
    sigma_n: float = math.nan
    rho_wrong: float = math.nan
    b_kind: str = ""
    t_eval: float = math.nan


@dataclass(frozen=True)
class _Context:
    basis: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    sqrt_n: float
    plans: tuple[_Plan, ...]
    pairs: tuple[tuple[int, int], ...]
    super_nus: tuple[int, ...]
    needs_spectrum: bool
    check_schur: bool


def _guard_ok(t: float, mu1: float) -> bool:
    return t - mu1 > RESOLVENT_GUARD * t


def _build_context(config: ExperimentConfig) -> _Context:
    model = config.model
    basis, lam = population_axes(model)
    sigma = (basis * lam) @ basis.T
    tensor = cumulants.exact_tensor(model.signal_dist, basis, lam)
    gamma_n = model.gamma_n
    spectral = any(t.kind in _SPECTRAL_KINDS for t in config.targets)
    needs_gamma = spectral or any(
        t.kind == "quadform" and t.b_kind == "resolvent" for t in config.targets
    )
    if needs_gamma and model.p == 0:
        raise ConfigError("eigenstructure and resolvent targets need a noise block (p >= 1)")
    spectrum = model.spectrum() if model.p > 0 else None

    plans = []
    for t in config.targets:
        if t.kind == "eval_clt" or t.kind == "evec_clt":
            pred = spike_theory.predict(spectrum, t.nu, gamma_n, tensor, basis)
            plans.append(
                _Plan(t.label, t.kind, nu=t.nu, rho_n=pred.rho, sigma_n=pred.sigma)
            )
        elif t.kind == "cosine":
            plans.append(_Plan(t.label, t.kind, nu=t.nu))
        elif t.kind == "centering_shift":
            pred = spike_theory.predict(spectrum, t.nu, gamma_n, tensor, basis)
            ell = model.ells[t.nu]
            rho_wrong = spike_theory.spike_forward(ell, t.gamma_limit)
            plans.append(
                _Plan(
                    t.label,
                    t.kind,
                    nu=t.nu,
                    rho_n=pred.rho,
                    sigma_n=pred.sigma,
                    rho_wrong=rho_wrong,
                )
            )
        elif t.kind == "quadform":
            t_eval = math.nan
            if t.b_kind == "resolvent":
                t_eval = spike_theory.spike_forward(model.ells[t.nu], gamma_n)
            plans.append(_Plan(t.label, t.kind, b_kind=t.b_kind, t_eval=t_eval))
        else:
            raise ConfigError(f"unknown target kind {t.kind!r}")

    check_schur = any(p.kind in _IDENTITY_CHECK_KINDS for p in plans)
    super_nus = tuple(range(spectrum.m0)) if check_schur else ()
    return _Context(
        basis=basis,
        lam=lam,
        sigma=sigma,
        sqrt_n=math.sqrt(model.n),
        plans=tuple(plans),
        pairs=tuple(cumulants.symmetric_pairs(model.m)),
        super_nus=super_nus,
        needs_spectrum=spectral,
        check_schur=check_schur,
    )


def _quadform_stat(plan: _Plan, data: Dataset, ctx: _Context) -> np.ndarray:
    n = data.spec.n
    if plan.b_kind == "identity":
        return ctx.sqrt_n * (data.x1 @ data.x1.T / n - ctx.sigma)
    if plan.b_kind == "onatski_counterexample":
        # B_n = sqrt(n) e e^T with unit e collapses to an exact closed form.
        s = data.x1.sum(axis=1) / ctx.sqrt_n
        return np.outer(s, s) - ctx.sigma
    return ctx.sqrt_n * quadform_residual(data, ("resolvent", plan.t_eval))


def _replicate_record(replicate: int, config: ExperimentConfig, ctx: _Context) -> dict:
    data = generate(config.model, replicate)
    spectrum = decompose(data, (ctx.basis, ctx.lam)) if ctx.needs_spectrum else None
    rows: list[tuple[str, str, float]] = []
    rejected: list[str] = []

    for plan in ctx.plans:
        if plan.kind == "eval_clt":
            ell_hat = spectrum.ell_hats[plan.nu]
            if not (_guard_ok(ell_hat, spectrum.mu1) and _guard_ok(plan.rho_n, spectrum.mu1)):
                rejected.append(plan.label)
                continue
            diff = ell_hat - plan.rho_n
            rows.append((plan.label, "t", ctx.sqrt_n * diff / plan.sigma_n))
            rows.append((plan.label, "raw", ctx.sqrt_n * diff))
        elif plan.kind == "evec_clt":
            ell_hat = spectrum.ell_hats[plan.nu]
            if not (_guard_ok(ell_hat, spectrum.mu1) and _guard_ok(plan.rho_n, spectrum.mu1)):
                rejected.append(plan.label)
                continue
            y = ctx.basis.T @ spectrum.a_vecs[plan.nu]
            y[plan.nu] -= 1.0
            y *= ctx.sqrt_n
            rows.extend((plan.label, f"y{j + 1}", y[j]) for j in range(len(y)))
        elif plan.kind == "cosine":
            rows.append((plan.label, "cos2", spectrum.cosines2[plan.nu]))
        elif plan.kind == "centering_shift":
            ell_hat = spectrum.ell_hats[plan.nu]
            if not _guard_ok(plan.rho_n, spectrum.mu1):
                rejected.append(plan.label)
                continue
            rows.append((plan.label, "raw_wrong", ctx.sqrt_n * (ell_hat - plan.rho_wrong)))
            rows.append((plan.label, "t_right", ctx.sqrt_n * (ell_hat - plan.rho_n) / plan.sigma_n))
        elif plan.kind == "quadform":
            try:
                r = _quadform_stat(plan, data, ctx)
            except ResolventDomainError:
                rejected.append(plan.label)
                continue
            rows.extend(
                (plan.label, f"R{j + 1}{k + 1}", r[j, k]) for j, k in ctx.pairs
            )

    if ctx.check_schur and spectrum is not None and ctx.super_nus:
        evaluator = SchurEvaluator(data, mu1=spectrum.mu1)
        m = config.model.m
        skipped = False
        for nu in ctx.super_nus:
            t_eval = spectrum.ell_hats[nu]
            if not _guard_ok(t_eval, spectrum.mu1):
                skipped = True
                continue
            k_mat, q_mat = evaluator.pair(t_eval)
            k_norm = float(np.abs(np.linalg.eigvalsh(k_mat)).max())
            det_ratio = abs(float(np.linalg.det(k_mat - t_eval * np.eye(m)))) / k_norm**m
            a = spectrum.a_vecs[nu]
            q_rel = abs(float(a @ (a + q_mat @ a)) * spectrum.u_norm2(nu) - 1.0)
            rows.append((SCHUR_LABEL, f"det_ratio[{nu + 1}]", det_ratio))
            rows.append((SCHUR_LABEL, f"q_rel[{nu + 1}]", q_rel))
        if skipped:
            rejected.append(SCHUR_LABEL)

    return {"replicate": replicate, "rows": rows, "rejected": rejected}


def _map_replicates(config: ExperimentConfig, ctx: _Context) -> list[dict]:
    worker = partial(_replicate_record, config=config, ctx=ctx)
    if config.workers <= 1:
        return [worker(i) for i in range(config.reps)]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        chunk = max(1, config.reps // (config.workers * 8))
        return list(pool.map(worker, range(config.reps), chunksize=chunk))


# ---------------------------------------------------------------------------
# Sections and report


@dataclass(frozen=True)
class McSection:
    label: str
    kind: str
    theory: dict
    empirical: dict
    tolerances: dict
    checks: tuple[dict, ...]
    passed: bool
    reps_used: int
    reps_rejected: int
    expect_failure: bool = False


@dataclass(frozen=True)
class McReport:
    sections: tuple[McSection, ...]
    overall_pass: bool
    config: dict
    meta: dict
    rows: tuple[tuple[int, str, str, float], ...] = field(repr=False)

    def section(self, label: str) -> McSection:
        for s in self.sections:
            if s.label == label:
                return s
        raise KeyError(label)

    def to_json_dict(self) -> dict:
        return _jsonable(
            {
                "overall_pass": self.overall_pass,
                "sections": [asdict(s) for s in self.sections],
                "config": self.config,
                "meta": self.meta,
            }
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _check(name: str, value: float, limit: float, op: str = "<=") -> dict:
    ok = value <= limit if op == "<=" else value >= limit
    return {"name": name, "value": float(value), "op": op, "limit": float(limit), "ok": bool(ok)}


def _col(cols, label: str, stat: str) -> np.ndarray:
    values = cols.get((label, stat))
    if not values or len(values) < 2:
        raise ConfigError(
            f"target {label!r} retained {0 if not values else len(values)} replicates; "
            "statistics need at least 2 (resolvent guard rejected the rest)"
        )
    return np.asarray(values)


def _finish(checks: list[dict]) -> tuple[tuple[dict, ...], bool]:
    return tuple(checks), all(c["ok"] for c in checks)


def _section_eval(plan, theory_pred, cols, tol, rejected) -> McSection:
    t = _col(cols, plan.label, "t")
    raw = _col(cols, plan.label, "raw")
    mean = float(t.mean())
    var = float(t.var(ddof=1))
    ks = ks_normal(t)
    raw_var = float(raw.var(ddof=1))
    checks = [
        _check("mean_abs", abs(mean), tol["mean_abs"]),
        _check("var_lo", var, tol["var_lo"], op=">="),
        _check("var_hi", var, tol["var_hi"]),
        _check("ks", ks, tol["ks"]),
    ]
    if "raw_var_rel" in tol:
        rel = abs(raw_var - theory_pred.sigma2) / theory_pred.sigma2
        checks.append(_check("raw_var_rel", rel, tol["raw_var_rel"]))
    checks, passed = _finish(checks)
    return McSection(
        label=plan.label,
        kind=plan.kind,
        theory={"rho_n": plan.rho_n, "sigma2": theory_pred.sigma2, "sigma": theory_pred.sigma},
        empirical={"mean": mean, "var": var, "ks": ks, "raw_var": raw_var},
        tolerances=tol,
        checks=checks,
        passed=passed,
        reps_used=len(t),
        reps_rejected=rejected,
    )


def _section_evec(plan, theory_pred, cols, tol, rejected, m) -> McSection:
    y = np.column_stack([_col(cols, plan.label, f"y{j + 1}") for j in range(m)])
    reps = y.shape[0]
    emp_cov = np.cov(y, rowvar=False, ddof=1).reshape(m, m)
    theory_cov = theory_pred.evec_cov
    frob_rel = float(
        np.linalg.norm(emp_cov - theory_cov) / max(np.linalg.norm(theory_cov), 1e-300)
    )
    entries = np.abs(theory_cov) > 1e-12
    entry_rel = float(
        (np.abs(emp_cov - theory_cov)[entries] / np.abs(theory_cov)[entries]).max()
        if entries.any()
        else 0.0
    )
    means = y.mean(axis=0)
    sds = y.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        zscores = np.where(sds > 0, means / (sds / math.sqrt(reps)), 0.0)
    off = np.arange(m) != plan.nu
    zmax = float(np.abs(zscores[off]).max()) if off.any() else 0.0
    checks = [_check("entry_rel", entry_rel, tol["entry_rel"])]
    if "zmax" in tol:
        checks.append(_check("zmax", zmax, tol["zmax"]))
    if "frob_rel" in tol:
        checks.append(_check("frob_rel", frob_rel, tol["frob_rel"]))
    checks, passed = _finish(checks)
    return McSection(
        label=plan.label,
        kind=plan.kind,
        theory={"cov": theory_cov, "rho_n": plan.rho_n},
        empirical={
            "cov": emp_cov,
            "frob_rel": frob_rel,
            "entry_rel": entry_rel,
            "mean_zscores": zscores,
            "nu_component_mean": float(means[plan.nu]),
        },
        tolerances=tol,
        checks=checks,
        passed=passed,
        reps_used=reps,
        reps_rejected=rejected,
    )


def _section_cosine(plan, theory_cos2, cols, tol, rejected) -> McSection:
    c = _col(cols, plan.label, "cos2")
    mean = float(c.mean())
    checks, passed = _finish([_check("mean_abs", abs(mean - theory_cos2), tol["mean_abs"])])
    return McSection(
        label=plan.label,
        kind=plan.kind,
        theory={"cos2": theory_cos2},
        empirical={"mean": mean, "sd": float(c.std(ddof=1))},
        tolerances=tol,
        checks=checks,
        passed=passed,
        reps_used=len(c),
        reps_rejected=rejected,
    )


def _section_quadform(plan, d_matrix, theta, omega, cols, tol, rejected, pairs) -> McSection:
    stats = [_col(cols, plan.label, f"R{j + 1}{k + 1}") for j, k in pairs]
    mat = np.column_stack(stats)
    reps = mat.shape[0]
    L = len(pairs)
    emp_cov = np.cov(mat, rowvar=False, ddof=1).reshape(L, L)
    theory = {"d_matrix": d_matrix, "theta": theta, "omega": omega}
    if plan.b_kind == "onatski_counterexample":
        ks = ks_normal(mat[:, 0], scale=math.sqrt(d_matrix[0, 0]))
        checks, passed = _finish([_check("ks_min", ks, tol["ks_min"], op=">=")])
        empirical = {"ks": ks, "cov": emp_cov}
        expect_failure = True
    else:
        entries = np.abs(d_matrix) > 1e-12
        entry_rel = float(
            (np.abs(emp_cov - d_matrix)[entries] / np.abs(d_matrix)[entries]).max()
            if entries.any()
            else 0.0
        )
        checks, passed = _finish([_check("var_rel", entry_rel, tol["var_rel"])])
        empirical = {"cov": emp_cov, "var_rel": entry_rel, "means": mat.mean(axis=0)}
        expect_failure = False
    return McSection(
        label=plan.label,
        kind=plan.kind,
        theory=theory,
        empirical=empirical,
        tolerances=tol,
        checks=checks,
        passed=passed,
        reps_used=reps,
        reps_rejected=rejected,
        expect_failure=expect_failure,
    )


def _section_centering(plan, shift, cols, tol, rejected) -> McSection:
    wrong = _col(cols, plan.label, "raw_wrong")
    right = _col(cols, plan.label, "t_right")
    mean_wrong = float(wrong.mean())
    mean_right = float(right.mean())
    checks, passed = _finish(
        [
            _check("shift_rel", abs(mean_wrong - shift) / abs(shift), tol["shift_rel"]),
            _check("mean_abs", abs(mean_right), tol["mean_abs"]),
        ]
    )
    return McSection(
        label=plan.label,
        kind=plan.kind,
        theory={"shift": shift, "rho_wrong": plan.rho_wrong, "rho_n": plan.rho_n},
        empirical={"mean_wrong_centering": mean_wrong, "mean_right_centering": mean_right},
        tolerances=tol,
        checks=checks,
        passed=passed,
        reps_used=len(wrong),
        reps_rejected=rejected,
    )


def _section_schur(cols, tol, rejected, super_nus) -> McSection:
    empirical = {}
    checks = []
    for nu in super_nus:
        # A missing column means every replicate was skipped: fail loudly.
        det = np.asarray(cols.get((SCHUR_LABEL, f"det_ratio[{nu + 1}]"), [np.inf]))
        qrel = np.asarray(cols.get((SCHUR_LABEL, f"q_rel[{nu + 1}]"), [np.inf]))
        empirical[f"max_det_ratio[{nu + 1}]"] = float(det.max())
        empirical[f"max_q_rel[{nu + 1}]"] = float(qrel.max())
        checks.append(_check(f"det_ratio[{nu + 1}]", det.max(), tol["det_ratio"]))
        checks.append(_check(f"q_rel[{nu + 1}]", qrel.max(), tol["q_rel"]))
    checks, passed = _finish(checks)
    used = 0
    for nu in super_nus:
        key = (SCHUR_LABEL, f"det_ratio[{nu + 1}]")
        if key in cols:
            used = max(used, len(cols[key]))
    return McSection(
        label=SCHUR_LABEL,
        kind="schur_identities",
        theory={"note": "exact algebraic identities; tolerances are solver slack"},
        empirical=empirical,
        tolerances=tol,
        checks=checks,
        passed=passed,
        reps_used=used,
        reps_rejected=rejected,
    )


def aggregate(sections, config_echo=None, meta=None, rows=()) -> McReport:
    """Deterministic merge of sections; overall pass iff every section passed."""
    labels = [s.label for s in sections]
    dupes = {x for x in labels if labels.count(x) > 1}
    if dupes:
        raise ConfigError(f"duplicate section labels: {sorted(dupes)}")
    return McReport(
        sections=tuple(sections),
        overall_pass=all(s.passed for s in sections),
        config=config_echo or {},
        meta=meta or {},
        rows=tuple(rows),
    )


def run_experiment(config: ExperimentConfig) -> McReport:
    """Run all replicates, build one section per target plus the identity
    cross-check section, and aggregate into a self-contained report."""
    start = time.perf_counter()
    ctx = _build_context(config)
    records = _map_replicates(config, ctx)

    cols: dict[tuple[str, str], list[float]] = {}
    rejected: dict[str, int] = {}
    rows: list[tuple[int, str, str, float]] = []
    for rec in records:
        for label, stat, value in rec["rows"]:
            cols.setdefault((label, stat), []).append(value)
            rows.append((rec["replicate"], label, stat, value))
        for label in rec["rejected"]:
            rejected[label] = rejected.get(label, 0) + 1

    model = config.model
    basis, lam = ctx.basis, ctx.lam
    tensor = cumulants.exact_tensor(model.signal_dist, basis, lam)
    spectrum = model.spectrum() if model.p > 0 else None
    gamma_n = model.gamma_n

    sections = []
    for target, plan in zip(config.targets, ctx.plans):
        tol = config.resolved_tolerances(target)
        rej = rejected.get(plan.label, 0)
        if plan.kind == "eval_clt":
            pred = spike_theory.predict(spectrum, plan.nu, gamma_n, tensor, basis)
            sections.append(_section_eval(plan, pred, cols, tol, rej))
        elif plan.kind == "evec_clt":
            pred = spike_theory.predict(spectrum, plan.nu, gamma_n, tensor, basis)
            sections.append(_section_evec(plan, pred, cols, tol, rej, model.m))
        elif plan.kind == "cosine":
            cos2 = spike_theory.cosine_limit(model.ells[plan.nu], gamma_n)
            sections.append(_section_cosine(plan, cos2, cols, tol, rej))
        elif plan.kind == "quadform":
            moments, pairs = cumulants.bilinear_jk_from_signal(model.signal_dist, basis, lam)
            if plan.b_kind == "resolvent":
                theta, omega, _, _ = spike_theory.theta_omega_c(model.ells[target.nu], gamma_n)
            elif plan.b_kind == "identity":
                theta, omega = 1.0, 1.0
            else:
                theta, omega = 1.0, 0.0
            d_matrix = moments.d_matrix(theta, omega)
            sections.append(
                _section_quadform(plan, d_matrix, theta, omega, cols, tol, rej, pairs)
            )
        elif plan.kind == "centering_shift":
            ell = model.ells[plan.nu]
            a_shift = (gamma_n - target.gamma_limit) * ctx.sqrt_n
            shift = a_shift * ell / (ell - 1.0)
            sections.append(_section_centering(plan, shift, cols, tol, rej))

    if ctx.check_schur and ctx.super_nus:
        sections.append(
            _section_schur(cols, config.schur_tolerances(), rejected.get(SCHUR_LABEL, 0), ctx.super_nus)
        )

    meta = {
        "version": __version__,
        "runtime_seconds": time.perf_counter() - start,
        "reps": config.reps,
        "workers": config.workers,
    }
    return aggregate(sections, config_echo=config.to_config(), meta=meta, rows=rows)
