"""Monte Carlo evaluation of selection procedures: empirical PCS/PGS/EOC,
expected total sample size, the standard mean configurations, and paired
procedure comparisons.

Macro-replication ``rep`` of an experiment draws its observations from
substreams (seed, rep, alternative), so replications are independent,
reproducible, and shared across procedures in paired comparisons.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import fixed_budget, fixed_precision, parallel
from .core import BUDGET_CAP, GaussianOracle, ProblemInstance, SelectionResult

__all__ = [
    "slippage_config", "monotone_config", "equal_config", "build_instance",
    "ExperimentConfig", "EvalReport", "CompareReport",
    "evaluate", "compare", "run_once",
    "sign_test_p", "wilson_interval",
    "CSV_COLUMNS", "PROCEDURES",
]


def slippage_config(k: int, delta: float, sigma2: float = 1.0) -> ProblemInstance:
    """Least favorable configuration: k-1 means at 0 and the best at delta."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    return ProblemInstance(means=[0.0] * (k - 1) + [float(delta)],
                           variances=sigma2, iz_delta=delta)


def monotone_config(k: int, spacing: float, sigma2: float = 1.0) -> ProblemInstance:
    """Evenly spaced means 0, s, 2s, ...: every gap to the best is distinct
    and positive, so the static-allocation benchmark is well posed."""
    if not spacing > 0:
        raise ValueError(f"spacing must be > 0, got {spacing}")
    return ProblemInstance(means=[i * spacing for i in range(k)], variances=sigma2)


def equal_config(k: int, sigma2: float = 1.0) -> ProblemInstance:
    """All means tied (the no-decision stress case)."""
    return ProblemInstance(means=[0.0] * k, variances=sigma2)


def build_instance(spec: dict) -> ProblemInstance:
    """Instance from a config mapping: explicit means/variances or one of
    the generators (slippage | equal | monotone)."""
    kind = spec.get("kind", "explicit")
    if kind == "explicit":
        return ProblemInstance(means=spec["means"],
                               variances=spec.get("variances", 1.0),
                               iz_delta=spec.get("iz_delta"))
    k = int(spec["k"])
    sigma2 = float(spec.get("sigma2", 1.0))
    if kind == "slippage":
        return slippage_config(k, float(spec["delta"]), sigma2)
    if kind == "monotone":
        return monotone_config(k, float(spec["spacing"]), sigma2)
    if kind == "equal":
        return equal_config(k, sigma2)
    raise ValueError(f"unknown instance kind {kind!r}")


# ---------------------------------------------------------------------------
# procedure dispatch


def _fp_config(params: dict, **overrides) -> fixed_precision.FixedPrecisionConfig:
    kw = dict(
        alpha=float(params["alpha"]),
        delta=float(params["delta"]) if "delta" in params else None,
        n0=int(params.get("n0", 20)),
        lam=float(params["lambda"]) if "lambda" in params else None,
        budget_cap=int(params["budget_cap"]) if "budget_cap" in params else None,
        fhn_variance_update=params.get("fhn_variance_update", "full"),
    )
    kw.update(overrides)
    return fixed_precision.FixedPrecisionConfig(**kw)


def _known_sigma2(instance: ProblemInstance, params: dict) -> float:
    if "sigma2" in params:
        return float(params["sigma2"])
    return instance.common_variance()


def _budget_config(params: dict) -> fixed_budget.BudgetConfig:
    return fixed_budget.BudgetConfig(total=int(params["total"]),
                                     stage=int(params.get("tau", 10)),
                                     n0=int(params.get("n0", 10)))


def _run_bechhofer(instance, params, oracle, pool_factory, trace):
    return fixed_precision.bechhofer(instance.k, _known_sigma2(instance, params),
                                     _fp_config(params), oracle)


def _run_rinott(instance, params, oracle, pool_factory, trace):
    return fixed_precision.rinott(instance.k, _fp_config(params), oracle)


def _run_paulson(instance, params, oracle, pool_factory, trace):
    return fixed_precision.paulson(instance.k, _known_sigma2(instance, params),
                                   _fp_config(params), oracle)


def _run_kn(instance, params, oracle, pool_factory, trace):
    return fixed_precision.kn(instance.k, _fp_config(params), oracle)


def _run_fhn(instance, params, oracle, pool_factory, trace):
    return fixed_precision.fhn(instance.k, _fp_config(params, delta=None), oracle)


def _run_ocba(instance, params, oracle, pool_factory, trace):
    return fixed_budget.ocba(instance.k, _budget_config(params), oracle, trace)


def _run_equal(instance, params, oracle, pool_factory, trace):
    """Equal allocation at the same budget: the OCBA baseline."""
    k = instance.k
    total = int(params["total"])
    counts = [total // k + (1 if i < total % k else 0) for i in range(k)]
    means = [float(np.mean([oracle.sample(i) for _ in range(counts[i])]))
             for i in range(k)]
    from .core import make_result
    return make_result(int(np.argmax(means)), counts, [])


def _run_evi(instance, params, oracle, pool_factory, trace):
    return fixed_budget.evi_ll(instance.k, _budget_config(params), oracle, trace)


def _run_kg(instance, params, oracle, pool_factory, trace):
    k = instance.k
    priors = None
    if "prior_mean" in params or "prior_variance" in params:
        pm = params.get("prior_mean", 0.0)
        pv = params.get("prior_variance", 1e6)
        means = [float(pm)] * k if np.isscalar(pm) else [float(x) for x in pm]
        variances = [float(pv)] * k if np.isscalar(pv) else [float(x) for x in pv]
        priors = fixed_budget.KgPriors(tuple(means), tuple(variances))
    return fixed_budget.kg(k, int(params["total"]),
                           _known_sigma2(instance, params), priors, oracle, trace)


def _run_aps(instance, params, oracle, pool_factory, trace):
    m = int(params.get("m", 1))
    return parallel.aps(instance.k, float(params["alpha"]), float(params["delta"]),
                        int(params.get("n0", 20)), m, oracle, pool_factory(m))


def _run_kt_plus(instance, params, oracle, pool_factory, trace):
    m = int(params.get("m", 1))
    cfg = parallel.KtConfig(
        g=int(params.get("g", 2)), m=m,
        lam=float(params["lambda"]) if "lambda" in params else None)
    return parallel.kt_plus(instance.k, float(params["alpha"]),
                            float(params["delta"]), int(params.get("n0", 20)),
                            cfg, oracle, pool_factory(m), trace)


PROCEDURES = {
    "bechhofer": _run_bechhofer,
    "rinott": _run_rinott,
    "paulson": _run_paulson,
    "kn": _run_kn,
    "fhn": _run_fhn,
    "ocba": _run_ocba,
    "equal": _run_equal,
    "evi": _run_evi,
    "kg": _run_kg,
    "aps": _run_aps,
    "kt_plus": _run_kt_plus,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One harness experiment: a procedure on an instance, R reps."""

    procedure: str
    params: dict
    instance: ProblemInstance
    replications: int = 100
    seed: int = 0
    pgs_delta: float | None = None
    pool_backend: str = "simulated"
    pool_delay: str = "constant:1"
    jobs: int = 1

    def __post_init__(self):
        if self.procedure not in PROCEDURES:
            raise ValueError(f"unknown procedure {self.procedure!r}")
        if self.replications < 1:
            raise ValueError("need at least one replication")

    def good_delta(self) -> float | None:
        if self.pgs_delta is not None:
            return float(self.pgs_delta)
        if "delta" in self.params:
            return float(self.params["delta"])
        return None

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("jobs")  # execution detail, not part of the experiment identity
        d["instance"] = {"means": list(self.instance.means),
                         "variances": list(self.instance.variances),
                         "iz_delta": self.instance.iz_delta}
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def run_once(config: ExperimentConfig, rep: int,
             trace: list | None = None) -> SelectionResult:
    """One macro-replication (independent substreams per rep)."""
    oracle = GaussianOracle(config.instance, config.seed, rep)
    delay = parallel.DelayModel.parse(config.pool_delay)

    def pool_factory(m):
        return parallel.make_pool(config.pool_backend, m, delay, config.seed,
                                  rep, delay_channel_base=config.instance.k)

    runner = PROCEDURES[config.procedure]
    return runner(config.instance, config.params, oracle, pool_factory, trace)


def _rep_outcome(config: ExperimentConfig, rep: int) -> tuple:
    """(correct, good, eoc, total_samples, aborted) for one replication."""
    inst = config.instance
    try:
        result = run_once(config, rep)
    except parallel.PoolError:
        return (False, False, inst.best_value - min(inst.means), 0, True)
    aborted = result.terminated_by == BUDGET_CAP
    mu_sel = inst.means[result.selected]
    correct = (mu_sel == inst.best_value) and not aborted
    gd = config.good_delta()
    if gd is None:
        good = correct
    else:
        good = (mu_sel > inst.best_value - gd) and not aborted
    return (correct, good, inst.best_value - mu_sel, result.total_samples, aborted)


def _outcome_block(config: ExperimentConfig, lo: int, hi: int) -> list:
    return [_rep_outcome(config, rep) for rep in range(lo, hi)]


def wilson_interval(p_hat: float, n: int, z: float = 2.0) -> tuple:
    """Wilson score interval (z = 2 by default, matching the 2*SE checks)."""
    if n == 0:
        return (0.0, 1.0)
    denom = 1.0 + z * z / n
    center = (p_hat + z * z / (2 * n)) / denom
    half = z * math.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _p_se(flags: np.ndarray) -> tuple:
    p = float(flags.mean())
    return p, math.sqrt(p * (1.0 - p) / len(flags))


@dataclass(frozen=True)
class EvalReport:
    procedure: str
    k: int
    config_hash: str
    replications: int
    pcs_hat: float
    pcs_se: float
    pgs_hat: float
    pgs_se: float
    eoc_hat: float
    eoc_se: float
    mean_total: float
    mean_total_se: float
    runtime_s: float
    n_aborted: int
    pcs_wilson: tuple
    pgs_wilson: tuple
    config: dict = field(repr=False)

    def stat_fields(self) -> tuple:
        """Everything that must reproduce bit-identically (runtime excluded)."""
        return (self.procedure, self.k, self.config_hash, self.replications,
                self.pcs_hat, self.pcs_se, self.pgs_hat, self.pgs_se,
                self.eoc_hat, self.eoc_se, self.mean_total, self.mean_total_se,
                self.n_aborted, self.pcs_wilson, self.pgs_wilson)

    def csv_row(self) -> list:
        return [self.procedure, self.k, self.config_hash, self.replications,
                self.pcs_hat, self.pcs_se, self.pgs_hat, self.pgs_se,
                self.eoc_hat, self.eoc_se, self.mean_total, self.mean_total_se,
                self.runtime_s]

    def to_json_dict(self) -> dict:
        return {
            "procedure": self.procedure, "k": self.k,
            "config_hash": self.config_hash, "R": self.replications,
            "pcs_hat": self.pcs_hat, "pcs_se": self.pcs_se,
            "pcs_wilson": list(self.pcs_wilson),
            "pgs_hat": self.pgs_hat, "pgs_se": self.pgs_se,
            "pgs_wilson": list(self.pgs_wilson),
            "eoc_hat": self.eoc_hat, "eoc_se": self.eoc_se,
            "mean_N": self.mean_total, "mean_N_se": self.mean_total_se,
            "runtime_s": self.runtime_s, "n_aborted": self.n_aborted,
            "config": self.config,
        }


CSV_COLUMNS = ["procedure", "k", "config_hash", "R", "pcs_hat", "pcs_se",
               "pgs_hat", "pgs_se", "eoc_hat", "eoc_se", "mean_N",
               "mean_N_se", "runtime_s"]


def _collect_outcomes(config: ExperimentConfig) -> list:
    R = config.replications
    if config.jobs <= 1 or R < 4 * config.jobs:
        return _outcome_block(config, 0, R)
    bounds = np.linspace(0, R, config.jobs + 1).astype(int)
    with ProcessPoolExecutor(max_workers=config.jobs) as pool:
        futures = [pool.submit(_outcome_block, config, int(lo), int(hi))
                   for lo, hi in zip(bounds[:-1], bounds[1:])]
        out: list = []
        for f in futures:
            out.extend(f.result())
    return out


def evaluate(config: ExperimentConfig) -> EvalReport:
    """Run R independent macro-replications and aggregate; aborted
    replications (budget cap, pool failure) count against the procedure."""
    t0 = time.perf_counter()
    rows = _collect_outcomes(config)
    runtime = time.perf_counter() - t0
    correct = np.array([r[0] for r in rows], dtype=bool)
    good = np.array([r[1] for r in rows], dtype=bool)
    eoc = np.array([r[2] for r in rows], dtype=float)
    totals = np.array([r[3] for r in rows], dtype=float)
    aborted = sum(r[4] for r in rows)
    R = config.replications
    pcs, pcs_se = _p_se(correct)
    pgs, pgs_se = _p_se(good)
    return EvalReport(
        procedure=config.procedure, k=config.instance.k,
        config_hash=config.config_hash(), replications=R,
        pcs_hat=pcs, pcs_se=pcs_se, pgs_hat=pgs, pgs_se=pgs_se,
        eoc_hat=float(eoc.mean()),
        eoc_se=float(eoc.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0,
        mean_total=float(totals.mean()),
        mean_total_se=float(totals.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0,
        runtime_s=runtime, n_aborted=int(aborted),
        pcs_wilson=wilson_interval(pcs, R), pgs_wilson=wilson_interval(pgs, R),
        config=config.canonical(),
    )


def sign_test_p(wins: int, losses: int) -> float:
    """Exact one-sided binomial sign test: P(Bin(wins+losses, 1/2) >= wins)."""
    n = wins + losses
    if n == 0:
        return 1.0
    log_half_n = n * math.log(0.5)
    p = 0.0
    for j in range(wins, n + 1):
        p += math.exp(math.lgamma(n + 1) - math.lgamma(j + 1)
                      - math.lgamma(n - j + 1) + log_half_n)
    return min(1.0, p)


@dataclass(frozen=True)
class CompareReport:
    """Paired comparison of procedure A vs B on shared substreams."""

    report_a: EvalReport
    report_b: EvalReport
    pcs_diff: float
    pcs_wins_a: int          # A correct where B wrong
    pcs_wins_b: int
    pcs_sign_p: float        # one-sided: A's PCS exceeds B's
    mean_total_diff: float
    fewer_samples_a: int     # reps where A used strictly fewer samples
    fewer_samples_b: int
    samples_sign_p: float    # one-sided: A uses fewer samples than B


def compare(config_a: ExperimentConfig, config_b: ExperimentConfig) -> CompareReport:
    if config_a.instance != config_b.instance:
        raise ValueError("paired comparison requires the same instance")
    if (config_a.replications, config_a.seed) != (config_b.replications, config_b.seed):
        raise ValueError("paired comparison requires the same R and seed")
    t0 = time.perf_counter()
    rows_a = _collect_outcomes(config_a)
    rows_b = _collect_outcomes(config_b)
    runtime = time.perf_counter() - t0

    def mk_report(cfg, rows):
        correct = np.array([r[0] for r in rows], dtype=bool)
        good = np.array([r[1] for r in rows], dtype=bool)
        eoc = np.array([r[2] for r in rows], dtype=float)
        totals = np.array([r[3] for r in rows], dtype=float)
        R = cfg.replications
        pcs, pcs_se = _p_se(correct)
        pgs, pgs_se = _p_se(good)
        return EvalReport(
            procedure=cfg.procedure, k=cfg.instance.k,
            config_hash=cfg.config_hash(), replications=R,
            pcs_hat=pcs, pcs_se=pcs_se, pgs_hat=pgs, pgs_se=pgs_se,
            eoc_hat=float(eoc.mean()),
            eoc_se=float(eoc.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0,
            mean_total=float(totals.mean()),
            mean_total_se=float(totals.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0,
            runtime_s=runtime, n_aborted=int(sum(r[4] for r in rows)),
            pcs_wilson=wilson_interval(pcs, R), pgs_wilson=wilson_interval(pgs, R),
            config=cfg.canonical(),
        )

    ra, rb = mk_report(config_a, rows_a), mk_report(config_b, rows_b)
    ca = np.array([r[0] for r in rows_a], dtype=bool)
    cb = np.array([r[0] for r in rows_b], dtype=bool)
    na = np.array([r[3] for r in rows_a])
    nb = np.array([r[3] for r in rows_b])
    wins_a = int(np.sum(ca & ~cb))
    wins_b = int(np.sum(~ca & cb))
    fewer_a = int(np.sum(na < nb))
    fewer_b = int(np.sum(nb < na))
    return CompareReport(
        report_a=ra, report_b=rb,
        pcs_diff=ra.pcs_hat - rb.pcs_hat,
        pcs_wins_a=wins_a, pcs_wins_b=wins_b,
        pcs_sign_p=sign_test_p(wins_a, wins_b),
        mean_total_diff=ra.mean_total - rb.mean_total,
        fewer_samples_a=fewer_a, fewer_samples_b=fewer_b,
        samples_sign_p=sign_test_p(fewer_a, fewer_b),
    )
