"""Monte-Carlo diversification experiments over random fire-sale games.

Games have as many assets as agents. Holdings interpolate between one asset
per agent and fully uniform portfolios through a diversification parameter
tau: x_ij = tau/n + (1 - tau) * [i == j]. For each tau, many games are drawn,
both the exact and the simplified synchronous dynamics are run from all-ones
until every strategy change drops below the stop threshold, and convergence
times plus step-size decay curves are aggregated.

Runs are batched across games with vectorized updates; a counter-based RNG
(Philox) keyed per data point makes results reproducible bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .model import Game, LinearImpact, TOL

# Parameter sets: per-agent illiquid assets and liabilities, per-asset initial
# prices, and the range of the leverage cap as a fraction of the largest
# leverage at the all-ones profile (kept below 1 so the dynamics have work to
# do; draws with a cap below 1 are rejected).
PARAM_SETS = {
    "baseline": {
        "illiquid": (80.0, 120.0),
        "liabilities": (40.0, 60.0),
        "p0": (100.0, 100.0),
        "cap_fraction": (0.6, 0.99),
    },
    "wide": {
        "illiquid": (0.0, 100.0),
        "liabilities": (40.0, 100.0),
        "p0": (50.0, 150.0),
        "cap_fraction": (0.9, 0.99),
    },
}

DYNAMICS = ("exact", "simplified")


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 10
    taus: tuple[float, ...] = tuple(round(0.1 * k, 1) for k in range(11))
    param_set: str = "baseline"
    runs: int = 10_000
    delta: float = 1e-5
    seed: int = 0
    max_steps: int = 200_000
    curve_steps: int = 5_000  # decay curves are recorded up to this step

    def __post_init__(self):
        if self.param_set not in PARAM_SETS:
            raise ValueError(f"unknown parameter set {self.param_set!r}")
        if self.runs < 1:
            raise ValueError("need at least one run per data point")
        if any(t < 0 or t > 1 for t in self.taus):
            raise ValueError("diversification values must lie in [0, 1]")

    @staticmethod
    def from_json(doc: dict) -> "ExperimentConfig":
        kwargs = {}
        for key in ("n", "param_set", "runs", "delta", "seed", "max_steps", "curve_steps"):
            if key in doc:
                kwargs[key] = doc[key]
        if "taus" in doc:
            kwargs["taus"] = tuple(float(t) for t in doc["taus"])
        return ExperimentConfig(**kwargs)


def holdings_matrix(n: int, tau: float) -> np.ndarray:
    """tau/n everywhere plus (1 - tau) on the diagonal; columns sum to 1."""
    return np.full((n, n), tau / n) + (1.0 - tau) * np.eye(n)


@dataclass(frozen=True)
class GameBatch:
    """Array-of-games representation sharing one holdings matrix."""

    x: np.ndarray  # (n, n)
    p0: np.ndarray  # (R, n)
    illiquid: np.ndarray  # (R, n)
    liabilities: np.ndarray  # (R, n)
    cap: np.ndarray  # (R,)
    rejections: int

    @property
    def size(self) -> int:
        return self.cap.shape[0]

    def game(self, r: int) -> Game:
        assets = tuple(LinearImpact(float(p)) for p in self.p0[r])
        return Game(self.illiquid[r], self.liabilities[r], self.x, assets,
                    1.0, float(self.cap[r]))


def _draw(rng: np.random.Generator, lo: float, hi: float, shape) -> np.ndarray:
    if lo == hi:
        return np.full(shape, lo)
    return rng.uniform(lo, hi, shape)


def sample_game_batch(cfg: ExperimentConfig, tau: float,
                      rng: np.random.Generator, count: Optional[int] = None) -> GameBatch:
    """Draw ``count`` accepted games; rejected draws are counted and redrawn.

    A draw is rejected when some agent's equity at the all-ones profile is not
    positive (the all-ones leverage is then undefined) or when the sampled
    leverage cap does not exceed 1.
    """
    count = cfg.runs if count is None else count
    params = PARAM_SETS[cfg.param_set]
    n = cfg.n
    x = holdings_matrix(n, tau)
    value_at_ones = x @ np.ones(n)  # kept amounts are all 1 by construction
    p0s = np.empty((count, n))
    aIs = np.empty((count, n))
    ls = np.empty((count, n))
    caps = np.empty(count)
    filled = 0
    rejections = 0
    while filled < count:
        need = count - filled
        aI = _draw(rng, *params["illiquid"], (need, n))
        liab = _draw(rng, *params["liabilities"], (need, n))
        p0 = _draw(rng, *params["p0"], (need, n))
        value = p0 @ x.T  # V_i at all-ones: sum_j x_ij p0_j
        equity = aI - liab + value
        frac = rng.uniform(*params["cap_fraction"], need)
        solvent = np.all(equity > 0, axis=1)
        lev_top = np.where(solvent,
                           np.max(np.where(equity > 0, (aI + value) / np.where(equity > 0, equity, 1.0), np.inf), axis=1),
                           np.nan)
        cap = frac * lev_top
        ok = solvent & (cap > 1.0)
        k = int(ok.sum())
        rejections += need - k
        sl = slice(filled, filled + k)
        p0s[sl], aIs[sl], ls[sl], caps[sl] = p0[ok], aI[ok], liab[ok], cap[ok]
        filled += k
    return GameBatch(x, p0s, aIs, ls, caps, rejections)


def sample_game(cfg: ExperimentConfig, tau: float, rng: np.random.Generator) -> Optional[Game]:
    """Draw one game, or None when the draw is rejected."""
    params = PARAM_SETS[cfg.param_set]
    n = cfg.n
    x = holdings_matrix(n, tau)
    aI = _draw(rng, *params["illiquid"], n)
    liab = _draw(rng, *params["liabilities"], n)
    p0 = _draw(rng, *params["p0"], n)
    frac = rng.uniform(*params["cap_fraction"])
    value = x @ p0
    equity = aI - liab + value
    if not np.all(equity > 0):
        return None
    cap = frac * float(np.max((aI + value) / equity))
    if cap <= 1.0:
        return None
    assets = tuple(LinearImpact(float(p)) for p in p0)
    return Game(aI, liab, x, assets, 1.0, cap)


# ---------------------------------------------------------------------------
# batched dynamics
# ---------------------------------------------------------------------------


@dataclass
class BatchOutcome:
    steps: np.ndarray  # (R,) steps to convergence, -1 when the budget ran out
    finals: np.ndarray  # (R, n) final profiles
    curve: np.ndarray  # (T, 2): mean |dy| per step over still-active runs, count

    @property
    def converged(self) -> np.ndarray:
        return self.steps > 0


def _step_exact(x, p0, aI, liab, cap, own_quad, y):
    value = ((p0 * (y @ x)) @ x.T)
    W = value - own_quad * y
    c = aI - liab
    B = W - cap[:, None] * own_quad
    C = aI - cap[:, None] * (c + W)
    disc = B * B - 4.0 * own_quad * C
    has_root = disc >= 0
    sq = np.sqrt(np.where(has_root, disc, 0.0))
    r_hi = (-B + sq) / (2.0 * own_quad)
    r_lo = (-B - sq) / (2.0 * own_quad)
    ymax = np.minimum(1.0, r_hi)
    ok = (has_root
          & (ymax >= np.maximum(0.0, r_lo) - 1e-12)
          & (ymax >= -1e-12)
          & (c + own_quad * np.maximum(0.0, ymax) + W > 0))
    return np.where(ok, np.clip(ymax, 0.0, 1.0), 0.0)


def _step_simplified(x, p0, aI, liab, cap, own_quad, y):
    value = ((p0 * (y @ x)) @ x.T)
    equity = aI - liab + value
    with np.errstate(divide="ignore", invalid="ignore"):
        g = cap[:, None] - (cap[:, None] * liab - (cap[:, None] - 1.0) * aI) / np.where(value > 0, value, 1.0)
    target = np.clip(g, 0.0, 1.0)
    flat_ok = aI <= cap[:, None] * (aI - liab) + TOL
    target = np.where(value > 0, target, np.where(flat_ok, 1.0, 0.0))
    return np.where(equity > 0, target, 0.0)


def run_batch(batch: GameBatch, kind: str, delta: float, max_steps: int,
              curve_steps: int) -> BatchOutcome:
    """Iterate one dynamics kind from all-ones for every game in the batch.

    Steps to convergence count update steps including the terminal one whose
    largest strategy change fell below ``delta``. Decay curves average the
    per-agent mean absolute change over runs that are still active at a step;
    converged runs drop out of the average.
    """
    step_fn = _step_exact if kind == "exact" else _step_simplified
    R, n = batch.illiquid.shape
    oq = batch.p0 @ (batch.x * batch.x).T  # per run: sum_j x_ij^2 p0_rj
    y = np.ones((R, n))
    steps = np.full(R, -1, dtype=np.int64)
    active = np.arange(R)
    curve_sum: list[float] = []
    curve_cnt: list[int] = []
    t = 0
    while active.size and t < max_steps:
        t += 1
        idx = active
        y_new = step_fn(batch.x, batch.p0[idx], batch.illiquid[idx],
                        batch.liabilities[idx], batch.cap[idx], oq[idx], y[idx])
        d = np.abs(y_new - y[idx])
        if t <= curve_steps:
            curve_sum.append(float(d.mean(axis=1).sum()))
            curve_cnt.append(int(idx.size))
        y[idx] = y_new
        conv = d.max(axis=1) <= delta
        steps[idx[conv]] = t
        active = idx[~conv]
    curve = np.column_stack([
        np.array(curve_sum) / np.maximum(1, np.array(curve_cnt)),
        np.array(curve_cnt, dtype=float),
    ]) if curve_sum else np.empty((0, 2))
    return BatchOutcome(steps, y, curve)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TauResult:
    tau: float
    runs: int
    rejections: int
    mean_steps: dict
    ci: dict  # dynamics -> (low, high) bootstrap interval of the mean
    unconverged: dict
    curves: dict  # dynamics -> (T, 2) decay curve
    steps: dict  # dynamics -> (R,) per-run step counts


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    per_tau: tuple[TauResult, ...]

    def mean_steps_table(self) -> dict:
        return {kind: [r.mean_steps[kind] for r in self.per_tau] for kind in DYNAMICS}


def _bootstrap_ci(values: np.ndarray, rng: np.random.Generator,
                  reps: int = 200) -> tuple[float, float]:
    if values.size == 0:
        return (float("nan"), float("nan"))
    means = rng.choice(values, size=(reps, values.size), replace=True).mean(axis=1)
    return (float(np.quantile(means, 0.025)), float(np.quantile(means, 0.975)))


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run both dynamics over every diversification value in the config.

    Deterministic for a fixed config: every data point gets its own Philox
    stream spawned from the config seed, and games are shared between the two
    dynamics so their convergence times are directly comparable. Each data
    point is processed as one vectorized batch, so the FIRESALE_WORKERS
    environment variable (accepted for interface compatibility) never affects
    the output bytes.
    """
    results = []
    root = np.random.SeedSequence(cfg.seed)
    streams = root.spawn(len(cfg.taus))
    for k, tau in enumerate(cfg.taus):
        rng = np.random.Generator(np.random.Philox(streams[k]))
        batch = sample_game_batch(cfg, tau, rng, cfg.runs)
        steps = {}
        mean_steps = {}
        ci = {}
        unconverged = {}
        curves = {}
        boot = np.random.Generator(np.random.Philox(streams[k].spawn(1)[0]))
        for kind in DYNAMICS:
            out = run_batch(batch, kind, cfg.delta, cfg.max_steps, cfg.curve_steps)
            good = out.steps[out.steps > 0]
            steps[kind] = out.steps
            unconverged[kind] = int((out.steps < 0).sum())
            mean_steps[kind] = float(good.mean()) if good.size else float("nan")
            ci[kind] = _bootstrap_ci(good.astype(float), boot)
            curves[kind] = out.curve
        results.append(TauResult(tau, cfg.runs, batch.rejections, mean_steps, ci,
                                 unconverged, curves, steps))
    return ExperimentResult(cfg, tuple(results))


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def write_results(result: ExperimentResult, out_dir: Union[str, Path]) -> list[Path]:
    """Write the convergence-time table and one decay-curve file per tau."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    table = out / "convergence.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "tau", "dynamics", "mean_steps", "ci_low", "ci_high",
                         "runs", "rejections", "unconverged"])
        for r in result.per_tau:
            for kind in DYNAMICS:
                writer.writerow([
                    result.config.n, repr(r.tau), kind, repr(r.mean_steps[kind]),
                    repr(r.ci[kind][0]), repr(r.ci[kind][1]),
                    r.runs, r.rejections, r.unconverged[kind],
                ])
    written.append(table)
    for r in result.per_tau:
        path = out / f"decay_tau{r.tau:.2f}.csv"
        depth = max(r.curves[kind].shape[0] for kind in DYNAMICS)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step",
                             "exact_mean_change", "exact_active",
                             "simplified_mean_change", "simplified_active"])
            for t in range(depth):
                row = [t + 1]
                for kind in DYNAMICS:
                    curve = r.curves[kind]
                    if t < curve.shape[0]:
                        row += [repr(float(curve[t, 0])), int(curve[t, 1])]
                    else:
                        row += ["", 0]
                writer.writerow(row)
        written.append(path)
    return written
