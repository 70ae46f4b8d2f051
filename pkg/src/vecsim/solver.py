"""Block successive majorization-minimization for the service-placement problem.

One request per passenger.  Decision variables live in three blocks:
connectivity (q), service indicators (h), and transcode-location flags
(rho).  Each outer iteration picks a block by rule (cyclic, largest
probed improvement, or seeded random), then minimizes a proximal
surrogate of the relaxed delay objective over that block with candidate
seeding plus projected gradient descent.  The relaxed solution is
thresholded to binary, checked for violations, and repaired by greedy
bit flips when needed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BLOCKS = ("q", "h", "rho")

# Feasible binary service patterns (h1, h2, h3, h4): at most one way to be
# served per level, car level and RSU level each capped at one indicator.
_H_PATTERNS = np.array(
    [
        (0, 0, 0, 0),
        (1, 0, 0, 0),
        (0, 1, 0, 0),
        (0, 0, 1, 0),
        (0, 0, 0, 1),
        (1, 0, 1, 0),
        (1, 0, 0, 1),
        (0, 1, 1, 0),
        (0, 1, 0, 1),
    ],
    dtype=float,
)

_RHO_PATTERNS = np.array([(0, 0), (1, 0), (0, 1), (1, 1)], dtype=float)


@dataclass
class SolveInstance:
    """Per-request delay coefficients plus capability masks.

    Coefficient meanings (seconds, per request): c_wifi serves from the
    car cache over Wi-Fi, c_car_tc transcodes at the car, c_rsu_dl
    downloads from the RSU, c_rsu_tc transcodes at the RSU, c_dc is the
    data-center fallback.  ub_h/ub_rho are 0/1 capability masks; a
    service path that the caches cannot provide is fixed at zero.
    """

    c_wifi: np.ndarray
    c_car_tc: np.ndarray
    c_rsu_dl: np.ndarray
    c_rsu_tc: np.ndarray
    c_dc: np.ndarray
    ub_h: np.ndarray                 # (U, 4)
    ub_rho: np.ndarray               # (U, 2)
    pair_of_request: np.ndarray      # (U,) index into pairs
    pairs: list[tuple[str, int]]     # (car_id, rsu_id) per q_r variable
    alloc_car_hz: np.ndarray         # fixed proportional allocation per request
    alloc_rsu_hz: np.ndarray
    passenger_ids: list[str]
    content_ids: list[str]
    car_compute_hz: dict[str, float] = field(default_factory=dict)
    rsu_compute_hz: dict[int, float] = field(default_factory=dict)
    cache_used_mb: dict[str, float] = field(default_factory=dict)
    cache_cap_mb: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        U = len(self.c_wifi)
        for name in ("c_wifi", "c_car_tc", "c_rsu_dl", "c_rsu_tc", "c_dc"):
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, arr)
            if arr.shape != (U,):
                raise ValueError(f"{name} must have shape ({U},)")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and nonnegative")
        self.ub_h = np.asarray(self.ub_h, dtype=float)
        self.ub_rho = np.asarray(self.ub_rho, dtype=float)
        if self.ub_h.shape != (U, 4) or self.ub_rho.shape != (U, 2):
            raise ValueError("capability masks have wrong shape")
        if not set(np.unique(self.ub_h)) <= {0.0, 1.0} or not set(np.unique(self.ub_rho)) <= {0.0, 1.0}:
            raise ValueError("capability masks must be 0/1")
        # a transcode flag requires the matching service path
        if np.any(self.ub_rho[:, 0] > self.ub_h[:, 1]) or np.any(self.ub_rho[:, 1] > self.ub_h[:, 3]):
            raise ValueError("rho capability exceeds matching h capability")
        self.pair_of_request = np.asarray(self.pair_of_request, dtype=int)
        if self.pair_of_request.shape != (U,):
            raise ValueError("pair_of_request must map every request")
        if len(self.passenger_ids) != U or len(set(self.passenger_ids)) != U:
            raise ValueError("one request per passenger required")
        self.alloc_car_hz = np.asarray(self.alloc_car_hz, dtype=float)
        self.alloc_rsu_hz = np.asarray(self.alloc_rsu_hz, dtype=float)

    @property
    def n_requests(self) -> int:
        return len(self.c_wifi)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def rsu_groups(self) -> dict[int, list[int]]:
        """Pair indices grouped by RSU (the one-car-per-RSU coupling)."""
        groups: dict[int, list[int]] = {}
        for p, (_, rsu_id) in enumerate(self.pairs):
            groups.setdefault(rsu_id, []).append(p)
        return groups

    def free_binary_count(self) -> int:
        return int(self.n_requests + self.n_pairs + self.ub_h.sum() + self.ub_rho.sum())


@dataclass
class DecisionVector:
    """Relaxed or binary decisions; every component lies in [0, 1]."""

    qu: np.ndarray      # (U,) passenger on car Wi-Fi
    qr: np.ndarray      # (P,) car connected to RSU
    h: np.ndarray       # (U, 4) service indicators
    rho: np.ndarray     # (U, 2) transcode locations

    def copy(self) -> "DecisionVector":
        return DecisionVector(self.qu.copy(), self.qr.copy(), self.h.copy(), self.rho.copy())

    def validate(self, inst: SolveInstance) -> None:
        for name, arr in (("qu", self.qu), ("qr", self.qr), ("h", self.h), ("rho", self.rho)):
            if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
                raise ValueError(f"{name} outside [0, 1]")
        if self.qu.shape != (inst.n_requests,) or self.qr.shape != (inst.n_pairs,):
            raise ValueError("decision shapes disagree with instance")

    def is_binary(self) -> bool:
        for arr in (self.qu, self.qr, self.h, self.rho):
            if not np.all((arr == 0.0) | (arr == 1.0)):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "qu": self.qu.tolist(),
            "qr": self.qr.tolist(),
            "h": self.h.tolist(),
            "rho": self.rho.tolist(),
        }


def request_delays(inst: SolveInstance, qu, qr, h, rho) -> np.ndarray:
    """Per-request delay under the cascade objective.

    tau = q_u c1 h1 + q_u c2 h2 rv
        + (1 - h1 - rv h2)(q_r c3 h3 + q_r c4 (1-rv) rr h4)
        + (1 - h1 - rv h2)(1 - h3 - rr h4) c5

    The escalation gate (1 - h1 - rv h2) multiplies the fallback chain:
    a request served at the car pays neither the RSU nor the data-center
    term, and one served at the RSU drops the data-center term.
    """
    qru = qr[inst.pair_of_request]
    h1, h2, h3, h4 = h[..., 0], h[..., 1], h[..., 2], h[..., 3]
    rv, rr = rho[..., 0], rho[..., 1]
    car_terms = qu * inst.c_wifi * h1 + qu * inst.c_car_tc * h2 * rv
    gate_car = 1.0 - h1 - rv * h2
    rsu_inner = qru * inst.c_rsu_dl * h3 + qru * inst.c_rsu_tc * (1.0 - rv) * rr * h4
    gate_rsu = 1.0 - h3 - rr * h4
    return car_terms + gate_car * rsu_inner + gate_car * gate_rsu * inst.c_dc


def total_delay(dv: DecisionVector, inst: SolveInstance) -> float:
    return float(request_delays(inst, dv.qu, dv.qr, dv.h, dv.rho).sum())


def _block_get(dv: DecisionVector, block: str):
    if block == "q":
        return np.concatenate([dv.qu, dv.qr])
    if block == "h":
        return dv.h.copy()
    if block == "rho":
        return dv.rho.copy()
    raise ValueError(f"unknown block {block!r}")


def _block_set(dv: DecisionVector, block: str, x) -> DecisionVector:
    out = dv.copy()
    if block == "q":
        out.qu = x[: len(dv.qu)].copy()
        out.qr = x[len(dv.qu):].copy()
    elif block == "h":
        out.h = x.copy()
    elif block == "rho":
        out.rho = x.copy()
    else:
        raise ValueError(f"unknown block {block!r}")
    return out


def surrogate_value(
    inst: SolveInstance,
    dv: DecisionVector,
    block: str,
    x,
    anchor,
    alpha: float,
) -> float:
    """Proximal surrogate: F with block `block` set to x (others from dv)
    plus (alpha/2) ||x - anchor||^2.  Tight at x = anchor."""
    trial = _block_set(dv, block, x)
    prox = 0.5 * alpha * float(((x - anchor) ** 2).sum())
    return total_delay(trial, inst) + prox


# --------------------------------------------------------------------------
# Projections

def _project_pair_capped(p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Project rows of p=(a, b) onto {lo <= x <= hi, a + b <= 1}.

    Exact closed form: box clip, and when the sum cap binds, the nearest
    point on the segment a + b = 1 inside the box.
    """
    y = np.clip(p, lo, hi)
    over = y.sum(axis=1) > 1.0 + 1e-15
    if np.any(over):
        a, b = p[over, 0], p[over, 1]
        t_lo = np.maximum(lo[over, 0], 1.0 - hi[over, 1])
        t_hi = np.minimum(hi[over, 0], 1.0 - lo[over, 1])
        t = np.clip((a - b + 1.0) / 2.0, t_lo, t_hi)
        y[over, 0] = t
        y[over, 1] = 1.0 - t
    return y


def _project_capped_simplex(p: np.ndarray, lo: np.ndarray, cap: float) -> np.ndarray:
    """Project p onto {lo <= x <= 1, sum(x) <= cap} by dual bisection."""
    y = np.clip(p, lo, 1.0)
    if y.sum() <= cap + 1e-15:
        return y
    # find lam with sum(clip(p - lam, lo, 1)) == cap; monotone in lam
    lam_lo, lam_hi = 0.0, float((p - lo).max()) + 1.0
    for _ in range(100):
        lam = 0.5 * (lam_lo + lam_hi)
        s = np.clip(p - lam, lo, 1.0).sum()
        if s > cap:
            lam_lo = lam
        else:
            lam_hi = lam
    return np.clip(p - lam_hi, lo, 1.0)


def _project_block(inst: SolveInstance, dv: DecisionVector, block: str, x):
    """Feasible-set projection for one block, holding the others at dv."""
    U = inst.n_requests
    if block == "q":
        qu, qr = x[:U], x[U:]
        lb_qu = np.maximum(dv.h[:, 0], dv.h[:, 1])
        qu = np.clip(qu, lb_qu, 1.0)
        lb_qr = np.zeros(inst.n_pairs)
        hmax = np.maximum(dv.h[:, 2], dv.h[:, 3])
        np.maximum.at(lb_qr, inst.pair_of_request, hmax)
        qr = qr.copy()
        for _, idxs in inst.rsu_groups().items():
            idxs = np.array(idxs)
            qr[idxs] = _project_capped_simplex(qr[idxs], lb_qr[idxs], 1.0)
        return np.concatenate([qu, qr])
    if block == "h":
        qru = dv.qr[inst.pair_of_request]
        lo = np.zeros((U, 4))
        lo[:, 1] = dv.rho[:, 0]          # serving flag cannot drop below its rho
        lo[:, 3] = dv.rho[:, 1]
        hi = inst.ub_h * np.column_stack([dv.qu, dv.qu, qru, qru])
        hi = np.maximum(hi, lo)          # guard: keep the set nonempty
        y = np.empty_like(x)
        y[:, :2] = _project_pair_capped(x[:, :2], lo[:, :2], hi[:, :2])
        y[:, 2:] = _project_pair_capped(x[:, 2:], lo[:, 2:], hi[:, 2:])
        return y
    if block == "rho":
        hi = inst.ub_rho * np.column_stack([dv.h[:, 1], dv.h[:, 3]])
        return np.clip(x, 0.0, hi)
    raise ValueError(f"unknown block {block!r}")


def _block_gradient(inst: SolveInstance, dv: DecisionVector, block: str, x, anchor, alpha: float):
    """Analytic gradient of the surrogate w.r.t. the block variables."""
    trial = _block_set(dv, block, x)
    qu, qr, h, rho = trial.qu, trial.qr, trial.h, trial.rho
    qru = qr[inst.pair_of_request]
    h1, h2, h3, h4 = h[:, 0], h[:, 1], h[:, 2], h[:, 3]
    rv, rr = rho[:, 0], rho[:, 1]
    gate_car = 1.0 - h1 - rv * h2
    gate_rsu = 1.0 - h3 - rr * h4
    rsu_inner = qru * inst.c_rsu_dl * h3 + qru * inst.c_rsu_tc * (1.0 - rv) * rr * h4
    if block == "q":
        g_qu = inst.c_wifi * h1 + inst.c_car_tc * h2 * rv
        contrib = gate_car * (inst.c_rsu_dl * h3 + inst.c_rsu_tc * (1.0 - rv) * rr * h4)
        g_qr = np.zeros(inst.n_pairs)
        np.add.at(g_qr, inst.pair_of_request, contrib)
        grad = np.concatenate([g_qu, g_qr])
    elif block == "h":
        grad = np.empty_like(x)
        grad[:, 0] = qu * inst.c_wifi - rsu_inner - gate_rsu * inst.c_dc
        grad[:, 1] = rv * (qu * inst.c_car_tc - rsu_inner - gate_rsu * inst.c_dc)
        grad[:, 2] = gate_car * (qru * inst.c_rsu_dl - inst.c_dc)
        grad[:, 3] = rr * gate_car * (qru * inst.c_rsu_tc * (1.0 - rv) - inst.c_dc)
    elif block == "rho":
        grad = np.empty_like(x)
        grad[:, 0] = h2 * (
            qu * inst.c_car_tc - rsu_inner - gate_rsu * inst.c_dc
        ) - gate_car * qru * inst.c_rsu_tc * rr * h4
        grad[:, 1] = h4 * gate_car * (qru * inst.c_rsu_tc * (1.0 - rv) - inst.c_dc)
    else:
        raise ValueError(f"unknown block {block!r}")
    return grad + alpha * (x - anchor)


def _candidate_start(inst: SolveInstance, dv: DecisionVector, block: str, anchor, alpha: float):
    """Best of the anchor and the projected binary service patterns.

    The surrogate restricted to one request is independent of the others,
    so the best pattern can be picked per request.  This matters: the
    cascade objective has a local minimum at the all-fallback point where
    plain gradient steps stall.
    """
    if block == "q":
        lo = _project_block(inst, dv, "q", np.zeros(inst.n_requests + inst.n_pairs))
        hi = _project_block(inst, dv, "q", np.ones(inst.n_requests + inst.n_pairs))
        cands = [anchor, lo, hi]
        vals = [surrogate_value(inst, dv, "q", c, anchor, alpha) for c in cands]
        return cands[int(np.argmin(vals))].copy()

    patterns = _H_PATTERNS if block == "h" else _RHO_PATTERNS
    U = inst.n_requests
    width = patterns.shape[1]
    grid = np.broadcast_to(patterns[:, None, :], (len(patterns), U, width)).copy()
    projected = np.stack([_project_block(inst, dv, block, grid[i]) for i in range(len(patterns))])
    # per-request surrogate pieces for every pattern
    trial = dv.copy()
    per_req = np.empty((len(patterns), U))
    for i in range(len(patterns)):
        if block == "h":
            tau = request_delays(inst, trial.qu, trial.qr, projected[i], trial.rho)
        else:
            tau = request_delays(inst, trial.qu, trial.qr, trial.h, projected[i])
        per_req[i] = tau + 0.5 * alpha * ((projected[i] - anchor) ** 2).sum(axis=1)
    anchor_tau = (
        request_delays(inst, dv.qu, dv.qr, anchor if block == "h" else dv.h,
                       anchor if block == "rho" else dv.rho)
    )
    best_idx = per_req.argmin(axis=0)
    start = projected[best_idx, np.arange(U)]
    # never worse than the anchor, request by request
    worse = per_req[best_idx, np.arange(U)] > anchor_tau + 1e-15
    start[worse] = anchor[worse]
    return start


def minimize_block(
    inst: SolveInstance,
    dv: DecisionVector,
    block: str,
    alpha: float = 1.0,
    tol: float = 1e-8,
    max_steps: int = 200,
    light: bool = False,
) -> tuple[DecisionVector, float]:
    """Minimize the proximal surrogate over one block.

    Seeds from the best feasible service pattern per request, then runs
    projected gradient descent with backtracking until the step norm
    falls below tol.  Returns (updated decisions, surrogate decrease);
    the surrogate never increases.  light=True runs a single gradient
    step after seeding (used for selection-rule probes).
    """
    if block not in BLOCKS:
        raise ValueError(f"unknown block {block!r}")
    anchor = _block_get(dv, block)
    f_anchor = surrogate_value(inst, dv, block, anchor, anchor, alpha)
    x = _candidate_start(inst, dv, block, anchor, alpha)
    fx = surrogate_value(inst, dv, block, x, anchor, alpha)
    if fx > f_anchor:
        x, fx = anchor.copy(), f_anchor

    step = 1.0
    steps = 1 if light else max_steps
    for _ in range(steps):
        g = _block_gradient(inst, dv, block, x, anchor, alpha)
        moved = False
        norm2 = 0.0
        while step >= 1e-14:
            xn = _project_block(inst, dv, block, x - step * g)
            fn = surrogate_value(inst, dv, block, xn, anchor, alpha)
            diff = xn - x
            norm2 = float((diff**2).sum())
            if fn <= fx - 0.25 * norm2 / max(step, 1e-14) + 1e-15:
                moved = norm2 > 0
                x, fx = xn, fn
                step = min(step * 1.5, 1e3)
                break
            step *= 0.5
        if not moved or np.sqrt(norm2) <= tol * (1.0 + float(np.abs(x).max())):
            break
    return _block_set(dv, block, x), f_anchor - fx


def select_block(rule: str, t: int, rng: np.random.Generator | None = None) -> str:
    """Scheduling for cyclic and randomized rules (largest-improvement
    selection needs probe results and lives in solve())."""
    if rule == "cyclic":
        return BLOCKS[t % len(BLOCKS)]
    if rule == "random":
        if rng is None:
            raise ValueError("randomized rule needs a generator")
        return BLOCKS[int(rng.integers(0, len(BLOCKS)))]
    raise ValueError(f"unknown selection rule {rule!r}")


# --------------------------------------------------------------------------
# Rounding, violations, repair

def round_solution(dv: DecisionVector, threshold: float = 0.5) -> DecisionVector:
    """Threshold to binary (component >= threshold becomes 1), then restore
    the coupling order: service needs connectivity, a transcode location
    needs its service flag, one indicator per level."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    b = DecisionVector(
        (dv.qu >= threshold).astype(float),
        (dv.qr >= threshold).astype(float),
        (dv.h >= threshold).astype(float),
        (dv.rho >= threshold).astype(float),
    )
    # at most one indicator per level; keep the larger relaxed value
    for a_col, b_col in ((0, 1), (2, 3)):
        both = (b.h[:, a_col] == 1) & (b.h[:, b_col] == 1)
        drop_a = both & (dv.h[:, b_col] > dv.h[:, a_col])
        b.h[drop_a, a_col] = 0.0
        b.h[both & ~drop_a, b_col] = 0.0
    b.h[:, 0] = np.minimum(b.h[:, 0], b.qu)
    b.h[:, 1] = np.minimum(b.h[:, 1], b.qu)
    return _cascade_consistency(b)


def _cascade_consistency(b: DecisionVector) -> DecisionVector:
    b.rho[:, 0] = np.minimum(b.rho[:, 0], b.h[:, 1])
    b.rho[:, 1] = np.minimum(b.rho[:, 1], b.h[:, 3])
    return b


def enforce_coupling(b: DecisionVector, inst: SolveInstance) -> DecisionVector:
    """Zero any service flag whose connectivity is off (binary vectors)."""
    qru = b.qr[inst.pair_of_request]
    b.h[:, 0] = np.minimum(b.h[:, 0], b.qu)
    b.h[:, 1] = np.minimum(b.h[:, 1], b.qu)
    b.h[:, 2] = np.minimum(b.h[:, 2], qru)
    b.h[:, 3] = np.minimum(b.h[:, 3], qru)
    return _cascade_consistency(b)


@dataclass(frozen=True)
class Violation:
    assignment: float   # RSUs claimed by more than one car
    compute: float      # Hz over budget
    cache: float        # Mb over capacity

    @property
    def total(self) -> float:
        return self.assignment + self.compute + self.cache


def violation(dv: DecisionVector, inst: SolveInstance) -> Violation:
    """Constraint slack of a binary decision vector."""
    va = 0.0
    for _, idxs in inst.rsu_groups().items():
        va += max(0.0, float(dv.qr[np.array(idxs)].sum()) - 1.0)

    qru = dv.qr[inst.pair_of_request]
    car_use: dict[str, float] = {}
    rsu_use: dict[int, float] = {}
    for u in range(inst.n_requests):
        car_id, rsu_id = inst.pairs[inst.pair_of_request[u]]
        car_use[car_id] = car_use.get(car_id, 0.0) + (
            dv.qu[u] * dv.h[u, 1] * dv.rho[u, 0] * inst.alloc_car_hz[u]
        )
        rsu_use[rsu_id] = rsu_use.get(rsu_id, 0.0) + (
            qru[u] * dv.h[u, 3] * dv.rho[u, 1] * inst.alloc_rsu_hz[u]
        )
    vp = 0.0
    for car_id, used in car_use.items():
        cap = inst.car_compute_hz.get(car_id, np.inf)
        vp += max(0.0, used - cap)
    for rsu_id, used in rsu_use.items():
        cap = inst.rsu_compute_hz.get(rsu_id, np.inf)
        vp += max(0.0, used - cap)

    vc = 0.0
    for owner, used in inst.cache_used_mb.items():
        cap = inst.cache_cap_mb.get(owner, np.inf)
        vc += max(0.0, used - cap)
    return Violation(va, vp, vc)


def integrality_gap(rounded_objective: float, beta: float, violation_total: float) -> float:
    """phi = F / (F + beta * Delta); equals 1 exactly when Delta = 0."""
    denom = rounded_objective + beta * violation_total
    if denom == 0.0:
        raise ValueError("undefined integrality gap: zero objective and zero violation")
    return rounded_objective / denom


def repair(
    dv: DecisionVector,
    inst: SolveInstance,
    beta: float,
    max_flips: int = 50,
) -> tuple[DecisionVector, int]:
    """Greedy feasibility repair on a binary vector.

    Repeatedly flips the single variable whose flip (with coupling
    cascade) most reduces the violation, breaking ties by the penalized
    objective.  Stops at zero violation or after max_flips.
    """
    cur = dv.copy()
    flips = 0
    v = violation(cur, inst)
    while v.total > 0 and flips < max_flips:
        best = None
        for kind, idx in _flip_sites(cur, inst):
            trial = _apply_flip(cur, inst, kind, idx)
            tv = violation(trial, inst)
            tf = total_delay(trial, inst) + beta * tv.total
            key = (tv.total, tf, kind, idx if isinstance(idx, int) else idx[0])
            if best is None or key < best[0]:
                best = (key, trial, tv)
        if best is None or best[2].total >= v.total:
            break  # no flip helps
        cur, v = best[1], best[2]
        flips += 1
    return cur, flips


def _flip_sites(dv: DecisionVector, inst: SolveInstance):
    for p in range(inst.n_pairs):
        yield ("qr", p)
    for u in range(inst.n_requests):
        yield ("qu", u)
        for c in range(4):
            if dv.h[u, c] == 1 or inst.ub_h[u, c] == 1:
                yield ("h", (u, c))
        for c in range(2):
            if dv.rho[u, c] == 1 or inst.ub_rho[u, c] == 1:
                yield ("rho", (u, c))


def _apply_flip(dv: DecisionVector, inst: SolveInstance, kind: str, idx) -> DecisionVector:
    out = dv.copy()
    if kind == "qr":
        out.qr[idx] = 1.0 - out.qr[idx]
    elif kind == "qu":
        out.qu[idx] = 1.0 - out.qu[idx]
    elif kind == "h":
        out.h[idx] = 1.0 - out.h[idx]
    else:
        out.rho[idx] = 1.0 - out.rho[idx]
    return enforce_coupling(out, inst)


# --------------------------------------------------------------------------
# Outer loop

@dataclass(frozen=True)
class SolveConfig:
    rule: str = "cyclic"            # cyclic | gs | random
    alpha: float = 1.0              # proximal weight, per block
    beta: float | None = None       # violation penalty; None -> 10x DC scale
    round_threshold: float = 0.5
    epsilon: float = 1e-6           # |delta F| convergence tolerance
    max_iter: int = 500
    seed: int = 0
    pgd_tol: float = 1e-8
    pgd_max_steps: int = 200
    repair_max_flips: int = 50


@dataclass
class IterationRecord:
    t: int
    block: str
    objective: float
    delta: float
    rounded_violation: float
    compute_sample_hz: float


@dataclass
class SolveReport:
    rule: str
    iterations: list[IterationRecord]
    converged: bool
    relaxed_objective: float
    relaxed: DecisionVector
    rounded: DecisionVector
    rounded_objective: float
    violation: Violation
    penalized_objective: float
    integrality_gap: float
    accepted: bool
    repair_flips: int
    beta: float
    wall_time_s: float  # informational; excluded from serialized exports

    @property
    def objective_trajectory(self) -> list[float]:
        return [r.objective for r in self.iterations]

    @property
    def compute_samples_hz(self) -> list[float]:
        return [r.compute_sample_hz for r in self.iterations]

    def to_dict(self) -> dict:
        """Deterministic content only (no wall time)."""
        return {
            "rule": self.rule,
            "converged": self.converged,
            "iterations": [
                {
                    "t": r.t,
                    "block": r.block,
                    "objective": r.objective,
                    "delta": r.delta,
                    "rounded_violation": r.rounded_violation,
                    "compute_sample_hz": r.compute_sample_hz,
                }
                for r in self.iterations
            ],
            "relaxed_objective": self.relaxed_objective,
            "rounded": self.rounded.to_dict(),
            "rounded_objective": self.rounded_objective,
            "violation": {
                "assignment": self.violation.assignment,
                "compute": self.violation.compute,
                "cache": self.violation.cache,
                "total": self.violation.total,
            },
            "penalized_objective": self.penalized_objective,
            "integrality_gap": self.integrality_gap,
            "accepted": self.accepted,
            "repair_flips": self.repair_flips,
            "beta": self.beta,
        }


def initial_point(inst: SolveInstance) -> DecisionVector:
    """Feasible interior start: every passenger on Wi-Fi, each RSU
    granted to the car with the largest potential delay saving, and all
    capable service/transcode flags opened halfway.

    The half-open flags matter: service-by-transcode appears in the
    objective only through the products h2*rho_v and h4*rho_r, so at an
    all-zero start each factor has zero partial derivative and no single
    block can switch the pair on.
    """
    qu = np.ones(inst.n_requests)
    qr = np.zeros(inst.n_pairs)
    best_serve = np.full(inst.n_requests, np.inf)
    for col, coef in ((0, inst.c_wifi), (1, inst.c_car_tc), (2, inst.c_rsu_dl), (3, inst.c_rsu_tc)):
        avail = inst.ub_h[:, col] == 1
        best_serve[avail] = np.minimum(best_serve[avail], coef[avail])
    saving = np.maximum(0.0, inst.c_dc - np.where(np.isfinite(best_serve), best_serve, inst.c_dc))
    pair_saving = np.zeros(inst.n_pairs)
    np.add.at(pair_saving, inst.pair_of_request, saving)
    for _, idxs in inst.rsu_groups().items():
        arr = np.array(idxs)
        qr[arr[int(np.argmax(pair_saving[arr]))]] = 1.0
    qru = qr[inst.pair_of_request]
    h = 0.5 * inst.ub_h * np.stack([qu, qu, qru, qru], axis=1)
    rho = np.minimum(0.5 * inst.ub_rho, h[:, [1, 3]])
    return DecisionVector(qu, qr, h, rho)


def _compute_sample(dv: DecisionVector, inst: SolveInstance) -> float:
    """Cycles/s engaged by (relaxed) transcode activity at this state."""
    qru = dv.qr[inst.pair_of_request]
    car = dv.qu * dv.h[:, 1] * dv.rho[:, 0] * inst.alloc_car_hz
    rsu = qru * dv.h[:, 3] * dv.rho[:, 1] * inst.alloc_rsu_hz
    return float(car.sum() + rsu.sum())


def solve(inst: SolveInstance, config: SolveConfig = SolveConfig()) -> SolveReport:
    """Run the block successive minimization to convergence.

    Convergence: every block's most recent update (since the last
    significant change) improved the objective by at most epsilon.  The
    relaxed objective trajectory is asserted nonincreasing on every
    iteration.
    """
    if config.rule not in ("cyclic", "gs", "random"):
        raise ValueError(f"unknown selection rule {config.rule!r}")
    t_start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    beta = config.beta if config.beta is not None else 10.0 * float(inst.c_dc.max(initial=0.0))
    if beta <= 0:
        beta = 1.0

    dv = initial_point(inst)
    dv.validate(inst)
    F = total_delay(dv, inst)
    stale = {b: False for b in BLOCKS}
    records: list[IterationRecord] = []
    t = 0
    while t < config.max_iter and not all(stale.values()):
        if config.rule == "gs":
            # probe every block lightly; take the largest improvement
            best_block, best_gain = None, -1.0
            for b in BLOCKS:
                _, gain = minimize_block(
                    inst, dv, b, config.alpha, config.pgd_tol, config.pgd_max_steps, light=True
                )
                if gain > best_gain + 1e-15:
                    best_block, best_gain = b, gain
            if best_gain <= config.epsilon:
                for b in BLOCKS:
                    stale[b] = True
            block = best_block
        else:
            block = select_block(config.rule, t, rng)
        if all(stale.values()):
            break
        new_dv, _ = minimize_block(
            inst, dv, block, config.alpha, config.pgd_tol, config.pgd_max_steps
        )
        new_F = total_delay(new_dv, inst)
        if new_F > F + 1e-9:
            raise RuntimeError(
                f"objective increased at iteration {t} ({F} -> {new_F}); surrogate broken"
            )
        delta = F - new_F
        if delta <= config.epsilon:
            stale[block] = True
        else:
            stale = {b: False for b in BLOCKS}
            stale[block] = True
        dv, F = new_dv, new_F
        rounded_now = enforce_coupling(round_solution(dv, config.round_threshold), inst)
        records.append(
            IterationRecord(
                t=t,
                block=block,
                objective=F,
                delta=delta,
                rounded_violation=violation(rounded_now, inst).total,
                compute_sample_hz=_compute_sample(dv, inst),
            )
        )
        t += 1

    converged = all(stale.values())
    rounded = enforce_coupling(round_solution(dv, config.round_threshold), inst)
    v = violation(rounded, inst)
    flips = 0
    if v.total > 0:
        rounded, flips = repair(rounded, inst, beta, config.repair_max_flips)
        v = violation(rounded, inst)
    F_rounded = total_delay(rounded, inst)
    # Exact per-request clean-up of the rounded point with the RSU grants
    # held fixed.  Requests decouple given q, so this never worsens the
    # objective, and it cannot add violations: q is untouched and any
    # subset of the precomputed compute allocations fits the capacity.
    F_polished, polished = _best_given_qr(inst, rounded.qr)
    if F_polished < F_rounded:
        rounded, F_rounded = polished, F_polished
        v = violation(rounded, inst)
    # One-swap descent over the RSU grants themselves: regrant each RSU
    # to every other contender (or to nobody) and keep any strict win.
    # Each trial keeps at most one grant per RSU, so feasibility holds.
    groups = inst.rsu_groups()
    for _ in range(10):
        improved = False
        for idxs in groups.values():
            arr = np.array(idxs)
            for cand in (None, *idxs):
                trial_qr = rounded.qr.copy()
                trial_qr[arr] = 0.0
                if cand is not None:
                    trial_qr[cand] = 1.0
                if np.array_equal(trial_qr, rounded.qr):
                    continue
                F_t, dv_t = _best_given_qr(inst, trial_qr)
                if F_t < F_rounded - 1e-12:
                    rounded, F_rounded = dv_t, F_t
                    improved = True
        if not improved:
            break
    v = violation(rounded, inst)
    penalized = F_rounded + beta * v.total
    gap = integrality_gap(F_rounded, beta, v.total)
    return SolveReport(
        rule=config.rule,
        iterations=records,
        converged=converged,
        relaxed_objective=F,
        relaxed=dv,
        rounded=rounded,
        rounded_objective=F_rounded,
        violation=v,
        penalized_objective=penalized,
        integrality_gap=gap,
        accepted=bool(gap <= 1.0),
        repair_flips=flips,
        beta=beta,
        wall_time_s=time.perf_counter() - t_start,
    )


# --------------------------------------------------------------------------
# Exhaustive reference

BRUTE_FORCE_CAP = 22


def brute_force_solve(
    inst: SolveInstance,
    max_binary_vars: int = BRUTE_FORCE_CAP,
) -> tuple[float, DecisionVector]:
    """Exact optimum over all feasible binary assignments.

    Requests decouple once the car-RSU connections are fixed, so the
    enumeration walks RSU assignments and minimizes each request locally;
    the result equals a full product-space enumeration.  Refuses
    instances with more than max_binary_vars free binary variables.
    """
    n_free = inst.free_binary_count()
    if n_free > max_binary_vars:
        raise ValueError(
            f"instance has {n_free} free binary variables, above the cap of {max_binary_vars}"
        )

    groups = inst.rsu_groups()
    group_keys = sorted(groups)
    options = [[None, *groups[k]] for k in group_keys]  # None = RSU unassigned

    best_F, best_dv = np.inf, None
    idx = [0] * len(options)
    while True:
        qr = np.zeros(inst.n_pairs)
        for gi, opt in enumerate(idx):
            choice = options[gi][opt]
            if choice is not None:
                qr[choice] = 1.0
        F, dv = _best_given_qr(inst, qr)
        if F < best_F - 1e-12:
            best_F, best_dv = F, dv
        # odometer increment
        g = 0
        while g < len(options):
            idx[g] += 1
            if idx[g] < len(options[g]):
                break
            idx[g] = 0
            g += 1
        if g == len(options):
            break
    return best_F, best_dv


def _best_given_qr(inst: SolveInstance, qr: np.ndarray) -> tuple[float, DecisionVector]:
    """Optimal per-request local variables for fixed RSU assignment."""
    U = inst.n_requests
    qru = qr[inst.pair_of_request]
    dv = DecisionVector(np.zeros(U), qr.copy(), np.zeros((U, 4)), np.zeros((U, 2)))
    total = 0.0
    for u in range(U):
        best = None
        for qu in (0.0, 1.0):
            for hp in _H_PATTERNS:
                h1, h2, h3, h4 = hp
                if (h1 or h2) and qu == 0.0:
                    continue
                if (h3 or h4) and qru[u] == 0.0:
                    continue
                if h1 > inst.ub_h[u, 0] or h2 > inst.ub_h[u, 1]:
                    continue
                if h3 > inst.ub_h[u, 2] or h4 > inst.ub_h[u, 3]:
                    continue
                rv_opts = (0.0, 1.0) if (h2 and inst.ub_rho[u, 0]) else (0.0,)
                rr_opts = (0.0, 1.0) if (h4 and inst.ub_rho[u, 1]) else (0.0,)
                for rv in rv_opts:
                    for rr in rr_opts:
                        gate_car = 1.0 - h1 - rv * h2
                        gate_rsu = 1.0 - h3 - rr * h4
                        tau = (
                            qu * inst.c_wifi[u] * h1
                            + qu * inst.c_car_tc[u] * h2 * rv
                            + gate_car
                            * (
                                qru[u] * inst.c_rsu_dl[u] * h3
                                + qru[u] * inst.c_rsu_tc[u] * (1.0 - rv) * rr * h4
                                + gate_rsu * inst.c_dc[u]
                            )
                        )
                        key = (tau, qu, h1, h2, h3, h4, rv, rr)
                        if best is None or key < best:
                            best = key
        tau, qu, h1, h2, h3, h4, rv, rr = best
        total += float(tau)
        dv.qu[u] = qu
        dv.h[u] = (h1, h2, h3, h4)
        dv.rho[u] = (rv, rr)
    return total, dv
