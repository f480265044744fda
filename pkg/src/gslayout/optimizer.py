"""Two-phase pose optimization over normalized physical and layout energies."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .energy import assemble
from .gscloud import Pose


class ScheduleWarning(UserWarning):
    pass


class DivergenceError(RuntimeError):
    """Raised when the raw energy blows up; ``result`` holds the partial trace."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class ScheduleConfig:
    T: int = 300
    beta: float = 0.5
    tau_p: float | None = None  # default 1e-3 per object
    x_max: int | None = None  # default T // 2
    period: float | None = None  # half-period of the optional multi-cycle mode

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.tau_p is not None and self.tau_p <= 0:
            raise ValueError("tau_p must be positive")
        if self.x_max is not None and not 0 <= self.x_max <= self.T:
            raise ValueError("x_max must lie in [0, T]")
        if self.period is not None and self.period <= 0:
            raise ValueError("period must be positive")

    def threshold(self, n_objects):
        return self.tau_p if self.tau_p is not None else 1e-3 * max(n_objects, 1)

    def cap(self):
        return self.x_max if self.x_max is not None else self.T // 2


@dataclass
class OptimConfig:
    lr_t: float = 3e-3
    lr_r: float = 2e-3
    method: str = "adam"  # or "gd"
    momentum: float = 0.9
    adam_betas: tuple = (0.5, 0.95)
    adam_eps: float = 1e-8
    lr_floor: float = 0.05  # final fraction of the step size under cosine decay; 1 disables decay
    norm_floor: float = 1e-3  # lower bound on the normalizer when scaling gradients
    guard_window: int = 50
    guard_factor: float = 10.0
    guard_floor: float = 0.1  # growth only counts above this fraction of the initial energy

    def __post_init__(self):
        if self.method not in ("adam", "gd"):
            raise ValueError("method must be 'adam' or 'gd'")
        if self.lr_t < 0 or self.lr_r < 0:
            raise ValueError("step sizes must be >= 0")


@dataclass
class OptimState:
    t: int
    poses: dict
    T: int
    beta: float
    x: int | None = None
    period: float | None = None
    history: list = field(default_factory=list)
    frozen: frozenset = frozenset()


@dataclass
class OptimResult:
    poses: dict
    trace: list
    x: int | None
    final: object  # EnergyBreakdown at the returned poses
    status: str = "ok"

    def trace_lines(self):
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.trace)


def normalize_energies(E_p, E_l):
    n = math.hypot(E_p, E_l)
    if n == 0:
        return 0.0, 0.0
    return E_p / n, E_l / n


def schedule_weights(t, x, T, beta, period=None):
    """``(lambda_p, lambda_l)``: ``(1, 0)`` before ``x``, then a cosine descent to ``1 - beta`` at ``T``.

    ``period`` replaces ``T - x`` as the half-period of the cosine so the
    weights oscillate between 1 and ``1 - beta`` several times.
    """
    if x is not None and x >= T:
        warnings.warn(f"threshold step {x} >= T={T}; clamped to {T - 1}", ScheduleWarning, stacklevel=2)
        x = T - 1
    if x is None or t < x:
        return 1.0, 0.0
    span = period if period is not None else T - x
    lam_p = 1.0 - (beta / 2.0) * (1.0 - math.cos(math.pi * (t - x) / span))
    return lam_p, 1.0 - lam_p


def _weights(state, t=None):
    t = state.t if t is None else t
    if state.x is None:
        return 1.0, 0.0
    return schedule_weights(t, state.x, state.T, state.beta, state.period)


def total_objective(scene, t, state, poses=None):
    """``lambda_p * E_p_hat + lambda_l * E_l_hat`` at step ``t``."""
    bd = assemble(scene, poses or state.poses)
    lp, ll = _weights(state, t)
    ep, el = normalize_energies(bd.E_p, bd.E_l)
    return lp * ep + ll * el


def pose_gradient(scene, label, state, h_t=1e-4, h_r=1e-4, fn=None):
    """Central finite-difference gradient of the total objective in one label's pose.

    ``fn(poses) -> float`` overrides the objective, e.g. to difference a
    single term.
    """
    if label in state.frozen:
        raise ValueError(f"label {label!r} is frozen")
    if fn is None:
        def fn(p):
            return total_objective(scene, state.t, state, p)
    g = np.zeros(6)
    base = state.poses[label]
    for i in range(6):
        h = h_t if i < 3 else h_r
        vals = []
        for s in (1.0, -1.0):
            p = dict(state.poses)
            q = base.copy()
            if i < 3:
                q.translation[i] += s * h
            else:
                q.rotation[i - 3] += s * h
            p[label] = q
            v = fn(p)
            if not np.isfinite(v):
                raise FloatingPointError(f"non-finite energy at perturbed pose of {label!r}")
            vals.append(v)
        g[i] = (vals[0] - vals[1]) / (2 * h)
    return g


def _poses_dict(poses):
    return {lab: {"translation": p.translation.tolist(), "rotation": p.rotation.tolist()}
            for lab, p in sorted(poses.items())}


def optimize(scene, schedule=None, config=None, labels=None, trace=True, callback=None):
    """Minimize the scheduled objective over the poses of ``labels`` (default: all).

    Phase 1 weighs physical energy alone until the raw ``E_p`` drops below
    the threshold or the cap step is reached; centroid reference heights are
    captured at that moment and phase 2 follows the cosine schedule.  Anchor
    latches are checked every step.  Returns an :class:`OptimResult`; raises
    :class:`DivergenceError` if the raw energy grows by ``guard_factor`` over
    ``guard_window`` steps.
    """
    schedule = schedule or ScheduleConfig()
    config = config or OptimConfig()
    all_labels = scene.graph.labels
    active = list(all_labels) if labels is None else [l for l in all_labels if l in set(labels)]
    if not active:
        raise ValueError("nothing to optimize: every label is frozen")
    frozen = frozenset(all_labels) - frozenset(active)
    scene.centroid_ref = {}  # recaptured when phase 2 starts
    poses = {lab: scene.poses[lab].copy() for lab in all_labels}
    state = OptimState(0, poses, schedule.T, schedule.beta, None, schedule.period, [], frozen)
    tau = schedule.threshold(len(all_labels))
    cap = schedule.cap()
    T = schedule.T
    lr = np.array([config.lr_t] * 3 + [config.lr_r] * 3)
    m = {lab: np.zeros(6) for lab in active}
    v = {lab: np.zeros(6) for lab in active}
    b1, b2 = config.adam_betas
    raw = []
    records = []

    for t in range(T):
        state.t = t
        scene.latch_anchors(poses)
        bd = assemble(scene, poses, with_grad=True)
        Ep, El = bd.E_p, bd.E_l
        if state.x is None and (Ep < tau or t >= cap):
            if Ep >= tau:
                warnings.warn(f"physical energy {Ep:.3g} still above threshold {tau:.3g} at step {t}; "
                              "starting the joint phase anyway", ScheduleWarning, stacklevel=2)
            state.x = t
            scene.capture_centroid_refs(poses)
            bd = assemble(scene, poses, with_grad=True)
            Ep, El = bd.E_p, bd.E_l
        lp, ll = _weights(state)
        if trace:
            records.append({"t": t, "lambda_p": lp, "lambda_l": ll, "breakdown": bd.to_dict(),
                            "poses": _poses_dict(poses)})
        state.history.append((Ep, El))
        raw.append(Ep + El)
        w = config.guard_window
        floor = max(config.guard_floor * raw[0], 1e-6)
        if t >= w and raw[t] > config.guard_factor * raw[t - w] and raw[t] > floor:
            result = OptimResult(poses, records, state.x, bd, "diverged")
            raise DivergenceError(f"energy grew from {raw[t - w]:.3g} to {raw[t]:.3g} "
                                  f"between steps {t - w} and {t}", result)
        if callback is not None:
            callback(state, bd)
        norm = max(math.hypot(Ep, El), config.norm_floor)
        decay = config.lr_floor + (1.0 - config.lr_floor) * 0.5 * (1.0 + math.cos(math.pi * t / T))
        for lab in active:
            g = (lp * bd.grad_p[lab] + ll * bd.grad_l[lab]) / norm
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {lab!r} at step {t}")
            if config.method == "adam":
                m[lab] = b1 * m[lab] + (1 - b1) * g
                # one second-moment estimate per group (translation, rotation): a small
                # component next to a large one gets a small step instead of a full one
                g2 = np.repeat([np.mean(g[:3] ** 2), np.mean(g[3:] ** 2)], 3)
                v[lab] = b2 * v[lab] + (1 - b2) * g2
                mh = m[lab] / (1 - b1 ** (t + 1))
                vh = v[lab] / (1 - b2 ** (t + 1))
                step = lr * decay * mh / (np.sqrt(vh) + config.adam_eps)
            else:
                m[lab] = config.momentum * m[lab] + g
                step = lr * decay * m[lab]
            if np.any(step):
                p = poses[lab]
                poses[lab] = Pose(p.translation - step[:3], p.rotation - step[3:])

    state.t = T
    scene.latch_anchors(poses)
    final = assemble(scene, poses)
    lp, ll = _weights(state, T)
    if trace:
        records.append({"t": T, "lambda_p": lp, "lambda_l": ll, "breakdown": final.to_dict(),
                        "poses": _poses_dict(poses)})
    return OptimResult(poses, records, state.x, final)
