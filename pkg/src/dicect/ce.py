"""Consensus-equilibrium machinery: the stacked agent map F, the weighted
averaging operator G, the fixed-point map T = (2F - I)(2G - I), damped
(Mann) iterations, and the full limited-angle reconstruction pipeline.

One reconstruction runs: complete the limited data, FBP it, pass the
result through the image agent to initialize, re-project for the
consistent data term, then iterate Mann steps on the two-agent stack and
return the weighted consensus of the final stack.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .completion import complete
from .data_agent import DataAgentConfig, DataWeights, build_weights, prox_data
from .errors import ShapeError, StageError
from .fbp import FilterSpec, fbp
from .image_agent import IdentityAgent, apply_image_agent
from .tomo import AngularMask, Geometry, Image, Sinogram, forward_project

__all__ = [
    "CEConfig",
    "AgentStack",
    "CETrace",
    "average_op",
    "reflected_average",
    "apply_F",
    "mann_step",
    "dice_reconstruct",
]


@dataclass
class CEConfig:
    """Hyperparameters of the consensus solve. The defaults (rho 0.25,
    weights 0.6/0.4, sigma^2 1e-8, 20 CG steps, 4 outer iterations) are
    the reference operating point of the pipeline.

    Note the role of sigma^2: it weights the proximity term of the data
    agent by 1/(2 sigma^2). At the default 1e-8 with uniform data weights
    and unit-scale images, that term dominates the data misfit, so each
    data-agent step is a small correction and the measured data acts
    mainly through the initialization and the re-projected consistent
    sinogram. Heavily scaled data weights (e.g. inverse-variance weights
    on low-noise data) can flip that balance."""

    rho: float = 0.25
    mu: tuple[float, float] = (0.6, 0.4)
    outer_iters: int = 4
    data_cfg: DataAgentConfig = field(default_factory=DataAgentConfig)
    image_agent: object = field(default_factory=IdentityAgent)
    convergence_tol: float | None = None
    # "post-agent" re-projects the agent-initialized image (the pipeline
    # default); "pre-agent" re-projects the raw FBP image instead.
    consistency_source: str = "post-agent"

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        mu = tuple(float(m) for m in self.mu)
        if len(mu) != 2 or any(m < 0.0 for m in mu):
            raise ValueError("mu must be two nonnegative weights")
        if abs(sum(mu) - 1.0) > 1e-12:
            raise ValueError("mu must sum to 1")
        object.__setattr__(self, "mu", mu)
        if self.outer_iters < 0:
            raise ValueError("outer_iters must be >= 0")
        if self.consistency_source not in ("post-agent", "pre-agent"):
            raise ValueError("consistency_source must be post-agent or pre-agent")


@dataclass
class AgentStack:
    """Ordered per-agent variables (z1, z2, ...), one image per agent."""

    slots: list[Image]

    def __post_init__(self):
        if not self.slots:
            raise ValueError("stack needs at least one slot")
        shape = self.slots[0].values.shape
        for s in self.slots:
            if s.values.shape != shape:
                raise ShapeError("stack slots must share dimensions")
            if not np.all(np.isfinite(s.values)):
                raise ValueError("stack slots must be finite")

    def __len__(self) -> int:
        return len(self.slots)

    def copy(self) -> "AgentStack":
        return AgentStack([s.copy() for s in self.slots])

    def values(self) -> list[np.ndarray]:
        return [s.values for s in self.slots]

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.vdot(v, v)) for v in self.values())))

    def equals(self, other: "AgentStack") -> bool:
        return len(self) == len(other) and all(
            np.array_equal(a.values, b.values) for a, b in zip(self.slots, other.slots)
        )


def _weighted_average(stack: AgentStack, mu) -> np.ndarray:
    first = stack.slots[0].values
    if all(np.array_equal(s.values, first) for s in stack.slots[1:]):
        # average of identical slots is that slot, exactly
        return first.copy()
    acc = mu[0] * stack.slots[0].values
    for m, s in zip(mu[1:], stack.slots[1:]):
        acc = acc + m * s.values
    return acc


def average_op(z: AgentStack, mu) -> AgentStack:
    """G: replace every slot by the mu-weighted average of the slots.
    Idempotent by construction (equal slots short-circuit)."""
    if len(mu) != len(z):
        raise ShapeError("one weight per slot required")
    vbar = _weighted_average(z, mu)
    tmpl = z.slots[0]
    return AgentStack([tmpl.with_values(vbar.copy()) for _ in z.slots])


def reflected_average(z: AgentStack, mu) -> AgentStack:
    """(2G - I): reflect the stack through its weighted average."""
    if len(mu) != len(z):
        raise ShapeError("one weight per slot required")
    vbar = _weighted_average(z, mu)
    return AgentStack(
        [s.with_values(2.0 * vbar - s.values) for s in z.slots]
    )


def _stack_agents(y_consistent, W, cfg: CEConfig, geom):
    data = lambda img: prox_data(img, y_consistent, W, cfg.data_cfg, geom)  # noqa: E731
    image = lambda img: apply_image_agent(img, cfg.image_agent)  # noqa: E731
    return (data, image)


def apply_F(
    v: AgentStack,
    y_consistent: Sinogram,
    W: DataWeights,
    cfg: CEConfig,
    geom: Geometry,
) -> AgentStack:
    """Stacked agent map: slot 1 through the data-fidelity proximal step,
    slot 2 through the image agent; slots are independent."""
    if len(v) != 2:
        raise ShapeError("apply_F expects a two-agent stack")
    agents = _stack_agents(y_consistent, W, cfg, geom)
    return _apply_agents(v, agents)


def _apply_agents(v: AgentStack, agents) -> AgentStack:
    out = []
    for idx, (agent, slot) in enumerate(zip(agents, v.slots)):
        try:
            out.append(agent(slot))
        except Exception as exc:
            raise StageError(f"agent[{idx}]", exc) from exc
    return AgentStack(out)


@dataclass
class MannStepRecord:
    mann_residual: float
    equilibrium_residuals: tuple[float, ...]
    wall_time: float


@dataclass
class CETrace:
    """Per-iteration diagnostics of the Mann loop."""

    mann_residuals: list[float] = field(default_factory=list)
    equilibrium_residuals: list[tuple[float, ...]] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)

    def append(self, rec: MannStepRecord):
        self.mann_residuals.append(rec.mann_residual)
        self.equilibrium_residuals.append(rec.equilibrium_residuals)
        self.wall_times.append(rec.wall_time)

    def __len__(self) -> int:
        return len(self.mann_residuals)


def mann_step(z: AgentStack, rho: float, mu, agents) -> tuple[AgentStack, MannStepRecord]:
    """One damped fixed-point step z <- rho * T z + (1 - rho) * z with
    T = (2F - I)(2G - I); ``agents`` is one callable per slot.

    rho may be 0 here (the degenerate no-motion step); configs restrict it
    to (0, 1). The equilibrium residuals recorded are ||F_i(v_i) - vbar||
    with v = (2G - I) z, which vanish at a consensus fixed point.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    t0 = time.perf_counter()
    v = reflected_average(z, mu)
    x_stack = _apply_agents(v, agents)
    vbar = _weighted_average(z, mu)
    eq_res = tuple(
        float(np.linalg.norm(xs.values - vbar)) for xs in x_stack.slots
    )
    tz = AgentStack(
        [s.with_values(2.0 * xs.values - s.values) for xs, s in zip(x_stack.slots, v.slots)]
    )
    if rho == 0.0 or tz.equals(z):
        # rho*Tz + (1-rho)*z is exactly z in either case; keep it bitwise
        z_next = z.copy()
    else:
        z_next = AgentStack(
            [
                zi.with_values(rho * ti.values + (1.0 - rho) * zi.values)
                for ti, zi in zip(tz.slots, z.slots)
            ]
        )
    z_norm = z.norm()
    diff = float(
        np.sqrt(
            sum(
                float(np.vdot(a.values - b.values, a.values - b.values))
                for a, b in zip(z_next.slots, z.slots)
            )
        )
    )
    residual = diff / z_norm if z_norm > 0.0 else (0.0 if diff == 0.0 else float("inf"))
    rec = MannStepRecord(
        mann_residual=residual,
        equilibrium_residuals=eq_res,
        wall_time=time.perf_counter() - t0,
    )
    return z_next, rec


def consensus(z: AgentStack, mu) -> Image:
    """Weighted consensus of the stack: x = sum_i mu_i z_i."""
    vbar = _weighted_average(z, mu)
    return z.slots[0].with_values(vbar)


def dice_reconstruct(
    y_limited: Sinogram,
    mask: AngularMask,
    completer,
    ce_cfg: CEConfig,
    geom: Geometry,
    fbp_filter: FilterSpec | None = None,
    weights: DataWeights | None = None,
) -> tuple[Image, CETrace]:
    """Full limited-angle reconstruction.

    Stages: complete the limited data; FBP it; initialize through the
    image agent; re-project the initialization as the consistent data
    term; run outer_iters Mann steps (optionally stopping early on the
    relative stack change); return the weighted consensus and the trace.
    A failure in any stage raises StageError carrying the stage label and
    the trace collected so far.
    """
    trace = CETrace()

    def run_stage(label, fn):
        try:
            return fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(label, exc, trace) from exc

    y_complete = run_stage("complete", lambda: complete(y_limited, mask, completer))
    x_hat = run_stage("fbp", lambda: fbp(y_complete, geom, fbp_filter))
    x0 = run_stage("image-agent-init", lambda: apply_image_agent(x_hat, ce_cfg.image_agent))
    source = x0 if ce_cfg.consistency_source == "post-agent" else x_hat
    y_consistent = run_stage("reproject", lambda: forward_project(source, geom))
    W = weights if weights is not None else build_weights(y_consistent, "uniform")

    agents = _stack_agents(y_consistent, W, ce_cfg, geom)
    z = AgentStack([x0.copy(), x0.copy()])
    z = average_op(z, ce_cfg.mu)

    for _ in range(ce_cfg.outer_iters):
        try:
            z, rec = mann_step(z, ce_cfg.rho, ce_cfg.mu, agents)
        except StageError as exc:
            exc.trace = trace
            raise
        trace.append(rec)
        if (
            ce_cfg.convergence_tol is not None
            and rec.mann_residual < ce_cfg.convergence_tol
        ):
            break

    return consensus(z, ce_cfg.mu), trace
