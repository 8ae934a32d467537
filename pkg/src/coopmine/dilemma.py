"""Social-dilemma payoffs and fair zero-determinant strategies.

An n-player game where everyone either cooperates or deserts.  a_j is the
utility of a cooperator and b_j of a deserter when j co-players cooperate.
The three dilemma properties (more cooperating co-players help everyone;
deserting strictly beats cooperating; full cooperation beats full
desertion) are validated on construction with per-index reporting.

A fair ZD strategy p = p_repeat + phi (g_own - g_coplayers) equalizes a
player's long-run utility with the co-player average regardless of what
the co-players do.  phi scales how fast utilities converge and is bounded
by the requirement that every entry of p stays a probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ValidationError

__all__ = [
    "DilemmaPayoffs",
    "ZDStrategy",
    "build_payoffs",
    "coplayer_payoffs",
    "max_phi",
    "fair_strategy",
]

_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class DilemmaPayoffs:
    """Validated utility vectors of an n-player social dilemma."""

    n: int
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if self.n < 2:
            raise ValidationError("a social dilemma needs n >= 2 players")
        if a.shape != (self.n,) or b.shape != (self.n,):
            raise ValidationError(
                f"payoff vectors must have length n={self.n}, "
                f"got {a.shape} and {b.shape}"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValidationError("payoffs must be finite")
        bad = []
        for j in np.nonzero(np.diff(a) < 0)[0]:
            bad.append(f"a[{j + 1}] < a[{j}] breaks monotonicity")
        for j in np.nonzero(np.diff(b) < 0)[0]:
            bad.append(f"b[{j + 1}] < b[{j}] breaks monotonicity")
        # strict dominance of desertion, checked index by index; this also
        # rejects symmetric payoffs (a identical to b)
        for j in np.nonzero(b <= a)[0]:
            bad.append(f"b[{j}] <= a[{j}]: desertion does not dominate")
        for j in np.nonzero(b[1:] <= a[:-1])[0]:
            bad.append(f"b[{j + 1}] <= a[{j}]: desertion does not dominate")
        if a[-1] <= b[0]:
            bad.append(f"a[{self.n - 1}] <= b[0]: mutual cooperation not promoted")
        if bad:
            shown = "; ".join(bad[:8])
            more = f" (+{len(bad) - 8} more)" if len(bad) > 8 else ""
            raise ValidationError(f"not a social dilemma: {shown}{more}")


def build_payoffs(
    a_top: float, a_bottom: float, b_top: float, b_bottom: float, n: int
) -> DilemmaPayoffs:
    """Linear payoff vectors: a_0 = a_bottom up to a_{n-1} = a_top, same
    for b.  Validation happens in the DilemmaPayoffs constructor."""
    if n < 2:
        raise ValidationError("a social dilemma needs n >= 2 players")
    return DilemmaPayoffs(
        n=n,
        a=np.linspace(a_bottom, a_top, n),
        b=np.linspace(b_bottom, b_top, n),
    )


def coplayer_payoffs(payoffs: DilemmaPayoffs) -> tuple[np.ndarray, np.ndarray]:
    """Average co-player utilities (g_C, g_D) indexed by j.

    g_C[j]: I cooperate, j co-players cooperate, the other n-1-j desert
    alongside j+1 cooperators each.  g_D[j]: I desert, the j cooperators
    see j-1 cooperating co-players.  Boundary terms carry a zero
    coefficient, so the out-of-range index never contributes.
    """
    n, a, b = payoffs.n, payoffs.a, payoffs.b
    j = np.arange(n, dtype=float)
    g_c = np.empty(n)
    g_d = np.empty(n)
    g_c[:-1] = (j[:-1] * a[:-1] + (n - 1 - j[:-1]) * b[1:]) / (n - 1)
    g_c[-1] = a[-1]
    g_d[0] = b[0]
    g_d[1:] = (j[1:] * a[:-1] + (n - 1 - j[1:]) * b[1:]) / (n - 1)
    return g_c, g_d


@dataclass(frozen=True)
class ZDStrategy:
    """Memory-one strategy: cooperate next with p_cooperate[j] after
    cooperating, p_desert[j] after deserting, given j cooperating
    co-players.  Immutable and shareable across agents."""

    p_cooperate: np.ndarray = field(repr=False)
    p_desert: np.ndarray = field(repr=False)
    phi: float = 0.0

    def __post_init__(self):
        pc = np.asarray(self.p_cooperate, dtype=float)
        pd = np.asarray(self.p_desert, dtype=float)
        object.__setattr__(self, "p_cooperate", pc)
        object.__setattr__(self, "p_desert", pd)
        if pc.shape != pd.shape or pc.ndim != 1:
            raise ValidationError("strategy vectors must share one length")
        for name, v in (("p_cooperate", pc), ("p_desert", pd)):
            if np.any(v < -_EDGE_TOL) or np.any(v > 1 + _EDGE_TOL):
                worst = int(np.argmax(np.abs(v - 0.5)))
                raise ValidationError(
                    f"{name}[{worst}] = {v[worst]!r} is not a probability"
                )

    @property
    def n(self) -> int:
        return self.p_cooperate.shape[0]


def max_phi(payoffs: DilemmaPayoffs) -> tuple[float, float]:
    """Admissible phi interval [0, phi_max] for the fair strategy.

    The 2n probability constraints reduce to phi <= 1/(g_C_coplayers -
    a) componentwise and phi <= 1/(b - g_D_coplayers); the other sides
    hold automatically because desertion dominates.
    """
    g_c, g_d = coplayer_payoffs(payoffs)
    diff_c = g_c - payoffs.a  # >= 0: co-players of a cooperator do better
    diff_d = payoffs.b - g_d  # >= 0: a deserter does better than its crowd
    bound = max(diff_c.max(), diff_d.max())
    if bound <= 0:
        raise ValidationError("degenerate payoffs: no binding phi constraint")
    return 0.0, 1.0 / bound


def fair_strategy(payoffs: DilemmaPayoffs, phi: float) -> ZDStrategy:
    """The fair ZD strategy for the given phi.

    p_C[j] = 1 - phi (g_C_coplayers[j] - a[j]); p_D[j] = phi (b[j] -
    g_D_coplayers[j]).  Every component must land in [0, 1]; otherwise
    the binding constraint is reported.  phi = 0 degenerates to the
    repeat strategy.
    """
    if phi < 0:
        raise ValidationError("phi must be >= 0")
    g_c, g_d = coplayer_payoffs(payoffs)
    p_c = 1.0 - phi * (g_c - payoffs.a)
    p_d = phi * (payoffs.b - g_d)
    for name, v in (("p_C", p_c), ("p_D", p_d)):
        lo, hi = v.min(), v.max()
        if lo < -_EDGE_TOL or hi > 1 + _EDGE_TOL:
            j = int(np.argmin(v) if lo < -_EDGE_TOL else np.argmax(v))
            raise ValidationError(
                f"phi={phi:g} is inadmissible: {name}[{j}] = {v[j]:.6g} "
                f"falls outside [0, 1]; the binding constraint allows "
                f"phi <= {max_phi(payoffs)[1]:.10g}"
            )
    # shave float dust so downstream samplers see exact probabilities
    np.clip(p_c, 0.0, 1.0, out=p_c)
    np.clip(p_d, 0.0, 1.0, out=p_d)
    return ZDStrategy(p_cooperate=p_c, p_desert=p_d, phi=phi)
